"""Exact randomization likelihood over principal-stratum counts.

The randomization picks which ``m`` of the ``n`` participants receive the
intervention, uniformly over all C(n, m) subsets. Given the stratum counts,
the numbers drawn into intervention from each stratum are multivariate
hypergeometric, and the observed table is a deterministic function of
those draws. Summing over the draws from the live-regardless stratum gives
the closed form implemented in :func:`assignment_count`.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache, total_ordering
from typing import Mapping

from .combinatorics import (
    Design,
    StratumCounts,
    TrialOutcome,
    binom,
    enumerate_outcomes,
    enumerate_strata,
)

# First value of the live-regardless draw in the closed-form sum. Only
# the fault-injection check in ``verify`` changes this.
_SUM_START = 0


@total_ordering
@dataclass(frozen=True, eq=False)
class ExactProbability:
    """``numerator / denominator`` kept unreduced (denominator is C(n, m))."""

    numerator: int
    denominator: int

    def __post_init__(self) -> None:
        if self.denominator <= 0 or not 0 <= self.numerator <= self.denominator:
            raise ValueError(f"not a probability: {self.numerator}/{self.denominator}")

    @property
    def value(self) -> Fraction:
        return Fraction(self.numerator, self.denominator)

    def __float__(self) -> float:
        return float(self.value)

    def _other(self, other):
        if isinstance(other, ExactProbability):
            return other.numerator, other.denominator
        if isinstance(other, (int, Fraction)):
            f = Fraction(other)
            return f.numerator, f.denominator
        return None

    def __eq__(self, other) -> bool:
        o = self._other(other)
        if o is None:
            return NotImplemented
        return self.numerator * o[1] == o[0] * self.denominator

    def __lt__(self, other) -> bool:
        o = self._other(other)
        if o is None:
            return NotImplemented
        return self.numerator * o[1] < o[0] * self.denominator

    def __hash__(self) -> int:
        return hash(self.value)

    def __repr__(self) -> str:
        return f"ExactProbability({self.numerator}/{self.denominator})"


def assignment_count(theta: StratumCounts, x: TrialOutcome, m: int) -> int:
    """Number of intervention subsets of size ``m`` that produce table ``x``."""
    t11, t10, t01, t00 = theta
    xi1, xc1 = x.x_I1, x.x_C1
    total = 0
    for i in range(_SUM_START, t11 + 1):
        total += (
            binom(t11, i)
            * binom(t10, xi1 - i)
            * binom(t01, t11 + t01 - xc1 - i)
            * binom(t00, m + xc1 + i - t11 - t01 - xi1)
        )
    return total


def likelihood(theta: StratumCounts, x: TrialOutcome, design: Design) -> ExactProbability:
    theta = StratumCounts(*theta)
    x = TrialOutcome(*x)
    theta.check(design)
    x.check(design)
    return ExactProbability(assignment_count(theta, x, design.m), design.n_assignments)


def outcome_distribution(
    theta: StratumCounts, design: Design
) -> dict[TrialOutcome, ExactProbability]:
    """P(x | theta) for every table, zero-mass tables included."""
    theta = StratumCounts(*theta)
    theta.check(design)
    total = design.n_assignments
    return {
        x: ExactProbability(assignment_count(theta, x, design.m), total)
        for x in enumerate_outcomes(design)
    }


@lru_cache(maxsize=256)
def likelihood_counts(x: TrialOutcome, design: Design) -> tuple[int, ...]:
    """Assignment counts for ``x`` over ``enumerate_strata(design)``, in order.

    Cached per (design, x) so rules and the posterior share one table.
    """
    x = TrialOutcome(*x)
    x.check(design)
    return tuple(assignment_count(t, x, design.m) for t in enumerate_strata(design))


def mle_set(x: TrialOutcome, design: Design) -> list[StratumCounts]:
    """Maximizers of the likelihood, in enumeration order. Ties are exact."""
    counts = likelihood_counts(TrialOutcome(*x), design)
    best = max(counts)
    return [t for t, c in zip(enumerate_strata(design), counts) if c == best]


def positive_support_count(x: TrialOutcome, design: Design) -> int:
    return sum(1 for c in likelihood_counts(TrialOutcome(*x), design) if c > 0)


def top_likelihoods(
    x: TrialOutcome, design: Design, k: int = 5
) -> list[tuple[StratumCounts, ExactProbability]]:
    """The ``k`` most likely strata; ties keep enumeration order."""
    counts = likelihood_counts(TrialOutcome(*x), design)
    order = sorted(range(len(counts)), key=lambda j: -counts[j])[:k]
    strata = enumerate_strata(design)
    return [(strata[j], ExactProbability(counts[j], design.n_assignments)) for j in order]


class PosteriorError(ValueError):
    pass


@dataclass(frozen=True)
class PosteriorSummary:
    weights: dict[StratumCounts, Fraction]
    means: tuple[Fraction, Fraction, Fraction, Fraction]


def _check_prior(prior: Mapping[StratumCounts, Fraction], design: Design) -> None:
    total = Fraction(0)
    for theta, w in prior.items():
        StratumCounts(*theta).check(design)
        if w < 0:
            raise PosteriorError(f"prior mass for {tuple(theta)} is negative")
        total += Fraction(w)
    if total != 1:
        raise PosteriorError(f"prior masses sum to {total}, not 1")


def posterior(
    x: TrialOutcome,
    design: Design,
    prior: Mapping[StratumCounts, Fraction] | None = None,
) -> PosteriorSummary:
    """Exact posterior over strata; ``prior=None`` means uniform over all strata."""
    x = TrialOutcome(*x)
    counts = likelihood_counts(x, design)
    strata = enumerate_strata(design)
    if prior is None:
        unnorm = {t: Fraction(c) for t, c in zip(strata, counts) if c}
    else:
        _check_prior(prior, design)
        index = {t: j for j, t in enumerate(strata)}
        unnorm = {}
        for theta, w in prior.items():
            theta = StratumCounts(*theta)
            c = counts[index[theta]]
            if w and c:
                unnorm[theta] = Fraction(w) * c
    z = sum(unnorm.values())
    if z == 0:
        raise PosteriorError(f"no stratum has positive prior and likelihood for {tuple(x)}")
    weights = {t: v / z for t, v in unnorm.items()}
    means = tuple(sum(w * t[k] for t, w in weights.items()) for k in range(4))
    return PosteriorSummary(weights=weights, means=means)


def fisher_exact_p(x: TrialOutcome, design: Design, two_sided: bool = False) -> Fraction:
    """Exact test of the sharp null (assignment changes nobody's outcome).

    Under that null the alive total K is fixed, and the number alive in the
    intervention arm is hypergeometric. The default is the one-sided upper
    tail, i.e. evidence of benefit. ``two_sided`` sums every table no more
    probable than the observed one.
    """
    x = TrialOutcome(*x)
    x.check(design)
    n, m = design.n, design.m
    k_alive = x.x_I1 + x.x_C1
    total = design.n_assignments
    probs = {k: binom(k_alive, k) * binom(n - k_alive, m - k) for k in range(m + 1)}
    if two_sided:
        observed = probs[x.x_I1]
        hits = sum(c for c in probs.values() if c <= observed)
    else:
        hits = sum(c for k, c in probs.items() if k >= x.x_I1)
    return Fraction(hits, total)
