"""Utility over potential outcomes and the decision rules built on it.

A rule maps an observed table to the probability of acting (treating
everyone). All rules return exact ``Fraction`` values in {0, 1/2, 1},
except the ML rule, which averages over tied maximizers.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping

from .combinatorics import Design, StratumCounts, TrialOutcome
from .likelihood import PosteriorError, mle_set, posterior

HALF = Fraction(1, 2)


class Action(enum.Enum):
    ACTION = "action"
    INACTION = "inaction"


@dataclass(frozen=True)
class UtilitySpec:
    """Per-stratum weights; defaults prioritize safety two-to-one."""

    efficacy_weight: Fraction = HALF
    unsafe_weight: Fraction = Fraction(1)
    per_participant: bool = True

    def __post_init__(self) -> None:
        object.__setattr__(self, "efficacy_weight", Fraction(self.efficacy_weight))
        object.__setattr__(self, "unsafe_weight", Fraction(self.unsafe_weight))
        if self.efficacy_weight <= 0:
            raise ValueError("efficacy_weight must be positive")
        if self.unsafe_weight <= 0:
            raise ValueError("unsafe_weight must be positive")

    @property
    def is_default(self) -> bool:
        return self.efficacy_weight == HALF and self.unsafe_weight == 1


DEFAULT_SPEC = UtilitySpec()


def utility(theta: StratumCounts, action: Action, spec: UtilitySpec = DEFAULT_SPEC) -> Fraction:
    theta = StratumCounts(*theta)
    gain = spec.efficacy_weight * theta.efficacious - spec.unsafe_weight * theta.unsafe
    if spec.per_participant:
        gain /= theta.total
    return gain if Action(action) is Action.ACTION else -gain


def _choose(diff) -> Fraction:
    """1 / 1/2 / 0 as action beats / ties / loses to inaction by ``diff``."""
    if diff > 0:
        return Fraction(1)
    if diff == 0:
        return HALF
    return Fraction(0)


def rule_ml(x: TrialOutcome, design: Design, spec: UtilitySpec = DEFAULT_SPEC) -> Fraction:
    """Act as if each likelihood maximizer were true, averaging over ties."""
    fits = mle_set(x, design)
    votes = sum(
        _choose(utility(t, Action.ACTION, spec) - utility(t, Action.INACTION, spec))
        for t in fits
    )
    return votes / len(fits)


def rule_bayes(
    x: TrialOutcome,
    design: Design,
    spec: UtilitySpec = DEFAULT_SPEC,
    prior: Mapping[StratumCounts, Fraction] | None = None,
) -> Fraction:
    # utility is linear in the counts, so posterior means are enough
    try:
        means = posterior(x, design, prior).means
    except PosteriorError:
        # the prior rules out every explanation of x: no basis to prefer either action
        return HALF
    return _choose(spec.efficacy_weight * means[1] - spec.unsafe_weight * means[2])


def rule_empirical_success(x: TrialOutcome, design: Design) -> Fraction:
    x = TrialOutcome(*x)
    return _choose(Fraction(x.x_I1, design.m) - Fraction(x.x_C1, design.n_control))


def rule_coinflip(x: TrialOutcome | None = None) -> Fraction:
    return HALF


@dataclass(frozen=True)
class FrechetInterval:
    """Range of the unsafe share allowed by the estimated marginals."""

    p_I_hat: Fraction
    p_C_hat: Fraction
    lower: Fraction
    upper: Fraction

    @property
    def effect(self) -> Fraction:
        return self.p_I_hat - self.p_C_hat


def frechet_interval(x: TrialOutcome, design: Design) -> FrechetInterval:
    x = TrialOutcome(*x)
    x.check(design)
    p_i = Fraction(x.x_I1, design.m)
    p_c = Fraction(x.x_C1, design.n_control)
    lower = max(-(p_i - p_c), Fraction(0))
    upper = min(p_c, 1 - p_i)
    return FrechetInterval(p_i, p_c, lower, upper)


def frechet_minima(
    x: TrialOutcome, design: Design, spec: UtilitySpec = DEFAULT_SPEC
) -> tuple[Fraction, Fraction]:
    """Worst-case utility of action and of inaction over the bounded set.

    Both objectives are affine in the unsafe share, so each minimum sits at
    an interval endpoint.
    """
    iv = frechet_interval(x, design)
    we, wu = spec.efficacy_weight, spec.unsafe_weight

    def act(p01: Fraction) -> Fraction:
        return we * (iv.effect + p01) - wu * p01

    ends = (iv.lower, iv.upper)
    return min(act(p) for p in ends), min(-act(p) for p in ends)


def rule_frechet_minimization(
    x: TrialOutcome, design: Design, spec: UtilitySpec = DEFAULT_SPEC
) -> Fraction:
    worst_act, worst_inact = frechet_minima(x, design, spec)
    return _choose(worst_act - worst_inact)


def frechet_threshold(x: TrialOutcome, design: Design) -> Fraction:
    iv = frechet_interval(x, design)
    return min(iv.p_C_hat, 1 - iv.p_I_hat) / 2


def rule_frechet_cutoff(x: TrialOutcome, design: Design) -> Fraction:
    """Closed form valid for the default weights: effect against a threshold."""
    iv = frechet_interval(x, design)
    return _choose(iv.effect - frechet_threshold(x, design))


def rule_frechet(x: TrialOutcome, design: Design, spec: UtilitySpec = DEFAULT_SPEC) -> Fraction:
    if spec.is_default:
        return rule_frechet_cutoff(x, design)
    return rule_frechet_minimization(x, design, spec)


RULE_NAMES = ("ml", "bayes", "es", "frechet", "coinflip")

RuleFn = Callable[[TrialOutcome], Fraction]


class UnknownRuleError(KeyError):
    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"unknown rule {self.name!r}; valid rules: {', '.join(RULE_NAMES)}"


def make_rule(
    name: str,
    design: Design,
    spec: UtilitySpec = DEFAULT_SPEC,
    prior: Mapping[StratumCounts, Fraction] | None = None,
) -> RuleFn:
    """Bind a rule name to a design so it becomes a plain ``x -> P(action)``."""
    if name == "ml":
        return lambda x: rule_ml(x, design, spec)
    if name == "bayes":
        return lambda x: rule_bayes(x, design, spec, prior)
    if name == "es":
        return lambda x: rule_empirical_success(x, design)
    if name == "frechet":
        return lambda x: rule_frechet(x, design, spec)
    if name == "coinflip":
        return rule_coinflip
    raise UnknownRuleError(name)
