"""Exhaustive evaluation of decision rules under four ranking criteria.

For one design the engine builds the full assignment-count matrix
``counts[theta, x]`` (C(n, m) times the likelihood) with numpy. Every
criterion then reduces that matrix with exact integer arithmetic, so the
values and tie-breaks do not depend on evaluation order. int64 is enough
while C(n, n/2) < 2**63 (n <= 66). Past that the matrix falls back to
Python integers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

from . import likelihood as _lik
from .combinatorics import (
    Design,
    StratumCounts,
    TrialOutcome,
    enumerate_outcomes,
    enumerate_strata,
)
from .likelihood import outcome_distribution
from .rules import (
    DEFAULT_SPEC,
    RULE_NAMES,
    Action,
    RuleFn,
    UnknownRuleError,
    UtilitySpec,
    make_rule,
    rule_empirical_success,
    rule_frechet,
    utility,
)

CRITERIA = ("maximin", "maximin_normalized", "bayes", "ml")

Prior = Mapping[StratumCounts, Fraction]


class ConfigError(ValueError):
    """Invalid run configuration; the message names the offending field."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RuleScore:
    rule: str
    criterion: str
    value: Fraction
    # a StratumCounts for the maximin criteria, a TrialOutcome for ml,
    # None for bayes (a weighted sum has no single witness)
    witness: StratumCounts | TrialOutcome | None = None


def _int_dtype(n: int):
    return np.int64 if math.comb(n, n // 2) < 2**63 else object


def _binom_table(n: int, dtype) -> np.ndarray:
    """Row r, column k holds C(r, k); column n + 1 is an all-zero sink."""
    table = np.zeros((n + 1, n + 2), dtype=dtype)
    for r in range(n + 1):
        for k in range(r + 1):
            table[r, k] = math.comb(r, k)
    return table


def _sink(k: np.ndarray, n: int) -> np.ndarray:
    return np.where((k < 0) | (k > n), n + 1, k)


def assignment_count_matrix(design: Design) -> np.ndarray:
    """counts[j, k] = assignment_count(strata[j], outcomes[k], m), exactly."""
    n, m = design.n, design.m
    dtype = _int_dtype(n)
    table = _binom_table(n, dtype)
    strata = np.array(enumerate_strata(design), dtype=np.int64)
    s = np.arange(m + 1).reshape(1, -1, 1, 1)  # x_I1
    xc = np.arange(n - m + 1).reshape(1, 1, -1, 1)  # x_C1
    out = np.zeros((len(strata), (m + 1) * (n - m + 1)), dtype=dtype)
    start = _lik._SUM_START
    for t11 in range(n + 1):
        rows = np.nonzero(strata[:, 0] == t11)[0]
        if t11 < start:
            continue
        a = np.arange(start, t11 + 1).reshape(1, 1, 1, -1)
        t10 = strata[rows, 1].reshape(-1, 1, 1, 1)
        t01 = strata[rows, 2].reshape(-1, 1, 1, 1)
        t00 = strata[rows, 3].reshape(-1, 1, 1, 1)
        term = table[t11, _sink(a, n)]
        term = term * table[t10, _sink(s - a, n)]
        term = term * table[t01, _sink(t11 + t01 - xc - a, n)]
        term = term * table[t00, _sink(m + xc + a - t11 - t01 - s, n)]
        out[rows] = term.sum(axis=3).reshape(len(rows), -1)
    return out


def exact_matvec(mat: np.ndarray, weights: Sequence[int]) -> list[int]:
    """``mat @ weights`` with Python-int results, for a non-negative int matrix."""
    w_big = max((abs(int(w)) for w in weights), default=0)
    if mat.dtype == object or w_big >= 2**40:
        return [int(v) for v in np.dot(mat.astype(object), np.array(weights, dtype=object))]
    width = mat.shape[1]
    peak = int(mat.max()) if mat.size else 0
    w = np.array(weights, dtype=np.int64)
    if peak * width * w_big < 2**62:
        return [int(v) for v in mat @ w]
    # split the matrix into base-2**20 limbs so each partial product fits
    result = [0] * mat.shape[0]
    shift, rest = 0, mat.copy()
    while rest.any():
        limb = rest & (2**20 - 1)
        rest >>= 20
        if width * (2**20) * w_big >= 2**62:
            part = np.dot(limb.astype(object), np.array(weights, dtype=object))
        else:
            part = limb @ w
        for i, v in enumerate(part):
            result[i] += int(v) << shift
        shift += 20
    return result


def _prior_key(prior: Prior | None):
    if prior is None:
        return None
    return tuple(sorted((StratumCounts(*t), Fraction(w)) for t, w in prior.items()))


class DesignTables:
    """All rules and criteria for one (design, utility, prior) triple."""

    def __init__(self, design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None):
        self.design = design
        self.spec = spec
        self.prior = None if prior is None else {StratumCounts(*t): Fraction(w) for t, w in prior.items()}
        self.strata = enumerate_strata(design)
        self.outcomes = enumerate_outcomes(design)
        self.counts = assignment_count_matrix(design)
        self.total = design.n_assignments

        we, wu = spec.efficacy_weight, spec.unsafe_weight
        self.q = math.lcm(we.denominator, wu.denominator)
        a, b = int(we * self.q), int(wu * self.q)
        # scaled action utility: u(theta, action) = gain / (q * scale)
        self.gain = [a * t[1] - b * t[2] for t in self.strata]
        self.scale = design.n if spec.per_participant else 1

        col_max = self.counts.max(axis=0)
        self.mle_rows = [np.nonzero(self.counts[:, k] == col_max[k])[0] for k in range(len(self.outcomes))]

        if self.prior is not None:
            index = {t: j for j, t in enumerate(self.strata)}
            for t in self.prior:
                if t not in index or t.total != design.n:
                    raise ConfigError("prior", f"stratum {tuple(t)} does not belong to n={design.n}")
            lcd = math.lcm(*(w.denominator for w in self.prior.values()))
            self.prior_int = [0] * len(self.strata)
            for t, w in self.prior.items():
                self.prior_int[index[t]] = int(w * lcd)
            if sum(self.prior.values()) != 1 or min(self.prior.values()) < 0:
                raise ConfigError("prior", "masses must be non-negative and sum to 1")

        self._actions: dict[str, list[Fraction]] = {}
        self._eu: dict[str, tuple[list[int], int]] = {}

    # -- rules over every outcome -------------------------------------------------

    def _ml_actions(self) -> list[Fraction]:
        acts = []
        for rows in self.mle_rows:
            votes = sum(2 if self.gain[j] > 0 else 1 if self.gain[j] == 0 else 0 for j in rows)
            acts.append(Fraction(votes, 2 * len(rows)))
        return acts

    def _bayes_actions(self) -> list[Fraction]:
        if self.prior is None:
            w = self.gain
        else:
            w = [p * g for p, g in zip(self.prior_int, self.gain)]
        score = exact_matvec(self.counts.T, w)
        return [Fraction(1) if s > 0 else Fraction(1, 2) if s == 0 else Fraction(0) for s in score]

    def actions(self, rule: str) -> list[Fraction]:
        """P(action | x) for every x in outcome order."""
        if rule not in self._actions:
            if rule == "ml":
                acts = self._ml_actions()
            elif rule == "bayes":
                acts = self._bayes_actions()
            elif rule == "es":
                acts = [rule_empirical_success(x, self.design) for x in self.outcomes]
            elif rule == "frechet":
                acts = [rule_frechet(x, self.design, self.spec) for x in self.outcomes]
            elif rule == "coinflip":
                acts = [Fraction(1, 2)] * len(self.outcomes)
            else:
                raise UnknownRuleError(rule)
            self._actions[rule] = acts
        return self._actions[rule]

    # -- expected utilities -------------------------------------------------------

    def _eu_numerators(self, rule: str) -> tuple[list[int], int]:
        """Integer numerators of E[U | theta] over a shared denominator."""
        if rule not in self._eu:
            acts = self.actions(rule)
            d = math.lcm(*(a.denominator for a in acts))
            hits = exact_matvec(self.counts, [int(a * d) for a in acts])
            dc = d * self.total
            nums = [g * (2 * h - dc) for g, h in zip(self.gain, hits)]
            self._eu[rule] = (nums, self.q * self.scale * dc)
        return self._eu[rule]

    def expected_utilities(self, rule: str) -> list[Fraction]:
        nums, den = self._eu_numerators(rule)
        return [Fraction(v, den) for v in nums]

    def maximin(self, rule: str) -> RuleScore:
        nums, den = self._eu_numerators(rule)
        j = min(range(len(nums)), key=nums.__getitem__)
        return RuleScore(rule, "maximin", Fraction(nums[j], den), self.strata[j])

    def maximin_normalized(self, rule: str) -> RuleScore:
        nums, den = self._eu_numerators(rule)
        # best attainable utility is |u(theta, action)|; scaled to den it is |gain| * dc
        dc = den // (self.q * self.scale)
        shifted = [v - abs(g) * dc for v, g in zip(nums, self.gain)]
        j = min(range(len(shifted)), key=shifted.__getitem__)
        return RuleScore(rule, "maximin_normalized", Fraction(shifted[j], den), self.strata[j])

    def bayes(self, rule: str) -> RuleScore:
        nums, den = self._eu_numerators(rule)
        if self.prior is None:
            value = Fraction(sum(nums), den * len(nums))
        else:
            lcd = sum(self.prior_int)
            value = Fraction(sum(p * v for p, v in zip(self.prior_int, nums)), den * lcd)
        return RuleScore(rule, "bayes", value)

    def ml(self, rule: str) -> RuleScore:
        acts = self.actions(rule)
        ref = self.actions("ml")
        denom = self.q * self.scale
        best_val, best_k = None, None
        for k, rows in enumerate(self.mle_rows):
            diff = acts[k] - ref[k]
            mean_gain = Fraction(sum(self.gain[j] for j in rows), len(rows))
            # U(t, A) - U(t, A_ML) = (A - A_ML) * (u_act - u_inact) = 2 (A - A_ML) u_act
            val = 2 * diff * mean_gain / denom
            if best_val is None or val < best_val:
                best_val, best_k = val, k
        return RuleScore(rule, "ml", best_val, self.outcomes[best_k])

    def score(self, rule: str, criterion: str) -> RuleScore:
        if criterion not in CRITERIA:
            raise ConfigError("criteria", f"unknown criterion {criterion!r}; valid: {', '.join(CRITERIA)}")
        return getattr(self, criterion)(rule)

    def mle_set(self, k: int) -> list[StratumCounts]:
        return [self.strata[j] for j in self.mle_rows[k]]


@lru_cache(maxsize=4)
def _cached_tables(design: Design, spec: UtilitySpec, prior_key) -> DesignTables:
    prior = None if prior_key is None else dict(prior_key)
    return DesignTables(design, spec, prior)


def design_tables(design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None) -> DesignTables:
    return _cached_tables(design, spec, _prior_key(prior))


def clear_cache() -> None:
    _cached_tables.cache_clear()


# -- per-criterion entry points ----------------------------------------------------


def expected_utility(
    rule: str | RuleFn,
    theta: StratumCounts,
    design: Design,
    spec: UtilitySpec = DEFAULT_SPEC,
    prior: Prior | None = None,
) -> Fraction:
    """E[A(X) u(theta, action) + (1 - A(X)) u(theta, inaction) | theta], summed directly."""
    fn = make_rule(rule, design, spec, prior) if isinstance(rule, str) else rule
    theta = StratumCounts(*theta)
    u_act = utility(theta, Action.ACTION, spec)
    u_inact = utility(theta, Action.INACTION, spec)
    total = Fraction(0)
    for x, p in outcome_distribution(theta, design).items():
        if p.numerator:
            a = fn(x)
            total += p.value * (a * u_act + (1 - a) * u_inact)
    return total


def v_maximin(rule: str, design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None) -> RuleScore:
    return design_tables(design, spec, prior).maximin(rule)


def v_maximin_normalized(
    rule: str, design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None
) -> RuleScore:
    return design_tables(design, spec, prior).maximin_normalized(rule)


def v_bayes(rule: str, design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None) -> RuleScore:
    return design_tables(design, spec, prior).bayes(rule)


def v_ml(rule: str, design: Design, spec: UtilitySpec = DEFAULT_SPEC, prior: Prior | None = None) -> RuleScore:
    return design_tables(design, spec, prior).ml(rule)


# -- sweeps -----------------------------------------------------------------------

M_POLICIES = ("half", "floor")


def resolve_design(n: int, m_policy: str = "half") -> Design:
    """Arm split for a sweep point: ``half`` needs even n, ``floor`` uses n // 2."""
    if n < 2:
        raise ConfigError("n", f"n={n} must be at least 2")
    if m_policy == "half":
        if n % 2:
            raise ConfigError("m_policy", f"n={n} is odd but m_policy 'half' needs m = n/2")
        return Design(n, n // 2)
    if m_policy == "floor":
        return Design(n, n // 2)
    raise ConfigError("m_policy", f"unknown policy {m_policy!r}; valid: {', '.join(M_POLICIES)}")


@dataclass(frozen=True)
class SweepRow:
    n: int
    m: int
    rule: str
    criterion: str
    value: Fraction
    witness: StratumCounts | TrialOutcome | None = None


def evaluate_design(
    design: Design,
    spec: UtilitySpec = DEFAULT_SPEC,
    prior: Prior | None = None,
    rules: Sequence[str] = RULE_NAMES,
    criteria: Sequence[str] = CRITERIA,
) -> list[SweepRow]:
    tables = DesignTables(design, spec, prior)
    rows = []
    for crit in criteria:
        for rule in rules:
            s = tables.score(rule, crit)
            rows.append(SweepRow(design.n, design.m, rule, crit, s.value, s.witness))
    return rows


def sweep(
    n_values: Iterable[int],
    m_policy: str = "half",
    spec: UtilitySpec = DEFAULT_SPEC,
    prior_for: Callable[[Design], Prior | None] | None = None,
    rules: Sequence[str] = RULE_NAMES,
    criteria: Sequence[str] = CRITERIA,
    workers: int = 1,
) -> list[SweepRow]:
    """Rows ordered by n, then criterion, then rule, whatever ``workers`` is."""
    for r in rules:
        if r not in RULE_NAMES:
            raise UnknownRuleError(r)
    for c in criteria:
        if c not in CRITERIA:
            raise ConfigError("criteria", f"unknown criterion {c!r}; valid: {', '.join(CRITERIA)}")
    if workers < 1:
        raise ConfigError("workers", f"must be at least 1, got {workers}")
    designs = [resolve_design(n, m_policy) for n in n_values]

    def run(design: Design) -> list[SweepRow]:
        prior = prior_for(design) if prior_for else None
        return evaluate_design(design, spec, prior, rules, criteria)

    if workers == 1:
        chunks = [run(d) for d in designs]
    else:
        # map() yields in input order, so row order is independent of scheduling
        with ThreadPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(run, designs))
    return [row for chunk in chunks for row in chunk]
