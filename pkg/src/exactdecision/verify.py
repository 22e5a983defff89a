"""Self-checks that the ``verify`` command runs.

Each suite walks its design range and stops at the first failure, which it
reports with the design and the stratum or outcome that broke.
"""

from __future__ import annotations

import itertools
from contextlib import contextmanager
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Iterator

from . import likelihood as _lik
from .combinatorics import Design, StratumCounts, TrialOutcome, enumerate_outcomes, enumerate_strata
from .criteria import CRITERIA, DesignTables, assignment_count_matrix
from .likelihood import assignment_count
from .rules import RULE_NAMES, rule_frechet_cutoff, rule_frechet_minimization

# largest n each suite covers by default
DEFAULT_RANGES = {"normalization": 20, "oracle": 8, "frechet": 12, "criterion_bounds": 50}


@dataclass
class SuiteResult:
    suite: str
    passed: bool
    checked: int
    design: Design | None = None
    witness: object = None
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        text = f"{status} {self.suite} ({self.checked} checks)"
        if not self.passed:
            text += f" at n={self.design.n} m={self.design.m} witness={tuple(self.witness)}: {self.detail}"
        return text


class _Failure(Exception):
    def __init__(self, design: Design, witness, detail: str):
        self.design, self.witness, self.detail = design, witness, detail


def brute_force_counts(theta: StratumCounts, design: Design) -> dict[TrialOutcome, int]:
    """Tally tables over every explicit choice of the intervention subset."""
    people = [(1, 1)] * theta[0] + [(1, 0)] * theta[1] + [(0, 1)] * theta[2] + [(0, 0)] * theta[3]
    tally: dict[TrialOutcome, int] = {}
    for chosen in itertools.combinations(range(design.n), design.m):
        treated = set(chosen)
        xi1 = sum(people[i][0] for i in treated)
        xc1 = sum(people[i][1] for i in range(design.n) if i not in treated)
        x = TrialOutcome(xi1, design.m - xi1, xc1, design.n - design.m - xc1)
        tally[x] = tally.get(x, 0) + 1
    return tally


def _normalization(max_n: int) -> int:
    checked = 0
    for n in range(2, max_n + 1):
        for m in sorted({n // 2, 1}):
            design = Design(n, m)
            sums = assignment_count_matrix(design).sum(axis=1)
            for theta, s in zip(enumerate_strata(design), sums):
                if int(s) != design.n_assignments:
                    raise _Failure(design, theta, f"mass {Fraction(int(s), design.n_assignments)} != 1")
                checked += 1
    return checked


def _oracle(max_n: int) -> int:
    checked = 0
    for n in range(2, max_n + 1):
        for m in range(1, n):
            design = Design(n, m)
            matrix = assignment_count_matrix(design)
            outcomes = enumerate_outcomes(design)
            for j, theta in enumerate(enumerate_strata(design)):
                tally = brute_force_counts(theta, design)
                for k, x in enumerate(outcomes):
                    want = tally.get(x, 0)
                    got = assignment_count(theta, x, m)
                    if got != want or int(matrix[j, k]) != want:
                        raise _Failure(design, theta, f"x={tuple(x)}: formula {got}, brute force {want}")
                    checked += 1
    return checked


def _frechet(max_n: int) -> int:
    checked = 0
    for n in range(2, max_n + 1):
        for m in range(1, n):
            design = Design(n, m)
            for x in enumerate_outcomes(design):
                a, b = rule_frechet_minimization(x, design), rule_frechet_cutoff(x, design)
                if a != b:
                    raise _Failure(design, x, f"set minimization {a} != cutoff {b}")
                checked += 1
    return checked


def criterion_bound_violations(tables: DesignTables) -> list[tuple[str, str, Fraction, object]]:
    """Bound and optimality-by-construction failures for one design."""
    bad = []
    scores = {(r, c): tables.score(r, c) for c in CRITERIA for r in RULE_NAMES}
    for r in RULE_NAMES:
        for c in ("maximin", "maximin_normalized", "ml"):
            s = scores[r, c]
            if s.value > 0:
                bad.append((r, c, s.value, s.witness))
    if scores["coinflip", "maximin"].value != 0:
        s = scores["coinflip", "maximin"]
        bad.append(("coinflip", "maximin", s.value, s.witness))
    if scores["ml", "ml"].value != 0:
        s = scores["ml", "ml"]
        bad.append(("ml", "ml", s.value, s.witness))
    best = scores["bayes", "bayes"].value
    for r in RULE_NAMES:
        if scores[r, "bayes"].value > best:
            bad.append((r, "bayes", scores[r, "bayes"].value, None))
    return bad


def _criterion_bounds(max_n: int) -> int:
    checked = 0
    for n in range(2, max_n + 1, 2):
        design = Design(n, n // 2)
        bad = criterion_bound_violations(DesignTables(design))
        if bad:
            rule, crit, value, witness = bad[0]
            raise _Failure(design, witness or (), f"{rule} under {crit} = {value}")
        checked += 1
    return checked


SUITES: dict[str, Callable[[int], int]] = {
    "normalization": _normalization,
    "oracle": _oracle,
    "frechet": _frechet,
    "criterion_bounds": _criterion_bounds,
}


@contextmanager
def sum_from_one() -> Iterator[None]:
    """Temporarily start the closed-form sum at 1 instead of 0 (fault injection)."""
    saved = _lik._SUM_START
    _lik._SUM_START = 1
    _lik.likelihood_counts.cache_clear()
    try:
        yield
    finally:
        _lik._SUM_START = saved
        _lik.likelihood_counts.cache_clear()


def run_suites(max_n: int | None = None, suites=tuple(SUITES)) -> list[SuiteResult]:
    results = []
    for name in suites:
        limit = DEFAULT_RANGES[name] if max_n is None else min(max_n, DEFAULT_RANGES[name])
        try:
            checked = SUITES[name](limit)
            results.append(SuiteResult(name, True, checked))
        except _Failure as f:
            results.append(SuiteResult(name, False, 0, f.design, f.witness, f.detail))
    return results
