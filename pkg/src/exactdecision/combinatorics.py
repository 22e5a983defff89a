"""Exact integer combinatorics for two-arm experiments with binary outcomes.

Everything here works on Python integers, so counts never round. The
enumeration orders are part of the public contract: strata come out
lexicographically in (live_regardless, efficacious, unsafe) with
die_regardless implied, and outcomes lexicographically in (x_I1, x_C1).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import comb
from typing import Iterator, NamedTuple


class InvariantError(ValueError):
    """A domain object violates one of its structural invariants."""


@dataclass(frozen=True)
class Design:
    """Sample size ``n`` and intervention-arm size ``m``."""

    n: int
    m: int

    def __post_init__(self) -> None:
        if not (isinstance(self.n, int) and isinstance(self.m, int)):
            raise InvariantError("design: n and m must be integers")
        if self.n < 2:
            raise InvariantError(f"design: n={self.n} must be at least 2")
        if not 1 <= self.m <= self.n - 1:
            raise InvariantError(
                f"design: m={self.m} must satisfy 1 <= m <= n-1 (n={self.n})"
            )

    @property
    def n_control(self) -> int:
        return self.n - self.m

    @property
    def n_assignments(self) -> int:
        return comb(self.n, self.m)


class StratumCounts(NamedTuple):
    live_regardless: int
    efficacious: int
    unsafe: int
    die_regardless: int

    @property
    def total(self) -> int:
        return sum(self)

    def check(self, design: Design) -> None:
        if min(self) < 0:
            raise InvariantError(f"strata {tuple(self)}: counts must be non-negative")
        if self.total != design.n:
            raise InvariantError(
                f"strata {tuple(self)}: counts sum to {self.total}, expected n={design.n}"
            )

    def swapped(self) -> "StratumCounts":
        """Relabel the arms: efficacious and unsafe trade places."""
        return StratumCounts(self[0], self[2], self[1], self[3])


class TrialOutcome(NamedTuple):
    x_I1: int
    x_I0: int
    x_C1: int
    x_C0: int

    def check(self, design: Design) -> None:
        if min(self) < 0:
            raise InvariantError(f"outcome {tuple(self)}: counts must be non-negative")
        if self.x_I1 + self.x_I0 != design.m:
            raise InvariantError(
                f"outcome {tuple(self)}: intervention margin x_I1 + x_I0 = "
                f"{self.x_I1 + self.x_I0}, expected m={design.m}"
            )
        if self.x_C1 + self.x_C0 != design.n_control:
            raise InvariantError(
                f"outcome {tuple(self)}: control margin x_C1 + x_C0 = "
                f"{self.x_C1 + self.x_C0}, expected n-m={design.n_control}"
            )

    def swapped(self) -> "TrialOutcome":
        return TrialOutcome(self.x_C1, self.x_C0, self.x_I1, self.x_I0)


def binom(n: int, k: int) -> int:
    """C(n, k), with 0 outside 0 <= k <= n."""
    if n < 0:
        raise ValueError(f"binom: n={n} must be non-negative")
    if k < 0 or k > n:
        return 0
    return comb(n, k)


def iter_strata(n: int) -> Iterator[StratumCounts]:
    for a in range(n + 1):
        for b in range(n - a + 1):
            for c in range(n - a - b + 1):
                yield StratumCounts(a, b, c, n - a - b - c)


@lru_cache(maxsize=64)
def _strata(n: int) -> tuple[StratumCounts, ...]:
    return tuple(iter_strata(n))


def enumerate_strata(design: Design | int) -> tuple[StratumCounts, ...]:
    """All 4-part compositions of n (zeros allowed); C(n+3, 3) of them."""
    n = design.n if isinstance(design, Design) else design
    return _strata(n)


@lru_cache(maxsize=64)
def _outcomes(n: int, m: int) -> tuple[TrialOutcome, ...]:
    return tuple(
        TrialOutcome(xi1, m - xi1, xc1, n - m - xc1)
        for xi1 in range(m + 1)
        for xc1 in range(n - m + 1)
    )


def enumerate_outcomes(design: Design) -> tuple[TrialOutcome, ...]:
    """Every cell-count table compatible with the arm sizes; (m+1)(n-m+1) of them."""
    return _outcomes(design.n, design.m)


def outcome_index(x: TrialOutcome, design: Design) -> int:
    return x.x_I1 * (design.n_control + 1) + x.x_C1


def stratum_index(theta: StratumCounts, n: int) -> int:
    """Position of ``theta`` in ``enumerate_strata(n)``."""
    a, b, c, _ = theta
    # strata with first coordinate < a
    idx = binom(n + 3, 3) - binom(n - a + 3, 3)
    r = n - a
    # with first == a and second < b
    idx += binom(r + 2, 2) - binom(r - b + 2, 2)
    return idx + c
