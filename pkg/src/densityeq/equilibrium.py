"""Driver-game solvers under fixed, spatially uniform prices and wages.

With a uniform wage, drivers minimize total wait, so an interior equilibrium
equalizes ``W_i(n_i)`` across served regions with every wait curve on its
increasing branch (``n_i >= sqrt(lam_i * t_i)``).  The I-region solver exploits
that the increasing-branch inverse

    n_i(w) = lam_i * (w + sqrt(w^2 - 4 t_i / lam_i)) / 2

makes total supply ``sum_i n_i(w)`` continuous and strictly increasing in the
common wait ``w``, so a monotone bisection over ``w`` is guaranteed to bracket
the unique all-regions equilibrium whenever one exists.

The two-region case additionally has a closed cubic form; both routes are
kept and cross-checked in the tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Literal, Optional, Sequence

import numpy as np

from .errors import BracketError, ConvergenceError, DomainError
from .market import (
    Allocation,
    MarketPrimitives,
    RegionOutcome,
    region_outcome,
    wait_time,
)

__all__ = [
    "ExistenceReport",
    "EquilibriumResult",
    "NoAllRegionsEquilibrium",
    "EnumerationResult",
    "ThickeningReport",
    "existence_two_region",
    "solve_two_region",
    "solve_all_regions",
    "enumerate_equilibria",
    "thicken",
    "comparative_thickness",
    "split_regions",
    "merge_split_allocation",
    "platform_ideal_pair",
]

SUPPLY_TOL = 1e-10
MAX_BISECT = 200


@dataclass(frozen=True)
class ExistenceReport:
    """Existence conditions for the two-region all-regions equilibrium.

    ``a1``: enough drivers to put both regions past their wait troughs.
    ``a2``/``a3``: at the allocation minimizing region j's wait (j = 1, 2),
    the other region's wait curve lies weakly above that trough.  All three
    hold iff the all-regions equilibrium exists.  Slacks are RHS - LHS in the
    units of each inequality (positive means satisfied).
    """

    a1: bool
    a2: bool
    a3: bool
    slack_a1: float
    slack_a2: float
    slack_a3: float

    @property
    def all_hold(self) -> bool:
        return self.a1 and self.a2 and self.a3


@dataclass(frozen=True)
class EquilibriumResult:
    """A driver equilibrium: allocation, outcomes, and the common wait.

    ``served_set`` lists regions with positive mass.  ``provisional`` marks
    enumeration results whose equilibrium status rests on an excluded
    frictionless region (a marginal entrant there would face zero wait).
    """

    allocation: Allocation
    outcomes: tuple[RegionOutcome, ...]
    common_wait: float
    served_set: tuple[int, ...]
    provisional: bool = False

    def undersupply(self, j: int, i: int) -> float:
        """Degree of under-supply in region j relative to i: (n_i/lam_i)/(n_j/lam_j)."""
        oi, oj = self.outcomes[i], self.outcomes[j]
        if oj.access == 0.0:
            return math.inf
        return oi.access / oj.access


@dataclass(frozen=True)
class NoAllRegionsEquilibrium:
    """Typed outcome when no all-regions equilibrium exists."""

    reason: str
    existence: Optional[ExistenceReport] = None


@dataclass(frozen=True)
class EnumerationResult:
    equilibria: tuple[EquilibriumResult, ...]
    selected: EquilibriumResult


@dataclass(frozen=True)
class ThickeningReport:
    """Comparative statics of access ratios along a thickening grid.

    ``access_ratios[(i, j)][k]`` is ``A_j / A_i`` at ``gammas[k]`` and
    ``undersupply[(j, i)][k]`` is ``(n_i/lam_i) / (n_j/lam_j)`` there,
    for every ordered pair ``i < j``.
    """

    gammas: tuple[float, ...]
    mode: str
    access_ratios: dict[tuple[int, int], tuple[float, ...]]
    undersupply: dict[tuple[int, int], tuple[float, ...]]


def _trough_mass(lam: float, t: float) -> float:
    return math.sqrt(lam * t)


def _trough_wait(lam: float, t: float) -> float:
    return 2.0 * math.sqrt(t / lam)


def _mass_at_wait(w: float, lam: float, t: float) -> float:
    """Increasing-branch inverse of the wait curve; requires w >= trough wait."""
    disc = w * w - 4.0 * t / lam
    if disc < 0.0:
        # Tolerate roundoff at the trough itself.
        if disc > -1e-12 * max(1.0, w * w):
            disc = 0.0
        else:
            raise DomainError(f"wait {w} below trough for region (lam={lam}, t={t})")
    return lam * (w + math.sqrt(disc)) / 2.0


def _supply_at_wait(w: float, lambdas: Sequence[float], sizes: Sequence[float]) -> float:
    return sum(_mass_at_wait(w, lam, t) for lam, t in zip(lambdas, sizes))


def existence_two_region(lam1: float, lam2: float, N: float, t: float) -> ExistenceReport:
    """Evaluate the three two-region existence conditions with their slacks."""
    if not (lam1 >= lam2 > 0.0):
        raise DomainError(f"need lam1 >= lam2 > 0, got {lam1}, {lam2}")
    if t <= 0.0 or N <= 0.0:
        raise DomainError("need t > 0 and N > 0")

    slack_a1 = N - (_trough_mass(lam1, t) + _trough_mass(lam2, t))

    def other_region_slack(lam_j: float, lam_i: float) -> float:
        rest = N - _trough_mass(lam_j, t)
        if rest <= 0.0:
            # Region i would hold no mass: its wait is infinite, so the
            # inequality holds vacuously (a1 already fails here).
            return math.inf
        return rest / lam_i + t / rest - _trough_wait(lam_j, t)

    slack_a2 = other_region_slack(lam1, lam2)
    slack_a3 = other_region_slack(lam2, lam1)
    return ExistenceReport(
        a1=slack_a1 >= 0.0,
        a2=slack_a2 >= 0.0,
        a3=slack_a3 >= 0.0,
        slack_a1=slack_a1,
        slack_a2=slack_a2,
        slack_a3=slack_a3,
    )


def _two_region_result(n1: float, n2: float, lam1: float, lam2: float, t: float) -> EquilibriumResult:
    o1 = region_outcome(n1, lam1, lam1, t)
    o2 = region_outcome(n2, lam2, lam2, t)
    return EquilibriumResult(
        allocation=Allocation((n1, n2)),
        outcomes=(o1, o2),
        common_wait=0.5 * (o1.wait + o2.wait),
        served_set=(0, 1),
    )


def _wait_gap(n: float, lam1: float, lam2: float, N: float, t: float) -> float:
    return wait_time(n, lam1, t) - wait_time(N - n, lam2, t)


def _bisect_wait_gap(lo: float, hi: float, lam1: float, lam2: float, N: float, t: float) -> float:
    for _ in range(MAX_BISECT):
        mid = 0.5 * (lo + hi)
        if _wait_gap(mid, lam1, lam2, N, t) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-15 * max(1.0, hi):
            break
    return 0.5 * (lo + hi)


def solve_two_region(
    lam1: float, lam2: float, N: float, t: float
) -> EquilibriumResult | NoAllRegionsEquilibrium:
    """Two-region all-regions equilibrium via the closed cubic, if it exists.

    Equating ``W_1(n) = W_2(N - n)`` is equivalent to the cubic

        -n^3 (lam1+lam2) + n^2 (2N lam1 + N lam2)
        - n (N^2 lam1 + 2 t lam1 lam2) + N t lam1 lam2 = 0

    of which only a root in ``[sqrt(lam1 t), N - sqrt(lam2 t)]`` (both wait
    curves increasing) is an equilibrium.  Falls back to monotone bisection
    when root filtering is ambiguous near the interval boundary.
    """
    report = existence_two_region(lam1, lam2, N, t)
    if not report.all_hold:
        return NoAllRegionsEquilibrium("existence conditions fail", report)

    lo = _trough_mass(lam1, t)
    hi = N - _trough_mass(lam2, t)
    coeffs = [
        -(lam1 + lam2),
        2.0 * N * lam1 + N * lam2,
        -(N * N * lam1 + 2.0 * t * lam1 * lam2),
        N * t * lam1 * lam2,
    ]
    roots = np.roots(coeffs)
    pad = 1e-9 * max(1.0, N)
    real = [
        float(r.real)
        for r in roots
        if abs(r.imag) <= 1e-9 * max(1.0, abs(r)) and lo - pad <= r.real <= hi + pad
    ]

    if len(real) == 1:
        n1 = min(max(real[0], lo), hi)
    else:
        # Zero or several candidates near the admissible boundary: the
        # monotone wait gap settles it.
        n1 = _bisect_wait_gap(lo, hi, lam1, lam2, N, t)

    # One Newton polish on the wait gap; its derivative is analytic.
    for _ in range(2):
        g = _wait_gap(n1, lam1, lam2, N, t)
        dg = 1.0 / lam1 - t / (n1 * n1) + 1.0 / lam2 - t / ((N - n1) * (N - n1))
        if dg <= 0.0:
            break
        step = g / dg
        cand = n1 - step
        if lo <= cand <= hi:
            n1 = cand
    return _two_region_result(n1, N - n1, lam1, lam2, t)


def solve_all_regions(
    market: MarketPrimitives,
    initial_upper_wait: float | None = None,
) -> EquilibriumResult | NoAllRegionsEquilibrium:
    """All-regions equilibrium for any number of regions with fixed N.

    Bisects the common wait ``w`` over ``[w_lo, w_hi]`` where
    ``w_lo = max_i 2 sqrt(t_i / lam_i)`` until total supply matches ``N``
    within ``1e-10 * max(1, N)``.  ``initial_upper_wait`` only seeds the upper
    bracket; the result is bracket-independent (uniqueness).
    """
    if market.total_drivers is None:
        raise DomainError("solve_all_regions needs fixed total_drivers")
    N = market.total_drivers
    if N <= 0.0:
        raise DomainError("total_drivers must be > 0")
    lambdas = market.lambdas()
    sizes = market.sizes()
    if any(lam <= 0.0 for lam in lambdas):
        raise DomainError("all demand rates must be > 0")

    w_lo = max(_trough_wait(lam, t) for lam, t in zip(lambdas, sizes))
    tol = SUPPLY_TOL * max(1.0, N)
    supply_lo = _supply_at_wait(w_lo, lambdas, sizes)
    if supply_lo > N + tol:
        return NoAllRegionsEquilibrium(
            f"troughs already require {supply_lo} drivers > N = {N}"
        )

    w_hi = initial_upper_wait if initial_upper_wait is not None else max(w_lo, 1.0)
    for _ in range(200):
        if _supply_at_wait(w_hi, lambdas, sizes) >= N:
            break
        w_hi *= 2.0
    else:
        raise ConvergenceError("could not bracket the common wait", {"w_hi": w_hi})

    lo, hi = w_lo, w_hi
    w = hi
    for iteration in range(MAX_BISECT):
        w = 0.5 * (lo + hi)
        gap = _supply_at_wait(w, lambdas, sizes) - N
        if abs(gap) <= tol:
            break
        if gap < 0.0:
            lo = w
        else:
            hi = w
    else:
        raise ConvergenceError(
            "common-wait bisection did not reach tolerance",
            {"lo": lo, "hi": hi, "gap": _supply_at_wait(w, lambdas, sizes) - N},
        )

    drivers = tuple(_mass_at_wait(w, lam, t) for lam, t in zip(lambdas, sizes))
    outcomes = tuple(
        region_outcome(n, lam, lam, t) for n, lam, t in zip(drivers, lambdas, sizes)
    )
    return EquilibriumResult(
        allocation=Allocation(drivers),
        outcomes=outcomes,
        common_wait=w,
        served_set=tuple(range(len(drivers))),
    )


def _subset_market(market: MarketPrimitives, subset: Sequence[int]) -> MarketPrimitives:
    return MarketPrimitives(
        regions=tuple(market.regions[i] for i in subset),
        total_drivers=market.total_drivers,
        reservation_wage=market.reservation_wage,
        price_sensitivity=market.price_sensitivity,
    )


def enumerate_equilibria(market: MarketPrimitives) -> EnumerationResult:
    """Enumerate equilibria over served subsets and select the driver-preferred one.

    Every subset is checked: with all excluded regions of positive size a
    marginal entrant there faces infinite pickup time, so the within-subset
    equilibrium extends to the full game.  Putting all N drivers in a single
    region is always an equilibrium (no feasibility condition binds).
    Results that hinge on an excluded frictionless region are flagged
    ``provisional``.  Selection: largest served set, then lowest common wait,
    preferring non-provisional results.
    """
    if market.total_drivers is None:
        raise DomainError("enumerate_equilibria needs fixed total_drivers")
    I = market.num_regions
    if I > 20:
        raise DomainError(f"subset enumeration supports at most 20 regions, got {I}")
    N = market.total_drivers
    lambdas = market.lambdas()
    sizes = market.sizes()

    found: list[EquilibriumResult] = []
    for size in range(1, I + 1):
        for subset in combinations(range(I), size):
            if size == 1:
                i = subset[0]
                drivers_sub = (N,)
                w = wait_time(N, lambdas[i], sizes[i])
            else:
                sub = solve_all_regions(_subset_market(market, subset))
                if isinstance(sub, NoAllRegionsEquilibrium):
                    continue
                drivers_sub = sub.allocation.drivers
                w = sub.common_wait
            provisional = any(
                sizes[j] == 0.0 for j in range(I) if j not in subset
            )
            drivers = [0.0] * I
            for k, i in enumerate(subset):
                drivers[i] = drivers_sub[k]
            outcomes = tuple(
                region_outcome(n, lam, lam, t)
                for n, lam, t in zip(drivers, lambdas, sizes)
            )
            found.append(
                EquilibriumResult(
                    allocation=Allocation(tuple(drivers)),
                    outcomes=outcomes,
                    common_wait=w,
                    served_set=subset,
                    provisional=provisional,
                )
            )

    def preference(eq: EquilibriumResult) -> tuple:
        return (not eq.provisional, len(eq.served_set), -eq.common_wait)

    selected = max(found, key=preference)
    return EnumerationResult(tuple(found), selected)


def thicken(
    market: MarketPrimitives,
    gamma: float,
    mode: Literal["one_sided", "two_sided"],
) -> MarketPrimitives:
    """Scale the market: two_sided multiplies demand and drivers, one_sided drivers only."""
    if market.total_drivers is None:
        raise DomainError("thickening needs fixed total_drivers; scale demand instead")
    if gamma <= 0.0:
        raise DomainError("gamma must be > 0")
    if mode not in ("one_sided", "two_sided"):
        raise DomainError(f"unknown thickening mode {mode!r}")
    demand_scale = gamma if mode == "two_sided" else 1.0
    return MarketPrimitives.from_vectors(
        [lam * demand_scale for lam in market.lambdas()],
        market.sizes(),
        total_drivers=market.total_drivers * gamma,
        reservation_wage=market.reservation_wage,
        price_sensitivity=market.price_sensitivity,
    )


def comparative_thickness(
    market: MarketPrimitives,
    gammas: Sequence[float],
    mode: Literal["one_sided", "two_sided"],
) -> ThickeningReport:
    """Solve the equilibrium along a thickening grid and record pairwise skews."""
    gammas = tuple(float(g) for g in gammas)
    if not gammas or any(g < 1.0 for g in gammas):
        raise DomainError("gamma grid must be non-empty with all values >= 1")
    if any(b <= a for a, b in zip(gammas, gammas[1:])):
        raise DomainError("gamma grid must be strictly increasing")

    I = market.num_regions
    ratios: dict[tuple[int, int], list[float]] = {
        (i, j): [] for i, j in combinations(range(I), 2)
    }
    kappas: dict[tuple[int, int], list[float]] = {
        (j, i): [] for i, j in combinations(range(I), 2)
    }
    for gamma in gammas:
        eq = solve_all_regions(thicken(market, gamma, mode))
        if isinstance(eq, NoAllRegionsEquilibrium):
            raise ConvergenceError(
                f"no all-regions equilibrium at gamma={gamma}: {eq.reason}",
                {"gamma": gamma},
            )
        for i, j in combinations(range(I), 2):
            ratios[(i, j)].append(eq.outcomes[j].access / eq.outcomes[i].access)
            kappas[(j, i)].append(eq.undersupply(j, i))
    return ThickeningReport(
        gammas=gammas,
        mode=mode,
        access_ratios={k: tuple(v) for k, v in ratios.items()},
        undersupply={k: tuple(v) for k, v in kappas.items()},
    )


def split_regions(
    market: MarketPrimitives, delta: float
) -> tuple[MarketPrimitives, tuple[int, ...]]:
    """Split every region into quantum-size copies preserving the equilibrium.

    Region i with ``t_i = x_i * delta`` becomes ``x_i`` copies of demand
    ``lam_i / x_i`` and size ``delta``; the equilibrium mass, access, and wait
    per copy reproduce the original region's.  Returns the homogeneous-size
    market and a map from new region index to original index.
    """
    if delta <= 0.0:
        raise DomainError("delta must be > 0")
    lambdas: list[float] = []
    sizes: list[float] = []
    index_map: list[int] = []
    for i, region in enumerate(market.regions):
        ratio = region.size_t / delta
        x = round(ratio)
        if x < 1 or abs(ratio - x) > 1e-9 * max(1.0, ratio):
            raise DomainError(
                f"size_t={region.size_t} of region {i} is not an integer multiple "
                f"of delta={delta} (residue {ratio - x:.3e})"
            )
        lambdas.extend([region.lambda_bar / x] * x)
        sizes.extend([delta] * x)
        index_map.extend([i] * x)
    split = MarketPrimitives.from_vectors(
        lambdas,
        sizes,
        total_drivers=market.total_drivers,
        reservation_wage=market.reservation_wage,
        price_sensitivity=market.price_sensitivity,
    )
    return split, tuple(index_map)


def merge_split_allocation(
    drivers: Sequence[float], index_map: Sequence[int], num_original: int
) -> tuple[float, ...]:
    """Aggregate a split-market allocation back to the original regions."""
    totals = [0.0] * num_original
    for n, i in zip(drivers, index_map):
        totals[i] += n
    return tuple(totals)


def platform_ideal_pair(
    n_total: float, lam_i: float, lam_j: float, t: float
) -> tuple[float, float]:
    """Ride-maximizing reallocation of ``n_total`` drivers between two regions.

    Solves the first-order condition ``sqrt(n_i) W_i(n_i) = sqrt(n_j) W_j(n_j)``
    by bisection; on the admissible interval (both ``sqrt(n) W(n)`` branches
    increasing, i.e. ``n >= sqrt(lam t / 3)``) the condition is monotone and
    total rides are concave, so the root is the unique maximizer.
    """
    if not (lam_i >= lam_j > 0.0):
        raise DomainError("need lam_i >= lam_j > 0")
    if t <= 0.0:
        raise DomainError("need t > 0 (with t = 0 any split serves all demand)")
    lo = math.sqrt(lam_i * t / 3.0)
    hi = n_total - math.sqrt(lam_j * t / 3.0)
    if lo >= hi:
        raise BracketError(
            f"n_total={n_total} too small to reach both increasing branches"
        )

    def marginal_gap(n: float) -> float:
        return math.sqrt(n) * wait_time(n, lam_i, t) - math.sqrt(n_total - n) * wait_time(
            n_total - n, lam_j, t
        )

    if not (marginal_gap(lo) <= 0.0 <= marginal_gap(hi)):
        raise BracketError("first-order condition does not change sign on the bracket")
    a, b = lo, hi
    for _ in range(MAX_BISECT):
        mid = 0.5 * (a + b)
        if marginal_gap(mid) < 0.0:
            a = mid
        else:
            b = mid
        if b - a <= 1e-14 * max(1.0, n_total):
            break
    n_i = 0.5 * (a + b)
    return n_i, n_total - n_i
