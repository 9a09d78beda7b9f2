"""Platform-optimal wages and prices per region under free driver entry.

With an endogenous driver pool, entry in a region continues until hourly
earnings ``c / W(n)`` hit the reservation wage ``cbar``; only the larger root
of the implied quadratic is stable,

    n* = lam(p)/2 * (c/cbar + sqrt((c/cbar)^2 - 4 t / lam(p))),

which makes regions fully separable: the platform optimizes each region on
its own.  Region profit in closed form is

    pi = (p - c) * lam(p)/2 * (1 + sqrt(1 - (4 t / lam(p)) * (cbar/c)^2)).

All optimizers work in a normalized space where the region is summarized by
a single dimensionless density ``lam_tilde = lambda_bar / ((cbar*alpha)^2 t)``;
a region attracts drivers at the joint optimum iff ``lam_tilde >= 27``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ConvergenceError, DomainError
from .market import MarketPrimitives, demand_rate

__all__ = [
    "RegionOptimum",
    "NormalizedDensity",
    "SweepPoint",
    "SweepDiagnostics",
    "SweepTable",
    "SERVICE_DENSITY_THRESHOLD",
    "entry_n",
    "region_profit",
    "optimal_wage",
    "optimal_price",
    "normalize",
    "optimal_joint",
    "optimal_joint_market",
    "access_of_strategy",
    "wage_from_access",
    "density_sweep",
]

#: Minimum normalized density at which the joint optimum serves a region
#: (equals 4 / max_c c^2 (1 - c) = 27, attained at c = 2/3).
SERVICE_DENSITY_THRESHOLD = 27.0

_BOUNDARY_SLACK = 1e-12


@dataclass(frozen=True)
class RegionOptimum:
    """Platform choice and induced entry outcome for one region."""

    price: float
    wage: float
    entry: float
    access: float
    margin: float
    profit: float
    served: bool

    @staticmethod
    def unserved(price: float = 0.0, wage: float = 0.0) -> "RegionOptimum":
        return RegionOptimum(price, wage, 0.0, 0.0, price - wage, 0.0, False)


@dataclass(frozen=True)
class NormalizedDensity:
    """Dimensionless density with back-maps to physical units.

    Markets sharing ``lambda_tilde`` share the same normalized optimum;
    prices and wages back-map by ``1/alpha`` and driver mass by
    ``cbar * alpha * t``.  Access is invariant under the map.
    """

    lambda_tilde: float
    size_t: float
    reservation_wage: float
    price_sensitivity: float

    def to_physical_price(self, p_tilde: float) -> float:
        return p_tilde / self.price_sensitivity

    def to_physical_wage(self, c_tilde: float) -> float:
        return c_tilde / self.price_sensitivity

    def to_physical_drivers(self, n_tilde: float) -> float:
        return n_tilde * self.reservation_wage * self.price_sensitivity * self.size_t

    def to_normalized_price(self, p: float) -> float:
        return p * self.price_sensitivity

    def to_normalized_wage(self, c: float) -> float:
        return c * self.price_sensitivity

    def to_normalized_drivers(self, n: float) -> float:
        return n / (self.reservation_wage * self.price_sensitivity * self.size_t)


def normalize(lambda_bar: float, t: float, cbar: float, alpha: float) -> NormalizedDensity:
    """Map a region to its dimensionless density lam_tilde = lambda_bar / ((cbar*alpha)^2 t)."""
    if t <= 0.0 or cbar <= 0.0 or alpha <= 0.0:
        raise DomainError("need t > 0, cbar > 0, alpha > 0 to normalize")
    if lambda_bar < 0.0:
        raise DomainError("lambda_bar must be >= 0")
    return NormalizedDensity(
        lambda_tilde=lambda_bar / ((cbar * alpha) ** 2 * t),
        size_t=t,
        reservation_wage=cbar,
        price_sensitivity=alpha,
    )


def entry_n(c: float, p: float, lambda_bar: float, t: float, cbar: float, alpha: float) -> float:
    """Free-entry driver mass: the stable (larger) root of c / W(n) = cbar.

    Returns 0 when the wage cannot sustain any driver (negative discriminant)
    or when realized demand is zero.
    """
    if cbar <= 0.0:
        raise DomainError("cbar must be > 0")
    lam = demand_rate(lambda_bar, p, alpha)
    if lam <= 0.0 or c <= 0.0:
        return 0.0
    ratio = c / cbar
    disc = ratio * ratio - 4.0 * t / lam
    if disc < 0.0:
        return 0.0
    return (ratio + math.sqrt(disc)) * lam / 2.0


def region_profit(c: float, p: float, lambda_bar: float, t: float, cbar: float, alpha: float) -> float:
    """Hourly profit (p - c) * r at the free-entry mass; 0 when no driver enters."""
    lam = demand_rate(lambda_bar, p, alpha)
    if lam <= 0.0 or c <= 0.0:
        return 0.0
    inner = 1.0 - (4.0 * t / lam) * (cbar / c) ** 2
    if inner < 0.0:
        return 0.0
    return (p - c) * (lam / 2.0) * (1.0 + math.sqrt(inner))


def access_of_strategy(
    c: float, p: float, lambda_bar: float, t: float, cbar: float, alpha: float
) -> float:
    """Equilibrium access f(p) * (1 + sqrt(1 - (4t/(lambda_bar f(p))) (cbar/c)^2)) / 2.

    Depends on the region only through the density lambda_bar / t.
    Returns 0 when the region is unserved (negative discriminant).
    """
    f = max(0.0, 1.0 - alpha * p)
    if f <= 0.0 or c <= 0.0 or lambda_bar <= 0.0:
        return 0.0
    inner = 1.0 - (4.0 * t / (lambda_bar * f)) * (cbar / c) ** 2
    if inner < -_BOUNDARY_SLACK:
        return 0.0
    return f * (1.0 + math.sqrt(max(inner, 0.0))) / 2.0


def wage_from_access(
    A: float, p: float, lambda_bar: float, t: float, cbar: float, alpha: float
) -> float:
    """Wage delivering equilibrium access A at price p (inverse of access_of_strategy).

    Valid on the stable branch A in [f(p)/2, f(p)); diverges as A approaches
    f(p).
    """
    f = 1.0 - alpha * p
    if not 0.0 < A < f:
        raise DomainError(f"need 0 < A < f(p) = {f}, got A = {A}")
    if lambda_bar <= 0.0 or t < 0.0:
        raise DomainError("need lambda_bar > 0 and t >= 0")
    return cbar * math.sqrt((t / lambda_bar) * f / (A * f - A * A))


def _bisect_increasing(fn, lo: float, hi: float, iters: int = 200) -> float:
    """Root of an increasing function with fn(lo) <= 0 <= fn(hi)."""
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if fn(mid) < 0.0:
            lo = mid
        else:
            hi = mid
        if hi - lo <= 1e-16 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _served_optimum(
    c: float, p: float, lam: float, lambda_bar: float, t: float, cbar: float
) -> RegionOptimum:
    """Assemble a served RegionOptimum, clamping boundary roundoff in the discriminant."""
    inner = max(0.0, 1.0 - (4.0 * t / lam) * (cbar / c) ** 2)
    root = math.sqrt(inner)
    half_lam = lam / 2.0
    return RegionOptimum(
        price=p,
        wage=c,
        entry=half_lam * (c / cbar) * (1.0 + root),
        access=(lam / lambda_bar) * (1.0 + root) / 2.0,
        margin=p - c,
        profit=max(0.0, (p - c) * half_lam * (1.0 + root)),
        served=True,
    )


def optimal_wage(
    p: float, lambda_bar: float, t: float, cbar: float, alpha: float
) -> RegionOptimum:
    """Profit-maximizing wage at a fixed price.

    The region attracts drivers iff ``lambda_bar / t >= (4 / f(p)) (cbar/p)^2``;
    above the threshold the first-order condition

        sqrt(c^2 - a) = a p / c^2 - c,   a = 4 t cbar^2 / lam(p)

    has an increasing left side and decreasing right side, so the unique
    root in (sqrt(a), p) is found by bisection.
    """
    if t <= 0.0:
        raise DomainError("optimal_wage requires t > 0")
    if p <= 0.0:
        return RegionOptimum.unserved(price=p)
    lam = demand_rate(lambda_bar, p, alpha)
    if lam <= 0.0:
        return RegionOptimum.unserved(price=p)
    a = 4.0 * t * cbar * cbar / lam
    if a > p * p * (1.0 + _BOUNDARY_SLACK):
        return RegionOptimum.unserved(price=p)
    a = min(a, p * p)
    sqrt_a = math.sqrt(a)
    if p - sqrt_a <= 1e-15 * p:
        c_star = p
    else:
        c_star = _bisect_increasing(
            lambda c: math.sqrt(max(c * c - a, 0.0)) - (a * p / (c * c) - c),
            sqrt_a,
            p,
        )
    return _served_optimum(c_star, p, lam, lambda_bar, t, cbar)


def optimal_price(
    c: float, lambda_bar: float, t: float, cbar: float, alpha: float
) -> RegionOptimum:
    """Profit-maximizing price at a fixed wage.

    Served iff ``(4 / (1 - alpha c)) (cbar/c)^2 <= lambda_bar / t``.  The
    log-profit first-order condition is strictly decreasing in p on the
    feasible interval (c, p_max), so bisection finds the unique optimum.
    """
    if t <= 0.0:
        raise DomainError("optimal_price requires t > 0")
    if c <= 0.0 or 1.0 - alpha * c <= 0.0:
        return RegionOptimum.unserved(wage=c)
    W = c / cbar
    # Highest price at which entry is feasible: lam(p) = 4 t / W^2.
    feasibility = 1.0 - 4.0 * t / (lambda_bar * W * W)
    p_max = feasibility / alpha
    if p_max < c * (1.0 - _BOUNDARY_SLACK):
        return RegionOptimum.unserved(wage=c)
    if p_max - c <= 1e-15 * max(1.0, c):
        p_star = c
    else:
        base = 4.0 * t / (lambda_bar * W * W)

        def neg_foc(p: float) -> float:
            fp = 1.0 - alpha * p
            inner = fp - base
            if inner <= 0.0:
                return math.inf
            root = math.sqrt(inner)
            third = (
                (alpha * base / fp)
                / (math.sqrt(fp) + root)
                / (2.0 * root)
            )
            return -(1.0 / (p - c) - alpha / fp - third)

        span = p_max - c
        lo = c + 1e-13 * span
        hi = p_max - 1e-13 * span
        if neg_foc(lo) > 0.0:
            p_star = lo
        elif neg_foc(hi) < 0.0:
            p_star = hi
        else:
            p_star = _bisect_increasing(neg_foc, lo, hi)
    lam = demand_rate(lambda_bar, p_star, alpha)
    return _served_optimum(c, p_star, lam, lambda_bar, t, cbar)


def _feasible_price_interval(lam_tilde: float) -> tuple[float, float]:
    """Normalized prices at which some wage attracts drivers: (1-p) p^2 >= 4/lam_tilde."""
    target = 4.0 / lam_tilde

    def h(p: float) -> float:
        return (1.0 - p) * p * p - target

    peak = h(2.0 / 3.0)
    if peak <= 0.0:
        # At (or within roundoff of) the service threshold the interval
        # collapses to its peak.
        return 2.0 / 3.0, 2.0 / 3.0
    lo, hi = 1e-12, 2.0 / 3.0
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) < 0.0:
            lo = mid
        else:
            hi = mid
    p_lo = 0.5 * (lo + hi)
    lo, hi = 2.0 / 3.0, 1.0 - 1e-12
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if h(mid) >= 0.0:
            lo = mid
        else:
            hi = mid
    p_hi = 0.5 * (lo + hi)
    return p_lo, p_hi


def _joint_normalized(lam_tilde: float) -> RegionOptimum:
    """Joint price-and-wage optimum in normalized units (t = cbar = alpha = 1).

    Three stages: profile profit over the feasible price interval with the
    wage solved exactly at each price (the interval can be razor thin near
    the service threshold, so it is computed analytically first), localize
    the best price by golden section, then polish by coordinate descent with
    per-coordinate bisections on the two first-order conditions.  The final
    stage matters for precision: an argmax search alone can only localize a
    flat maximum to about sqrt(machine epsilon).
    """
    if lam_tilde < SERVICE_DENSITY_THRESHOLD:
        return RegionOptimum.unserved()
    p_lo, p_hi = _feasible_price_interval(lam_tilde)
    if p_hi - p_lo <= 1e-14:
        return optimal_wage(p_lo, lam_tilde, 1.0, 1.0, 1.0)

    def value(p: float) -> float:
        return optimal_wage(p, lam_tilde, 1.0, 1.0, 1.0).profit

    grid = np.linspace(p_lo, p_hi, 513)
    values = [value(p) for p in grid]
    k = int(np.argmax(values))
    a = grid[max(k - 1, 0)]
    b = grid[min(k + 1, len(grid) - 1)]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = b - invphi * (b - a)
    x2 = a + invphi * (b - a)
    f1, f2 = value(x1), value(x2)
    for _ in range(200):
        if b - a <= 1e-10 * max(1.0, b):
            break
        if f1 < f2:
            a, x1, f1 = x1, x2, f2
            x2 = a + invphi * (b - a)
            f2 = value(x2)
        else:
            b, x2, f2 = x2, x1, f1
            x1 = b - invphi * (b - a)
            f1 = value(x1)
    p = 0.5 * (a + b)
    best = optimal_wage(p, lam_tilde, 1.0, 1.0, 1.0)

    # Coordinate descent on the first-order conditions.  Each half-step is a
    # monotone bisection, so the fixed point is resolved to root precision.
    profit_prev = best.profit
    for _ in range(100):
        by_price = optimal_price(best.wage, lam_tilde, 1.0, 1.0, 1.0)
        if not by_price.served:
            break
        by_wage = optimal_wage(by_price.price, lam_tilde, 1.0, 1.0, 1.0)
        if not by_wage.served:
            break
        moved = max(
            abs(by_wage.price - best.price), abs(by_wage.wage - best.wage)
        )
        best = by_wage
        if moved <= 1e-14 * max(1.0, best.price):
            break
        profit_prev = best.profit
    else:
        if best.profit - profit_prev > 1e-12 * max(1.0, best.profit):
            raise ConvergenceError(
                "joint refinement still improving after 100 rounds",
                {"lambda_tilde": lam_tilde, "profit": best.profit},
            )
    return best


def optimal_joint(
    lambda_bar: float, t: float, cbar: float, alpha: float
) -> RegionOptimum:
    """Joint profit-maximizing price and wage for one region under free entry.

    Unserved iff the normalized density falls below 27 (boundary served);
    otherwise solved in normalized space and mapped back, scaling profit by
    ``cbar^2 * alpha * t`` (demand rate times price each carry a factor).
    """
    norm = normalize(lambda_bar, t, cbar, alpha)
    tilde = _joint_normalized(norm.lambda_tilde)
    if not tilde.served:
        return RegionOptimum.unserved()
    profit_scale = cbar * cbar * alpha * t
    return RegionOptimum(
        price=norm.to_physical_price(tilde.price),
        wage=norm.to_physical_wage(tilde.wage),
        entry=norm.to_physical_drivers(tilde.entry),
        access=tilde.access,
        margin=norm.to_physical_price(tilde.margin),
        profit=tilde.profit * profit_scale,
        served=True,
    )


def optimal_joint_market(market: MarketPrimitives) -> list[RegionOptimum]:
    """Per-region joint optima; free entry makes regions separable."""
    return [
        optimal_joint(r.lambda_bar, r.size_t, market.reservation_wage, market.price_sensitivity)
        for r in market.regions
    ]


@dataclass(frozen=True)
class SweepPoint:
    lambda_tilde: float
    price: float
    wage: float
    access: float
    margin: float
    served: bool
    error: Optional[str] = None


@dataclass(frozen=True)
class SweepDiagnostics:
    """Monotonicity and concavity checks along a density sweep."""

    wage_nonincreasing: bool
    price_nonincreasing: bool
    margin_nondecreasing: bool
    access_nondecreasing: bool
    concavity_residuals: tuple[float, ...]
    log_access_concave: bool

    @property
    def all_pass(self) -> bool:
        return (
            self.wage_nonincreasing
            and self.price_nonincreasing
            and self.margin_nondecreasing
            and self.access_nondecreasing
            and self.log_access_concave
        )


@dataclass(frozen=True)
class SweepTable:
    grid: tuple[float, ...]
    points: tuple[SweepPoint, ...]
    diagnostics: SweepDiagnostics


def _sweep_point(lam_tilde: float) -> SweepPoint:
    try:
        opt = _joint_normalized(lam_tilde)
        return SweepPoint(
            lam_tilde, opt.price, opt.wage, opt.access, opt.margin, opt.served
        )
    except Exception as exc:  # annotate and continue per-point
        return SweepPoint(lam_tilde, math.nan, math.nan, math.nan, math.nan, False, str(exc))


MONOTONE_SLACK = 1e-9
CONCAVITY_SLACK = 1e-6


def density_sweep(grid: Sequence[float], jobs: int | None = None) -> SweepTable:
    """Normalized joint optima along an increasing density grid with diagnostics.

    The wage and price paths must be non-increasing and the margin and access
    paths non-decreasing in density; log access must be concave in log
    density (successive divided-difference slopes non-increasing up to
    ``CONCAVITY_SLACK``, which handles the unequal grid spacing).
    """
    grid = tuple(float(g) for g in grid)
    if not grid:
        raise DomainError("grid must be non-empty")
    if any(g < SERVICE_DENSITY_THRESHOLD for g in grid):
        raise DomainError(f"grid values must be >= {SERVICE_DENSITY_THRESHOLD}")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise DomainError("grid must be strictly increasing")

    if jobs is not None and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            points = tuple(pool.map(_sweep_point, grid))
    else:
        points = tuple(_sweep_point(g) for g in grid)

    ok = [pt for pt in points if pt.error is None and pt.served]

    def nonincreasing(xs: list[float]) -> bool:
        return all(b <= a + MONOTONE_SLACK for a, b in zip(xs, xs[1:]))

    def nondecreasing(xs: list[float]) -> bool:
        return all(b >= a - MONOTONE_SLACK for a, b in zip(xs, xs[1:]))

    wages = [pt.wage for pt in ok]
    prices = [pt.price for pt in ok]
    margins = [pt.margin for pt in ok]
    accesses = [pt.access for pt in ok]

    residuals: list[float] = []
    if len(ok) >= 3:
        tau = [math.log(pt.lambda_tilde) for pt in ok]
        logA = [math.log(pt.access) for pt in ok]
        slopes = [
            (b - a) / (tb - ta)
            for a, b, ta, tb in zip(logA, logA[1:], tau, tau[1:])
        ]
        residuals = [s2 - s1 for s1, s2 in zip(slopes, slopes[1:])]

    diagnostics = SweepDiagnostics(
        wage_nonincreasing=nonincreasing(wages),
        price_nonincreasing=nonincreasing(prices),
        margin_nondecreasing=nondecreasing(margins),
        access_nondecreasing=nondecreasing(accesses),
        concavity_residuals=tuple(residuals),
        log_access_concave=all(r <= CONCAVITY_SLACK for r in residuals),
    )
    return SweepTable(grid=grid, points=points, diagnostics=diagnostics)
