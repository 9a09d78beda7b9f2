"""Primitive types and closed-form quantities of the spatial ride-hailing market.

Each region is a circle whose size ``t`` is measured in driver-travel-time
units (a quarter of the circumference travel time, so pickup time is ``t/n``).
Demand arrives at rate ``lambda_bar * f(p)`` with linear ``f(p) = 1 - alpha*p``.
A driver's total wait in a region with ``n`` drivers and realized demand
``lam`` is ``W(n) = n/lam + t/n`` (idle plus pickup); the region then serves
``r = n/W`` rides per hour and fulfils a fraction ``A = r/lambda_bar`` of
potential demand.

Everything here is a pure function of floats and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

from .errors import DomainError, InfiniteWaitError

__all__ = [
    "RegionParams",
    "MarketPrimitives",
    "PlatformStrategy",
    "Allocation",
    "RegionOutcome",
    "demand_rate",
    "wait_time",
    "access",
    "ride_rate",
    "region_outcome",
]

#: Default relative tolerance for floating-point comparisons.
REL_TOL = 1e-9


def _require_finite(**values: float) -> None:
    for name, v in values.items():
        if not math.isfinite(v):
            raise DomainError(f"{name} must be finite, got {v!r}")


@dataclass(frozen=True)
class RegionParams:
    """A single region: potential demand rate and size.

    ``size_t`` is the normalized size (pickup time equals ``size_t / n``);
    the full circumference in travel time is ``4 * size_t``.
    """

    lambda_bar: float
    size_t: float

    def __post_init__(self):
        _require_finite(lambda_bar=self.lambda_bar, size_t=self.size_t)
        if self.lambda_bar < 0:
            raise DomainError(f"lambda_bar must be >= 0, got {self.lambda_bar}")
        if self.size_t < 0:
            raise DomainError(f"size_t must be >= 0, got {self.size_t}")

    @property
    def density(self) -> float:
        """Demand per unit of size; infinite for frictionless regions."""
        if self.size_t == 0.0:
            return math.inf
        return self.lambda_bar / self.size_t


@dataclass(frozen=True)
class MarketPrimitives:
    """Market-level primitives: regions, total drivers, and entry parameters.

    Regions are stored sorted by non-increasing demand density (stable sort,
    frictionless ``size_t == 0`` regions first).  ``total_drivers=None`` means
    the driver pool is endogenous (free entry at reservation wage).
    """

    regions: tuple[RegionParams, ...]
    total_drivers: Optional[float] = None
    reservation_wage: float = 1.0
    price_sensitivity: float = 1.0

    def __post_init__(self):
        regions = tuple(self.regions)
        if not regions:
            raise DomainError("at least one region is required")
        ordered = tuple(sorted(regions, key=lambda r: -r.density))
        object.__setattr__(self, "regions", ordered)
        if self.total_drivers is not None:
            _require_finite(total_drivers=self.total_drivers)
            if self.total_drivers < 0:
                raise DomainError("total_drivers must be >= 0 when given")
        _require_finite(
            reservation_wage=self.reservation_wage,
            price_sensitivity=self.price_sensitivity,
        )
        if self.reservation_wage <= 0:
            raise DomainError("reservation_wage must be > 0")
        if self.price_sensitivity <= 0:
            raise DomainError("price_sensitivity must be > 0")

    @classmethod
    def from_vectors(
        cls,
        lambdas: Sequence[float],
        sizes: Sequence[float],
        total_drivers: Optional[float] = None,
        reservation_wage: float = 1.0,
        price_sensitivity: float = 1.0,
    ) -> "MarketPrimitives":
        if len(lambdas) != len(sizes):
            raise DomainError("lambdas and sizes must have the same length")
        regions = tuple(RegionParams(lb, t) for lb, t in zip(lambdas, sizes))
        return cls(regions, total_drivers, reservation_wage, price_sensitivity)

    @property
    def num_regions(self) -> int:
        return len(self.regions)

    def lambdas(self) -> list[float]:
        return [r.lambda_bar for r in self.regions]

    def sizes(self) -> list[float]:
        return [r.size_t for r in self.regions]


@dataclass(frozen=True)
class PlatformStrategy:
    """Per-region prices and per-ride wages."""

    prices: tuple[float, ...]
    wages: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "prices", tuple(self.prices))
        object.__setattr__(self, "wages", tuple(self.wages))
        if len(self.prices) != len(self.wages):
            raise DomainError("prices and wages must have the same length")
        for p, c in zip(self.prices, self.wages):
            _require_finite(price=p, wage=c)
            if p < 0 or c < 0:
                raise DomainError("prices and wages must be >= 0")

    def matches(self, market: MarketPrimitives) -> bool:
        return len(self.prices) == market.num_regions


@dataclass(frozen=True)
class Allocation:
    """Mass of drivers per region; sums to N when N is fixed."""

    drivers: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "drivers", tuple(self.drivers))
        for n in self.drivers:
            _require_finite(n=n)
            if n < 0:
                raise DomainError("driver masses must be >= 0")

    def total(self) -> float:
        return sum(self.drivers)

    def check_total(self, total_drivers: float) -> None:
        tol = 1e-9 * max(1.0, total_drivers)
        if abs(self.total() - total_drivers) > tol:
            raise DomainError(
                f"allocation sums to {self.total()!r}, expected {total_drivers!r}"
            )


@dataclass(frozen=True)
class RegionOutcome:
    """Per-region equilibrium quantities implied by a driver mass."""

    wait: float
    ride_rate: float
    access: float
    idle: float
    pickup: float


def demand_rate(lambda_bar: float, p: float, alpha: float) -> float:
    """Realized demand rate ``lambda_bar * max(0, 1 - alpha*p)``.

    Demand is clamped at zero above the choke price ``1/alpha``.
    """
    _require_finite(lambda_bar=lambda_bar, p=p, alpha=alpha)
    if lambda_bar < 0:
        raise DomainError("lambda_bar must be >= 0")
    if p < 0:
        raise DomainError("price must be >= 0")
    if alpha <= 0:
        raise DomainError("alpha must be > 0")
    return lambda_bar * max(0.0, 1.0 - alpha * p)


def wait_time(n: float, lam: float, t: float) -> float:
    """Total driver wait ``n/lam + t/n`` (idle plus pickup time).

    Raises :class:`InfiniteWaitError` for an empty region of positive size,
    where the pickup time diverges.
    """
    _require_finite(n=n, lam=lam, t=t)
    if n < 0 or t < 0 or lam <= 0:
        raise DomainError(f"need n >= 0, t >= 0, lam > 0; got n={n}, lam={lam}, t={t}")
    if n == 0.0:
        if t > 0.0:
            raise InfiniteWaitError("empty region with positive size has infinite pickup time")
        return 0.0
    return n / lam + t / n


def ride_rate(n: float, lam: float, t: float) -> float:
    """Rides served per hour, ``n / W(n)``; zero with no drivers."""
    if n == 0.0:
        _require_finite(n=n, lam=lam, t=t)
        return 0.0
    return n / wait_time(n, lam, t)


def access(n: float, lambda_bar: float, lam: float, t: float) -> float:
    """Fraction of potential demand served: ``(lam/lambda_bar) / (1 + t*lam/n^2)``.

    Zero with no drivers.  Requires ``lam <= lambda_bar`` (realized demand
    cannot exceed potential demand).
    """
    _require_finite(n=n, lambda_bar=lambda_bar, lam=lam, t=t)
    if lambda_bar <= 0:
        raise DomainError("lambda_bar must be > 0")
    if lam > lambda_bar * (1.0 + 1e-12):
        raise DomainError(f"realized demand {lam} exceeds potential demand {lambda_bar}")
    if n < 0 or t < 0 or lam < 0:
        raise DomainError("n, t, lam must be >= 0")
    if n == 0.0:
        return 0.0
    return (lam / lambda_bar) / (1.0 + t * lam / (n * n))


def region_outcome(n: float, lambda_bar: float, lam: float, t: float) -> RegionOutcome:
    """Bundle wait, ride rate, access, idle, and pickup for one region."""
    if n == 0.0:
        if t > 0.0:
            return RegionOutcome(math.inf, 0.0, 0.0, 0.0, math.inf)
        return RegionOutcome(0.0, 0.0, 0.0, 0.0, 0.0)
    w = wait_time(n, lam, t)
    return RegionOutcome(
        wait=w,
        ride_rate=n / w,
        access=access(n, lambda_bar, lam, t),
        idle=n / lam,
        pickup=t / n,
    )
