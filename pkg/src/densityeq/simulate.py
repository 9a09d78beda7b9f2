"""Discrete-event Monte Carlo of one circular region.

Validates the closed-form wait decomposition: with ``n`` drivers posted at
equidistant points on a circle of circumference ``t_prime`` (travel-time
units) and passengers arriving Poisson at rate ``lam`` uniformly on the
circle, each driver's catchment arc receives a thinned Poisson stream of
rate ``lam / n``, so idle time per ride is Exponential(lam/n) with mean
``n / lam``, and the pickup leg is Uniform[0, t_prime/(2n)] with mean
``t_prime / (4n)``.  Trip legs are instantaneous (drivers return to post
immediately), so catchments are independent renewal processes and no
passenger queue forms.

Randomness comes from the counter-based Philox4x64 generator; a report is a
pure function of ``(seed, replication)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DomainError
from .market import wait_time

__all__ = ["SimConfig", "SimReport", "ValidationRow", "simulate_region", "validate_wait_formula"]

RNG_ALGORITHM = "philox4x64"

MIN_ARRIVALS = 1_000
MAX_ARRIVALS = 100_000_000


@dataclass(frozen=True)
class SimConfig:
    """Simulation inputs; ``phase`` rotates all driver posts (symmetry checks)."""

    drivers: int
    arrival_rate: float
    t_prime: float
    num_arrivals: int
    seed: int
    replication: int = 0
    phase: float = 0.0

    def __post_init__(self):
        if self.drivers < 1:
            raise DomainError("drivers must be a positive integer")
        if not self.arrival_rate > 0.0:
            raise DomainError("arrival_rate must be > 0")
        if self.t_prime < 0.0:
            raise DomainError("t_prime must be >= 0")
        if not MIN_ARRIVALS <= self.num_arrivals <= MAX_ARRIVALS:
            raise DomainError(
                f"num_arrivals must be in [{MIN_ARRIVALS}, {MAX_ARRIVALS}]"
            )


@dataclass(frozen=True)
class SimReport:
    """Sample means with standard errors against the closed-form predictions.

    ``mean_total`` is the accounting identity ``mean_idle + mean_pickup``.
    """

    config: SimConfig
    mean_idle: float
    mean_pickup: float
    mean_total: float
    se_idle: float
    se_pickup: float
    se_total: float
    predicted_idle: float
    predicted_pickup: float
    predicted_total: float
    rel_err_idle: float
    rel_err_pickup: float
    rel_err_total: float
    max_pickup: float
    rng_algorithm: str = RNG_ALGORITHM

    CSV_HEADER = (
        "drivers,arrival_rate,t_prime,num_arrivals,seed,replication,"
        "mean_idle,mean_pickup,mean_total,se_idle,se_pickup,se_total,"
        "predicted_idle,predicted_pickup,predicted_total,"
        "rel_err_idle,rel_err_pickup,rel_err_total,rng_algorithm"
    )

    def to_csv_row(self) -> str:
        c = self.config
        fields = [c.drivers, format(c.arrival_rate, ".17g"), format(c.t_prime, ".17g"),
                  c.num_arrivals, c.seed, c.replication]
        fields += [
            format(v, ".17g")
            for v in (
                self.mean_idle, self.mean_pickup, self.mean_total,
                self.se_idle, self.se_pickup, self.se_total,
                self.predicted_idle, self.predicted_pickup, self.predicted_total,
                self.rel_err_idle, self.rel_err_pickup, self.rel_err_total,
            )
        ]
        fields.append(self.rng_algorithm)
        return ",".join(str(f) for f in fields)

    def to_text(self) -> str:
        c = self.config
        lines = [
            f"simulation: n={c.drivers} lambda={c.arrival_rate} t_prime={c.t_prime} "
            f"arrivals={c.num_arrivals} seed={c.seed} rep={c.replication} rng={self.rng_algorithm}",
            f"  idle   mean={self.mean_idle:.6f} (se {self.se_idle:.2e})  "
            f"predicted={self.predicted_idle:.6f}  rel_err={self.rel_err_idle:.3e}",
            f"  pickup mean={self.mean_pickup:.6f} (se {self.se_pickup:.2e})  "
            f"predicted={self.predicted_pickup:.6f}  rel_err={self.rel_err_pickup:.3e}",
            f"  total  mean={self.mean_total:.6f} (se {self.se_total:.2e})  "
            f"predicted={self.predicted_total:.6f}  rel_err={self.rel_err_total:.3e}",
        ]
        return "\n".join(lines)


def _rel_err(mean: float, predicted: float) -> float:
    if predicted == 0.0:
        return 0.0 if mean == 0.0 else math.inf
    return abs(mean - predicted) / predicted


def simulate_region(config: SimConfig) -> SimReport:
    """Run one replication and report per-ride idle and pickup statistics."""
    n = config.drivers
    lam = config.arrival_rate
    tp = config.t_prime
    m = config.num_arrivals

    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([config.seed, config.replication])))
    arrival_times = np.cumsum(rng.exponential(1.0 / lam, size=m))
    positions = rng.uniform(0.0, tp, size=m) if tp > 0.0 else np.zeros(m)

    if tp > 0.0:
        spacing = tp / n
        # Nearest driver on the rotated equidistant grid; signed offset within
        # the catchment arc is the pickup travel time.
        rel = (positions - config.phase) / spacing
        nearest = np.rint(rel)
        pickup = np.abs(rel - nearest) * spacing
        driver_idx = nearest.astype(np.int64) % n
    else:
        pickup = np.zeros(m)
        driver_idx = rng.integers(0, n, size=m)

    # Idle per ride: time since the driver's previous assignment (drivers are
    # free again immediately, so each catchment is a renewal process).
    order = np.argsort(driver_idx, kind="stable")
    t_sorted = arrival_times[order]
    d_sorted = driver_idx[order]
    first_of_group = np.empty(m, dtype=bool)
    first_of_group[0] = True
    first_of_group[1:] = d_sorted[1:] != d_sorted[:-1]
    prev = np.concatenate(([0.0], t_sorted[:-1]))
    idle_sorted = np.where(first_of_group, t_sorted, t_sorted - prev)
    idle = np.empty(m)
    idle[order] = idle_sorted

    total = idle + pickup
    sqrt_m = math.sqrt(m)
    mean_idle = float(np.mean(idle))
    mean_pickup = float(np.mean(pickup))
    pred_idle = n / lam
    pred_pickup = tp / (4.0 * n)
    return SimReport(
        config=config,
        mean_idle=mean_idle,
        mean_pickup=mean_pickup,
        mean_total=mean_idle + mean_pickup,
        se_idle=float(np.std(idle, ddof=1)) / sqrt_m,
        se_pickup=float(np.std(pickup, ddof=1)) / sqrt_m if tp > 0.0 else 0.0,
        se_total=float(np.std(total, ddof=1)) / sqrt_m,
        predicted_idle=pred_idle,
        predicted_pickup=pred_pickup,
        predicted_total=pred_idle + pred_pickup,
        rel_err_idle=_rel_err(mean_idle, pred_idle),
        rel_err_pickup=_rel_err(mean_pickup, pred_pickup),
        rel_err_total=_rel_err(mean_idle + mean_pickup, pred_idle + pred_pickup),
        max_pickup=float(np.max(pickup)) if m else 0.0,
    )


@dataclass(frozen=True)
class ValidationRow:
    drivers: int
    mean_total: float
    predicted_total: float
    rel_error: float
    ok: bool


def validate_wait_formula(
    driver_grid: Sequence[int],
    arrival_rate: float,
    t_prime: float,
    num_arrivals: int = 1_000_000,
    seed: int = 0,
    tolerance: float = 0.01,
) -> tuple[list[ValidationRow], list[SimReport]]:
    """Simulate across a driver grid and compare against the wait curve.

    Each grid point runs as its own replication of ``seed``.  Returns the
    per-point rows (with pass/fail at ``tolerance`` relative error) together
    with the full reports; failures are flagged, not raised.
    """
    rows: list[ValidationRow] = []
    reports: list[SimReport] = []
    for k, n in enumerate(driver_grid):
        cfg = SimConfig(
            drivers=int(n),
            arrival_rate=arrival_rate,
            t_prime=t_prime,
            num_arrivals=num_arrivals,
            seed=seed,
            replication=k,
        )
        rep = simulate_region(cfg)
        predicted = wait_time(float(n), arrival_rate, t_prime / 4.0)
        rel = abs(rep.mean_total - predicted) / predicted
        rows.append(ValidationRow(int(n), rep.mean_total, predicted, rel, rel <= tolerance))
        reports.append(rep)
    return rows, reports
