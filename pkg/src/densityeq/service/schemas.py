"""Pydantic request/response models for the HTTP service."""

from __future__ import annotations

from typing import Literal, Optional

from pydantic import BaseModel, Field


class MarketSpec(BaseModel):
    """Wire form of market primitives."""

    lambdas: list[float] = Field(min_length=1)
    sizes: list[float] = Field(min_length=1)
    total_drivers: Optional[float] = None
    reservation_wage: float = 1.0
    price_sensitivity: float = 1.0


class RegionOutcomeModel(BaseModel):
    drivers: float
    wait: Optional[float]
    ride_rate: float
    access: float
    idle: Optional[float]
    pickup: Optional[float]


class EquilibriumRequest(BaseModel):
    market: MarketSpec
    enumerate_partial: bool = True


class EquilibriumResponse(BaseModel):
    all_regions: bool
    served: list[int]
    common_wait: Optional[float]
    outcomes: list[RegionOutcomeModel]
    provisional: bool = False
    diagnostic: Optional[str] = None


class RegionOptimumModel(BaseModel):
    price: float
    wage: float
    entry: float
    access: float
    margin: float
    profit: float
    served: bool


class OptimumRequest(BaseModel):
    market: MarketSpec


class OptimumResponse(BaseModel):
    regions: list[RegionOptimumModel]


class SweepRequest(BaseModel):
    grid: list[float] = Field(min_length=1, description="normalized densities, >= 27, increasing")
    jobs: Optional[int] = None


class SweepPointModel(BaseModel):
    lambda_tilde: float
    price: float
    wage: float
    access: float
    margin: float
    served: bool
    error: Optional[str] = None


class SweepDiagnosticsModel(BaseModel):
    wage_nonincreasing: bool
    price_nonincreasing: bool
    margin_nondecreasing: bool
    access_nondecreasing: bool
    log_access_concave: bool
    concavity_residuals: list[float]


class SweepResponse(BaseModel):
    points: list[SweepPointModel]
    diagnostics: SweepDiagnosticsModel


class ThickenRequest(BaseModel):
    market: MarketSpec
    gammas: list[float] = Field(min_length=1)
    mode: Literal["one_sided", "two_sided"] = "two_sided"


class PairSeries(BaseModel):
    i: int
    j: int
    values: list[float]


class ThickenResponse(BaseModel):
    gammas: list[float]
    mode: str
    access_ratios: list[PairSeries]
    undersupply: list[PairSeries]


class SimulateRequest(BaseModel):
    drivers: int = Field(ge=1)
    arrival_rate: float = Field(gt=0)
    t_prime: float = Field(ge=0)
    num_arrivals: int = Field(ge=1000, le=100_000_000)
    seed: int = 0
    replication: int = 0


class SimulateResponse(BaseModel):
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
    rng_algorithm: str


class TripIn(BaseModel):
    pickup_zone: str
    dropoff_zone: str
    platform: str
    timestamp: str


class ZoneIn(BaseModel):
    zone: str
    area_sqmi: float = Field(gt=0)
    group: str
    zone_type: str
    pop_density: Optional[float] = None


class FlowsRequest(BaseModel):
    trips: list[TripIn]
    zones: list[ZoneIn] = Field(min_length=1)
    window: Literal["month", "day", "hour"] = "month"
    exclude_intra: bool = True


class FlowStatsModel(BaseModel):
    zone: str
    platform: str
    window: str
    outflow: int
    inflow: int
    ro: float
    dropoff_density: float


class FlowsResponse(BaseModel):
    stats: list[FlowStatsModel]
    dropped_zero_inflow: int
    rejected_rows: int


class RowIn(BaseModel):
    values: dict[str, float]
    fe_keys: dict[str, str] = Field(default_factory=dict)


class RegressRequest(BaseModel):
    model: Literal["ols", "logit", "nls-kink"]
    rows: list[RowIn] = Field(min_length=1)
    response: str
    regressors: list[str] = Field(default_factory=list)
    fe: list[str] = Field(default_factory=list)
    form: Literal["log", "linear"] = "log"
    density: str = "log_pop_density"
    size: str = "size"


class TermEstimate(BaseModel):
    term: str
    estimate: float
    se: float
    t: float


class RegressResponse(BaseModel):
    model: str
    terms: list[TermEstimate]
    n_obs: int
    r_squared: Optional[float] = None
    log_likelihood: Optional[float] = None
    aic: Optional[float] = None
    a_max: Optional[float] = None
    iterations: int = 0
