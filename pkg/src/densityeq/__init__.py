"""Spatial ride-hailing market toolkit.

Driver-equilibrium solvers, platform-optimal prices and wages under free
entry, a discrete-event validation of the wait-time decomposition,
trip-flow analytics (relative outflows), and the accompanying regression
estimators.
"""

from .market import (
    Allocation,
    MarketPrimitives,
    PlatformStrategy,
    RegionOutcome,
    RegionParams,
    access,
    demand_rate,
    region_outcome,
    ride_rate,
    wait_time,
)
from .equilibrium import (
    EnumerationResult,
    EquilibriumResult,
    ExistenceReport,
    NoAllRegionsEquilibrium,
    ThickeningReport,
    comparative_thickness,
    enumerate_equilibria,
    existence_two_region,
    merge_split_allocation,
    platform_ideal_pair,
    solve_all_regions,
    solve_two_region,
    split_regions,
    thicken,
)
from .optimum import (
    NormalizedDensity,
    RegionOptimum,
    SweepTable,
    access_of_strategy,
    density_sweep,
    entry_n,
    normalize,
    optimal_joint,
    optimal_joint_market,
    optimal_price,
    optimal_wage,
    region_profit,
    wage_from_access,
)

__version__ = "0.1.0"
