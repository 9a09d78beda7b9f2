"""Origin-destination trip ingestion and relative-outflow analytics.

The relative outflow of a zone for a platform over a window is the number of
rides leaving the zone per ride entering it.  Since every trip has a trip
back by the same person, a persistently low relative outflow marks a zone
where riders who enter with the platform exit by other means, i.e. where the
platform's access is relatively poor.  Access ratios between two regions can
therefore be read off trip counts without observing potential demand: with
balanced origin-destination demand ``A_1/A_2 = RO_1``, and for two snapshots
with similarly unbalanced demand the double ratio ``(A_1/A_2)/(A'_1/A'_2)``
equals ``RO_1/RO'_1``.

Trips come as CSV rows ``pickup_zone,dropoff_zone,platform,timestamp``
(ISO-8601, local clock); zone metadata as
``zone,area_sqmi,group,zone_type,pop_density``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from datetime import datetime, timedelta
from typing import Iterable, Mapping, Optional, Sequence, TextIO

import numpy as np

from .econometrics import PanelRow
from .errors import DomainError

__all__ = [
    "TripRecord",
    "ZoneMeta",
    "FlowStats",
    "FlowComputation",
    "ODMatrix",
    "AccessRatioReport",
    "compute_flows",
    "synth_market",
    "access_ratio_estimates",
    "build_panel",
    "net_driver_flows",
    "read_trips_csv",
    "read_zones_csv",
    "write_flows_csv",
    "write_panel_csv",
    "read_panel_csv",
]

WINDOWS = ("month", "day", "hour")

TRIPS_HEADER = ["pickup_zone", "dropoff_zone", "platform", "timestamp"]
ZONES_HEADER = ["zone", "area_sqmi", "group", "zone_type", "pop_density"]
FLOWS_HEADER = ["zone", "platform", "window", "outflow", "inflow", "ro", "dropoff_density"]


@dataclass(frozen=True)
class TripRecord:
    pickup_zone: str
    dropoff_zone: str
    platform: str
    timestamp: datetime

    def __post_init__(self):
        if not self.pickup_zone or not self.dropoff_zone or not self.platform:
            raise DomainError("zones and platform must be non-empty")


@dataclass(frozen=True)
class ZoneMeta:
    zone: str
    area_sqmi: float
    group: str
    zone_type: str
    pop_density: Optional[float] = None

    def __post_init__(self):
        if not self.zone:
            raise DomainError("zone id must be non-empty")
        if not self.area_sqmi > 0.0:
            raise DomainError(f"area_sqmi must be > 0, got {self.area_sqmi}")
        if self.pop_density is not None and not self.pop_density > 0.0:
            raise DomainError("pop_density must be > 0 when given")


@dataclass(frozen=True)
class FlowStats:
    """Per (zone, platform, window) flow counts with derived ratios."""

    zone: str
    platform: str
    window: str
    outflow: int
    inflow: int
    ro: float
    dropoff_density: float


@dataclass(frozen=True)
class FlowComputation:
    stats: tuple[FlowStats, ...]
    dropped_zero_inflow: int
    rejected_rows: int


@dataclass(frozen=True)
class ODMatrix:
    """Potential hourly demand per origin-destination pair, with per-origin access.

    Fulfilled flow from i to j is ``access[i] * demand[i][j]`` in expectation:
    the unfulfilled share does not depend on the destination.
    """

    zones: tuple[str, ...]
    demand: tuple[tuple[float, ...], ...]
    access: tuple[float, ...]

    def __post_init__(self):
        k = len(self.zones)
        if len(set(self.zones)) != k:
            raise DomainError("zone ids must be unique")
        if len(self.demand) != k or any(len(r) != k for r in self.demand):
            raise DomainError("demand must be a square matrix over the zones")
        if len(self.access) != k:
            raise DomainError("one access value per zone required")
        for row in self.demand:
            for v in row:
                if v < 0 or not math.isfinite(v):
                    raise DomainError("demand rates must be finite and >= 0")
        for a in self.access:
            if not 0.0 < a <= 1.0:
                raise DomainError("access values must lie in (0, 1]")


@dataclass(frozen=True)
class AccessRatioReport:
    """Access ratios inferred from relative outflows."""

    zone: str
    other: str
    ro: float
    access_ratio: float
    ro_prime: Optional[float] = None
    double_ratio: Optional[float] = None


def _window_key(ts: datetime, window: str) -> str:
    if window == "month":
        return ts.strftime("%Y-%m")
    if window == "day":
        return ts.strftime("%Y-%m-%d")
    if window == "hour":
        return ts.strftime("%H")
    raise DomainError(f"window must be one of {WINDOWS}, got {window!r}")


def compute_flows(
    trips: Iterable[TripRecord],
    zones: Mapping[str, ZoneMeta] | Sequence[ZoneMeta],
    window: str = "month",
    exclude_intra: bool = True,
) -> FlowComputation:
    """Count per-cell outflows and inflows and derive RO and dropoff density.

    ``exclude_intra`` drops trips whose pickup and dropoff zones coincide
    (outflow counts rides to other zones only); when False such trips count
    toward both sides.  Trips mentioning unknown zones are rejected and
    counted; cells with zero inflow are dropped and counted (RO undefined).
    Output is deterministic: sorted by platform, window, zone.
    """
    zone_map = _as_zone_map(zones)
    if window not in WINDOWS:
        raise DomainError(f"window must be one of {WINDOWS}, got {window!r}")
    outflow: dict[tuple[str, str, str], int] = {}
    inflow: dict[tuple[str, str, str], int] = {}
    rejected = 0
    for trip in trips:
        if trip.pickup_zone not in zone_map or trip.dropoff_zone not in zone_map:
            rejected += 1
            continue
        if exclude_intra and trip.pickup_zone == trip.dropoff_zone:
            continue
        w = _window_key(trip.timestamp, window)
        key_out = (trip.pickup_zone, trip.platform, w)
        key_in = (trip.dropoff_zone, trip.platform, w)
        outflow[key_out] = outflow.get(key_out, 0) + 1
        inflow[key_in] = inflow.get(key_in, 0) + 1

    dropped = 0
    stats: list[FlowStats] = []
    for key in sorted(set(outflow) | set(inflow), key=lambda k: (k[1], k[2], k[0])):
        zone, platform, w = key
        n_in = inflow.get(key, 0)
        n_out = outflow.get(key, 0)
        if n_in == 0:
            dropped += 1
            continue
        stats.append(
            FlowStats(
                zone=zone,
                platform=platform,
                window=w,
                outflow=n_out,
                inflow=n_in,
                ro=n_out / n_in,
                dropoff_density=n_in / zone_map[zone].area_sqmi,
            )
        )
    return FlowComputation(tuple(stats), dropped, rejected)


def _as_zone_map(zones: Mapping[str, ZoneMeta] | Sequence[ZoneMeta]) -> dict[str, ZoneMeta]:
    if isinstance(zones, Mapping):
        return dict(zones)
    out: dict[str, ZoneMeta] = {}
    for z in zones:
        if z.zone in out:
            raise DomainError(f"duplicate zone id {z.zone!r}")
        out[z.zone] = z
    return out


def synth_market(
    od: ODMatrix,
    hours: float,
    seed: int,
    platform: str = "synthetic",
    start: datetime = datetime(2020, 1, 1),
) -> list[TripRecord]:
    """Draw a trip stream from an access-limited OD process.

    Each pair (i, j) contributes Poisson(hours * access[i] * demand[i][j])
    trips with timestamps uniform over the horizon.  Deterministic given the
    seed (counter-based generator); output sorted by timestamp.
    """
    if hours <= 0.0:
        raise DomainError("hours must be > 0")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    trips: list[TripRecord] = []
    for i, origin in enumerate(od.zones):
        for j, dest in enumerate(od.zones):
            mean = hours * od.access[i] * od.demand[i][j]
            if mean == 0.0:
                continue
            count = int(rng.poisson(mean))
            offsets = rng.uniform(0.0, hours, size=count)
            for off in offsets:
                trips.append(
                    TripRecord(
                        pickup_zone=origin,
                        dropoff_zone=dest,
                        platform=platform,
                        timestamp=start + timedelta(hours=float(off)),
                    )
                )
    trips.sort(key=lambda tr: (tr.timestamp, tr.pickup_zone, tr.dropoff_zone))
    return trips


def _aggregate_ro(stats: Iterable[FlowStats], zone: str) -> tuple[int, int]:
    n_out = sum(s.outflow for s in stats if s.zone == zone)
    n_in = sum(s.inflow for s in stats if s.zone == zone)
    return n_out, n_in


def access_ratio_estimates(
    stats: Sequence[FlowStats],
    zone: str,
    other: str,
    stats_prime: Optional[Sequence[FlowStats]] = None,
) -> AccessRatioReport:
    """Estimate access ratios from relative outflows of a two-region market.

    With balanced OD demand the aggregated ``RO`` of ``zone`` estimates
    ``A_zone / A_other``.  Given a second snapshot of the same two regions
    with similarly unbalanced demand, the double ratio ``RO / RO'`` estimates
    ``(A_zone/A_other) / (A'_zone/A'_other)`` even without balance.
    """
    n_out, n_in = _aggregate_ro(stats, zone)
    if n_in == 0 or n_out == 0:
        raise DomainError(f"zone {zone!r} has zero inflow or outflow; RO undefined")
    ro = n_out / n_in
    ro_prime = None
    double = None
    if stats_prime is not None:
        p_out, p_in = _aggregate_ro(stats_prime, zone)
        if p_in == 0 or p_out == 0:
            raise DomainError(f"zone {zone!r} has zero flow in the second snapshot")
        ro_prime = p_out / p_in
        double = ro / ro_prime
    return AccessRatioReport(
        zone=zone, other=other, ro=ro, access_ratio=ro, ro_prime=ro_prime, double_ratio=double
    )


def net_driver_flows(stats: Sequence[FlowStats]) -> dict[str, int]:
    """Per-zone external net driver flow needed for a steady state (inflow - outflow)."""
    net: dict[str, int] = {}
    for s in stats:
        net[s.zone] = net.get(s.zone, 0) + (s.inflow - s.outflow)
    return dict(sorted(net.items()))


def build_panel(
    stats: Sequence[FlowStats],
    zones: Mapping[str, ZoneMeta] | Sequence[ZoneMeta],
    platform_sizes: Optional[Mapping[tuple[str, str], float]] = None,
) -> tuple[list[PanelRow], int]:
    """Turn flow cells into regression rows with logs, squares, and interactions.

    Numeric columns: ``ro``, ``log_ro``, ``log_dropoff_density`` and its
    square, plus ``log_pop_density`` when the zone has a population density,
    and ``size``, ``log_size``, ``log_size_x_log_pop_density`` when
    ``platform_sizes`` (keyed by platform and year-month) is given.
    Fixed-effect keys: zone, group, platform, zone_type, window.  Cells whose
    logs are undefined or whose size lookup fails are skipped and counted.
    """
    zone_map = _as_zone_map(zones)
    rows: list[PanelRow] = []
    skipped = 0
    for s in stats:
        meta = zone_map.get(s.zone)
        if meta is None or s.ro <= 0.0 or s.dropoff_density <= 0.0:
            skipped += 1
            continue
        values: dict[str, float] = {
            "ro": s.ro,
            "log_ro": math.log(s.ro),
            "log_dropoff_density": math.log(s.dropoff_density),
            "log_dropoff_density_sq": math.log(s.dropoff_density) ** 2,
        }
        if meta.pop_density is not None:
            values["log_pop_density"] = math.log(meta.pop_density)
        if platform_sizes is not None:
            size = platform_sizes.get((s.platform, s.window[:7]))
            if size is None or size <= 0.0:
                skipped += 1
                continue
            values["size"] = size
            values["log_size"] = math.log(size)
            if meta.pop_density is not None:
                values["log_size_x_log_pop_density"] = (
                    math.log(size) * math.log(meta.pop_density)
                )
        rows.append(
            PanelRow(
                values=values,
                fe_keys={
                    "zone": s.zone,
                    "group": meta.group,
                    "platform": s.platform,
                    "zone_type": meta.zone_type,
                    "window": s.window,
                },
            )
        )
    return rows, skipped


def read_trips_csv(source: TextIO) -> tuple[list[TripRecord], int]:
    """Parse the trip CSV; malformed rows are counted, not fatal."""
    reader = csv.DictReader(source)
    _check_header(reader.fieldnames, TRIPS_HEADER, "trips")
    trips: list[TripRecord] = []
    bad = 0
    for raw in reader:
        try:
            trips.append(
                TripRecord(
                    pickup_zone=raw["pickup_zone"].strip(),
                    dropoff_zone=raw["dropoff_zone"].strip(),
                    platform=raw["platform"].strip(),
                    timestamp=datetime.fromisoformat(raw["timestamp"].strip()),
                )
            )
        except (ValueError, AttributeError, DomainError):
            bad += 1
    return trips, bad


def read_zones_csv(source: TextIO) -> list[ZoneMeta]:
    reader = csv.DictReader(source)
    _check_header(reader.fieldnames, ZONES_HEADER, "zones")
    zones = []
    for raw in reader:
        pop = raw.get("pop_density", "").strip()
        zones.append(
            ZoneMeta(
                zone=raw["zone"].strip(),
                area_sqmi=float(raw["area_sqmi"]),
                group=raw["group"].strip(),
                zone_type=raw["zone_type"].strip(),
                pop_density=float(pop) if pop else None,
            )
        )
    return zones


def _check_header(actual, expected: list[str], what: str) -> None:
    if actual is None or list(actual) != expected:
        raise DomainError(f"{what} CSV must have header {','.join(expected)}")


def _fmt(v: float) -> str:
    return format(v, ".17g")


def write_flows_csv(stats: Sequence[FlowStats], sink: TextIO) -> None:
    sink.write(",".join(FLOWS_HEADER) + "\n")
    for s in stats:
        sink.write(
            f"{s.zone},{s.platform},{s.window},{s.outflow},{s.inflow},"
            f"{_fmt(s.ro)},{_fmt(s.dropoff_density)}\n"
        )


def write_panel_csv(rows: Sequence[PanelRow], sink: TextIO) -> None:
    """Panel CSV: fixed-effect keys first, then the union of numeric columns."""
    if not rows:
        raise DomainError("no panel rows to write")
    fe_names = sorted({k for r in rows for k in r.fe_keys})
    val_names = sorted({k for r in rows for k in r.values})
    sink.write(",".join(fe_names + val_names) + "\n")
    for r in rows:
        fe_part = [str(r.fe_keys.get(k, "")) for k in fe_names]
        val_part = [_fmt(r.values[k]) if k in r.values else "" for k in val_names]
        sink.write(",".join(fe_part + val_part) + "\n")


def read_panel_csv(source: TextIO) -> list[PanelRow]:
    """Read a panel CSV; columns that parse as float on every row become numeric."""
    reader = csv.DictReader(source)
    if reader.fieldnames is None:
        raise DomainError("panel CSV is empty")
    raw_rows = list(reader)
    if not raw_rows:
        raise DomainError("panel CSV has no data rows")
    numeric: dict[str, bool] = {}
    for name in reader.fieldnames:
        ok = True
        for raw in raw_rows:
            cell = (raw[name] or "").strip()
            if cell == "":
                continue
            try:
                float(cell)
            except ValueError:
                ok = False
                break
        numeric[name] = ok
    rows: list[PanelRow] = []
    for raw in raw_rows:
        values: dict[str, float] = {}
        fe_keys: dict[str, str] = {}
        for name in reader.fieldnames:
            cell = (raw[name] or "").strip()
            if numeric[name]:
                if cell != "":
                    values[name] = float(cell)
            else:
                fe_keys[name] = cell
        rows.append(PanelRow(values=values, fe_keys=fe_keys))
    return rows
