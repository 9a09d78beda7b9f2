"""Command-line interface.

Thin client over the library: each subcommand parses flags (optionally
merged with a flat key-value config file), calls one core operation, and
writes a CSV report.  All numeric output uses 17 significant digits so that
downstream comparisons are exact, and every seeded command is byte-identical
across re-runs.

Exit codes: 0 success, 1 usage or configuration error, 2 model outcome
(e.g. no all-regions equilibrium, unidentified kink), 3 data error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from typing import Optional, Sequence

from . import __version__, econometrics, equilibrium, flows, optimum, simulate
from .errors import ConvergenceError, DensityEqError, DomainError, EstimationError
from .market import MarketPrimitives

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_MODEL = 2
EXIT_DATA = 3

DEFAULT_SWEEP_GRID = (27.0, 30.0, 50.0, 100.0, 1e3, 1e6)

SEED_ENV_VAR = "DENSITYEQ_SEED"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse default exits 2; the contract is 1
        raise UsageError(message)


def _fmt(v: float) -> str:
    return format(v, ".17g")


def _csv_floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x.strip() != ""]
    except ValueError as exc:
        raise UsageError(f"expected comma-separated numbers, got {text!r}") from exc


def _load_config(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    try:
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, 1):
                line = raw.strip()
                if not line or line.startswith("#"):
                    continue
                if "=" not in line:
                    raise UsageError(f"{path}:{lineno}: expected 'key = value'")
                key, _, value = line.partition("=")
                values[key.strip()] = value.strip()
    except OSError as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from exc
    return values


def _merge_config(args: argparse.Namespace) -> None:
    """Fill flags still at their defaults from --config; unknown keys rejected."""
    if not getattr(args, "config", None):
        return
    subparser = getattr(args, "_subparser")
    known: dict[str, argparse.Action] = {}
    for action in subparser._actions:
        if action.dest in ("help", "config") or not action.option_strings:
            continue
        known[action.option_strings[-1].lstrip("-")] = action
    for key, raw in _load_config(args.config).items():
        if key not in known:
            raise UsageError(f"unknown config key {key!r}")
        action = known[key]
        if getattr(args, action.dest) != subparser.get_default(action.dest):
            continue  # explicit flag wins over config
        if isinstance(action, argparse.BooleanOptionalAction):
            if raw.lower() not in ("true", "false"):
                raise UsageError(f"config key {key!r} must be true or false")
            value = raw.lower() == "true"
        elif action.type is not None:
            try:
                value = action.type(raw)
            except ValueError as exc:
                raise UsageError(f"config key {key!r}: {exc}") from exc
        else:
            value = raw
        if action.choices is not None and value not in action.choices:
            raise UsageError(
                f"config key {key!r} must be one of {sorted(action.choices)}"
            )
        setattr(args, action.dest, value)


def _resolve_seed(value) -> int:
    if value is not None:
        return int(value)
    env = os.environ.get(SEED_ENV_VAR)
    return int(env) if env else 0


def _open_out(path: Optional[str]):
    if path is None or path == "-":
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline="\n"), True


def _write(path: Optional[str], text: str) -> None:
    sink, close = _open_out(path)
    try:
        sink.write(text)
    finally:
        if close:
            sink.close()


def _market_from_args(args) -> MarketPrimitives:
    if args.lam is None:
        raise UsageError("--lambda is required")
    lambdas = _csv_floats(args.lam)
    if args.t is None:
        raise UsageError("--t is required")
    sizes = _csv_floats(args.t)
    if args.N is None:
        raise UsageError("--N is required")
    try:
        return MarketPrimitives.from_vectors(lambdas, sizes, total_drivers=float(args.N))
    except DensityEqError as exc:
        raise UsageError(str(exc)) from exc


def cmd_eq(args) -> int:
    market = _market_from_args(args)
    sizes = market.sizes()
    if market.num_regions == 2 and sizes[0] == sizes[1] and sizes[0] > 0:
        lam1, lam2 = market.lambdas()
        result = equilibrium.solve_two_region(lam1, lam2, market.total_drivers, sizes[0])
    else:
        result = equilibrium.solve_all_regions(market)
    all_regions = isinstance(result, equilibrium.EquilibriumResult)
    diagnostic = None
    if not all_regions:
        diagnostic = result.reason
        result = equilibrium.enumerate_equilibria(market).selected

    lines = ["region,drivers,wait,ride_rate,access,kappa_vs_first"]
    first = result.served_set[0]
    for i, (n, o) in enumerate(zip(result.allocation.drivers, result.outcomes)):
        wait = "inf" if math.isinf(o.wait) else _fmt(o.wait)
        kappa = _fmt(result.undersupply(i, first)) if o.access > 0 else "inf"
        lines.append(
            f"{i},{_fmt(n)},{wait},{_fmt(o.ride_rate)},{_fmt(o.access)},{kappa}"
        )
    _write(args.out, "\n".join(lines) + "\n")
    if not all_regions:
        print(
            f"no all-regions equilibrium ({diagnostic}); "
            f"selected equilibrium serves regions {list(result.served_set)}",
            file=sys.stderr,
        )
        return EXIT_MODEL
    return EXIT_OK


def cmd_sweep(args) -> int:
    grid = _csv_floats(args.grid) if args.grid else list(DEFAULT_SWEEP_GRID)
    kept = [g for g in grid if g >= optimum.SERVICE_DENSITY_THRESHOLD]
    if len(kept) < len(grid):
        print(
            f"warning: trimmed {len(grid) - len(kept)} grid point(s) below "
            f"{optimum.SERVICE_DENSITY_THRESHOLD}",
            file=sys.stderr,
        )
    if not kept:
        raise UsageError("sweep grid is empty after trimming")
    table = optimum.density_sweep(kept, jobs=args.jobs)
    lines = ["lambda_tilde,price,wage,access,margin"]
    for p in table.points:
        lines.append(
            f"{_fmt(p.lambda_tilde)},{_fmt(p.price)},{_fmt(p.wage)},"
            f"{_fmt(p.access)},{_fmt(p.margin)}"
        )
    d = table.diagnostics
    lines.append(
        "# diagnostics: "
        f"all_pass={str(d.all_pass).lower()} "
        f"wage_nonincreasing={str(d.wage_nonincreasing).lower()} "
        f"price_nonincreasing={str(d.price_nonincreasing).lower()} "
        f"margin_nondecreasing={str(d.margin_nondecreasing).lower()} "
        f"access_nondecreasing={str(d.access_nondecreasing).lower()} "
        f"log_access_concave={str(d.log_access_concave).lower()}"
    )
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_thicken(args) -> int:
    market = _market_from_args(args)
    gammas = _csv_floats(args.gammas) if args.gammas else [1.0, 2.0, 5.0, 10.0, 100.0]
    report = equilibrium.comparative_thickness(market, gammas, args.mode)
    lines = ["gamma,i,j,access_ratio_j_over_i,kappa_j_vs_i"]
    for k, gamma in enumerate(report.gammas):
        for (i, j), series in sorted(report.access_ratios.items()):
            kappa = report.undersupply[(j, i)][k]
            lines.append(f"{_fmt(gamma)},{i},{j},{_fmt(series[k])},{_fmt(kappa)}")
    _write(args.out, "\n".join(lines) + "\n")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.n is None or args.lam is None or args.tprime is None:
        raise UsageError("--n, --lambda, and --tprime are required")
    cfg = simulate.SimConfig(
        drivers=int(args.n),
        arrival_rate=float(args.lam),
        t_prime=float(args.tprime),
        num_arrivals=int(args.arrivals) if args.arrivals else 1_000_000,
        seed=_resolve_seed(args.seed),
        replication=int(args.replication) if args.replication else 0,
    )
    report = simulate.simulate_region(cfg)
    _write(args.out, report.CSV_HEADER + "\n" + report.to_csv_row() + "\n")
    print(report.to_text(), file=sys.stderr)
    return EXIT_OK


def cmd_flows(args) -> int:
    if args.trips is None or args.zones is None:
        raise UsageError("--trips and --zones are required")
    try:
        with open(args.trips, encoding="utf-8") as fh:
            trips, malformed = flows.read_trips_csv(fh)
        with open(args.zones, encoding="utf-8") as fh:
            zone_list = flows.read_zones_csv(fh)
    except OSError as exc:
        raise DomainError(f"cannot read input: {exc}") from exc
    comp = flows.compute_flows(
        trips, zone_list, window=args.window, exclude_intra=args.exclude_intra
    )
    import io

    buf = io.StringIO()
    flows.write_flows_csv(comp.stats, buf)
    _write(args.out, buf.getvalue())
    if malformed or comp.rejected_rows or comp.dropped_zero_inflow:
        print(
            f"warning: {malformed} malformed row(s), {comp.rejected_rows} row(s) with "
            f"unknown zones, {comp.dropped_zero_inflow} zero-inflow cell(s) dropped",
            file=sys.stderr,
        )
    if args.panel_out:
        sizes = None
        if args.sizes:
            sizes = _read_sizes(args.sizes)
        rows, skipped = flows.build_panel(comp.stats, zone_list, platform_sizes=sizes)
        if not rows:
            raise DomainError("panel is empty after skipping undefined rows")
        buf = io.StringIO()
        flows.write_panel_csv(rows, buf)
        _write(args.panel_out, buf.getvalue())
        if skipped:
            print(f"warning: {skipped} panel row(s) skipped", file=sys.stderr)
    return EXIT_OK


def _read_sizes(path: str) -> dict[tuple[str, str], float]:
    import csv as _csv

    sizes: dict[tuple[str, str], float] = {}
    with open(path, encoding="utf-8") as fh:
        reader = _csv.DictReader(fh)
        expected = ["platform", "month", "rides"]
        if reader.fieldnames is None or list(reader.fieldnames) != expected:
            raise DomainError(f"sizes CSV must have header {','.join(expected)}")
        for raw in reader:
            sizes[(raw["platform"].strip(), raw["month"].strip())] = float(raw["rides"])
    return sizes


def cmd_regress(args) -> int:
    if args.panel is None:
        raise UsageError("--panel is required")
    if args.response is None:
        raise UsageError("--response is required")
    try:
        with open(args.panel, encoding="utf-8") as fh:
            rows = flows.read_panel_csv(fh)
    except OSError as exc:
        raise DomainError(f"cannot read panel: {exc}") from exc

    regressors = [r for r in (args.regressors or "").split(",") if r]
    fe = [f for f in (args.fe or "").split(",") if f]
    if args.interact:
        fe.extend(x for x in args.interact.split(",") if x)

    if args.model == "ols":
        fit = econometrics.ols_fe(rows, args.response, regressors, fe)
    elif args.model == "logit":
        fit = econometrics.logit_mle(rows, args.response, regressors, fe)
    elif args.model == "nls-kink":
        fit = econometrics.nls_kink(
            rows,
            form=args.form or "log",
            response=args.response,
            density=args.density or "log_pop_density",
            size=args.size or "size",
        )
    else:
        raise UsageError(f"unknown model {args.model!r}")

    lines = ["term,estimate,se,t"]
    for term in fit.coefficients:
        lines.append(
            f"{term},{_fmt(fit.coefficients[term])},{_fmt(fit.std_errors[term])},"
            f"{_fmt(fit.t_stat(term))}"
        )
    summary = [f"# model={fit.method} n={fit.n_obs} dof={fit.dof}"]
    if not math.isnan(fit.r_squared):
        summary.append(f"# r_squared={_fmt(fit.r_squared)}")
    if fit.log_likelihood is not None:
        summary.append(
            f"# log_likelihood={_fmt(fit.log_likelihood)} aic={_fmt(fit.aic)} "
            f"iterations={fit.iterations} gradient_norm={_fmt(fit.gradient_norm)}"
        )
    if fit.a_max is not None:
        summary.append(f"# a_max={_fmt(fit.a_max)}")
    _write(args.out, "\n".join(lines + summary) + "\n")
    return EXIT_OK


def build_parser() -> _Parser:
    parser = _Parser(prog="densityeq", description=__doc__)
    parser.add_argument("--version", action="version", version=f"densityeq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p: _Parser) -> None:
        p.add_argument("--config", help="flat key-value config file (key = value lines)")
        p.add_argument("--out", help="output path (default stdout)")

    p_eq = sub.add_parser("eq", help="solve the driver equilibrium for fixed N")
    p_eq.add_argument("--lambda", dest="lam", help="comma-separated demand rates")
    p_eq.add_argument("--t", help="comma-separated region sizes")
    p_eq.add_argument("--N", help="total drivers")
    common(p_eq)
    p_eq.set_defaults(func=cmd_eq, _subparser=p_eq)

    p_sw = sub.add_parser("sweep", help="platform joint optimum along a density grid")
    p_sw.add_argument("--grid", help="comma-separated normalized densities (>= 27)")
    p_sw.add_argument("--jobs", type=int, help="parallel workers for grid points")
    common(p_sw)
    p_sw.set_defaults(func=cmd_sweep, _subparser=p_sw)

    p_th = sub.add_parser("thicken", help="access ratios along a thickening grid")
    p_th.add_argument("--lambda", dest="lam", help="comma-separated demand rates")
    p_th.add_argument("--t", help="comma-separated region sizes")
    p_th.add_argument("--N", help="total drivers")
    p_th.add_argument("--gammas", help="comma-separated thickening factors (>= 1)")
    p_th.add_argument(
        "--mode", choices=["one_sided", "two_sided"], default="two_sided"
    )
    common(p_th)
    p_th.set_defaults(func=cmd_thicken, _subparser=p_th)

    p_sim = sub.add_parser("simulate", help="discrete-event wait-time validation")
    p_sim.add_argument("--n", help="number of drivers")
    p_sim.add_argument("--lambda", dest="lam", help="arrival rate per hour")
    p_sim.add_argument("--tprime", help="circle circumference in travel time")
    p_sim.add_argument("--arrivals", help="number of arrivals (default 1e6)")
    p_sim.add_argument("--seed", help=f"RNG seed (fallback ${SEED_ENV_VAR}, then 0)")
    p_sim.add_argument("--replication", help="replication index (default 0)")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate, _subparser=p_sim)

    p_fl = sub.add_parser("flows", help="relative outflows from a trip CSV")
    p_fl.add_argument("--trips", help="trip CSV path")
    p_fl.add_argument("--zones", help="zone metadata CSV path")
    p_fl.add_argument("--window", choices=list(flows.WINDOWS), default="month")
    p_fl.add_argument(
        "--exclude-intra",
        action=argparse.BooleanOptionalAction,
        default=True,
        help="drop trips that start and end in the same zone (default)",
    )
    p_fl.add_argument("--panel-out", help="also write a regression panel CSV here")
    p_fl.add_argument("--sizes", help="platform sizes CSV (platform,month,rides)")
    common(p_fl)
    p_fl.set_defaults(func=cmd_flows, _subparser=p_fl)

    p_rg = sub.add_parser("regress", help="fit a regression on a panel CSV")
    p_rg.add_argument("--model", choices=["ols", "logit", "nls-kink"], default="ols")
    p_rg.add_argument("--panel", help="panel CSV path")
    p_rg.add_argument("--response", help="response column name")
    p_rg.add_argument("--regressors", help="comma-separated regressor columns")
    p_rg.add_argument("--fe", help="comma-separated fixed-effect keys")
    p_rg.add_argument("--interact", help="interacted fixed effects, e.g. group:platform")
    p_rg.add_argument("--form", choices=["log", "linear"], help="kink transform")
    p_rg.add_argument("--density", help="density column for nls-kink")
    p_rg.add_argument("--size", help="size column for nls-kink")
    common(p_rg)
    p_rg.set_defaults(func=cmd_regress, _subparser=p_rg)

    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _merge_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (EstimationError,) as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except ConvergenceError as exc:
        print(f"model error: {exc}", file=sys.stderr)
        return EXIT_MODEL
    except DensityEqError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except OSError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
