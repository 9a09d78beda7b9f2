"""FastAPI service exposing the core solvers to long-running clients.

The service is a thin wrapper: every endpoint validates a request model,
calls the corresponding library operation, and maps the result back.  State
is never kept between requests, so the app is safe behind any number of
workers.  Run with ``uvicorn densityeq.service:app``.
"""

from __future__ import annotations

import math
from datetime import datetime

from fastapi import FastAPI, HTTPException

from .. import econometrics, equilibrium, flows, optimum, simulate
from ..errors import DensityEqError, EstimationError
from ..market import MarketPrimitives
from . import schemas


def _market_from(spec: schemas.MarketSpec) -> MarketPrimitives:
    try:
        return MarketPrimitives.from_vectors(
            spec.lambdas,
            spec.sizes,
            total_drivers=spec.total_drivers,
            reservation_wage=spec.reservation_wage,
            price_sensitivity=spec.price_sensitivity,
        )
    except DensityEqError as exc:
        raise HTTPException(status_code=400, detail=str(exc)) from exc


def _outcome_models(eq: equilibrium.EquilibriumResult) -> list[schemas.RegionOutcomeModel]:
    models = []
    for n, o in zip(eq.allocation.drivers, eq.outcomes):
        models.append(
            schemas.RegionOutcomeModel(
                drivers=n,
                wait=None if math.isinf(o.wait) else o.wait,
                ride_rate=o.ride_rate,
                access=o.access,
                idle=o.idle if n > 0 else None,
                pickup=None if math.isinf(o.pickup) else o.pickup,
            )
        )
    return models


def create_app() -> FastAPI:
    app = FastAPI(
        title="densityeq",
        description="Spatial ride-hailing equilibria, platform optima, and flow analytics",
        version="0.1.0",
    )

    @app.get("/healthz")
    def healthz() -> dict:
        return {"status": "ok"}

    @app.post("/v1/equilibrium", response_model=schemas.EquilibriumResponse)
    def solve_equilibrium(req: schemas.EquilibriumRequest) -> schemas.EquilibriumResponse:
        market = _market_from(req.market)
        if market.total_drivers is None:
            raise HTTPException(400, "equilibrium solving requires total_drivers")
        try:
            result = equilibrium.solve_all_regions(market)
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        if isinstance(result, equilibrium.EquilibriumResult):
            return schemas.EquilibriumResponse(
                all_regions=True,
                served=list(result.served_set),
                common_wait=result.common_wait,
                outcomes=_outcome_models(result),
            )
        if not req.enumerate_partial:
            raise HTTPException(409, f"no all-regions equilibrium: {result.reason}")
        selected = equilibrium.enumerate_equilibria(market).selected
        return schemas.EquilibriumResponse(
            all_regions=False,
            served=list(selected.served_set),
            common_wait=selected.common_wait,
            outcomes=_outcome_models(selected),
            provisional=selected.provisional,
            diagnostic=result.reason,
        )

    @app.post("/v1/optimum", response_model=schemas.OptimumResponse)
    def solve_optimum(req: schemas.OptimumRequest) -> schemas.OptimumResponse:
        market = _market_from(req.market)
        try:
            optima = optimum.optimal_joint_market(market)
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        return schemas.OptimumResponse(
            regions=[schemas.RegionOptimumModel(**vars(o)) for o in optima]
        )

    @app.post("/v1/sweep", response_model=schemas.SweepResponse)
    def run_sweep(req: schemas.SweepRequest) -> schemas.SweepResponse:
        try:
            table = optimum.density_sweep(req.grid, jobs=req.jobs)
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        d = table.diagnostics
        return schemas.SweepResponse(
            points=[schemas.SweepPointModel(**vars(p)) for p in table.points],
            diagnostics=schemas.SweepDiagnosticsModel(
                wage_nonincreasing=d.wage_nonincreasing,
                price_nonincreasing=d.price_nonincreasing,
                margin_nondecreasing=d.margin_nondecreasing,
                access_nondecreasing=d.access_nondecreasing,
                log_access_concave=d.log_access_concave,
                concavity_residuals=list(d.concavity_residuals),
            ),
        )

    @app.post("/v1/thicken", response_model=schemas.ThickenResponse)
    def run_thicken(req: schemas.ThickenRequest) -> schemas.ThickenResponse:
        market = _market_from(req.market)
        try:
            report = equilibrium.comparative_thickness(market, req.gammas, req.mode)
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        return schemas.ThickenResponse(
            gammas=list(report.gammas),
            mode=report.mode,
            access_ratios=[
                schemas.PairSeries(i=i, j=j, values=list(v))
                for (i, j), v in sorted(report.access_ratios.items())
            ],
            undersupply=[
                schemas.PairSeries(i=j, j=i, values=list(v))
                for (j, i), v in sorted(report.undersupply.items())
            ],
        )

    @app.post("/v1/simulate", response_model=schemas.SimulateResponse)
    def run_simulation(req: schemas.SimulateRequest) -> schemas.SimulateResponse:
        try:
            cfg = simulate.SimConfig(
                drivers=req.drivers,
                arrival_rate=req.arrival_rate,
                t_prime=req.t_prime,
                num_arrivals=req.num_arrivals,
                seed=req.seed,
                replication=req.replication,
            )
            report = simulate.simulate_region(cfg)
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        fields = (
            "mean_idle mean_pickup mean_total se_idle se_pickup se_total "
            "predicted_idle predicted_pickup predicted_total "
            "rel_err_idle rel_err_pickup rel_err_total rng_algorithm"
        ).split()
        return schemas.SimulateResponse(**{f: getattr(report, f) for f in fields})

    @app.post("/v1/flows", response_model=schemas.FlowsResponse)
    def run_flows(req: schemas.FlowsRequest) -> schemas.FlowsResponse:
        try:
            zones = [flows.ZoneMeta(**z.model_dump()) for z in req.zones]
            trips = [
                flows.TripRecord(
                    pickup_zone=t.pickup_zone,
                    dropoff_zone=t.dropoff_zone,
                    platform=t.platform,
                    timestamp=datetime.fromisoformat(t.timestamp),
                )
                for t in req.trips
            ]
            comp = flows.compute_flows(trips, zones, req.window, req.exclude_intra)
        except (DensityEqError, ValueError) as exc:
            raise HTTPException(400, str(exc)) from exc
        return schemas.FlowsResponse(
            stats=[schemas.FlowStatsModel(**vars(s)) for s in comp.stats],
            dropped_zero_inflow=comp.dropped_zero_inflow,
            rejected_rows=comp.rejected_rows,
        )

    @app.post("/v1/regress", response_model=schemas.RegressResponse)
    def run_regression(req: schemas.RegressRequest) -> schemas.RegressResponse:
        rows = [
            econometrics.PanelRow(values=r.values, fe_keys=r.fe_keys) for r in req.rows
        ]
        try:
            if req.model == "ols":
                fit = econometrics.ols_fe(rows, req.response, req.regressors, req.fe)
            elif req.model == "logit":
                fit = econometrics.logit_mle(rows, req.response, req.regressors, req.fe)
            else:
                fit = econometrics.nls_kink(
                    rows,
                    form=req.form,
                    response=req.response,
                    density=req.density,
                    size=req.size,
                )
        except EstimationError as exc:
            raise HTTPException(422, str(exc)) from exc
        except DensityEqError as exc:
            raise HTTPException(400, str(exc)) from exc
        terms = [
            schemas.TermEstimate(
                term=k,
                estimate=fit.coefficients[k],
                se=fit.std_errors[k],
                t=fit.t_stat(k),
            )
            for k in fit.coefficients
        ]
        return schemas.RegressResponse(
            model=req.model,
            terms=terms,
            n_obs=fit.n_obs,
            r_squared=None if math.isnan(fit.r_squared) else fit.r_squared,
            log_likelihood=fit.log_likelihood,
            aic=fit.aic,
            a_max=fit.a_max,
            iterations=fit.iterations,
        )

    return app


app = create_app()
