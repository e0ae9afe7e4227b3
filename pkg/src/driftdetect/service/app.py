"""HTTP surface of the detection toolkit.

Every endpoint wraps one core operation; computation is synchronous and
stateless, so the service scales by running more workers. Package errors
map onto JSON bodies carrying their kind (config/data/numerical), which the
CLI translates into exit codes.
"""

from __future__ import annotations

import numpy as np
from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse

from .. import __version__
from ..calibrate import MortalitySeries, calibrate, residual_series
from ..errors import ConfigError, DriftDetectError, NumericalError
from ..model import parse_config, validate
from ..pipeline import DetectionReport, run_detection
from ..posterior import gsr_init, gsr_step
from ..simulate import estimate_risk_profile, run_threshold_rule, sample_path
from ..freeboundary import solve_threshold
from ..tilt import effective_diffusion, solve_tilt
from . import schemas

__all__ = ["app", "create_app"]


def _series_from_rows(rows: list[schemas.SeriesRow]) -> MortalitySeries:
    years = np.array([r.year for r in rows])
    mu = np.array([[r.mu_male, r.mu_female] for r in rows])
    return MortalitySeries(years, mu)


def _calibration_payload(result, series) -> schemas.CalibrateResponse:
    resid = residual_series(series, result)
    years = range(result.window[0], result.window[1] + 1)
    return schemas.CalibrateResponse(
        a0=result.a0.tolist(),
        a1=result.a1.tolist(),
        sigma1=result.sigma1,
        sigma2=result.sigma2,
        rho=result.rho,
        window=result.window,
        n_increments=result.n_increments,
        residuals=[
            schemas.ResidualRow(year=y, x_male=float(x[0]), x_female=float(x[1]))
            for y, x in zip(years, resid)
        ],
    )


def _detect_payload(report: DetectionReport, calibration: schemas.CalibrateResponse) -> schemas.DetectResponse:
    return schemas.DetectResponse(
        alarm_year=report.alarm_year,
        A_star=report.A_star,
        threshold_solved=report.threshold_solved,
        B=report.B,
        K=report.tilt.K,
        z=report.tilt.z.tolist(),
        r_used=report.r_used.tolist(),
        recursion_start=report.recursion_start,
        calibration=calibration,
        series=[schemas.DetectionRow(**row) for row in report.series_rows],
        mortality=[
            schemas.MortalityRow(year=int(y), mu_male=float(m[0]), mu_female=float(m[1]))
            for y, m in zip(report.years, report.mu)
        ],
        residuals=[
            schemas.ResidualRow(year=int(y), x_male=float(x[0]), x_female=float(x[1]))
            for y, x in zip(report.years, report.residuals)
        ],
        config=report.config,
    )


def create_app() -> FastAPI:
    app = FastAPI(
        title="driftdetect",
        version=__version__,
        description="Bayesian quickest detection of drift changes in correlated jump-diffusions",
    )

    @app.exception_handler(DriftDetectError)
    async def _package_error(request: Request, exc: DriftDetectError):
        status = 500 if isinstance(exc, NumericalError) else 400
        return JSONResponse(status_code=status, content={"kind": exc.kind, "message": str(exc)})

    @app.exception_handler(ValueError)
    async def _value_error(request: Request, exc: ValueError):
        return JSONResponse(status_code=400, content={"kind": "config", "message": str(exc)})

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.post("/validate", response_model=schemas.ValidateResponse)
    def validate_config(req: schemas.ValidateRequest):
        bundle = parse_config(req.config)
        model = bundle.model() if bundle.sigma is not None and bundle.r is not None else None
        report = validate(model, bundle.prior, bundle.cost)
        return schemas.ValidateResponse(ok=report.ok, violations=list(report.violations))

    @app.post("/tilt", response_model=schemas.TiltResponse)
    def tilt_endpoint(req: schemas.TiltRequest):
        bundle = parse_config(req.config)
        model = bundle.model()
        tilt = solve_tilt(model)
        post = None
        if tilt.post_jumps is not None:
            post = schemas.PostJumpsOut(
                intensity_post=tilt.post_jumps.intensity_post,
                jump_means_post=tilt.post_jumps.jump_means_post.tolist(),
            )
        return schemas.TiltResponse(
            z=tilt.z.tolist(), K=tilt.K, B=effective_diffusion(model, tilt), post_jumps=post
        )

    @app.post("/threshold", response_model=schemas.ThresholdResponse)
    def threshold_endpoint(req: schemas.ThresholdRequest):
        bundle = parse_config(req.config)
        model = bundle.model()
        if model.jumps is not None and model.jumps.intensity_pre > 0.0:
            raise ConfigError("optimal threshold solving covers diffusion-only models")
        if bundle.prior.kind != "exponential":
            raise ConfigError("optimal threshold solving needs the exponential prior")
        tilt = solve_tilt(model)
        B = effective_diffusion(model, tilt)
        sol = solve_threshold(B, bundle.prior.rate, bundle.cost.c)
        xs = np.linspace(0.0, 1.0, req.value_points)
        return schemas.ThresholdResponse(
            A_star=sol.A_star,
            root_found=sol.root_found,
            B=B,
            K=tilt.K,
            z=tilt.z.tolist(),
            rate=sol.rate,
            c=sol.c,
            y_curve=schemas.Curve(
                x=sol.y_curve[:, 0].tolist(), y=sol.y_curve[:, 1].tolist()
            ),
            value_curve=schemas.Curve(
                x=xs.tolist(), y=[sol.value(float(v)) for v in xs]
            ),
        )

    @app.post("/calibrate", response_model=schemas.CalibrateResponse)
    def calibrate_endpoint(req: schemas.CalibrateRequest):
        series = _series_from_rows(req.rows)
        result = calibrate(series, req.window)
        return _calibration_payload(result, series)

    @app.post("/detect", response_model=schemas.DetectResponse)
    def detect_endpoint(req: schemas.DetectRequest):
        series = _series_from_rows(req.rows)
        bundle = parse_config(req.config)
        report = run_detection(
            series,
            bundle,
            tuple(req.calib_window),
            tuple(req.monitor_window),
            threshold=req.threshold,
            r_override=req.r,
        )
        calibration = _calibration_payload(report.calibration, series)
        return _detect_payload(report, calibration)

    @app.post("/simulate", response_model=schemas.SimulateResponse)
    def simulate_endpoint(req: schemas.SimulateRequest):
        bundle = parse_config(req.config)
        model = bundle.model()
        tilt = solve_tilt(model)
        path = sample_path(
            model, bundle.prior, tilt, req.horizon, req.dt, req.seed, regime=req.regime
        )
        alarm = None
        if req.threshold is not None:
            alarm = run_threshold_rule(path, tilt, bundle.prior, req.threshold)
        state = gsr_init(bundle.prior)
        psi, pi = [state.psi], [state.pi]
        for k in range(path.increments.shape[0]):
            state = gsr_step(state, tilt, path.increments[k], bundle.prior, dt=path.dt)
            psi.append(state.psi)
            pi.append(state.pi)
        return schemas.SimulateResponse(
            theta=None if np.isinf(path.theta) else path.theta,
            dt=path.dt,
            increments=path.increments.tolist(),
            psi=psi,
            pi=pi,
            alarm_index=alarm,
        )

    @app.post("/risk", response_model=schemas.RiskResponse)
    def risk_endpoint(req: schemas.RiskRequest):
        bundle = parse_config(req.config)
        model = bundle.model()
        tilt = solve_tilt(model)
        estimates = estimate_risk_profile(
            model, bundle.prior, tilt, bundle.cost, req.thresholds,
            n_paths=req.paths, horizon=req.horizon, dt=req.dt, seed=req.seed,
        )
        rows = [
            schemas.RiskRow(
                A=e.threshold,
                false_alarm=e.false_alarm,
                false_alarm_se=e.false_alarm_se,
                delay=e.delay,
                delay_se=e.delay_se,
                risk=e.bayes_risk,
                risk_se=e.bayes_risk_se,
                posterior_form=e.posterior_form,
                posterior_form_se=e.posterior_form_se,
                censored=e.n_censored,
            )
            for e in estimates
        ]
        return schemas.RiskResponse(
            rows=rows,
            paths=req.paths,
            horizon=estimates[0].horizon,
            dt=req.dt,
            seed=req.seed,
        )

    return app


app = create_app()
