"""End-to-end detection: ingest -> calibrate -> tilt -> threshold -> GSR -> report.

The annual recursion runs verbatim with dt = 1 on residual increments over
the monitoring window, starting from the monitoring-window start (the report
records that choice). Everything here is deterministic: identical inputs
give byte-identical reports.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .calibrate import CalibrationResult, MortalitySeries, calibrate, mixing_matrix, residual_series
from .errors import ConfigConflict, ConfigError, DataError
from .freeboundary import solve_threshold
from .model import ConfigBundle, ModelSpec, validate
from .posterior import gsr_init, gsr_step
from .tilt import TiltSolution, effective_diffusion, solve_tilt

__all__ = ["DetectionReport", "run_detection", "emit_plot_data"]

FLOAT_FORMAT = "%.17g"


@dataclass(frozen=True)
class DetectionReport:
    """Everything one detection run produced, in plot-ready form."""

    config: dict
    calib_window: tuple[int, int]
    monitor_window: tuple[int, int]
    calibration: CalibrationResult
    tilt: TiltSolution
    B: float
    A_star: float
    threshold_solved: bool
    r_used: np.ndarray
    years: np.ndarray        # monitoring years (m,)
    mu: np.ndarray           # (m, 2) raw force of mortality
    residuals: np.ndarray    # (m, 2) detrended series
    increments: np.ndarray   # (m-1, 2) residual increments feeding the GSR
    psi: np.ndarray          # (m,)
    pi: np.ndarray           # (m,)
    alarms: np.ndarray       # (m,) bool
    alarm_year: int | None
    recursion_start: int     # year at which psi was initialised

    @property
    def series_rows(self) -> list[dict]:
        """Per-year records (year, n, increments, psi, pi, alarm flag)."""
        rows = []
        for i, year in enumerate(self.years):
            rows.append({
                "year": int(year),
                "n": i,
                "x_inc_1": float(self.increments[i - 1, 0]) if i > 0 else None,
                "x_inc_2": float(self.increments[i - 1, 1]) if i > 0 else None,
                "psi": float(self.psi[i]),
                "pi": float(self.pi[i]),
                "alarm": bool(self.alarms[i]),
            })
        return rows


def _resolve_drift(config: ConfigBundle, calib: CalibrationResult, r_override) -> np.ndarray:
    if r_override is not None:
        if config.r is not None:
            raise ConfigConflict("drift given twice: explicit 'r' in the config and an override")
        return np.asarray(r_override, dtype=float)
    if config.r is not None:
        return config.r
    # "auto" (explicit or by omission): anticipate a drift of one volatility
    return np.array([calib.sigma1, calib.sigma2])


def run_detection(
    series: MortalitySeries,
    config: ConfigBundle,
    calib_window: tuple[int, int],
    monitor_window: tuple[int, int],
    threshold: float | None = None,
    r_override=None,
) -> DetectionReport:
    """Calibrate, solve the alarm level and run the annual detection statistic.

    ``threshold`` skips the free-boundary solve (useful for sweeps and for
    non-exponential priors, where no homogeneous optimal level exists).
    """
    if monitor_window[0] < calib_window[0]:
        raise ConfigError("monitoring window must start at or after the calibration window start")

    calib = calibrate(series, calib_window)
    if abs(calib.rho) >= 1.0 - 1e-12:
        raise DataError(f"calibrated |rho| = {abs(calib.rho):.6f} makes the diffusion singular")

    r_used = _resolve_drift(config, calib, r_override)
    sigma = mixing_matrix(calib.sigma1, calib.sigma2, calib.rho)
    model = ModelSpec(dim=2, sigma=sigma, drift_r=r_used, jumps=config.jumps)
    report = validate(model, config.prior, config.cost)
    if not report.ok:
        raise ConfigError("invalid detection setup: " + "; ".join(report.violations))

    tilt = solve_tilt(model)
    B = effective_diffusion(model, tilt)
    if threshold is not None:
        a_star, solved = float(threshold), True
    else:
        if config.jumps is not None and config.jumps.intensity_pre > 0.0:
            raise ConfigError(
                "optimal threshold solving covers diffusion-only models; "
                "pass an explicit threshold for jump models"
            )
        if config.prior.kind != "exponential":
            raise ConfigError(
                "optimal threshold solving needs the exponential prior; "
                "pass an explicit threshold for tabulated priors"
            )
        sol = solve_threshold(B, config.prior.rate, config.cost.c)
        a_star, solved = sol.A_star, sol.root_found

    sel = (series.years >= monitor_window[0]) & (series.years <= monitor_window[1])
    years = series.years[sel]
    mu = series.mu[sel]
    if years.size and np.any(np.diff(years) != 1):
        raise DataError("monitoring window needs consecutive annual rows")
    if years.size:
        resid = residual_series(series, calib, (int(years[0]), int(years[-1])))
    else:
        resid = np.empty((0, 2))
    increments = np.diff(resid, axis=0)

    psi = np.empty(years.size)
    pi = np.empty(years.size)
    if years.size:
        state = gsr_init(config.prior)
        psi[0], pi[0] = state.psi, state.pi
        for k in range(increments.shape[0]):
            state = gsr_step(state, tilt, increments[k], config.prior, dt=1.0)
            psi[k + 1], pi[k + 1] = state.psi, state.pi
    alarms = pi >= a_star
    alarm_year = int(years[np.argmax(alarms)]) if alarms.any() else None

    return DetectionReport(
        config=dict(config.raw),
        calib_window=(int(calib_window[0]), int(calib_window[1])),
        monitor_window=(int(monitor_window[0]), int(monitor_window[1])),
        calibration=calib,
        tilt=tilt,
        B=B,
        A_star=a_star,
        threshold_solved=solved,
        r_used=r_used,
        years=years,
        mu=mu,
        residuals=resid,
        increments=increments,
        psi=psi,
        pi=pi,
        alarms=alarms,
        alarm_year=alarm_year,
        recursion_start=int(years[0]) if years.size else int(monitor_window[0]),
    )


def _write_csv(path: Path, header: list[str], rows) -> None:
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(
            FLOAT_FORMAT % v if isinstance(v, float) else str(v) for v in row
        ))
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def emit_plot_data(report: DetectionReport, out_dir: str | Path) -> list[Path]:
    """Write the three figure CSVs: raw mortality, residuals, posterior."""
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        mortality = out / "mortality.csv"
        _write_csv(
            mortality,
            ["year", "mu_male", "mu_female"],
            ((int(y), float(m[0]), float(m[1])) for y, m in zip(report.years, report.mu)),
        )
        residuals = out / "residuals.csv"
        _write_csv(
            residuals,
            ["year", "x_male", "x_female"],
            ((int(y), float(x[0]), float(x[1])) for y, x in zip(report.years, report.residuals)),
        )
        posterior = out / "posterior.csv"
        _write_csv(
            posterior,
            ["year", "pi", "A_star"],
            ((int(y), float(p), float(report.A_star)) for y, p in zip(report.years, report.pi)),
        )
    except OSError as exc:
        raise DataError(f"cannot write plot data under {out}: {exc}") from exc
    return [mortality, residuals, posterior]
