"""Life-table calibration of the two-population mortality model.

The log force of mortality is modeled as a deterministic line a0 + a1*t per
coordinate plus a correlated stochastic residual. The drift a1 is the mean
of annual log-increments, a0 anchors the residual at zero on the window
start, and the diffusion parameters are the sample standard deviations and
the Pearson correlation of the residual increments.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import DataError, DegenerateSeries

__all__ = [
    "MortalitySeries",
    "CalibrationResult",
    "load_mortality_csv",
    "calibrate",
    "residual_series",
    "make_synthetic_series",
    "mixing_matrix",
]

# Spread below this (relative to the log-level spread) counts as constant.
DEGENERATE_RTOL = 1e-12


@dataclass(frozen=True)
class MortalitySeries:
    """Annual force-of-mortality rows for one age cohort, two populations."""

    years: np.ndarray  # strictly increasing integers
    mu: np.ndarray     # (n, 2), positive

    def __post_init__(self):
        years = np.array(self.years, dtype=int)
        mu = np.array(self.mu, dtype=float)
        if years.ndim != 1 or mu.ndim != 2 or mu.shape != (years.size, 2):
            raise DataError("series needs years (n,) and mu (n, 2) aligned")
        if years.size < 3:
            raise DataError("series needs at least 3 years")
        if np.any(np.diff(years) <= 0):
            raise DataError("years must be strictly increasing")
        if not np.all(mu > 0.0):
            raise DataError("force of mortality must be strictly positive")
        years.flags.writeable = False
        mu.flags.writeable = False
        object.__setattr__(self, "years", years)
        object.__setattr__(self, "mu", mu)

    def select(self, year_from: int, year_to: int) -> tuple[np.ndarray, np.ndarray]:
        sel = (self.years >= year_from) & (self.years <= year_to)
        return self.years[sel], self.mu[sel]


@dataclass(frozen=True)
class CalibrationResult:
    a0: np.ndarray       # log initial force at the window start
    a1: np.ndarray       # annual log-drift per coordinate
    sigma1: float
    sigma2: float
    rho: float
    window: tuple[int, int]
    n_increments: int

    def __post_init__(self):
        for name in ("a0", "a1"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def to_dict(self) -> dict:
        return {
            "a0": self.a0.tolist(),
            "a1": self.a1.tolist(),
            "sigma1": self.sigma1,
            "sigma2": self.sigma2,
            "rho": self.rho,
            "window": list(self.window),
            "n_increments": self.n_increments,
        }


def load_mortality_csv(path: str | Path) -> MortalitySeries:
    """Read `year,mu_male,mu_female` rows (UTF-8, decimal point)."""
    rows = []
    try:
        with open(path, newline="", encoding="utf-8") as handle:
            reader = csv.DictReader(handle)
            if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != [
                "year", "mu_male", "mu_female",
            ]:
                raise DataError(
                    f"{path}: expected header 'year,mu_male,mu_female', got {reader.fieldnames}"
                )
            for line in reader:
                rows.append(
                    (int(line["year"]), float(line["mu_male"]), float(line["mu_female"]))
                )
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise DataError(f"{path}: malformed row: {exc}") from exc
    if not rows:
        raise DataError(f"{path}: no data rows")
    years = np.array([r[0] for r in rows])
    mu = np.array([[r[1], r[2]] for r in rows])
    return MortalitySeries(years, mu)


def calibrate(series: MortalitySeries, window: tuple[int, int]) -> CalibrationResult:
    """Estimate drift, volatilities and correlation on the given year window."""
    years, mu = series.select(*window)
    if years.size < 3:
        raise DataError(f"window {window[0]}:{window[1]} selects fewer than 3 years of data")
    log_mu = np.log(mu)
    n = log_mu.shape[0] - 1

    a1 = np.diff(log_mu, axis=0).mean(axis=0)
    a0 = log_mu[0].copy()
    steps = np.arange(n + 1)
    resid = log_mu - a0 - np.outer(steps, a1)
    x = np.diff(resid, axis=0)

    scale = np.maximum(np.ptp(log_mu, axis=0), 1.0)
    for j in range(2):
        if np.ptp(x[:, j]) <= DEGENERATE_RTOL * scale[j]:
            raise DegenerateSeries(
                f"coordinate {j + 1} is exactly log-linear on {window[0]}:{window[1]}; "
                "no residual variance to calibrate"
            )
    sd = x.std(axis=0, ddof=1)
    rho = float(np.corrcoef(x[:, 0], x[:, 1])[0, 1])
    return CalibrationResult(
        a0=a0,
        a1=a1,
        sigma1=float(sd[0]),
        sigma2=float(sd[1]),
        rho=rho,
        window=(int(years[0]), int(years[-1])),
        n_increments=n,
    )


def residual_series(
    series: MortalitySeries,
    result: CalibrationResult,
    window: tuple[int, int] | None = None,
) -> np.ndarray:
    """Residuals X_i = log mu_i - a0 - a1*i with i counted from the
    calibration-window start; defaults to the calibration window itself."""
    if window is None:
        window = result.window
    years, mu = series.select(*window)
    steps = years - result.window[0]
    return np.log(mu) - result.a0 - np.outer(steps, result.a1)


def make_synthetic_series(
    years,
    a0=(-2.0, -2.5),
    a1=(-0.02, -0.015),
    sigma1: float = 0.03,
    sigma2: float = 0.02,
    rho: float = 0.33,
    r=(0.0, 0.0),
    change_year: int | None = None,
    seed: int = 0,
) -> MortalitySeries:
    """Generate an annual mortality fixture with an optional drift change.

    The residual takes correlated Gaussian annual increments; increments
    into years after ``change_year`` carry the post-change drift r (the
    change occurs at the end of that year). Useful both for tests and as a
    stand-in for national life tables, which are not bundled.
    """
    years = np.array(list(years), dtype=int)
    rng = np.random.default_rng(seed)
    mixing = mixing_matrix(sigma1, sigma2, rho)
    n = years.size
    steps = rng.standard_normal((n - 1, 2)) @ mixing.T
    if change_year is not None:
        post = years[1:] > change_year
        steps += np.outer(post.astype(float), np.asarray(r, dtype=float))
    resid = np.vstack([np.zeros(2), np.cumsum(steps, axis=0)])
    log_mu = np.asarray(a0) + np.outer(years - years[0], np.asarray(a1)) + resid
    return MortalitySeries(years, np.exp(log_mu))


def mixing_matrix(sigma1: float, sigma2: float, rho: float) -> np.ndarray:
    """Lower-triangular mixing matrix giving marginal volatilities
    (sigma1, sigma2) and correlation rho between the two Brownian parts."""
    comp = float(np.sqrt(max(0.0, 1.0 - rho * rho)))
    return np.array([[sigma1, 0.0], [sigma2 * rho, sigma2 * comp]])
