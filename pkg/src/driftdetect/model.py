"""Model, prior and cost specifications shared by every other module.

All spec types are immutable value objects and can be shared freely across
threads. ``validate`` collects violated invariants into a report instead of
raising, so callers (CLI, service) can surface every problem at once.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

__all__ = [
    "JumpSpec",
    "ModelSpec",
    "PriorSpec",
    "CostSpec",
    "ValidationReport",
    "ConfigBundle",
    "validate",
    "parse_config",
    "load_config",
]

# Scale-free singularity threshold for pivots of sigma.sigma^T.
PIVOT_RTOL = 1e-12

# A tabulated prior whose grid tops out below this is considered to still
# have mass beyond the grid; running past its end is then a hard error.
PRIOR_COMPLETE_TOL = 1e-9


def _frozen_vector(values, length: int | None = None) -> np.ndarray:
    arr = np.array(values, dtype=float).reshape(-1)
    if length is not None and arr.shape != (length,):
        raise ConfigError(f"expected a vector of length {length}, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


def _frozen_matrix(values, dim: int) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.shape != (dim, dim):
        raise ConfigError(f"expected a {dim}x{dim} matrix, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class JumpSpec:
    """One-sided compound-Poisson jumps with independent exponential marginals.

    ``jump_means_pre`` holds the (positive) means w_j; ``direction`` flips the
    support to the negative orthant. This is a closed enumeration, not a
    plug-in interface: the exponential tilt is specific to this family.
    """

    intensity_pre: float
    jump_means_pre: np.ndarray
    direction: str = "positive"

    def __post_init__(self):
        object.__setattr__(self, "jump_means_pre", _frozen_vector(self.jump_means_pre))
        if self.direction not in ("positive", "negative"):
            raise ConfigError(f"jump direction must be 'positive' or 'negative', got {self.direction!r}")

    def signed_means(self) -> np.ndarray:
        """Mean jump vector (negative entries for downward jumps)."""
        w = self.jump_means_pre
        return w if self.direction == "positive" else -w


@dataclass(frozen=True)
class ModelSpec:
    """Jump-diffusion observation model: mixing matrix, post-change drift, jumps."""

    dim: int
    sigma: np.ndarray
    drift_r: np.ndarray
    jumps: JumpSpec | None = None

    def __post_init__(self):
        if self.dim < 1:
            raise ConfigError(f"dim must be >= 1, got {self.dim}")
        object.__setattr__(self, "sigma", _frozen_matrix(self.sigma, self.dim))
        object.__setattr__(self, "drift_r", _frozen_vector(self.drift_r, self.dim))
        if self.jumps is not None and self.jumps.jump_means_pre.shape != (self.dim,):
            raise ConfigError("jump means must have one entry per dimension")

    def gram(self) -> np.ndarray:
        """Diffusion covariance per unit time, sigma.sigma^T."""
        return self.sigma @ self.sigma.T


@dataclass(frozen=True)
class PriorSpec:
    """0-modified prior of the change point: atom at 0 plus a continuous part.

    Exponential kind: G(t) = x + (1-x)(1 - exp(-rate*t)).
    Tabulated kind: piecewise-linear G through ``table`` rows (t_k, G(t_k)),
    constant past the last node; densities at the nodes come from centered
    differences and are interpolated linearly in between.
    """

    atom_x: float
    rate: float | None = None
    table: np.ndarray | None = None
    _node_density: np.ndarray = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        if (self.rate is None) == (self.table is None):
            raise ConfigError("prior needs exactly one of 'rate' (exponential) or 'table' (tabulated)")
        if self.table is not None:
            tab = np.array(self.table, dtype=float)
            if tab.ndim != 2 or tab.shape[1] != 2 or tab.shape[0] < 2:
                raise ConfigError("prior table must be rows of (t, G(t)) with at least two rows")
            tab.flags.writeable = False
            object.__setattr__(self, "table", tab)
            t, g = tab[:, 0], tab[:, 1]
            # malformed grids (duplicate times) are reported by validate();
            # keep construction warning-free
            with np.errstate(divide="ignore", invalid="ignore"):
                dens = np.empty_like(g)
                dens[1:-1] = (g[2:] - g[:-2]) / (t[2:] - t[:-2])
                dens[0] = (g[1] - g[0]) / (t[1] - t[0])
                dens[-1] = (g[-1] - g[-2]) / (t[-1] - t[-2])
            dens.flags.writeable = False
            object.__setattr__(self, "_node_density", dens)

    @property
    def kind(self) -> str:
        return "exponential" if self.rate is not None else "tabulated"

    def cdf(self, t) -> np.ndarray | float:
        t = np.asarray(t, dtype=float)
        if self.rate is not None:
            out = self.atom_x + (1.0 - self.atom_x) * -np.expm1(-self.rate * np.maximum(t, 0.0))
        else:
            out = np.interp(t, self.table[:, 0], self.table[:, 1])
        return out if out.ndim else float(out)

    def density(self, t) -> np.ndarray | float:
        """Density of the continuous part; zero beyond a tabulated grid."""
        t = np.asarray(t, dtype=float)
        if self.rate is not None:
            out = (1.0 - self.atom_x) * self.rate * np.exp(-self.rate * np.maximum(t, 0.0))
        else:
            grid = self.table[:, 0]
            out = np.where(t > grid[-1], 0.0, np.interp(t, grid, self._node_density))
        return out if out.ndim else float(out)

    def exhausted_at(self, t: float) -> bool:
        """True when t lies beyond a tabulated grid that never reaches 1."""
        if self.table is None:
            return False
        return t > self.table[-1, 0] and self.table[-1, 1] < 1.0 - PRIOR_COMPLETE_TOL

    def mean(self) -> float:
        """Mean change time; grid mass beyond a tabulated end sits at the end."""
        if self.rate is not None:
            return (1.0 - self.atom_x) / self.rate
        t, g = self.table[:, 0], self.table[:, 1]
        # E[theta] = integral of (1 - G) by the trapezoid rule on the grid.
        tail = float(np.trapezoid(1.0 - g, t)) if hasattr(np, "trapezoid") else float(np.trapz(1.0 - g, t))
        return tail

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw change times; tail mass beyond a tabulated grid maps to +inf."""
        u = rng.random(size)
        theta = np.zeros(size)
        cont = u >= self.atom_x
        if self.rate is not None:
            v = (u[cont] - self.atom_x) / (1.0 - self.atom_x)
            theta[cont] = -np.log1p(-v) / self.rate
        else:
            t, g = self.table[:, 0], self.table[:, 1]
            uc = u[cont]
            vals = np.interp(uc, g, t)
            vals[uc > g[-1]] = np.inf
            theta[cont] = vals
        return theta


@dataclass(frozen=True)
class CostSpec:
    """Weight of the expected detection delay in the Bayes risk."""

    c: float


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...]

    @property
    def ok(self) -> bool:
        return not self.violations


def _cholesky_min_pivot(m: np.ndarray) -> float:
    """Smallest pivot met during a Cholesky sweep; -inf once one goes negative."""
    a = np.array(m, dtype=float)
    n = a.shape[0]
    smallest = math.inf
    for k in range(n):
        pivot = a[k, k]
        smallest = min(smallest, pivot)
        if pivot <= 0.0:
            return -math.inf
        root = math.sqrt(pivot)
        a[k, k:] /= root
        for j in range(k + 1, n):
            a[j, j:] -= a[k, j] * a[k, j:]
    return smallest


def validate(
    model: ModelSpec | None = None,
    prior: PriorSpec | None = None,
    cost: CostSpec | None = None,
) -> ValidationReport:
    """Check value invariants of the given specs; report every violation."""
    bad: list[str] = []
    if model is not None:
        if model.dim < 1:
            bad.append("dim < 1")
        for i in range(model.dim):
            if not model.sigma[i, i] > 0.0:
                bad.append(f"sigma_{i + 1}{i + 1} <= 0")
        gram = model.gram()
        if not np.allclose(gram, gram.T):
            bad.append("sigma.sigma^T not symmetric")
        else:
            threshold = PIVOT_RTOL * float(np.max(np.diag(gram))) if gram.size else 0.0
            if _cholesky_min_pivot(gram) < threshold:
                bad.append("sigma.sigma^T singular")
        if not np.all(np.isfinite(model.drift_r)):
            bad.append("drift r not finite")
        if model.jumps is not None:
            if model.jumps.intensity_pre < 0.0:
                bad.append("jump intensity < 0")
            if np.any(model.jumps.jump_means_pre <= 0.0):
                bad.append("jump means must satisfy w_j > 0")
    if prior is not None:
        if not 0.0 <= prior.atom_x < 1.0:
            bad.append("prior atom x must lie in [0, 1)")
        if prior.rate is not None and prior.rate <= 0.0:
            bad.append("prior rate must be > 0")
        if prior.table is not None:
            t, g = prior.table[:, 0], prior.table[:, 1]
            if t[0] != 0.0 or g[0] != prior.atom_x:
                bad.append("prior table must start at (0, atom_x)")
            if np.any(np.diff(t) <= 0.0):
                bad.append("prior table times must be strictly increasing")
            if np.any(np.diff(g) < 0.0):
                bad.append("prior table values must be nondecreasing")
            if np.any(g > 1.0) or np.any(g < prior.atom_x):
                bad.append("prior table values must lie in [atom_x, 1]")
    if cost is not None and not cost.c > 0.0:
        bad.append("cost c must be > 0")
    return ValidationReport(tuple(bad))


@dataclass(frozen=True)
class ConfigBundle:
    """Parsed configuration file. The model part is optional: detection runs
    derive sigma from calibration and may leave r on the "auto" policy."""

    prior: PriorSpec
    cost: CostSpec
    dim: int | None
    sigma: np.ndarray | None
    r: np.ndarray | None
    r_auto: bool
    jumps: JumpSpec | None
    raw: dict

    def model(self) -> ModelSpec:
        """Build the full model; error when sigma or r is not pinned down."""
        if self.sigma is None:
            raise ConfigError("config is missing 'sigma' (and no calibration supplied one)")
        if self.r is None:
            raise ConfigError("config is missing an explicit drift 'r'")
        dim = self.dim if self.dim is not None else self.sigma.shape[0]
        return ModelSpec(dim=dim, sigma=self.sigma, drift_r=self.r, jumps=self.jumps)


def _parse_sigma(raw_sigma, dim: int | None) -> tuple[np.ndarray, int]:
    try:
        arr = np.array(raw_sigma, dtype=float)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'sigma' is not numeric: {exc}") from exc
    if arr.ndim == 1:
        if dim is None:
            raise ConfigError("flat row-major 'sigma' needs an explicit 'dim'")
        if arr.size != dim * dim:
            raise ConfigError(f"'sigma' has {arr.size} entries, expected {dim * dim}")
        arr = arr.reshape(dim, dim)
    if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
        raise ConfigError("'sigma' must be a square matrix")
    if dim is not None and arr.shape[0] != dim:
        raise ConfigError(f"'sigma' is {arr.shape[0]}x{arr.shape[0]} but dim={dim}")
    return arr, arr.shape[0]


def parse_config(raw: dict) -> ConfigBundle:
    """Turn a JSON config document into specs. Structural problems raise
    ConfigError; value invariants are left to ``validate``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    known = {"dim", "sigma", "r", "jumps", "prior", "cost"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    if "prior" not in raw:
        raise ConfigError("config is missing the 'prior' section")
    p = raw["prior"]
    if not isinstance(p, dict):
        raise ConfigError("'prior' must be an object")
    atom = p.get("x0", 0.0)
    if "lambda" in p and "table" in p:
        raise ConfigError("prior cannot have both 'lambda' and 'table'")
    try:
        if "lambda" in p:
            prior = PriorSpec(atom_x=float(atom), rate=float(p["lambda"]))
        elif "table" in p:
            prior = PriorSpec(atom_x=float(atom), table=p["table"])
        else:
            raise ConfigError("prior needs 'lambda' or 'table'")
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed prior: {exc}") from exc

    if "cost" not in raw or not isinstance(raw["cost"], dict) or "c" not in raw["cost"]:
        raise ConfigError("config is missing 'cost': {'c': ...}")
    try:
        cost = CostSpec(c=float(raw["cost"]["c"]))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"malformed cost: {exc}") from exc

    try:
        dim = int(raw["dim"]) if "dim" in raw else None
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"'dim' is not an integer: {exc}") from exc
    sigma = None
    if "sigma" in raw:
        sigma, dim = _parse_sigma(raw["sigma"], dim)

    r = None
    r_auto = False
    if "r" in raw:
        if raw["r"] == "auto":
            r_auto = True
        else:
            try:
                r = _frozen_vector(raw["r"])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"'r' is not a numeric vector: {exc}") from exc
            if dim is not None and r.shape != (dim,):
                raise ConfigError(f"'r' has length {r.size}, expected {dim}")

    jumps = None
    if raw.get("jumps") is not None:
        j = raw["jumps"]
        if not isinstance(j, dict) or "mu_inf" not in j or "w" not in j:
            raise ConfigError("'jumps' needs 'mu_inf' and 'w'")
        try:
            jumps = JumpSpec(
                intensity_pre=float(j["mu_inf"]),
                jump_means_pre=j["w"],
                direction=j.get("direction", "positive"),
            )
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"malformed jumps: {exc}") from exc
        if dim is not None and jumps.jump_means_pre.shape != (dim,):
            raise ConfigError("jump means 'w' must have one entry per dimension")

    return ConfigBundle(
        prior=prior, cost=cost, dim=dim, sigma=sigma,
        r=r, r_auto=r_auto, jumps=jumps, raw=raw,
    )


def load_config(path: str | Path) -> ConfigBundle:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config file {path} is not valid JSON: {exc}") from exc
    return parse_config(raw)
