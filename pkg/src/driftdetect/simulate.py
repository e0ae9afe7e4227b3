"""Monte Carlo engine for the disorder model.

Paths carry exact Gaussian increments (covariance sigma.sigma^T dt), the
drift of whichever regime is active, and compound-Poisson jump sums; the
interval straddling the change time is split exactly at theta. Risk
estimation runs the detection statistic along blocks of paths, each block
owning an RNG stream keyed by (master seed, block index) and merged in
fixed order, so results are bitwise reproducible however blocks are
scheduled.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import PriorExhausted
from .model import CostSpec, ModelSpec, PriorSpec
from .posterior import gsr_init, gsr_step
from .tilt import TiltSolution, effective_diffusion

__all__ = [
    "PathSample",
    "RiskEstimate",
    "sample_path",
    "simulate_terminal",
    "run_threshold_rule",
    "estimate_risk",
    "estimate_risk_profile",
    "default_horizon",
]

BLOCK_SIZE = 8192
# Paths that neither alarm nor outlive theta by this delay budget (in units
# of 1/c) count as censored; more than 1% of them triggers a warning.
CENSOR_DELAY_BUDGET = 50.0


@dataclass
class PathSample:
    """One simulated observation path on a uniform grid."""

    theta: float
    dt: float
    times: np.ndarray       # (N+1,)
    increments: np.ndarray  # (N, d)
    alarm: int | None = None


@dataclass(frozen=True)
class RiskEstimate:
    """Monte Carlo Bayes-risk estimate at one alarm threshold."""

    threshold: float
    false_alarm: float
    false_alarm_se: float
    delay: float
    delay_se: float
    bayes_risk: float
    bayes_risk_se: float
    posterior_form: float
    posterior_form_se: float
    form_gap: float
    form_gap_se: float
    n_paths: int
    n_censored: int
    horizon: float
    dt: float


def _block_rng(seed: int, block: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, block)))


def _drifts(model: ModelSpec, tilt: TiltSolution) -> tuple[np.ndarray, np.ndarray]:
    """Per-unit-time drift before and after the change."""
    d = model.dim
    a_pre = np.zeros(d)
    a_post = np.array(model.drift_r, dtype=float)
    if model.jumps is not None and model.jumps.intensity_pre > 0.0:
        a_pre -= model.jumps.intensity_pre * model.jumps.signed_means()
        a_post -= tilt.post_jumps.intensity_post * tilt.post_jumps.jump_means_post
    return a_pre, a_post


def _jump_sums(
    rng: np.random.Generator, counts: np.ndarray, means: np.ndarray
) -> np.ndarray:
    """Sum of `counts` i.i.d. jump vectors with independent exponential
    marginals of the given signed means: per-coordinate Gamma(count) sums."""
    out = np.empty((counts.shape[0], means.shape[0]))
    for j, m in enumerate(means):
        out[:, j] = rng.standard_gamma(counts) * m
    return out


def _draw_theta(rng: np.random.Generator, prior: PriorSpec, size: int, regime: str) -> np.ndarray:
    if regime == "bayes":
        return prior.sample(rng, size)
    if regime == "pre":
        return np.full(size, np.inf)
    if regime == "post":
        return np.zeros(size)
    raise ValueError(f"regime must be 'bayes', 'pre' or 'post', got {regime!r}")


def sample_path(
    model: ModelSpec,
    prior: PriorSpec,
    tilt: TiltSolution,
    horizon: float,
    dt: float,
    seed: int,
    regime: str = "bayes",
) -> PathSample:
    """Simulate one path of the disorder model up to the horizon."""
    if dt <= 0.0 or horizon <= 0.0:
        raise ValueError("horizon and dt must be > 0")
    rng = _block_rng(seed, 0)
    n_steps = int(round(horizon / dt))
    theta = float(_draw_theta(rng, prior, 1, regime)[0])

    times = np.arange(n_steps + 1) * dt
    post_dur = np.clip(times[1:] - theta, 0.0, dt)
    pre_dur = dt - post_dur

    a_pre, a_post = _drifts(model, tilt)
    increments = math.sqrt(dt) * rng.standard_normal((n_steps, model.dim)) @ model.sigma.T
    increments += np.outer(pre_dur, a_pre) + np.outer(post_dur, a_post)

    jumps = model.jumps
    if jumps is not None and jumps.intensity_pre > 0.0:
        counts_pre = rng.poisson(jumps.intensity_pre * pre_dur)
        counts_post = rng.poisson(tilt.post_jumps.intensity_post * post_dur)
        increments += _jump_sums(rng, counts_pre, jumps.signed_means())
        increments += _jump_sums(rng, counts_post, tilt.post_jumps.jump_means_post)
    return PathSample(theta=theta, dt=dt, times=times, increments=increments)


def simulate_terminal(
    model: ModelSpec,
    tilt: TiltSolution,
    regime: str,
    n_paths: int,
    horizon: float,
    seed: int = 0,
    block_size: int = BLOCK_SIZE,
) -> np.ndarray:
    """Exact draws of X_T under the pure pre- or post-change law.

    A Levy path has independent Gaussian, drift and compound-Poisson parts,
    so the terminal value is drawn in one shot per block.
    """
    if regime not in ("pre", "post"):
        raise ValueError("simulate_terminal supports regimes 'pre' and 'post'")
    a_pre, a_post = _drifts(model, tilt)
    drift = a_pre if regime == "pre" else a_post
    if model.jumps is not None and model.jumps.intensity_pre > 0.0:
        if regime == "pre":
            mu, means = model.jumps.intensity_pre, model.jumps.signed_means()
        else:
            mu, means = tilt.post_jumps.intensity_post, tilt.post_jumps.jump_means_post
    else:
        mu, means = 0.0, None

    chol = model.sigma  # X = sigma.W, so sigma itself mixes the noise
    out = np.empty((n_paths, model.dim))
    for block, start in enumerate(range(0, n_paths, block_size)):
        stop = min(start + block_size, n_paths)
        rng = _block_rng(seed, block)
        nb = stop - start
        x = math.sqrt(horizon) * rng.standard_normal((nb, model.dim)) @ chol.T
        x += drift * horizon
        if mu > 0.0:
            counts = rng.poisson(mu * horizon, nb)
            x += _jump_sums(rng, counts, means)
        out[start:stop] = x
    return out


def run_threshold_rule(
    path: PathSample,
    tilt: TiltSolution,
    prior: PriorSpec,
    threshold: float,
) -> int | None:
    """First step index n with pi_n >= threshold, or None within the horizon."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must lie in [0, 1], got {threshold}")
    state = gsr_init(prior)
    if state.pi >= threshold:
        path.alarm = 0
        return 0
    for k in range(path.increments.shape[0]):
        state = gsr_step(state, tilt, path.increments[k], prior, dt=path.dt)
        if state.pi >= threshold:
            path.alarm = state.n
            return state.n
    path.alarm = None
    return None


def default_horizon(prior: PriorSpec) -> float:
    """Mean change time plus twenty prior time constants."""
    scale = 1.0 / prior.rate if prior.rate is not None else max(prior.table[-1, 0], 1.0)
    return prior.mean() + 20.0 * scale


def _risk_block(
    model: ModelSpec,
    prior: PriorSpec,
    tilt: TiltSolution,
    thresholds: np.ndarray,
    n_block: int,
    n_steps: int,
    dt: float,
    g_arr: np.ndarray,
    q_arr: np.ndarray,
    rng: np.random.Generator,
):
    """Run one block of paths through the detection statistic.

    Returns (rec_idx, rec_pi, rec_int, alarmed, theta): per-threshold first
    crossing step, posterior and running integral at that step; paths that
    never cross get the horizon values with alarmed=False.
    """
    n_thr = thresholds.shape[0]
    x0 = prior.atom_x
    theta = _draw_theta(rng, prior, n_block, "bayes")

    has_jumps = model.jumps is not None and model.jumps.intensity_pre > 0.0
    a_pre, a_post = _drifts(model, tilt)
    z, K = tilt.z, tilt.K
    if not has_jumps:
        sd_ell = math.sqrt(effective_diffusion(model, tilt) * dt)
        za_pre, za_post = float(z @ a_pre), float(z @ a_post)
    else:
        sig_t = model.sigma.T
        mu_pre = model.jumps.intensity_pre
        m_pre = model.jumps.signed_means()
        mu_post = tilt.post_jumps.intensity_post
        m_post = tilt.post_jumps.jump_means_post

    rec_idx = np.full((n_thr, n_block), n_steps, dtype=np.int64)
    rec_pi = np.empty((n_thr, n_block))
    rec_int = np.empty((n_thr, n_block))
    alarmed = np.zeros((n_thr, n_block), dtype=bool)

    active = np.arange(n_block)
    psi = np.full(n_block, x0)
    cum = np.zeros(n_block)  # dt-weighted running sum of pi
    next_thr = np.zeros(n_block, dtype=np.int64)
    th_act = theta.copy()
    pi = np.full(n_block, x0)

    # Step 0: the statistic starts at pi_0 = x0 before any data arrives.
    for lvl in range(n_thr):
        if x0 >= thresholds[lvl]:
            rec_idx[lvl] = 0
            rec_pi[lvl] = x0
            rec_int[lvl] = 0.0
            alarmed[lvl] = True
            next_thr += 1
        else:
            break
    cum += pi * dt
    done = next_thr >= n_thr
    if np.any(done):
        keep = ~done
        active, psi, cum, next_thr, th_act, pi = (
            active[keep], psi[keep], cum[keep], next_thr[keep], th_act[keep], pi[keep]
        )

    for k in range(1, n_steps + 1):
        na = active.shape[0]
        if na == 0:
            break
        t1 = k * dt
        post_dur = np.clip(t1 - th_act, 0.0, dt)
        if not has_jumps:
            ell = sd_ell * rng.standard_normal(na)
            ell += za_pre * (dt - post_dur) + za_post * post_dur - K * dt
        else:
            dx = math.sqrt(dt) * rng.standard_normal((na, model.dim)) @ sig_t
            pre_dur = dt - post_dur
            dx += np.outer(pre_dur, a_pre) + np.outer(post_dur, a_post)
            dx += _jump_sums(rng, rng.poisson(mu_pre * pre_dur), m_pre)
            dx += _jump_sums(rng, rng.poisson(mu_post * post_dur), m_post)
            ell = dx @ z - K * dt
        # psi saturating to inf is fine: the pi form below maps it to 1
        with np.errstate(over="ignore", divide="ignore"):
            np.exp(ell, out=ell)
            psi = (psi + g_arr[k - 1] * dt) * ell
            pi = 1.0 / (1.0 + q_arr[k] / psi)

        for lvl in range(n_thr):
            sel = (next_thr == lvl) & (pi >= thresholds[lvl])
            if np.any(sel):
                idx = active[sel]
                rec_idx[lvl, idx] = k
                rec_pi[lvl, idx] = pi[sel]
                rec_int[lvl, idx] = cum[sel]
                alarmed[lvl, idx] = True
                next_thr[sel] += 1
        cum += pi * dt

        done = next_thr >= n_thr
        if 4 * int(np.count_nonzero(done)) >= na:
            keep = ~done
            active, psi, cum, next_thr, th_act, pi = (
                active[keep], psi[keep], cum[keep], next_thr[keep], th_act[keep], pi[keep]
            )

    # Horizon fill for whatever never crossed its remaining thresholds.
    for lvl in range(n_thr):
        sel = next_thr <= lvl
        if np.any(sel):
            idx = active[sel]
            rec_pi[lvl, idx] = pi[sel]
            rec_int[lvl, idx] = cum[sel]
    return rec_idx, rec_pi, rec_int, alarmed, theta


def estimate_risk_profile(
    model: ModelSpec,
    prior: PriorSpec,
    tilt: TiltSolution,
    cost: CostSpec,
    thresholds,
    n_paths: int,
    horizon: float | None = None,
    dt: float = 0.02,
    seed: int = 0,
    block_size: int = BLOCK_SIZE,
) -> list[RiskEstimate]:
    """Bayes-risk estimates for several thresholds on one shared set of paths."""
    thresholds = np.atleast_1d(np.asarray(thresholds, dtype=float))
    if np.any((thresholds < 0.0) | (thresholds > 1.0)):
        raise ValueError("thresholds must lie in [0, 1]")
    if n_paths < 100:
        raise ValueError("n_paths must be at least 100")
    if horizon is None:
        horizon = default_horizon(prior)
    n_steps = int(round(horizon / dt))
    if prior.exhausted_at(n_steps * dt):
        raise PriorExhausted("tabulated prior grid ends before the simulation horizon")

    order = np.argsort(thresholds)
    thr_sorted = thresholds[order]
    grid = np.arange(n_steps + 1) * dt
    g_arr = np.asarray(prior.density(grid), dtype=float)
    q_arr = 1.0 - np.asarray(prior.cdf(grid), dtype=float)

    n_thr = thr_sorted.shape[0]
    rec_idx = np.empty((n_thr, n_paths), dtype=np.int64)
    rec_pi = np.empty((n_thr, n_paths))
    rec_int = np.empty((n_thr, n_paths))
    alarmed = np.empty((n_thr, n_paths), dtype=bool)
    theta = np.empty(n_paths)
    for block, start in enumerate(range(0, n_paths, block_size)):
        stop = min(start + block_size, n_paths)
        out = _risk_block(
            model, prior, tilt, thr_sorted, stop - start, n_steps, dt,
            g_arr, q_arr, _block_rng(seed, block),
        )
        rec_idx[:, start:stop], rec_pi[:, start:stop] = out[0], out[1]
        rec_int[:, start:stop], alarmed[:, start:stop] = out[2], out[3]
        theta[start:stop] = out[4]

    c = cost.c
    estimates: dict[int, RiskEstimate] = {}
    for pos, lvl in enumerate(order):
        tau = rec_idx[pos] * dt
        fa = (alarmed[pos] & (tau < theta)).astype(float)
        delay = np.maximum(tau - theta, 0.0)
        bayes = fa + c * delay
        # rec_int already carries the dt-weighted running sum of pi
        post_form = (1.0 - rec_pi[pos]) + c * rec_int[pos]
        gap = bayes - post_form
        censored = (~alarmed[pos]) & (horizon < theta + CENSOR_DELAY_BUDGET / c)
        n_cens = int(np.count_nonzero(censored))
        if n_cens > 0.01 * n_paths:
            warnings.warn(
                f"HorizonCensoring: {n_cens}/{n_paths} paths unresolved at threshold "
                f"{thresholds[lvl]:g}; delay estimates are truncated at the horizon",
                RuntimeWarning,
            )
        root_n = math.sqrt(n_paths)
        estimates[int(lvl)] = RiskEstimate(
            threshold=float(thresholds[lvl]),
            false_alarm=float(fa.mean()),
            false_alarm_se=float(fa.std(ddof=1) / root_n),
            delay=float(delay.mean()),
            delay_se=float(delay.std(ddof=1) / root_n),
            bayes_risk=float(bayes.mean()),
            bayes_risk_se=float(bayes.std(ddof=1) / root_n),
            posterior_form=float(post_form.mean()),
            posterior_form_se=float(post_form.std(ddof=1) / root_n),
            form_gap=float(gap.mean()),
            form_gap_se=float(gap.std(ddof=1) / root_n),
            n_paths=n_paths,
            n_censored=n_cens,
            horizon=float(horizon),
            dt=dt,
        )
    return [estimates[i] for i in range(n_thr)]


def estimate_risk(
    model: ModelSpec,
    prior: PriorSpec,
    tilt: TiltSolution,
    cost: CostSpec,
    threshold: float,
    n_paths: int,
    horizon: float | None = None,
    dt: float = 0.02,
    seed: int = 0,
) -> RiskEstimate:
    """Bayes-risk estimate at a single alarm threshold."""
    return estimate_risk_profile(
        model, prior, tilt, cost, [threshold], n_paths, horizon=horizon, dt=dt, seed=seed
    )[0]
