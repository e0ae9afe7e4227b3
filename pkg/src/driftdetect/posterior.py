"""Generalized Shiryaev-Roberts statistic and the posterior generator.

The running statistic follows the recursion

    psi_{n+1} = (psi_n + G'(t_n) dt) * exp{z.x_{n+1} - K dt},   psi_0 = G(0),

and the posterior probability of the change having happened is
pi_n = psi_n / (psi_n + 1 - G(t_n)). ``gsr_oracle`` evaluates the same
statistic through the non-recursive likelihood-ratio sum and serves as the
reference implementation in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import PriorExhausted
from .model import ModelSpec, PriorSpec
from .tilt import TiltSolution, effective_diffusion, log_lr_increment

__all__ = ["GsrState", "gsr_init", "gsr_step", "gsr_run", "gsr_oracle", "generator_apply"]

# Beyond this the statistic is carried in log space to survive long
# post-change monitoring runs where the likelihood ratio grows exponentially.
LOG_SWITCH = math.log(1e100)


@dataclass(frozen=True)
class GsrState:
    """One step of the detection statistic: index, psi, posterior, prior density."""

    n: int
    psi: float
    pi: float
    log_psi: float
    g: float

    def alarm(self, threshold: float) -> bool:
        return self.pi >= threshold


def _pi_from(psi: float, log_psi: float, tail: float) -> float:
    # tail = 1 - G(t); the 1/(1 + tail/psi) form never produces inf/inf.
    if tail <= 0.0:
        return 1.0
    if log_psi > LOG_SWITCH:
        return 1.0 / (1.0 + tail * math.exp(-log_psi))
    if psi == 0.0:
        return 0.0
    return psi / (psi + tail)


def gsr_init(prior: PriorSpec) -> GsrState:
    """State at n = 0: psi = G(0) = atom, hence pi = atom exactly."""
    x = prior.atom_x
    log_psi = math.log(x) if x > 0.0 else -math.inf
    return GsrState(n=0, psi=x, pi=x, log_psi=log_psi, g=float(prior.density(0.0)))


def gsr_step(
    state: GsrState,
    tilt: TiltSolution,
    dx: np.ndarray,
    prior: PriorSpec,
    dt: float = 1.0,
) -> GsrState:
    """Advance the statistic by one observation increment over a step of dt.

    The prior density mass and the compensator both scale with dt; dt must
    stay constant along a run since time is reconstructed as n*dt.
    """
    t_now = state.n * dt
    t_next = (state.n + 1) * dt
    if prior.exhausted_at(t_next):
        raise PriorExhausted(
            f"tabulated prior grid ends before t={t_next:g} with total mass < 1"
        )
    g_mass = float(prior.density(t_now)) * dt
    ell = log_lr_increment(tilt, dx, dt)

    log_base = np.logaddexp(state.log_psi, math.log(g_mass) if g_mass > 0.0 else -math.inf)
    log_psi = float(log_base) + ell
    if log_psi > LOG_SWITCH or state.log_psi > LOG_SWITCH:
        psi = math.inf if log_psi > 709.0 else math.exp(log_psi)
    else:
        psi = (state.psi + g_mass) * math.exp(ell)
        log_psi = math.log(psi) if psi > 0.0 else -math.inf
    tail = 1.0 - float(prior.cdf(t_next))
    return GsrState(
        n=state.n + 1,
        psi=psi,
        pi=_pi_from(psi, log_psi, tail),
        log_psi=log_psi,
        g=float(prior.density(t_next)),
    )


def _as_increment_matrix(increments, dim: int) -> np.ndarray:
    arr = np.asarray(increments, dtype=float)
    if arr.size == 0:
        return arr.reshape(0, dim)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1) if dim == 1 else arr.reshape(1, -1)
    if arr.shape[1] != dim:
        raise ValueError(f"increments have {arr.shape[1]} coordinates, expected {dim}")
    return arr


def gsr_run(
    increments: Sequence[np.ndarray] | np.ndarray,
    tilt: TiltSolution,
    prior: PriorSpec,
    dt: float = 1.0,
) -> list[GsrState]:
    """States [0..N] produced by folding the recursion over the increments."""
    states = [gsr_init(prior)]
    for dx in _as_increment_matrix(increments, len(tilt.z)):
        states.append(gsr_step(states[-1], tilt, dx, prior, dt=dt))
    return states


def gsr_oracle(
    increments: Sequence[np.ndarray] | np.ndarray,
    tilt: TiltSolution,
    prior: PriorSpec,
    dt: float = 1.0,
) -> list[float]:
    """Posterior sequence from the direct likelihood-ratio sum.

    psi_n = L_n G(0) + sum_{j<n} (L_n/L_j) G'(t_j) dt, evaluated afresh for
    every n. Quadratic in n; reference implementation for tests only.
    """
    incs = _as_increment_matrix(increments, len(tilt.z))
    n_steps = incs.shape[0]
    ell = incs @ tilt.z - tilt.K * dt  # per-step log LR factors
    cum = np.concatenate([[0.0], np.cumsum(ell)])  # log L_j, j = 0..N
    out = [prior.atom_x]
    for n in range(1, n_steps + 1):
        psi = math.exp(cum[n]) * prior.atom_x
        for j in range(n):
            psi += math.exp(cum[n] - cum[j]) * float(prior.density(j * dt)) * dt
        tail = 1.0 - float(prior.cdf(n * dt))
        out.append(_pi_from(psi, math.log(psi) if psi > 0 else -math.inf, tail))
    return out


def generator_apply(
    f: Callable[[float], float],
    f_prime: Callable[[float], float],
    f_second: Callable[[float], float],
    x: float,
    model: ModelSpec,
    tilt: TiltSolution,
    rate: float,
) -> float:
    """Generator of the posterior process at state x (exponential prior).

    Diffusion-only models use

        A f(x) = rate (1-x) f'(x) + (1/2) x^2 (1-x)^2 B f''(x),

    with B = z.(sigma.sigma^T).z; jump models add the tilted-jump integral
    terms assembled in :func:`driftdetect.freeboundary.jump_generator_assemble`.
    """
    if not 0.0 < x < 1.0:
        raise ValueError(f"state x must lie in (0, 1), got {x}")
    if model.jumps is not None and model.jumps.intensity_pre > 0.0:
        from .freeboundary import jump_generator_assemble

        return jump_generator_assemble(f, f_prime, f_second, x, model, tilt, rate)
    B = effective_diffusion(model, tilt)
    return rate * (1.0 - x) * f_prime(x) + 0.5 * f_second(x) * x * x * (1.0 - x) ** 2 * B
