"""Exponential change of measure between the pre- and post-change laws.

The tilt vector z solves (sigma.sigma^T) z = r - mu0*m0 + muInf*mInf, which
turns the likelihood-ratio process into exp{z.(X_t - X_0) - K t} with the
compensator K = z.M.z/2 - z.(muInf*mInf) + mu0 - muInf. Without jumps the
system is a plain linear solve; with exponential jumps the post-change jump
law itself depends on z, so mu0 and m0 are functions of z and the solve
becomes a damped fixed point started from the diffusion-only solution.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import TiltInfeasible
from .model import ModelSpec

__all__ = [
    "PostJumpLaw",
    "TiltSolution",
    "tilted_jump_law",
    "solve_tilt",
    "log_lr_increment",
    "effective_diffusion",
]

FIXED_POINT_TOL = 1e-12
FIXED_POINT_MAXITER = 200
FIXED_POINT_DAMPING = 0.5
RESIDUAL_RTOL = 1e-10


@dataclass(frozen=True)
class PostJumpLaw:
    """Post-change jump law produced by tilting the pre-change one."""

    intensity_post: float
    jump_means_post: np.ndarray  # signed means, one per coordinate

    def __post_init__(self):
        m = np.array(self.jump_means_post, dtype=float)
        m.flags.writeable = False
        object.__setattr__(self, "jump_means_post", m)


@dataclass(frozen=True)
class TiltSolution:
    z: np.ndarray
    K: float
    post_jumps: PostJumpLaw | None = None

    def __post_init__(self):
        z = np.array(self.z, dtype=float)
        z.flags.writeable = False
        object.__setattr__(self, "z", z)

    def to_dict(self) -> dict:
        out = {"z": self.z.tolist(), "K": self.K}
        if self.post_jumps is not None:
            out["post_jumps"] = {
                "intensity_post": self.post_jumps.intensity_post,
                "jump_means_post": self.post_jumps.jump_means_post.tolist(),
            }
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "TiltSolution":
        post = None
        if data.get("post_jumps") is not None:
            post = PostJumpLaw(
                intensity_post=float(data["post_jumps"]["intensity_post"]),
                jump_means_post=data["post_jumps"]["jump_means_post"],
            )
        return cls(z=data["z"], K=float(data["K"]), post_jumps=post)


def tilted_jump_law(signed_means: np.ndarray, z: np.ndarray, intensity_pre: float) -> PostJumpLaw:
    """Tilt independent exponential jump marginals by exp(z.y).

    With signed means m_j the tilted law keeps the exponential family:
    intensity mu0 = muInf * prod 1/(1 - m_j z_j), means m_j/(1 - m_j z_j).
    Requires |m_j z_j| < 1.
    """
    m = np.asarray(signed_means, dtype=float)
    prod = m * np.asarray(z, dtype=float)
    if np.any(np.abs(prod) >= 1.0):
        raise TiltInfeasible(
            f"jump tilt infeasible: max |w_j z_j| = {float(np.max(np.abs(prod))):.6g} >= 1"
        )
    scale = 1.0 - prod
    return PostJumpLaw(
        intensity_post=float(intensity_pre / np.prod(scale)),
        jump_means_post=m / scale,
    )


def solve_tilt(model: ModelSpec) -> TiltSolution:
    """Solve for the tilt vector z and compensator K of the measure change."""
    gram = model.gram()
    r = model.drift_r
    try:
        factor = cho_factor(gram)  # Gram matrix is SPD for any valid model
    except np.linalg.LinAlgError as exc:
        raise TiltInfeasible(f"sigma.sigma^T is not positive definite: {exc}") from exc
    z_diffusion = cho_solve(factor, r)

    jumps = model.jumps
    if jumps is None or jumps.intensity_pre == 0.0:
        K = 0.5 * float(z_diffusion @ gram @ z_diffusion)
        post = None
        if jumps is not None:
            # zero-intensity jumps: vacuous law, keep the untilted means
            post = PostJumpLaw(intensity_post=0.0, jump_means_post=jumps.signed_means())
        return TiltSolution(z=z_diffusion, K=K, post_jumps=post)

    mu_inf = jumps.intensity_pre
    m_inf = jumps.signed_means()

    def feasible(z: np.ndarray) -> bool:
        return bool(np.all(np.abs(m_inf * z) < 1.0))

    def target(z: np.ndarray) -> np.ndarray:
        law = tilted_jump_law(m_inf, z, mu_inf)
        rhs = r - law.intensity_post * law.jump_means_post + mu_inf * m_inf
        return cho_solve(factor, rhs)

    z = z_diffusion
    shrink = 0
    while not feasible(z):
        z = 0.5 * z
        shrink += 1
        if shrink > 200:  # unreachable: z -> 0 is always feasible
            raise TiltInfeasible("could not find a feasible starting tilt")

    converged = False
    stalls = 0
    best = math.inf
    for _ in range(FIXED_POINT_MAXITER):
        direction = target(z) - z
        delta = float(np.max(np.abs(direction)))
        if delta < FIXED_POINT_TOL:
            converged = True
        if converged:
            # refine past the nominal tolerance until machine stall, so the
            # linear-system residual stays relative even for tiny drifts
            if delta >= best:
                stalls += 1
                if stalls >= 5 or delta == 0.0:
                    break
            else:
                best = delta
                stalls = 0
        step = FIXED_POINT_DAMPING
        z_new = z + step * direction
        halvings = 0
        while not feasible(z_new):
            step *= 0.5
            z_new = z + step * direction
            halvings += 1
            if halvings > 60:
                raise TiltInfeasible(
                    "tilt iteration cannot stay inside |w_j z_j| < 1; "
                    "no exponential tilt exists for this drift"
                )
        z = z_new
    if not converged:
        raise TiltInfeasible(
            f"tilt fixed point did not contract within {FIXED_POINT_MAXITER} iterations"
        )

    law = tilted_jump_law(m_inf, z, mu_inf)
    rhs = r - law.intensity_post * law.jump_means_post + mu_inf * m_inf
    residual = float(np.max(np.abs(gram @ z - rhs)))
    scale = max(
        float(np.max(np.abs(rhs))),
        float(np.max(np.abs(gram))) * float(np.max(np.abs(z))),
        1e-300,
    )
    if residual > RESIDUAL_RTOL * scale:
        raise TiltInfeasible(f"tilt residual {residual:.3e} exceeds tolerance")
    K = (
        0.5 * float(z @ gram @ z)
        - float(z @ (mu_inf * m_inf))
        + law.intensity_post
        - mu_inf
    )
    return TiltSolution(z=z, K=K, post_jumps=law)


def log_lr_increment(tilt: TiltSolution, dx: np.ndarray, dt: float = 1.0) -> float:
    """One increment of log L: z.dx - K*dt."""
    if dt <= 0.0:
        raise ValueError(f"dt must be > 0, got {dt}")
    return float(tilt.z @ np.asarray(dx, dtype=float)) - tilt.K * dt


def effective_diffusion(model: ModelSpec, tilt: TiltSolution) -> float:
    """Diffusion coefficient B = z.(sigma.sigma^T).z of the posterior process."""
    return float(tilt.z @ model.gram() @ tilt.z)
