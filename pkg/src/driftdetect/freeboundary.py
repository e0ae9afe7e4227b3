"""Free-boundary solver for the diffusion-only alarm threshold.

On the continuation region the value function solves

    rate*(1-x) f'(x) + (B/2) x^2 (1-x)^2 f''(x) = -c x,        0 <= x < A*,
    f(x) = 1 - x,                                              A* <= x <= 1,

glued by continuous fit f(A*-) = 1 - A*, smooth fit f'(A*-) = -1 and normal
entrance f'(0+) = 0. Writing y = f' the ODE integrates in closed form to

    y(s) = -(2c/B) * Int_0^s exp{-(2*rate/B) [Z(s) - Z(u)]} / (u (1-u)^2) du,
    Z(u) = log(u / (1-u)) - 1/u,

and the alarm level A* is the root of y(A) = -1.

Numerics: the weight exp{(2*rate/B) Z(u)} dies like exp(-(2*rate/B)/u) as
u -> 0, so the integral is cut below the double-precision underflow point of
the exponent and mapped through v = 1/u on (0, 0.05), which turns the
essential decay into a plain exponential. Near u = 1 the 1/(1-u)^2 end is
mapped through v = 1/(1-u). Quadrature accumulations run at a tighter
tolerance than the 1e-9 contract so root polishing stays noise-free.

The module also carries the closed-form reductions of the two-dimensional
tilted-jump integrals to weighted one-dimensional ones, plus the assembled
posterior generator for the exponential-jump model. Solving the optimal
threshold for jump models is out of scope; only the generator assembly and
its verification hooks are provided.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.chebyshev import Chebyshev
from scipy.integrate import quad
from scipy.optimize import brentq

from .errors import BetaCollision, QuadratureFailure
from .model import ModelSpec
from .tilt import TiltSolution, effective_diffusion

__all__ = [
    "Z",
    "y_eval",
    "ThresholdSolution",
    "solve_threshold",
    "integral_reduction",
    "jump_generator_assemble",
]

QUAD_RTOL = 1e-9          # contract on the reported y error
_QUAD_RTOL_INNER = 1e-11  # actual target, leaving headroom for the contract
_QUAD_LIMIT = 200         # subintervals per piece; far under the 1e7 eval cap
_EXP_UNDERFLOW = 745.0    # exp(-745) underflows double precision
_SPLIT_LOW = 0.05
_SPLIT_HIGH = 0.95
ROOT_XTOL = 1e-12
CURVE_POINTS = 512
BETA_TOL = 1e-9


def Z(u: float) -> float:
    """Z(u) = log(u/(1-u)) - 1/u on (0,1); -inf sentinel below 1e-300."""
    if not 0.0 < u < 1.0:
        raise ValueError(f"Z is defined on (0, 1), got {u}")
    if u < 1e-300:
        return -math.inf
    return math.log(u / (1.0 - u)) - 1.0 / u


def _quad_piece(fn, lo: float, hi: float) -> tuple[float, float]:
    if hi <= lo:
        return 0.0, 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        val, err = quad(fn, lo, hi, epsabs=1e-300, epsrel=_QUAD_RTOL_INNER, limit=_QUAD_LIMIT)
    return val, err


def _checked_total(pieces: list[tuple[float, float]], context: str) -> float:
    """Sum quadrature pieces, enforcing the relative-error contract on the
    total (a vanishing piece may carry a huge relative error harmlessly)."""
    total = sum(v for v, _ in pieces)
    err = sum(e for _, e in pieces)
    if err > max(QUAD_RTOL * abs(total), 1e-13):
        raise QuadratureFailure(
            f"quadrature error {err:.3e} exceeds {QUAD_RTOL:.0e} relative for {context}"
        )
    return total


def y_eval(s: float, B: float, rate: float, c: float) -> float:
    """Derivative y(s) = f'(s) of the continuation value, by adaptive quadrature."""
    if B <= 0.0 or rate <= 0.0:
        raise ValueError("B and rate must be > 0")
    if c < 0.0:
        raise ValueError("c must be >= 0")
    if not 0.0 <= s < 1.0:
        raise ValueError(f"y is evaluated on [0, 1), got {s}")
    if s == 0.0 or c == 0.0:
        return 0.0

    w = 2.0 * rate / B
    z_s = Z(s)

    # Quadrature only sees exponents <= 0: Z is increasing, u <= s.
    def integrand(u: float) -> float:
        return math.exp(-w * (z_s - Z(u))) / (u * (1.0 - u) ** 2)

    # Cut below the underflow point of the exponential weight.
    target = z_s - _EXP_UNDERFLOW / w
    lo = 1e-12
    if Z(lo) < target:
        a, b = lo, s
        for _ in range(200):
            mid = 0.5 * (a + b)
            if Z(mid) < target:
                a = mid
            else:
                b = mid
        lo = a

    pieces = []
    mid_lo = min(_SPLIT_LOW, s)
    if mid_lo > lo:
        def near_zero(v: float) -> float:  # u = 1/v
            u = 1.0 / v
            return math.exp(-w * (z_s - Z(u))) * v / (v - 1.0) ** 2

        pieces.append(_quad_piece(near_zero, 1.0 / mid_lo, 1.0 / lo))
    if s > _SPLIT_LOW:
        pieces.append(_quad_piece(integrand, _SPLIT_LOW, min(s, _SPLIT_HIGH)))
    if s > _SPLIT_HIGH:
        def near_one(v: float) -> float:  # u = 1 - 1/v, du = dv/v^2
            u = 1.0 - 1.0 / v
            return math.exp(-w * (z_s - Z(u))) / u

        pieces.append(_quad_piece(near_one, 1.0 / (1.0 - _SPLIT_HIGH), 1.0 / (1.0 - s)))
    return -(2.0 * c / B) * _checked_total(pieces, f"y({s:g})")


@dataclass(frozen=True)
class ThresholdSolution:
    """Optimal alarm level with its value function and boundary curve."""

    A_star: float
    B: float
    rate: float
    c: float
    y_curve: np.ndarray          # (CURVE_POINTS, 2) sampled (s, y(s))
    root_found: bool
    _value_antideriv: Chebyshev

    def value(self, x: float) -> float:
        """Continuation value V(x); equals 1 - x on the stopping region."""
        if not 0.0 <= x <= 1.0:
            raise ValueError(f"V is defined on [0, 1], got {x}")
        if x >= self.A_star:
            return 1.0 - x
        F = self._value_antideriv
        return 1.0 - self.A_star - (F(self.A_star) - F(x))

    def smooth_fit_residual(self) -> float:
        return y_eval(self.A_star, self.B, self.rate, self.c) + 1.0

    def to_dict(self) -> dict:
        return {
            "A_star": self.A_star,
            "B": self.B,
            "rate": self.rate,
            "c": self.c,
            "root_found": self.root_found,
        }


def solve_threshold(B: float, rate: float, c: float, curve_points: int = CURVE_POINTS) -> ThresholdSolution:
    """Root-find y(A) = -1, then assemble V on a Chebyshev grid of (0, A*].

    When even y(1 - 1e-6) stays above -1 the alarm is never optimal below 1;
    the solution is returned flagged with A* = 1 - 1e-6 instead of raising.
    """
    if B <= 0.0 or rate <= 0.0 or c <= 0.0:
        raise ValueError("B, rate and c must all be > 0")

    def shifted(a: float) -> float:
        return y_eval(a, B, rate, c) + 1.0

    # Geometric sweep of 1 - A from 0.9 down to 1e-6 to bracket the sign change.
    n_sweep = 40
    ratio = (1e-6 / 0.9) ** (1.0 / (n_sweep - 1))
    sweep = 1.0 - 0.9 * ratio ** np.arange(n_sweep)
    root_found = False
    a_star = sweep[-1]
    prev_a, prev_val = sweep[0], shifted(sweep[0])
    if prev_val <= 0.0:
        # y already below -1 at A = 0.1: bracket from a tiny left edge.
        a_star = brentq(shifted, 1e-8, prev_a, xtol=ROOT_XTOL)
        root_found = True
    else:
        for a in sweep[1:]:
            val = shifted(a)
            if val <= 0.0:
                a_star = brentq(shifted, prev_a, a, xtol=ROOT_XTOL)
                root_found = True
                break
            prev_a, prev_val = a, val
    if not root_found:
        warnings.warn(
            "y(1 - 1e-6) > -1: alarm never optimal below 1; returning the flagged edge",
            RuntimeWarning,
        )

    # Chebyshev-Lobatto samples of y on [0, A*]; y(0) = 0.
    j = np.arange(curve_points)
    nodes = 0.5 * a_star * (1.0 - np.cos(math.pi * j / (curve_points - 1)))
    values = np.array([y_eval(float(s), B, rate, c) for s in nodes])
    interp = Chebyshev.fit(nodes, values, deg=curve_points - 1, domain=[0.0, a_star])
    curve = np.column_stack([nodes, values])
    curve.flags.writeable = False
    return ThresholdSolution(
        A_star=float(a_star),
        B=B,
        rate=rate,
        c=c,
        y_curve=curve,
        root_found=root_found,
        _value_antideriv=interp.integ(),
    )


def _logit(v: float) -> float:
    return math.log(v / (1.0 - v))


def _weighted_tail_integral(f_prime, x: float, beta: float, side: str) -> float:
    """Int f'(v) exp(-+ beta (logit v - logit x)) dv over (x,1) or (0,x).

    Folding the ((1-x)/x)^{-+beta} prefactor of the closed form into the
    integrand keeps every weight in (0, 1].
    """
    ref = _logit(x)

    if side == "plus":
        def fn(v: float) -> float:
            return f_prime(v) * math.exp(-beta * (_logit(v) - ref))

        piece = _quad_piece(fn, x, 1.0)
    else:
        def fn(v: float) -> float:
            return f_prime(v) * math.exp(beta * (_logit(v) - ref))

        piece = _quad_piece(fn, 0.0, x)
    return _checked_total([piece], f"I{side} weight beta={beta:g} at x={x:g}")


def integral_reduction(
    f: Callable[[float], float],
    f_prime: Callable[[float], float],
    x: float,
    beta1: float,
    beta2: float,
    side: str = "plus",
) -> float:
    """Closed form of the tilted-jump double integral I+/I- at state x.

    I+ = f(x) - b1/(b2-b1) * J+(b2) + b2/(b2-b1) * J+(b1)
    I- = f(x) + b1/(b2-b1) * J-(b2) - b2/(b2-b1) * J-(b1)

    with J the logit-weighted one-dimensional integrals of f'. Requires
    beta1 != beta2 (the hypoexponential density degenerates otherwise).
    """
    if side not in ("plus", "minus"):
        raise ValueError(f"side must be 'plus' or 'minus', got {side!r}")
    if beta1 <= 0.0 or beta2 <= 0.0:
        raise ValueError("beta1 and beta2 must be > 0")
    if abs(beta1 - beta2) < BETA_TOL:
        raise BetaCollision(f"beta1 = {beta1:g} and beta2 = {beta2:g} collide")
    if not 0.0 < x <= 1.0:
        raise ValueError(f"state x must lie in (0, 1], got {x}")
    if x == 1.0:
        # The jump maps x = 1 to itself on both sides.
        return f(1.0)
    j2 = _weighted_tail_integral(f_prime, x, beta2, side)
    j1 = _weighted_tail_integral(f_prime, x, beta1, side)
    ratio1 = beta1 / (beta2 - beta1)
    ratio2 = beta2 / (beta2 - beta1)
    if side == "plus":
        return f(x) - ratio1 * j2 + ratio2 * j1
    return f(x) + ratio1 * j2 - ratio2 * j1


def jump_generator_assemble(
    f: Callable[[float], float],
    f_prime: Callable[[float], float],
    f_second: Callable[[float], float],
    x: float,
    model: ModelSpec,
    tilt: TiltSolution,
    rate: float,
) -> float:
    """Posterior generator for the exponential-jump model at state x.

    Assembles drift, diffusion, the f(x)[(1-x) muInf + x mu0 - 1] bookkeeping
    term and the two weighted integrals, using the I+/I- reductions with
    exponents gamma_i = 1/(z_i w_i): the pre-change measure contributes
    I[gamma], the tilted post-change one I[gamma -+ 1].
    """
    if not 0.0 < x < 1.0:
        raise ValueError(f"state x must lie in (0, 1), got {x}")
    jumps = model.jumps
    if jumps is None:
        raise ValueError("jump_generator_assemble needs a model with jumps")
    if tilt.post_jumps is None:
        raise ValueError("tilt carries no post-change jump law")
    z = tilt.z
    w = jumps.jump_means_pre
    if np.any(z * w <= 0.0):
        raise ValueError("the reduction requires z_i w_i > 0 for every coordinate")
    gamma = 1.0 / (z * w)
    mu_inf = jumps.intensity_pre
    mu_post = tilt.post_jumps.intensity_post

    B = effective_diffusion(model, tilt)
    out = (
        -f(x)
        + f_prime(x) * (rate * (1.0 - x) + x * (1.0 - x) * (mu_inf - mu_post))
        + 0.5 * f_second(x) * x * x * (1.0 - x) ** 2 * B
    )
    side = "plus" if jumps.direction == "positive" else "minus"
    shift = -1.0 if side == "plus" else 1.0
    if mu_inf > 0.0:
        out += (1.0 - x) * mu_inf * integral_reduction(f, f_prime, x, gamma[0], gamma[1], side)
    if mu_post > 0.0:
        out += x * mu_post * integral_reduction(
            f, f_prime, x, gamma[0] + shift, gamma[1] + shift, side
        )
    return out
