import math

import numpy as np
import pytest
from scipy.integrate import dblquad

import driftdetect as dd
from driftdetect.errors import BetaCollision
from driftdetect.freeboundary import jump_generator_assemble


def test_Z_values():
    assert dd.Z(0.5) == pytest.approx(-2.0, abs=1e-15)
    assert dd.Z(0.9) == pytest.approx(math.log(9.0) - 1.0 / 0.9, rel=1e-15)
    assert dd.Z(1e-301) == -math.inf
    for bad in (0.0, 1.0, -0.5, 2.0):
        with pytest.raises(ValueError):
            dd.Z(bad)


def test_Z_monotone():
    u = np.linspace(1e-4, 1.0 - 1e-4, 300)
    vals = [dd.Z(float(v)) for v in u]
    assert np.all(np.diff(vals) > 0.0)


def test_y_trivial_cases(study_B):
    assert dd.y_eval(0.5, study_B, 0.1, 0.0) == 0.0
    assert dd.y_eval(0.0, study_B, 0.1, 0.1) == 0.0
    assert abs(dd.y_eval(1e-6, study_B, 0.1, 0.1)) < 1e-5
    with pytest.raises(ValueError):
        dd.y_eval(1.0, study_B, 0.1, 0.1)
    with pytest.raises(ValueError):
        dd.y_eval(0.5, -1.0, 0.1, 0.1)


def test_y_against_published_threshold(study_B):
    # at the published alarm level the smooth-fit value is -1
    assert dd.y_eval(0.85, study_B, 0.1, 0.1) == pytest.approx(-1.0, abs=0.05)


def test_y_negative_and_nonincreasing(study_B):
    grid = np.linspace(0.02, 0.98, 30)
    vals = np.array([dd.y_eval(float(s), study_B, 0.1, 0.1) for s in grid])
    assert np.all(vals < 0.0)
    assert np.all(np.diff(vals) < 0.0)


def test_y_shape_across_parameter_grid():
    grid = np.linspace(0.05, 0.95, 12)
    for B in (0.4, 3.0):
        for rate in (0.05, 0.4):
            for c in (0.05, 1.0):
                vals = np.array([dd.y_eval(float(s), B, rate, c) for s in grid])
                assert np.all(vals < 0.0)
                assert np.all(np.diff(vals) < 0.0)
                signs = np.sign(vals + 1.0)
                assert int(np.sum(np.diff(signs) != 0.0)) <= 1  # at most one root


def test_solve_threshold_study_case(study_threshold):
    sol = study_threshold
    assert sol.root_found
    assert sol.A_star == pytest.approx(0.85, abs=0.01)
    assert abs(sol.smooth_fit_residual()) < 1e-8
    assert sol.value(sol.A_star) == 1.0 - sol.A_star
    eps = 1e-6
    assert abs(sol.value(sol.A_star - eps) - (1.0 - (sol.A_star - eps))) < 1e-10
    assert abs(dd.y_eval(1e-4, sol.B, sol.rate, sol.c)) < 1e-3


def test_root_unique_by_sign_sweep(study_B):
    grid = np.linspace(1e-3, 1.0 - 1e-6, 1000)
    vals = np.array([dd.y_eval(float(s), study_B, 0.1, 0.1) + 1.0 for s in grid])
    assert int(np.sum(np.diff(np.sign(vals)) != 0.0)) == 1


def test_value_function_shape(study_threshold):
    xs = np.linspace(0.0, 1.0, 201)
    vals = np.array([study_threshold.value(float(x)) for x in xs])
    assert np.all(vals <= 1.0 + 1e-12)
    assert np.all(vals <= 1.0 - xs + 1e-10)
    assert np.all(np.diff(vals) <= 1e-10)  # nonincreasing
    second = np.diff(vals, 2)
    assert np.all(second <= 1e-6)  # concave
    with pytest.raises(ValueError):
        study_threshold.value(1.5)


def test_y_curve_matches_y_eval(study_threshold):
    s, y = study_threshold.y_curve[17]
    assert y == pytest.approx(dd.y_eval(float(s), study_threshold.B, 0.1, 0.1), rel=1e-12)
    assert study_threshold.y_curve[0, 0] == 0.0
    assert study_threshold.y_curve[-1, 0] == pytest.approx(study_threshold.A_star)
    assert study_threshold.y_curve[-1, 1] == pytest.approx(-1.0, abs=1e-8)


def test_threshold_monotone_in_cost():
    stars = [dd.solve_threshold(1.0, 0.1, c).A_star for c in (0.1, 1.0, 10.0, 1e6)]
    assert all(a > b for a, b in zip(stars, stars[1:]))
    assert stars[-1] < 0.01


def test_threshold_scale_invariance(study_B):
    base = dd.solve_threshold(study_B, 0.1, 0.1).A_star
    kappa = 3.7
    scaled = dd.solve_threshold(kappa * study_B, kappa * 0.1, kappa * 0.1).A_star
    assert scaled == pytest.approx(base, abs=1e-6)


def test_no_root_flag():
    # tiny cost: |y| stays below 1 everywhere reachable
    with pytest.warns(RuntimeWarning):
        sol = dd.solve_threshold(1.0, 0.1, 1e-9, curve_points=64)
    assert not sol.root_found
    assert sol.A_star == pytest.approx(1.0 - 1e-6)


# --- Lemma 4.3 reductions -------------------------------------------------

def jump_target(x: float, s: float) -> float:
    e = math.exp(s)
    return x * e / (x * (e - 1.0) + 1.0)


def iplus_2d(f, x, b1, b2):
    hi = 60.0 / min(b1, b2)
    val, _ = dblquad(
        lambda y2, y1: f(jump_target(x, y1 + y2)) * b1 * b2 * math.exp(-b1 * y1 - b2 * y2),
        0.0, hi, 0.0, hi, epsabs=1e-10, epsrel=1e-10,
    )
    return val


def iminus_2d(f, x, b1, b2):
    hi = 60.0 / min(b1, b2)
    val, _ = dblquad(
        lambda y2, y1: f(jump_target(x, -(y1 + y2))) * b1 * b2 * math.exp(-b1 * y1 - b2 * y2),
        0.0, hi, 0.0, hi, epsabs=1e-10, epsrel=1e-10,
    )
    return val


def test_integral_reduction_trivial_cases():
    const = lambda v: 4.2
    zero = lambda v: 0.0
    assert dd.integral_reduction(const, zero, 0.3, 2.0, 3.0, "plus") == pytest.approx(4.2)
    assert dd.integral_reduction(const, zero, 0.3, 2.0, 3.0, "minus") == pytest.approx(4.2)
    f = lambda v: v * v
    fp = lambda v: 2.0 * v
    assert dd.integral_reduction(f, fp, 1.0, 2.0, 3.0, "plus") == pytest.approx(1.0)
    assert dd.integral_reduction(f, fp, 1.0, 2.0, 3.0, "minus") == pytest.approx(1.0)


def test_integral_reduction_matches_double_quadrature():
    f = lambda v: v * v
    fp = lambda v: 2.0 * v
    assert dd.integral_reduction(f, fp, 0.5, 2.0, 3.0, "plus") == pytest.approx(
        iplus_2d(f, 0.5, 2.0, 3.0), abs=1e-6
    )
    assert dd.integral_reduction(f, fp, 0.5, 2.0, 3.0, "minus") == pytest.approx(
        iminus_2d(f, 0.5, 2.0, 3.0), abs=1e-6
    )


def test_integral_reduction_beta_collision():
    f = lambda v: v
    fp = lambda v: 1.0
    with pytest.raises(BetaCollision):
        dd.integral_reduction(f, fp, 0.5, 2.0, 2.0 + 1e-12, "plus")
    with pytest.raises(ValueError):
        dd.integral_reduction(f, fp, 0.5, -1.0, 2.0, "plus")
    with pytest.raises(ValueError):
        dd.integral_reduction(f, fp, 0.0, 1.0, 2.0, "plus")
    with pytest.raises(ValueError):
        dd.integral_reduction(f, fp, 0.5, 1.0, 2.0, "sideways")


def test_integral_reduction_hypoexponential_form():
    # I+ equals E[f(x e^S / (x(e^S - 1) + 1))] with S a hypoexponential sum
    rng = np.random.default_rng(11)
    b1, b2, x = 2.0, 3.0, 0.4
    n = 200_000
    s = rng.exponential(1.0 / b1, n) + rng.exponential(1.0 / b2, n)
    f = lambda v: np.sin(2.0 * v)
    fp = lambda v: 2.0 * np.cos(2.0 * v)
    draws = np.sin(2.0 * (x * np.exp(s) / (x * (np.exp(s) - 1.0) + 1.0)))
    closed = dd.integral_reduction(lambda v: math.sin(2 * v), lambda v: 2 * math.cos(2 * v), x, b1, b2, "plus")
    se = draws.std(ddof=1) / math.sqrt(n)
    assert abs(draws.mean() - closed) <= 3.0 * se


def test_jump_generator_constant_bookkeeping(jump_model, jump_tilt):
    x, k = 0.4, 2.3
    mu_inf = jump_model.jumps.intensity_pre
    mu0 = jump_tilt.post_jumps.intensity_post
    got = jump_generator_assemble(lambda v: k, lambda v: 0.0, lambda v: 0.0, x, jump_model, jump_tilt, 0.1)
    assert got == pytest.approx(k * ((1.0 - x) * mu_inf + x * mu0 - 1.0), rel=1e-12)


def test_jump_generator_zero_intensity_degenerates(study_model):
    # mu = 0: the assembly reduces to the diffusion generator minus f(x)
    model = dd.ModelSpec(
        dim=2, sigma=study_model.sigma, drift_r=study_model.drift_r,
        jumps=dd.JumpSpec(intensity_pre=0.0, jump_means_pre=[0.5, 0.5]),
    )
    tilt = dd.solve_tilt(model)
    f = (lambda v: math.sin(2 * v), lambda v: 2 * math.cos(2 * v), lambda v: -4 * math.sin(2 * v))
    x = 0.35
    diffusion_only = dd.generator_apply(*f, x, study_model, dd.solve_tilt(study_model), 0.1)
    assembled = jump_generator_assemble(*f, x, model, tilt, 0.1)
    assert assembled == pytest.approx(diffusion_only - f[0](x), rel=1e-12)


def test_jump_generator_matches_direct_quadrature(jump_model, jump_tilt):
    z = jump_tilt.z
    w = jump_model.jumps.jump_means_pre
    w_post = jump_tilt.post_jumps.jump_means_post
    mu_inf = jump_model.jumps.intensity_pre
    mu0 = jump_tilt.post_jumps.intensity_post
    B = dd.effective_diffusion(jump_model, jump_tilt)
    rate = 0.1
    f = lambda v: math.sin(2.5 * v) + v * v
    fp = lambda v: 2.5 * math.cos(2.5 * v) + 2.0 * v
    fpp = lambda v: -6.25 * math.sin(2.5 * v) + 2.0

    def direct(x: float) -> float:
        drift = fp(x) * (rate * (1.0 - x) + x * (1.0 - x) * (mu_inf - mu0))
        diff = 0.5 * fpp(x) * x * x * (1.0 - x) ** 2 * B

        def integrand(y2, y1):
            s = z[0] * y1 + z[1] * y2
            pre = mu_inf * math.exp(-y1 / w[0] - y2 / w[1]) / (w[0] * w[1])
            post = mu0 * math.exp(-y1 / w_post[0] - y2 / w_post[1]) / (w_post[0] * w_post[1])
            return f(jump_target(x, s)) * ((1.0 - x) * pre + x * post)

        tail, _ = dblquad(integrand, 0.0, 40.0, 0.0, 40.0, epsabs=1e-10, epsrel=1e-10)
        return drift + diff - f(x) + tail

    for x in (0.3, 0.7):
        assert jump_generator_assemble(f, fp, fpp, x, jump_model, jump_tilt, rate) == pytest.approx(
            direct(x), abs=1e-5
        )


def test_negative_jump_generator_matches_direct_quadrature():
    model = dd.ModelSpec(
        dim=2, sigma=np.array([[0.5, 0.0], [0.2, 0.45]]), drift_r=[0.3, 0.25],
        jumps=dd.JumpSpec(intensity_pre=0.8, jump_means_pre=[0.3, 0.2], direction="negative"),
    )
    tilt = dd.solve_tilt(model)
    z = tilt.z
    w = model.jumps.jump_means_pre
    w_post = np.abs(tilt.post_jumps.jump_means_post)
    mu_inf = model.jumps.intensity_pre
    mu0 = tilt.post_jumps.intensity_post
    B = dd.effective_diffusion(model, tilt)
    rate = 0.15
    f = lambda v: v * v * v
    fp = lambda v: 3.0 * v * v
    fpp = lambda v: 6.0 * v

    def direct(x: float) -> float:
        drift = fp(x) * (rate * (1.0 - x) + x * (1.0 - x) * (mu_inf - mu0))
        diff = 0.5 * fpp(x) * x * x * (1.0 - x) ** 2 * B

        def integrand(y2, y1):  # y already reflected to the positive orthant
            s = -(z[0] * y1 + z[1] * y2)
            pre = mu_inf * math.exp(-y1 / w[0] - y2 / w[1]) / (w[0] * w[1])
            post = mu0 * math.exp(-y1 / w_post[0] - y2 / w_post[1]) / (w_post[0] * w_post[1])
            return f(jump_target(x, s)) * ((1.0 - x) * pre + x * post)

        tail, _ = dblquad(integrand, 0.0, 40.0, 0.0, 40.0, epsabs=1e-10, epsrel=1e-10)
        return drift + diff - f(x) + tail

    x = 0.45
    assert jump_generator_assemble(f, fp, fpp, x, model, tilt, rate) == pytest.approx(
        direct(x), abs=1e-5
    )
