import math

import numpy as np
import pytest

from branchfront import control, semigroup
from branchfront.levy import LevyModel
from branchfront.semigroup import heaviside

JUMPY = LevyModel(drift=0.3, diffusion=0.5, jump_intensity=2.0,
                  jump_pmf=((0.5, 0.25), (-1.0, 0.75)))


def _paths(model, t=1.0, J=50, n=500, seed=3, x=0.0):
    return control.sample_paths(model, x, t, J, np.random.default_rng(seed), n)


def test_zero_control_identity(bm, dyadic_rf):
    paths = _paths(bm)
    vals, clamped = control.xi_batch(paths, control.constant_policy(dyadic_rf, 0.0), dyadic_rf,
                                     heaviside)
    expected = heaviside(paths.states[:, -1]) - 0.25 * paths.t
    assert np.allclose(vals, expected, atol=1e-12)
    assert clamped == 0


def test_minus_one_identity(bm, dyadic_rf):
    paths = _paths(JUMPY, t=0.8)
    vals, _ = control.xi_batch(paths, control.constant_policy(dyadic_rf, -1.0), dyadic_rf,
                               heaviside)
    assert np.allclose(vals, math.exp(-0.8) * heaviside(paths.states[:, -1]), atol=1e-12)


def test_gamma_on_constant_one(bm, dyadic_rf):
    one = lambda x: np.ones_like(x)
    vals, _ = control.xi_batch(_paths(bm, t=1.7), control.constant_policy(dyadic_rf, 1.0),
                               dyadic_rf, one)
    assert np.allclose(vals, 1.0, atol=1e-12)


def test_stationary_alpha(bm, quarter_rf):
    a = quarter_rf.alpha
    z = float(quarter_rf.f_prime(a))
    const = lambda x: np.full_like(x, a)
    vals, _ = control.xi_batch(_paths(JUMPY, t=2.0), control.constant_policy(quarter_rf, z),
                               quarter_rf, const)
    assert np.allclose(vals, a, atol=1e-12)


def test_sample_path_moments():
    model = LevyModel(drift=0.4, diffusion=1.2)
    paths = control.sample_paths(model, 1.0, 2.0, 10, np.random.default_rng(0), 200_000)
    end = paths.states[:, -1]
    # X = x - L
    assert abs(end.mean() - (1.0 - 0.8)) < 4 * 1.2 * math.sqrt(2.0 / 200_000)
    assert end.var() == pytest.approx(1.44 * 2.0, rel=0.02)
    assert np.all(paths.states[:, 0] == 1.0)


def test_single_step_and_drift_only():
    p = control.sample_path(LevyModel(drift=0.5), 0.0, 2.0, 1, np.random.default_rng(0))
    assert p.J == 1 and p.states.tolist() == [0.0, -1.0]
    p = control.sample_path(LevyModel(drift=0.5), 0.0, 2.0, 4, np.random.default_rng(0))
    assert np.allclose(p.states, [0, -0.25, -0.5, -0.75, -1.0], atol=1e-15)


def test_xi_single_path(bm, dyadic_rf):
    p = control.sample_path(bm, 0.0, 1.0, 20, np.random.default_rng(4))
    val = control.xi(p, control.constant_policy(dyadic_rf, 0.0), dyadic_rf, heaviside)
    assert val == pytest.approx(float(heaviside(p.states[-1])) - 0.25)
    with pytest.raises(ValueError):
        control.xi(_paths(bm), control.constant_policy(dyadic_rf, 0.0), dyadic_rf, heaviside)


def test_estimate_seeded_and_thread_independent(bm, dyadic_rf):
    pol = control.constant_policy(dyadic_rf, 0.0)
    kw = dict(n_paths=10_000, J=20, seed=7)
    a = control.estimate_value(bm, 0.0, 1.0, pol, dyadic_rf, heaviside, **kw)
    b = control.estimate_value(bm, 0.0, 1.0, pol, dyadic_rf, heaviside, threads=3, **kw)
    assert a == b
    c = control.estimate_value(bm, 0.0, 1.0, pol, dyadic_rf, heaviside, n_paths=10_000, J=20,
                               seed=8)
    assert c.mean != a.mean
    assert abs(a.mean - 0.25) < 4 * a.stderr


def test_clamp_count(bm, dyadic_rf):
    pol = control.constant_policy(dyadic_rf, 5.0)
    z, n = pol(0.0, np.zeros(7))
    assert n == 7 and np.all(z == 1.0)
    est = control.estimate_value(bm, 0.0, 1.0, pol, dyadic_rf, heaviside, n_paths=100, J=10)
    assert est.n_clamped == 1000


def test_bundled_policies_in_range(dyadic_rf):
    pols = control.bundled_policies(dyadic_rf, 1.0, seed=2)
    assert set(pols) == {"zero", "minus-one", "gamma", "random-constant", "ramp"}
    for pol in pols.values():
        for s in (0.0, 0.5, 1.0):
            z, n = pol(s, np.linspace(-3, 3, 5))
            assert n == 0 and np.all((z >= -1) & (z <= 1))
    assert pols["ramp"](1.0, np.zeros(1))[0][0] == 1.0


@pytest.fixture(scope="module")
def small_solution(bm, dyadic_rf):
    g = semigroup.heaviside_grid(-10, 10, 801)
    return g, control.solution_path(bm, dyadic_rf, g, 1.0, J=40)


def test_fenchel_gaps(bm, dyadic_rf, small_solution):
    g, sol = small_solution
    opt = control.optimal_policy(bm, dyadic_rf, g, 1.0, J=40, snapshots=sol)
    paths = _paths(bm, J=40, n=400)
    gaps = control.fenchel_gaps(paths, opt, dyadic_rf, sol)
    assert gaps.max() <= 1e-12
    assert np.abs(gaps).mean() < 1e-3
    other = control.fenchel_gaps(paths, control.constant_policy(dyadic_rf, 0.0), dyadic_rf, sol)
    assert other.max() <= 1e-12 and np.abs(other).mean() > 1e-2


@pytest.mark.parametrize("which", ["one", "alpha"])
def test_optimal_policy_constant_on_constants(bm, quarter_rf, which):
    level = 1.0 if which == "one" else quarter_rf.alpha
    g = semigroup.constant_grid(level, -8, 8, 321)
    pol = control.optimal_policy(bm, quarter_rf, g, 1.0, J=10)
    for s in (0.0, 0.45, 1.0):
        z, _ = pol(s, np.linspace(-5, 5, 11))
        assert np.allclose(z, float(quarter_rf.f_prime(level)), atol=1e-8)


def test_martingale_start_and_constant(bm, dyadic_rf, small_solution):
    g, sol = small_solution
    chk = control.martingale_check(bm, dyadic_rf, sol, 0.0, 1.0, [0.0], n_paths=200, J=40)
    assert chk.max_deviation == pytest.approx(0.0, abs=1e-15)
    one = semigroup.constant_grid(1.0, -8, 8, 321)
    sol1 = control.solution_path(bm, dyadic_rf, one, 1.0, J=10)
    chk = control.martingale_check(bm, dyadic_rf, sol1, 0.3, 1.0, [0.0, 0.5, 1.0], n_paths=200)
    assert chk.max_deviation < 1e-12
    with pytest.raises(Exception):
        control.martingale_check(bm, dyadic_rf, sol1, 0.0, 1.0, [2.0], n_paths=200)
