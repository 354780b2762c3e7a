import warnings

import numpy as np
import pytest

from conftest import LinearOde, SplitSquares
from integrator import StepResult
from relaxation import (
    RelaxationConfig,
    gamma_residual,
    local_relax_step,
    relax_update,
    solve_gamma,
)
from utils import BracketingError, ConfigError, DegenerateRootError, PartitionIndexError, UnknownNameError


def planted_direction(u, gamma_star, rng):
    """d with eta(u + gamma* d) = eta(u) for eta = |u|^2 / 2.

    |cos(u, d)| >= 0.3 keeps r'(gamma*) = -u.d well above roundoff."""
    v = rng.normal(size=u.shape)
    while abs(u @ v) < 0.3 * np.linalg.norm(u) * np.linalg.norm(v):
        v = rng.normal(size=u.shape)
    if u @ v > 0:
        v = -v
    alpha = -2.0 * (u @ v) / (gamma_star * (v @ v))
    return alpha * v


def test_scalar_residual_is_quadratic():
    ode = LinearOde()
    u_old, d, eta_old, e = np.array([1.5]), np.array([-0.2]), 1.125, 0.9
    for gamma in (0.5, 1.0, 1.3):
        expected = 0.5 * (1.5 - 0.2 * gamma) ** 2 - eta_old - gamma * (e - eta_old)
        assert gamma_residual(ode, 0, u_old, d, eta_old, e, gamma) == pytest.approx(expected, abs=1e-15)


def test_closed_form_conservative_root(rng):
    ode = LinearOde(dim=5)
    cfg = RelaxationConfig()
    for _ in range(20):
        u_old = rng.normal(size=5)
        d = planted_direction(u_old, rng.uniform(0.7, 1.3), rng)
        eta_old = 0.5 * u_old @ u_old
        gamma, iterations, residual, fallback = solve_gamma(ode, 0, u_old, d, eta_old, eta_old, cfg)
        assert not fallback
        assert iterations > 0
        assert gamma == pytest.approx(-2.0 * (u_old @ d) / (d @ d), abs=1e-12)


@pytest.mark.parametrize("solver", ["bisect", "toms748"])
def test_solvers_agree_with_brent(rng, solver):
    ode = LinearOde(dim=3)
    brent = RelaxationConfig()
    other = RelaxationConfig(solver=solver)
    for _ in range(100):
        u_old = rng.normal(size=3)
        d = planted_direction(u_old, rng.uniform(0.5, 1.5), rng)
        eta_old = 0.5 * u_old @ u_old
        g_brent = solve_gamma(ode, 0, u_old, d, eta_old, eta_old, brent)[0]
        g_other = solve_gamma(ode, 0, u_old, d, eta_old, eta_old, other)[0]
        assert g_brent == pytest.approx(g_other, abs=1e-12)


def bisection_oracle(r, floor=0.1, delta=0.1, iterations=200):
    """Plain bisection on the bracket the solver starts from, widened until r changes sign"""
    lo, hi = max(1.0 - delta, floor), 1.0 + delta
    while r(lo) * r(hi) > 0:
        delta *= 2.0
        lo, hi = max(1.0 - delta, floor), 1.0 + delta
    for _ in range(iterations):
        mid = 0.5 * (lo + hi)
        if r(lo) * r(mid) <= 0:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def test_brent_matches_bisection_oracle(rng):
    ode = LinearOde(dim=3)
    cfg = RelaxationConfig()
    for _ in range(100):
        u_old = rng.normal(size=3)
        d = planted_direction(u_old, rng.uniform(0.5, 1.5), rng)
        eta_old = 0.5 * u_old @ u_old
        gamma = solve_gamma(ode, 0, u_old, d, eta_old, eta_old, cfg)[0]
        oracle = bisection_oracle(lambda g: gamma_residual(ode, 0, u_old, d, eta_old, eta_old, g))
        assert gamma == pytest.approx(oracle, abs=1e-12)


def test_planted_root_matches_bisection_oracle():
    ode = LinearOde()
    u_old, d = np.array([1.0]), np.array([-0.1])
    eta_old = 0.5
    # eta(u + gamma d) - eta_old - gamma (e - eta_old) vanishes at gamma* = 1.05
    e = eta_old + u_old[0] * d[0] + 0.5 * 1.05 * d[0] ** 2
    gamma = solve_gamma(ode, 0, u_old, d, eta_old, e, RelaxationConfig())[0]

    r = lambda g: gamma_residual(ode, 0, u_old, d, eta_old, e, g)  # noqa: E731
    lo, hi = 1.0, 1.2
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if r(lo) * r(mid) <= 0:
            hi = mid
        else:
            lo = mid
    assert gamma == pytest.approx(0.5 * (lo + hi), abs=1e-12)
    assert gamma == pytest.approx(1.05, abs=1e-12)


def test_curvature_fallback():
    ode = LinearOde()
    gamma, iterations, _, fallback = solve_gamma(
        ode, 0, np.array([1.0]), np.zeros(1), 0.5, 0.5, RelaxationConfig()
    )
    assert (gamma, iterations, fallback) == (1.0, 0, True)


def test_bracket_expansion_finds_distant_root():
    ode = LinearOde()
    u_old, d = np.array([1.0]), np.array([-0.1])
    e = 0.5 + u_old[0] * d[0] + 0.5 * 0.55 * d[0] ** 2
    gamma = solve_gamma(ode, 0, u_old, d, 0.5, e, RelaxationConfig())[0]
    assert gamma == pytest.approx(0.55, abs=1e-12)


def test_bracketing_failure():
    system = SplitSquares(K=4)
    u = np.array([0.0, 0.0, 0.0, 1.0])
    # r(gamma) = gamma / 2 + gamma^2 / 2 > 0 for every gamma > 0
    with pytest.raises(BracketingError) as err:
        solve_gamma(system, 3, u, u, 0.5, 1.0, RelaxationConfig())
    assert err.value.kappa == 3
    assert err.value.bracket[0] == pytest.approx(0.1)
    assert all(value > 0 for value in err.value.r_values)


def test_partition_index_is_checked():
    system = SplitSquares(K=2)
    u = np.ones(2)
    for kappa in (-1, 2):
        with pytest.raises(PartitionIndexError):
            solve_gamma(system, kappa, u, u, 0.5, 1.0, RelaxationConfig())
    with pytest.raises(PartitionIndexError):
        gamma_residual(LinearOde(), 1, np.ones(1), np.ones(1), 0.5, 0.5, 1.0)


def test_degenerate_root():
    ode = LinearOde()
    # r(gamma) = gamma^2 / 2 - gamma / 4, root at exactly 0.5
    with pytest.raises(DegenerateRootError):
        solve_gamma(ode, 0, np.zeros(1), np.ones(1), 0.0, 0.25, RelaxationConfig(gamma_floor=0.5))


def test_relax_update_endpoints():
    u_old, u_new = np.array([1.0, 2.0]), np.array([3.0, -1.0])
    u, t = relax_update(u_old, u_new, 0.5, 0.75, 1.0)
    np.testing.assert_array_equal(u, u_new)
    assert t == 0.75
    u, t = relax_update(u_old, u_new, 0.5, 0.75, 0.0)
    np.testing.assert_array_equal(u, u_old)
    assert t == 0.5


def _split_step():
    """Two partitions with planted roots 0.95 and 1.05 and a global root at 1"""
    u_old = np.ones(2)
    u_new = u_old - 0.1
    eta_old = 0.5 * u_old**2
    e = eta_old + (-0.1 + 0.005 * np.array([0.95, 1.05]))
    return u_old, StepResult(0.0, 0.1, u_new, 0.1, e, eta_old, None, 1)


def test_local_mode_takes_minimum(split_squares):
    u_old, step = _split_step()
    u, t, report = local_relax_step(split_squares, u_old, step, RelaxationConfig(mode="local"))
    np.testing.assert_allclose(report.gamma_local, [0.95, 1.05], atol=1e-12)
    assert report.gamma == pytest.approx(0.95, abs=1e-12)
    assert report.argmin_kappa == 0
    assert t == pytest.approx(0.095, abs=1e-12)
    np.testing.assert_allclose(u, 1.0 - 0.095, atol=1e-12)
    assert report.inequality_verified
    assert not report.fallback.any()
    np.testing.assert_allclose(report.eta_new, 0.5 * u**2)


def test_global_mode_uses_total_entropy(split_squares):
    u_old, step = _split_step()
    _, _, report = local_relax_step(split_squares, u_old, step, RelaxationConfig(mode="global"))
    assert report.gamma == pytest.approx(1.0, abs=1e-12)
    assert report.gamma_local.shape == (1,)
    assert report.gamma_global == report.gamma


def test_local_report_can_carry_global_gamma(split_squares):
    u_old, step = _split_step()
    cfg = RelaxationConfig(mode="local", report_global=True)
    _, _, report = local_relax_step(split_squares, u_old, step, cfg)
    assert report.gamma_global == pytest.approx(1.0, abs=1e-12)


def test_threads_give_identical_results():
    system = SplitSquares(K=16)
    rng = np.random.default_rng(7)
    u_old = rng.uniform(0.5, 1.5, size=16)
    u_new = 0.9 * u_old
    eta_old = 0.5 * u_old**2
    gammas = rng.uniform(0.9, 1.1, size=16)
    d = u_new - u_old
    e = eta_old + u_old * d + 0.5 * gammas * d**2
    step = StepResult(0.0, 0.1, u_new, 0.1, e, eta_old, None, 1)
    serial = local_relax_step(system, u_old, step, RelaxationConfig(mode="local"))
    threaded = local_relax_step(system, u_old, step, RelaxationConfig(mode="local", threads=4))
    np.testing.assert_array_equal(serial[2].gamma_local, threaded[2].gamma_local)
    np.testing.assert_array_equal(serial[0], threaded[0])
    assert serial[2].gamma == pytest.approx(gammas.min(), abs=1e-12)


def test_gamma_cap_keeps_inequality(split_squares):
    u_old, step = _split_step()
    _, t, report = local_relax_step(split_squares, u_old, step, RelaxationConfig(mode="local"), gamma_max=0.5)
    assert report.gamma == 0.5
    assert t == pytest.approx(0.05)
    assert report.inequality_verified


def test_mode_none_is_identity(split_squares):
    u_old, step = _split_step()
    u, t, report = local_relax_step(split_squares, u_old, step, RelaxationConfig(mode="none"))
    assert u is step.u_new
    assert t == step.t_new
    assert report.gamma == 1.0


def test_config_validation():
    with pytest.raises(UnknownNameError):
        RelaxationConfig(mode="partial")
    with pytest.raises(UnknownNameError):
        RelaxationConfig(solver="newton")
    with pytest.raises(ConfigError):
        RelaxationConfig(root_tol=0.0)
    with pytest.raises(ConfigError):
        RelaxationConfig(gamma_floor=1.0)
    with pytest.raises(ConfigError):
        RelaxationConfig(threads=0)
    with pytest.raises(ConfigError):
        RelaxationConfig.from_dict({"mode": "local", "tolerance": 1e-12})
    cfg = RelaxationConfig.from_dict({"mode": "global", "root_tol": 1e-12})
    assert RelaxationConfig.from_dict(cfg.to_dict()).to_dict() == cfg.to_dict()


def test_no_warning_for_converged_solve():
    ode = LinearOde()
    u_old, d = np.array([1.0]), np.array([-0.1])
    e = 0.5 + u_old[0] * d[0] + 0.5 * 1.02 * d[0] ** 2
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        solve_gamma(ode, 0, u_old, d, 0.5, e, RelaxationConfig())
