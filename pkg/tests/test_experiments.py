import json
import os

import numpy as np
import pytest
import yaml

from experiments import (
    RunConfig,
    cmd_compare,
    cmd_convergence,
    cmd_gamma_history,
    cmd_run,
    convergence_rates,
    error_norms,
    experiment,
    parse_assignment,
    parse_value,
)
from utils import ConfigError, StepLimitError, UnknownNameError, read_csv, write_csv


def small_density_wave(outdir, **extra):
    values = {
        "problem": "density_wave",
        "p": 2,
        "N": 4,
        "dt": 0.01,
        "t_end": 0.05,
        "outdir": str(outdir),
        "verbose": 0,
    }
    values.update(extra)
    return RunConfig(values)


def test_parse_value():
    assert parse_value("3") == 3
    assert parse_value("1e-3") == 1e-3
    assert parse_value('"global"') == "global"
    assert parse_value("global") == "global"
    assert parse_value("[8, 16]") == [8, 16]
    assert parse_value("true") is True
    assert parse_assignment("relaxation.mode=local") == ("relaxation.mode", "local")
    with pytest.raises(ConfigError):
        parse_assignment("mode")
    with pytest.raises(ConfigError):
        parse_assignment("=3")


def test_unknown_keys():
    config = RunConfig()
    with pytest.raises(ConfigError):
        config.set("cfl", 0.5)
    with pytest.raises(ConfigError):
        config.set("relaxation.tolerance", 1e-12)
    with pytest.raises(ConfigError):
        config.set("relaxation.mode.extra", 1)
    with pytest.raises(ConfigError):
        config.set("relaxation", "local")


def test_config_precedence(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"problem": "sod", "N": 32, "relaxation": {"mode": "global"}}))
    config = RunConfig.from_sources(str(path), ["N=64", "relaxation.solver=bisect"])
    assert config.problem == "sod"
    assert config.N == 64
    assert config.relaxation["mode"] == "global"
    assert config.relaxation["solver"] == "bisect"
    spec, tab, relax = config.resolve()
    # unset values come from the problem
    assert config.p == 3
    assert config.dt == 5e-5
    assert tab.name == "RK44"
    assert relax.mode == "global"


def test_bad_config_file(tmp_path):
    with pytest.raises(ConfigError):
        RunConfig.from_sources(str(tmp_path / "missing.json"))
    path = tmp_path / "broken.json"
    path.write_text("{not json")
    with pytest.raises(ConfigError):
        RunConfig.from_sources(str(path))
    path.write_text("[1, 2]")
    with pytest.raises(ConfigError):
        RunConfig.from_sources(str(path))


def test_resolve_validation():
    with pytest.raises(ConfigError):
        RunConfig({"dt": 0.01, "adaptive_tol": 1e-6}).resolve()
    with pytest.raises(ConfigError):
        RunConfig({"dt": -0.01}).resolve()
    with pytest.raises(ConfigError):
        RunConfig({"N": 0}).resolve()
    with pytest.raises(ConfigError):
        RunConfig({"t_end": -1.0}).resolve()
    with pytest.raises(ConfigError):
        RunConfig({"adaptive_tol": 1e-6, "tableau": "RK44"}).resolve()
    with pytest.raises(UnknownNameError):
        RunConfig({"tableau": "RK45"}).resolve()
    with pytest.raises(UnknownNameError):
        RunConfig({"problem": "shu_osher"}).resolve()
    with pytest.raises(UnknownNameError):
        RunConfig({"relaxation": {"mode": "partial"}}).resolve()


def test_adaptive_config_keeps_problem_dt_as_first_step():
    config = RunConfig({"problem": "exp_entropy_ode", "tableau": "BSRK43", "adaptive_tol": 1e-6})
    config.resolve()
    assert config.dt == 0.1


def test_convergence_rates():
    rates = convergence_rates(np.array([8, 16, 32]), np.array([1e-2, 1.25e-3, 0.0]))
    assert np.isnan(rates[0])
    assert rates[1] == pytest.approx(3.0)
    assert np.isnan(rates[2])


def test_error_norms_vanish_at_initial_time(tmp_path):
    exp = experiment(small_density_wave(tmp_path))
    norms = error_norms(exp.field(exp.u0), exp.spec, 0.0, all_variables=True)
    for key in ("L1", "L2", "Linf", "L2_rho", "Linf_u", "L1_p"):
        assert norms[key] == pytest.approx(0.0, abs=1e-14)


def test_run_ode(tmp_path):
    config = RunConfig(
        {"problem": "quadratic_conserved_ode", "outdir": str(tmp_path), "verbose": 0, "relaxation": {"mode": "global"}}
    )
    summary, paths = cmd_run(config)
    assert summary["t"] == pytest.approx(10.0)
    # gamma != 1 can leave a short final step
    assert summary["steps"] in (100, 101)
    history = read_csv(paths["history"])
    assert len(history) == summary["steps"]
    np.testing.assert_allclose(history["eta_total"], 0.5, atol=1e-12)
    assert history["inequality_verified"].all()
    solution = read_csv(paths["solution"])
    np.testing.assert_allclose(solution["u"], solution["u_exact"], atol=1e-3)
    assert "elements" not in paths
    assert os.path.exists(tmp_path / "run_config.yml")


def test_run_density_wave(tmp_path):
    summary, paths = cmd_run(small_density_wave(tmp_path))
    assert summary["steps"] in (5, 6)
    assert summary["t"] == pytest.approx(0.05, abs=1e-12)
    assert summary["L2"] < 1e-2

    elements = read_csv(paths["elements"])
    assert len(elements) == 4
    assert list(elements.columns) == ["element", "x_center", "gamma_local", "eta", "rho_mean"]
    np.testing.assert_allclose(elements["x_center"], [0.25, 0.75, 1.25, 1.75])

    history = read_csv(paths["history"])
    assert history["inequality_verified"].all()
    assert (history["gamma"] <= history["gamma_min_local"] + 1e-15).all()
    np.testing.assert_allclose(history["mass"], history["mass"].iloc[0], rtol=1e-12)
    assert set(history.columns) >= {"step", "t", "dt", "argmin_kappa", "max_residual", "fallback_count"}

    solution = read_csv(paths["solution"])
    assert list(solution.columns) == ["x", "rho", "u", "p"]
    assert len(solution) == 4 * 3

    errors = read_csv(paths["errors"])
    assert errors["L2"].iloc[0] == pytest.approx(summary["L2"], rel=1e-15)

    with open(tmp_path / "run_config.yml") as f:
        record = yaml.safe_load(f)
    assert record["N"] == 4
    assert record["relaxation"]["mode"] == "local"
    assert (tmp_path / "versions.yml").exists()


def test_run_respects_step_limit(tmp_path):
    with pytest.raises(StepLimitError) as err:
        cmd_run(small_density_wave(tmp_path, max_steps=2))
    assert err.value.last_step == 2


def test_zero_final_time(tmp_path):
    df = cmd_convergence(small_density_wave(tmp_path, t_end=0.0), [2, 4])
    assert list(df["N"]) == [2, 4]
    assert (df["L2"] < 1e-14).all()
    table = read_csv(tmp_path / "convergence.csv")
    assert table["rate_L2"].isna().all()


def test_convergence_table(tmp_path):
    df = cmd_convergence(small_density_wave(tmp_path, p=3, t_end=0.1), [4, 8])
    assert list(df["dt"]) == pytest.approx([0.01, 0.005])
    assert df["L2"].iloc[1] < df["L2"].iloc[0]
    assert {"rate_L1", "rate_L2", "rate_Linf"} <= set(df.columns)


def test_convergence_needs_exact_solution(tmp_path):
    config = RunConfig({"problem": "sod", "outdir": str(tmp_path), "verbose": 0})
    with pytest.raises(ConfigError):
        cmd_convergence(config, [8, 16])
    with pytest.raises(ConfigError):
        cmd_convergence(small_density_wave(tmp_path), [])


def test_gamma_history(tmp_path):
    df = cmd_gamma_history(small_density_wave(tmp_path))
    assert len(df) in (5, 6)
    assert (df["gamma"] <= df["gamma_min_local"]).all()
    assert (df["gamma_q05"] <= df["gamma_q95"]).all()
    assert df["gamma_global"].notna().all()
    assert (tmp_path / "gamma_history.csv").exists()
    assert len(read_csv(tmp_path / "gamma_profile.csv")) == 4


def test_gamma_history_needs_relaxation(tmp_path):
    with pytest.raises(ConfigError):
        cmd_gamma_history(small_density_wave(tmp_path, relaxation={"mode": "none"}))


def test_compare(tmp_path):
    df = cmd_compare(small_density_wave(tmp_path))
    assert list(df.columns) == ["x", "rho_none", "rho_local", "rel_diff"]
    assert df["rel_diff"].abs().max() < 1e-3
    assert (tmp_path / "history_none.csv").exists()
    assert (tmp_path / "history_local.csv").exists()


def test_compare_uses_configured_mode(tmp_path):
    df = cmd_compare(small_density_wave(tmp_path, relaxation={"mode": "global"}))
    assert list(df.columns) == ["x", "rho_none", "rho_global", "rel_diff"]
    assert (tmp_path / "history_global.csv").exists()
    assert not (tmp_path / "history_local.csv").exists()
    with pytest.raises(ConfigError):
        cmd_compare(small_density_wave(tmp_path, relaxation={"mode": "none"}))


def test_invalid_numbers_are_config_errors(tmp_path):
    for key, value in (("dt", "abc"), ("t_end", [1]), ("adaptive_tol", "tight"), ("max_steps", 2.5)):
        with pytest.raises(ConfigError):
            small_density_wave(tmp_path, **{key: value}).resolve()


def test_output_path_must_be_a_directory(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("")
    for outdir in (blocker, blocker / "sub"):
        with pytest.raises(ConfigError):
            cmd_run(small_density_wave(outdir))


def test_convergence_needs_two_meshes(tmp_path):
    with pytest.raises(ConfigError):
        cmd_convergence(small_density_wave(tmp_path), [4])


def test_tables_round_trip_byte_identically(tmp_path):
    _, paths = cmd_run(small_density_wave(tmp_path / "run"))
    cmd_gamma_history(small_density_wave(tmp_path / "gamma"))
    cmd_convergence(small_density_wave(tmp_path / "convergence"), [2, 4])
    tables = list(paths.values()) + [
        tmp_path / "gamma" / "gamma_history.csv",
        tmp_path / "gamma" / "gamma_profile.csv",
        tmp_path / "convergence" / "convergence.csv",
    ]
    for path in tables:
        copy = write_csv(read_csv(path), str(tmp_path / "copy.csv"))
        with open(path, "rb") as original, open(copy, "rb") as written:
            assert original.read() == written.read(), path
