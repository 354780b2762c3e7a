"""Run configuration, error norms and the drivers behind the command line subprograms"""

import copy
import json
import os
import time

import numpy as np
import pandas as pd
from tqdm import tqdm

from euler_dgsem import EulerField, EulerSystem
from integrator import DEFAULT_MAX_STEPS, Trajectory, advance
from problems import evaluate_exact, make_problem
from relaxation import RelaxationConfig
from tableaux import builtin_tableau
from utils import (
    MESSAGE,
    WARNING,
    ConfigError,
    NumericalError,
    make_dir,
    message,
    write_csv,
    write_run_record,
)

DEFAULTS = {
    "problem": "density_wave",
    "overrides": {},
    "p": None,
    "N": None,
    "tableau": None,
    "interface": None,
    "dt": None,
    "adaptive_tol": None,
    "t_end": None,
    "max_steps": DEFAULT_MAX_STEPS,
    "outdir": "results",
    "verbose": 1,
    "all_variables": False,
    "N_list": None,
    "relaxation": RelaxationConfig().to_dict(),
}

NESTED = ("overrides", "relaxation")


def parse_value(text):
    """JSON literal if it parses, the raw string otherwise"""
    try:
        return json.loads(text)
    except ValueError:
        return text


def parse_assignment(text):
    if "=" not in text:
        raise ConfigError("--set expects key=value, got '%s'" % text)
    key, value = text.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError("--set expects key=value, got '%s'" % text)
    return key, parse_value(value)


def _assign(config, key, value):
    parts = key.split(".")
    if len(parts) == 1:
        if key not in DEFAULTS:
            raise ConfigError("Unknown configuration key '%s'" % key)
        if key in NESTED:
            if not isinstance(value, dict):
                raise ConfigError("'%s' must be a mapping" % key)
            for sub, v in value.items():
                _assign(config, "%s.%s" % (key, sub), v)
            return
        config[key] = value
    elif len(parts) == 2 and parts[0] in NESTED:
        section, sub = parts
        if section == "relaxation" and sub not in RelaxationConfig.FIELDS:
            raise ConfigError("Unknown configuration key '%s'" % key)
        config[section][sub] = value
    else:
        raise ConfigError("Unknown configuration key '%s'" % key)


def _number(values, key):
    try:
        return float(values[key])
    except (TypeError, ValueError):
        raise ConfigError("%s must be a number, got %r" % (key, values[key]))


class RunConfig:
    """Resolved settings of one experiment.

    Precedence: built-in defaults < JSON config file < --set assignments < problem defaults
    for anything still unset."""

    def __init__(self, values=None):
        self.values = copy.deepcopy(DEFAULTS)
        self.explicit = set()
        for key, value in (values or {}).items():
            self.set(key, value)

    def set(self, key, value):
        _assign(self.values, key, value)
        self.explicit.add(key.split(".")[0])

    @classmethod
    def from_sources(cls, config_path=None, assignments=()):
        config = cls()
        if config_path is not None:
            try:
                with open(config_path) as f:
                    data = json.load(f)
            except OSError as err:
                raise ConfigError("Cannot read config file %s: %s" % (config_path, err))
            except ValueError as err:
                raise ConfigError("Config file %s is not valid JSON: %s" % (config_path, err))
            if not isinstance(data, dict):
                raise ConfigError("Config file %s must hold a JSON object" % config_path)
            for key, value in data.items():
                config.set(key, value)
        for text in assignments:
            config.set(*parse_assignment(text))
        return config

    def __getattr__(self, name):
        try:
            return self.__dict__["values"][name]
        except KeyError:
            raise AttributeError(name)

    def resolve(self):
        """Fill problem defaults and validate; returns (problem spec, tableau, relaxation config)"""
        v = self.values
        spec = make_problem(v["problem"], v["overrides"])
        both = "dt" in self.explicit and "adaptive_tol" in self.explicit
        if both and v["dt"] is not None and v["adaptive_tol"] is not None:
            raise ConfigError("Set either a fixed dt or an adaptive tolerance, not both")
        for key in ("p", "N", "tableau", "interface", "dt", "t_end"):
            if v[key] is None and key in spec.defaults:
                v[key] = spec.defaults[key]
        if v["tableau"] is None:
            v["tableau"] = "RK44"
        tab = builtin_tableau(v["tableau"])
        relax = RelaxationConfig.from_dict(v["relaxation"])
        if spec.kind == "euler":
            if not isinstance(v["N"], int) or v["N"] < 1:
                raise ConfigError("N must be a positive integer, got %r" % (v["N"],))
        if v["dt"] is None or not _number(v, "dt") > 0:
            raise ConfigError("dt must be positive, got %r" % (v["dt"],))
        if v["adaptive_tol"] is not None:
            if not _number(v, "adaptive_tol") > 0:
                raise ConfigError("adaptive_tol must be positive")
            if not tab.has_embedded:
                raise ConfigError("Tableau %s has no embedded method for adaptive stepping" % tab.name)
        if v["t_end"] is None or _number(v, "t_end") < 0:
            raise ConfigError("t_end must be non-negative, got %r" % (v["t_end"],))
        if not isinstance(v["max_steps"], int) or v["max_steps"] < 1:
            raise ConfigError("max_steps must be a positive integer, got %r" % (v["max_steps"],))
        if relax.mode != "none" and not tab.nonnegative_weights:
            message(v["verbose"], WARNING, "Tableau %s has negative weights" % tab.name)
        return spec, tab, relax

    def to_dict(self):
        return copy.deepcopy(self.values)

    def copy(self):
        other = RunConfig()
        other.values = copy.deepcopy(self.values)
        other.explicit = set(self.explicit)
        return other


# ---------------------------------------------------------------------------
# Error norms

_PRIMITIVE_NAMES = {1: ("rho", "u", "p"), 2: ("rho", "u", "v", "p")}


def _primitive_table(field):
    rho, vel, P = field.primitive()
    return np.concatenate([rho[..., None], vel, P[..., None]], axis=-1)


def error_norms(field, spec, t, all_variables=False):
    """Quadrature-weighted L1, L2 and max norms of the density error.

    With all_variables, keys L1_<var>, L2_<var>, Linf_<var> are added for every
    primitive variable."""
    if isinstance(field, EulerField):
        exact = evaluate_exact(spec, field.nodes(), t)
        error = _primitive_table(field) - exact
        W = np.broadcast_to(field.mesh.node_weights(field.sbp), error.shape[:-1])
        names = _PRIMITIVE_NAMES[field.mesh.dim]
    else:
        error = (np.asarray(field) - evaluate_exact(spec, None, t))[:, None]
        W = np.ones(error.shape[:-1])
        names = ("u",)

    def norms(e):
        return {
            "L1": float(np.sum(W * np.abs(e)) / np.sum(W)),
            "L2": float(np.sqrt(np.sum(W * e**2) / np.sum(W))),
            "Linf": float(np.max(np.abs(e))),
        }

    out = norms(error[..., 0])
    if all_variables:
        for i, name in enumerate(names):
            for key, value in norms(error[..., i]).items():
                out["%s_%s" % (key, name)] = value
    return out


def convergence_rates(N, errors):
    """rate_k = log(e_{k-1} / e_k) / log(N_k / N_{k-1}); NaN where undefined"""
    rates = [np.nan]
    for k in range(1, len(N)):
        if errors[k] > 0 and errors[k - 1] > 0:
            rates.append(np.log(errors[k - 1] / errors[k]) / np.log(N[k] / N[k - 1]))
        else:
            rates.append(np.nan)
    return rates


# ---------------------------------------------------------------------------
# Observers


class history_recorder:
    """Collects one row per accepted step"""

    def __init__(self, system):
        self.system = system
        self.rows = []
        self.last = None
        if isinstance(system, EulerSystem):
            d = system.mesh.dim
            self.invariant_names = ["mass"] + ["momentum_%s" % "xy"[i] for i in range(d)] + ["energy"]
        else:
            self.invariant_names = None

    def __call__(self, record):
        report = record.report
        names = self.invariant_names or ["invariant_%d" % i for i in range(len(record.invariants))]
        row = {
            "step": record.step,
            "t": record.t,
            "dt": record.dt,
            "gamma": record.gamma,
            "gamma_min_local": float(np.min(record.gamma_local)),
            "argmin_kappa": report.argmin_kappa,
            "eta_total": float(np.sum(record.eta)),
        }
        row.update(dict(zip(names, map(float, record.invariants))))
        row["inequality_verified"] = report.inequality_verified
        row["max_residual"] = report.max_residual
        row["fallback_count"] = int(np.sum(report.fallback))
        row["rejected"] = record.rejected
        self.rows.append(row)
        self.last = record

    def frame(self):
        return pd.DataFrame(self.rows)


class gamma_recorder:
    """Per-step relaxation parameters, global equivalent and quantiles of the local ones"""

    def __init__(self):
        self.rows = []
        self.last = None

    def __call__(self, record):
        g = np.asarray(record.gamma_local)
        q05, q50, q95 = np.quantile(g, [0.05, 0.5, 0.95])
        gamma_global = record.report.gamma_global
        self.rows.append(
            {
                "step": record.step,
                "t": record.t,
                "gamma": record.gamma,
                "gamma_global": np.nan if gamma_global is None else gamma_global,
                "gamma_min_local": float(np.min(g)),
                "gamma_q05": q05,
                "gamma_q50": q50,
                "gamma_q95": q95,
            }
        )
        self.last = record

    def frame(self):
        return pd.DataFrame(self.rows)


# ---------------------------------------------------------------------------
# Driver


class experiment:
    """One time integration of a named problem under a resolved configuration"""

    def __init__(self, config):
        self.config = config
        self.spec, self.tableau, self.relax = config.resolve()
        self.verbose = config.verbose
        self.system, self.u0 = self.spec.build(config.p, config.N, config.interface)

    def print_parameters(self):
        c = self.config
        print("Running %s\n" % self.spec.name)
        print(
            "Discretization:\n"
            "\tPolynomial degree: %s \n"
            "\tElements per direction: %s \n"
            "\tInterface flux: %s \n" % (c.p, c.N, c.interface)
        )
        print(
            "Time integration:\n"
            "\tMethod: %s \n"
            "\tStep size: %s \n"
            "\tAdaptive tolerance: %s \n"
            "\tFinal time: %s \n" % (self.tableau.name, c.dt, c.adaptive_tol, c.t_end)
        )
        print(
            "Relaxation:\n"
            "\tMode: %s \n"
            "\tRoot solver: %s \n"
            "\tRoot tolerance: %s \n"
            "\tThreads: %s \n" % (self.relax.mode, self.relax.solver, self.relax.root_tol, self.relax.threads)
        )

    def field(self, u):
        if isinstance(self.system, EulerSystem):
            return self.system.field(u)
        return u

    def integrate(self, observers=()):
        c = self.config
        t_end = float(c.t_end)
        if t_end == 0.0:
            return Trajectory(self.u0.copy(), 0.0, 0, 0, 0, 1.0, 1.0)

        mode = "fixed" if c.adaptive_tol is None else "adaptive"
        begin = time.time()
        try:
            traj = advance(
                self.system,
                self.tableau,
                self.relax,
                self.u0,
                0.0,
                t_end,
                float(c.dt),
                mode=mode,
                tol=c.adaptive_tol,
                observers=observers,
                max_steps=int(c.max_steps),
                verbose=self.verbose,
            )
        except NumericalError as err:
            last = [o.last for o in observers if getattr(o, "last", None) is not None]
            err.last_step = last[0].step if last else 0
            err.last_t = last[0].t if last else 0.0
            raise
        message(self.verbose, MESSAGE, "Integration finished in %.2f s" % (time.time() - begin))
        return traj

    def solution_frame(self, u, t):
        if not isinstance(self.system, EulerSystem):
            df = pd.DataFrame({"component": np.arange(len(u)), "u": u})
            if self.spec.has_exact:
                df["u_exact"] = evaluate_exact(self.spec, None, t)
            return df
        field = self.system.field(u)
        X = field.nodes().reshape(-1, field.mesh.dim)
        prim = _primitive_table(field).reshape(-1, field.nvar)
        columns = {"xy"[i]: X[:, i] for i in range(field.mesh.dim)}
        columns.update({name: prim[:, i] for i, name in enumerate(_PRIMITIVE_NAMES[field.mesh.dim])})
        return pd.DataFrame(columns)

    def element_frame(self, u, report):
        """Per-element relaxation parameter, entropy and mean density at the final state"""
        field = self.system.field(u)
        K = self.system.n_partitions
        centers = field.mesh.element_centers()
        columns = {"element": np.arange(K)}
        columns.update({"%s_center" % "xy"[i]: centers[:, i] for i in range(field.mesh.dim)})
        gamma_local = np.ones(K) if report is None else np.broadcast_to(report.gamma_local, (K,))
        columns["gamma_local"] = gamma_local
        columns["eta"] = self.system.entropy(u)
        columns["rho_mean"] = field.element_mean(field.q[..., 0])
        return pd.DataFrame(columns)


def _outdir(config):
    try:
        make_dir(config.outdir)
    except OSError as err:
        raise ConfigError("Cannot create output directory %s: %s" % (config.outdir, err))
    if not os.path.isdir(config.outdir):
        raise ConfigError("Output path %s is not a directory" % config.outdir)
    return config.outdir


def cmd_run(config):
    """Integrate one problem; writes solution.csv, history.csv and (Euler) elements.csv"""
    exp = experiment(config)
    if exp.verbose >= MESSAGE:
        exp.print_parameters()
    history = history_recorder(exp.system)
    traj = exp.integrate([history])
    outdir = _outdir(config)

    paths = {
        "solution": write_csv(exp.solution_frame(traj.u, traj.t), os.path.join(outdir, "solution.csv")),
        "history": write_csv(history.frame(), os.path.join(outdir, "history.csv")),
    }
    if isinstance(exp.system, EulerSystem):
        report = history.last.report if history.last is not None else None
        paths["elements"] = write_csv(exp.element_frame(traj.u, report), os.path.join(outdir, "elements.csv"))

    summary = {"t": traj.t, "steps": traj.steps, "rejected": traj.rejected}
    if exp.spec.has_exact:
        summary.update(error_norms(exp.field(traj.u), exp.spec, traj.t, config.all_variables))
        paths["errors"] = write_csv(pd.DataFrame([summary]), os.path.join(outdir, "errors.csv"))
    write_run_record(outdir, config.to_dict())
    message(exp.verbose, MESSAGE, "Results written to %s" % outdir)
    return summary, paths


def cmd_convergence(config, N_list=None):
    """Refine the mesh with U_ref dt / dx held fixed and tabulate errors and observed rates"""
    N_list = list(N_list or config.N_list or [])
    if len(N_list) < 2:
        raise ConfigError("convergence needs at least two element counts, got %r" % (N_list,))
    if any(not isinstance(N, int) or N < 1 for N in N_list):
        raise ConfigError("element counts must be positive integers, got %r" % (N_list,))
    spec, _, _ = config.copy().resolve()
    if spec.kind != "euler" or not spec.has_exact:
        raise ConfigError("convergence needs a PDE problem with an exact solution, %s is not one" % spec.name)

    base = config.copy()
    base.resolve()
    N_ref, dt_ref = base.N, float(base.dt)

    rows = []
    for N in tqdm(N_list, disable=base.verbose < MESSAGE, desc="convergence", leave=False):
        run = base.copy()
        run.values["N"] = N
        run.values["dt"] = dt_ref * N_ref / N
        exp = experiment(run)
        message(exp.verbose, MESSAGE, "Convergence run with N = %d, dt = %.6g" % (N, run.dt))
        traj = exp.integrate()
        row = {"N": N, "dt": run.dt, "steps": traj.steps}
        row.update(error_norms(exp.field(traj.u), exp.spec, traj.t, config.all_variables))
        rows.append(row)

    df = pd.DataFrame(rows)
    for norm in ("L1", "L2", "Linf"):
        df["rate_%s" % norm] = convergence_rates(df["N"].to_numpy(), df[norm].to_numpy())

    outdir = _outdir(config)
    write_csv(df, os.path.join(outdir, "convergence.csv"))
    write_run_record(outdir, base.to_dict())
    print(df.to_string(index=False, float_format=lambda v: "%.3e" % v, na_rep=""))
    return df


def cmd_gamma_history(config):
    """Per-step relaxation parameters; local mode also writes the final gamma profile"""
    exp = experiment(config)
    if exp.relax.mode == "none":
        raise ConfigError("gamma-history needs relaxation.mode global or local")
    if exp.relax.mode == "local":
        exp.relax.report_global = True
    if exp.verbose >= MESSAGE:
        exp.print_parameters()
    gammas = gamma_recorder()
    traj = exp.integrate([gammas])

    outdir = _outdir(config)
    df = gammas.frame()
    write_csv(df, os.path.join(outdir, "gamma_history.csv"))
    if exp.relax.mode == "local" and isinstance(exp.system, EulerSystem) and gammas.last is not None:
        write_csv(exp.element_frame(traj.u, gammas.last.report), os.path.join(outdir, "gamma_profile.csv"))
    write_run_record(outdir, config.to_dict())
    return df


def cmd_compare(config):
    """Same problem without relaxation and with the configured mode; compare.csv holds the density difference"""
    relaxed = config.relaxation["mode"]
    if relaxed == "none":
        raise ConfigError("compare needs relaxation.mode global or local")
    modes = ("none", relaxed)
    frames = {}
    results = {}
    for mode in modes:
        run = config.copy()
        run.values["relaxation"]["mode"] = mode
        exp = experiment(run)
        history = history_recorder(exp.system)
        traj = exp.integrate([history])
        frames[mode] = exp.solution_frame(traj.u, traj.t)
        results[mode] = history.frame()

    a, b = (frames[m] for m in modes)
    column = "rho" if "rho" in a else "u"
    df = a.drop(columns=[c for c in a.columns if c not in ("x", "y", "component")]).copy()
    df["%s_%s" % (column, modes[0])] = a[column]
    df["%s_%s" % (column, modes[1])] = b[column]
    df["rel_diff"] = (b[column] - a[column]) / a[column].abs().clip(lower=1e-300)

    outdir = _outdir(config)
    write_csv(df, os.path.join(outdir, "compare.csv"))
    for mode in modes:
        if len(results[mode]):
            write_csv(results[mode], os.path.join(outdir, "history_%s.csv" % mode))
    write_run_record(outdir, config.to_dict())
    message(config.verbose, MESSAGE, "Maximum relative difference: %.3e" % df["rel_diff"].abs().max())
    return df
