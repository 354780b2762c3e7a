"""Relaxation of Runge-Kutta steps against global or per-partition entropy estimates"""

import warnings
from multiprocessing.pool import ThreadPool

import numpy as np
from scipy import optimize

from utils import (
    BracketingError,
    ConfigError,
    DegenerateRootError,
    EntropyViolationError,
    NumericalError,
    PartitionIndexError,
    StateError,
    UnknownNameError,
)

MODES = ("none", "global", "local")

_SOLVERS = {
    "brent": optimize.brentq,
    "bisect": optimize.bisect,
    "toms748": optimize.toms748,
}

_MAXITER = {"brent": 100, "bisect": 200, "toms748": 100}


class RelaxationConfig:
    """Settings of the relaxation root solve.

    Tolerances are relative: they are multiplied by max(1, |eta_old|) of the
    partition being solved."""

    FIELDS = (
        "mode",
        "root_tol",
        "residual_tol",
        "bracket_halfwidth",
        "max_expansions",
        "gamma_floor",
        "curvature_tol",
        "solver",
        "threads",
        "raise_on_violation",
        "report_global",
    )

    def __init__(
        self,
        mode="local",
        root_tol=1e-13,
        residual_tol=1e-13,
        bracket_halfwidth=0.1,
        max_expansions=8,
        gamma_floor=0.1,
        curvature_tol=1e-12,
        solver="brent",
        threads=1,
        raise_on_violation=True,
        report_global=False,
    ):
        self.mode = mode
        self.root_tol = float(root_tol)
        self.residual_tol = float(residual_tol)
        self.bracket_halfwidth = float(bracket_halfwidth)
        self.max_expansions = int(max_expansions)
        self.gamma_floor = float(gamma_floor)
        self.curvature_tol = float(curvature_tol)
        self.solver = solver
        self.threads = int(threads)
        self.raise_on_violation = bool(raise_on_violation)
        self.report_global = bool(report_global)
        self.validate()

    def validate(self):
        if self.mode not in MODES:
            raise UnknownNameError("relaxation mode", self.mode, MODES)
        if self.solver not in _SOLVERS:
            raise UnknownNameError("root solver", self.solver, _SOLVERS)
        for name in ("root_tol", "residual_tol", "bracket_halfwidth", "curvature_tol"):
            if not getattr(self, name) > 0:
                raise ConfigError("relaxation.%s must be positive" % name)
        if not 0 < self.gamma_floor < 1:
            raise ConfigError("relaxation.gamma_floor must lie in (0, 1)")
        if self.max_expansions < 0:
            raise ConfigError("relaxation.max_expansions must be non-negative")
        if self.threads < 1:
            raise ConfigError("relaxation.threads must be at least 1")
        # brentq refuses relative tolerances below 4 machine epsilons
        if self.root_tol < 4 * np.finfo(float).eps:
            raise ConfigError("relaxation.root_tol must be at least %.3g" % (4 * np.finfo(float).eps))

    @classmethod
    def from_dict(cls, d):
        unknown = set(d) - set(cls.FIELDS)
        if unknown:
            raise ConfigError("Unknown relaxation settings: %s" % ", ".join(sorted(unknown)))
        return cls(**d)

    def to_dict(self):
        return {name: getattr(self, name) for name in self.FIELDS}


class RelaxationReport:
    """Diagnostics of one relaxed step"""

    def __init__(
        self,
        gamma,
        gamma_local,
        residual,
        iterations,
        fallback,
        inequality_verified,
        eta_new,
        excess,
        gamma_global=None,
    ):
        self.gamma = float(gamma)
        self.gamma_local = gamma_local
        self.residual = residual
        self.iterations = iterations
        self.fallback = fallback
        self.inequality_verified = bool(inequality_verified)
        self.eta_new = eta_new
        self.excess = excess
        self.gamma_global = gamma_global

    @property
    def argmin_kappa(self):
        return int(np.argmin(self.gamma_local))

    @property
    def max_residual(self):
        return float(np.max(np.abs(self.residual))) if len(self.residual) else 0.0


def _tolerance_scale(eta_old):
    return max(1.0, abs(float(eta_old)))


def _residual_function(sys, kappa, u_old, d, eta_old, e):
    """Closure gamma -> eta(u_old + gamma d) - eta_old - gamma (e - eta_old).

    kappa=None sums over every partition."""
    if kappa is None:

        def eta(v):
            return float(np.sum(sys.entropy(v)))

        u0, d0 = u_old, d
    else:
        if not 0 <= kappa < sys.n_partitions:
            raise PartitionIndexError(kappa, sys.n_partitions)
        sl = sys.partition_slice(kappa)
        u0, d0 = u_old[sl], d[sl]

        def eta(v):
            return float(sys.partition_entropy(v, kappa))

    de = float(e) - float(eta_old)

    def r(gamma):
        try:
            value = eta(u0 + gamma * d0) - eta_old - gamma * de
        except StateError:
            # outside the admissible set the entropy is taken as +inf
            return np.inf
        if np.isnan(value):
            raise NumericalError("Entropy of partition %s is not finite at gamma = %r" % (kappa, gamma))
        return value

    return r


def gamma_residual(sys, kappa, u_old, d, eta_old, e, gamma):
    """r(gamma) = eta_k(u_old + gamma d) - eta_old - gamma (e - eta_old); kappa=None is the global sum"""
    return _residual_function(sys, kappa, u_old, d, float(eta_old), e)(gamma)


def _bracket(r, delta, floor):
    """Endpoints 1 -+ delta (lower end clipped at the floor), pulled towards 1 while inadmissible"""
    lo, hi = max(1.0 - delta, floor), 1.0 + delta
    r_lo, r_hi = r(lo), r(hi)
    for _ in range(60):
        if np.isfinite(r_lo) and np.isfinite(r_hi):
            break
        if not np.isfinite(r_lo):
            lo = 0.5 * (1.0 + lo)
            r_lo = r(lo)
        if not np.isfinite(r_hi):
            hi = 0.5 * (1.0 + hi)
            r_hi = r(hi)
    return lo, hi, r_lo, r_hi


def solve_gamma(sys, kappa, u_old, d, eta_old, e, cfg):
    """Root of the relaxation residual near 1.

    Returns (gamma, iterations, residual, fallback)."""
    eta_old = float(eta_old)
    scale = _tolerance_scale(eta_old)
    r = _residual_function(sys, kappa, u_old, d, eta_old, e)

    # no curvature to resolve: the step is already consistent with the estimate
    r_one = r(1.0)
    de = float(e) - eta_old
    flat_tol = cfg.curvature_tol * scale
    if abs(r_one + de) < flat_tol and abs(de) < flat_tol:
        return 1.0, 0, r_one, True

    residual_tol = cfg.residual_tol * scale
    delta = cfg.bracket_halfwidth
    lo, hi, r_lo, r_hi = _bracket(r, delta, cfg.gamma_floor)

    # residual flat within tolerance over the whole bracket
    if abs(r_lo) <= residual_tol and abs(r_hi) <= residual_tol and abs(r_one) <= residual_tol:
        return 1.0, 0, r_one, True

    expansions = 0
    while r_lo * r_hi > 0:
        if expansions == cfg.max_expansions:
            raise BracketingError(kappa, (lo, hi), (r_lo, r_hi))
        delta *= 2.0
        lo, hi, r_lo, r_hi = _bracket(r, delta, cfg.gamma_floor)
        expansions += 1

    if r_lo == 0.0:
        gamma, iterations = lo, 0
    elif r_hi == 0.0:
        gamma, iterations = hi, 0
    else:
        solver = _SOLVERS[cfg.solver]
        try:
            gamma, info = solver(
                r,
                lo,
                hi,
                xtol=cfg.root_tol,
                rtol=cfg.root_tol,
                maxiter=_MAXITER[cfg.solver],
                full_output=True,
                disp=False,
            )
        except (ValueError, RuntimeError) as err:
            raise NumericalError("Root solve failed for partition %s: %s" % (kappa, err))
        iterations = int(info.iterations)

    if gamma <= cfg.gamma_floor:
        raise DegenerateRootError(kappa, gamma, cfg.gamma_floor)

    residual = r(gamma)
    if abs(residual) > residual_tol:
        warnings.warn(
            "relaxation residual %.3e of partition %s exceeds %.3e" % (residual, kappa, residual_tol),
            RuntimeWarning,
        )
    return float(gamma), iterations, residual, False


def relax_update(u_old, u_new, t_old, t_new, gamma):
    """Convex combination u_old + gamma (u_new - u_old), same for time"""
    return u_old + gamma * (u_new - u_old), t_old + gamma * (t_new - t_old)


def _verify(eta_new, eta_old, e, gamma, cfg):
    scale = np.maximum(1.0, np.abs(eta_old))
    excess = eta_new - eta_old - gamma * (e - eta_old) - cfg.residual_tol * scale
    return bool(np.all(excess <= 0.0)), excess


def identity_report(sys, step, cfg=None):
    """Report of an unrelaxed step, gamma = 1 everywhere"""
    K = sys.n_partitions
    eta_new = np.asarray(sys.entropy(step.u_new), dtype=np.float64)
    if cfg is None:
        cfg = RelaxationConfig(mode="none")
    verified, excess = _verify(eta_new, step.eta_old, step.e, 1.0, cfg)
    return RelaxationReport(
        1.0,
        np.ones(K),
        np.zeros(K),
        np.zeros(K, dtype=int),
        np.zeros(K, dtype=bool),
        verified,
        eta_new,
        excess,
        gamma_global=1.0,
    )


def _solve_global(sys, u_old, d, step, cfg):
    return solve_gamma(sys, None, u_old, d, float(np.sum(step.eta_old)), float(np.sum(step.e)), cfg)


def local_relax_step(sys, u_old, step, cfg, gamma_max=np.inf):
    """Relax a step in global or local mode.

    Local mode solves every partition and applies the smallest root, so that each
    local entropy inequality holds.  gamma_max caps the applied parameter; any value
    in (0, gamma] keeps the inequalities.  Returns (u_gamma, t_gamma, report)."""
    if cfg.mode == "none":
        return step.u_new, step.t_new, identity_report(sys, step, cfg)

    d = step.u_new - u_old
    K = sys.n_partitions

    if cfg.mode == "global":
        gamma, iterations, residual, fallback = _solve_global(sys, u_old, d, step, cfg)
        gamma = min(gamma, gamma_max)
        u_gamma, t_gamma = relax_update(u_old, step.u_new, step.t, step.t_new, gamma)
        eta_new = np.asarray(sys.entropy(u_gamma), dtype=np.float64)
        verified, excess = _verify(
            np.sum(eta_new), np.sum(step.eta_old), np.sum(step.e), gamma, cfg
        )
        if not verified and cfg.raise_on_violation:
            raise EntropyViolationError(None, float(excess))
        report = RelaxationReport(
            gamma,
            np.array([gamma]),
            np.array([residual]),
            np.array([iterations]),
            np.array([fallback]),
            verified,
            eta_new,
            np.atleast_1d(excess),
            gamma_global=gamma,
        )
        return u_gamma, t_gamma, report

    def solve(kappa):
        return solve_gamma(sys, kappa, u_old, d, step.eta_old[kappa], step.e[kappa], cfg)

    if cfg.threads > 1 and K > 1:
        with ThreadPool(cfg.threads) as pool:
            results = pool.map(solve, range(K))
    else:
        results = [solve(kappa) for kappa in range(K)]

    gamma_local = np.array([res[0] for res in results])
    iterations = np.array([res[1] for res in results], dtype=int)
    residual = np.array([res[2] for res in results])
    fallback = np.array([res[3] for res in results], dtype=bool)
    gamma_local[fallback] = 1.0
    gamma = min(float(np.min(gamma_local)), gamma_max)

    u_gamma, t_gamma = relax_update(u_old, step.u_new, step.t, step.t_new, gamma)
    eta_new = np.asarray(sys.entropy(u_gamma), dtype=np.float64)
    verified, excess = _verify(eta_new, step.eta_old, step.e, gamma, cfg)
    if not verified and cfg.raise_on_violation:
        kappa = int(np.argmax(excess))
        raise EntropyViolationError(kappa, float(excess[kappa]))

    gamma_global = None
    if cfg.report_global:
        gamma_global = _solve_global(sys, u_old, d, step, cfg)[0]

    report = RelaxationReport(
        gamma, gamma_local, residual, iterations, fallback, verified, eta_new, excess, gamma_global
    )
    return u_gamma, t_gamma, report
