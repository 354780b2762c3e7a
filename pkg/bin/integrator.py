import typing

import numpy as np
from tqdm import tqdm

from relaxation import identity_report, local_relax_step
from utils import MESSAGE, BlowupError, ConfigError, StepLimitError, message

SAFETY = 0.9
GROWTH_MIN = 0.2
GROWTH_MAX = 5.0
DEFAULT_MAX_STEPS = 10_000_000
MAX_END_RETRIES = 4


class OdeSystem:
    """Contract for u' = f(t, u) with K local entropies eta_k(u).

    Subclasses set `dim` and `n_partitions` and implement rhs, entropy and entropy_rate.
    Partitions whose entropy only depends on a contiguous block of the state
    override partition_slice/partition_entropy so that root solves touch one block only."""

    dim = None
    n_partitions = 1

    def rhs(self, t, u):
        raise NotImplementedError

    def entropy(self, u):
        """K-vector of local entropies"""
        raise NotImplementedError

    def entropy_rate(self, t, u, du):
        """K-vector of (eta_k' f)(u), given du = rhs(t, u)"""
        raise NotImplementedError

    def linear_invariants(self, u):
        return np.atleast_1d(np.sum(u))

    def partition_slice(self, kappa):
        return slice(None)

    def partition_entropy(self, u_part, kappa):
        return self.entropy(u_part)[kappa]

    def partition_of_index(self, index):
        return int(index) * self.n_partitions // max(int(self.dim), 1)


class StepResult:
    """Unrelaxed outcome of one explicit Runge-Kutta step"""

    def __init__(self, t, dt, u_new, t_new, e, eta_old, err_embedded, stage_rhs_evals):
        self.t = t
        self.dt = dt
        self.u_new = u_new
        self.t_new = t_new
        self.e = e
        self.eta_old = eta_old
        self.err_embedded = err_embedded
        self.stage_rhs_evals = stage_rhs_evals


class StepRecord(typing.NamedTuple):
    """Observer payload, one per accepted step"""

    t: float
    gamma: float
    gamma_local: np.ndarray
    eta: np.ndarray
    invariants: np.ndarray
    step: int
    dt: float
    report: object
    rejected: int


class Trajectory:
    def __init__(self, u, t, steps, rejected, rhs_evals, gamma_min, gamma_max):
        self.u = u
        self.t = t
        self.steps = steps
        self.rejected = rejected
        self.rhs_evals = rhs_evals
        self.gamma_min = gamma_min
        self.gamma_max = gamma_max

    def __repr__(self):
        return "Trajectory(t=%.10g, steps=%d, rejected=%d, gamma in [%.12g, %.12g])" % (
            self.t,
            self.steps,
            self.rejected,
            self.gamma_min,
            self.gamma_max,
        )


def _check_finite(sys, values, t, what):
    if not np.all(np.isfinite(values)):
        index = int(np.flatnonzero(~np.isfinite(values))[0])
        raise BlowupError(t, sys.partition_of_index(index), what)


def error_norm(u, u_new, delta):
    """Weighted RMS of the embedded difference, mixed absolute/relative scaling.

    The tolerance itself is factored out, so a step is accepted when the norm is <= tol."""
    scale = 1.0 + np.maximum(np.abs(u), np.abs(u_new))
    return float(np.sqrt(np.mean((delta / scale) ** 2)))


def rk_step(sys, tab, t, u, dt, eta_old=None):
    """One explicit RK step, stage values reused for the update and the entropy estimate"""
    if not dt > 0:
        raise ValueError("step size must be positive, got %r" % dt)

    s = tab.s
    k = np.empty((s,) + np.shape(u))
    rates = np.empty((s, sys.n_partitions))

    for i in range(s):
        y = u.copy()
        for j in range(i):
            if tab.A[i, j] != 0.0:
                y += (dt * tab.A[i, j]) * k[j]
        t_i = t + tab.c[i] * dt
        _check_finite(sys, y, t_i, "stage value")
        k[i] = sys.rhs(t_i, y)
        _check_finite(sys, k[i], t_i, "right-hand side")
        rates[i] = sys.entropy_rate(t_i, y, k[i])

    u_new = u + dt * np.tensordot(tab.b, k, axes=1)
    _check_finite(sys, u_new, t + dt, "state")

    if eta_old is None:
        eta_old = np.asarray(sys.entropy(u), dtype=np.float64)
    e = eta_old + dt * (tab.b @ rates)

    err = None
    if tab.has_embedded:
        err = error_norm(u, u_new, dt * np.tensordot(tab.b - tab.b_embedded, k, axes=1))

    return StepResult(t, dt, u_new, t + dt, e, eta_old, err, s)


def adapt_dt(err, tol, p_embedded, dt):
    """I-controller: dt * clamp(0.9 (tol/err)^(1/(p_embedded+1)), 0.2, 5)"""
    if err == 0:
        return dt * GROWTH_MAX
    factor = SAFETY * (tol / err) ** (1.0 / (p_embedded + 1))
    return dt * min(max(factor, GROWTH_MIN), GROWTH_MAX)


def advance(
    sys,
    tab,
    relax_cfg,
    u0,
    t0,
    t_end,
    dt0,
    mode="fixed",
    tol=None,
    observers=(),
    max_steps=DEFAULT_MAX_STEPS,
    verbose=1,
):
    """Integrate from t0 to t_end, relaxing every accepted step.

    Time advances by gamma * dt per step; the last step is clipped so the final
    accepted time equals t_end up to 1e-12 of the interval length."""
    if not t_end > t0:
        raise ConfigError("t_end (%r) must be larger than t0 (%r)" % (t_end, t0))
    if not dt0 > 0:
        raise ConfigError("initial step size must be positive, got %r" % dt0)
    if mode not in ("fixed", "adaptive"):
        raise ConfigError("step mode must be 'fixed' or 'adaptive', got %r" % mode)
    adaptive = mode == "adaptive"
    if adaptive:
        if not tab.has_embedded:
            raise ConfigError("adaptive stepping needs embedded weights, %s has none" % tab.name)
        if tol is None or not tol > 0:
            raise ConfigError("adaptive stepping needs a positive tolerance")
    relaxing = relax_cfg is not None and relax_cfg.mode != "none"

    span = t_end - t0
    t_eps = 1e-12 * span
    t = t0
    u = np.array(u0, dtype=np.float64)
    dt = dt0
    eta = np.asarray(sys.entropy(u), dtype=np.float64)

    steps = rejected = rhs_evals = 0
    gamma_min, gamma_max = np.inf, -np.inf

    with tqdm(total=span, disable=verbose < MESSAGE, unit="t", leave=False) as pbar:
        while t_end - t > t_eps:
            if steps + rejected >= max_steps:
                raise StepLimitError(max_steps, t)

            dt_try = t_end - t if t + dt > t_end - t_eps else dt
            step = rk_step(sys, tab, t, u, dt_try, eta_old=eta)
            rhs_evals += step.stage_rhs_evals

            if adaptive and step.err_embedded > tol:
                rejected += 1
                dt = adapt_dt(step.err_embedded, tol, tab.p_embedded, dt_try)
                continue

            if relaxing:
                u_next, t_next, report = local_relax_step(sys, u, step, relax_cfg)
                retries = 0
                # gamma > 1 near the end would step past t_end: shrink the step and redo it
                while t_next - t_end > t_eps:
                    retries += 1
                    if retries > MAX_END_RETRIES:
                        gamma_cap = (t_end - t) / step.dt
                        u_next, t_next, report = local_relax_step(sys, u, step, relax_cfg, gamma_cap)
                        break
                    dt_try = dt_try * (t_end - t) / (t_next - t)
                    step = rk_step(sys, tab, t, u, dt_try, eta_old=eta)
                    rhs_evals += step.stage_rhs_evals
                    u_next, t_next, report = local_relax_step(sys, u, step, relax_cfg)
            else:
                u_next, t_next = step.u_new, step.t_new
                report = identity_report(sys, step, relax_cfg)

            eta = report.eta_new
            pbar.update(t_next - t)
            u, t = u_next, t_next
            steps += 1
            gamma_min = min(gamma_min, report.gamma)
            gamma_max = max(gamma_max, report.gamma)

            if observers:
                record = StepRecord(
                    t,
                    report.gamma,
                    report.gamma_local,
                    eta,
                    np.asarray(sys.linear_invariants(u)),
                    steps,
                    dt_try,
                    report,
                    rejected,
                )
                for observer in observers:
                    observer(record)

            if adaptive:
                dt = adapt_dt(step.err_embedded, tol, tab.p_embedded, dt_try)
            else:
                dt = dt0

    message(verbose, MESSAGE, "Reached t = %.10g after %d steps (%d rejected)" % (t, steps, rejected))
    return Trajectory(u, t, steps, rejected, rhs_evals, gamma_min, gamma_max)
