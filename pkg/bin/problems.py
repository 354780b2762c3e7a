"""Named test problems: Euler initial/boundary data and two scalar-entropy ODE systems"""

import math

import numpy as np

from euler_dgsem import EulerSystem, GasModel, Mesh, conservative, lgl_operator
from integrator import OdeSystem
from utils import ConfigError, UnknownNameError


class ExpEntropyOde(OdeSystem):
    """u' = -exp(u) with entropy exp(u); exact solution u(t) = -log(exp(-u0) + t)"""

    dim = 1
    n_partitions = 1

    def rhs(self, t, u):
        return -np.exp(u)

    def entropy(self, u):
        return np.array([float(np.exp(u[0]))])

    def entropy_rate(self, t, u, du):
        return np.array([float(np.exp(u[0]) * du[0])])

    def exact(self, u0, t):
        return np.array([-math.log(math.exp(-u0[0]) + t)])


class QuadraticConservedOde(OdeSystem):
    """Harmonic oscillator, eta = |u|^2 / 2 is conserved"""

    dim = 2
    n_partitions = 1

    def rhs(self, t, u):
        return np.array([-u[1], u[0]])

    def entropy(self, u):
        return np.array([0.5 * float(u @ u)])

    def entropy_rate(self, t, u, du):
        return np.array([float(u @ du)])

    def exact(self, u0, t):
        c, s = math.cos(t), math.sin(t)
        return np.array([c * u0[0] - s * u0[1], s * u0[0] + c * u0[1]])


class ProblemSpec:
    """Initial data, boundary treatment and run defaults of a named problem.

    initial(x) and exact(x, t) return primitive states (..., dim + 2) ordered as
    (rho, velocity..., P); x has a trailing axis of length dim."""

    def __init__(
        self,
        name,
        kind="euler",
        dim=1,
        gas=None,
        bounds=None,
        bc="periodic",
        initial=None,
        exact=None,
        defaults=None,
        u_ref=1.0,
        ode=None,
        u0=None,
        parameters=None,
    ):
        self.name = name
        self.kind = kind
        self.dim = dim
        self.gas = gas
        self.bounds = bounds
        self.bc = bc
        self.initial = initial
        self.exact = exact
        self.defaults = defaults or {}
        self.u_ref = u_ref
        self.ode = ode
        self.u0 = u0
        self.parameters = parameters or {}

    @property
    def has_exact(self):
        if self.kind == "ode":
            return hasattr(self.ode, "exact")
        return self.exact is not None

    def build_mesh(self, N):
        return Mesh(self.dim, N, self.bounds, self.bc)

    def build(self, p=None, N=None, interface=None):
        """Return (system, u0) ready for the integrator"""
        if self.kind == "ode":
            return self.ode, np.array(self.u0, dtype=np.float64)
        p = self.defaults["p"] if p is None else p
        N = self.defaults["N"] if N is None else N
        interface = self.defaults["interface"] if interface is None else interface
        sbp = lgl_operator(p)
        mesh = self.build_mesh(N)
        exterior = None
        if self.bc == "dirichlet":
            gas = self.gas

            def exterior(x, t):
                return conservative_state(self.initial(x), gas)

        system = EulerSystem(mesh, sbp, self.gas, interface, exterior)
        X = mesh.node_coordinates(sbp)
        q0 = conservative_state(self.initial(X), self.gas)
        return system, q0.reshape(-1)

    def __repr__(self):
        return "ProblemSpec(%s)" % self.name


def conservative_state(prim, gas):
    return conservative(prim[..., 0], prim[..., 1:-1], prim[..., -1], gas)


def _stack(rho, vel, P):
    rho = np.asarray(rho, dtype=np.float64)
    P = np.broadcast_to(P, rho.shape)
    vel = [np.broadcast_to(v, rho.shape) for v in vel]
    return np.stack([rho] + vel + [P], axis=-1)


def _riemann_initial(left, right, x_split):
    left = np.asarray(left, dtype=np.float64)
    right = np.asarray(right, dtype=np.float64)

    def initial(x):
        mask = (x[..., 0] < x_split)[..., None]
        return np.where(mask, left, right)

    return initial


# ---------------------------------------------------------------------------


def _density_wave(gamma=1.4, u0=0.1, amplitude=0.5, pressure=1.0, **_):
    if not (0.0 <= amplitude < 1.0 and pressure > 0.0):
        raise ConfigError("density_wave needs 0 <= amplitude < 1 and positive pressure")
    gas = GasModel(gamma, 1.0)

    def exact(x, t):
        rho = 1.0 + amplitude * np.sin(np.pi * (x[..., 0] - u0 * t))
        return _stack(rho, [u0], pressure)

    return ProblemSpec(
        "density_wave",
        gas=gas,
        bounds=[(0.0, 2.0)],
        initial=lambda x: exact(x, 0.0),
        exact=exact,
        defaults={"p": 3, "N": 16, "dt": 0.005, "t_end": 1.0, "tableau": "RK44", "interface": "es_rusanov"},
        u_ref=u0,
    )


def _sod(gamma=1.4, **_):
    return ProblemSpec(
        "sod",
        gas=GasModel(gamma, 1.0),
        bounds=[(0.0, 1.0)],
        bc="dirichlet",
        initial=_riemann_initial([1.0, 0.0, 1.0], [0.125, 0.0, 0.1], 0.5),
        defaults={"p": 3, "N": 128, "dt": 5e-5, "t_end": 0.2, "tableau": "RK44", "interface": "es_rusanov"},
    )


def _sine_shock(gamma=1.4, **_):
    left = np.array([1.515695, 0.523346, 1.805])

    def initial(x):
        xs = x[..., 0]
        right = _stack(1.0 + 0.1 * np.sin(20.0 * np.pi * xs), [0.0], 1.0)
        return np.where((xs < -4.5)[..., None], left, right)

    return ProblemSpec(
        "sine_shock",
        gas=GasModel(gamma, 1.0),
        bounds=[(-5.0, 5.0)],
        bc="dirichlet",
        initial=initial,
        defaults={"p": 3, "N": 256, "dt": 2e-4, "t_end": 5.0, "tableau": "RK44", "interface": "es_rusanov"},
    )


def _gamma_demo(gamma=1.4, **_):
    def initial(x):
        xs = x[..., 0]
        c = np.cos(2.0 * np.pi * xs)
        left = _stack(1.0 + 0.5 * c, [0.5], 1.0)
        right = _stack(0.5 + 0.25 * c, [0.5], 0.8)
        return np.where((xs < 0.0)[..., None], left, right)

    return ProblemSpec(
        "gamma_demo",
        gas=GasModel(gamma, 1.0),
        bounds=[(-2.0, 2.0)],
        bc="dirichlet",
        initial=initial,
        defaults={"p": 3, "N": 200, "dt": 1e-4, "t_end": 0.1, "tableau": "RK44", "interface": "es_rusanov"},
        u_ref=0.5,
    )


def _isentropic_vortex(gamma=1.4, eps=5.0, mach=0.5, alpha=math.pi / 4, **_):
    """Vortex advected diagonally through the periodic box [-5, 5]^2.

    Free stream speed 1 and temperature 1, so R = 1 / (gamma M^2)."""
    R = 1.0 / (gamma * mach**2)
    gas = GasModel(gamma, R)
    length = 10.0
    amp_T = eps**2 * mach**2 * (gamma - 1.0) / (8.0 * np.pi**2)
    if not mach > 0 or amp_T * math.e >= 1.0:
        raise ConfigError("vortex parameters give a non-positive core temperature")

    def exact(x, t):
        dx = x[..., 0] - math.cos(alpha) * t
        dy = x[..., 1] - math.sin(alpha) * t
        # nearest periodic image of the vortex center
        dx = (dx + 0.5 * length) % length - 0.5 * length
        dy = (dy + 0.5 * length) % length - 0.5 * length
        G = 1.0 - dx**2 - dy**2
        T = 1.0 - amp_T * np.exp(G)
        rho = T ** (1.0 / (gamma - 1.0))
        swirl = eps / (2.0 * np.pi) * np.exp(0.5 * G)
        u = math.cos(alpha) - swirl * dy
        v = math.sin(alpha) + swirl * dx
        return _stack(rho, [u, v], rho * R * T)

    return ProblemSpec(
        "isentropic_vortex",
        dim=2,
        gas=gas,
        bounds=[(-5.0, 5.0), (-5.0, 5.0)],
        initial=lambda x: exact(x, 0.0),
        exact=exact,
        defaults={"p": 2, "N": 10, "dt": 0.01, "t_end": 1.0, "tableau": "BSRK43", "interface": "es_rusanov"},
    )


def _free_stream(gamma=1.4, dim=2, **_):
    state = [1.0] + [0.3, -0.2][:dim] + [1.0]

    def exact(x, t):
        return np.broadcast_to(np.asarray(state), x.shape[:-1] + (dim + 2,)).copy()

    return ProblemSpec(
        "free_stream",
        dim=dim,
        gas=GasModel(gamma, 1.0),
        bounds=[(-1.0, 1.0)] * dim,
        initial=lambda x: exact(x, 0.0),
        exact=exact,
        defaults={"p": 3, "N": 4, "dt": 0.01, "t_end": 0.1, "tableau": "RK44", "interface": "es_rusanov"},
    )


def _exp_entropy_ode(u0=0.5, **_):
    ode = ExpEntropyOde()
    return ProblemSpec(
        "exp_entropy_ode",
        kind="ode",
        ode=ode,
        u0=[u0],
        exact=lambda x, t: ode.exact([u0], t),
        defaults={"dt": 0.1, "t_end": 5.0, "tableau": "RK44"},
    )


def _quadratic_conserved_ode(**_):
    ode = QuadraticConservedOde()
    return ProblemSpec(
        "quadratic_conserved_ode",
        kind="ode",
        ode=ode,
        u0=[1.0, 0.0],
        exact=lambda x, t: ode.exact([1.0, 0.0], t),
        defaults={"dt": 0.1, "t_end": 10.0, "tableau": "RK44"},
    )


_PROBLEMS = {
    "density_wave": (_density_wave, ("gamma", "u0", "amplitude", "pressure")),
    "sod": (_sod, ("gamma",)),
    "sine_shock": (_sine_shock, ("gamma",)),
    "gamma_demo": (_gamma_demo, ("gamma",)),
    "isentropic_vortex": (_isentropic_vortex, ("gamma", "eps", "mach", "alpha")),
    "free_stream": (_free_stream, ("gamma", "dim")),
    "exp_entropy_ode": (_exp_entropy_ode, ("u0",)),
    "quadratic_conserved_ode": (_quadratic_conserved_ode, ()),
}


def problem_names():
    return sorted(_PROBLEMS)


def make_problem(name, overrides=None):
    """Build a named problem; overrides adjust its physical parameters"""
    try:
        builder, allowed = _PROBLEMS[name]
    except KeyError:
        raise UnknownNameError("problem", name, _PROBLEMS)
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(allowed)
    if unknown:
        raise ConfigError(
            "Problem %s does not accept %s (allowed: %s)"
            % (name, ", ".join(sorted(unknown)), ", ".join(allowed) or "none")
        )
    if "dim" in overrides and overrides["dim"] not in (1, 2):
        raise ConfigError("free_stream dimension must be 1 or 2")
    spec = builder(**overrides)
    spec.parameters = overrides
    return spec


def evaluate_exact(spec, x, t):
    """Primitive exact solution at points x (..., dim) and time t"""
    if spec.exact is None:
        raise ConfigError("Problem %s has no exact solution" % spec.name)
    return spec.exact(np.asarray(x, dtype=np.float64), float(t))
