"""Entropy-conservative / entropy-stable DG collocation for the compressible Euler equations.

Fields are stored element-blocked:

    1D  (N, n, 3)             axes (element, node, variable)
    2D  (Ny, Nx, n, n, 4)     axes (element y, element x, node y, node x, variable)

with n = p + 1 Legendre-Gauss-Lobatto nodes per direction.  Flattening in C order
keeps the degrees of freedom of each element contiguous; element k = ey * Nx + ex.
"""

import math

import numpy as np
from numba import vectorize
from scipy.special import eval_legendre

from integrator import OdeSystem
from utils import ConfigError, StateError, UnknownNameError

MAX_DEGREE = 8
INTERFACE_FLUXES = ("ec", "es_rusanov")
BOUNDARY_CONDITIONS = ("periodic", "dirichlet")
LOG_MEAN_SERIES_CUTOFF = 1e-4


class GasModel:
    """Calorically perfect gas"""

    def __init__(self, gamma=1.4, R=1.0):
        if not gamma > 1:
            raise ConfigError("ratio of specific heats must exceed 1, got %r" % gamma)
        if not R > 0:
            raise ConfigError("gas constant must be positive, got %r" % R)
        self.gamma = float(gamma)
        self.R = float(R)

    def __repr__(self):
        return "GasModel(gamma=%g, R=%g)" % (self.gamma, self.R)


# ---------------------------------------------------------------------------
# Summation-by-parts operator


class SbpOperator:
    def __init__(self, p, nodes, weights, D):
        self.p = p
        self.nodes = nodes
        self.weights = weights
        self.D = D
        self.B = np.zeros((p + 1, p + 1))
        self.B[0, 0] = -1.0
        self.B[-1, -1] = 1.0
        self.M = np.diag(weights)
        for arr in (self.nodes, self.weights, self.D, self.B, self.M):
            arr.flags.writeable = False

    @property
    def n(self):
        return self.p + 1

    def sbp_defect(self):
        """max |M D + (M D)^T - B|"""
        Q = self.M @ self.D
        return float(np.max(np.abs(Q + Q.T - self.B)))


def lgl_nodes_weights(p):
    """Legendre-Gauss-Lobatto nodes and weights on [-1, 1], Newton iteration
    from the Chebyshev-Gauss-Lobatto points"""
    n = p
    x = -np.cos(np.pi * np.arange(n + 1) / n)
    for _ in range(100):
        P, P_prev = eval_legendre(n, x), eval_legendre(n - 1, x)
        dx = (x * P - P_prev) / ((n + 1) * P)
        dx[0] = dx[-1] = 0.0
        x = x - dx
        if np.max(np.abs(dx)) < 1e-16:
            break
    x[0], x[-1] = -1.0, 1.0
    x = 0.5 * (x - x[::-1])
    P = eval_legendre(n, x)
    w = 2.0 / (n * (n + 1) * P**2)
    w = 0.5 * (w + w[::-1])
    return x, w


def lagrange_derivative(x):
    """Collocation derivative of the Lagrange basis on nodes x (barycentric form)"""
    n = len(x)
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    lam = 1.0 / np.prod(diff, axis=1)
    D = (lam[None, :] / lam[:, None]) / diff
    np.fill_diagonal(D, 0.0)
    D[np.arange(n), np.arange(n)] = -D.sum(axis=1)
    return D


def lgl_operator(p):
    """Diagonal-norm SBP operator on p+1 LGL nodes, 1 <= p <= 8"""
    if not (isinstance(p, (int, np.integer)) and 1 <= p <= MAX_DEGREE):
        raise ConfigError("polynomial degree must be an integer in [1, %d], got %r" % (MAX_DEGREE, p))
    x, w = lgl_nodes_weights(int(p))
    return SbpOperator(int(p), x, w, lagrange_derivative(x))


# ---------------------------------------------------------------------------
# Mesh


class Mesh:
    """Uniform tensor-product mesh of N (or Nx x Ny) elements on a box"""

    def __init__(self, dim, n_elements, bounds, bc="periodic"):
        if dim not in (1, 2):
            raise ConfigError("dimension must be 1 or 2, got %r" % dim)
        if bc not in BOUNDARY_CONDITIONS:
            raise UnknownNameError("boundary condition", bc, BOUNDARY_CONDITIONS)
        n_elements = tuple(np.atleast_1d(n_elements).astype(int))
        if len(n_elements) == 1:
            n_elements = n_elements * dim
        bounds = np.asarray(bounds, dtype=np.float64).reshape(dim, 2)
        if len(n_elements) != dim or min(n_elements) < 1:
            raise ConfigError("need %d positive element counts, got %r" % (dim, n_elements))
        if np.any(bounds[:, 1] <= bounds[:, 0]):
            raise ConfigError("domain bounds must be increasing, got %r" % bounds.tolist())
        self.dim = dim
        self.n_elements = n_elements  # (Nx,) or (Nx, Ny)
        self.bounds = bounds
        self.bc = bc

    @property
    def K(self):
        return int(np.prod(self.n_elements))

    @property
    def dx(self):
        return (self.bounds[:, 1] - self.bounds[:, 0]) / np.array(self.n_elements)

    @property
    def jacobian(self):
        """Half element widths per direction"""
        return 0.5 * self.dx

    def element_axes(self):
        """Element axes in storage order: (N,) in 1D, (Ny, Nx) in 2D"""
        return tuple(reversed(self.n_elements))

    def field_shape(self, n, nvar):
        return self.element_axes() + (n,) * self.dim + (nvar,)

    def element_centers(self):
        """(K, dim) element centers, element order of the flat state"""
        centers = [self.bounds[d, 0] + (np.arange(self.n_elements[d]) + 0.5) * self.dx[d] for d in range(self.dim)]
        if self.dim == 1:
            return centers[0][:, None]
        X, Y = np.meshgrid(centers[0], centers[1], indexing="xy")
        return np.stack([X.ravel(), Y.ravel()], axis=-1)

    def node_coordinates(self, sbp):
        """Physical coordinates of every node, shape field_shape[:-1] + (dim,)"""
        xi = sbp.nodes
        lines = [
            self.bounds[d, 0] + (np.arange(self.n_elements[d])[:, None] + 0.5 * (xi[None, :] + 1.0)) * self.dx[d]
            for d in range(self.dim)
        ]
        if self.dim == 1:
            return lines[0][..., None]
        Nx, Ny = self.n_elements
        n = sbp.n
        X = np.broadcast_to(lines[0][None, :, None, :], (Ny, Nx, n, n))
        Y = np.broadcast_to(lines[1][:, None, :, None], (Ny, Nx, n, n))
        return np.stack([X, Y], axis=-1)

    def node_weights(self, sbp):
        """Quadrature weight times Jacobian at each node of one element"""
        J = self.jacobian
        if self.dim == 1:
            return sbp.weights * J[0]
        return np.outer(sbp.weights, sbp.weights) * (J[0] * J[1])

    def __repr__(self):
        return "Mesh(dim=%d, elements=%r, bc=%s)" % (self.dim, self.n_elements, self.bc)


# ---------------------------------------------------------------------------
# Pointwise physics


@vectorize(["float64(float64, float64)"], nopython=True)
def _log_mean(a, b):
    zeta = (a - b) / (a + b)
    u = zeta * zeta
    if u < LOG_MEAN_SERIES_CUTOFF:
        return (a + b) / (2.0 * (1.0 + u / 3.0 + u * u / 5.0 + u * u * u / 7.0))
    return (a - b) / math.log(a / b)


def log_mean(a, b):
    """(a - b) / (ln a - ln b) for positive a, b; stable as a -> b"""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if not (np.all(a > 0) and np.all(b > 0)):
        raise ValueError("logarithmic mean needs positive arguments")
    out = _log_mean(a, b)
    return float(out) if np.ndim(out) == 0 else out


def primitive(q, gas, check=True):
    """Density, velocity (..., dim) and pressure of conservative states (..., dim+2)"""
    dim = q.shape[-1] - 2
    rho = q[..., 0]
    vel = q[..., 1 : 1 + dim] / rho[..., None]
    P = (gas.gamma - 1.0) * (q[..., -1] - 0.5 * np.sum(vel * q[..., 1 : 1 + dim], axis=-1))
    if check:
        check_admissible(rho, P)
    return rho, vel, P


def conservative(rho, vel, P, gas):
    rho = np.asarray(rho, dtype=np.float64)
    vel = np.asarray(vel, dtype=np.float64)
    P = np.asarray(P, dtype=np.float64)
    E = P / (gas.gamma - 1.0) + 0.5 * rho * np.sum(vel**2, axis=-1)
    return np.concatenate([rho[..., None], rho[..., None] * vel, E[..., None]], axis=-1)


def check_admissible(rho, P, nodes_per_element=1):
    """Raise StateError at the first node with non-positive density or pressure"""
    for name, values in (("density", rho), ("pressure", P)):
        bad = ~(values > 0)
        if np.any(bad):
            flat = int(np.flatnonzero(bad)[0])
            value = float(np.ravel(values)[flat])
            raise StateError(name, flat // nodes_per_element, flat % nodes_per_element, value)


def physical_flux(q, direction, gas):
    rho, vel, P = primitive(q, gas)
    return _physical_flux(q, rho, vel, P, direction)


def _physical_flux(q, rho, vel, P, direction):
    un = vel[..., direction]
    f = q * un[..., None]
    f[..., 1 + direction] += P
    f[..., -1] += P * un
    return f


def entropy_quantities(q, gas):
    """Mathematical entropy S = -rho s / (gamma - 1), entropy variables w and flux psi.

    psi has a trailing axis with one entry per direction."""
    g = gas.gamma
    rho, vel, P = primitive(q, gas)
    s = np.log(P) - g * np.log(rho)
    S = -rho * s / (g - 1.0)
    beta = rho / P
    w = np.concatenate(
        [
            ((g - s) / (g - 1.0) - 0.5 * beta * np.sum(vel**2, axis=-1))[..., None],
            beta[..., None] * vel,
            -beta[..., None],
        ],
        axis=-1,
    )
    psi = rho[..., None] * vel
    return S, w, psi


def _entropy_density(q, gas):
    g = gas.gamma
    rho, _, P = primitive(q, gas)
    return -rho * (np.log(P) - g * np.log(rho)) / (g - 1.0)


def _entropy_variables(q, gas):
    return entropy_quantities(q, gas)[1]


def _ec_flux_prim(left, right, direction, gas):
    rhoL, velL, PL = left
    rhoR, velR, PR = right
    g = gas.gamma
    betaL = 0.5 * rhoL / PL
    betaR = 0.5 * rhoR / PR
    rho_ln = _log_mean(rhoL, rhoR)
    beta_ln = _log_mean(betaL, betaR)
    rho_avg = 0.5 * (rhoL + rhoR)
    beta_avg = 0.5 * (betaL + betaR)
    vel_avg = 0.5 * (velL + velR)
    vel2_avg = 0.5 * (np.sum(velL**2, axis=-1) + np.sum(velR**2, axis=-1))
    un = vel_avg[..., direction]

    f_mass = rho_ln * un
    f_mom = vel_avg * f_mass[..., None]
    f_mom[..., direction] += rho_avg / (2.0 * beta_avg)
    f_energy = (0.5 / ((g - 1.0) * beta_ln) - 0.5 * vel2_avg) * f_mass + np.sum(vel_avg * f_mom, axis=-1)
    return np.concatenate([f_mass[..., None], f_mom, f_energy[..., None]], axis=-1)


def ec_flux(qL, qR, direction, gas):
    """Two-point entropy-conservative, kinetic-energy-preserving flux"""
    return _ec_flux_prim(primitive(qL, gas), primitive(qR, gas), direction, gas)


def _sound_speed(rho, P, gas):
    return np.sqrt(gas.gamma * P / rho)


def interface_flux(qL, qR, direction, gas, mode="es_rusanov"):
    """EC flux, optionally with local Lax-Friedrichs dissipation"""
    if mode not in INTERFACE_FLUXES:
        raise UnknownNameError("interface flux", mode, INTERFACE_FLUXES)
    left, right = primitive(qL, gas), primitive(qR, gas)
    f = _ec_flux_prim(left, right, direction, gas)
    if mode == "es_rusanov":
        lam = np.maximum(
            np.abs(left[1][..., direction]) + _sound_speed(left[0], left[2], gas),
            np.abs(right[1][..., direction]) + _sound_speed(right[0], right[2], gas),
        )
        f = f - 0.5 * lam[..., None] * (qR - qL)
    return f


# ---------------------------------------------------------------------------
# Semidiscretization


def _line_tendency(q, direction, J, sbp, gas, mode, exterior=None):
    """Tendency along one direction for q laid out as (..., E, n, nvar).

    exterior is None (periodic) or a pair of boundary states broadcastable
    to (..., 1, nvar)."""
    n = sbp.n
    prim = primitive(q, gas, check=False)
    prim_i = tuple(v[..., :, :, None] if v.ndim == q.ndim - 1 else v[..., :, :, None, :] for v in prim)
    prim_j = tuple(v[..., :, None, :] if v.ndim == q.ndim - 1 else v[..., :, None, :, :] for v in prim)
    F = _ec_flux_prim(prim_i, prim_j, direction, gas)
    out = (-2.0 / J) * np.einsum("ij,...ijv->...iv", sbp.D, F)

    q_right_face = q[..., :, n - 1, :]
    q_left_face = q[..., :, 0, :]
    if exterior is None:
        f_right = interface_flux(q_right_face, np.roll(q_left_face, -1, axis=-2), direction, gas, mode)
        f_left = np.roll(f_right, 1, axis=-2)
    else:
        ext_left, ext_right = exterior
        shape = q_left_face[..., :1, :].shape
        ext_left = np.broadcast_to(ext_left, shape)
        ext_right = np.broadcast_to(ext_right, shape)
        outer = np.concatenate([q_left_face[..., 1:, :], ext_right], axis=-2)
        inner = np.concatenate([ext_left, q_right_face[..., :-1, :]], axis=-2)
        f_right = interface_flux(q_right_face, outer, direction, gas, mode)
        f_left = interface_flux(inner, q_left_face, direction, gas, mode)

    rho, vel, P = prim
    f_own_right = _physical_flux(q_right_face, rho[..., :, n - 1], vel[..., :, n - 1, :], P[..., :, n - 1], direction)
    f_own_left = _physical_flux(q_left_face, rho[..., :, 0], vel[..., :, 0, :], P[..., :, 0], direction)
    out[..., :, n - 1, :] -= (f_right - f_own_right) / (J * sbp.weights[-1])
    out[..., :, 0, :] += (f_left - f_own_left) / (J * sbp.weights[0])
    return out


# storage layout -> line layout (..., E, n, nvar) per direction
_LINE_AXES = {
    (1, 0): (0, 1, 2),
    (2, 0): (0, 2, 1, 3, 4),
    (2, 1): (1, 3, 0, 2, 4),
}


class EulerField:
    """Conservative nodal field on a mesh"""

    def __init__(self, mesh, sbp, gas, q):
        self.mesh = mesh
        self.sbp = sbp
        self.gas = gas
        self.q = np.asarray(q, dtype=np.float64).reshape(mesh.field_shape(sbp.n, mesh.dim + 2))

    @property
    def nvar(self):
        return self.mesh.dim + 2

    def primitive(self):
        return primitive(self.q, self.gas)

    def nodes(self):
        return self.mesh.node_coordinates(self.sbp)

    def element_mean(self, values):
        """Quadrature mean of a nodal scalar over each element, (K,)"""
        W = self.mesh.node_weights(self.sbp)
        axes = tuple(range(-self.mesh.dim, 0))
        means = np.sum(values * W, axis=axes) / np.sum(W)
        return means.reshape(-1)

    def flat(self):
        return self.q.reshape(-1)


class EulerSystem(OdeSystem):
    """Euler semidiscretization as an OdeSystem with one entropy per element.

    exterior: callable (x, t) -> conservative states, used for Dirichlet boundaries."""

    def __init__(self, mesh, sbp, gas, interface="es_rusanov", exterior=None):
        if interface not in INTERFACE_FLUXES:
            raise UnknownNameError("interface flux", interface, INTERFACE_FLUXES)
        if mesh.bc == "dirichlet" and exterior is None:
            raise ConfigError("Dirichlet boundaries need an exterior state")
        self.mesh = mesh
        self.sbp = sbp
        self.gas = gas
        self.interface = interface
        self.exterior = exterior
        self.nvar = mesh.dim + 2
        self.shape = mesh.field_shape(sbp.n, self.nvar)
        self.dim = int(np.prod(self.shape))
        self.n_partitions = mesh.K
        self.block = sbp.n**mesh.dim * self.nvar
        self.W = mesh.node_weights(sbp)
        self._node_axes = tuple(range(-mesh.dim - 1, -1))
        self._coords = mesh.node_coordinates(sbp)

    def field(self, u):
        return EulerField(self.mesh, self.sbp, self.gas, u)

    def _face_exterior(self, direction, t):
        d = self.mesh.dim
        X = self._coords.transpose(_LINE_AXES[(d, direction)])
        left = self.exterior(X[..., :1, 0, :], t)
        right = self.exterior(X[..., -1:, -1, :], t)
        return left, right

    def rhs(self, t, u):
        return semidiscrete_rhs(self, u.reshape(self.shape), t).reshape(-1)

    def entropy(self, u):
        return local_entropy(self, u.reshape(self.shape))

    def entropy_rate(self, t, u, du):
        return local_entropy_rate(self, u.reshape(self.shape), du.reshape(self.shape))

    def linear_invariants(self, u):
        """Domain integrals of mass, momentum and total energy"""
        q = u.reshape(self.shape)
        axes = tuple(range(q.ndim - 1))
        W = self.W[..., None]
        return np.sum(q * W, axis=axes)

    def partition_slice(self, kappa):
        return slice(kappa * self.block, (kappa + 1) * self.block)

    def partition_entropy(self, u_part, kappa):
        q = u_part.reshape((self.sbp.n,) * self.mesh.dim + (self.nvar,))
        return float(np.sum(_entropy_density(q, self.gas) * self.W))

    def partition_of_index(self, index):
        return int(index) // self.block


def semidiscrete_rhs(system, q, t=0.0):
    """dq/dt of the flux-differencing DG collocation scheme, field-shaped"""
    mesh, sbp, gas = system.mesh, system.sbp, system.gas
    rho, _, P = primitive(q, gas, check=False)
    check_admissible(rho, P, nodes_per_element=sbp.n**mesh.dim)
    out = np.zeros_like(q)
    for direction in range(mesh.dim):
        axes = _LINE_AXES[(mesh.dim, direction)]
        q_line = q.transpose(axes)
        exterior = None if mesh.bc == "periodic" else system._face_exterior(direction, t)
        tendency = _line_tendency(q_line, direction, mesh.jacobian[direction], sbp, gas, system.interface, exterior)
        out += tendency.transpose(np.argsort(axes))
    return out


def local_entropy(system, q):
    """eta_k = sum of quadrature weight * J * S over the nodes of element k"""
    S = _entropy_density(q, system.gas)
    return np.sum(S * system.W, axis=tuple(range(-system.mesh.dim, 0))).reshape(-1)


def local_entropy_rate(system, q, dq):
    """Semidiscrete entropy production per element, sum of weight * J * w . dq"""
    w = _entropy_variables(q, system.gas)
    wdq = np.sum(w * dq, axis=-1)
    return np.sum(wdq * system.W, axis=tuple(range(-system.mesh.dim, 0))).reshape(-1)


def tadmor_defect(qL, qR, direction, gas):
    """(w_R - w_L) . f_EC - (psi_R - psi_L); zero for an entropy-conservative flux"""
    _, wL, psiL = entropy_quantities(qL, gas)
    _, wR, psiR = entropy_quantities(qR, gas)
    f = ec_flux(qL, qR, direction, gas)
    return np.sum((wR - wL) * f, axis=-1) - (psiR[..., direction] - psiL[..., direction])
