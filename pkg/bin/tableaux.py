"""Explicit Runge-Kutta methods used for the relaxation experiments.

Coefficients are transcribed from

    BSRK43  Bogacki & Shampine (1989), 3(2) pair
    RK44    Kutta (1901), classical fourth-order method
    BSRK85  Bogacki & Shampine (1996), 5(4) pair, first embedded weights
    VRK96   Verner (1978) 6(5) pair, written with a final FSAL stage
"""

import math
from fractions import Fraction as Fr
from functools import lru_cache

import numpy as np

from utils import ConfigError, UnknownNameError

CONSISTENCY_TOL = 1e-14
MAX_CHECKED_ORDER = 6


class ButcherTableau:
    """Explicit Runge-Kutta method (A, b, c) with optional embedded weights"""

    def __init__(self, name, A, b, c, p, b_embedded=None, p_embedded=None):
        self.name = name
        self.A = np.array(A, dtype=np.float64)
        self.b = np.array(b, dtype=np.float64)
        self.c = np.array(c, dtype=np.float64)
        self.p = int(p)
        self.b_embedded = None if b_embedded is None else np.array(b_embedded, dtype=np.float64)
        self.p_embedded = None if p_embedded is None else int(p_embedded)
        self.s = len(self.b)
        self.validate()

        for arr in (self.A, self.b, self.c) + (() if self.b_embedded is None else (self.b_embedded,)):
            arr.flags.writeable = False

    def validate(self):
        s = self.s
        if s < 1:
            raise ConfigError("Tableau %s has no stages" % self.name)
        if self.A.shape != (s, s) or self.c.shape != (s,):
            raise ConfigError("Tableau %s has inconsistent shapes" % self.name)
        if np.any(np.triu(self.A) != 0.0):
            raise ConfigError("Tableau %s is not explicit (A must be strictly lower triangular)" % self.name)
        if abs(self.b.sum() - 1.0) > CONSISTENCY_TOL:
            raise ConfigError("Weights of tableau %s do not sum to one" % self.name)
        if np.max(np.abs(self.c - self.A.sum(axis=1))) > CONSISTENCY_TOL:
            raise ConfigError("Abscissae of tableau %s violate the row-sum condition" % self.name)
        if self.b_embedded is not None:
            if self.b_embedded.shape != (s,):
                raise ConfigError("Embedded weights of tableau %s have the wrong length" % self.name)
            if abs(self.b_embedded.sum() - 1.0) > CONSISTENCY_TOL:
                raise ConfigError("Embedded weights of tableau %s do not sum to one" % self.name)

    @property
    def nonnegative_weights(self):
        return bool(np.min(self.b) >= 0.0)

    @property
    def has_embedded(self):
        return self.b_embedded is not None

    def __repr__(self):
        return "ButcherTableau(%s, s=%d, p=%d)" % (self.name, self.s, self.p)


def _rows(rows, s):
    A = [[Fr(0)] * s for _ in range(s)]
    for i, row in enumerate(rows):
        for j, a in enumerate(row):
            A[i + 1][j] = Fr(a)
    return A


def _build(name, rows, b, p, b_embedded=None, p_embedded=None):
    """Row sums are taken in exact arithmetic so that c matches A to the last bit"""
    s = len(b)
    A = _rows(rows, s)
    c = [sum(r, Fr(0)) for r in A]
    to_float = lambda v: [float(Fr(x)) for x in v]  # noqa: E731
    return ButcherTableau(
        name,
        [to_float(r) for r in A],
        to_float(b),
        to_float(c),
        p,
        None if b_embedded is None else to_float(b_embedded),
        p_embedded,
    )


def _bsrk43():
    rows = [
        ["1/2"],
        [0, "3/4"],
        ["2/9", "1/3", "4/9"],
    ]
    b = ["2/9", "1/3", "4/9", 0]
    bh = ["7/24", "1/4", "1/3", "1/8"]
    return _build("BSRK43", rows, b, 3, bh, 2)


def _rk44():
    rows = [
        ["1/2"],
        [0, "1/2"],
        [0, 0, 1],
    ]
    b = ["1/6", "1/3", "1/3", "1/6"]
    return _build("RK44", rows, b, 4)


def _bsrk85():
    rows = [
        ["1/6"],
        ["2/27", "4/27"],
        ["183/1372", "-162/343", "1053/1372"],
        ["68/297", "-4/11", "42/143", "1960/3861"],
        ["597/22528", "81/352", "63099/585728", "58653/366080", "4617/20480"],
        ["174197/959244", "-30942/79937", "8152137/19744439", "666106/1039181", "-29421/29068", "482048/414219"],
        ["587/8064", 0, "4440339/15491840", "24353/124800", "387/44800", "2152/5985", "7267/94080"],
    ]
    b = ["587/8064", 0, "4440339/15491840", "24353/124800", "387/44800", "2152/5985", "7267/94080", 0]
    bh = [
        "2479/34992",
        0,
        "123/416",
        "612941/3411720",
        "43/1440",
        "2272/6561",
        "79937/1113912",
        "3293/556956",
    ]
    return _build("BSRK85", rows, b, 5, bh, 4)


def _vrk96():
    b6 = ["3/40", 0, "875/2244", "23/72", "264/1955", 0, "125/11592", "43/616"]
    rows = [
        ["1/6"],
        ["4/75", "16/75"],
        ["5/6", "-8/3", "5/2"],
        ["-165/64", "55/6", "-425/64", "85/96"],
        ["12/5", -8, "4015/612", "-11/36", "88/255"],
        ["-8263/15000", "124/75", "-643/680", "-81/250", "2484/10625", 0],
        ["3501/1720", "-300/43", "297275/52632", "-319/2322", "24068/84065", 0, "3850/26703"],
        b6,
    ]
    b = b6 + [0]
    bh = ["13/160", 0, "2375/5984", "5/16", "12/85", "3/44", 0, 0, 0]
    return _build("VRK96", rows, b, 6, bh, 5)


_BUILDERS = {
    "BSRK43": _bsrk43,
    "RK44": _rk44,
    "BSRK85": _bsrk85,
    "VRK96": _vrk96,
}


def builtin_names():
    return sorted(_BUILDERS)


@lru_cache(maxsize=None)
def builtin_tableau(name):
    """Return one of the registered tableaus (BSRK43, RK44, BSRK85, VRK96)"""
    try:
        builder = _BUILDERS[name]
    except KeyError:
        raise UnknownNameError("tableau", name, _BUILDERS)
    return builder()


def has_nonnegative_weights(tab):
    return tab.nonnegative_weights


@lru_cache(maxsize=None)
def rooted_trees(order):
    """All rooted trees with `order` vertices.

    A tree is the sorted tuple of its subtrees; the single vertex is ()."""
    if order == 1:
        return ((),)
    return tuple(sorted(_forests(order - 1)))


@lru_cache(maxsize=None)
def _forests(n):
    """Multisets of trees with n vertices in total, each a sorted tuple"""
    if n == 0:
        return frozenset([()])
    out = set()
    for k in range(1, n + 1):
        for tree in rooted_trees(k):
            for rest in _forests(n - k):
                out.add(tuple(sorted((tree,) + rest)))
    return frozenset(out)


def _order(tree):
    return 1 + sum(_order(t) for t in tree)


def _density(tree):
    if not tree:
        return 1
    return _order(tree) * math.prod(_density(t) for t in tree)


def _stage_weights(tab, tree):
    g = np.ones(tab.s)
    for child in tree:
        g = g * (tab.A @ _stage_weights(tab, child))
    return g


def check_order_conditions(tab, q):
    """Maximum residual |b . Phi(t) - 1/density(t)| over all rooted trees up to order q"""
    if not (isinstance(q, (int, np.integer)) and 1 <= q <= MAX_CHECKED_ORDER):
        raise ValueError("order q must be an integer in [1, %d], got %r" % (MAX_CHECKED_ORDER, q))
    residual = 0.0
    for order in range(1, q + 1):
        for tree in rooted_trees(order):
            phi = tab.b @ _stage_weights(tab, tree)
            residual = max(residual, abs(phi - 1.0 / _density(tree)))
    return float(residual)
