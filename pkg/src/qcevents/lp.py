"""Local hidden variable feasibility for bipartite correlation tables.

A table ``p[a, b, x, y] = p(a, b | x, y)`` admits a local model exactly when
it is a mixture of deterministic strategies ``x -> a``, ``y -> b``. The
mixture weights are found by a phase-1 simplex over the strategy columns.
"""
from dataclasses import dataclass, field
import itertools

import numpy as np

from qcevents._accel import simplex_phase1
from qcevents.errors import InputError

LHV_TOL = 1e-7
SETTING_MASS_TOL = 1e-12
TABLE_NORM_TOL = 1e-8
PIVOT_TOL = 1e-11


@dataclass
class LHVResult:
    """Outcome of :func:`lhv_feasible`.

    ``residual`` is the largest constraint violation of the returned weights;
    ``chsh`` and ``facets_ok`` are set for two-setting, two-outcome tables.
    """

    feasible: bool
    residual: float
    weights: np.ndarray
    strategies: list
    status: int
    settings: list
    chsh: float = None
    facets_ok: bool = None
    no_signalling: bool = None
    meta: dict = field(default_factory=dict)

    @property
    def facet_agreement(self):
        """True when the facet test applies and agrees with the LP verdict."""
        if self.facets_ok is None or not self.no_signalling:
            return None
        return self.facets_ok == self.feasible

    def to_dict(self):
        return {
            "feasible": bool(self.feasible),
            "residual": float(self.residual),
            "status": int(self.status),
            "settings": [list(s) for s in self.settings],
            "chsh": None if self.chsh is None else float(self.chsh),
            "facets_ok": self.facets_ok,
            "no_signalling": self.no_signalling,
            "support": [
                {"strategy": [list(s[0]), list(s[1])], "weight": float(w)}
                for s, w in zip(self.strategies, self.weights)
                if w > 1e-12
            ]
            if self.feasible
            else [],
        }


def check_table(p, tol=TABLE_NORM_TOL):
    """Validate shape ``(A, B, X, Y)``, nonnegativity and per-setting normalisation."""
    p = np.asarray(p, dtype=float)
    if p.ndim != 4 or min(p.shape) < 1:
        raise InputError("table must have shape (outcomes_a, outcomes_b, settings_a, settings_b)")
    if not np.all(np.isfinite(p)):
        raise InputError("table has non-finite entries")
    if float(p.min()) < -tol:
        raise InputError("table has negative entries")
    sums = p.sum(axis=(0, 1))
    if float(np.max(np.abs(sums - 1.0))) > tol:
        raise InputError("each setting pair must be normalised")
    return p


def deterministic_strategies(n_a, n_x, n_b, n_y):
    """All pairs ``(f, g)`` with ``f[x]`` an outcome for Alice and ``g[y]`` for Bob."""
    fs = list(itertools.product(range(n_a), repeat=n_x))
    gs = list(itertools.product(range(n_b), repeat=n_y))
    return [(f, g) for f in fs for g in gs]


def strategy_matrix(shape, strategies, settings):
    """Constraint matrix: one row per ``(x, y, a, b)`` over ``settings``, one column per strategy."""
    n_a, n_b = shape[0], shape[1]
    rows = []
    for x, y in settings:
        for a in range(n_a):
            for b in range(n_b):
                rows.append([1.0 if (f[x] == a and g[y] == b) else 0.0 for f, g in strategies])
    return np.array(rows, dtype=float).reshape(len(rows), len(strategies))


def correlator(p, x, y):
    """``E(x, y) = sum_ab (-1)^(a+b) p(a, b | x, y)`` for two-outcome tables."""
    s = np.array([[1.0, -1.0], [-1.0, 1.0]])
    return float(np.sum(s * p[:, :, x, y]))


def chsh_values(p):
    """The four CHSH combinations with a single minus sign, in absolute value."""
    e = np.array([[correlator(p, x, y) for y in range(2)] for x in range(2)])
    out = []
    for mx in range(2):
        for my in range(2):
            signs = np.ones((2, 2))
            signs[mx, my] = -1.0
            out.append(abs(float(np.sum(signs * e))))
    return out


def chsh_value(p):
    """Largest CHSH value over the eight facet variants."""
    p = check_table(p)
    if p.shape != (2, 2, 2, 2):
        raise InputError("CHSH needs two outcomes and two settings per side")
    return max(chsh_values(p))


def is_no_signalling(p, tol=TABLE_NORM_TOL):
    pa = p.sum(axis=1)  # (a, x, y)
    pb = p.sum(axis=0)  # (b, x, y)
    ok_a = np.max(np.abs(pa - pa[:, :, :1])) <= tol
    ok_b = np.max(np.abs(pb - pb[:, :1, :])) <= tol
    return bool(ok_a and ok_b)


def lhv_feasible(p, tol=LHV_TOL, setting_weights=None):
    """Decide whether ``p(a, b | x, y)`` has a local hidden variable model.

    Args:
        p: array of shape ``(A, B, X, Y)``.
        tol: largest allowed constraint residual.
        setting_weights: optional ``(X, Y)`` array; setting pairs with mass
            below 1e-12 impose no constraint.

    Returns:
        :class:`LHVResult`. For two-setting two-outcome tables the CHSH facets
        are evaluated too; with no-signalling they decide membership on their
        own, which gives an independent check of the LP.
    """
    p = np.asarray(p, dtype=float)
    if p.ndim != 4:
        raise InputError("table must have four axes")
    n_a, n_b, n_x, n_y = p.shape
    if setting_weights is None:
        settings = [(x, y) for x in range(n_x) for y in range(n_y)]
    else:
        w = np.asarray(setting_weights, dtype=float)
        if w.shape != (n_x, n_y):
            raise InputError("setting weights must have shape (X, Y)")
        settings = [(x, y) for x in range(n_x) for y in range(n_y) if w[x, y] >= SETTING_MASS_TOL]
    if not settings:
        raise InputError("no setting pair carries probability")
    # unconstrained setting pairs are replaced by a uniform block for validation only
    sub = np.full((n_a, n_b, n_x, n_y), 1.0 / (n_a * n_b))
    for x, y in settings:
        sub[:, :, x, y] = p[:, :, x, y]
    check_table(sub)
    strategies = deterministic_strategies(n_a, n_x, n_b, n_y)
    a_eq = strategy_matrix(p.shape, strategies, settings)
    b_eq = np.concatenate([p[:, :, x, y].reshape(-1) for x, y in settings])
    a_eq = np.vstack([a_eq, np.ones((1, len(strategies)))])
    b_eq = np.concatenate([b_eq, [1.0]])
    max_iter = 50 * (a_eq.shape[0] + a_eq.shape[1])
    status, x, infeas = simplex_phase1(np.ascontiguousarray(a_eq), np.ascontiguousarray(b_eq), PIVOT_TOL, max_iter)
    x = np.maximum(np.asarray(x, dtype=float), 0.0)
    residual = float(np.max(np.abs(a_eq @ x - b_eq)))
    if status != 0:
        residual = max(residual, float(infeas))
    feasible = status == 0 and residual <= tol
    result = LHVResult(bool(feasible), residual, x, strategies, int(status), settings)
    if p.shape == (2, 2, 2, 2) and len(settings) == 4:
        vals = chsh_values(p)
        result.chsh = max(vals)
        result.facets_ok = bool(result.chsh <= 2.0 + tol)
        result.no_signalling = is_no_signalling(p)
    return result


def pr_box():
    """Popescu-Rohrlich box: ``a xor b = x and y`` uniformly."""
    p = np.zeros((2, 2, 2, 2))
    for a, b, x, y in itertools.product(range(2), repeat=4):
        if (a ^ b) == (x & y):
            p[a, b, x, y] = 0.5
    return p


def product_table(pa, pb):
    """``p(a|x) p(b|y)`` from arrays of shape ``(A, X)`` and ``(B, Y)``."""
    pa = np.asarray(pa, dtype=float)
    pb = np.asarray(pb, dtype=float)
    return np.einsum("ax,by->abxy", pa, pb)


__all__ = [
    "LHV_TOL",
    "LHVResult",
    "check_table",
    "deterministic_strategies",
    "strategy_matrix",
    "correlator",
    "chsh_values",
    "chsh_value",
    "is_no_signalling",
    "lhv_feasible",
    "pr_box",
    "product_table",
]
