"""Hot loops with an optional numba backend.

Set ``QCE_DISABLE_NUMBA=1`` before import to use the pure-numpy fallbacks.
The commutator kernel has a vectorised numpy twin; the simplex kernel runs
its loop source uncompiled. Both backends agree to floating-point rounding.
"""
import functools
import os

import numpy as np

ENABLE_NUMBA = os.environ.get("QCE_DISABLE_NUMBA", "0").strip().lower() not in ("1", "true", "yes")

if ENABLE_NUMBA:
    try:
        import numba as nb
    except ImportError:  # pragma: no cover - numba is a declared dependency
        ENABLE_NUMBA = False

if ENABLE_NUMBA:
    njit = functools.partial(nb.njit, cache=False, nogil=True)
else:

    def njit(*args, **kwargs):
        if len(args) == 1 and callable(args[0]) and not kwargs:
            return args[0]
        return lambda func: func


LOOP_MAX_DIM = 6


def backend():
    """Name of the active kernel backend, ``"numba"`` or ``"numpy"``."""
    return "numba" if ENABLE_NUMBA else "numpy"


@njit
def _commutator_max_abs_loops(left, right):
    n = left.shape[0]
    m = right.shape[0]
    d = left.shape[1]
    out = np.zeros((n, m))
    for i in range(n):
        a = left[i]
        for j in range(m):
            b = right[j]
            worst = 0.0
            for r in range(d):
                for c in range(d):
                    acc = 0.0j
                    for k in range(d):
                        acc += a[r, k] * b[k, c] - b[r, k] * a[k, c]
                    mag = abs(acc)
                    if mag > worst:
                        worst = mag
            out[i, j] = worst
    return out


def _commutator_max_abs_numpy(left, right):
    out = np.zeros((left.shape[0], right.shape[0]))
    for i in range(left.shape[0]):
        a = left[i]
        comm = np.matmul(a, right) - np.matmul(right, a)
        out[i] = np.abs(comm).reshape(right.shape[0], -1).max(axis=1, initial=0.0)
    return out


def commutator_max_abs(left, right):
    """Pairwise max-norms of commutators.

    Args:
        left: stack of shape (n, d, d), complex.
        right: stack of shape (m, d, d), complex.

    Returns:
        (n, m) array with entry ``max |L_i R_j - R_j L_i|``.
    """
    left = np.ascontiguousarray(left, dtype=np.complex128)
    right = np.ascontiguousarray(right, dtype=np.complex128)
    # Above d = 6 batched BLAS matmul beats the scalar loop (see benchmarks/).
    if ENABLE_NUMBA and left.shape[1] <= LOOP_MAX_DIM:
        return _commutator_max_abs_loops(left, right)
    return _commutator_max_abs_numpy(left, right)


@njit
def simplex_phase1(a_eq, b_eq, tol, max_iter):
    """Find x >= 0 with ``a_eq @ x = b_eq`` by phase-1 simplex.

    Uses a dense tableau with one artificial variable per row and Bland's
    rule, so it terminates without cycling.

    Args:
        a_eq: (rows, cols) real constraint matrix.
        b_eq: (rows,) real right-hand side.
        tol: pivot and optimality tolerance.
        max_iter: hard cap on pivots.

    Returns:
        tuple ``(status, x, infeasibility)`` where status is 0 when the
        artificial objective reached zero (feasible), 1 when it stalled
        above zero (infeasible) and 2 when the pivot cap was hit.
    """
    rows, cols = a_eq.shape
    width = cols + rows + 1
    tab = np.zeros((rows + 1, width))
    basis = np.empty(rows, dtype=np.int64)
    for r in range(rows):
        sign = 1.0
        if b_eq[r] < 0.0:
            sign = -1.0
        for c in range(cols):
            tab[r, c] = sign * a_eq[r, c]
        tab[r, cols + r] = 1.0
        tab[r, width - 1] = sign * b_eq[r]
        basis[r] = cols + r
    # Objective row: minimise the sum of artificials, expressed in reduced form.
    for c in range(width):
        acc = 0.0
        for r in range(rows):
            acc += tab[r, c]
        tab[rows, c] = -acc
    for r in range(rows):
        tab[rows, cols + r] = 0.0

    status = 2
    for _ in range(max_iter):
        enter = -1
        for c in range(cols + rows):
            if tab[rows, c] < -tol:
                enter = c
                break
        if enter < 0:
            status = 0
            break
        leave = -1
        best = np.inf
        for r in range(rows):
            coef = tab[r, enter]
            if coef > tol:
                ratio = tab[r, width - 1] / coef
                if ratio < best - tol or (abs(ratio - best) <= tol and leave >= 0 and basis[r] < basis[leave]):
                    best = ratio
                    leave = r
        if leave < 0:
            # Unbounded direction cannot occur for a bounded phase-1 objective.
            status = 2
            break
        piv = tab[leave, enter]
        for c in range(width):
            tab[leave, c] /= piv
        for r in range(rows + 1):
            if r != leave:
                f = tab[r, enter]
                if f != 0.0:
                    for c in range(width):
                        tab[r, c] -= f * tab[leave, c]
        basis[leave] = enter

    infeas = -tab[rows, width - 1]
    x = np.zeros(cols)
    for r in range(rows):
        if basis[r] < cols:
            x[basis[r]] = tab[r, width - 1]
    if status == 0 and infeas > tol * max(1.0, rows):
        status = 1
    return status, x, infeas
