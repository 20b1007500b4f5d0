"""Dense complex linear algebra shared by the rest of the package.

Tensor factors are ordered leftmost-most-significant: for dims ``(d0, d1)``
the basis index of ``|i>|j>`` is ``i * d1 + j``.
"""
import os

import numpy as np
import scipy.linalg

from qcevents.errors import InputError, ResourceLimit

DEFAULT_TOL = 1e-9
GROUP_TOL = 1e-7
DEFAULT_MAX_DIM = 4096


def max_dim():
    """Dimension cap, read from ``QCE_MAX_DIM`` on every call."""
    raw = os.environ.get("QCE_MAX_DIM")
    if raw is None:
        return DEFAULT_MAX_DIM
    try:
        value = int(raw)
    except ValueError as exc:
        raise InputError(f"QCE_MAX_DIM must be an integer, got {raw!r}") from exc
    if value < 1:
        raise InputError("QCE_MAX_DIM must be positive")
    return value


def check_dim(dim):
    """Raise :class:`ResourceLimit` when ``dim`` exceeds the cap."""
    cap = max_dim()
    if dim > cap:
        raise ResourceLimit(f"dimension {dim} exceeds cap {cap} (set QCE_MAX_DIM to raise it)")
    return dim


def as_matrix(m):
    """Coerce to a 2-D complex128 array."""
    arr = np.asarray(m, dtype=np.complex128)
    if arr.ndim != 2:
        raise InputError(f"expected a matrix, got shape {arr.shape}")
    return arr


def dagger(m):
    return np.conj(np.swapaxes(m, -1, -2))


def kron(a, b):
    """Kronecker product with the dimension cap enforced.

    >>> kron(np.eye(2), np.eye(2)).shape
    (4, 4)
    """
    a = as_matrix(a)
    b = as_matrix(b)
    check_dim(max(a.shape[0] * b.shape[0], a.shape[1] * b.shape[1]))
    return np.kron(a, b)


def kron_all(mats):
    """Left-to-right Kronecker product of a sequence; empty gives ``[[1]]``."""
    out = np.ones((1, 1), dtype=np.complex128)
    for m in mats:
        out = kron(out, m)
    return out


def embed(op, dims, index):
    """Place ``op`` on factor ``index`` of ``dims`` with identities elsewhere."""
    dims = [int(d) for d in dims]
    op = as_matrix(op)
    if op.shape != (dims[index], dims[index]):
        raise InputError(f"operator shape {op.shape} does not match factor dim {dims[index]}")
    left = int(np.prod(dims[:index], dtype=np.int64))
    right = int(np.prod(dims[index + 1:], dtype=np.int64))
    return np.kron(np.kron(np.eye(left), op), np.eye(right))


def partial_trace(m, dims, keep):
    """Trace out every factor of ``dims`` not listed in ``keep``.

    The kept factors stay in their original relative order.

    Args:
        m: square matrix on the tensor product of ``dims``.
        dims: factor dimensions.
        keep: indices of factors to keep.

    Returns:
        The reduced operator.
    """
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    total = int(np.prod(dims, dtype=np.int64)) if dims else 1
    if m.shape != (total, total):
        raise InputError(f"matrix shape {m.shape} inconsistent with dims {dims}")
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= len(dims) for k in keep):
        raise InputError(f"keep indices {keep} out of range for {len(dims)} factors")
    n = len(dims)
    t = m.reshape(dims + dims)
    traced = [k for k in range(n) if k not in keep]
    # Contract each traced pair, highest index first so axis numbers stay valid.
    for k in sorted(traced, reverse=True):
        cur = t.ndim // 2
        t = np.trace(t, axis1=k, axis2=k + cur)
    kd = int(np.prod([dims[k] for k in keep], dtype=np.int64)) if keep else 1
    return t.reshape(kd, kd)


def permute_factors(m, dims, order):
    """Reorder tensor factors of a square operator.

    ``order[k]`` names the old factor that becomes new factor ``k``.
    """
    m = as_matrix(m)
    dims = [int(d) for d in dims]
    n = len(dims)
    t = m.reshape(dims + dims)
    axes = list(order) + [n + o for o in order]
    new_dims = [dims[o] for o in order]
    d = int(np.prod(new_dims, dtype=np.int64)) if new_dims else 1
    return t.transpose(axes).reshape(d, d)


def permutation_matrix(dims, order):
    """Unitary mapping factors ``dims`` to the reordered factors ``order``."""
    dims = [int(d) for d in dims]
    total = int(np.prod(dims, dtype=np.int64)) if dims else 1
    eye = np.eye(total, dtype=np.complex128)
    t = eye.reshape(dims + [total])
    t = t.transpose(list(order) + [len(dims)])
    return t.reshape(total, total)


def hs_inner(x, y):
    """Hilbert-Schmidt inner product ``Tr(x^dagger y)``."""
    return complex(np.vdot(x, y))


def rank_threshold(svals, shape, tol):
    if svals.size == 0:
        return 0.0
    return tol * float(svals[0]) * max(shape)


def nullspace(a, tol=DEFAULT_TOL, scale=0.0):
    """Orthonormal basis of the numerical kernel, one vector per column.

    Singular values at or below ``tol * s_max * max(rows, cols)`` count as
    zero. A zero matrix has the full space as kernel. A positive ``scale``
    floors ``s_max`` so that a matrix of pure rounding noise counts as zero.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.ndim != 2:
        raise InputError("nullspace expects a matrix")
    cols = a.shape[1]
    if a.size == 0 or not np.any(a):
        return np.eye(cols, dtype=np.complex128)
    _, s, vh = scipy.linalg.svd(a, full_matrices=True, lapack_driver="gesdd")
    thresh = tol * max(float(s[0]), scale) * max(a.shape)
    rank = int(np.sum(s > thresh))
    return np.conj(vh[rank:]).T.copy()


def orthonormalize(ops, tol=DEFAULT_TOL):
    """Hilbert-Schmidt orthonormal basis of the span of ``ops``.

    Args:
        ops: sequence of same-shape matrices.
        tol: relative rank tolerance.

    Returns:
        list of matrices, orthonormal under ``Tr(x^dagger y)``.
    """
    ops = [as_matrix(o) for o in ops]
    if not ops:
        return []
    shape = ops[0].shape
    for o in ops:
        if o.shape != shape:
            raise InputError("orthonormalize needs operators of equal shape")
    vecs = np.stack([o.reshape(-1) for o in ops], axis=1)
    if not np.any(vecs):
        return []
    u, s, _ = scipy.linalg.svd(vecs, full_matrices=False, lapack_driver="gesdd")
    thresh = rank_threshold(s, vecs.shape, tol)
    rank = int(np.sum(s > thresh))
    return [u[:, k].reshape(shape).copy() for k in range(rank)]


def is_hermitian(h, tol=DEFAULT_TOL):
    h = as_matrix(h)
    return h.shape[0] == h.shape[1] and float(np.max(np.abs(h - dagger(h)), initial=0.0)) <= tol


def is_unitary(u, tol=DEFAULT_TOL):
    u = as_matrix(u)
    if u.shape[0] != u.shape[1]:
        return False
    return float(np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0])), initial=0.0)) <= tol


def is_projector(p, tol=DEFAULT_TOL):
    p = as_matrix(p)
    if p.shape[0] != p.shape[1]:
        return False
    return float(np.max(np.abs(p @ p - p), initial=0.0)) <= tol and is_hermitian(p, tol)


def herm_eig_projectors(h, group_tol=GROUP_TOL, tol=DEFAULT_TOL):
    """Spectral projectors of a Hermitian matrix.

    Eigenvalues closer than ``group_tol`` (chained in sorted order) are
    merged into one eigenspace.

    Returns:
        list of ``(eigenvalue, projector)`` in ascending eigenvalue order.

    Raises:
        InputError: if ``h`` is not Hermitian within ``tol`` (scaled by its norm).
    """
    h = as_matrix(h)
    scale = max(1.0, float(np.max(np.abs(h), initial=0.0)))
    if not is_hermitian(h, tol * scale):
        raise InputError("herm_eig_projectors needs a Hermitian matrix")
    h = 0.5 * (h + dagger(h))
    w, v = scipy.linalg.eigh(h)
    groups = []
    start = 0
    for k in range(1, len(w) + 1):
        if k == len(w) or w[k] - w[k - 1] > group_tol:
            groups.append((start, k))
            start = k
    out = []
    for a, b in groups:
        vec = v[:, a:b]
        out.append((float(np.mean(w[a:b])), vec @ dagger(vec)))
    return out


def haar_random_unitary(dim, seed):
    """Haar-distributed unitary from QR of a complex Ginibre matrix.

    The phases of ``diag(R)`` are moved into ``Q`` so the law is exactly Haar.
    ``seed`` may be an int or a ``numpy.random.Generator``.
    """
    if dim < 1:
        raise InputError("dim must be >= 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    z = (rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))) / np.sqrt(2.0)
    q, r = np.linalg.qr(z)
    diag = np.diag(r)
    phases = diag / np.where(np.abs(diag) > 0, np.abs(diag), 1.0)
    return q * phases[np.newaxis, :]


def random_hermitian(dim, rng):
    z = rng.standard_normal((dim, dim)) + 1j * rng.standard_normal((dim, dim))
    return 0.5 * (z + dagger(z))


def complete_isometry(cols, tol=DEFAULT_TOL):
    """Extend orthonormal columns to a square unitary.

    The given columns are kept in place; the orthogonal complement fills the
    remaining columns in a deterministic order.
    """
    cols = np.asarray(cols, dtype=np.complex128)
    dim, k = cols.shape
    if not np.allclose(dagger(cols) @ cols, np.eye(k), atol=1e-8):
        raise InputError("columns are not orthonormal")
    if k == dim:
        return cols.copy()
    comp = nullspace(dagger(cols), tol)
    if comp.shape[1] != dim - k:
        raise InputError("could not complete isometry")
    return np.concatenate([cols, comp], axis=1)


def matrix_to_json(m):
    """Row-major list of ``[re, im]`` pairs."""
    m = as_matrix(m)
    return [[float(z.real), float(z.imag)] for z in m.reshape(-1)]


def matrix_from_json(data, rows=None, cols=None):
    """Inverse of :func:`matrix_to_json`.

    Without explicit ``rows``/``cols`` the matrix is assumed square.
    """
    try:
        flat = np.array([complex(float(p[0]), float(p[1])) for p in data], dtype=np.complex128)
    except (TypeError, ValueError, IndexError) as exc:
        raise InputError("matrix entries must be [re, im] pairs") from exc
    n = flat.size
    if rows is None and cols is None:
        side = int(round(np.sqrt(n)))
        if side * side != n:
            raise InputError(f"{n} entries do not form a square matrix")
        rows = cols = side
    elif rows is None:
        rows = n // cols
    elif cols is None:
        cols = n // rows
    if rows * cols != n:
        raise InputError(f"{n} entries do not match shape ({rows}, {cols})")
    return flat.reshape(rows, cols)
