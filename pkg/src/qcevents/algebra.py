"""Finite-dimensional *-algebras of matrices.

Algebras are stored as Hilbert-Schmidt orthonormal bases. Subspace
comparisons go through principal angles so they do not depend on the basis
chosen.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from qcevents.errors import InputError, NumericDefect
from qcevents.tensor import (
    DEFAULT_TOL,
    GROUP_TOL,
    as_matrix,
    dagger,
    herm_eig_projectors,
    nullspace,
    orthonormalize,
    partial_trace,
)

SUBSPACE_TOL = 1e-7
DECOMP_RETRIES = 8


@dataclass(frozen=True, eq=False)
class AlgebraBasis:
    """Orthonormal basis of an operator subspace closed under product and adjoint."""

    dim: int
    elements: tuple
    contains_identity: bool = True

    @property
    def size(self):
        return len(self.elements)

    def vectors(self):
        """Basis as columns of a ``(dim**2, size)`` matrix."""
        if not self.elements:
            return np.zeros((self.dim * self.dim, 0), dtype=np.complex128)
        return np.stack([e.reshape(-1) for e in self.elements], axis=1)

    def project(self, x):
        """Orthogonal projection of ``x`` onto the span."""
        x = as_matrix(x)
        out = np.zeros_like(x)
        for e in self.elements:
            out += np.vdot(e, x) * e
        return out

    def contains(self, x, tol=SUBSPACE_TOL):
        x = as_matrix(x)
        scale = max(1.0, float(np.linalg.norm(x)))
        return float(np.linalg.norm(x - self.project(x))) <= tol * scale


def _from_vectors(dim, vecs, unital):
    elems = tuple(vecs[:, k].reshape(dim, dim).copy() for k in range(vecs.shape[1]))
    return AlgebraBasis(dim, elems, unital)


def _has_identity(dim, vecs, tol=SUBSPACE_TOL):
    if vecs.shape[1] == 0:
        return False
    ident = np.eye(dim, dtype=np.complex128).reshape(-1) / np.sqrt(dim)
    resid = ident - vecs @ (dagger(vecs) @ ident)
    return float(np.linalg.norm(resid)) <= tol


def span(ops, tol=DEFAULT_TOL):
    """Orthonormal basis of the span of ``ops`` wrapped as an :class:`AlgebraBasis`.

    The caller is responsible for closure; use :func:`generate_algebra` when
    the span may not be an algebra.
    """
    ops = [as_matrix(o) for o in ops]
    if not ops:
        raise InputError("span needs at least one operator to fix the dimension")
    dim = ops[0].shape[0]
    basis = orthonormalize(ops, tol)
    vecs = np.stack([b.reshape(-1) for b in basis], axis=1) if basis else np.zeros((dim * dim, 0), complex)
    return _from_vectors(dim, vecs, _has_identity(dim, vecs))


def full_algebra(dim):
    """All ``dim x dim`` matrices, basis of matrix units."""
    elems = []
    for i in range(dim):
        for j in range(dim):
            e = np.zeros((dim, dim), dtype=np.complex128)
            e[i, j] = 1.0
            elems.append(e)
    return AlgebraBasis(dim, tuple(elems), True)


def scalar_algebra(dim):
    return AlgebraBasis(dim, (np.eye(dim, dtype=np.complex128) / np.sqrt(dim),), True)


def _extend(vecs, cands, tol):
    """Append to orthonormal ``vecs`` the part of ``cands`` outside their span."""
    if cands.shape[1] == 0:
        return vecs
    resid = cands - vecs @ (dagger(vecs) @ cands) if vecs.shape[1] else cands.copy()
    # A second pass restores orthogonality lost to cancellation.
    if vecs.shape[1]:
        resid = resid - vecs @ (dagger(vecs) @ resid)
    norms = np.linalg.norm(cands, axis=0)
    scale = float(np.max(norms)) if norms.size else 0.0
    if scale == 0.0:
        return vecs
    u, s, _ = scipy.linalg.svd(resid, full_matrices=False, lapack_driver="gesdd")
    keep = s > tol * scale * max(resid.shape)
    if not np.any(keep):
        return vecs
    return np.concatenate([vecs, u[:, keep]], axis=1)


def generate_algebra(generators, tol=DEFAULT_TOL):
    """Smallest unital *-algebra containing ``generators``.

    Starting from the identity, the span is repeatedly multiplied on the left
    by every generator and generator adjoint until its dimension stops
    growing. The resulting span of all words is closed under product and
    adjoint.
    """
    gens = [as_matrix(g) for g in generators]
    if not gens:
        raise InputError("generate_algebra needs at least one generator")
    dim = gens[0].shape[0]
    for g in gens:
        if g.shape != (dim, dim):
            raise InputError("generators must share one square shape")
    letters = []
    for g in gens:
        letters.append(g)
        if not np.allclose(g, dagger(g), atol=tol):
            letters.append(dagger(g))
    vecs = np.eye(dim, dtype=np.complex128).reshape(-1, 1) / np.sqrt(dim)
    frontier = vecs
    cap = dim * dim
    for _ in range(cap + 1):
        cands = []
        for k in range(frontier.shape[1]):
            x = frontier[:, k].reshape(dim, dim)
            for g in letters:
                cands.append((g @ x).reshape(-1))
        before = vecs.shape[1]
        vecs = _extend(vecs, np.stack(cands, axis=1), tol)
        if vecs.shape[1] == before:
            return _from_vectors(dim, vecs, True)
        frontier = vecs[:, before:]
    raise NumericDefect("algebra closure did not stabilise within dim**2 rounds")


def commutation_map(elements, dim):
    """Stacked linear map ``vec(X) -> [vec(G X - X G)]_G`` (row-major vec)."""
    eye = np.eye(dim, dtype=np.complex128)
    blocks = [np.kron(g, eye) - np.kron(eye, g.T) for g in elements]
    if not blocks:
        return np.zeros((0, dim * dim), dtype=np.complex128)
    return np.concatenate(blocks, axis=0)


def commutant(a, tol=DEFAULT_TOL):
    """All operators commuting with every element of ``a``."""
    dim = a.dim
    if a.size == 0:
        return full_algebra(dim)
    # Basis elements have unit norm, so a genuine constraint has singular
    # value of order one; the floor keeps rounding noise from counting.
    ns = nullspace(commutation_map(a.elements, dim), tol, scale=1.0)
    return _from_vectors(dim, ns, _has_identity(dim, ns))


def intersect(a, b, tol=DEFAULT_TOL):
    """Subspace intersection of two operator spaces on the same ambient space."""
    if a.dim != b.dim:
        raise InputError("intersect needs equal ambient dimensions")
    dim = a.dim
    va = a.vectors()
    vb = b.vectors()
    if va.shape[1] == 0 or vb.shape[1] == 0:
        return AlgebraBasis(dim, (), False)
    stacked = np.concatenate([va, -vb], axis=1)
    ns = nullspace(stacked, tol)
    if ns.shape[1] == 0:
        return AlgebraBasis(dim, (), False)
    ka = va.shape[1]
    # Average both representations of each common vector.
    common = 0.5 * (va @ ns[:ka] + vb @ ns[ka:])
    u, s, _ = scipy.linalg.svd(common, full_matrices=False, lapack_driver="gesdd")
    rank = int(np.sum(s > tol * max(1.0, float(s[0])) * max(common.shape)))
    vecs = u[:, :rank]
    return _from_vectors(dim, vecs, _has_identity(dim, vecs))


def center(a, tol=DEFAULT_TOL):
    """Elements of ``a`` commuting with all of ``a``."""
    return intersect(a, commutant(a, tol), tol)


def is_commutative(a, tol=SUBSPACE_TOL):
    for i, x in enumerate(a.elements):
        for y in a.elements[i + 1:]:
            if float(np.max(np.abs(x @ y - y @ x))) > tol:
                return False
    return True


def subspace_angles(a, b):
    """Sines of the principal angles between two equal-size spans."""
    va = a.vectors()
    vb = b.vectors()
    s = scipy.linalg.svdvals(dagger(va) @ vb) if va.shape[1] and vb.shape[1] else np.zeros(0)
    s = np.clip(s, 0.0, 1.0)
    return np.sqrt(np.maximum(0.0, 1.0 - s * s))


def subspace_equal(a, b, tol=SUBSPACE_TOL):
    """Equality of spans: same dimension and every principal angle below ``tol``."""
    if a.dim != b.dim or a.size != b.size:
        return False
    if a.size == 0:
        return True
    return bool(np.all(subspace_angles(a, b) <= tol))


def _first_nonzero(p, tol):
    flat = p.reshape(-1)
    idx = np.flatnonzero(np.abs(flat) > tol)
    return (int(idx[0]), flat[idx[0]]) if idx.size else (flat.size, 0.0)


def canonical_order(projectors, tol=1e-8):
    """Sort projectors by descending rank, then descending real part of the
    first nonzero row-major entry; remaining ties fall back to the position
    of that entry and then to the rounded entries themselves."""

    def key(p):
        rank = int(round(float(np.real(np.trace(p)))))
        idx, val = _first_nonzero(p, tol)
        flat = p.reshape(-1)
        digits = 8
        return (
            -rank,
            -round(float(np.real(val)), digits),
            idx,
            tuple(-round(float(x), digits) for x in flat.real),
            tuple(-round(float(x), digits) for x in flat.imag),
        )

    return sorted((as_matrix(p) for p in projectors), key=key)


def central_decomposition(a, tol=DEFAULT_TOL, seed=0, group_tol=GROUP_TOL):
    """Minimal projectors spanning a commutative algebra.

    A seeded random Hermitian element of the algebra is diagonalised; its
    grouped eigenprojectors are the minimal projectors once their count
    equals the algebra dimension. Up to eight fresh elements are tried.

    Returns:
        list of projectors in canonical order, summing to the identity.

    Raises:
        InputError: if ``a`` is not commutative.
        NumericDefect: if no attempt separates all minimal projectors.
    """
    if not is_commutative(a):
        raise InputError("central_decomposition needs a commutative algebra")
    dim = a.dim
    elems = list(a.elements)
    if not a.contains_identity:
        a = span(elems + [np.eye(dim)], tol)
        elems = list(a.elements)
    target = len(elems)
    rng = np.random.default_rng(seed)
    for _ in range(DECOMP_RETRIES):
        h = _generic_hermitian(elems, rng, dim)
        h /= max(1.0, float(np.linalg.norm(h, 2)))
        groups = herm_eig_projectors(0.5 * (h + dagger(h)), group_tol, 1e-6)
        if len(groups) != target:
            continue
        projs = [p for _, p in groups]
        if all(a.contains(p) for p in projs):
            return canonical_order(projs)
    raise NumericDefect("central_decomposition failed to separate the minimal projectors")


@dataclass(frozen=True, eq=False)
class Block:
    left_dim: int
    right_dim: int
    isometry: np.ndarray


@dataclass(frozen=True, eq=False)
class BlockStructure:
    blocks: tuple
    dim: int


def _generic_hermitian(elems, rng, dim):
    h = np.zeros((dim, dim), dtype=np.complex128)
    for e in elems:
        h += rng.standard_normal() * (e + dagger(e)) + rng.standard_normal() * 1j * (e - dagger(e))
    return 0.5 * (h + dagger(h))


def _factor_block(elems, rng, tol, group_tol):
    """Matrix-unit factorisation of a factor algebra ``M_l (x) I_r``."""
    m = elems[0].shape[0]
    size = len(elems)
    left = int(round(np.sqrt(size)))
    if left * left != size or m % left:
        raise NumericDefect("reduced block is not a full matrix factor")
    right = m // left
    for _ in range(DECOMP_RETRIES):
        h = _generic_hermitian(elems, rng, m)
        h /= max(1.0, float(np.linalg.norm(h, 2)))
        groups = herm_eig_projectors(h, group_tol, 1e-6)
        if len(groups) != left:
            continue
        projs = [p for _, p in groups]
        w, v = scipy.linalg.eigh(projs[0])
        f = v[:, w > 0.5]
        if f.shape[1] != right:
            continue
        x = sum(rng.standard_normal() * e + 1j * rng.standard_normal() * e for e in elems)
        cols = []
        ok = True
        for i, e_i in enumerate(projs):
            if i == 0:
                s_i = projs[0]
            else:
                s_i = projs[0] @ x @ e_i
                nrm = np.sqrt(max(float(np.real(np.trace(s_i @ dagger(s_i)))) / right, 0.0))
                if nrm < 1e-6:
                    ok = False
                    break
                s_i = s_i / nrm
            cols.append(dagger(s_i) @ f)
        if not ok:
            continue
        iso = np.stack(cols, axis=0)  # (left, m, right)
        iso = iso.transpose(1, 0, 2).reshape(m, left * right)
        if np.allclose(dagger(iso) @ iso, np.eye(left * right), atol=1e-7):
            return left, right, iso
    raise NumericDefect("block factorisation failed")


def block_structure(a, tol=DEFAULT_TOL, seed=0, group_tol=GROUP_TOL):
    """Decompose a unital *-algebra as a direct sum of ``M_l (x) I_r`` blocks.

    Central projectors fix the blocks. Inside each block a generic Hermitian
    element yields minimal projectors, and compressions of a generic element
    between them give matrix units that carry one fixed vector basis of the
    first minimal projector across the block.

    Returns:
        :class:`BlockStructure` whose block isometries ``J`` satisfy
        ``J^dagger X J = M (x) I_r`` for every ``X`` in ``a``.
    """
    if not a.contains_identity:
        raise InputError("block_structure needs a unital algebra")
    rng = np.random.default_rng(seed)
    cent = center(a, tol)
    projs = central_decomposition(cent, tol, seed, group_tol)
    blocks = []
    for q in projs:
        w, v = scipy.linalg.eigh(q)
        basis = v[:, w > 0.5]
        reduced = [dagger(basis) @ e @ basis for e in a.elements]
        red = orthonormalize(reduced, tol)
        left, right, iso = _factor_block(red, rng, tol, group_tol)
        blocks.append(Block(left, right, basis @ iso))
    return BlockStructure(tuple(blocks), a.dim)


def block_residual(structure, x):
    """How far ``x`` is from the block form: max over blocks of the distance
    of ``J^dagger x J`` to ``M (x) I_r`` plus the off-block leakage."""
    x = as_matrix(x)
    worst = 0.0
    recon = np.zeros_like(x)
    for b in structure.blocks:
        y = dagger(b.isometry) @ x @ b.isometry
        m = partial_trace(y, (b.left_dim, b.right_dim), [0]) / b.right_dim
        worst = max(worst, float(np.max(np.abs(y - np.kron(m, np.eye(b.right_dim))))))
        recon += b.isometry @ y @ dagger(b.isometry)
    worst = max(worst, float(np.max(np.abs(x - recon))))
    return worst


def projector_set_distance(ps, qs):
    """Greedy max-overlap pairing of two projector sets; max-norm of the
    worst paired difference, or ``inf`` when sizes differ."""
    ps = [as_matrix(p) for p in ps]
    qs = [as_matrix(q) for q in qs]
    if len(ps) != len(qs):
        return float("inf")
    if not ps:
        return 0.0
    overlap = np.array([[abs(np.vdot(p, q)) for q in qs] for p in ps])
    used_p, used_q = set(), set()
    worst = 0.0
    order = np.dstack(np.unravel_index(np.argsort(-overlap, axis=None), overlap.shape))[0]
    for i, j in order:
        if i in used_p or j in used_q:
            continue
        used_p.add(i)
        used_q.add(j)
        worst = max(worst, float(np.max(np.abs(ps[i] - qs[j]))))
    return worst


def is_proj_decomp(ps, tol=DEFAULT_TOL):
    """Projectors, pairwise orthogonal, summing to the identity."""
    ps = [as_matrix(p) for p in ps]
    if not ps:
        return False
    dim = ps[0].shape[0]
    for p in ps:
        if p.shape != (dim, dim):
            return False
        if float(np.max(np.abs(p @ p - p))) > tol or float(np.max(np.abs(p - dagger(p)))) > tol:
            return False
    for i, p in enumerate(ps):
        for q in ps[i + 1:]:
            if float(np.max(np.abs(p @ q))) > tol:
                return False
    return float(np.max(np.abs(sum(ps) - np.eye(dim)))) <= tol


def basis_decomp(vectors):
    """Rank-1 projectors onto the columns of a unitary."""
    v = np.asarray(vectors, dtype=np.complex128)
    return [np.outer(v[:, k], np.conj(v[:, k])) for k in range(v.shape[1])]


def computational_decomp(dim):
    return basis_decomp(np.eye(dim))


def trivial_decomp(dim):
    return [np.eye(dim, dtype=np.complex128)]
