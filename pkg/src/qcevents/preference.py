"""Preferred projective decompositions and the bubble-preferred set.

For a split ``U : A (x) B -> C (x) D`` the decomposition of ``A`` preferred by
``D`` spans ``centre(Alg_A cap comm(Alg_D))`` where ``Alg_A = {M (x) I_B}``
and ``Alg_D = {U^dagger (I_C (x) N) U}``. An operator ``M (x) I_B`` commutes
with all of ``Alg_D`` exactly when ``U (M (x) I_B) U^dagger`` lies in
``L(C) (x) I_D``, which is a linear condition on the ``d_A**2`` entries of
``M``; :func:`preferred_decomposition` solves it directly.
"""
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from qcevents.algebra import (
    AlgebraBasis,
    canonical_order,
    center,
    central_decomposition,
    commutant,
    intersect,
    span,
)
from qcevents.circuit import (
    IN,
    OUT,
    Placement,
    cut_bubble,
    cut_circuit,
    in_label,
    normalize_bubble,
    out_label,
    placement_key,
    require_valid,
    subcircuit_unitary,
)
from qcevents.errors import NumericDefect
from qcevents.influence import ChannelSplit, PlacedDecomp, influence_graph, INFLUENCE_TOL
from qcevents.tensor import DEFAULT_TOL, as_matrix, dagger, matrix_to_json, nullspace, partial_trace

STRIP_TOL = 1e-7


def kernel(a, tol=DEFAULT_TOL, scale=1.0):
    """Nullspace of a tall constraint stack.

    The stack is first compressed to its square ``R`` factor, which has the
    same singular values, so the rank threshold scales with the number of
    unknowns rather than the number of constraints. ``scale`` floors the
    largest singular value, so a stack of rounding noise reads as zero.
    """
    a = np.asarray(a, dtype=np.complex128)
    if a.shape[0] > a.shape[1]:
        a = scipy.linalg.qr(a, mode="r")[0][: a.shape[1]]
    return nullspace(a, tol, scale)


def _commuting_subalgebra(u, d_a, d_b, d_c, d_d, tol):
    """Operators ``M`` on ``A`` with ``U (M (x) I_B) U^dagger`` in ``L(C) (x) I_D``."""
    dim = d_a * d_b
    cols = u.reshape(dim, d_a, d_b).transpose(1, 0, 2)
    # x[a, b] = U (|a><b| (x) I_B) U^dagger
    x = np.matmul(cols[:, None], np.conj(cols[None, :]).transpose(0, 1, 3, 2))
    t = x.reshape(d_a * d_a, d_c, d_d, d_c, d_d)
    red = np.trace(t, axis1=2, axis2=4) / d_d
    t = t.copy()
    for k in range(d_d):
        t[:, :, k, :, k] -= red
    ns = kernel(t.reshape(d_a * d_a, -1).T, tol)
    return [ns[:, k].reshape(d_a, d_a) for k in range(ns.shape[1])]


def _check_split(ch):
    if not isinstance(ch, ChannelSplit):
        raise TypeError("expected a ChannelSplit")
    return ch


def preferred_decomposition(ch, tol=DEFAULT_TOL, seed=0):
    """Finest decomposition of input ``A`` with no interference influence on ``D``.

    Args:
        ch: split ``A (x) B -> C (x) D``.
        tol: rank tolerance for the linear solve.
        seed: seed for the generic element used to split the centre.

    Returns:
        list of projectors on ``A`` in canonical order.
    """
    _check_split(ch)
    d_a, d_b = ch.in_dims
    d_c, d_d = ch.out_dims
    alg = _commuting_subalgebra(ch.unitary, d_a, d_b, d_c, d_d, tol)
    if not alg:
        raise NumericDefect("commuting subalgebra lost the identity")
    cent = center(span(alg, tol), tol)
    for attempt in range(4):
        projs = central_decomposition(cent, tol, seed + attempt)
        if all(np.max(np.abs(p @ p - p)) <= STRIP_TOL for p in projs):
            return canonical_order(projs)
    raise NumericDefect("preferred decomposition did not yield projectors")


def strip_identity(p, d_a, d_b, tol=STRIP_TOL):
    """Write ``p = q (x) I_B`` and return ``q``; raise when it does not factor."""
    p = as_matrix(p)
    q = partial_trace(p, (d_a, d_b), [0]) / d_b
    if float(np.max(np.abs(p - np.kron(q, np.eye(d_b))))) > tol:
        raise NumericDefect("projector does not factor as Q (x) I_B")
    return q


def preferred_decomposition_generic(ch, tol=DEFAULT_TOL, seed=0):
    """Same result built from the full algebras on ``A (x) B``.

    Forms ``Alg_A`` and ``Alg_D`` explicitly, intersects ``Alg_A`` with the
    commutant of ``Alg_D``, takes the centre, splits it into minimal
    projectors and strips the ``I_B`` factor. Quadratically more expensive
    than :func:`preferred_decomposition`; kept as an independent route.
    """
    _check_split(ch)
    d_a, d_b = ch.in_dims
    d_c, d_d = ch.out_dims
    units_a = []
    for i in range(d_a):
        for j in range(d_a):
            e = np.zeros((d_a, d_a), dtype=np.complex128)
            e[i, j] = 1.0
            units_a.append(ch.input_op(e, 0))
    units_d = []
    for i in range(d_d):
        for j in range(d_d):
            e = np.zeros((d_d, d_d), dtype=np.complex128)
            e[i, j] = 1.0
            units_d.append(ch.output_op(e, 1))
    alg_a = span(units_a, tol)
    alg_d = span(units_d, tol)
    inter = intersect(alg_a, commutant(alg_d, tol), tol)
    cent = center(inter, tol)
    last = None
    for attempt in range(4):
        projs = central_decomposition(cent, tol, seed + attempt)
        try:
            return canonical_order([strip_identity(p, d_a, d_b) for p in projs])
        except NumericDefect as exc:
            last = exc
    raise last


# ---------------------------------------------------------------------------
# Bubbles


def regroup(u, out_dims, in_dims, out_first, in_first):
    """Reorder the factors of ``u`` and merge them into a two-by-two split.

    Args:
        u: matrix on the listed factors.
        out_dims, in_dims: factor dimensions of ``u``.
        out_first: output factor indices forming ``C``; the rest form ``D``.
        in_first: input factor indices forming ``A``; the rest form ``B``.

    Returns:
        :class:`ChannelSplit` with factors ``(A, B) -> (C, D)``; the remaining
        factors keep their relative order.
    """
    nout, nin = len(out_dims), len(in_dims)
    out_rest = [k for k in range(nout) if k not in out_first]
    in_rest = [k for k in range(nin) if k not in in_first]
    out_order = list(out_first) + out_rest
    in_order = list(in_first) + in_rest
    t = np.asarray(u).reshape(list(out_dims) + list(in_dims))
    t = t.transpose(out_order + [nout + k for k in in_order])
    dim = t.size
    side = int(round(np.sqrt(dim)))

    def prod(idx, dims):
        return int(np.prod([dims[k] for k in idx], dtype=np.int64))

    m = t.reshape(side, side)
    return ChannelSplit(
        m,
        (prod(in_first, in_dims), prod(in_rest, in_dims)),
        (prod(out_first, out_dims), prod(out_rest, out_dims)),
    )


@dataclass(eq=False)
class PreferredSet:
    """The ``2n`` decompositions of a bubble, IN and OUT per wire, in temporal order."""

    bubble: tuple
    entries: list

    def entry(self, wire, side):
        for e in self.entries:
            if e.at.wire == wire and e.at.side == side:
                return e
        raise KeyError((wire, side))

    def to_dict(self):
        return {
            "bubble": list(self.bubble),
            "entries": [
                {
                    "wire": e.at.wire,
                    "side": e.at.side,
                    "events": list(range(e.size)),
                    "projectors": [matrix_to_json(p) for p in e.decomp],
                }
                for e in self.entries
            ],
        }


def out_split(ch, k, targets=None):
    """Split of the cut channel used for the OUT decomposition of bubble wire ``k``.

    ``A`` is input ``A_k^out``; ``D`` gathers the outputs ``A_m^in`` for ``m``
    in ``targets`` (all bubble wires by default); ``C`` is everything else.
    """
    n = ch.n
    targets = list(range(n)) if targets is None else list(targets)
    out_c = [m for m in range(len(ch.output_dims)) if m not in targets]
    return regroup(ch.unitary, ch.output_dims, ch.input_dims, out_c, [k])


def in_split(ch, k, targets=None):
    """Split of the reversed cut channel used for the IN decomposition of wire ``k``."""
    n = ch.n
    targets = list(range(n)) if targets is None else list(targets)
    u = dagger(ch.unitary)
    in_c = [m for m in range(len(ch.input_dims)) if m not in targets]
    return regroup(u, ch.input_dims, ch.output_dims, in_c, [k])


def _cone_gates(cc, start, forward):
    """Gate ids reachable from wire ``start`` (forward) or reaching it (backward)."""
    gates = set()
    stack = [start]
    while stack:
        w = stack.pop()
        gid = cc.sink[w] if forward else cc.source[w]
        if gid is None or gid in gates:
            continue
        gates.add(gid)
        g = cc.gate_map[gid]
        stack.extend(g.outputs if forward else g.inputs)
    return gates


def _cone_boundary(cc, gates):
    produced = {w for gid in gates for w in cc.gate_map[gid].outputs}
    consumed = {w for gid in gates for w in cc.gate_map[gid].inputs}
    ins = [w for w in cc.wire_map if w in consumed and w not in produced]
    outs = [w for w in cc.wire_map if w in produced and w not in consumed]
    return ins, outs


def cone_out_split(cc, wire, targets):
    """Split for the OUT decomposition of ``wire`` restricted to its future cone.

    Gates outside the cone act on ``B`` before it or on ``C`` after it, and
    neither changes which operators on ``A`` commute with ``L(D)``. Returns
    ``None`` when no target output lies in the cone.
    """
    start = out_label(wire)
    gates = _cone_gates(cc, start, True)
    ins, outs = _cone_boundary(cc, gates)
    d_side = [w for w in outs if w in targets]
    if not d_side:
        return None
    c_side = [w for w in outs if w not in targets]
    b_side = [w for w in ins if w != start]
    u = subcircuit_unitary(cc, [start] + b_side, c_side + d_side, gates)
    return regroup(
        u,
        [cc.dim(w) for w in c_side + d_side],
        [cc.dim(w) for w in [start] + b_side],
        list(range(len(c_side))),
        [0],
    )


def cone_in_split(cc, wire, targets):
    """Reversed split for the IN decomposition of ``wire`` restricted to its past cone."""
    start = in_label(wire)
    gates = _cone_gates(cc, start, False)
    ins, outs = _cone_boundary(cc, gates)
    d_side = [w for w in ins if w in targets]
    if not d_side:
        return None
    c_side = [w for w in ins if w not in targets]
    b_side = [w for w in outs if w != start]
    u = subcircuit_unitary(cc, c_side + d_side, [start] + b_side, gates)
    return regroup(
        dagger(u),
        [cc.dim(w) for w in c_side + d_side],
        [cc.dim(w) for w in [start] + b_side],
        list(range(len(c_side))),
        [0],
    )


def preferred_set(c, bubble, tol=DEFAULT_TOL, seed=0, method="cone"):
    """The bubble-preferred set of decompositions.

    The bubble is cut; for each wire the OUT decomposition is the one on
    ``A_k^out`` preferred by all ``A_m^in`` under the cut unitary, and the IN
    decomposition is the one on ``A_k^in`` preferred by all ``A_m^out`` under
    its inverse.

    Args:
        method: ``"cone"`` restricts each split to the light cone of the cut
            half; ``"full"`` builds the whole cut channel once. Both give the
            same decompositions; ``"full"`` is quadratically more expensive in
            the bubble dimension.
    """
    require_valid(c)
    bubble = normalize_bubble(c, bubble)
    if not bubble:
        return PreferredSet((), [])
    entries = []
    if method == "full":
        ch = cut_bubble(c, bubble)
        splits = [(in_split(ch, k), out_split(ch, k)) for k in range(len(bubble))]
    elif method == "cone":
        cc = cut_circuit(c, bubble)[0]
        in_targets = {in_label(w) for w in bubble}
        out_targets = {out_label(w) for w in bubble}
        splits = [(cone_in_split(cc, w, out_targets), cone_out_split(cc, w, in_targets)) for w in bubble]
    else:
        raise ValueError(f"unknown method {method!r}")
    for w, (s_in, s_out) in zip(bubble, splits):
        eye = (np.eye(c.dim(w), dtype=np.complex128),)
        pin = eye if s_in is None else tuple(preferred_decomposition(s_in, tol, seed))
        pout = eye if s_out is None else tuple(preferred_decomposition(s_out, tol, seed))
        entries.append(PlacedDecomp(pin, Placement(w, IN), f"{w}:in"))
        entries.append(PlacedDecomp(pout, Placement(w, OUT), f"{w}:out"))
    entries.sort(key=lambda e: placement_key(c, e.at))
    return PreferredSet(bubble, entries)


@dataclass
class PatternReport:
    violations: list
    edges: list

    @property
    def ok(self):
        return not self.violations

    def to_dict(self):
        return {"ok": self.ok, "violations": self.violations, "edges": self.edges}


def check_influence_pattern(c, placed, tol=INFLUENCE_TOL):
    """List interference influences other than IN-to-later-OUT.

    Accepts a :class:`PreferredSet` or any list of placed decompositions.
    Only edges from an IN decomposition to an OUT decomposition at the same
    or a later position in temporal order are allowed.
    """
    entries = placed.entries if isinstance(placed, PreferredSet) else list(placed)
    if not entries:
        return PatternReport([], [])
    g = influence_graph(c, entries, tol)
    violations = []
    edges = []
    for (a, b), e in sorted(g.edges.items()):
        if not e.influence:
            continue
        pa, pb = g.nodes[a].at, g.nodes[b].at
        rec = {
            "from": {"wire": pa.wire, "side": pa.side},
            "to": {"wire": pb.wire, "side": pb.side},
            "witness_norm": e.norm,
        }
        edges.append(rec)
        if not (pa.side == IN and pb.side == OUT):
            violations.append(rec)
    return PatternReport(violations, edges)


__all__ = [
    "AlgebraBasis",
    "PreferredSet",
    "PatternReport",
    "preferred_decomposition",
    "preferred_decomposition_generic",
    "strip_identity",
    "regroup",
    "out_split",
    "in_split",
    "cone_in_split",
    "cone_out_split",
    "preferred_set",
    "check_influence_pattern",
    "kernel",
]
