"""Quantum and interference influences through unitary channels and circuits.

A :class:`ChannelSplit` views a unitary as a map ``A (x) B -> C (x) D``.
Operators on an input factor are embedded as ``M (x) I``; operators on an
output factor are pulled back to the input side as ``U^dagger (I (x) N) U``.
Influence is non-commutation of such pairs.
"""
from dataclasses import dataclass, field

import numpy as np

from qcevents._accel import commutator_max_abs
from qcevents.circuit import IN, OUT, Placement, embed_on_wires, heisenberg_embed, placement_key, require_valid
from qcevents.errors import InputError
from qcevents.tensor import as_matrix, dagger, is_unitary

INFLUENCE_TOL = 1e-8


@dataclass(frozen=True, eq=False)
class ChannelSplit:
    """Unitary ``A (x) B -> C (x) D`` with its factor dimensions."""

    unitary: np.ndarray
    in_dims: tuple
    out_dims: tuple

    def __post_init__(self):
        u = as_matrix(self.unitary)
        object.__setattr__(self, "unitary", u)
        object.__setattr__(self, "in_dims", tuple(int(d) for d in self.in_dims))
        object.__setattr__(self, "out_dims", tuple(int(d) for d in self.out_dims))
        if len(self.in_dims) != 2 or len(self.out_dims) != 2:
            raise InputError("ChannelSplit needs exactly two input and two output factors")
        if min(self.in_dims + self.out_dims) < 1:
            raise InputError("factor dimensions must be positive")
        dim = self.in_dims[0] * self.in_dims[1]
        if dim != self.out_dims[0] * self.out_dims[1] or u.shape != (dim, dim):
            raise InputError(f"factor dims {self.in_dims} -> {self.out_dims} do not match matrix {u.shape}")

    @property
    def dim(self):
        return self.unitary.shape[0]

    def check_unitary(self, tol=1e-9):
        if not is_unitary(self.unitary, tol * max(1, self.dim)):
            raise InputError("ChannelSplit matrix is not unitary")
        return self

    def input_op(self, m, factor=0):
        """``m`` on input factor ``factor`` tensored with identity."""
        m = as_matrix(m)
        d0, d1 = self.in_dims
        if factor == 0:
            return np.kron(m, np.eye(d1))
        return np.kron(np.eye(d0), m)

    def output_op(self, n, factor=1):
        """Heisenberg pull-back of ``n`` on output factor ``factor``."""
        n = as_matrix(n)
        d0, d1 = self.out_dims
        full = np.kron(np.eye(d0), n) if factor == 1 else np.kron(n, np.eye(d1))
        u = self.unitary
        return dagger(u) @ full @ u

    def reversed(self):
        """The channel ``U^dagger : C (x) D -> A (x) B``."""
        return ChannelSplit(dagger(self.unitary), self.out_dims, self.in_dims)


@dataclass(frozen=True, eq=False)
class PlacedDecomp:
    """A projective decomposition attached to a wire slot of a circuit."""

    decomp: tuple
    at: Placement
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "decomp", tuple(as_matrix(p) for p in self.decomp))
        if not isinstance(self.at, Placement):
            object.__setattr__(self, "at", Placement(*self.at))

    @property
    def size(self):
        return len(self.decomp)


def _unit_basis(d):
    out = np.zeros((d * d, d, d), dtype=np.complex128)
    for k in range(d * d):
        out[k, k // d, k % d] = 1.0
    return out


def _check_factor(idx):
    if idx not in (0, 1):
        raise InputError(f"factor index must be 0 or 1, got {idx!r}")


def max_commutator(left, right):
    """Pairwise commutator max-norms of two operator lists, shape (n, m)."""
    if len(left) == 0 or len(right) == 0:
        return np.zeros((len(left), len(right)))
    lt = np.ascontiguousarray(np.stack([as_matrix(x) for x in left]))
    rt = np.ascontiguousarray(np.stack([as_matrix(x) for x in right]))
    return commutator_max_abs(lt, rt)


def quantum_influence(ch, src=0, dst=1, tol=INFLUENCE_TOL):
    """Whether input factor ``src`` can influence output factor ``dst``.

    Tested by commutation of all matrix units on the source (embedded with
    identity) against all pulled-back matrix units on the destination.
    """
    _check_factor(src)
    _check_factor(dst)
    left = [ch.input_op(m, src) for m in _unit_basis(ch.in_dims[src])]
    right = [ch.output_op(n, dst) for n in _unit_basis(ch.out_dims[dst])]
    return bool(np.max(max_commutator(left, right)) > tol)


@dataclass(frozen=True)
class Witness:
    influence: bool
    norm: float
    pair: tuple


def interference_witness(ch, pa, pd, src=0, dst=1, tol=INFLUENCE_TOL):
    """Largest commutator between embedded ``pa`` and pulled-back ``pd``.

    Returns:
        :class:`Witness` with the boolean verdict, the maximal commutator
        max-norm and the index pair attaining it.
    """
    _check_factor(src)
    _check_factor(dst)
    pa = [as_matrix(p) for p in pa]
    pd = [as_matrix(p) for p in pd]
    if not pa or not pd:
        raise InputError("decompositions must be non-empty")
    for p in pa:
        if p.shape != (ch.in_dims[src],) * 2:
            raise InputError("source decomposition has wrong dimension")
    for p in pd:
        if p.shape != (ch.out_dims[dst],) * 2:
            raise InputError("target decomposition has wrong dimension")
    left = [ch.input_op(p, src) for p in pa]
    right = [ch.output_op(p, dst) for p in pd]
    norms = max_commutator(left, right)
    i, j = np.unravel_index(int(np.argmax(norms)), norms.shape)
    worst = float(norms[i, j])
    return Witness(worst > tol, worst, (int(i), int(j)))


def interference_influence(ch, pa, pd, tol=INFLUENCE_TOL, src=0, dst=1):
    """True iff some projector of ``pa`` fails to commute with some
    pulled-back projector of ``pd``."""
    return interference_witness(ch, pa, pd, src, dst, tol).influence


def informationally_complete_states(dim):
    """Pure states whose projectors span all ``dim x dim`` matrices.

    ``|k>``, ``(|k>+|l>)/sqrt2`` and ``(|k>+i|l>)/sqrt2`` for ``k < l``;
    returned as columns.
    """
    cols = [np.eye(dim, dtype=np.complex128)]
    extra = []
    for k in range(dim):
        for l in range(k + 1, dim):
            v = np.zeros(dim, dtype=np.complex128)
            v[k] = 1.0
            v[l] = 1.0
            extra.append(v / np.sqrt(2))
            w = np.zeros(dim, dtype=np.complex128)
            w[k] = 1.0
            w[l] = 1j
            extra.append(w / np.sqrt(2))
    if extra:
        cols.append(np.stack(extra, axis=1))
    return np.concatenate(cols, axis=1)


def default_phase_grid(n, seed=0, n_random=16):
    """Single-projector pi flips plus seeded uniform random phase vectors."""
    grid = []
    for k in range(n):
        v = np.zeros(n)
        v[k] = np.pi
        grid.append(v)
    rng = np.random.default_rng(seed)
    for _ in range(n_random):
        grid.append(rng.uniform(0.0, 2.0 * np.pi, size=n))
    return grid


def phase_signal_oracle(ch, pa, pd, phase_grid, tol=INFLUENCE_TOL, states=None):
    """Operational influence test: can local phases on ``pa`` move the
    statistics of ``pd``?

    For each phase vector ``phi`` the unitary ``V = sum_i exp(i phi_i) P_i (x) I``
    precedes the channel, and outcome probabilities of ``pd`` on the output
    are compared with and without ``V`` on every probe state.

    Args:
        ch: channel split ``A (x) B -> C (x) D``.
        pa: decomposition on ``A``.
        pd: decomposition on ``D``.
        phase_grid: phase vectors, one entry per projector of ``pa``.
        tol: probability change counted as signalling.
        states: probe input states as columns; defaults to an
            informationally complete pure family.

    Raises:
        InputError: on an empty grid or wrong phase-vector length.
    """
    grid = [np.asarray(v, dtype=float) for v in phase_grid]
    if not grid:
        raise InputError("phase grid must be non-empty")
    pa = [as_matrix(p) for p in pa]
    pd = [as_matrix(p) for p in pd]
    for v in grid:
        if v.shape != (len(pa),):
            raise InputError("phase vector length must equal the number of source projectors")
    psi = informationally_complete_states(ch.dim) if states is None else np.asarray(states, dtype=np.complex128)
    u = ch.unitary
    d_c = ch.out_dims[0]
    outs = [np.kron(np.eye(d_c), p) for p in pd]
    emb = [ch.input_op(p, 0) for p in pa]

    def probs(phi_state):
        out = u @ phi_state
        return np.array([np.real(np.einsum("is,ij,js->s", np.conj(out), q, out)) for q in outs])

    base = probs(psi)
    for v in grid:
        vmat = sum(np.exp(1j * ph) * e for ph, e in zip(v, emb))
        if float(np.max(np.abs(probs(vmat @ psi) - base))) > tol:
            return True
    return False


# ---------------------------------------------------------------------------
# Circuits


@dataclass(frozen=True)
class Edge:
    src: int
    dst: int
    influence: bool
    norm: float
    pair: tuple
    connected: bool


@dataclass(eq=False)
class InfluenceGraph:
    """Interference influences between placed decompositions.

    ``nodes`` are sorted in temporal order; ``edges`` maps ``(p, q)`` with
    ``p`` before ``q`` to an :class:`Edge`.
    """

    nodes: list
    edges: dict = field(default_factory=dict)

    def has_edge(self, p, q):
        e = self.edges.get((p, q))
        return bool(e and e.influence)

    def influence_edges(self):
        return [e for e in self.edges.values() if e.influence]

    def to_dict(self):
        return {
            "nodes": [
                {"wire": n.at.wire, "side": n.at.side, "projectors": n.size, "label": n.label} for n in self.nodes
            ],
            "edges": [
                {
                    "from": e.src,
                    "to": e.dst,
                    "influence": e.influence,
                    "witness_norm": e.norm,
                    "witness_pair": list(e.pair),
                    "connected": e.connected,
                }
                for e in sorted(self.edges.values(), key=lambda e: (e.src, e.dst))
            ],
        }


def heisenberg_projectors(c, pdec):
    """Embed every projector of a placed decomposition on the input slice."""
    return [heisenberg_embed(c, p, pdec.at) for p in pdec.decomp]


def _connected(c, p, q):
    if p.wire == q.wire:
        return True
    return c.precedes(p.wire, q.wire)


def influence_graph(c, placed, tol=INFLUENCE_TOL):
    """Interference-influence edges between every ordered pair of placements.

    Each pair is compared through the Heisenberg projectors on the global
    input slice. Conjugating both by the same unitary leaves commutation
    unchanged, so this is the same test as working in the region between the
    two placements. Pairs without a directed path are recorded as no
    influence without computation.
    """
    require_valid(c)
    items = list(placed)
    for p in items:
        d = c.dim(p.at.wire)
        for proj in p.decomp:
            if proj.shape != (d, d):
                raise InputError(f"decomposition on {p.at.wire!r} has wrong dimension")
    order = sorted(range(len(items)), key=lambda k: (placement_key(c, items[k].at), k))
    nodes = [items[k] for k in order]
    emb = [heisenberg_projectors(c, n) for n in nodes]
    g = InfluenceGraph(nodes)
    for a in range(len(nodes)):
        for b in range(a + 1, len(nodes)):
            conn = _connected(c, nodes[a].at, nodes[b].at)
            if not conn:
                g.edges[(a, b)] = Edge(a, b, False, 0.0, (0, 0), False)
                continue
            norms = max_commutator(emb[a], emb[b])
            i, j = np.unravel_index(int(np.argmax(norms)), norms.shape)
            worst = float(norms[i, j])
            g.edges[(a, b)] = Edge(a, b, worst > tol, worst, (int(i), int(j)), True)
    return g


def circuit_quantum_influence(c, src_wire, dst_wire, tol=INFLUENCE_TOL):
    """Quantum influence from one wire to another inside a circuit.

    Compares matrix units on ``src_wire`` with matrix units on ``dst_wire``
    after embedding both on the global input slice.
    """
    require_valid(c)
    if src_wire == dst_wire:
        return True
    if not c.precedes(src_wire, dst_wire):
        return False
    left = [embed_on_wires(c, m, [src_wire]) for m in _unit_basis(c.dim(src_wire))]
    right = [embed_on_wires(c, m, [dst_wire]) for m in _unit_basis(c.dim(dst_wire))]
    return bool(np.max(max_commutator(left, right)) > tol)


__all__ = [
    "IN",
    "OUT",
    "ChannelSplit",
    "PlacedDecomp",
    "Witness",
    "Edge",
    "InfluenceGraph",
    "quantum_influence",
    "interference_witness",
    "interference_influence",
    "phase_signal_oracle",
    "default_phase_grid",
    "informationally_complete_states",
    "influence_graph",
    "heisenberg_projectors",
    "circuit_quantum_influence",
    "max_commutator",
]
