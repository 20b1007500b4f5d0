"""Unitary circuits over dimension-labelled wires.

A circuit is a DAG: every wire has at most one producing gate (its source)
and at most one consuming gate (its sink). Wires without a source are
global inputs, wires without a sink are global outputs; both lists follow
wire declaration order. Operators are always written on the
leftmost-most-significant tensor product of the listed wires.
"""
from dataclasses import dataclass, field
from functools import cached_property
import heapq

import numpy as np

from qcevents.errors import InputError, NumericDefect
from qcevents.tensor import (
    DEFAULT_TOL,
    as_matrix,
    check_dim,
    dagger,
    haar_random_unitary,
    is_unitary,
    matrix_from_json,
    matrix_to_json,
    permutation_matrix,
    permute_factors,
)

IN = "IN"
OUT = "OUT"
BOUNDARY = None


@dataclass(frozen=True)
class Wire:
    id: str
    dim: int


@dataclass(frozen=True, eq=False)
class Gate:
    id: str
    inputs: tuple
    outputs: tuple
    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "inputs", tuple(self.inputs))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        object.__setattr__(self, "matrix", as_matrix(self.matrix))


@dataclass(frozen=True)
class Placement:
    """A decomposition slot on a wire: ``IN`` sits just before the wire's
    midpoint, ``OUT`` just after it."""

    wire: str
    side: str = IN

    def __post_init__(self):
        if self.side not in (IN, OUT):
            raise InputError(f"placement side must be IN or OUT, got {self.side!r}")


@dataclass(eq=False)
class Circuit:
    """Immutable-by-convention circuit; construct, then call :func:`validate_circuit`."""

    wires: tuple
    gates: tuple
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.wires = tuple(self.wires)
        self.gates = tuple(self.gates)

    @cached_property
    def wire_map(self):
        return {w.id: w for w in self.wires}

    @cached_property
    def gate_map(self):
        return {g.id: g for g in self.gates}

    def dim(self, wire_id):
        try:
            return self.wire_map[wire_id].dim
        except KeyError:
            raise InputError(f"unknown wire {wire_id!r}") from None

    @cached_property
    def source(self):
        """wire id -> producing gate id, or ``None`` for global inputs."""
        src = {w.id: BOUNDARY for w in self.wires}
        for g in self.gates:
            for w in g.outputs:
                src[w] = g.id
        return src

    @cached_property
    def sink(self):
        """wire id -> consuming gate id, or ``None`` for global outputs."""
        snk = {w.id: BOUNDARY for w in self.wires}
        for g in self.gates:
            for w in g.inputs:
                snk[w] = g.id
        return snk

    @cached_property
    def inputs(self):
        return tuple(w.id for w in self.wires if self.source[w.id] is BOUNDARY)

    @cached_property
    def outputs(self):
        return tuple(w.id for w in self.wires if self.sink[w.id] is BOUNDARY)

    @cached_property
    def total_dim(self):
        return int(np.prod([self.dim(w) for w in self.inputs], dtype=np.int64))

    @cached_property
    def gate_order(self):
        """Topological order of gates, ties broken by gate id."""
        preds = {g.id: set() for g in self.gates}
        for g in self.gates:
            for w in g.inputs:
                s = self.source.get(w)
                if s is not None:
                    preds[g.id].add(s)
        succs = {g.id: [] for g in self.gates}
        for gid, ps in preds.items():
            for p in ps:
                succs[p].append(gid)
        indeg = {gid: len(ps) for gid, ps in preds.items()}
        heap = [gid for gid, k in indeg.items() if k == 0]
        heapq.heapify(heap)
        order = []
        while heap:
            gid = heapq.heappop(heap)
            order.append(gid)
            for nxt in succs[gid]:
                indeg[nxt] -= 1
                if indeg[nxt] == 0:
                    heapq.heappush(heap, nxt)
        if len(order) != len(self.gates):
            raise InputError("circuit contains a cycle")
        return tuple(order)

    @cached_property
    def gate_ancestors(self):
        """gate id -> frozenset of gate ids with a path into it (itself included)."""
        anc = {}
        for gid in self.gate_order:
            g = self.gate_map[gid]
            acc = {gid}
            for w in g.inputs:
                s = self.source[w]
                if s is not None:
                    acc |= anc[s]
            anc[gid] = frozenset(acc)
        return anc

    def wire_past_gates(self, wire_id):
        """Gates that must act before ``wire_id`` exists."""
        s = self.source[wire_id]
        return frozenset() if s is None else self.gate_ancestors[s]

    def precedes(self, w1, w2):
        """True when a directed path leads from wire ``w1`` to wire ``w2``."""
        snk = self.sink[w1]
        if snk is None or w1 == w2:
            return False
        return snk in self.wire_past_gates(w2)


def validate_circuit(c, tol=DEFAULT_TOL):
    """List every violated circuit invariant; an empty list means valid.

    Each diagnostic is a dict with ``kind`` and ``message`` keys. Kinds:
    ``duplicate-wire``, ``duplicate-gate``, ``bad-dim``, ``unknown-wire``,
    ``multiple-source``, ``multiple-sink``, ``self-loop``, ``dim-mismatch``,
    ``shape-mismatch``, ``non-unitary``, ``cycle``, ``dim-cap``.
    """
    diags = []

    def add(kind, msg):
        diags.append({"kind": kind, "message": msg})

    seen = set()
    for w in c.wires:
        if w.id in seen:
            add("duplicate-wire", f"wire {w.id!r} declared twice")
        seen.add(w.id)
        if not isinstance(w.dim, (int, np.integer)) or w.dim < 1:
            add("bad-dim", f"wire {w.id!r} has invalid dimension {w.dim!r}")
    gseen = set()
    produced = {}
    consumed = {}
    for g in c.gates:
        if g.id in gseen:
            add("duplicate-gate", f"gate {g.id!r} declared twice")
        gseen.add(g.id)
        for w in g.inputs:
            if w not in seen:
                add("unknown-wire", f"gate {g.id!r} consumes undeclared wire {w!r}")
            elif w in consumed:
                add("multiple-sink", f"wire {w!r} consumed by both {consumed[w]!r} and {g.id!r}")
            else:
                consumed[w] = g.id
        for w in g.outputs:
            if w not in seen:
                add("unknown-wire", f"gate {g.id!r} produces undeclared wire {w!r}")
            elif w in produced:
                add("multiple-source", f"wire {w!r} produced by both {produced[w]!r} and {g.id!r}")
            else:
                produced[w] = g.id
        if set(g.inputs) & set(g.outputs):
            add("self-loop", f"gate {g.id!r} feeds a wire back into itself")
    if diags:
        return diags
    wire_dims = {w.id: int(w.dim) for w in c.wires}
    for g in c.gates:
        din = int(np.prod([wire_dims[w] for w in g.inputs], dtype=np.int64))
        dout = int(np.prod([wire_dims[w] for w in g.outputs], dtype=np.int64))
        if din != dout:
            add("dim-mismatch", f"gate {g.id!r}: input dim {din} != output dim {dout}")
        if g.matrix.shape != (dout, din):
            add("shape-mismatch", f"gate {g.id!r}: matrix shape {g.matrix.shape} but wires need ({dout}, {din})")
        elif din == dout and not is_unitary(g.matrix, tol * max(1, din)):
            add("non-unitary", f"gate {g.id!r} is not unitary within tolerance")
    try:
        c.gate_order
    except InputError:
        add("cycle", "gate graph contains a directed cycle")
        return diags
    total = int(np.prod([wire_dims[w] for w in c.inputs], dtype=np.int64))
    try:
        check_dim(total)
    except InputError as exc:
        add("dim-cap", str(exc))
    return diags


def require_valid(c, tol=DEFAULT_TOL):
    diags = validate_circuit(c, tol)
    if diags:
        raise InputError("; ".join(d["message"] for d in diags))
    return c


def temporal_order(c):
    """Total order of wire ids extending the circuit's partial order.

    Kahn's algorithm over the wire graph, always emitting the smallest
    available wire id, so incomparable wires fall back to lexicographic order
    whenever the partial order leaves them free.
    """
    if "temporal_order" in c._cache:
        return c._cache["temporal_order"]
    require_valid(c)
    succs = {w.id: set() for w in c.wires}
    indeg = {w.id: 0 for w in c.wires}
    for g in c.gates:
        for a in g.inputs:
            for b in g.outputs:
                if b not in succs[a]:
                    succs[a].add(b)
                    indeg[b] += 1
    heap = [w for w, k in indeg.items() if k == 0]
    heapq.heapify(heap)
    order = []
    while heap:
        w = heapq.heappop(heap)
        order.append(w)
        for nxt in sorted(succs[w]):
            indeg[nxt] -= 1
            if indeg[nxt] == 0:
                heapq.heappush(heap, nxt)
    order = tuple(order)
    c._cache["temporal_order"] = order
    return order


def placement_key(c, p):
    """Sort key realising temporal order with IN before OUT on one wire."""
    rank = {w: k for k, w in enumerate(temporal_order(c))}
    if p.wire not in rank:
        raise InputError(f"placement on unknown wire {p.wire!r}")
    return (rank[p.wire], 0 if p.side == IN else 1)


def sort_placements(c, placements):
    return sorted(placements, key=lambda p: placement_key(c, p))


# ---------------------------------------------------------------------------
# Dense evaluation


def _layout_dims(c, layout):
    return [c.dim(w) for w in layout]


def _forward_layouts(c, gate_ids):
    """Layouts before each gate when ``gate_ids`` act in topological order."""
    layout = list(c.inputs)
    steps = []
    for gid in gate_ids:
        g = c.gate_map[gid]
        before = list(layout)
        missing = [w for w in g.inputs if w not in layout]
        if missing:
            raise NumericDefect(f"gate {gid!r} scheduled before its inputs {missing}")
        rest = [w for w in layout if w not in g.inputs]
        layout = rest + list(g.outputs)
        steps.append((g, before, rest))
    return steps, layout


def _apply_forward(c, state, layout, g, rest):
    """Act with gate ``g`` on the output axes of ``state`` (shape (D, X))."""
    dims = _layout_dims(c, layout)
    ncols = state.shape[1]
    t = state.reshape(dims + [ncols])
    pos_rest = [layout.index(w) for w in rest]
    pos_in = [layout.index(w) for w in g.inputs]
    t = t.transpose(pos_rest + pos_in + [len(layout)])
    drest = int(np.prod([c.dim(w) for w in rest], dtype=np.int64))
    din = int(np.prod([c.dim(w) for w in g.inputs], dtype=np.int64))
    t = t.reshape(drest, din, ncols)
    t = np.einsum("oi,rix->rox", g.matrix, t, optimize=True)
    return t.reshape(-1, ncols)


def _conjugate_backward(c, op, layout_after, g, before, rest):
    """Return ``G^dagger op G`` rewritten on the layout ``before``."""
    drest = int(np.prod([c.dim(w) for w in rest], dtype=np.int64))
    dout = int(np.prod([c.dim(w) for w in g.outputs], dtype=np.int64))
    din = int(np.prod([c.dim(w) for w in g.inputs], dtype=np.int64))
    # layout_after is rest + outputs by construction.
    t = op.reshape(drest, dout, drest, dout)
    t = np.einsum("oi,rocp,pj->ricj", np.conj(g.matrix), t, g.matrix, optimize=True)
    mid = list(rest) + list(g.inputs)
    t = t.reshape(drest * din, drest * din)
    order = [mid.index(w) for w in before]
    return permute_factors(t, _layout_dims(c, mid), order)


def total_unitary(c, input_order=None, output_order=None):
    """Unitary of the whole circuit.

    Args:
        c: a valid circuit.
        input_order: global input wire ids, default declaration order.
        output_order: global output wire ids, default declaration order.

    Returns:
        matrix from the ordered inputs to the ordered outputs.
    """
    require_valid(c)
    input_order = tuple(c.inputs if input_order is None else input_order)
    output_order = tuple(c.outputs if output_order is None else output_order)
    if sorted(input_order) != sorted(c.inputs) or sorted(output_order) != sorted(c.outputs):
        raise InputError("input/output order must list exactly the boundary wires")
    key = ("total", input_order, output_order)
    if key in c._cache:
        return c._cache[key]
    dim = check_dim(c.total_dim)
    steps, final = _forward_layouts(c, c.gate_order)
    state = np.eye(dim, dtype=np.complex128)
    layout = list(c.inputs)
    for g, before, rest in steps:
        state = _apply_forward(c, state, before, g, rest)
        layout = rest + list(g.outputs)
    assert layout == final
    dims_out = _layout_dims(c, final)
    perm_out = permutation_matrix(dims_out, [final.index(w) for w in output_order])
    dims_in = _layout_dims(c, c.inputs)
    perm_in = permutation_matrix(dims_in, [list(c.inputs).index(w) for w in input_order])
    u = perm_out @ state @ dagger(perm_in)
    c._cache[key] = u
    return u


def subcircuit_unitary(c, in_wires, out_wires, gates=None):
    """Unitary of the region between two time slices.

    Starting from ``in_wires``, every gate whose inputs are all available is
    applied until the slice equals ``out_wires`` or no gate applies; the
    final slice must be exactly ``out_wires``. ``gates`` restricts the
    candidates to a given id set.

    Returns:
        matrix from ``in_wires`` to ``out_wires`` in the listed factor orders.
    """
    in_wires, out_wires = list(in_wires), list(out_wires)
    for w in in_wires + out_wires:
        c.dim(w)
    layout = list(in_wires)
    d_in = int(np.prod(_layout_dims(c, layout), dtype=np.int64))
    state = np.eye(check_dim(d_in), dtype=np.complex128)
    pending = [gid for gid in c.gate_order if gates is None or gid in gates]
    target = sorted(out_wires)
    progressed = True
    while progressed and sorted(layout) != target:
        progressed = False
        for gid in list(pending):
            if sorted(layout) == target:
                break
            g = c.gate_map[gid]
            if all(w in layout for w in g.inputs):
                rest = [w for w in layout if w not in g.inputs]
                state = _apply_forward(c, state, layout, g, rest)
                layout = rest + list(g.outputs)
                pending.remove(gid)
                progressed = True
    if sorted(layout) != sorted(out_wires):
        raise InputError(f"region from {in_wires} ends on {layout}, not {out_wires}")
    perm = permutation_matrix(_layout_dims(c, layout), [layout.index(w) for w in out_wires])
    return perm @ state


def embed_on_wires(c, op, wire_ids):
    """Heisenberg image, on the global input layout, of ``op`` acting on
    ``wire_ids`` (in that factor order) at their common slice.

    The slice is reached by applying exactly the gates in the past of the
    listed wires; all of them must coexist on that slice.
    """
    wire_ids = list(wire_ids)
    for w in wire_ids:
        c.dim(w)
    op = as_matrix(op)
    dop = int(np.prod([c.dim(w) for w in wire_ids], dtype=np.int64))
    if op.shape != (dop, dop):
        raise InputError(f"operator shape {op.shape} does not match wires {wire_ids} (dim {dop})")
    past = set()
    for w in wire_ids:
        past |= c.wire_past_gates(w)
    gate_ids = [gid for gid in c.gate_order if gid in past]
    steps, layout = _forward_layouts(c, gate_ids)
    for w in wire_ids:
        if w not in layout:
            raise InputError(f"wires {wire_ids} do not share a time slice")
    others = [w for w in layout if w not in wire_ids]
    d_other = int(np.prod([c.dim(w) for w in others], dtype=np.int64))
    full = np.kron(op, np.eye(d_other))
    cur = wire_ids + others
    full = permute_factors(full, _layout_dims(c, cur), [cur.index(w) for w in layout])
    for g, before, rest in reversed(steps):
        after = rest + list(g.outputs)
        full = _conjugate_backward(c, full, after, g, before, rest)
    return full


def heisenberg_embed(c, op, at):
    """Heisenberg representation of ``op`` on the placement ``at``.

    IN and OUT placements on one wire share a slice, so they embed to the
    same operator; they differ only in their position in temporal order.
    """
    require_valid(c)
    if not isinstance(at, Placement):
        at = Placement(*at)
    return embed_on_wires(c, op, [at.wire])


# ---------------------------------------------------------------------------
# Bubble surgery


@dataclass(frozen=True, eq=False)
class SingleShotChannel:
    """The unitary obtained by cutting every bubble wire at its midpoint.

    Inputs are ``A_k^out`` for each bubble wire (temporal order) followed by
    the remaining global inputs ``G``; outputs are ``A_k^in`` followed by the
    remaining global outputs ``F``.
    """

    unitary: np.ndarray
    bubble: tuple
    input_labels: tuple
    output_labels: tuple
    input_dims: tuple
    output_dims: tuple
    cut_circuit: Circuit

    @property
    def n(self):
        return len(self.bubble)


def in_label(w):
    return f"{w}@in"


def out_label(w):
    return f"{w}@out"


def normalize_bubble(c, bubble):
    """Validate and sort bubble wire ids by temporal order."""
    if isinstance(bubble, dict):
        bubble = bubble.get("bubble", [])
    bubble = list(bubble)
    if len(set(bubble)) != len(bubble):
        raise InputError("bubble lists a wire twice")
    for w in bubble:
        if w not in c.wire_map:
            raise InputError(f"bubble wire {w!r} not in circuit")
    rank = {w: k for k, w in enumerate(temporal_order(c))}
    return tuple(sorted(bubble, key=rank.__getitem__))


def cut_circuit(c, bubble):
    """Circuit with each bubble wire split into two boundary halves.

    Returns:
        ``(cut, bubble, inputs, outputs)`` where ``bubble`` is sorted into
        temporal order, ``inputs`` is ``A_k^out`` then the other global
        inputs and ``outputs`` is ``A_k^in`` then the other global outputs.
    """
    require_valid(c)
    bubble = normalize_bubble(c, bubble)
    cut = set(bubble)
    taken = set(c.wire_map)
    for w in bubble:
        for lab in (in_label(w), out_label(w)):
            if lab in taken:
                raise InputError(f"wire id {lab!r} collides with a cut label")
    new_wires = []
    for w in c.wires:
        if w.id in cut:
            new_wires.append(Wire(in_label(w.id), w.dim))
            new_wires.append(Wire(out_label(w.id), w.dim))
        else:
            new_wires.append(w)
    new_gates = []
    for g in c.gates:
        ins = tuple(out_label(w) if w in cut else w for w in g.inputs)
        outs = tuple(in_label(w) if w in cut else w for w in g.outputs)
        new_gates.append(Gate(g.id, ins, outs, g.matrix))
    cc = Circuit(tuple(new_wires), tuple(new_gates))
    a_out = [out_label(w) for w in bubble]
    a_in = [in_label(w) for w in bubble]
    g_rest = [w for w in cc.inputs if w not in a_out]
    f_rest = [w for w in cc.outputs if w not in a_in]
    return cc, bubble, tuple(a_out + g_rest), tuple(a_in + f_rest)


def cut_bubble(c, bubble):
    """Cut each bubble wire once, rerouting both halves to the boundary."""
    cc, bubble, ins, outs = cut_circuit(c, bubble)
    check_dim(cc.total_dim)
    u = total_unitary(cc, ins, outs)
    return SingleShotChannel(
        unitary=u,
        bubble=bubble,
        input_labels=ins,
        output_labels=outs,
        input_dims=tuple(cc.dim(w) for w in ins),
        output_dims=tuple(cc.dim(w) for w in outs),
        cut_circuit=cc,
    )


def resplice(ch, c):
    """Feed each ``A_k^in`` output back into ``A_k^out`` and return the
    resulting unitary on the original circuit's declared boundary order."""
    n = ch.n
    dims_in = list(ch.input_dims)
    dims_out = list(ch.output_dims)
    t = ch.unitary.reshape(dims_out + dims_in)
    nin = len(dims_in)
    nout = len(dims_out)
    # Contract output axis k with input axis k for k < n.
    letters = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ"
    if nin + nout - n > len(letters):
        raise InputError("too many wires for re-splice")
    shared = letters[:n]
    free_out = letters[n:nout]
    free_in = letters[nout:nout + nin - n]
    spec = shared + free_out + shared + free_in + "->" + free_out + free_in
    r = np.einsum(spec, t)
    original = {in_label(w): w for w in ch.bubble}
    original.update({out_label(w): w for w in ch.bubble})
    rest_out = [original.get(w, w) for w in ch.output_labels[n:]]
    rest_in = [original.get(w, w) for w in ch.input_labels[n:]]
    dout = int(np.prod(dims_out[n:], dtype=np.int64))
    din = int(np.prod(dims_in[n:], dtype=np.int64))
    m = r.reshape(dout, din)
    perm_out = permutation_matrix(dims_out[n:], [rest_out.index(w) for w in c.outputs])
    perm_in = permutation_matrix(dims_in[n:], [rest_in.index(w) for w in c.inputs])
    return perm_out @ m @ dagger(perm_in)


# ---------------------------------------------------------------------------
# JSON and construction helpers


def circuit_from_dict(data):
    """Parse the circuit JSON object (see README for the format)."""
    if not isinstance(data, dict) or "wires" not in data or "gates" not in data:
        raise InputError("circuit JSON needs 'wires' and 'gates'")
    try:
        wires = tuple(Wire(str(w["id"]), int(w["dim"])) for w in data["wires"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad wire entry: {exc}") from exc
    dims = {w.id: w.dim for w in wires}
    gates = []
    for g in data["gates"]:
        try:
            gid = str(g["id"])
            ins = tuple(str(w) for w in g["inputs"])
            outs = tuple(str(w) for w in g["outputs"])
            entries = g["matrix"]
        except (KeyError, TypeError) as exc:
            raise InputError(f"bad gate entry: {exc}") from exc
        din = int(np.prod([dims.get(w, 1) for w in ins], dtype=np.int64))
        dout = int(np.prod([dims.get(w, 1) for w in outs], dtype=np.int64))
        if len(entries) == din * dout:
            m = matrix_from_json(entries, dout, din)
        else:
            m = matrix_from_json(entries)
        gates.append(Gate(gid, ins, outs, m))
    return Circuit(wires, tuple(gates))


def circuit_to_dict(c):
    return {
        "wires": [{"id": w.id, "dim": int(w.dim)} for w in c.wires],
        "gates": [
            {"id": g.id, "inputs": list(g.inputs), "outputs": list(g.outputs), "matrix": matrix_to_json(g.matrix)}
            for g in c.gates
        ],
    }


class CircuitBuilder:
    """Small helper for assembling circuits in code.

    >>> b = CircuitBuilder()
    >>> b.wire("a", 2); b.wire("b", 2)
    >>> b.gate("h", ["a"], ["b"], np.eye(2))
    >>> len(b.build().gates)
    1
    """

    def __init__(self):
        self._wires = []
        self._gates = []

    def wire(self, wid, dim):
        self._wires.append(Wire(wid, int(dim)))

    def wires(self, ids, dim):
        for w in ids:
            self.wire(w, dim)

    def gate(self, gid, inputs, outputs, matrix):
        self._gates.append(Gate(gid, tuple(inputs), tuple(outputs), np.asarray(matrix, dtype=np.complex128)))

    def build(self, validate=True):
        c = Circuit(tuple(self._wires), tuple(self._gates))
        if validate:
            require_valid(c)
        return c


def _structured_gate(rng, in_d, out_d):
    """Random gate drawn from a mix of generic and structured families.

    Structured gates (controlled unitaries, controlled shifts, diagonal
    phases, permutations, local products) keep preferred decompositions
    nontrivial, which Haar gates alone almost never do.
    """
    dtot = int(np.prod(in_d))
    kind = rng.choice(["haar", "controlled", "shift", "diag", "perm", "local"], p=[0.2, 0.25, 0.15, 0.15, 0.1, 0.15])
    if len(in_d) == 1 or kind == "haar":
        if len(in_d) == 1 and kind in ("diag", "perm"):
            if kind == "diag":
                return np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, dtot)))
            return np.eye(dtot)[rng.permutation(dtot)].astype(np.complex128)
        return haar_random_unitary(dtot, rng)
    d0, d1 = in_d
    if kind == "controlled":
        blocks = [haar_random_unitary(d1, rng) for _ in range(d0)]
        u = np.zeros((dtot, dtot), dtype=np.complex128)
        for k, blk in enumerate(blocks):
            u[k * d1:(k + 1) * d1, k * d1:(k + 1) * d1] = blk
    elif kind == "shift":
        u = np.zeros((dtot, dtot), dtype=np.complex128)
        for i in range(d0):
            for j in range(d1):
                u[i * d1 + (i + j) % d1, i * d1 + j] = 1.0
    elif kind == "diag":
        u = np.diag(np.exp(1j * rng.uniform(0, 2 * np.pi, dtot)))
    elif kind == "perm":
        u = np.eye(dtot)[rng.permutation(dtot)].astype(np.complex128)
    else:
        u = np.kron(haar_random_unitary(d0, rng), haar_random_unitary(d1, rng))
    if list(out_d) != list(in_d):
        # Outputs swap the two factors.
        swap = np.zeros((dtot, dtot), dtype=np.complex128)
        for i in range(d0):
            for j in range(d1):
                swap[j * d0 + i, i * d1 + j] = 1.0
        u = swap @ u
    return u


def random_circuit(rng, max_gates=5, dims=(2, 3), max_total_dim=24, n_inputs=None, min_gates=1):
    """Seeded random circuit for property tests.

    Starts from 2-3 input wires and applies random gates on one or two wires
    of the current frontier. Outputs keep the input dims, sometimes in
    swapped order, so wire dims stay within ``dims``.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    for _ in range(100):
        k = int(rng.integers(2, 4)) if n_inputs is None else int(n_inputs)
        in_dims = [int(rng.choice(dims)) for _ in range(k)]
        if int(np.prod(in_dims)) <= max_total_dim:
            break
    else:
        in_dims = [min(dims)] * 2
    b = CircuitBuilder()
    frontier = []
    counter = 0
    for d in in_dims:
        wid = f"w{counter}"
        counter += 1
        b.wire(wid, d)
        frontier.append(wid)
    dim_of = {w: d for w, d in zip(frontier, in_dims)}
    n_gates = int(rng.integers(min_gates, max_gates + 1))
    for gi in range(n_gates):
        arity = 1 if len(frontier) < 2 else int(rng.integers(1, 3))
        picks = sorted(rng.choice(len(frontier), size=arity, replace=False).tolist())
        ins = [frontier[p] for p in picks]
        in_d = [dim_of[w] for w in ins]
        out_d = list(in_d)
        if arity == 2 and rng.random() < 0.3:
            out_d = out_d[::-1]
        outs = []
        for d in out_d:
            wid = f"w{counter}"
            counter += 1
            b.wire(wid, d)
            dim_of[wid] = d
            outs.append(wid)
        b.gate(f"g{gi}", ins, outs, _structured_gate(rng, in_d, out_d))
        for p in sorted(picks, reverse=True):
            frontier.pop(p)
        for j, w in enumerate(outs):
            frontier.insert(min(picks[0] + j, len(frontier)), w)
    return b.build()


def random_bubble(c, rng, max_wires=3):
    """Seeded random bubble that favours causally connected wires.

    The first wire is uniform; each further wire is, with probability 0.75,
    drawn from the wires comparable to those already chosen.
    """
    if not isinstance(rng, np.random.Generator):
        rng = np.random.default_rng(rng)
    ids = sorted(c.wire_map)
    size = int(rng.integers(1, max_wires + 1))
    chosen = [ids[int(rng.integers(len(ids)))]]
    while len(chosen) < min(size, len(ids)):
        rest = [w for w in ids if w not in chosen]
        linked = [w for w in rest if any(c.precedes(w, x) or c.precedes(x, w) for x in chosen)]
        pool = linked if linked and rng.random() < 0.75 else rest
        chosen.append(pool[int(rng.integers(len(pool)))])
    return normalize_bubble(c, chosen)
