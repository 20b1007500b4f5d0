"""Concrete circuits: controlled shifts, instrument dilations and worked models.

Every builder returns plain data (circuits, bubbles, event locations) so the
analysis modules can be applied to it unchanged.
"""
from dataclasses import dataclass, field
from math import gcd

import numpy as np

from qcevents.algebra import projector_set_distance
from qcevents.circuit import IN, OUT, CircuitBuilder, Placement
from qcevents.errors import InputError, NumericDefect
from qcevents.histories import conditional_distribution, history_distribution
from qcevents.influence import PlacedDecomp
from qcevents.preference import preferred_set
from qcevents.tensor import DEFAULT_TOL, as_matrix, complete_isometry, dagger, haar_random_unitary

HADAMARD = np.array([[1, 1], [1, -1]], dtype=np.complex128) / np.sqrt(2.0)


def shift_unitary(d):
    """Controlled shift ``|i>|j> -> |i>|j+i mod d>`` on ``d**2`` dimensions.

    The first factor is the control. ``d = 2`` gives CNOT.
    """
    d = int(d)
    if d < 1:
        raise InputError("shift dimension must be >= 1")
    v = np.zeros((d * d, d * d), dtype=np.complex128)
    for i in range(d):
        for j in range(d):
            v[i * d + (j + i) % d, i * d + j] = 1.0
    return v


def fourier_matrix(d):
    """Unitary DFT; its first column is the uniform superposition."""
    k = np.arange(d)
    return np.exp(2j * np.pi * np.outer(k, k) / d) / np.sqrt(d)


def controlled_unitary(d_control, unitaries):
    """``sum_i |i><i| (x) U_i`` with the control as the first factor."""
    if len(unitaries) != d_control:
        raise InputError("need one unitary per control value")
    d_t = as_matrix(unitaries[0]).shape[0]
    out = np.zeros((d_control * d_t, d_control * d_t), dtype=np.complex128)
    for i, u in enumerate(unitaries):
        out[i * d_t:(i + 1) * d_t, i * d_t:(i + 1) * d_t] = as_matrix(u)
    return out


def ry(theta):
    c, s = np.cos(theta / 2.0), np.sin(theta / 2.0)
    return np.array([[c, -s], [s, c]], dtype=np.complex128)


# ---------------------------------------------------------------------------
# Instruments


@dataclass(eq=False)
class Instrument:
    """Completely positive maps given by Kraus lists, all from ``d_in`` to ``d_out``."""

    maps: list

    def __post_init__(self):
        self.maps = [[as_matrix(k) for k in m] for m in self.maps]
        if not self.maps or any(not m for m in self.maps):
            raise InputError("instrument needs at least one map with one Kraus operator")
        shapes = {k.shape for m in self.maps for k in m}
        if len(shapes) != 1:
            raise InputError("Kraus operators must share one shape")

    @property
    def d_in(self):
        return self.maps[0][0].shape[1]

    @property
    def d_out(self):
        return self.maps[0][0].shape[0]

    @property
    def n_outcomes(self):
        return len(self.maps)

    @property
    def max_kraus(self):
        return max(len(m) for m in self.maps)

    def completeness_residual(self):
        acc = sum(dagger(k) @ k for m in self.maps for k in m)
        return float(np.max(np.abs(acc - np.eye(self.d_in))))

    def validate(self, tol=DEFAULT_TOL):
        if self.completeness_residual() > tol * max(1, self.d_in) * 10:
            raise InputError("Kraus operators do not sum to the identity")
        return self

    def apply(self, i, rho):
        """``C_i(rho)``."""
        return sum(k @ rho @ dagger(k) for k in self.maps[i])


def random_instrument(rng, n_outcomes, d_in, d_out, kraus_per_map=1):
    """Instrument whose stacked Kraus operators are columns of a Haar unitary.

    The stack ``[K_11; K_12; ...]`` is an isometry, so completeness is exact.
    ``kraus_per_map`` is raised when needed to leave room for ``d_in`` columns.
    """
    kraus_per_map = max(int(kraus_per_map), -(-d_in // (n_outcomes * d_out)))
    rows = n_outcomes * kraus_per_map * d_out
    iso = haar_random_unitary(rows, rng)[:, :d_in]
    maps = []
    for i in range(n_outcomes):
        ks = []
        for r in range(kraus_per_map):
            off = (i * kraus_per_map + r) * d_out
            ks.append(iso[off:off + d_out])
        maps.append(ks)
    return Instrument(maps)


def pvm_instrument(projectors):
    """Lueders instrument of a projective measurement."""
    return Instrument([[as_matrix(p)] for p in projectors])


@dataclass(frozen=True, eq=False)
class Dilation:
    """``U : A (x) X -> B (x) Y (x) Z`` with ancilla state ``psi`` on ``X``."""

    unitary: np.ndarray
    psi: np.ndarray
    dims: dict


def _ancilla_dims(inst):
    d_a, d_b, n, r = inst.d_in, inst.d_out, inst.n_outcomes, inst.max_kraus
    step = d_a // gcd(d_a, d_b * n)
    d_z = -(-r // step) * step
    d_x = d_b * n * d_z // d_a
    while d_x < 2:
        d_z += step
        d_x = d_b * n * d_z // d_a
    return d_x, d_z


def dilate_instrument(inst, tol=DEFAULT_TOL):
    """Unitary dilation with a computational pointer ``Y``.

    The isometry ``J = sum_ik K_ik (x) |i>_Y (x) |k>_Z`` fills the columns
    ``|a>|0>_X`` of a unitary; the remaining columns are an orthonormal
    completion. Composing with the Fourier transform on ``X`` makes the
    required ancilla state the uniform superposition.

    Returns:
        :class:`Dilation` with ``dims`` keys ``A, X, B, Y, Z``.
    """
    inst.validate(tol)
    d_a, d_b, n = inst.d_in, inst.d_out, inst.n_outcomes
    d_x, d_z = _ancilla_dims(inst)
    dim = d_a * d_x
    j = np.zeros((dim, d_a), dtype=np.complex128)
    for i, m in enumerate(inst.maps):
        for k, kr in enumerate(m):
            e = np.zeros(n * d_z)
            e[i * d_z + k] = 1.0
            j += _pointer_block(kr, e)
    full = complete_isometry(j)
    u0 = np.zeros((dim, dim), dtype=np.complex128)
    zero_cols = [a * d_x for a in range(d_a)]
    other_cols = [c for c in range(dim) if c not in zero_cols]
    u0[:, zero_cols] = full[:, :d_a]
    u0[:, other_cols] = full[:, d_a:]
    w = fourier_matrix(d_x)
    u = u0 @ np.kron(np.eye(d_a), dagger(w))
    return Dilation(u, w[:, 0].copy(), {"A": d_a, "X": d_x, "B": d_b, "Y": n, "Z": d_z})


def _pointer_block(kraus, pointer):
    """``K (x) |pointer>`` as a ``(d_b * len(pointer), d_a)`` matrix."""
    return np.kron(kraus, pointer.reshape(-1, 1))


def dilation_residual(inst, dil):
    """Largest entry of ``C_i(rho) - Tr_YZ((I (x) |i><i| (x) I) U (rho (x) psi psi^dagger) U^dagger)``
    over the matrix units ``rho``."""
    d_a, d_b, n, d_z = dil.dims["A"], dil.dims["B"], dil.dims["Y"], dil.dims["Z"]
    u = dil.unitary
    anc = np.outer(dil.psi, np.conj(dil.psi))
    worst = 0.0
    for a in range(d_a):
        for b in range(d_a):
            rho = np.zeros((d_a, d_a), dtype=np.complex128)
            rho[a, b] = 1.0
            out = (u @ np.kron(rho, anc) @ dagger(u)).reshape(d_b, n, d_z, d_b, n, d_z)
            for i in range(n):
                got = np.trace(out[:, i, :, :, i, :], axis1=1, axis2=3)
                worst = max(worst, float(np.max(np.abs(got - inst.apply(i, rho)))))
    return worst


@dataclass(eq=False)
class EventRef:
    """Where a named event lives and which projector index encodes each value.

    ``values[v]`` is the index, within the preferred decomposition at
    ``(wire, side)``, of the projector for semantic value ``v``.
    """

    wire: str
    side: str
    target: list
    values: list = field(default_factory=list)


@dataclass(eq=False)
class BuiltModel:
    """A circuit, its bubble and the semantic events defined relative to it.

    ``inputs``/``outputs`` name the wires carrying the instrument system in
    and out; ``instruments`` lists the modelled instruments in order.
    """

    circuit: object
    bubble: list
    events: dict
    inputs: list
    outputs: list
    instruments: list
    success: list
    outcomes: list
    _pset: object = None

    def preferred_set(self, tol=DEFAULT_TOL, seed=0):
        if self._pset is None:
            self._pset = preferred_set(self.circuit, self.bubble, tol, seed)
            self._resolve()
        return self._pset

    def _resolve(self):
        for name, ref in self.events.items():
            entry = self._pset.entry(ref.wire, ref.side)
            vals = []
            for proj in ref.target:
                dists = [projector_set_distance([q], [proj]) for q in entry.decomp]
                k = int(np.argmin(dists))
                if dists[k] > 1e-6:
                    raise NumericDefect(f"event {name!r}: expected projector not in the preferred decomposition")
                vals.append(k)
            ref.values = vals

    def event_decomp(self, name):
        ref = self.events[name]
        return self.preferred_set().entry(ref.wire, ref.side)


def _rank1(v):
    v = np.asarray(v, dtype=np.complex128)
    return np.outer(v, np.conj(v))


def build_instrument_model(inst, prefix="", tol=DEFAULT_TOL):
    """Circuit realising ``inst`` relative to a four-wire bubble.

    Gates: a shift inverse on ``(x1, k0) -> (x2, k1)``, a preparation ``W``
    on ``x2 -> x3`` with ``W|0> = psi``, the dilation ``U`` on
    ``(a, x3) -> (b, y, z)`` and a shift ``(y, l0) -> (y2, l1)`` copying the
    pointer. The bubble is ``{k0, x3, y, l1}``. Event ``f`` (success) is the
    IN decomposition on ``x3``, value 0 being ``psi``; event ``g`` (outcome)
    is the OUT decomposition on ``y``.
    """
    dil = dilate_instrument(inst, tol)
    d = dil.dims
    p = prefix
    b = CircuitBuilder()
    for wid, dim in [
        ("x1", d["X"]), ("k0", d["X"]), ("a", d["A"]), ("l0", d["Y"]),
        ("x2", d["X"]), ("k1", d["X"]), ("x3", d["X"]),
        ("b", d["B"]), ("y", d["Y"]), ("z", d["Z"]), ("y2", d["Y"]), ("l1", d["Y"]),
    ]:
        b.wire(p + wid, dim)
    w = fourier_matrix(d["X"])
    b.gate(p + "g1_vdag", [p + "x1", p + "k0"], [p + "x2", p + "k1"], dagger(shift_unitary(d["X"])))
    b.gate(p + "g2_w", [p + "x2"], [p + "x3"], w)
    b.gate(p + "g3_u", [p + "a", p + "x3"], [p + "b", p + "y", p + "z"], dil.unitary)
    b.gate(p + "g4_v", [p + "y", p + "l0"], [p + "y2", p + "l1"], shift_unitary(d["Y"]))
    c = b.build()
    events = {
        p + "f": EventRef(p + "x3", IN, [_rank1(w[:, k]) for k in range(d["X"])]),
        p + "g": EventRef(p + "y", OUT, [_rank1(np.eye(d["Y"])[k]) for k in range(d["Y"])]),
    }
    return BuiltModel(
        circuit=c,
        bubble=[p + "k0", p + "x3", p + "y", p + "l1"],
        events=events,
        inputs=[p + "a"],
        outputs=[p + "b"],
        instruments=[inst],
        success=[p + "f"],
        outcomes=[p + "g"],
    )


def _merge_builders(m1, m2, rename2):
    b = CircuitBuilder()
    seen = set()
    for w in m1.circuit.wires:
        b.wire(w.id, w.dim)
        seen.add(w.id)
    for w in m2.circuit.wires:
        wid = rename2.get(w.id, w.id)
        if wid in seen:
            if wid in rename2.values():
                continue
            raise InputError(f"models share wire id {wid!r}; build them with distinct prefixes")
        b.wire(wid, w.dim)
    gids = {g.id for g in m1.circuit.gates}
    for g in m1.circuit.gates:
        b.gate(g.id, g.inputs, g.outputs, g.matrix)
    for g in m2.circuit.gates:
        if g.id in gids:
            raise InputError(f"models share gate id {g.id!r}; build them with distinct prefixes")
        b.gate(g.id, [rename2.get(x, x) for x in g.inputs], [rename2.get(x, x) for x in g.outputs], g.matrix)
    return b.build()


def compose_instruments(m1, m2, mode="sequential"):
    """Sequential or parallel composition of two built models.

    Sequential composition feeds the outputs of ``m1`` into the inputs of
    ``m2``; parallel composition places the two circuits side by side. The
    bubble is the union of both bubbles.
    """
    if mode == "sequential":
        if len(m1.outputs) != len(m2.inputs):
            raise InputError("sequential composition needs matching system wires")
        for wo, wi in zip(m1.outputs, m2.inputs):
            if m1.circuit.dim(wo) != m2.circuit.dim(wi):
                raise InputError(f"dimension mismatch between {wo!r} and {wi!r}")
        rename = dict(zip(m2.inputs, m1.outputs))
        c = _merge_builders(m1, m2, rename)
        inputs, outputs = list(m1.inputs), list(m2.outputs)
    elif mode == "parallel":
        c = _merge_builders(m1, m2, {})
        inputs, outputs = m1.inputs + m2.inputs, m1.outputs + m2.outputs
    else:
        raise InputError(f"unknown composition mode {mode!r}")
    events = {}
    for m in (m1, m2):
        for k, v in m.events.items():
            if k in events:
                raise InputError(f"duplicate event name {k!r}")
            events[k] = EventRef(v.wire, v.side, list(v.target))
    return BuiltModel(
        circuit=c,
        bubble=list(m1.bubble) + list(m2.bubble),
        events=events,
        inputs=inputs,
        outputs=outputs,
        instruments=list(m1.instruments) + list(m2.instruments),
        success=list(m1.success) + list(m2.success),
        outcomes=list(m1.outcomes) + list(m2.outcomes),
    )


def model_outcome_distribution(model, tol=DEFAULT_TOL, seed=0):
    """``p(outcomes | every success event = 0)`` as an array over semantic values.

    Only the success and outcome decompositions enter: summing a decomposition
    out of the linear probability rule is the same as omitting it.
    """
    ps = model.preferred_set(tol, seed)
    names = list(model.success) + list(model.outcomes)
    placed = []
    for name in names:
        e = ps.entry(model.events[name].wire, model.events[name].side)
        placed.append(PlacedDecomp(e.decomp, e.at, name))
    dist = history_distribution(model.circuit, placed)
    pos = {p.label: k for k, p in enumerate(dist.placed)}
    given = {pos[s]: model.events[s].values[0] for s in model.success}
    cond = conditional_distribution(dist, given).marginal([pos[o] for o in model.outcomes])
    # reorder axes to the listed outcome order, then map projector indices to values
    kept = sorted(pos[o] for o in model.outcomes)
    axes = [kept.index(pos[o]) for o in model.outcomes]
    table = np.transpose(cond.probs, axes)
    for ax, o in enumerate(model.outcomes):
        table = np.take(table, model.events[o].values, axis=ax)
    return table


def direct_outcome_distribution(instruments):
    """``Tr(C_{g_n}(... C_{g_1}(I/d) ...))`` for a sequence of instruments."""
    d = instruments[0].d_in
    states = {(): np.eye(d, dtype=np.complex128) / d}
    for inst in instruments:
        nxt = {}
        for key, rho in states.items():
            for i in range(inst.n_outcomes):
                nxt[key + (i,)] = inst.apply(i, rho)
        states = nxt
    shape = tuple(inst.n_outcomes for inst in instruments)
    out = np.zeros(shape)
    for key, rho in states.items():
        out[key] = float(np.real(np.trace(rho)))
    return out


# ---------------------------------------------------------------------------
# Worked models


@dataclass(eq=False)
class WorkedModel:
    """A circuit with named bubbles and named events.

    ``events`` maps a name to ``(bubble name, wire, side)``.
    """

    circuit: object
    bubbles: dict
    events: dict
    meta: dict = field(default_factory=dict)


def build_prepare_measure(u):
    """Stochastic preparation, qubit evolution ``u`` and a computational measurement.

    The system enters on ``s0``; a CNOT onto the pointer ``a0`` prepares it,
    ``u`` acts on ``s1 -> s2`` and a CNOT onto the pointer ``b0`` measures it.
    Each pointer is itself copied by CNOTs onto ``t`` and ``u`` ancillas
    before and after, so that bubble ``small = {a0, s1, s2, b1}`` gives the
    four-event model and bubble ``extended`` adds the pointer records.

    Events: ``z1`` (s1 IN), ``z2`` (s2 OUT), ``x1`` (a0 OUT), ``x2`` (b1 IN)
    in the small bubble; ``z1..z6`` in the extended bubble with ``z3`` (a0
    IN), ``z4`` (a1 OUT), ``z5`` (b0 IN), ``z6`` (b1 OUT).
    """
    u = as_matrix(u)
    if u.shape != (2, 2):
        raise InputError("prepare-measure needs a qubit unitary")
    cnot = shift_unitary(2)
    b = CircuitBuilder()
    b.wires(["a_pre", "t0", "s0", "t2", "b_pre", "u0", "u2",
             "a0", "t1", "s1", "a1", "a2", "t3", "s2",
             "b0", "u1", "s3", "b1", "b2", "u3"], 2)
    b.gate("e0", ["a_pre", "t0"], ["a0", "t1"], cnot)
    b.gate("prep", ["s0", "a0"], ["s1", "a1"], cnot)
    b.gate("e1", ["a1", "t2"], ["a2", "t3"], cnot)
    b.gate("evolve", ["s1"], ["s2"], u)
    b.gate("e2", ["b_pre", "u0"], ["b0", "u1"], cnot)
    b.gate("meas", ["s2", "b0"], ["s3", "b1"], cnot)
    b.gate("e3", ["b1", "u2"], ["b2", "u3"], cnot)
    c = b.build()
    small = ["a0", "s1", "s2", "b1"]
    extended = ["s1", "s2", "a0", "a1", "t0", "t3", "b0", "b1", "u0", "u3"]
    events = {
        "z1": ("small", "s1", IN), "z2": ("small", "s2", OUT),
        "x1": ("small", "a0", OUT), "x2": ("small", "b1", IN),
        "ext_z1": ("extended", "s1", IN), "ext_z2": ("extended", "s2", OUT),
        "ext_z3": ("extended", "a0", IN), "ext_z4": ("extended", "a1", OUT),
        "ext_z5": ("extended", "b0", IN), "ext_z6": ("extended", "b1", OUT),
    }
    return WorkedModel(c, {"small": small, "extended": extended}, events)


def build_wigners_friend():
    """Friend measures a qubit; Wigner undoes the measurement and measures in X.

    Gates: preparation CNOT ``(s0, a0) -> (s1, a1)``, Hadamard ``s1 -> s2``,
    friend CNOT ``(s2, f0) -> (s3, f1)``, Wigner's interaction
    ``(H (x) I) CNOT`` on ``(s3, f1) -> (s4, f2)`` and the record CNOT
    ``(s4, w0) -> (s5, w1)``. Bubble ``friend = {a0, s1, s2, f1}``; bubble
    ``wigner`` adds ``s4`` and ``w1``.
    """
    cnot = shift_unitary(2)
    b = CircuitBuilder()
    b.wires(["s0", "a0", "f0", "w0", "s1", "a1", "s2", "s3", "f1", "s4", "f2", "s5", "w1"], 2)
    b.gate("prep", ["s0", "a0"], ["s1", "a1"], cnot)
    b.gate("hadamard", ["s1"], ["s2"], HADAMARD)
    b.gate("friend", ["s2", "f0"], ["s3", "f1"], cnot)
    b.gate("undo", ["s3", "f1"], ["s4", "f2"], np.kron(HADAMARD, np.eye(2)) @ cnot)
    b.gate("record", ["s4", "w0"], ["s5", "w1"], cnot)
    c = b.build()
    friend = ["a0", "s1", "s2", "f1"]
    wigner = friend + ["s4", "w1"]
    events = {
        "friend_outcome": ("friend", "s2", OUT),
        "friend_outcome_after": ("wigner", "s2", OUT),
        "wigner_outcome": ("wigner", "s4", OUT),
    }
    return WorkedModel(c, {"friend": friend, "wigner": wigner}, events)


BOX_PSI = np.array([1, 1, 1], dtype=np.complex128) / np.sqrt(3.0)
BOX_PHI = np.array([1, 1, -1], dtype=np.complex128) / np.sqrt(3.0)


def three_box_triplets():
    """Trivial dynamics on a qutrit and the two triplets sharing first and last.

    Wires ``w0 -> w1 -> w2`` are joined by identity gates. ``D1`` sits on
    ``w0``, ``D2^0`` and ``D2^1`` on ``w1`` (IN and OUT), ``D3`` on ``w2``.

    Returns:
        ``(circuit, triplet0, triplet1)``.
    """
    b = CircuitBuilder()
    b.wires(["w0", "w1", "w2"], 3)
    b.gate("id0", ["w0"], ["w1"], np.eye(3))
    b.gate("id1", ["w1"], ["w2"], np.eye(3))
    c = b.build()
    eye = np.eye(3, dtype=np.complex128)

    def two(v):
        p = _rank1(v)
        return (p, eye - p)

    d1 = PlacedDecomp(two(BOX_PSI), Placement("w0", OUT), "D1")
    d20 = PlacedDecomp(two(eye[0]), Placement("w1", IN), "D2_0")
    d21 = PlacedDecomp(two(eye[1]), Placement("w1", OUT), "D2_1")
    d3 = PlacedDecomp(two(BOX_PHI), Placement("w2", IN), "D3")
    return c, [d1, d20, d3], [d1, d21, d3]


def projector_control(d, projector):
    """``|1><1| (x) ... ``: flips a qubit pointer when the system lies in ``projector``.

    Acts on system (first factor, dim ``d``) and qubit pointer (second).
    """
    p = as_matrix(projector)
    x = np.array([[0, 1], [1, 0]], dtype=np.complex128)
    return np.kron(p, x) + np.kron(np.eye(d) - p, np.eye(2))


def build_three_box(box):
    """Operational three-box experiment with the middle check on ``box``.

    A qutrit is prepared in the computational basis by a shift onto pointer
    ``p0``, rotated by ``F`` with ``F|0> = psi``, checked for ``box`` by a
    controlled flip of the qubit pointer ``q0 -> q1``, rotated by ``G`` with
    ``G phi = |0>`` and measured by a shift onto ``r0``. The check pointer is
    copied before (``q_pre -> v_pre``) and after (``q1 -> v0``) so both of
    its values are events. Bubble ``{p0, s1, q0, q1, s4, r1, v_pre, v1}``.

    Events (value 0 listed first): ``prep`` (s1 IN, 0 means psi),
    ``before`` (q0 IN), ``after`` (q1 OUT), ``final`` (s4 OUT, 0 means phi).
    The particle was found in ``box`` when ``before != after``.
    """
    if box not in (0, 1, 2):
        raise InputError("box must be 0, 1 or 2")
    f = complete_isometry(BOX_PSI.reshape(3, 1))
    g = dagger(complete_isometry(BOX_PHI.reshape(3, 1)))
    eye3 = np.eye(3, dtype=np.complex128)
    eye2 = np.eye(2, dtype=np.complex128)
    cnot = shift_unitary(2)
    b = CircuitBuilder()
    b.wires(["s0", "p0", "r0", "s1", "p1", "s2", "s3", "s4", "s5", "r1"], 3)
    b.wires(["q_pre", "v_pre", "v0", "q0", "v_rec", "q1", "q2", "v1"], 2)
    b.gate("prep", ["s0", "p0"], ["s1", "p1"], shift_unitary(3))
    b.gate("rotate_in", ["s1"], ["s2"], f)
    b.gate("copy_before", ["q_pre", "v_pre"], ["q0", "v_rec"], cnot)
    b.gate("check", ["s2", "q0"], ["s3", "q1"], projector_control(3, _rank1(eye3[box])))
    b.gate("copy_after", ["q1", "v0"], ["q2", "v1"], cnot)
    b.gate("rotate_out", ["s3"], ["s4"], g)
    b.gate("final", ["s4", "r0"], ["s5", "r1"], shift_unitary(3))
    c = b.build()
    comp3 = [_rank1(eye3[k]) for k in range(3)]
    comp2 = [_rank1(eye2[k]) for k in range(2)]
    events = {
        "prep": EventRef("s1", IN, comp3),
        "before": EventRef("q0", IN, comp2),
        "after": EventRef("q1", OUT, comp2),
        "final": EventRef("s4", OUT, comp3),
    }
    return BuiltModel(
        circuit=c,
        bubble=["p0", "s1", "q0", "q1", "s4", "r1", "v_pre", "v1"],
        events=events,
        inputs=["s0"],
        outputs=["s5"],
        instruments=[],
        success=[],
        outcomes=["prep", "before", "after", "final"],
    )


def three_box_conditionals(model, tol=DEFAULT_TOL, seed=0):
    """``p(found, not found | psi prepared, phi found)`` from a built three-box model."""
    joint = model_outcome_distribution(model, tol, seed)
    sel = joint[0, :, :, 0]
    found = sel[0, 1] + sel[1, 0]
    missed = sel[0, 0] + sel[1, 1]
    total = found + missed
    if total <= 1e-12:
        raise NumericDefect("post-selection has zero probability")
    return np.array([found, missed]) / total


def three_box_projection_postulate(box):
    """``p(check | psi prepared, phi found)`` from the projection postulate."""
    eye = np.eye(3, dtype=np.complex128)
    p = _rank1(eye[box])
    amps = [np.vdot(BOX_PHI, q @ BOX_PSI) for q in (p, eye - p)]
    w = np.array([abs(a) ** 2 for a in amps])
    return w / w.sum()


__all__ = [
    "HADAMARD",
    "shift_unitary",
    "fourier_matrix",
    "controlled_unitary",
    "ry",
    "Instrument",
    "random_instrument",
    "pvm_instrument",
    "Dilation",
    "dilate_instrument",
    "dilation_residual",
    "EventRef",
    "BuiltModel",
    "build_instrument_model",
    "compose_instruments",
    "model_outcome_distribution",
    "direct_outcome_distribution",
    "WorkedModel",
    "build_prepare_measure",
    "build_wigners_friend",
    "three_box_triplets",
    "projector_control",
    "build_three_box",
    "three_box_projection_postulate",
    "three_box_conditionals",
    "BOX_PSI",
    "BOX_PHI",
]
