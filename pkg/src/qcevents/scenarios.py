"""Scenario descriptions, classifiers and interference-structure reports.

A :class:`ScenarioSpec` attaches projective decompositions to named roles
(``Z``, ``W``, ``X``, ``A``, ...) of a circuit, names the auxiliary wire
groups (``G``, ``S``, ``F``, ``H``) that delimit its stages, and lists the
no-influence constraints its topology declares. Stage unitaries are read off
the circuit with :func:`qcevents.circuit.subcircuit_unitary`.

Stage layouts by kind::

    complementarity  U: [Z]+G -> [W]+S          V: S+[X] -> F+[A]
    wigner           U: [Z]+G -> [W]+S          V: S+[X1] -> F+[A1]
                     Wig: F+[A1, X2] -> H+[A2]
    pbr              V: [X]+F+[Y] -> [A]+S+[B]  U: [Z]+S -> [W]+G
    bell             roles only
    local_friendliness  sub-specs "bell", "wigner_a" and optionally "wigner_b"
"""
from dataclasses import dataclass, field
import itertools

import numpy as np

from qcevents.algebra import canonical_order, center, central_decomposition, span
from qcevents.circuit import (
    IN,
    OUT,
    CircuitBuilder,
    Placement,
    circuit_from_dict,
    circuit_to_dict,
    embed_on_wires,
    require_valid,
    subcircuit_unitary,
    _structured_gate,
)
from qcevents.errors import InputError, NumericDefect
from qcevents.histories import consistency_check, history_distribution
from qcevents.influence import (
    INFLUENCE_TOL,
    PlacedDecomp,
    circuit_quantum_influence,
    heisenberg_projectors,
    influence_graph,
    max_commutator,
)
from qcevents.lp import lhv_feasible
from qcevents.models import HADAMARD, controlled_unitary, ry, shift_unitary
from qcevents.preference import kernel
from qcevents.tensor import (
    DEFAULT_TOL,
    as_matrix,
    dagger,
    haar_random_unitary,
    matrix_from_json,
    matrix_to_json,
    partial_trace,
    permutation_matrix,
)

SCHEMA = "qcevents.scenario/1"
KINDS = ("complementarity", "wigner", "bell", "pbr", "local_friendliness")
ROLES = {
    "complementarity": ("Z", "W", "X", "A"),
    "wigner": ("Z", "W", "X1", "A1", "X2", "A2"),
    "bell": ("Z", "W", "X", "A", "Y", "B"),
    "pbr": ("Z", "W", "X", "A", "Y", "B"),
    "local_friendliness": (),
}
GROUPS = {
    "complementarity": ("G", "S", "F"),
    "wigner": ("G", "S", "F", "H"),
    "bell": (),
    "pbr": ("G", "S", "F"),
    "local_friendliness": (),
}
NO_REDUCTION_FOUND = "NO_REDUCTION_FOUND"
STRUCT_TOL = 1e-7
SETTING_MASS = 1e-12


@dataclass(eq=False)
class ScenarioSpec:
    """Roles, wire groups and declared constraints of one scenario.

    Attributes:
        kind: one of :data:`KINDS`.
        circuit: the circuit.
        roles: role name -> :class:`PlacedDecomp`.
        groups: group name (``G``, ``S``, ``F``, ``H``) -> list of wire ids.
        stage_gates: optional stage name -> gate ids, restricting a stage
            when the circuit continues past it on the same wires.
        constraints: pairs ``(src, dst)`` of roles with no quantum influence
            from ``src`` to ``dst``.
        subspecs: named sub-scenarios (local friendliness only).
        choices: default event choices for the PBR conditions.
    """

    kind: str
    circuit: object
    roles: dict = field(default_factory=dict)
    groups: dict = field(default_factory=dict)
    stage_gates: dict = field(default_factory=dict)
    constraints: list = field(default_factory=list)
    subspecs: dict = field(default_factory=dict)
    choices: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InputError(f"unknown scenario kind {self.kind!r}")
        roles = {}
        for name, p in self.roles.items():
            roles[name] = PlacedDecomp(p.decomp, p.at, name)
        self.roles = roles

    def wire(self, role):
        return self.role(role).at.wire

    def role(self, name):
        try:
            return self.roles[name]
        except KeyError:
            raise InputError(f"scenario lacks role {name!r}") from None

    def group(self, name):
        return list(self.groups.get(name, []))

    def dims(self, wires):
        return int(np.prod([self.circuit.dim(w) for w in wires], dtype=np.int64)) if wires else 1

    def validate(self):
        """Check roles, groups and stage boundaries for the declared kind."""
        if self.kind == "local_friendliness":
            if "bell" not in self.subspecs or not any(k.startswith("wigner") for k in self.subspecs):
                raise InputError("local friendliness needs a bell sub-spec and at least one wigner sub-spec")
            for sub in self.subspecs.values():
                sub.validate()
            return self
        require_valid(self.circuit)
        missing = [r for r in ROLES[self.kind] if r not in self.roles]
        if missing:
            raise InputError(f"{self.kind} spec lacks roles {missing}")
        for name, p in self.roles.items():
            d = self.circuit.dim(p.at.wire)
            for q in p.decomp:
                if q.shape != (d, d):
                    raise InputError(f"role {name!r} projectors do not match wire dimension {d}")
            total = sum(p.decomp)
            if float(np.max(np.abs(total - np.eye(d)))) > 1e-8:
                raise InputError(f"role {name!r} projectors do not sum to the identity")
        for src, dst in self.constraints:
            self.role(src)
            self.role(dst)
        for name, layout in stage_layouts(self).items():
            stage_unitary(self, name)
        return self


def stage_layouts(spec):
    """Stage name -> ``(inputs, outputs)`` wire lists for the scenario kind."""
    w = spec.wire
    g = spec.group
    if spec.kind == "complementarity":
        return {
            "U": ([w("Z")] + g("G"), [w("W")] + g("S")),
            "V": (g("S") + [w("X")], g("F") + [w("A")]),
        }
    if spec.kind == "wigner":
        return {
            "U": ([w("Z")] + g("G"), [w("W")] + g("S")),
            "V": (g("S") + [w("X1")], g("F") + [w("A1")]),
            "Wig": (g("F") + [w("A1"), w("X2")], g("H") + [w("A2")]),
        }
    if spec.kind == "pbr":
        return {
            "V": ([w("X")] + g("F") + [w("Y")], [w("A")] + g("S") + [w("B")]),
            "U": ([w("Z")] + g("S"), [w("W")] + g("G")),
        }
    return {}


def stage_unitary(spec, name):
    ins, outs = stage_layouts(spec)[name]
    gates = spec.stage_gates.get(name)
    return subcircuit_unitary(spec.circuit, ins, outs, None if gates is None else set(gates))


# ---------------------------------------------------------------------------
# JSON


def _placed_to_dict(p):
    return {"wire": p.at.wire, "side": p.at.side, "projectors": [matrix_to_json(q) for q in p.decomp]}


def _placed_from_dict(name, data, c):
    try:
        wire, side = data["wire"], data.get("side", IN)
        d = c.dim(wire)
        projs = tuple(matrix_from_json(m, d, d) for m in data["projectors"])
    except (KeyError, TypeError) as exc:
        raise InputError(f"malformed role {name!r}") from exc
    return PlacedDecomp(projs, Placement(wire, side), name)


def spec_to_dict(spec):
    out = {
        "schema": SCHEMA,
        "kind": spec.kind,
        "constraints": [list(x) for x in spec.constraints],
        "groups": {k: list(v) for k, v in spec.groups.items()},
        "stage_gates": {k: list(v) for k, v in spec.stage_gates.items()},
        "choices": dict(spec.choices),
        "subspecs": {k: spec_to_dict(v) for k, v in spec.subspecs.items()},
    }
    if spec.circuit is not None:
        out["circuit"] = circuit_to_dict(spec.circuit)
        out["roles"] = {k: _placed_to_dict(v) for k, v in spec.roles.items()}
    return out


def spec_from_dict(data):
    if not isinstance(data, dict) or "kind" not in data:
        raise InputError("scenario spec must be an object with a 'kind'")
    subs = {k: spec_from_dict(v) for k, v in data.get("subspecs", {}).items()}
    circuit = circuit_from_dict(data["circuit"]) if "circuit" in data else None
    if circuit is None and data["kind"] != "local_friendliness":
        raise InputError("scenario spec lacks a circuit")
    roles = {}
    if circuit is not None:
        roles = {k: _placed_from_dict(k, v, circuit) for k, v in data.get("roles", {}).items()}
    return ScenarioSpec(
        kind=data["kind"],
        circuit=circuit,
        roles=roles,
        groups={k: list(v) for k, v in data.get("groups", {}).items()},
        stage_gates={k: list(v) for k, v in data.get("stage_gates", {}).items()},
        constraints=[tuple(x) for x in data.get("constraints", [])],
        subspecs=subs,
        choices={k: int(v) for k, v in data.get("choices", {}).items()},
    )


# ---------------------------------------------------------------------------
# Shared helpers


def _pd(projs, wire, side, label=""):
    return PlacedDecomp(tuple(as_matrix(p) for p in projs), Placement(wire, side), label)


def _comp(d):
    return [np.diag(np.eye(d)[k]).astype(np.complex128) for k in range(d)]


def _rank1(v):
    v = np.asarray(v, dtype=np.complex128)
    return np.outer(v, np.conj(v))


def _comm_norm(a, b):
    return float(np.max(np.abs(a @ b - b @ a))) if a.size else 0.0


def _role_heis(spec, name):
    return heisenberg_projectors(spec.circuit, spec.role(name))


def _interferes(left, right, tol):
    if not left or not right:
        return False, 0.0
    n = float(np.max(max_commutator(left, right)))
    return n > tol, n


def _role_graph(spec, names, tol=INFLUENCE_TOL):
    placed = [spec.role(n) for n in names]
    g = influence_graph(spec.circuit, placed, tol)
    index = {n.label: k for k, n in enumerate(g.nodes)}
    return g, index


def _edge(g, index, src, dst):
    a, b = index[src], index[dst]
    return a < b and g.has_edge(a, b)


def check_constraints(spec, tol=INFLUENCE_TOL):
    """Raise :class:`InputError` if a declared no-influence constraint fails."""
    bad = []
    for src, dst in spec.constraints:
        if circuit_quantum_influence(spec.circuit, spec.wire(src), spec.wire(dst), tol):
            bad.append(f"{src}->{dst}")
    if bad:
        raise InputError(f"declared constraints violated by the circuit: {', '.join(bad)}")


# ---------------------------------------------------------------------------
# Complementarity and Wigner's friend


def complementarity_operators(spec, z="Z", w="W", x="X", a="A", stage_u="U", stage_v="V"):
    """``rho[i][j]`` and ``sigma[a][x]`` on ``S``.

    ``rho^{ij} = Tr_W(U (P_Z^i (x) I_G) U^dagger (P_W^j (x) I_S))`` and
    ``sigma^{ax} = Tr_X(V^dagger (I_F (x) P_A^a) V (I_S (x) P_X^x))``.
    """
    u = stage_unitary(spec, stage_u)
    v = stage_unitary(spec, stage_v)
    d_w, d_s = spec.circuit.dim(spec.wire(w)), spec.dims(spec.group("S"))
    d_g = spec.dims(spec.group("G"))
    d_x, d_f = spec.circuit.dim(spec.wire(x)), spec.dims(spec.group("F"))
    rho = []
    for pz in spec.role(z).decomp:
        xi = u @ np.kron(pz, np.eye(d_g)) @ dagger(u)
        rho.append([partial_trace(xi @ np.kron(pw, np.eye(d_s)), (d_w, d_s), [1]) for pw in spec.role(w).decomp])
    sigma = []
    for pa in spec.role(a).decomp:
        ya = dagger(v) @ np.kron(np.eye(d_f), pa) @ v
        sigma.append([partial_trace(ya @ np.kron(np.eye(d_s), px), (d_s, d_x), [0]) for px in spec.role(x).decomp])
    return rho, sigma


def _scan_commutators(rho, sigma, tol):
    best, wit = 0.0, None
    for i, row in enumerate(rho):
        for j, r in enumerate(row):
            for aa, srow in enumerate(sigma):
                for xx, s in enumerate(srow):
                    n = _comm_norm(r, s)
                    if n > best:
                        best, wit = n, (i, j, aa, xx)
    scale = max([float(np.linalg.norm(r, 2)) for row in rho for r in row] + [0.0])
    scale *= max([float(np.linalg.norm(s, 2)) for row in sigma for s in row] + [0.0])
    return best, wit, max(scale, 1.0)


@dataclass
class ComplementarityReport:
    verdict: bool
    witness: tuple
    max_commutator: float
    influence_edge: bool
    edge_norm: float

    def to_dict(self):
        return {
            "kind": "complementarity",
            "verdict": self.verdict,
            "witness": None if self.witness is None else dict(zip("ijax", self.witness)),
            "max_commutator": self.max_commutator,
            "influence_edge": self.influence_edge,
            "edge_norm": self.edge_norm,
        }


def _complementarity(spec, tol, z, w, x, a, stage_u, stage_v):
    rho, sigma = complementarity_operators(spec, z, w, x, a, stage_u, stage_v)
    best, wit, scale = _scan_commutators(rho, sigma, tol)
    verdict = best > tol * scale
    edge, norm = _interferes(_role_heis(spec, z), _role_heis(spec, a), INFLUENCE_TOL)
    return ComplementarityReport(bool(verdict), wit if verdict else None, best, bool(edge), norm)


def classify_complementarity(spec, tol=DEFAULT_TOL):
    """True iff some ``[rho^{ij}, sigma^{ax}]`` is nonzero.

    On a true verdict the interference influence ``{P_Z} -> {P_A}`` must be
    present; its absence raises :class:`NumericDefect`.
    """
    if spec.kind != "complementarity":
        raise InputError("expected a complementarity spec")
    spec.validate()
    rep = _complementarity(spec, tol, "Z", "W", "X", "A", "U", "V")
    if rep.verdict and not rep.influence_edge:
        raise NumericDefect("complementarity without an interference influence from Z to A")
    return rep


def wigner_second_commutator(spec, tol=DEFAULT_TOL):
    """Largest ``[I_F (x) P_A1, Tr_X2(Wig^dagger (I_H (x) P_A2) Wig (I_FA1 (x) P_X2))]``."""
    wig = stage_unitary(spec, "Wig")
    d_f = spec.dims(spec.group("F"))
    d_h = spec.dims(spec.group("H"))
    d_a1 = spec.circuit.dim(spec.wire("A1"))
    d_x2 = spec.circuit.dim(spec.wire("X2"))
    best, wit = 0.0, None
    for a2, pa2 in enumerate(spec.role("A2").decomp):
        q = dagger(wig) @ np.kron(np.eye(d_h), pa2) @ wig
        for x2, px2 in enumerate(spec.role("X2").decomp):
            tau = partial_trace(q @ np.kron(np.eye(d_f * d_a1), px2), (d_f * d_a1, d_x2), [0])
            for a1, pa1 in enumerate(spec.role("A1").decomp):
                n = _comm_norm(np.kron(np.eye(d_f), pa1), tau)
                if n > best:
                    best, wit = n, (a1, a2, x2)
    return best, wit


@dataclass
class WignerReport:
    verdict: bool
    first: ComplementarityReport
    second_commutator: float
    second_witness: tuple
    chain: bool
    edges: dict

    def to_dict(self):
        return {
            "kind": "wigner",
            "verdict": self.verdict,
            "first": self.first.to_dict(),
            "second_commutator": self.second_commutator,
            "second_witness": None if self.second_witness is None else dict(zip(["a1", "a2", "x2"], self.second_witness)),
            "chain": self.chain,
            "edges": self.edges,
        }


def classify_wigner(spec, tol=DEFAULT_TOL):
    """Both complementarity conditions; a true verdict must come with the chain Z -> A1 -> A2."""
    if spec.kind != "wigner":
        raise InputError("expected a wigner spec")
    spec.validate()
    first = _complementarity(spec, tol, "Z", "W", "X1", "A1", "U", "V")
    second, wit = wigner_second_commutator(spec, tol)
    verdict = first.verdict and second > tol
    g, idx = _role_graph(spec, ["Z", "A1", "A2"])
    edges = {"Z->A1": _edge(g, idx, "Z", "A1"), "A1->A2": _edge(g, idx, "A1", "A2")}
    chain = edges["Z->A1"] and edges["A1->A2"]
    if verdict and not chain:
        raise NumericDefect("Wigner's friend scenario without the interference chain")
    return WignerReport(bool(verdict), first, second, wit if second > tol else None, chain, edges)


# ---------------------------------------------------------------------------
# Bell


def bell_joint(spec):
    """``p[a, x, b, y, i, j]`` from the linear probability rule over the six roles."""
    names = ["Z", "W", "X", "A", "Y", "B"]
    dist = history_distribution(spec.circuit, [spec.role(n) for n in names])
    pos = [p.label for p in dist.placed]
    order = [pos.index(n) for n in ["A", "X", "B", "Y", "Z", "W"]]
    return np.transpose(dist.probs, order)


def bell_conditionals(joint, i, j):
    """``(p(a, b | x, y, i, j), p(x, y | i, j))`` or ``None`` when ``p(ij)`` vanishes."""
    sub = joint[:, :, :, :, i, j]  # a x b y
    pij = float(sub.sum())
    if pij <= SETTING_MASS:
        return None
    sub = sub / pij
    pxy = sub.sum(axis=(0, 2))  # x y
    table = np.zeros((sub.shape[0], sub.shape[2], sub.shape[1], sub.shape[3]))
    for x in range(sub.shape[1]):
        for y in range(sub.shape[3]):
            if pxy[x, y] >= SETTING_MASS:
                table[:, :, x, y] = sub[:, x, :, y] / pxy[x, y]
            else:
                table[:, :, x, y] = 1.0 / (sub.shape[0] * sub.shape[2])
    return table, pxy


@dataclass
class BellReport:
    verdict: bool
    per_ij: list
    fork: bool
    edges: dict
    reduction: object
    chsh: float

    def to_dict(self):
        return {
            "kind": "bell",
            "verdict": self.verdict,
            "chsh": self.chsh,
            "fork": self.fork,
            "edges": self.edges,
            "per_ij": self.per_ij,
            "reduction": self.reduction if isinstance(self.reduction, str) or self.reduction is None else self.reduction.to_dict(),
        }


def classify_bell(spec, ij=None, tol=DEFAULT_TOL, witness=None, search=True, seed=0):
    """Bell nonlocality of ``p(ab | xy, ij)`` for fixed ``(i, j)``.

    Args:
        ij: the conditioning pair; ``None`` scans every pair with nonzero
            probability and reports nonlocal if any pair is.
        witness: optional :class:`ReductionWitness`; on a nonlocal verdict a
            witness that verifies is a contradiction and raises
            :class:`NumericDefect`.
        search: run :func:`search_reduction` on a nonlocal verdict.
    """
    if spec.kind not in ("bell",):
        raise InputError("expected a bell spec")
    spec.validate()
    check_constraints(spec)
    joint = bell_joint(spec)
    pairs = [ij] if ij is not None else [(i, j) for i in range(joint.shape[4]) for j in range(joint.shape[5])]
    per = []
    verdict = False
    chsh = None
    for i, j in pairs:
        cond = bell_conditionals(joint, i, j)
        if cond is None:
            continue
        table, pxy = cond
        res = lhv_feasible(table, setting_weights=pxy)
        entry = {"i": int(i), "j": int(j), "p_ij": float(joint[..., i, j].sum()), "lhv": res.to_dict()}
        per.append(entry)
        if res.chsh is not None:
            chsh = res.chsh if chsh is None else max(chsh, res.chsh)
        if not res.feasible:
            verdict = True
    g, idx = _role_graph(spec, ["Z", "W", "X", "A", "Y", "B"])
    edges = {"Z->A": _edge(g, idx, "Z", "A"), "Z->B": _edge(g, idx, "Z", "B")}
    fork = edges["Z->A"] and edges["Z->B"]
    reduction = None
    if verdict:
        if not fork:
            raise NumericDefect("Bell nonlocality without an interference fork")
        if witness is not None and verify_reduction(spec, witness, "fork").ok:
            raise NumericDefect("Bell nonlocality with a verified fork reduction")
        if search:
            reduction = search_reduction(spec, "fork", seed=seed)
            if reduction != NO_REDUCTION_FOUND:
                raise NumericDefect("Bell nonlocality with a verified fork reduction")
    return BellReport(bool(verdict), per, bool(fork), edges, reduction, chsh)


# ---------------------------------------------------------------------------
# PBR


def pbr_operators(spec):
    """``rho[a][x]``, ``sigma[b][y]`` and ``eps[i][j]`` on ``S``, unnormalised."""
    v = stage_unitary(spec, "V")
    u = stage_unitary(spec, "U")
    c = spec.circuit
    d_x, d_y = c.dim(spec.wire("X")), c.dim(spec.wire("Y"))
    d_a, d_b = c.dim(spec.wire("A")), c.dim(spec.wire("B"))
    d_f, d_s, d_g = spec.dims(spec.group("F")), spec.dims(spec.group("S")), spec.dims(spec.group("G"))
    d_z = c.dim(spec.wire("Z"))
    rho = []
    for pa in spec.role("A").decomp:
        left = np.kron(pa, np.eye(d_s * d_b))
        rho.append([
            partial_trace(left @ v @ np.kron(px, np.eye(d_f * d_y)) @ dagger(v), (d_a, d_s, d_b), [1])
            for px in spec.role("X").decomp
        ])
    sigma = []
    for pb in spec.role("B").decomp:
        left = np.kron(np.eye(d_a * d_s), pb)
        sigma.append([
            partial_trace(left @ v @ np.kron(np.eye(d_x * d_f), py) @ dagger(v), (d_a, d_s, d_b), [1])
            for py in spec.role("Y").decomp
        ])
    eps = []
    for pz in spec.role("Z").decomp:
        eps.append([
            partial_trace(np.kron(pz, np.eye(d_s)) @ dagger(u) @ np.kron(pw, np.eye(d_g)) @ u, (d_z, d_s), [1]) / d_z
            for pw in spec.role("W").decomp
        ])
    return rho, sigma, eps


def _opnorm(m):
    return float(np.linalg.norm(m, 2))


def pbr_conditions(rho, sigma, eps, ch, tol=DEFAULT_TOL):
    """Evaluate the vanishing-trace and nonvanishing-product conditions for one choice.

    ``ch`` has keys ``a, x, a2, x2, b, y, b2, y2``.
    """
    r, r2 = rho[ch["a"]][ch["x"]], rho[ch["a2"]][ch["x2"]]
    s, s2 = sigma[ch["b"]][ch["y"]], sigma[ch["b2"]][ch["y2"]]
    traces_ok = True
    worst = 0.0
    per = []
    for i, row in enumerate(eps):
        for j, e in enumerate(row):
            vals = []
            for rr in (r, r2):
                for ss in (s, s2):
                    scale = max(_opnorm(e) * _opnorm(rr) * _opnorm(ss), 1e-300)
                    vals.append(abs(complex(np.trace(e @ rr @ ss))) / scale)
            m = min(vals)
            per.append({"i": i, "j": j, "min_relative_trace": m})
            worst = max(worst, m)
            if m > tol:
                traces_ok = False
    prod = r @ s @ r2 @ s2
    scale = max(_opnorm(r) * _opnorm(s) * _opnorm(r2) * _opnorm(s2), 1e-300)
    raw = _opnorm(prod)
    rel = raw / scale
    return {
        "traces_ok": traces_ok,
        "worst_relative_trace": worst,
        "traces": per,
        "product_norm": raw,
        "product_relative_norm": rel,
        "product_ok": rel > tol,
    }


@dataclass
class PBRReport:
    verdict: bool
    choice: dict
    conditions: dict
    commutator: float
    collider: bool
    edges: dict
    reduction: object

    def to_dict(self):
        return {
            "kind": "pbr",
            "verdict": self.verdict,
            "choice": self.choice,
            "conditions": self.conditions,
            "rho_sigma_commutator": self.commutator,
            "collider": self.collider,
            "edges": self.edges,
            "reduction": self.reduction if isinstance(self.reduction, str) or self.reduction is None else self.reduction.to_dict(),
        }


CHOICE_KEYS = ("a", "x", "a2", "x2", "b", "y", "b2", "y2")


def classify_pbr(spec, choices=None, tol=DEFAULT_TOL, search=True, seed=0):
    """PBR conditions for the given event choices.

    ``choices`` maps ``a, x, a2, x2, b, y, b2, y2`` to event indices; without
    it the stored choice of the scenario is used, and failing that every choice is
    scanned and the first passing one reported.
    """
    if spec.kind != "pbr":
        raise InputError("expected a pbr spec")
    spec.validate()
    check_constraints(spec)
    rho, sigma, eps = pbr_operators(spec)
    comm = max(_comm_norm(r, s) for row in rho for r in row for srow in sigma for s in srow)
    choices = choices or (spec.choices if spec.choices else None)
    if choices is not None:
        missing = [k for k in CHOICE_KEYS if k not in choices]
        if missing:
            raise InputError(f"PBR choices lack {missing}")
        cands = [{k: int(choices[k]) for k in CHOICE_KEYS}]
    else:
        na, nx = len(rho), len(rho[0])
        nb, ny = len(sigma), len(sigma[0])
        cands = [
            dict(zip(CHOICE_KEYS, t))
            for t in itertools.product(range(na), range(nx), range(na), range(nx), range(nb), range(ny), range(nb), range(ny))
        ]
    verdict = False
    chosen, cond = cands[0], None
    for ch in cands:
        cnd = pbr_conditions(rho, sigma, eps, ch, tol)
        if cond is None:
            chosen, cond = ch, cnd
        if cnd["traces_ok"] and cnd["product_ok"]:
            verdict = True
            chosen, cond = ch, cnd
            break
    g, idx = _role_graph(spec, ["X", "Y", "W"])
    edges = {"X->W": _edge(g, idx, "X", "W"), "Y->W": _edge(g, idx, "Y", "W")}
    collider = edges["X->W"] and edges["Y->W"]
    reduction = None
    if verdict:
        if not collider:
            raise NumericDefect("PBR scenario without an interference collider")
        if search:
            reduction = search_reduction(spec, "collider", seed=seed)
            if reduction != NO_REDUCTION_FOUND:
                raise NumericDefect("PBR scenario with a verified collider reduction")
    return PBRReport(bool(verdict), chosen, cond, comm, bool(collider), edges, reduction)


# ---------------------------------------------------------------------------
# Local friendliness


@dataclass
class LFReport:
    verdict: bool
    bell: BellReport
    wigner: dict
    chains: list

    def to_dict(self):
        return {
            "kind": "local_friendliness",
            "verdict": self.verdict,
            "bell": self.bell.to_dict(),
            "wigner": {k: v.to_dict() for k, v in self.wigner.items()},
            "chains": self.chains,
            "fork": self.bell.fork,
        }


def classify_local_friendliness(spec, tol=DEFAULT_TOL, seed=0):
    """Bell nonlocality of the designated sub-spec and a Wigner scenario on some side."""
    if spec.kind != "local_friendliness":
        raise InputError("expected a local_friendliness spec")
    spec.validate()
    bell = classify_bell(spec.subspecs["bell"], tol=tol, seed=seed)
    wig = {k: classify_wigner(v, tol) for k, v in sorted(spec.subspecs.items()) if k.startswith("wigner")}
    chains = [k for k, v in wig.items() if v.chain]
    verdict = bell.verdict and any(v.verdict for v in wig.values())
    if verdict and not (bell.fork and chains):
        raise NumericDefect("local friendliness scenario without a fork and a chain")
    return LFReport(bool(verdict), bell, wig, chains)


def classify(spec, tol=DEFAULT_TOL, seed=0):
    """Dispatch on ``spec.kind``."""
    if spec.kind == "complementarity":
        return classify_complementarity(spec, tol)
    if spec.kind == "wigner":
        return classify_wigner(spec, tol)
    if spec.kind == "bell":
        return classify_bell(spec, tol=tol, seed=seed)
    if spec.kind == "pbr":
        return classify_pbr(spec, tol=tol, seed=seed)
    return classify_local_friendliness(spec, tol, seed)


# ---------------------------------------------------------------------------
# Reductions


@dataclass(eq=False)
class ReductionWitness:
    """Factor decompositions of ``Z`` and ``W`` with their partition maps.

    ``z_partition[(m, n)]`` is the ``i`` with ``P_Z^i`` containing
    ``P_Z(A)^m P_Z(B)^n``; ``w_partition[(o, r)]`` likewise. Either map may
    be ``None`` and is then derived, with vanishing products sent to 0.
    """

    z_a: list
    z_b: list
    w_a: list
    w_b: list
    z_partition: dict = None
    w_partition: dict = None

    def to_dict(self):
        def part(p):
            return None if p is None else [[int(k[0]), int(k[1]), int(v)] for k, v in sorted(p.items())]

        return {
            "z_a": [matrix_to_json(p) for p in self.z_a],
            "z_b": [matrix_to_json(p) for p in self.z_b],
            "w_a": [matrix_to_json(p) for p in self.w_a],
            "w_b": [matrix_to_json(p) for p in self.w_b],
            "z_partition": part(self.z_partition),
            "w_partition": part(self.w_partition),
        }


@dataclass
class ReductionCheck:
    ok: bool
    failed: list
    partitions: dict

    def to_dict(self):
        return {"ok": self.ok, "failed": list(self.failed)}


def derive_partition(target, left, right, tol=STRUCT_TOL):
    """Assign each product ``left[m] right[n]`` to the ``target`` projector containing it.

    Vanishing products go to 0. Returns ``None`` when some product lies in no
    single target projector.
    """
    part = {}
    for m, p in enumerate(left):
        for n, q in enumerate(right):
            prod = p @ q
            if float(np.max(np.abs(prod))) <= tol:
                part[(m, n)] = 0
                continue
            hit = None
            for i, t in enumerate(target):
                if float(np.max(np.abs(t @ prod - prod))) <= tol:
                    hit = i
                    break
            if hit is None:
                return None
            part[(m, n)] = hit
    return part


def _check_partition(target, left, right, part, tol):
    if part is None:
        return False
    for key in itertools.product(range(len(left)), range(len(right))):
        if key not in part or not 0 <= int(part[key]) < len(target):
            raise InputError("partition map must be total over the factor events and name target events")
    for i, t in enumerate(target):
        acc = np.zeros_like(t)
        for (m, n), k in part.items():
            if k == i:
                acc = acc + left[m] @ right[n]
        if float(np.max(np.abs(acc - t))) > tol:
            return False
    return True


def _commute_all(left, right, tol):
    return all(_comm_norm(p, q) <= tol for p in left for q in right)


def verify_reduction(spec, w, mode="fork", tol=INFLUENCE_TOL):
    """Check a candidate reduction of a fork (Bell) or collider (PBR).

    Conditions: the factor decompositions commute pairwise, rebuild ``P_Z``
    and ``P_W`` through the partition maps, and satisfy the no-interference
    side conditions of the mode. Returns a :class:`ReductionCheck` naming
    every failed condition.
    """
    if mode not in ("fork", "collider"):
        raise InputError("mode must be 'fork' or 'collider'")
    c = spec.circuit
    zr, wr = spec.role("Z"), spec.role("W")
    dz, dw = c.dim(zr.at.wire), c.dim(wr.at.wire)
    for name, dec, d in (("z_a", w.z_a, dz), ("z_b", w.z_b, dz), ("w_a", w.w_a, dw), ("w_b", w.w_b, dw)):
        if not dec or any(as_matrix(p).shape != (d, d) for p in dec):
            raise InputError(f"witness decomposition {name} does not match its wire")
    z_a = [as_matrix(p) for p in w.z_a]
    z_b = [as_matrix(p) for p in w.z_b]
    w_a = [as_matrix(p) for p in w.w_a]
    w_b = [as_matrix(p) for p in w.w_b]
    failed = []
    if not _commute_all(z_a, z_b, STRUCT_TOL):
        failed.append("commute_z")
    if not _commute_all(w_a, w_b, STRUCT_TOL):
        failed.append("commute_w")
    zp = w.z_partition if w.z_partition is not None else derive_partition(list(zr.decomp), z_a, z_b)
    wp = w.w_partition if w.w_partition is not None else derive_partition(list(wr.decomp), w_a, w_b)
    if not _check_partition(list(zr.decomp), z_a, z_b, zp, STRUCT_TOL):
        failed.append("rebuild_z")
    if not _check_partition(list(wr.decomp), w_a, w_b, wp, STRUCT_TOL):
        failed.append("rebuild_w")

    def heis(dec, at):
        return [embed_on_wires(c, p, [at.wire]) for p in dec]

    hz_a, hz_b = heis(z_a, zr.at), heis(z_b, zr.at)
    hw_a, hw_b = heis(w_a, wr.at), heis(w_b, wr.at)
    if mode == "fork":
        checks = [
            ("za_to_wb", hz_a, hw_b),
            ("za_to_b", hz_a, _role_heis(spec, "B")),
            ("zb_to_wa", hz_b, hw_a),
            ("zb_to_a", hz_b, _role_heis(spec, "A")),
        ]
    else:
        checks = [
            ("x_to_wb", _role_heis(spec, "X"), hw_b),
            ("za_to_wb", hz_a, hw_b),
            ("y_to_wa", _role_heis(spec, "Y"), hw_a),
            ("zb_to_wa", hz_b, hw_a),
        ]
    for name, left, right in checks:
        if _interferes(left, right, tol)[0]:
            failed.append(name)
    return ReductionCheck(not failed, failed, {"z": zp, "w": wp})


def commuting_local_algebra(c, at, heis_ops, local_ops, tol=DEFAULT_TOL):
    """Operators ``M`` on the wire of ``at`` whose embedding commutes with
    every ``heis_ops`` element and which commute with every ``local_ops``
    element. The solution set is a unital *-algebra."""
    d = c.dim(at.wire)
    units = []
    embs = []
    for a in range(d):
        for b in range(d):
            e = np.zeros((d, d), dtype=np.complex128)
            e[a, b] = 1.0
            units.append(e)
            embs.append(embed_on_wires(c, e, [at.wire]))
    rows = []
    for q in heis_ops:
        rows.append(np.stack([(m @ q - q @ m).reshape(-1) for m in embs], axis=1))
    for q in local_ops:
        rows.append(np.stack([(m @ q - q @ m).reshape(-1) for m in units], axis=1))
    if not rows:
        return [np.eye(d, dtype=np.complex128)]
    ns = kernel(np.vstack(rows), tol)
    return [ns[:, k].reshape(d, d) for k in range(ns.shape[1])]


def _central_projectors(elems, d, tol, seed):
    if not elems:
        return [np.eye(d, dtype=np.complex128)]
    alg = span(elems, tol)
    return canonical_order(central_decomposition(center(alg, tol), tol, seed))


def _candidate_witnesses(spec, mode, tol, seed):
    c = spec.circuit
    zr, wr = spec.role("Z"), spec.role("W")
    dz, dw = c.dim(zr.at.wire), c.dim(wr.at.wire)
    pz, pw = list(zr.decomp), list(wr.decomp)
    iz, iw = [np.eye(dz, dtype=np.complex128)], [np.eye(dw, dtype=np.complex128)]
    # trivial splits
    for za, zb in ((pz, iz), (iz, pz)):
        for wa, wb in ((pw, iw), (iw, pw)):
            yield ReductionWitness(za, zb, wa, wb)
    # algebra-derived splits
    if mode == "fork":
        z_a = _central_projectors(commuting_local_algebra(c, zr.at, _role_heis(spec, "B"), pz, tol), dz, tol, seed)
        z_b = _central_projectors(commuting_local_algebra(c, zr.at, _role_heis(spec, "A"), pz, tol), dz, tol, seed)
        z_opts = [(z_a, z_b), (pz, iz), (iz, pz)]
    else:
        z_opts = [(pz, iz), (iz, pz)]
    for za, zb in z_opts:
        hz_a = [embed_on_wires(c, p, [zr.at.wire]) for p in za]
        hz_b = [embed_on_wires(c, p, [zr.at.wire]) for p in zb]
        extra_b = _role_heis(spec, "X") if mode == "collider" else []
        extra_a = _role_heis(spec, "Y") if mode == "collider" else []
        w_b = _central_projectors(commuting_local_algebra(c, wr.at, hz_a + extra_b, pw, tol), dw, tol, seed)
        w_a = _central_projectors(commuting_local_algebra(c, wr.at, hz_b + extra_a, pw, tol), dw, tol, seed)
        yield ReductionWitness(za, zb, w_a, w_b)
        yield ReductionWitness(za, zb, w_a, pw)
        yield ReductionWitness(za, zb, pw, w_b)


def search_reduction(spec, mode="fork", tol=INFLUENCE_TOL, seed=0):
    """Heuristic search for a reduction witness.

    Candidates: the four trivial splits, then factor decompositions read off
    the centres of the largest algebras on ``Z`` and ``W`` that avoid the
    forbidden interference. Returns the first candidate that passes
    :func:`verify_reduction`, else :data:`NO_REDUCTION_FOUND`. A negative
    answer is not a proof that no reduction exists.
    """
    if mode not in ("fork", "collider"):
        raise InputError("mode must be 'fork' or 'collider'")
    for cand in _candidate_witnesses(spec, mode, DEFAULT_TOL, seed):
        chk = verify_reduction(spec, cand, mode, tol)
        if chk.ok:
            return ReductionWitness(cand.z_a, cand.z_b, cand.w_a, cand.w_b, chk.partitions["z"], chk.partitions["w"])
    return NO_REDUCTION_FOUND


# ---------------------------------------------------------------------------
# Structure labels


@dataclass
class StructureLabel:
    chain: bool
    fork: bool
    collider: bool
    participants: dict
    irreducibility: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            "chain": self.chain,
            "fork": self.fork,
            "collider": self.collider,
            "participants": self.participants,
            "irreducibility": self.irreducibility,
        }


def detect_structure(g, roles):
    """Flag chain, fork and collider patterns in an influence graph.

    Args:
        g: :class:`InfluenceGraph`.
        roles: role name -> node index in ``g``. Recognised names: ``Z``,
            ``A1``, ``A2`` (chain), ``Z``, ``A``, ``B`` (fork), ``X``, ``Y``,
            ``W`` (collider). Patterns whose roles are absent are not flagged.
    """
    for name, k in roles.items():
        if not 0 <= k < len(g.nodes):
            raise InputError(f"role {name!r} names no graph node")

    def edge(a, b):
        if a not in roles or b not in roles:
            return False
        i, j = roles[a], roles[b]
        return i < j and g.has_edge(i, j)

    chain = edge("Z", "A1") and edge("A1", "A2")
    fork = edge("Z", "A") and edge("Z", "B")
    collider = edge("X", "W") and edge("Y", "W")
    parts = {}
    if chain:
        parts["chain"] = ["Z", "A1", "A2"]
    if fork:
        parts["fork"] = ["A", "Z", "B"]
    if collider:
        parts["collider"] = ["X", "W", "Y"]
    return StructureLabel(bool(chain), bool(fork), bool(collider), parts)


def spec_structure(spec, search=True, seed=0):
    """Influence graph over the scenario roles, labelled, with reduction status."""
    if spec.kind == "local_friendliness":
        raise InputError("structure is reported per sub-spec for local friendliness")
    names = sorted(spec.roles)
    g, idx = _role_graph(spec, names)
    label = detect_structure(g, idx)
    if search and label.fork and spec.kind == "bell":
        r = search_reduction(spec, "fork", seed=seed)
        label.irreducibility["fork"] = "witnessed_reducible" if r != NO_REDUCTION_FOUND else "no_reduction_found"
    if search and label.collider and spec.kind == "pbr":
        r = search_reduction(spec, "collider", seed=seed)
        label.irreducibility["collider"] = "witnessed_reducible" if r != NO_REDUCTION_FOUND else "no_reduction_found"
    return label, g


# ---------------------------------------------------------------------------
# Three boxes


@dataclass
class ThreeBoxReport:
    triplets_consistent: bool
    marginals_embedded: bool
    joint_valid: bool
    joint_min: float
    certainties_co_occur: bool
    co_occurrences: list
    joint_co_occur: bool
    chains: list
    blocked: bool

    def to_dict(self):
        return {
            "triplets_consistent": self.triplets_consistent,
            "marginals_embedded": self.marginals_embedded,
            "joint_valid": self.joint_valid,
            "joint_min": self.joint_min,
            "certainties_co_occur": self.certainties_co_occur,
            "co_occurrences": self.co_occurrences,
            "joint_co_occur": self.joint_co_occur,
            "chains": self.chains,
            "blocked": self.blocked,
        }


def _same_decomp(p, q):
    return p.at == q.at and p.size == q.size and all(np.allclose(a, b, atol=1e-12) for a, b in zip(p.decomp, q.decomp))


def three_box_check(c, triplet0, triplet1, tol=DEFAULT_TOL, certainty_tol=1e-9):
    """Joint-distribution test of two triplets sharing first and last decompositions.

    Builds the four-decomposition table from the linear probability rule,
    checks that it embeds both triplet distributions as marginals and
    whether it is a valid distribution, and looks for orthogonal middle
    events that are each certain given the outer events. A paradox needs a
    valid joint table together with such co-occurring certainties, which the
    probability axioms forbid; ``blocked`` reports that it cannot arise.

    Raises:
        InputError: when the triplets do not share the outer decompositions
            or the middle Heisenberg projectors fail to commute.
    """
    t0, t1 = list(triplet0), list(triplet1)
    if len(t0) != 3 or len(t1) != 3:
        raise InputError("triplets must have three decompositions each")
    if not (_same_decomp(t0[0], t1[0]) and _same_decomp(t0[2], t1[2])):
        raise InputError("triplets must share their first and last decompositions")
    d1, m0, m1, d3 = t0[0], t0[1], t1[1], t0[2]
    h0, h1 = heisenberg_projectors(c, m0), heisenberg_projectors(c, m1)
    if float(np.max(max_commutator(h0, h1))) > INFLUENCE_TOL:
        raise InputError("middle decompositions do not commute")
    labelled = [
        PlacedDecomp(d1.decomp, d1.at, "D1"),
        PlacedDecomp(m0.decomp, m0.at, "M0"),
        PlacedDecomp(m1.decomp, m1.at, "M1"),
        PlacedDecomp(d3.decomp, d3.at, "D3"),
    ]
    cons = [consistency_check(c, [labelled[0], labelled[k], labelled[3]]) for k in (1, 2)]
    consistent = all(r.consistent for r in cons)
    dists = [history_distribution(c, [labelled[0], labelled[k], labelled[3]], strict=False) for k in (1, 2)]
    joint = history_distribution(c, labelled, strict=False)
    pos = [p.label for p in joint.placed]
    jt = np.transpose(joint.probs, [pos.index(n) for n in ("D1", "M0", "M1", "D3")])
    trip = []
    for k, dist in zip(("M0", "M1"), dists):
        lp = [p.label for p in dist.placed]
        trip.append(np.transpose(dist.probs, [lp.index(n) for n in ("D1", k, "D3")]))
    embedded = bool(
        np.max(np.abs(jt.sum(axis=2) - trip[0])) <= 1e-9 and np.max(np.abs(jt.sum(axis=1) - trip[1])) <= 1e-9
    )
    jmin = float(jt.min())
    valid = jmin >= -1e-10 and abs(float(jt.sum()) - 1.0) <= 1e-8
    orth = [
        (a, b)
        for a in range(len(h0))
        for b in range(len(h1))
        if float(np.max(np.abs(h0[a] @ h1[b]))) <= INFLUENCE_TOL
    ]
    co = []
    joint_co = False
    for e1 in range(jt.shape[0]):
        for e3 in range(jt.shape[3]):
            p13 = [float(t[e1, :, e3].sum()) for t in trip]
            if min(p13) <= 1e-12:
                continue
            for a, b in orth:
                c0 = float(trip[0][e1, a, e3]) / p13[0]
                c1 = float(trip[1][e1, b, e3]) / p13[1]
                if c0 >= 1 - certainty_tol and c1 >= 1 - certainty_tol:
                    co.append({"e1": e1, "e3": e3, "m0": a, "m1": b})
                    if valid:
                        pj = float(jt[e1, :, :, e3].sum())
                        if pj > 1e-12 and float(jt[e1, a, :, e3].sum()) / pj >= 1 - certainty_tol and float(jt[e1, :, b, e3].sum()) / pj >= 1 - certainty_tol:
                            joint_co = True
    chains = []
    for name, mid in (("triplet0", labelled[1]), ("triplet1", labelled[2])):
        g = influence_graph(c, [labelled[0], mid, labelled[3]])
        if all(g.has_edge(k, k + 1) for k in range(2)):
            chains.append(name)
    blocked = not (valid and co) and not joint_co
    return ThreeBoxReport(consistent, embedded, bool(valid), jmin, bool(co), co, joint_co, chains, bool(blocked))


# ---------------------------------------------------------------------------
# Instance builders


def _swap(d1, d2):
    return permutation_matrix([d1, d2], [1, 0])


def _measure_side(angles):
    """``|x>|s> -> (R_y(-theta_x)|s>) |x>``: setting first in, outcome first out."""
    return _swap(2, 2) @ controlled_unitary(2, [ry(-t) for t in angles])


def bell_change():
    """``CNOT (H (x) I)``, taking ``|00>`` to the maximally entangled state."""
    return shift_unitary(2) @ np.kron(HADAMARD, np.eye(2))


def _add_bell_measurements(b, angles_a, angles_b):
    b.wires(["X", "Y", "A", "FA", "FB", "B"], 2)
    b.gate("va", ["X", "SA"], ["A", "FA"], _measure_side(angles_a))
    b.gate("vb", ["Y", "SB"], ["B", "FB"], _measure_side(angles_b))


def _bell_roles(dz, dw):
    return {
        "Z": _pd(_comp(dz), "Z", OUT),
        "W": _pd(_comp(dw), "W", IN),
        "X": _pd(_comp(2), "X", OUT),
        "A": _pd(_comp(2), "A", IN),
        "Y": _pd(_comp(2), "Y", OUT),
        "B": _pd(_comp(2), "B", IN),
    }


CHSH_ANGLES = ((0.0, np.pi / 2.0), (np.pi / 4.0, -np.pi / 4.0))


def build_chsh_spec(angles_a=CHSH_ANGLES[0], angles_b=CHSH_ANGLES[1]):
    """Bell spec whose ``(i, j) = (0, 0)`` branch shares a maximally entangled pair.

    ``U`` maps ``(z, g)`` to ``w = z xor [g != 0]`` and hands ``g`` to a
    Bell-basis change on ``S = (SA, SB)``; each wing rotates its qubit by a
    setting-controlled ``R_y`` before a computational readout.
    """
    b = CircuitBuilder()
    b.wires(["Z", "G1", "G2", "W", "SA", "SB"], 2)
    perm = np.zeros((8, 8), dtype=np.complex128)
    for z in range(2):
        for g in range(4):
            perm[(z ^ int(g != 0)) * 4 + g, z * 4 + g] = 1.0
    b.gate("u", ["Z", "G1", "G2"], ["W", "SA", "SB"], np.kron(np.eye(2), bell_change()) @ perm)
    _add_bell_measurements(b, angles_a, angles_b)
    c = b.build()
    return ScenarioSpec("bell", c, _bell_roles(2, 2), constraints=[("X", "B"), ("Y", "A")])


def build_product_bell_spec(angles_a=CHSH_ANGLES[0], angles_b=CHSH_ANGLES[1]):
    """Control with a product preparation: ``Z`` (dim 4) is copied to ``S = SA (x) SB``
    while ``G`` (dim 4) is routed to ``W``."""
    b = CircuitBuilder()
    b.wire("Z", 4)
    b.wire("G", 4)
    b.wire("W", 4)
    b.wires(["SA", "SB"], 2)
    b.gate("u", ["Z", "G"], ["W", "SA", "SB"], _swap(4, 4))
    _add_bell_measurements(b, angles_a, angles_b)
    c = b.build()
    return ScenarioSpec("bell", c, _bell_roles(4, 4), constraints=[("X", "B"), ("Y", "A")])


def product_witness():
    """Manifest reduction of the product control: split ``Z`` into its two bits."""
    e2 = np.eye(2)
    z_a = [np.kron(_rank1(e2[m]), e2) for m in range(2)]
    z_b = [np.kron(e2, _rank1(e2[n])) for n in range(2)]
    w = _comp(4)
    return ReductionWitness(z_a, z_b, w, w)


MINUS = np.array([1, -1], dtype=np.complex128) / np.sqrt(2.0)
PLUS = np.array([1, 1], dtype=np.complex128) / np.sqrt(2.0)
KET0 = np.array([1, 0], dtype=np.complex128)
KET1 = np.array([0, 1], dtype=np.complex128)


def pbr_basis():
    """Columns: an orthonormal basis of two qubits in which each column is
    orthogonal to one of ``|00>, |0+>, |+0>, |++>`` in that order."""
    cols = [
        (np.kron(KET0, KET1) + np.kron(KET1, KET0)) / np.sqrt(2.0),
        (np.kron(KET0, MINUS) + np.kron(KET1, PLUS)) / np.sqrt(2.0),
        (np.kron(PLUS, KET1) + np.kron(MINUS, KET0)) / np.sqrt(2.0),
        (np.kron(PLUS, MINUS) + np.kron(MINUS, PLUS)) / np.sqrt(2.0),
    ]
    return np.stack(cols, axis=1)


def _pbr_side():
    """``(x, f) -> (a, s)`` whose ``a``-conditioned outputs are ``|0>, |->`` for
    ``x = 0`` and ``|1>, |+>`` for ``x = 1``."""
    u = np.zeros((4, 4), dtype=np.complex128)
    for x, (s0, s1) in enumerate(((KET0, MINUS), (KET1, PLUS))):
        for f, sign in enumerate((1.0, -1.0)):
            col = (np.kron(KET0, s0) + sign * np.kron(KET1, s1)) / np.sqrt(2.0)
            u[:, x * 2 + f] = col
    return u


def build_pbr_spec(orthogonal=False):
    """Two independent preparations measured jointly in :func:`pbr_basis`.

    Event choices pick ``rho = |0>`` and ``rho' = |+>`` on each side
    (``(a, x) = (0, 0)`` and ``(1, 1)``); with ``orthogonal=True`` the second
    choice becomes ``(0, 1)``, i.e. ``|1>``, which is orthogonal to ``|0>``.
    """
    b = CircuitBuilder()
    b.wires(["X", "FA", "FB", "Y", "A", "SA", "SB", "B", "Z", "G"], 2)
    b.wire("W", 4)
    side = _pbr_side()
    b.gate("va", ["X", "FA"], ["A", "SA"], side)
    # Bob's wing lists its outcome last: (f, y) -> (s, b)
    sw = _swap(2, 2)
    b.gate("vb", ["FB", "Y"], ["SB", "B"], sw @ side @ sw)
    basis = pbr_basis()
    meas = np.kron(dagger(basis), np.eye(2))  # (s_a, s_b, z) -> (w, g = z)
    b.gate("u", ["Z", "SA", "SB"], ["W", "G"], meas @ _swap(2, 4))
    c = b.build()
    roles = {
        "X": _pd(_comp(2), "X", OUT),
        "Y": _pd(_comp(2), "Y", OUT),
        "A": _pd(_comp(2), "A", IN),
        "B": _pd(_comp(2), "B", IN),
        "Z": _pd(_comp(2), "Z", OUT),
        "W": _pd(_comp(4), "W", IN),
    }
    second = (0, 1) if orthogonal else (1, 1)
    choices = {"a": 0, "x": 0, "a2": second[0], "x2": second[1], "b": 0, "y": 0, "b2": second[0], "y2": second[1]}
    return ScenarioSpec(
        "pbr",
        c,
        roles,
        groups={"F": ["FA", "FB"], "S": ["SA", "SB"], "G": ["G"]},
        constraints=[("X", "B"), ("Y", "A")],
        choices=choices,
    )


def build_complementarity_spec(measure_basis="x"):
    """Computational preparation by CNOT, then a measurement in the X (or Z) basis."""
    b = CircuitBuilder()
    b.wires(["Z", "G", "W", "S", "X", "F", "A"], 2)
    b.gate("prep", ["Z", "G"], ["S", "W"], shift_unitary(2))
    meas = shift_unitary(2) @ np.kron(HADAMARD if measure_basis == "x" else np.eye(2), np.eye(2))
    b.gate("meas", ["S", "X"], ["F", "A"], meas)
    c = b.build()
    roles = {
        "Z": _pd(_comp(2), "Z", OUT),
        "W": _pd(_comp(2), "W", IN),
        "X": _pd(_comp(2), "X", OUT),
        "A": _pd(_comp(2), "A", IN),
    }
    return ScenarioSpec("complementarity", c, roles, groups={"G": ["G"], "S": ["S"], "F": ["F"]})


def build_wigner_spec(same_basis=False):
    """The friend/Wigner circuit as a Wigner spec.

    With ``same_basis=True`` Wigner undoes the friend's interaction and then
    reads the system in the friend's basis, so the second condition fails.
    """
    cnot = shift_unitary(2)
    b = CircuitBuilder()
    b.wires(["s0", "a0", "f0", "w0", "a1", "s2", "s3", "f1", "s4", "f2", "s5", "w1"], 2)
    b.gate("prep", ["s0", "a0"], ["s2", "a1"], np.kron(HADAMARD, np.eye(2)) @ cnot)
    b.gate("friend", ["s2", "f0"], ["s3", "f1"], cnot)
    undo = cnot if same_basis else np.kron(HADAMARD, np.eye(2)) @ cnot
    b.gate("undo", ["s3", "f1"], ["s4", "f2"], undo)
    b.gate("record", ["s4", "w0"], ["s5", "w1"], cnot)
    c = b.build()
    roles = {
        "Z": _pd(_comp(2), "s0", OUT),
        "W": _pd(_comp(2), "a1", IN),
        "X1": _pd(_comp(2), "f0", OUT),
        "A1": _pd(_comp(2), "f1", IN),
        "X2": _pd(_comp(2), "w0", OUT),
        "A2": _pd(_comp(2), "w1", IN),
    }
    return ScenarioSpec(
        "wigner", c, roles, groups={"G": ["a0"], "S": ["s2"], "F": ["s3"], "H": ["f2", "s5"]}
    )


def build_local_friendliness_spec(friend=True, entangled=True):
    """CHSH wings with a friend on Alice's side.

    The friend copies ``SA`` onto pointer ``f0 -> f1``; Wigner undoes the copy
    and performs Alice's setting-controlled measurement. ``friend=False``
    places a trivial decomposition on the friend's pointer; ``entangled=False``
    swaps in the product preparation.
    """
    cnot = shift_unitary(2)
    b = CircuitBuilder()
    if entangled:
        b.wires(["Z", "G1", "G2", "W"], 2)
        perm = np.zeros((8, 8), dtype=np.complex128)
        for z in range(2):
            for g in range(4):
                perm[(z ^ int(g != 0)) * 4 + g, z * 4 + g] = 1.0
        u_in, u_mat, dz = ["Z", "G1", "G2"], np.kron(np.eye(2), bell_change()) @ perm, 2
        g_group = ["G1", "G2"]
    else:
        b.wire("Z", 4)
        b.wire("G", 4)
        b.wire("W", 4)
        u_in, u_mat, dz = ["Z", "G"], _swap(4, 4), 4
        g_group = ["G"]
    b.wires(["SA", "SB", "f0", "s1", "f1", "s2", "f2", "X", "Y", "A", "FA", "FB", "B"], 2)
    b.gate("u", u_in, ["W", "SA", "SB"], u_mat)
    b.gate("friend", ["SA", "f0"], ["s1", "f1"], cnot)
    b.gate("undo", ["s1", "f1"], ["s2", "f2"], cnot)
    b.gate("va", ["X", "s2"], ["A", "FA"], _measure_side(CHSH_ANGLES[0]))
    b.gate("vb", ["Y", "SB"], ["B", "FB"], _measure_side(CHSH_ANGLES[1]))
    c = b.build()
    bell_roles = _bell_roles(dz, dz)
    bell = ScenarioSpec("bell", c, bell_roles, constraints=[("X", "B"), ("Y", "A")])
    friend_dec = _comp(2) if friend else [np.eye(2, dtype=np.complex128)]
    wig_roles = {
        "Z": bell_roles["Z"],
        "W": bell_roles["W"],
        "X1": _pd(_comp(2), "f0", OUT),
        "A1": _pd(friend_dec, "f1", IN),
        "X2": bell_roles["X"],
        "A2": bell_roles["A"],
    }
    wig = ScenarioSpec(
        "wigner",
        c,
        wig_roles,
        groups={"G": g_group, "S": ["SA", "SB"], "F": ["s1", "SB"], "H": ["f2", "FA", "SB"]},
        stage_gates={"U": ["u"], "V": ["friend"], "Wig": ["undo", "va"]},
    )
    return ScenarioSpec("local_friendliness", None, subspecs={"bell": bell, "wigner_a": wig})


# ---------------------------------------------------------------------------
# Random specs for property tests


def _random_decomp(rng, d):
    """Computational, trivial or random-eigenbasis projective decomposition."""
    kind = int(rng.integers(0, 4))
    if kind == 0:
        return [np.eye(d, dtype=np.complex128)]
    if kind == 1:
        return _comp(d)
    u = haar_random_unitary(d, rng)
    if kind == 2 or d == 2:
        return [_rank1(u[:, k]) for k in range(d)]
    return [_rank1(u[:, 0]), u[:, 1:] @ dagger(u[:, 1:])]


def random_complementarity_spec(rng, dims=(2, 3)):
    """Random stages ``U`` and ``V`` with random decompositions; every factor dim in ``dims``."""
    pick = lambda: int(rng.choice(dims))  # noqa: E731
    dz, dw, dx, da = pick(), pick(), pick(), pick()
    ds = pick()
    # U: Z (x) G -> W (x) S needs dz * dg = dw * ds
    dg, dw = ds, dz
    df = dx * ds // da if (dx * ds) % da == 0 else None
    if df is None:
        da = dx
        df = ds
    b = CircuitBuilder()
    b.wire("Z", dz)
    b.wire("G", dg)
    b.wire("W", dw)
    b.wire("S", ds)
    b.wire("X", dx)
    b.wire("F", df)
    b.wire("A", da)
    b.gate("u", ["Z", "G"], ["W", "S"], _structured_gate(rng, [dz, dg], [dw, ds]))
    b.gate("v", ["S", "X"], ["F", "A"], _structured_gate(rng, [ds, dx], [df, da]))
    c = b.build()
    roles = {
        "Z": _pd(_random_decomp(rng, dz), "Z", OUT),
        "W": _pd(_random_decomp(rng, dw), "W", IN),
        "X": _pd(_random_decomp(rng, dx), "X", OUT),
        "A": _pd(_random_decomp(rng, da), "A", IN),
    }
    return ScenarioSpec("complementarity", c, roles, groups={"G": ["G"], "S": ["S"], "F": ["F"]})


def random_wigner_spec(rng, dims=(2, 3)):
    """Random complementarity stages followed by a random Wigner stage on ``F, A1, X2``."""
    base = random_complementarity_spec(rng, dims)
    c0 = base.circuit
    dx2 = int(rng.choice(dims))
    df, da1 = c0.dim("F"), c0.dim("A")
    dh = df * da1
    b = CircuitBuilder()
    for w in c0.wires:
        b.wire({"X": "X1", "A": "A1"}.get(w.id, w.id), w.dim)
    b.wire("X2", dx2)
    b.wire("H", dh)
    b.wire("A2", dx2)
    for g in c0.gates:
        ren = {"X": "X1", "A": "A1"}
        b.gate(g.id, [ren.get(x, x) for x in g.inputs], [ren.get(x, x) for x in g.outputs], g.matrix)
    b.gate("wig", ["F", "A1", "X2"], ["H", "A2"], haar_random_unitary(dh * dx2, rng))
    c = b.build()
    r = base.roles
    roles = {
        "Z": r["Z"],
        "W": r["W"],
        "X1": _pd(r["X"].decomp, "X1", OUT),
        "A1": _pd(r["A"].decomp, "A1", IN),
        "X2": _pd(_random_decomp(rng, dx2), "X2", OUT),
        "A2": _pd(_random_decomp(rng, dx2), "A2", IN),
    }
    return ScenarioSpec("wigner", c, roles, groups={"G": ["G"], "S": ["S"], "F": ["F"], "H": ["H"]})


def random_bell_spec(rng):
    """Random preparation of two qubits with random setting-controlled local rotations."""
    dz = int(rng.choice([2, 4]))
    b = CircuitBuilder()
    b.wire("Z", dz)
    b.wire("G", 4 // dz * 2 if dz == 2 else 2)
    dg = 4 // dz * 2 if dz == 2 else 2
    dw = dz * dg // 4
    b.wire("W", dw)
    b.wires(["SA", "SB"], 2)
    b.gate("u", ["Z", "G"], ["W", "SA", "SB"], _structured_gate(rng, [dz, dg], [dw, 2, 2]))
    b.wires(["X", "Y", "A", "FA", "FB", "B"], 2)
    ua = [haar_random_unitary(2, rng) for _ in range(2)]
    ub = [haar_random_unitary(2, rng) for _ in range(2)]
    b.gate("va", ["X", "SA"], ["A", "FA"], _swap(2, 2) @ controlled_unitary(2, ua))
    b.gate("vb", ["Y", "SB"], ["B", "FB"], _swap(2, 2) @ controlled_unitary(2, ub))
    c = b.build()
    roles = {
        "Z": _pd(_random_decomp(rng, dz), "Z", OUT),
        "W": _pd(_random_decomp(rng, dw), "W", IN),
        "X": _pd(_comp(2), "X", OUT),
        "A": _pd(_comp(2), "A", IN),
        "Y": _pd(_comp(2), "Y", OUT),
        "B": _pd(_comp(2), "B", IN),
    }
    return ScenarioSpec("bell", c, roles, constraints=[("X", "B"), ("Y", "A")])


def random_pbr_spec(rng):
    """Random local preparations and a random joint measurement unitary."""
    b = CircuitBuilder()
    b.wires(["X", "FA", "FB", "Y", "A", "SA", "SB", "B", "Z", "G"], 2)
    b.wire("W", 4)
    b.gate("va", ["X", "FA"], ["A", "SA"], haar_random_unitary(4, rng))
    b.gate("vb", ["FB", "Y"], ["SB", "B"], haar_random_unitary(4, rng))
    b.gate("u", ["Z", "SA", "SB"], ["W", "G"], haar_random_unitary(8, rng))
    c = b.build()
    roles = {
        "X": _pd(_comp(2), "X", OUT),
        "Y": _pd(_comp(2), "Y", OUT),
        "A": _pd(_random_decomp(rng, 2), "A", IN),
        "B": _pd(_random_decomp(rng, 2), "B", IN),
        "Z": _pd(_random_decomp(rng, 2), "Z", OUT),
        "W": _pd(_random_decomp(rng, 4), "W", IN),
    }
    return ScenarioSpec(
        "pbr",
        c,
        roles,
        groups={"F": ["FA", "FB"], "S": ["SA", "SB"], "G": ["G"]},
        constraints=[("X", "B"), ("Y", "A")],
    )


__all__ = [
    "SCHEMA",
    "KINDS",
    "NO_REDUCTION_FOUND",
    "ScenarioSpec",
    "stage_layouts",
    "stage_unitary",
    "spec_to_dict",
    "spec_from_dict",
    "check_constraints",
    "complementarity_operators",
    "classify_complementarity",
    "wigner_second_commutator",
    "classify_wigner",
    "bell_joint",
    "bell_conditionals",
    "classify_bell",
    "pbr_operators",
    "pbr_conditions",
    "classify_pbr",
    "classify_local_friendliness",
    "classify",
    "ReductionWitness",
    "ReductionCheck",
    "derive_partition",
    "verify_reduction",
    "commuting_local_algebra",
    "search_reduction",
    "StructureLabel",
    "detect_structure",
    "spec_structure",
    "ThreeBoxReport",
    "three_box_check",
    "build_chsh_spec",
    "build_product_bell_spec",
    "product_witness",
    "pbr_basis",
    "build_pbr_spec",
    "build_complementarity_spec",
    "build_wigner_spec",
    "build_local_friendliness_spec",
    "random_complementarity_spec",
    "random_wigner_spec",
    "random_bell_spec",
    "random_pbr_spec",
]
