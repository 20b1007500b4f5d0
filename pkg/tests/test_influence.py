import numpy as np
import pytest
from hypothesis import given

from conftest import seeds
from helpers import random_decomp, random_split
from qcevents.circuit import IN, OUT, CircuitBuilder, Placement, random_circuit
from qcevents.errors import InputError
from qcevents.influence import (
    ChannelSplit,
    PlacedDecomp,
    circuit_quantum_influence,
    default_phase_grid,
    influence_graph,
    informationally_complete_states,
    interference_influence,
    interference_witness,
    max_commutator,
    phase_signal_oracle,
    quantum_influence,
)
from qcevents.tensor import dagger, haar_random_unitary, partial_trace

CNOT = np.array([[1, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=complex)
SWAP = np.array([[1, 0, 0, 0], [0, 0, 1, 0], [0, 1, 0, 0], [0, 0, 0, 1]], dtype=complex)


def signalling_oracle(ch, tol=1e-9):
    """Does some traceless change on ``A`` move the reduced output on ``D``?"""
    da, db = ch.in_dims
    dc, dd = ch.out_dims
    u = ch.unitary
    for a in range(da):
        for b in range(da):
            x = np.zeros((da, da), dtype=complex)
            x[a, b] = 1.0
            if a == b:
                if a == 0:
                    continue
                x[0, 0] = -1.0
            for i in range(db):
                for j in range(db):
                    y = np.zeros((db, db), dtype=complex)
                    y[i, j] = 1.0
                    out = partial_trace(u @ np.kron(x, y) @ dagger(u), (dc, dd), [1])
                    if float(np.max(np.abs(out))) > tol:
                        return True
    return False


@given(seeds)
def test_quantum_influence_matches_signalling(seed):
    ch = random_split(np.random.default_rng(seed), max_dim=3)
    assert quantum_influence(ch) == signalling_oracle(ch)


def test_quantum_influence_on_named_gates():
    assert quantum_influence(ChannelSplit(SWAP, (2, 2), (2, 2)))
    assert not quantum_influence(ChannelSplit(np.eye(4), (2, 2), (2, 2)))
    assert quantum_influence(ChannelSplit(CNOT, (2, 2), (2, 2)))
    # phase kickback: the target influences the control
    assert quantum_influence(ChannelSplit(CNOT, (2, 2), (2, 2)), src=1, dst=0)
    local = np.kron(haar_random_unitary(2, 1), haar_random_unitary(2, 2))
    assert not quantum_influence(ChannelSplit(local, (2, 2), (2, 2)))


@given(seeds)
def test_interference_matches_phase_signal(seed):
    rng = np.random.default_rng(seed)
    ch = random_split(rng, max_dim=3)
    pa = random_decomp(rng, ch.in_dims[0])
    pd = random_decomp(rng, ch.out_dims[1])
    grid = default_phase_grid(len(pa), seed=seed % 997)
    assert interference_influence(ch, pa, pd) == phase_signal_oracle(ch, pa, pd, grid)


def test_cnot_interference_depends_on_basis():
    ch = ChannelSplit(CNOT, (2, 2), (2, 2))
    z = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    plus = np.array([1, 1]) / np.sqrt(2)
    minus = np.array([1, -1]) / np.sqrt(2)
    x = [np.outer(plus, plus), np.outer(minus, minus)]
    assert not interference_influence(ch, z, z)
    assert interference_influence(ch, x, z)
    w = interference_witness(ch, x, z)
    assert w.influence and w.norm > 0.4
    assert not interference_influence(ch, [np.eye(2)], z)


def test_interference_requires_matching_dims():
    ch = ChannelSplit(CNOT, (2, 2), (2, 2))
    with pytest.raises(InputError):
        interference_witness(ch, [np.eye(3)], [np.eye(2)])
    with pytest.raises(InputError):
        phase_signal_oracle(ch, [np.eye(2)], [np.eye(2)], [])


@given(seeds)
def test_interference_implies_quantum_influence(seed):
    rng = np.random.default_rng(seed)
    ch = random_split(rng, max_dim=3)
    if interference_influence(ch, random_decomp(rng, ch.in_dims[0]), random_decomp(rng, ch.out_dims[1])):
        assert quantum_influence(ch)


def test_informationally_complete_states_span():
    for d in (1, 2, 3):
        psi = informationally_complete_states(d)
        projs = np.stack([np.outer(psi[:, k], np.conj(psi[:, k])).reshape(-1) for k in range(psi.shape[1])], 1)
        assert np.linalg.matrix_rank(projs) == d * d


def test_max_commutator_shapes():
    assert max_commutator([], [np.eye(2)]).shape == (0, 1)
    x = np.array([[0, 1], [1, 0]], dtype=complex)
    z = np.diag([1.0, -1.0]).astype(complex)
    assert np.isclose(max_commutator([x], [z])[0, 0], 2.0)


def _chain_circuit():
    b = CircuitBuilder()
    b.wires(["a", "b", "a1", "b1", "c"], 2)
    b.gate("cx", ["a", "b"], ["a1", "b1"], CNOT)
    b.gate("h", ["b1"], ["c"], np.array([[1, 1], [1, -1]]) / np.sqrt(2))
    return b.build()


def test_influence_graph_edges_follow_paths():
    c = _chain_circuit()
    plus = np.array([1, 1]) / np.sqrt(2)
    x = [np.outer(plus, plus), np.eye(2) - np.outer(plus, plus)]
    z = [np.diag([1.0, 0.0]), np.diag([0.0, 1.0])]
    placed = [
        PlacedDecomp(x, Placement("a", OUT), "ax"),
        PlacedDecomp(z, Placement("b", OUT), "bz"),
        PlacedDecomp(z, Placement("a1", IN), "a1z"),
        PlacedDecomp(z, Placement("c", IN), "cz"),
    ]
    g = influence_graph(c, placed)
    idx = {n.label: k for k, n in enumerate(g.nodes)}
    ax, bz, a1z, cz = idx["ax"], idx["bz"], idx["a1z"], idx["cz"]
    assert g.has_edge(ax, a1z)
    edge = g.edges[tuple(sorted((ax, bz)))]
    assert not edge.connected and not edge.influence
    assert not g.has_edge(min(bz, a1z), max(bz, a1z))
    assert g.has_edge(bz, cz)
    d = g.to_dict()
    assert len(d["nodes"]) == 4 and len(d["edges"]) == 6


@given(seeds)
def test_trivial_decompositions_have_no_edges(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng)
    placed = [PlacedDecomp([np.eye(w.dim)], Placement(w.id, IN)) for w in c.wires[:4]]
    assert not influence_graph(c, placed).influence_edges()


def test_circuit_quantum_influence():
    c = _chain_circuit()
    assert circuit_quantum_influence(c, "a", "b1")
    assert circuit_quantum_influence(c, "b", "a1")
    assert not circuit_quantum_influence(c, "a", "b")
    assert not circuit_quantum_influence(c, "c", "a")
    assert circuit_quantum_influence(c, "a", "a")
