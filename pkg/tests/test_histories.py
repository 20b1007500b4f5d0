import itertools

import numpy as np
import pytest
from hypothesis import given

from conftest import seeds
from helpers import random_decomp
from qcevents.circuit import IN, OUT, Placement, random_bubble, random_circuit, total_unitary
from qcevents.errors import InputError, NumericDefect, ResourceLimit
from qcevents.histories import (
    HistoryEvaluator,
    conditional_distribution,
    consistency_check,
    decoherence_functional,
    history_distribution,
    history_probability,
    sample_histories,
    sample_history,
)
from qcevents.influence import PlacedDecomp
from qcevents.models import three_box_triplets
from qcevents.preference import preferred_set
from qcevents.tensor import dagger, kron_all


def boundary_instance(rng):
    """Decompositions on global inputs (OUT side) and outputs (IN side)."""
    c = random_circuit(rng, max_gates=4)
    ins = {w: random_decomp(rng, c.dim(w)) for w in c.inputs}
    outs = {w: random_decomp(rng, c.dim(w)) for w in c.outputs}
    placed = [PlacedDecomp(v, Placement(w, OUT)) for w, v in ins.items()]
    placed += [PlacedDecomp(v, Placement(w, IN)) for w, v in outs.items()]
    return c, ins, outs, placed


def schroedinger_oracle(c, ins, outs, e_in, e_out):
    u = total_unitary(c)
    pin = kron_all([ins[w][e_in[w]] for w in c.inputs])
    pout = kron_all([outs[w][e_out[w]] for w in c.outputs])
    return float(np.real(np.trace(pin @ dagger(u) @ pout @ u))) / u.shape[0]


@given(seeds)
def test_boundary_probabilities_match_schroedinger_picture(seed):
    rng = np.random.default_rng(seed)
    c, ins, outs, placed = boundary_instance(rng)
    dist = history_distribution(c, placed)
    for h in dist.histories():
        labels = {(p.at.wire, p.at.side): e for p, e in zip(dist.placed, h)}
        e_in = {w: labels[(w, OUT)] for w in c.inputs}
        e_out = {w: labels[(w, IN)] for w in c.outputs}
        assert abs(dist.prob(h) - schroedinger_oracle(c, ins, outs, e_in, e_out)) < 1e-12


@given(seeds)
def test_linear_rule_sums_to_one_and_marginalises(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, max_gates=4)
    wires = [w.id for w in c.wires]
    picks = rng.choice(len(wires), size=min(3, len(wires)), replace=False)
    placed = [
        PlacedDecomp(random_decomp(rng, c.dim(wires[k])), Placement(wires[k], str(rng.choice([IN, OUT]))))
        for k in picks
    ]
    ev = HistoryEvaluator(c, placed)
    table = ev.table()
    assert abs(table.sum() - 1.0) < 1e-10
    drop = int(rng.integers(len(placed)))
    rest = [p for k, p in enumerate(ev.placed) if k != drop]
    reduced = HistoryEvaluator(c, rest).table()
    assert np.allclose(table.sum(axis=drop), reduced, atol=1e-12)
    for h in itertools.islice(np.ndindex(*ev.sizes), 20):
        assert abs(ev.probability(h) - table[h]) < 1e-12
        assert abs(ev.marginal_probability(dict(enumerate(h))) - table[h]) < 1e-12


@given(seeds)
def test_preferred_sets_are_consistent(seed):
    rng = np.random.default_rng(seed)
    c = random_circuit(rng, max_gates=5)
    ps = preferred_set(c, random_bubble(c, rng, max_wires=3))
    ev = HistoryEvaluator(c, ps)
    rep = consistency_check(c, ps)
    assert rep.consistent
    for h in itertools.islice(np.ndindex(*ev.sizes), 50):
        assert abs(ev.probability(h) - ev.sandwich(h)) < 1e-9
    dist = history_distribution(c, ps)
    assert dist.probs.min() >= 0.0


def test_consistency_check_matches_brute_force():
    c, t0, t1 = three_box_triplets()
    placed = [t0[0], t0[1], t1[1], t0[2]]
    ev = HistoryEvaluator(c, placed)
    hs = list(np.ndindex(*ev.sizes))
    worst = max(abs(decoherence_functional(c, placed, a, b).real) for a in hs for b in hs if a != b)
    rep = consistency_check(c, placed)
    assert abs(rep.max_offdiag - worst) < 1e-12
    assert not rep.consistent


def test_invalid_joint_is_flagged():
    c, t0, t1 = three_box_triplets()
    placed = [t0[0], t0[1], t1[1], t0[2]]
    with pytest.raises(NumericDefect):
        history_distribution(c, placed)
    raw = history_distribution(c, placed, strict=False)
    assert raw.probs.min() < -0.03
    with pytest.raises(NumericDefect):
        worst = np.unravel_index(int(np.argmin(raw.probs)), raw.sizes)
        history_probability(c, placed, worst, check_sandwich=True)


def test_history_cap():
    c, t0, _ = three_box_triplets()
    with pytest.raises(ResourceLimit):
        history_distribution(c, t0, cap=4)


@given(seeds)
def test_sampling_is_reproducible_per_row(seed):
    rng = np.random.default_rng(seed)
    c, _, _, placed = boundary_instance(rng)
    dist = history_distribution(c, placed)
    rows = sample_histories(dist, 5, seed % 1000)
    assert rows == sample_histories(dist, 5, seed % 1000)
    for s, h in rows:
        assert h == sample_history(dist, s)
        assert dist.prob(h) > 0


def test_sampling_frequencies_follow_distribution():
    rng = np.random.default_rng(7)
    c, _, _, placed = boundary_instance(rng)
    dist = history_distribution(c, placed)
    n = 4000
    counts = np.zeros(dist.sizes)
    for _, h in sample_histories(dist, n, 0):
        counts[h] += 1
    assert np.max(np.abs(counts / n - dist.probs)) < 0.04


def test_conditional_distribution():
    rng = np.random.default_rng(11)
    c, _, _, placed = boundary_instance(rng)
    dist = history_distribution(c, placed)
    e = int(np.argmax(dist.marginal([0]).probs))
    cond = conditional_distribution(dist, {0: e})
    assert abs(cond.probs.sum() - 1.0) < 1e-12
    assert np.all(np.take(cond.probs, [k for k in range(dist.sizes[0]) if k != e], axis=0) == 0)
    with pytest.raises(InputError):
        conditional_distribution(dist, {0: dist.sizes[0]})


def test_evaluator_rejects_bad_histories():
    c, t0, _ = three_box_triplets()
    ev = HistoryEvaluator(c, t0)
    with pytest.raises(InputError):
        ev.probability((0, 0))
    with pytest.raises(InputError):
        ev.probability((0, 0, 5))


def test_distribution_json_lists_probabilities():
    c, t0, _ = three_box_triplets()
    d = history_distribution(c, t0).to_dict()
    assert d["sizes"] == [2, 2, 2]
    assert abs(sum(d["probabilities"]) - 1.0) < 1e-12
