"""Acceptance criteria, one test each; every test prints a PASS/FAIL line."""
import itertools
import json
import shutil
import subprocess
import sys
import time

import numpy as np
import pytest

from helpers import random_decomp, random_split
from qcevents.algebra import computational_decomp, projector_set_distance
from qcevents.circuit import circuit_to_dict, random_bubble, random_circuit
from qcevents.histories import HistoryEvaluator, consistency_check, history_distribution, sort_placed
from qcevents.influence import (
    ChannelSplit,
    PlacedDecomp,
    default_phase_grid,
    heisenberg_projectors,
    influence_graph,
    interference_influence,
    phase_signal_oracle,
)
from qcevents.io import canonical_json
from qcevents.models import (
    build_instrument_model,
    build_prepare_measure,
    build_three_box,
    build_wigners_friend,
    compose_instruments,
    direct_outcome_distribution,
    model_outcome_distribution,
    random_instrument,
    shift_unitary,
    three_box_conditionals,
    three_box_projection_postulate,
    three_box_triplets,
)
from qcevents.preference import check_influence_pattern, preferred_decomposition, preferred_set
from qcevents.scenarios import (
    NO_REDUCTION_FOUND,
    build_chsh_spec,
    build_pbr_spec,
    build_product_bell_spec,
    classify_bell,
    classify_pbr,
    product_witness,
    search_reduction,
    three_box_check,
    verify_reduction,
)
from qcevents.tensor import haar_random_unitary


@pytest.fixture
def report(capsys):
    def emit(number, name, ok, detail=""):
        with capsys.disabled():
            print(f"\n{'PASS' if ok else 'FAIL'} criterion {number:2d} {name}: {detail}")
        assert ok, f"criterion {number} ({name}) failed: {detail}"

    return emit


def test_01_phase_signal_equivalence(report):
    start = time.perf_counter()
    mismatches = []
    n_true = 0
    for seed in range(200):
        rng = np.random.default_rng(seed)
        ch = random_split(rng, max_dim=4)
        pa = random_decomp(rng, ch.in_dims[0])
        pd = random_decomp(rng, ch.out_dims[1])
        comm = interference_influence(ch, pa, pd)
        oracle = phase_signal_oracle(ch, pa, pd, default_phase_grid(len(pa), seed=seed))
        n_true += comm
        if comm != oracle:
            mismatches.append(seed)
    elapsed = time.perf_counter() - start
    ok = not mismatches and elapsed < 60.0
    report(1, "phase-signal equivalence", ok, f"200 instances, {n_true} with influence, mismatches {mismatches}, {elapsed:.1f}s")


def test_02_shift_unitary_preference(report):
    dists = {}
    for d in (2, 3, 4):
        got = preferred_decomposition(ChannelSplit(shift_unitary(d), (d, d), (d, d)))
        dists[d] = projector_set_distance(got, computational_decomp(d))
    ok = all(v <= 1e-10 for v in dists.values())
    report(2, "shift-unitary preference", ok, f"distances {dists}")


def _pm_distribution(u):
    wm = build_prepare_measure(u)
    ps = preferred_set(wm.circuit, wm.bubbles["small"])
    z1, z2 = ps.entry("s1", "IN"), ps.entry("s2", "OUT")
    dist = history_distribution(wm.circuit, [z1, z2])
    pos = [p.at.wire for p in dist.placed]
    return np.transpose(dist.probs, [pos.index("s1"), pos.index("s2")])


def test_03_prepare_measure(report):
    worst_cond, worst_marg = 0.0, 0.0
    for seed in range(20):
        u = haar_random_unitary(2, seed)
        p = _pm_distribution(u)
        p1 = p.sum(axis=1)
        worst_marg = max(worst_marg, float(np.max(np.abs(p1 - 0.5))))
        cond = p / p1[:, None]
        born = np.abs(u.T) ** 2  # born[z1, z2] = |<z2|U|z1>|^2
        worst_cond = max(worst_cond, float(np.max(np.abs(cond - born))))
    ok = worst_cond <= 1e-9 and worst_marg <= 1e-9
    report(3, "prepare-measure", ok, f"max |p(z2|z1) - Born| {worst_cond:.2e}, max |p(z1) - 1/2| {worst_marg:.2e}")


def test_04_extended_model(report):
    worst = 0.0
    names = [("s1", "IN"), ("s2", "OUT"), ("a0", "IN"), ("a1", "OUT"), ("b0", "IN"), ("b1", "OUT")]
    for seed in range(5):
        wm = build_prepare_measure(haar_random_unitary(2, 100 + seed))
        ps = preferred_set(wm.circuit, wm.bubbles["extended"])
        placed = [PlacedDecomp(ps.entry(w, s).decomp, ps.entry(w, s).at, f"z{k + 1}") for k, (w, s) in enumerate(names)]
        dist = history_distribution(wm.circuit, placed)
        pos = {p.label: k for k, p in enumerate(dist.placed)}
        t = np.transpose(dist.probs, [pos[f"z{k}"] for k in range(1, 7)])
        z = np.indices(t.shape)
        worst = max(worst, abs(t[z[0] == (z[2] ^ z[3])].sum() - 1.0), abs(t[z[1] == (z[4] ^ z[5])].sum() - 1.0))
    report(4, "extended model", worst <= 1e-9, f"max |p(parity) - 1| {worst:.2e} over 5 unitaries")


def test_05_wigners_friend(report):
    wm = build_wigners_friend()
    b1 = preferred_set(wm.circuit, wm.bubbles["friend"])
    b2 = preferred_set(wm.circuit, wm.bubbles["wigner"])
    dz = projector_set_distance(b1.entry("s2", "OUT").decomp, computational_decomp(2))
    trivial = b2.entry("s2", "OUT").decomp
    is_identity = len(trivial) == 1 and np.allclose(trivial[0], np.eye(2), atol=1e-12)
    c1 = consistency_check(wm.circuit, b1, tol=1e-8)
    c2 = consistency_check(wm.circuit, b2, tol=1e-8)
    ok = dz <= 1e-9 and is_identity and c1.consistent and c2.consistent
    detail = f"friend Z distance {dz:.1e}, wigner entry identity {is_identity}, offdiag {c1.max_offdiag:.1e}/{c2.max_offdiag:.1e}"
    report(5, "Wigner's friend", ok, detail)


def _random_instances():
    for seed in range(100):
        rng = np.random.default_rng(seed)
        c = random_circuit(rng, max_gates=5, dims=(2, 3))
        bubble = random_bubble(c, rng, max_wires=3)
        yield seed, c, preferred_set(c, bubble)


def _brute_force(c, placed):
    """Chain operators as explicit products; returns (probabilities, max off-diagonal |D|)."""
    order = sort_placed(c, list(placed))
    heis = [heisenberg_projectors(c, p) for p in order]
    d = c.total_dim
    chains, linear = [], []
    for h in itertools.product(*[range(len(x)) for x in heis]):
        ops = [heis[k][e] for k, e in enumerate(h)]
        chain = np.eye(d, dtype=complex)
        for op in ops:
            chain = op @ chain
        chains.append(chain.reshape(-1))
        linear.append(float(np.real(np.trace(chain))) / d)
    v = np.array(chains)
    gram = (v.conj() @ v.T) / d
    off = np.abs(gram - np.diag(np.diag(gram)))
    return np.array(linear), np.real(np.diag(gram)), float(off.max(initial=0.0))


def test_06_consistency_suite(report):
    worst_form, worst_off, worst_sum = 0.0, 0.0, 0.0
    nontrivial = 0
    for seed, c, ps in _random_instances():
        ev = HistoryEvaluator(c, list(ps.entries))
        hs = list(np.ndindex(*ev.sizes))
        nontrivial += len(hs) > 1
        lib = np.array([ev.probability(h) for h in hs])
        sandwich = np.array([ev.sandwich(h) for h in hs])
        linear, diag, off = _brute_force(c, ps.entries)
        forms = [lib - sandwich, linear - diag, lib - linear]
        worst_form = max([worst_form] + [float(np.max(np.abs(f))) for f in forms])
        worst_off = max(worst_off, off)
        worst_sum = max(worst_sum, abs(float(ev.table().sum()) - 1.0))
    ok = worst_form <= 1e-9 and worst_off <= 1e-8 and worst_sum <= 1e-8
    detail = (
        f"{nontrivial}/100 with more than one history, linear vs sandwich {worst_form:.1e}, "
        f"max |D| off-diagonal {worst_off:.1e}, |sum - 1| {worst_sum:.1e}"
    )
    report(6, "consistency suite", ok, detail)


def test_07_allowed_influence_suite(report):
    bad = []
    for seed, c, ps in _random_instances():
        rep = check_influence_pattern(c, ps)
        if not rep.ok:
            bad.append(seed)
    report(7, "allowed-influence suite", not bad, f"100 instances, instances with forbidden edges {bad}")


def _sequential_pair(rng):
    while True:
        d = [int(v) for v in rng.integers(1, 3, size=3)]
        n1, n2 = (int(v) for v in rng.integers(1, 3, size=2))
        k1, k2 = (int(v) for v in rng.integers(1, 3, size=2))
        i1 = random_instrument(rng, n1, d[0], d[1], kraus_per_map=k1)
        i2 = random_instrument(rng, n2, d[1], d[2], kraus_per_map=k2)
        m = compose_instruments(build_instrument_model(i1, "p_"), build_instrument_model(i2, "q_"))
        if m.circuit.total_dim <= 512:
            return i1, i2, m


def test_08_instruments(report):
    rng = np.random.default_rng(2024)
    worst_single = 0.0
    for _ in range(50):
        n, d_in, d_out = (int(v) for v in rng.integers(1, 4, size=3))
        inst = random_instrument(rng, n, d_in, d_out)
        got = model_outcome_distribution(build_instrument_model(inst))
        worst_single = max(worst_single, float(np.max(np.abs(got - direct_outcome_distribution([inst])))))
    worst_seq = 0.0
    for _ in range(20):
        i1, i2, m = _sequential_pair(rng)
        got = model_outcome_distribution(m)
        worst_seq = max(worst_seq, float(np.max(np.abs(got - direct_outcome_distribution([i1, i2])))))
    ok = worst_single <= 1e-8 and worst_seq <= 1e-8
    report(8, "instruments", ok, f"single {worst_single:.1e} over 50, sequential {worst_seq:.1e} over 20")


def test_09_three_box(report):
    c, t0, t1 = three_box_triplets()
    rep = three_box_check(c, t0, t1)
    errs = {b: float(np.max(np.abs(three_box_conditionals(build_three_box(b)) - three_box_projection_postulate(b)))) for b in range(3)}
    ok = rep.blocked and rep.marginals_embedded and rep.triplets_consistent and all(e <= 1e-9 for e in errs.values())
    detail = f"blocked {rep.blocked}, embedded {rep.marginals_embedded}, consistent {rep.triplets_consistent}, joint min {rep.joint_min:.4f}, box errors {errs}"
    report(9, "three-box", ok, detail)


def test_10_chsh(report):
    spec = build_chsh_spec()
    rep = classify_bell(spec, ij=(0, 0))
    lhv = rep.per_ij[0]["lhv"]
    chsh_ok = abs(rep.chsh - 2 * np.sqrt(2)) <= 1e-6
    ctrl_spec = build_product_bell_spec()
    ctrl = classify_bell(ctrl_spec)
    ctrl_feasible = all(e["lhv"]["feasible"] for e in ctrl.per_ij)
    found = search_reduction(ctrl_spec, "fork")
    found_ok = found != NO_REDUCTION_FOUND and verify_reduction(ctrl_spec, found, "fork").ok
    manifest_ok = verify_reduction(ctrl_spec, product_witness(), "fork").ok
    ok = (
        chsh_ok
        and not lhv["feasible"]
        and rep.edges["Z->A"]
        and rep.edges["Z->B"]
        and rep.reduction == NO_REDUCTION_FOUND
        and ctrl_feasible
        and found_ok
        and manifest_ok
    )
    detail = (
        f"CHSH {rep.chsh:.10f}, LHV feasible {lhv['feasible']}, edges {rep.edges}, reduction {rep.reduction}; "
        f"control feasible {ctrl_feasible}, searched witness {found_ok}, manifest witness {manifest_ok}"
    )
    report(10, "CHSH", ok, detail)


def test_11_pbr(report):
    rep = classify_pbr(build_pbr_spec())
    cond = rep.conditions
    ctrl = classify_pbr(build_pbr_spec(orthogonal=True))
    ok = (
        cond["traces_ok"]
        and cond["worst_relative_trace"] <= 1e-9
        and cond["product_norm"] > 1e-3
        and rep.collider
        and not ctrl.conditions["product_ok"]
        and ctrl.conditions["product_norm"] <= 1e-3
    )
    detail = (
        f"worst relative trace {cond['worst_relative_trace']:.1e}, product norm {cond['product_norm']:.3f}, "
        f"collider {rep.collider}; orthogonal control product norm {ctrl.conditions['product_norm']:.1e}"
    )
    report(11, "PBR", ok, detail)


def _qce():
    exe = shutil.which("qce")
    return [exe] if exe else [sys.executable, "-m", "qcevents.cli"]


def test_12_determinism(report, tmp_path):
    wm = build_prepare_measure(haar_random_unitary(2, 11))
    circ = tmp_path / "circuit.json"
    circ.write_text(canonical_json(circuit_to_dict(wm.circuit)))
    bub = tmp_path / "bubble.json"
    bub.write_text(json.dumps({"bubble": list(wm.bubbles["small"])}))
    ps = tmp_path / "ps.json"
    subprocess.run(_qce() + ["preferred-set", "--circuit", str(circ), "--bubble", str(bub), "--out", str(ps)], check=True)
    spec = tmp_path / "spec.json"
    subprocess.run(_qce() + ["scenario", "build", "chsh", "--out", str(spec)], check=True)
    c, b, s, p = str(circ), str(bub), str(spec), str(ps)
    commands = {
        "validate": ["validate", "--circuit", c],
        "influences": ["influences", "--circuit", c, "--decomps", p],
        "preferred-set": ["preferred-set", "--circuit", c, "--bubble", b],
        "histories": ["histories", "--circuit", c, "--bubble", b],
        "sample": ["sample", "--circuit", c, "--bubble", b, "--n", "20", "--seed", "5"],
        "classify": ["classify", "--spec", s],
        "scenario build": ["scenario", "build", "pbr"],
    }
    differing = []
    for name, argv in commands.items():
        outs = [subprocess.run(_qce() + argv, capture_output=True, check=True).stdout for _ in range(2)]
        json.loads(outs[0])
        if outs[0] != outs[1] or not outs[0]:
            differing.append(name)
    report(12, "determinism", not differing, f"{len(commands)} commands run twice, differing {differing}")
