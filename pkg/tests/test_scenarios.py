import json

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qcevents.circuit import IN, OUT, Placement
from qcevents.errors import InputError
from qcevents.influence import PlacedDecomp, influence_graph
from qcevents.lp import chsh_values
from qcevents.models import three_box_triplets
from qcevents.scenarios import (
    NO_REDUCTION_FOUND,
    ReductionWitness,
    ScenarioSpec,
    bell_conditionals,
    bell_joint,
    build_chsh_spec,
    build_complementarity_spec,
    build_local_friendliness_spec,
    build_pbr_spec,
    build_product_bell_spec,
    build_wigner_spec,
    classify,
    classify_bell,
    classify_complementarity,
    classify_local_friendliness,
    classify_pbr,
    classify_wigner,
    derive_partition,
    detect_structure,
    pbr_basis,
    pbr_operators,
    product_witness,
    random_bell_spec,
    random_complementarity_spec,
    random_pbr_spec,
    random_wigner_spec,
    search_reduction,
    spec_from_dict,
    spec_structure,
    spec_to_dict,
    stage_unitary,
    three_box_check,
    verify_reduction,
)
from qcevents.tensor import is_unitary


def _edge(spec, src, dst):
    # independent route: a two-node influence graph straight from the circuit
    g = influence_graph(spec.circuit, [spec.role(src), spec.role(dst)])
    return g.has_edge(0, 1)


def _chsh_oracle(alice, bob):
    e = np.array([[np.cos(a - b) for b in bob] for a in alice])
    p = np.zeros((2, 2, 2, 2))
    for x in range(2):
        for y in range(2):
            for a in range(2):
                for b in range(2):
                    p[a, b, x, y] = (1 + (-1) ** (a + b) * e[x, y]) / 4
    return max(chsh_values(p))


def test_complementarity_instances():
    rep = classify_complementarity(build_complementarity_spec("x"))
    assert rep.verdict and rep.influence_edge and rep.witness is not None
    assert not classify_complementarity(build_complementarity_spec("z")).verdict


def test_wigner_instances():
    spec = build_wigner_spec()
    rep = classify_wigner(spec)
    assert rep.verdict and rep.chain
    assert is_unitary(stage_unitary(spec, "Wig"), 1e-12)
    assert not classify_wigner(build_wigner_spec(same_basis=True)).verdict


def test_chsh_instance():
    spec = build_chsh_spec()
    rep = classify_bell(spec, ij=(0, 0))
    assert rep.verdict and rep.fork
    assert rep.chsh == pytest.approx(2 * np.sqrt(2), abs=1e-9)
    assert rep.reduction == NO_REDUCTION_FOUND
    assert _edge(spec, "Z", "A") and _edge(spec, "Z", "B")


def test_product_bell_control():
    spec = build_product_bell_spec()
    rep = classify_bell(spec)
    assert not rep.verdict
    assert verify_reduction(spec, product_witness(), "fork").ok
    found = search_reduction(spec, "fork")
    assert found != NO_REDUCTION_FOUND
    assert verify_reduction(spec, found, "fork").ok


def test_pbr_instance_and_control():
    rep = classify_pbr(build_pbr_spec())
    assert rep.verdict and rep.collider
    assert rep.conditions["worst_relative_trace"] <= 1e-9
    assert rep.conditions["product_relative_norm"] > 1e-3
    assert rep.commutator < 1e-10
    assert rep.reduction == NO_REDUCTION_FOUND
    ctrl = classify_pbr(build_pbr_spec(orthogonal=True))
    assert not ctrl.verdict and not ctrl.conditions["product_ok"]


def test_pbr_basis_is_orthogonal_to_each_preparation():
    basis = pbr_basis()
    assert is_unitary(basis, 1e-12)
    k0, kp = np.array([1, 0]), np.array([1, 1]) / np.sqrt(2)
    preps = [np.kron(k0, k0), np.kron(k0, kp), np.kron(kp, k0), np.kron(kp, kp)]
    for k, v in enumerate(preps):
        assert abs(np.vdot(basis[:, k], v)) < 1e-12


def test_local_friendliness_instance():
    rep = classify_local_friendliness(build_local_friendliness_spec())
    assert rep.verdict and rep.bell.fork and rep.chains
    assert not classify_local_friendliness(build_local_friendliness_spec(friend=False)).verdict


@given(seeds)
def test_complementarity_requires_influence(seed):
    spec = random_complementarity_spec(np.random.default_rng(seed))
    rep = classify_complementarity(spec)
    if rep.verdict:
        assert _edge(spec, "Z", "A")


@given(seeds)
def test_wigner_requires_chain(seed):
    spec = random_wigner_spec(np.random.default_rng(seed))
    rep = classify_wigner(spec)
    if rep.verdict:
        assert _edge(spec, "Z", "A1") and _edge(spec, "A1", "A2")


@given(st.lists(st.floats(0, 2 * np.pi), min_size=4, max_size=4))
def test_chsh_angles_match_closed_form_and_need_fork(angles):
    spec = build_chsh_spec(angles[:2], angles[2:])
    rep = classify_bell(spec, ij=(0, 0), search=False)
    oracle = _chsh_oracle(angles[:2], angles[2:])
    assert rep.chsh == pytest.approx(oracle, abs=1e-9)
    if abs(oracle - 2.0) > 1e-6:
        assert rep.verdict == (oracle > 2.0)
    if rep.verdict:
        assert _edge(spec, "Z", "A") and _edge(spec, "Z", "B")


@given(seeds)
def test_random_bell_necessity(seed):
    spec = random_bell_spec(np.random.default_rng(seed))
    rep = classify_bell(spec)
    if rep.verdict:
        assert rep.fork and rep.reduction == NO_REDUCTION_FOUND
        assert _edge(spec, "Z", "A") and _edge(spec, "Z", "B")


@given(seeds)
def test_random_pbr_necessity(seed):
    spec = random_pbr_spec(np.random.default_rng(seed))
    rho, sigma, _ = pbr_operators(spec)
    # local preparations act on separate factors of S, so rho and sigma commute
    assert max(np.abs(r @ s - s @ r).max() for row in rho for r in row for srow in sigma for s in srow) < 1e-10
    rep = classify_pbr(spec, search=False)
    if rep.verdict:
        assert _edge(spec, "X", "W") and _edge(spec, "Y", "W")


def test_bell_joint_is_normalised_and_conditionals():
    joint = bell_joint(build_chsh_spec())
    assert joint.sum() == pytest.approx(1.0, abs=1e-10)
    table, pxy = bell_conditionals(joint, 0, 0)
    assert np.allclose(table.sum(axis=(0, 1)), 1.0)
    assert pxy.sum() == pytest.approx(1.0)


@pytest.mark.parametrize(
    "build",
    [build_complementarity_spec, build_wigner_spec, build_chsh_spec, build_pbr_spec, build_local_friendliness_spec],
)
def test_spec_json_round_trip(build):
    spec = build()
    data = spec_to_dict(spec)
    back = spec_from_dict(json.loads(json.dumps(data)))
    assert spec_to_dict(back) == data
    assert classify(back).verdict == classify(spec).verdict


def test_spec_rejects_bad_input():
    with pytest.raises(InputError):
        ScenarioSpec("teleport", None)
    spec = build_complementarity_spec()
    del spec.roles["A"]
    with pytest.raises(InputError):
        spec.validate()
    with pytest.raises(InputError):
        spec_from_dict({"kind": "bell"})


def test_declared_constraint_violation_raises():
    spec = build_chsh_spec()
    spec.constraints = [("Z", "A")]
    with pytest.raises(InputError):
        classify_bell(spec)


def test_verify_reduction_names_failures():
    spec = build_chsh_spec()
    pz = list(spec.role("Z").decomp)
    pw = list(spec.role("W").decomp)
    eye = [np.eye(2, dtype=complex)]
    chk = verify_reduction(spec, ReductionWitness(pz, eye, pw, eye), "fork")
    assert not chk.ok and "za_to_b" in chk.failed
    x = [np.array([[1, 1], [1, 1]]) / 2, np.array([[1, -1], [-1, 1]]) / 2]
    chk = verify_reduction(spec, ReductionWitness(pz, x, pw, eye), "fork")
    assert "commute_z" in chk.failed
    chk = verify_reduction(spec, ReductionWitness(eye, eye, pw, eye), "fork")
    assert "rebuild_z" in chk.failed and "commute_z" not in chk.failed
    with pytest.raises(InputError):
        verify_reduction(spec, ReductionWitness(pz, eye, pw, eye), "chain")


def test_derive_partition():
    e = np.eye(4)
    target = [np.diag([1, 1, 0, 0]), np.diag([0, 0, 1, 1])]
    left = [np.diag([1, 1, 0, 0]), np.diag([0, 0, 1, 1])]
    right = [np.diag([1, 0, 1, 0]), np.diag([0, 1, 0, 1])]
    assert derive_partition(target, left, right) == {(0, 0): 0, (0, 1): 0, (1, 0): 1, (1, 1): 1}
    assert derive_partition(target, right, [e]) is None


def test_detect_structure_on_role_graphs():
    label, _ = spec_structure(build_chsh_spec())
    assert label.fork and not label.collider
    assert label.irreducibility["fork"] == "no_reduction_found"
    label, _ = spec_structure(build_product_bell_spec())
    assert label.irreducibility.get("fork", "witnessed_reducible") == "witnessed_reducible"
    label, _ = spec_structure(build_pbr_spec(), search=False)
    assert label.collider
    label, _ = spec_structure(build_wigner_spec(), search=False)
    assert label.chain
    g = influence_graph(build_chsh_spec().circuit, [])
    with pytest.raises(InputError):
        detect_structure(g, {"Z": 0})


def test_three_box_is_blocked():
    c, t0, t1 = three_box_triplets()
    rep = three_box_check(c, t0, t1)
    assert rep.triplets_consistent and rep.marginals_embedded
    assert not rep.joint_valid and rep.joint_min < 0
    assert rep.certainties_co_occur and rep.blocked
    assert rep.joint_min == pytest.approx(-1 / 27, abs=1e-9)


def test_three_box_trivial_middle_passes_vacuously():
    c, t0, t1 = three_box_triplets()
    eye = (np.eye(3, dtype=complex),)
    m0 = PlacedDecomp(eye, Placement("w1", IN), "M0")
    m1 = PlacedDecomp(eye, Placement("w1", OUT), "M1")
    rep = three_box_check(c, [t0[0], m0, t0[2]], [t1[0], m1, t1[2]])
    assert rep.joint_valid and not rep.certainties_co_occur and rep.blocked
    with pytest.raises(InputError):
        three_box_check(c, [t0[0], m0, t0[2]], [t1[2], m1, t1[0]])
