import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qcevents.algebra import computational_decomp, projector_set_distance
from qcevents.errors import InputError
from qcevents.histories import consistency_check, history_distribution
from qcevents.influence import PlacedDecomp
from qcevents.models import (
    BOX_PHI,
    BOX_PSI,
    Instrument,
    build_instrument_model,
    build_prepare_measure,
    build_three_box,
    build_wigners_friend,
    compose_instruments,
    controlled_unitary,
    dilate_instrument,
    dilation_residual,
    direct_outcome_distribution,
    fourier_matrix,
    model_outcome_distribution,
    pvm_instrument,
    random_instrument,
    ry,
    shift_unitary,
    three_box_conditionals,
    three_box_projection_postulate,
)
from qcevents.preference import check_influence_pattern, preferred_set
from qcevents.tensor import haar_random_unitary, is_unitary

small = st.integers(1, 3)


def test_named_unitaries():
    for d in (1, 2, 3, 4):
        s = shift_unitary(d)
        assert is_unitary(s)
        for i in range(d):
            for j in range(d):
                assert s[i * d + (i + j) % d, i * d + j] == 1
        assert is_unitary(fourier_matrix(d), 1e-12)
    assert np.allclose(ry(np.pi) @ np.array([1, 0]), [0, 1])
    cu = controlled_unitary(2, [np.eye(2), np.array([[0, 1], [1, 0]])])
    assert np.allclose(cu, shift_unitary(2))


@given(seeds, small, small, small)
def test_random_instrument_is_complete(seed, n, d_in, d_out):
    inst = random_instrument(np.random.default_rng(seed), n, d_in, d_out)
    assert inst.completeness_residual() < 1e-12
    rho = np.eye(d_in) / d_in
    assert abs(sum(np.trace(inst.apply(i, rho)) for i in range(n)) - 1.0) < 1e-12


def test_instrument_rejects_bad_input():
    with pytest.raises(InputError):
        Instrument([])
    with pytest.raises(InputError):
        Instrument([[np.eye(2)], [np.eye(3)]])
    with pytest.raises(InputError):
        Instrument([[np.eye(2)], [np.eye(2)]]).validate()


@given(seeds, small, small, small)
def test_dilation_reproduces_instrument(seed, n, d_in, d_out):
    inst = random_instrument(np.random.default_rng(seed), n, d_in, d_out, kraus_per_map=2)
    dil = dilate_instrument(inst)
    assert is_unitary(dil.unitary, 1e-10)
    assert dilation_residual(inst, dil) < 1e-10


@given(seeds, st.integers(1, 3), st.integers(1, 3), st.integers(1, 3))
def test_model_matches_instrument(seed, n, d_in, d_out):
    inst = random_instrument(np.random.default_rng(seed), n, d_in, d_out)
    model = build_instrument_model(inst)
    got = model_outcome_distribution(model)
    assert np.allclose(got, direct_outcome_distribution([inst]), atol=1e-8)


def test_pvm_model_follows_born_rule():
    u = haar_random_unitary(3, 5)
    projs = [np.outer(u[:, k], u[:, k].conj()) for k in range(3)]
    model = build_instrument_model(pvm_instrument(projs))
    assert np.allclose(model_outcome_distribution(model), [1 / 3] * 3, atol=1e-9)


@given(seeds)
def test_sequential_composition_matches_composed_maps(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 3))
    i1 = random_instrument(rng, 2, d, d)
    i2 = random_instrument(rng, 2, d, d)
    m = compose_instruments(build_instrument_model(i1, "p_"), build_instrument_model(i2, "q_"))
    got = model_outcome_distribution(m)
    assert np.allclose(got, direct_outcome_distribution([i1, i2]), atol=1e-8)


@given(seeds)
def test_parallel_composition_is_a_product(seed):
    rng = np.random.default_rng(seed)
    i1 = random_instrument(rng, 2, 2, 1)
    i2 = random_instrument(rng, 2, 1, 2)
    m = compose_instruments(build_instrument_model(i1, "p_"), build_instrument_model(i2, "q_"), "parallel")
    got = model_outcome_distribution(m)
    expect = np.outer(direct_outcome_distribution([i1]), direct_outcome_distribution([i2]))
    assert np.allclose(got, expect, atol=1e-8)


def test_composition_errors():
    i1 = random_instrument(np.random.default_rng(0), 2, 2, 2)
    with pytest.raises(InputError):
        compose_instruments(build_instrument_model(i1), build_instrument_model(i1))
    with pytest.raises(InputError):
        compose_instruments(build_instrument_model(i1, "a"), build_instrument_model(i1, "b"), "mixed")


def _entry(c, bubble, wire, side):
    return preferred_set(c, bubble).entry(wire, side)


@given(seeds)
def test_prepare_measure_statistics(seed):
    u = haar_random_unitary(2, seed)
    wm = build_prepare_measure(u)
    ps = preferred_set(wm.circuit, wm.bubbles["small"])
    z1, z2 = ps.entry("s1", IN_), ps.entry("s2", OUT_)
    for e in (z1, z2):
        assert projector_set_distance(e.decomp, computational_decomp(2)) < 1e-9
    dist = history_distribution(wm.circuit, [z1, z2])
    for a in range(2):
        for b in range(2):
            assert abs(dist.probs[a, b] - 0.5 * abs(u[b, a]) ** 2) < 1e-9
    assert consistency_check(wm.circuit, ps).consistent
    assert check_influence_pattern(wm.circuit, ps).ok


IN_, OUT_ = "IN", "OUT"


def test_extended_bubble_records_parities():
    wm = build_prepare_measure(haar_random_unitary(2, 9))
    ps = preferred_set(wm.circuit, wm.bubbles["extended"])
    names = [("s1", IN_), ("s2", OUT_), ("a0", IN_), ("a1", OUT_), ("b0", IN_), ("b1", OUT_)]
    placed = [PlacedDecomp(ps.entry(w, s).decomp, ps.entry(w, s).at, f"z{k + 1}") for k, (w, s) in enumerate(names)]
    for p in placed:
        assert projector_set_distance(p.decomp, computational_decomp(2)) < 1e-9
    dist = history_distribution(wm.circuit, placed)
    pos = {p.label: k for k, p in enumerate(dist.placed)}
    t = np.transpose(dist.probs, [pos[f"z{k}"] for k in range(1, 7)])
    z = np.indices(t.shape)
    assert abs(t[z[0] == (z[2] ^ z[3])].sum() - 1.0) < 1e-9
    assert abs(t[z[1] == (z[4] ^ z[5])].sum() - 1.0) < 1e-9


def test_wigners_friend_bubbles():
    wm = build_wigners_friend()
    friend = preferred_set(wm.circuit, wm.bubbles["friend"])
    wigner = preferred_set(wm.circuit, wm.bubbles["wigner"])
    assert projector_set_distance(friend.entry("s2", OUT_).decomp, computational_decomp(2)) < 1e-9
    assert len(wigner.entry("s2", OUT_).decomp) == 1
    for ps in (friend, wigner):
        assert consistency_check(wm.circuit, ps, tol=1e-8).consistent
        assert check_influence_pattern(wm.circuit, ps).ok


def test_three_box_projection_postulate_oracle():
    # closed form: amplitudes <phi|P|psi> with P the box projector
    for box in range(3):
        amp_in = np.conj(BOX_PHI[box]) * BOX_PSI[box]
        amp_out = np.vdot(BOX_PHI, BOX_PSI) - amp_in
        w = np.array([abs(amp_in) ** 2, abs(amp_out) ** 2])
        assert np.allclose(three_box_projection_postulate(box), w / w.sum())
    assert np.allclose(three_box_projection_postulate(0), [1.0, 0.0])
    assert np.allclose(three_box_projection_postulate(2), [0.2, 0.8])


def test_three_box_model_matches_projection_postulate():
    m = build_three_box(2)
    assert np.allclose(three_box_conditionals(m), three_box_projection_postulate(2), atol=1e-9)
    with pytest.raises(InputError):
        build_three_box(3)
