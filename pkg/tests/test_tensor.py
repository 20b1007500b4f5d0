import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import seeds
from qcevents.errors import InputError, ResourceLimit
from qcevents.tensor import (
    check_dim,
    complete_isometry,
    dagger,
    embed,
    haar_random_unitary,
    herm_eig_projectors,
    is_hermitian,
    is_projector,
    is_unitary,
    kron_all,
    matrix_from_json,
    matrix_to_json,
    nullspace,
    orthonormalize,
    partial_trace,
    permutation_matrix,
    permute_factors,
    random_hermitian,
)


def partial_trace_loops(m, dims, keep):
    """Entry-by-entry sum over the traced factors."""
    keep = sorted(keep)
    traced = [k for k in range(len(dims)) if k not in keep]
    kd = [dims[k] for k in keep]
    out = np.zeros((int(np.prod(kd)), int(np.prod(kd))), dtype=complex)
    t = m.reshape(list(dims) * 2)
    for ko in itertools.product(*[range(d) for d in kd]):
        for ki in itertools.product(*[range(d) for d in kd]):
            acc = 0.0
            for tr in itertools.product(*[range(dims[k]) for k in traced]):
                row = [0] * len(dims)
                col = [0] * len(dims)
                for k, v in zip(keep, ko):
                    row[k] = v
                for k, v in zip(keep, ki):
                    col[k] = v
                for k, v in zip(traced, tr):
                    row[k] = v
                    col[k] = v
                acc += t[tuple(row + col)]
            out[np.ravel_multi_index(ko, kd), np.ravel_multi_index(ki, kd)] = acc
    return out


@given(seeds, st.lists(st.integers(1, 3), min_size=1, max_size=3))
def test_partial_trace_matches_loop_oracle(seed, dims):
    rng = np.random.default_rng(seed)
    d = int(np.prod(dims))
    m = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    keep = sorted(rng.choice(len(dims), size=int(rng.integers(0, len(dims) + 1)), replace=False).tolist())
    got = partial_trace(m, dims, keep)
    assert np.allclose(got, partial_trace_loops(m, dims, keep), atol=1e-10)


@given(seeds, st.lists(st.integers(1, 3), min_size=1, max_size=4))
def test_permutation_matrix_moves_basis_states(seed, dims):
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(dims)).tolist()
    p = permutation_matrix(dims, order)
    assert is_unitary(p)
    for idx in itertools.product(*[range(d) for d in dims]):
        src = np.ravel_multi_index(idx, dims)
        dst = np.ravel_multi_index([idx[k] for k in order], [dims[k] for k in order])
        assert p[dst, src] == 1


@given(seeds)
def test_permute_factors_of_product_reorders_kron(seed):
    rng = np.random.default_rng(seed)
    dims = [2, 3, 2]
    ops = [rng.normal(size=(d, d)) for d in dims]
    order = [2, 0, 1]
    got = permute_factors(kron_all(ops), dims, order)
    assert np.allclose(got, kron_all([ops[k] for k in order]))


def test_embed_places_operator_on_factor():
    x = np.array([[0, 1], [1, 0]])
    got = embed(x, [3, 2, 2], 1)
    assert np.allclose(got, kron_all([np.eye(3), x, np.eye(2)]))


@given(seeds, st.integers(1, 6))
def test_haar_unitary_is_unitary_and_seeded(seed, d):
    u = haar_random_unitary(d, seed)
    assert is_unitary(u, 1e-12)
    assert np.array_equal(u, haar_random_unitary(d, seed))


@given(seeds, st.integers(1, 5))
def test_herm_eig_projectors_resolve_operator(seed, d):
    rng = np.random.default_rng(seed)
    h = random_hermitian(d, rng)
    pairs = herm_eig_projectors(h)
    assert np.allclose(sum(lam * p for lam, p in pairs), h, atol=1e-9)
    assert np.allclose(sum(p for _, p in pairs), np.eye(d), atol=1e-9)
    for _, p in pairs:
        assert is_projector(p, 1e-9)
    assert is_hermitian(h)


def test_herm_eig_groups_degenerate_eigenvalues():
    h = np.diag([1.0, 1.0, 2.0])
    pairs = herm_eig_projectors(h)
    assert [lam for lam, _ in pairs] == [1.0, 2.0]
    assert [int(round(np.trace(p).real)) for _, p in pairs] == [2, 1]


@given(seeds)
def test_nullspace_vectors_are_annihilated(seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(3, 6)) + 1j * rng.normal(size=(3, 6))
    ns = nullspace(a)
    assert ns.shape == (6, 3)
    assert np.allclose(a @ ns, 0, atol=1e-10)
    assert np.allclose(dagger(ns) @ ns, np.eye(3), atol=1e-10)


def test_orthonormalize_drops_dependent_operators():
    ops = [np.eye(2), 2 * np.eye(2), np.diag([1.0, 0.0])]
    basis = orthonormalize(ops)
    assert len(basis) == 2


@given(seeds)
def test_complete_isometry_keeps_columns(seed):
    rng = np.random.default_rng(seed)
    v = haar_random_unitary(4, rng)[:, :2]
    u = complete_isometry(v)
    assert is_unitary(u, 1e-10)
    assert np.allclose(u[:, :2], v)


@given(seeds, st.integers(1, 4), st.integers(1, 4))
def test_matrix_json_round_trip(seed, r, c):
    rng = np.random.default_rng(seed)
    m = rng.normal(size=(r, c)) + 1j * rng.normal(size=(r, c))
    assert np.array_equal(matrix_from_json(matrix_to_json(m), r, c), m)


def test_matrix_json_rejects_bad_entries():
    with pytest.raises(InputError):
        matrix_from_json([[1.0]])
    with pytest.raises(InputError):
        matrix_from_json([[1.0, 0.0], [0.0, 0.0]])


def test_dimension_cap_is_configurable(monkeypatch):
    monkeypatch.setenv("QCE_MAX_DIM", "8")
    assert check_dim(8) == 8
    with pytest.raises(ResourceLimit):
        check_dim(9)
    monkeypatch.delenv("QCE_MAX_DIM")
    assert check_dim(4096) == 4096
