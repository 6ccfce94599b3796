import numpy as np
import pytest

from bosefold.fock_index import FockBasis
from bosefold.hamiltonians import BHParams, build_bh_pair
from bosefold.oracle import dense_bh_pair, kron_all
from bosefold.shuffle import (
    apply_perm,
    basis_shuffle,
    compose,
    island_shuffle,
    permutation_matrix,
    power,
    product_shuffle,
    transpose,
)
from bosefold.tridiag import StateVector


def test_product_shuffle_2x2():
    p = product_shuffle((2, 2))
    assert p.map.tolist() == [0, 2, 1, 3]
    rng = np.random.default_rng(0)
    A, B = rng.standard_normal((2, 2, 2))
    S = permutation_matrix(p)
    assert np.allclose(S @ np.kron(A, B) @ S.T, np.kron(B, A))


def test_product_shuffle_single_factor():
    assert product_shuffle((5,)).is_identity()


@pytest.mark.parametrize("dims", [(2, 3), (3, 2), (2, 3, 4), (3, 3, 3), (2, 1, 2, 3)])
def test_product_shuffle_rollover(dims):
    rng = np.random.default_rng(len(dims))
    mats = [rng.standard_normal((d, d)) for d in dims]
    S = permutation_matrix(product_shuffle(dims))
    rolled = [mats[-1]] + mats[:-1]
    assert np.allclose(S @ kron_all(*mats) @ S.T, kron_all(*rolled), rtol=0, atol=1e-13)


def test_island_shuffle_n1_k3():
    assert island_shuffle(1, 3).map.tolist() == [2, 0, 1]


@pytest.mark.parametrize("N,K", [(0, 2), (3, 2), (4, 3), (5, 3), (3, 4), (4, 5)])
def test_island_shuffle_period(N, K):
    p = island_shuffle(N, K)
    assert power(p, K).is_identity()
    for j in range(1, K):
        assert not power(p, j).is_identity() or N == 0


def test_transpose_and_power_identities():
    p = island_shuffle(4, 5)
    assert transpose(transpose(p)) == p
    assert power(transpose(p), 4) == p
    assert compose(p, transpose(p)).is_identity()
    assert power(p, -1) == transpose(p)
    assert power(p, 0).is_identity()


@pytest.mark.parametrize("N", range(6))
def test_conjugation_recycling_k3(N):
    p = BHParams(K=3, mu=0.3, U=1.2, J=0.8, N=N)
    S = permutation_matrix(basis_shuffle(p.basis))
    H12 = build_bh_pair(p).to_dense()
    for j in (1, 2, 3):
        Sj = np.linalg.matrix_power(S, j - 1)
        assert np.array_equal(Sj @ H12 @ Sj.T, dense_bh_pair(p, j))


def test_conjugation_pins_direction():
    p = BHParams(K=3, U=1.0, J=1.0, N=4)
    S = permutation_matrix(island_shuffle(4, 3))
    H12 = dense_bh_pair(p, 1)
    assert np.array_equal(S @ H12 @ S.T, dense_bh_pair(p, 2))
    assert np.array_equal(S @ dense_bh_pair(p, 2) @ S.T, dense_bh_pair(p, 3))
    assert np.array_equal(S.T @ H12 @ S, dense_bh_pair(p, 3))
    assert not np.array_equal(S.T @ H12 @ S, dense_bh_pair(p, 2))


def test_conjugation_k4_spot():
    p = BHParams(K=4, mu=0.1, U=0.9, J=1.1, N=3)
    S = permutation_matrix(basis_shuffle(p.basis))
    H12 = build_bh_pair(p).to_dense()
    for j in range(1, 5):
        Sj = np.linalg.matrix_power(S, j - 1)
        assert np.array_equal(Sj @ H12 @ Sj.T, dense_bh_pair(p, j))


def test_capped_shuffle():
    basis = FockBasis.capped((2, 2, 2))
    p = basis_shuffle(basis)
    assert power(p, 3).is_identity()
    with pytest.raises(ValueError):
        basis_shuffle(FockBasis.capped((2, 1, 2)))


def test_apply_perm():
    rng = np.random.default_rng(1)
    p = island_shuffle(3, 4)
    v = rng.standard_normal(p.dim) + 1j * rng.standard_normal(p.dim)
    out = apply_perm(p, v)
    assert np.array_equal(out[p.map], v)
    assert np.array_equal(apply_perm(transpose(p), out), v)
    # exact: the same products, merely reordered
    assert np.array_equal(np.sort(np.abs(out) ** 2), np.sort(np.abs(v) ** 2))
    w = rng.standard_normal(p.dim)
    assert np.array_equal(np.sort_complex(apply_perm(p, w).conj() * out), np.sort_complex(w.conj() * v))
    assert np.allclose(permutation_matrix(p) @ v, out)
    ident = power(p, 0)
    assert np.array_equal(apply_perm(ident, v), v)


def test_apply_perm_period_on_states():
    p = island_shuffle(1, 3)
    s = StateVector(np.array([1.0, 2.0, 3.0]))
    r = s
    for k in range(3):
        r = apply_perm(p, r)
        assert r.frame == (k + 1) % 3
    assert np.array_equal(r.amplitudes, s.amplitudes)
    assert apply_perm(transpose(p), s).frame == 2


def test_apply_perm_errors():
    p = island_shuffle(2, 3)
    with pytest.raises(ValueError):
        apply_perm(p, np.ones(p.dim + 1))
    v = np.ones(p.dim)
    with pytest.raises(ValueError):
        apply_perm(p, v, out=v)
    out = np.empty(p.dim)
    assert apply_perm(p, v, out=out) is out
