"""Dense brute-force references for small instances.

Everything here is built the slow, literal way: Kronecker strings of dense
ladder operators, restriction to basis rows/columns, and exact exponentials
from a dense Hermitian eigendecomposition (LAPACK via numpy, deliberately
independent of the QL kernel in ``tridiag``).
"""

from __future__ import annotations

import math
from functools import reduce

import numpy as np

from .fock_index import FockBasis
from .hamiltonians import BHParams, OMParams
from .shuffle import ShufflePermutation, permutation_matrix

DENSE_CAP = 4096


class OracleCapError(ValueError):
    pass


def _check_cap(D: int, cap: int = DENSE_CAP) -> None:
    if D > cap:
        raise OracleCapError(f"dense oracle limited to D <= {cap}, got {D}")


def kron(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Block layout [[a_11 B, ..., a_1n B], ...]."""
    A = np.asarray(A)
    B = np.asarray(B)
    (m, n), (p, q) = A.shape, B.shape
    out = np.zeros((m * p, n * q), dtype=np.result_type(A, B))
    for i in range(m):
        for j in range(n):
            out[i * p : (i + 1) * p, j * q : (j + 1) * q] = A[i, j] * B
    return out


def kron_all(*factors: np.ndarray) -> np.ndarray:
    return reduce(kron, factors)


def tridiagonality_check(M: np.ndarray) -> bool:
    """True iff every entry with |i - j| >= 2 is exactly zero."""
    M = np.asarray(M)
    i, j = np.indices(M.shape)
    return bool(np.all(M[np.abs(i - j) >= 2] == 0))


def annihilation(cap: int) -> np.ndarray:
    """Truncated b on levels 0..cap."""
    return np.diag(np.sqrt(np.arange(1, cap + 1, dtype=np.float64)), 1)


def creation(cap: int) -> np.ndarray:
    return annihilation(cap).T.copy()


def number(cap: int) -> np.ndarray:
    return np.diag(np.arange(cap + 1, dtype=np.float64))


def _product_caps(p: BHParams) -> tuple[int, ...]:
    return (p.N,) * p.K if p.N is not None else p.caps


def _restrict(M: np.ndarray, caps: tuple[int, ...], basis: FockBasis) -> np.ndarray:
    rows = np.ravel_multi_index(tuple(basis.tuples.T), tuple(c + 1 for c in caps))
    return M[np.ix_(rows, rows)]


def _site_string(caps, ops: dict[int, np.ndarray]) -> np.ndarray:
    return kron_all(*[ops.get(j, np.eye(c + 1)) for j, c in enumerate(caps)])


def _product_dim(caps) -> int:
    return math.prod(c + 1 for c in caps)


def dense_bh_onsite(p: BHParams, site: int) -> np.ndarray:
    """Dense d_site in the Skolem-ordered basis of ``p``."""
    caps = _product_caps(p)
    _check_cap(_product_dim(caps))
    j = site - 1
    n = number(caps[j])
    mu, U = p.mu_sites[j], p.U_sites[j]
    M = (-mu) * _site_string(caps, {j: n}) + (U / 2) * _site_string(caps, {j: n @ (n - np.eye(caps[j] + 1))})
    return _restrict(M, caps, p.basis)


def dense_bh_pair(p: BHParams, j: int) -> np.ndarray:
    """Dense H_{j, j+1} (sites cyclic, 1-based): hopping on bond j plus
    on-site terms of site j."""
    caps = _product_caps(p)
    _check_cap(_product_dim(caps))
    a, b = (j - 1) % p.K, j % p.K
    bd_a, b_a = creation(caps[a]), annihilation(caps[a])
    bd_b, b_b = creation(caps[b]), annihilation(caps[b])
    hop = _site_string(caps, {a: bd_a, b: b_b}) + _site_string(caps, {a: b_a, b: bd_b})
    n = number(caps[a])
    M = (
        (-p.J_bonds[a]) * hop
        + (-p.mu_sites[a]) * _site_string(caps, {a: n})
        + (p.U_sites[a] / 2) * _site_string(caps, {a: n @ (n - np.eye(caps[a] + 1))})
    )
    return _restrict(M, caps, p.basis)


def dense_bh(p: BHParams) -> np.ndarray:
    """Full chain Hamiltonian: sum of pair terms, plus d_K when open."""
    if p.boundary == "periodic":
        return sum(dense_bh_pair(p, j) for j in range(1, p.K + 1))
    return sum(dense_bh_pair(p, j) for j in range(1, p.K)) + dense_bh_onsite(p, p.K)


def dense_om_int(p: OMParams) -> np.ndarray:
    _check_cap(p.dim)
    return kron(number(p.Na), creation(p.Nb) + annihilation(p.Nb))


def dense_om_drive(p: OMParams) -> np.ndarray:
    """(a^dag + a) x 1_b in the a-first ordering (not tridiagonal)."""
    _check_cap(p.dim)
    return kron(creation(p.Na) + annihilation(p.Na), np.eye(p.Nb + 1))


def dense_om(p: OMParams, t: float = 0.0) -> np.ndarray:
    return dense_om_int(p) + p.drive_at(t) * dense_om_drive(p)


def dense_expm(H: np.ndarray, tau: complex) -> np.ndarray:
    """exp(tau H) for Hermitian H."""
    H = np.asarray(H)
    _check_cap(H.shape[0])
    lam, Q = np.linalg.eigh(H)
    return (Q * np.exp(tau * lam)) @ Q.conj().T


def dense_expm_apply(H: np.ndarray, tau: complex, v: np.ndarray) -> np.ndarray:
    H = np.asarray(H)
    _check_cap(H.shape[0])
    lam, Q = np.linalg.eigh(H)
    return Q @ (np.exp(tau * lam) * (Q.conj().T @ v))


def dense_perm(p: ShufflePermutation) -> np.ndarray:
    _check_cap(p.dim)
    return permutation_matrix(p)


def exact_evolution(H: np.ndarray, psi0: np.ndarray, times) -> np.ndarray:
    """Rows exp(-i t H) psi0 for each t (time-independent H)."""
    lam, Q = np.linalg.eigh(np.asarray(H))
    c = Q.conj().T @ psi0
    return np.array([Q @ (np.exp(-1j * t * lam) * c) for t in np.atleast_1d(times)])


def dense_plan_operator(plan, t: float = 0.0, kernel: bool = False) -> np.ndarray:
    """One step of ``plan`` as a dense matrix, each factor exponentiated
    exactly from the plan's tridiagonal matrices."""
    from .propagator import PermStep

    D = plan.dim
    _check_cap(D)
    U = np.eye(D, dtype=np.complex128)
    scale = plan.drive(t + plan.dt / 2) if plan.drive is not None else 1.0
    for s in plan.kernel if kernel else plan.steps:
        if isinstance(s, PermStep):
            F = permutation_matrix(plan.perms[s.perm])
        else:
            factor = plan.tau * s.fraction * (scale if s.driven else 1.0)
            F = dense_expm(plan.matrices[s.form].to_dense(), factor)
        U = F @ U
    return U
