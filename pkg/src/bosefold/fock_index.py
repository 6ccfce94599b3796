"""Lexicographic indexing of bosonic Fock tuples.

A K-mode occupation tuple ``(n_1, ..., n_K)`` is mapped to a single
non-negative integer by the Skolem polynomial

    z(n) = sum_{k=1..K} C(n_1 + ... + n_k + k - 1, k)

which is a bijection of N_0^K onto N_0.  Tuples of equal total occupation
("excitation islands") occupy a contiguous range of ``z``, and moving one
boson from mode 2 to mode 1 increments ``z`` by exactly one.  The latter is
what makes nearest-neighbour hopping between modes 1 and 2 tridiagonal.

Position 1 of a tuple is always the first Skolem argument ``n_1``.
Integer arithmetic is checked against the unsigned 64-bit range.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

UINT64_MAX = 2**64 - 1
INT64_MAX = 2**63 - 1

# Largest basis we are willing to materialize as an explicit tuple table.
MAX_BASIS_SIZE = 50_000_000

# Below this value the greedy unranking search scans linearly.
_LINEAR_SCAN_LIMIT = 64


class InvalidCombinationError(ValueError):
    """A K-combination was not strictly decreasing or had negative entries."""


class CapacityError(ValueError):
    """A basis is too large to materialize."""


def _check_u64(value: int, what: str) -> int:
    if value > UINT64_MAX:
        raise OverflowError(f"{what} = {value} exceeds the unsigned 64-bit range")
    return value


def binomial(n: int, k: int) -> int:
    """C(n, k) with the convention C(n, k) = 0 for n < k.

    Raises OverflowError when the result does not fit in 64 unsigned bits.
    """
    n, k = int(n), int(k)
    if n < 0 or k < 0:
        raise ValueError(f"binomial requires non-negative arguments, got ({n}, {k})")
    if n < k:
        return 0
    return _check_u64(math.comb(n, k), f"C({n}, {k})")


def _as_tuple(n: Sequence[int]) -> tuple[int, ...]:
    t = tuple(int(x) for x in n)
    if len(t) < 1:
        raise ValueError("a mode tuple needs at least one entry")
    if any(x < 0 for x in t):
        raise ValueError(f"occupation numbers must be non-negative, got {t}")
    return t


def total(n: Sequence[int]) -> int:
    """Total occupation of a mode tuple, overflow-checked."""
    return _check_u64(sum(_as_tuple(n)), "total occupation")


def rank_combination(c: Sequence[int]) -> int:
    """Rank of the K-combination ``(v_K, ..., v_1)``: sum_k C(v_k, k).

    The combination is given largest entry first and must be strictly
    decreasing with v_1 >= 0.
    """
    c = tuple(int(v) for v in c)
    if not c:
        raise InvalidCombinationError("empty combination")
    if c[-1] < 0 or any(a <= b for a, b in zip(c, c[1:])):
        raise InvalidCombinationError(f"{c} is not a strictly decreasing sequence of non-negative integers")
    K = len(c)
    rank = 0
    for pos, v in enumerate(c):
        rank = _check_u64(rank + binomial(v, K - pos), "combination rank")
    return rank


def _largest_v(V: int, k: int) -> int:
    """Largest v with C(v, k) <= V."""
    if V < _LINEAR_SCAN_LIMIT:
        v = k - 1
        while binomial(v + 1, k) <= V:
            v += 1
        return v
    # C(v, k) >= v - k + 1 for v >= k, hence v <= V + k - 1.
    lo, hi = k - 1, V + k
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if math.comb(mid, k) <= V:
            lo = mid
        else:
            hi = mid
    return lo


def unrank_combination(V: int, K: int) -> tuple[int, ...]:
    """Greedy unranking: the unique strictly decreasing ``(v_K, ..., v_1)``
    with ``rank_combination(result) == V``."""
    V, K = int(V), int(K)
    if V < 0:
        raise ValueError(f"rank must be non-negative, got {V}")
    if K < 1:
        raise ValueError(f"K must be positive, got {K}")
    _check_u64(V, "rank")
    out = []
    for k in range(K, 0, -1):
        v = _largest_v(V, k)
        out.append(v)
        V -= math.comb(v, k)
    return tuple(out)


def skolem(n: Sequence[int]) -> int:
    """Skolem index of an occupation tuple."""
    n = _as_tuple(n)
    z = 0
    partial = 0
    for k, nk in enumerate(n, start=1):
        partial += nk
        z = _check_u64(z + binomial(partial + k - 1, k), "Skolem index")
    return z


def skolem_inverse(z: int, K: int) -> tuple[int, ...]:
    """Occupation tuple with the given Skolem index.

    Unranking gives v_k = p_k + k - 1 where p_k is the k-th partial sum of
    the occupations, so n_1 = v_1 and n_k = v_k - v_{k-1} - 1.
    """
    v = unrank_combination(z, K)[::-1]  # v_1, ..., v_K
    n = [v[0]]
    for k in range(1, K):
        n.append(v[k] - v[k - 1] - 1)
    return tuple(n)


@dataclass(frozen=True)
class IslandSpec:
    """Cardinality and Skolem range of the N-excitation island on K modes."""

    K: int
    N: int
    size: int
    z_low: int
    z_high: int


def island_spec(N: int, K: int) -> IslandSpec:
    N, K = int(N), int(K)
    if N < 0 or K < 1:
        raise ValueError(f"need N >= 0 and K >= 1, got N={N}, K={K}")
    size = binomial(N + K - 1, N)
    z_low = skolem([0] * (K - 1) + [N])
    z_high = skolem([N] + [0] * (K - 1))
    if z_low + size != z_high + 1:
        raise ArithmeticError(f"island bounds inconsistent for N={N}, K={K}")
    return IslandSpec(K=K, N=N, size=size, z_low=z_low, z_high=z_high)


def _binomial_array(x: np.ndarray, k: int) -> np.ndarray:
    # C(x, i+1) = C(x, i) * (x - i) / (i + 1) is exact at every stage.
    c = np.ones_like(x)
    for i in range(k):
        c = c * (x - i) // (i + 1)
    return c


def skolem_array(tuples: np.ndarray) -> np.ndarray:
    """Vectorized Skolem index for an (M, K) integer array of tuples."""
    tuples = np.asarray(tuples, dtype=np.int64)
    if tuples.ndim != 2:
        raise ValueError("expected a 2-D array of tuples")
    if tuples.size == 0:
        return np.zeros(tuples.shape[0], dtype=np.int64)
    if tuples.min() < 0:
        raise ValueError("occupation numbers must be non-negative")
    K = tuples.shape[1]
    # Intermediates of _binomial_array are bounded by k * C(x_max, k).
    x_max = int(tuples.sum(axis=1).max()) + K - 1
    if max(k * math.comb(x_max, k) for k in range(1, K + 1)) > INT64_MAX:
        raise OverflowError(f"Skolem indices for totals up to {x_max - K + 1} on {K} modes overflow int64")
    partial = np.cumsum(tuples, axis=1)
    z = np.zeros(tuples.shape[0], dtype=np.int64)
    for k in range(1, K + 1):
        z += _binomial_array(partial[:, k - 1] + k - 1, k)
    return z


def enumerate_island(N: int, K: int) -> np.ndarray:
    """All K-tuples of total N as an (size, K) array, row i having Skolem
    index ``z_low + i``."""
    spec = island_spec(N, K)
    if spec.size > MAX_BASIS_SIZE:
        raise CapacityError(f"island N={N}, K={K} has {spec.size} states (limit {MAX_BASIS_SIZE})")
    if K == 1:
        return np.array([[N]], dtype=np.int64)
    # Stars and bars: K-1 bar positions among N+K-1 slots.
    bars = np.fromiter(
        itertools.chain.from_iterable(itertools.combinations(range(N + K - 1), K - 1)),
        dtype=np.int64,
        count=spec.size * (K - 1),
    ).reshape(spec.size, K - 1)
    edges = np.concatenate(
        [np.full((spec.size, 1), -1), bars, np.full((spec.size, 1), N + K - 1)], axis=1
    )
    tuples = np.diff(edges, axis=1) - 1
    order = np.argsort(skolem_array(tuples), kind="stable")
    return np.ascontiguousarray(tuples[order])


class FockBasis:
    """An ordered set of occupation tuples, sorted by Skolem index.

    Either a whole excitation island (contiguous Skolem range, stored
    zero-based as ``z - z_low``) or a capped product box ``n_j <= caps[j]``
    whose Skolem values are compacted to ``0..dim-1`` in increasing order.
    """

    def __init__(self, tuples: np.ndarray, *, N: int | None = None, caps: tuple[int, ...] | None = None):
        self.tuples = tuples
        self.tuples.setflags(write=False)
        self.skolem_values = skolem_array(tuples)
        self.skolem_values.setflags(write=False)
        self.N = N
        self.caps = caps
        self.z_low = int(self.skolem_values[0])

    @classmethod
    def island(cls, N: int, K: int) -> "FockBasis":
        return cls(enumerate_island(N, K), N=int(N))

    @classmethod
    def capped(cls, caps: Sequence[int]) -> "FockBasis":
        caps = tuple(int(c) for c in caps)
        if not caps or min(caps) < 0:
            raise ValueError(f"caps must be non-negative, got {caps}")
        dim = math.prod(c + 1 for c in caps)
        if dim > MAX_BASIS_SIZE:
            raise CapacityError(f"capped basis {caps} has {dim} states (limit {MAX_BASIS_SIZE})")
        grids = np.indices([c + 1 for c in caps]).reshape(len(caps), -1).T
        order = np.argsort(skolem_array(grids), kind="stable")
        return cls(np.ascontiguousarray(grids[order]), caps=caps)

    @property
    def K(self) -> int:
        return self.tuples.shape[1]

    @property
    def dim(self) -> int:
        return self.tuples.shape[0]

    @property
    def is_island(self) -> bool:
        return self.N is not None

    @property
    def label(self) -> str:
        if self.is_island:
            return f"island(N={self.N},K={self.K})"
        return "capped(" + ",".join(map(str, self.caps)) + ")"

    def index_of(self, tuples: np.ndarray) -> np.ndarray:
        """Basis positions of the given tuples; -1 where a tuple is absent."""
        tuples = np.asarray(tuples, dtype=np.int64).reshape(-1, self.K)
        z = skolem_array(tuples)
        if self.is_island:
            idx = z - self.z_low
            ok = (idx >= 0) & (idx < self.dim)
        else:
            idx = np.searchsorted(self.skolem_values, z)
            idx_c = np.minimum(idx, self.dim - 1)
            ok = self.skolem_values[idx_c] == z
            idx = idx_c
        return np.where(ok, idx, -1)

    def __repr__(self) -> str:
        return f"FockBasis({self.label}, dim={self.dim})"
