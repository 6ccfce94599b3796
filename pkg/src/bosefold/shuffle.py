"""Perfect-shuffle basis changes as index permutations.

The shuffle S rotates occupation tuples to the right,
``S |n_1, ..., n_K> = |n_K, n_1, ..., n_{K-1}>``, which gives
``S (A_1 x ... x A_K) S^T = A_K x A_1 x ... x A_{K-1}`` and hence
``S H_{j,j+1} S^T = H_{j+1,j+2}``.  A permutation is stored as the forward
map ``z -> pi(z)`` together with its inverse.  ``shift`` counts how many
right-rotations it performs, which is how state frames are tracked.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .fock_index import FockBasis
from .tridiag import StateVector


@dataclass(frozen=True, eq=False)
class ShufflePermutation:
    map: np.ndarray
    inverse: np.ndarray
    K: int
    shift: int = 1
    dims: tuple[int, ...] | None = None  # product frame, in the input ordering

    @property
    def dim(self) -> int:
        return self.map.size

    def __eq__(self, other):
        return isinstance(other, ShufflePermutation) and np.array_equal(self.map, other.map)

    def __hash__(self):
        return hash(self.map.tobytes())

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.map, np.arange(self.dim)))


def _make(forward: np.ndarray, K: int, shift: int = 1, dims=None) -> ShufflePermutation:
    forward = np.ascontiguousarray(forward, dtype=np.int64)
    inverse = np.empty_like(forward)
    inverse[forward] = np.arange(forward.size)
    if not np.array_equal(forward[inverse], np.arange(forward.size)):
        raise ValueError("index map is not a permutation")
    forward.setflags(write=False)
    inverse.setflags(write=False)
    return ShufflePermutation(forward, inverse, K, shift % K if K else 0, dims)


def product_shuffle(dims: Sequence[int]) -> ShufflePermutation:
    """Right-rotation of the factors of a row-major product basis.

    An index of the ``dims`` ordering is sent to the index of the rotated
    tuple in the ``(d_K, d_1, ..., d_{K-1})`` ordering.
    """
    dims = tuple(int(d) for d in dims)
    if not dims or min(dims) < 1:
        raise ValueError(f"dimensions must be positive, got {dims}")
    D = math.prod(dims)
    if D > np.iinfo(np.int64).max:
        raise OverflowError(f"product dimension {D} overflows")
    digits = np.unravel_index(np.arange(D), dims)
    rotated = (digits[-1],) + digits[:-1]
    forward = np.ravel_multi_index(rotated, (dims[-1],) + dims[:-1])
    return _make(forward, len(dims), 1, dims)


def basis_shuffle(basis: FockBasis) -> ShufflePermutation:
    """Right-rotation within a Skolem-ordered basis (island or equal caps)."""
    if not basis.is_island and len(set(basis.caps)) != 1:
        raise ValueError(f"rotating a capped basis requires equal caps, got {basis.caps}")
    rotated = np.roll(basis.tuples, 1, axis=1)
    forward = basis.index_of(rotated)
    if np.any(forward < 0):
        raise ValueError("basis is not closed under rotation")
    return _make(forward, basis.K)


def island_shuffle(N: int, K: int) -> ShufflePermutation:
    return basis_shuffle(FockBasis.island(N, K))


def transpose(p: ShufflePermutation) -> ShufflePermutation:
    dims = None
    if p.dims is not None:
        dims = (p.dims[-1],) + p.dims[:-1]
    return ShufflePermutation(p.inverse, p.map, p.K, (-p.shift) % p.K, dims)


def compose(p: ShufflePermutation, q: ShufflePermutation) -> ShufflePermutation:
    """The permutation applying ``q`` first, then ``p``."""
    if p.dim != q.dim:
        raise ValueError("dimension mismatch")
    return _make(p.map[q.map], p.K, p.shift + q.shift)


def power(p: ShufflePermutation, j: int) -> ShufflePermutation:
    if p.dims is not None and len(set(p.dims)) != 1 and j % p.K not in (0, 1):
        raise ValueError("powers of a product shuffle need equal factor dimensions")
    if j < 0:
        return power(transpose(p), -j)
    result = _make(np.arange(p.dim), p.K, 0)
    base = p
    while j:
        if j & 1:
            result = compose(base, result)
        j >>= 1
        if j:
            base = compose(base, base)
    return result


def apply_perm(p: ShufflePermutation, v, out: np.ndarray | None = None):
    """out[pi(z)] = v[z].

    Accepts a plain array or a :class:`StateVector`; a state's frame
    advances by the permutation's rotation count.
    """
    if isinstance(v, StateVector):
        return StateVector(apply_perm(p, v.amplitudes, out), (v.frame + p.shift) % p.K)
    v = np.asarray(v)
    if v.shape != (p.dim,):
        raise ValueError(f"vector of shape {v.shape} does not match permutation of size {p.dim}")
    if out is None:
        return v[p.inverse]
    if np.shares_memory(out, v):
        raise ValueError("apply_perm cannot work in place")
    np.take(v, p.inverse, out=out)
    return out


def permutation_matrix(p: ShufflePermutation) -> np.ndarray:
    """Dense S with S[pi(z), z] = 1 (small sizes only)."""
    S = np.zeros((p.dim, p.dim))
    S[p.map, np.arange(p.dim)] = 1.0
    return S
