"""Tridiagonal renderings of Bose-Hubbard and optomechanical Hamiltonians.

Bose-Hubbard terms live in a Skolem-ordered :class:`FockBasis`.  The pair
term ``H_12`` couples modes 1 and 2 and carries only the on-site energy of
mode 1; the other pair terms are obtained by shuffling (see ``shuffle``),
so the periodic chain sum counts every on-site term exactly once.

Floating-point entries are formed as ``(-J) * (sqrt(n1 + 1) * sqrt(n2))``
and ``(-mu) * n + (U / 2) * (n * (n - 1))`` so that they agree bit-for-bit
with the dense Kronecker construction in ``oracle``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .fock_index import FockBasis
from .tridiag import SymTriMatrix


class ConsistencyError(RuntimeError):
    """A nonzero operator element fell outside the tridiagonal band."""


class UnsupportedConfigurationError(ValueError):
    pass


def _per_site(value, K: int, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        arr = np.full(K, float(arr))
    if arr.shape != (K,):
        raise ValueError(f"{name} must be a scalar or have one entry per site ({K}), got shape {arr.shape}")
    return arr


@dataclass
class BHParams:
    """Bose-Hubbard chain parameters.

    ``mu``, ``U`` and ``J`` are scalars or per-site sequences; ``J[j]`` is
    the hopping on the bond between site j+1 and site j+2 (cyclically).
    Exactly one of ``N`` (island basis) or ``caps`` (capped product basis)
    is given.
    """

    K: int
    mu: float | Sequence[float] = 0.0
    U: float | Sequence[float] = 0.0
    J: float | Sequence[float] = 1.0
    boundary: str = "periodic"
    N: int | None = None
    caps: tuple[int, ...] | None = None
    _basis: FockBasis | None = field(default=None, init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.K < 2:
            raise ValueError(f"a Bose-Hubbard chain needs K >= 2 sites, got {self.K}")
        if self.boundary not in ("periodic", "open"):
            raise ValueError(f"boundary must be 'periodic' or 'open', got {self.boundary!r}")
        if (self.N is None) == (self.caps is None):
            raise ValueError("give exactly one of N (island basis) or caps (capped basis)")
        if self.N is not None and self.N < 0:
            raise ValueError(f"N must be non-negative, got {self.N}")
        if self.caps is not None:
            self.caps = tuple(int(c) for c in self.caps)
            if len(self.caps) != self.K or min(self.caps) < 0:
                raise ValueError(f"caps must give K={self.K} non-negative values, got {self.caps}")
        self.mu_sites = _per_site(self.mu, self.K, "mu")
        self.U_sites = _per_site(self.U, self.K, "U")
        self.J_bonds = _per_site(self.J, self.K, "J")

    @property
    def site_independent(self) -> bool:
        return all(np.all(a == a[0]) for a in (self.mu_sites, self.U_sites, self.J_bonds))

    @property
    def basis(self) -> FockBasis:
        if self._basis is None:
            self._basis = FockBasis.island(self.N, self.K) if self.N is not None else FockBasis.capped(self.caps)
        return self._basis


def onsite_energy(n: np.ndarray, mu: float, U: float) -> np.ndarray:
    n = np.asarray(n, dtype=np.float64)
    return (-mu) * n + (U / 2) * (n * (n - 1))


def build_bh_diag(p: BHParams, site: int, basis: FockBasis | None = None) -> np.ndarray:
    """On-site energy of ``site`` (1-based) on every basis state."""
    if not 1 <= site <= p.K:
        raise ValueError(f"site must lie in [1, {p.K}], got {site}")
    basis = p.basis if basis is None else basis
    return onsite_energy(basis.tuples[:, site - 1], p.mu_sites[site - 1], p.U_sites[site - 1])


def build_bh_pair(p: BHParams, basis: FockBasis | None = None) -> SymTriMatrix:
    """H_12 (hopping between modes 1 and 2 plus on-site terms of mode 1)."""
    basis = p.basis if basis is None else basis
    t = basis.tuples
    n1 = t[:, 0].astype(np.float64)
    n2 = t[:, 1].astype(np.float64)
    diag = onsite_energy(t[:, 0], p.mu_sites[0], p.U_sites[0])

    # Hop |n1, n2, ...> -> |n1 + 1, n2 - 1, ...>; Skolem index goes up by one.
    src = np.flatnonzero(t[:, 1] >= 1)
    shifted = t[src].copy()
    shifted[:, 0] += 1
    shifted[:, 1] -= 1
    dst = basis.index_of(shifted)
    present = dst >= 0
    bad = present & (dst != src + 1)
    if np.any(bad):
        i = src[np.argmax(bad)]
        raise ConsistencyError(f"hop from basis state {i} {tuple(t[i])} lands outside the tridiagonal band")
    src = src[present]

    offdiag = np.zeros(basis.dim - 1)
    offdiag[src] = (-p.J_bonds[0]) * (np.sqrt(n1[src] + 1) * np.sqrt(n2[src]))
    return SymTriMatrix(diag, offdiag)


Drive = float | Callable[[float], float] | tuple[Sequence[float], Sequence[float]]


@dataclass
class OMParams:
    """Two-mode optomechanical oscillator with truncations ``n_a <= Na``,
    ``n_b <= Nb``.

    ``drive`` is a constant, a callable ``E(t)``, or a table ``(times,
    values)`` interpolated linearly.
    """

    Na: int
    Nb: int
    drive: Drive = 0.0

    def __post_init__(self):
        if self.Na < 0 or self.Nb < 0:
            raise ValueError(f"truncation caps must be non-negative, got Na={self.Na}, Nb={self.Nb}")
        if isinstance(self.drive, tuple):
            ts, es = (np.asarray(x, dtype=np.float64) for x in self.drive)
            if ts.ndim != 1 or ts.shape != es.shape or ts.size < 1 or np.any(np.diff(ts) <= 0):
                raise ValueError("tabulated drive needs increasing times and matching values")
            self.drive = (ts, es)

    @property
    def dim(self) -> int:
        return (self.Na + 1) * (self.Nb + 1)

    @property
    def time_dependent(self) -> bool:
        return not isinstance(self.drive, (int, float))

    def drive_at(self, t: float) -> float:
        if isinstance(self.drive, (int, float)):
            return float(self.drive)
        if isinstance(self.drive, tuple):
            return float(np.interp(t, *self.drive))
        return float(self.drive(t))

    def occupations(self, swapped: bool = False) -> tuple[np.ndarray, np.ndarray]:
        """(n_a, n_b) for each index of the a-first (or b-first) ordering."""
        if swapped:
            nb, na = np.divmod(np.arange(self.dim), self.Na + 1)
        else:
            na, nb = np.divmod(np.arange(self.dim), self.Nb + 1)
        return na, nb


def build_om_int(p: OMParams) -> SymTriMatrix:
    """n_a (b^dag + b) in the a-first ordering z = n_a (Nb + 1) + n_b."""
    na, nb = p.occupations()
    na = na.astype(np.float64)
    nb = nb.astype(np.float64)
    off = na[:-1] * np.sqrt(nb[:-1] + 1)
    off[nb[:-1] == p.Nb] = 0.0  # n_a changes across a block boundary
    return SymTriMatrix(np.zeros(p.dim), off)


def build_om_drive(p: OMParams) -> SymTriMatrix:
    """(a^dag + a) in the b-first ordering z' = n_b (Na + 1) + n_a.

    The drive amplitude E(t) is not included; it scales the exponent at
    propagation time.
    """
    na, _ = p.occupations(swapped=True)
    na = na.astype(np.float64)
    off = np.sqrt(na[:-1] + 1)
    off[na[:-1] == p.Na] = 0.0
    return SymTriMatrix(np.zeros(p.dim), off)
