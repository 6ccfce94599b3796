"""Real symmetric tridiagonal matrices and their block spectral forms.

A matrix is stored as its diagonal and first off-diagonal (2D - 1 numbers).
Off-diagonal entries that are exactly zero split it into irreducible blocks
that are diagonalized independently with implicit-shift QL; the resulting
:class:`BlockSpectralForm` applies ``exp(tau * scale * T)`` to vectors with
compensated arithmetic, so repeated application does not drift in norm.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from llvmlite import ir
from numba import njit, types
from numba.core import cgutils
from numba.core.extending import intrinsic

EPS = np.finfo(np.float64).eps


class ConvergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class SymTriMatrix:
    diag: np.ndarray
    offdiag: np.ndarray

    def __post_init__(self):
        d = np.ascontiguousarray(self.diag, dtype=np.float64)
        e = np.ascontiguousarray(self.offdiag, dtype=np.float64)
        if d.ndim != 1 or e.ndim != 1 or d.size < 1 or e.size != d.size - 1:
            raise ValueError(f"need D diagonal and D-1 off-diagonal entries, got {d.shape} and {e.shape}")
        if not (np.all(np.isfinite(d)) and np.all(np.isfinite(e))):
            raise ValueError("matrix entries must be finite")
        d.setflags(write=False)
        e.setflags(write=False)
        object.__setattr__(self, "diag", d)
        object.__setattr__(self, "offdiag", e)

    @property
    def dim(self) -> int:
        return self.diag.size

    @property
    def n_stored(self) -> int:
        return self.diag.size + self.offdiag.size

    def matvec(self, v: np.ndarray) -> np.ndarray:
        out = self.diag * v
        out[:-1] += self.offdiag * v[1:]
        out[1:] += self.offdiag * v[:-1]
        return out

    def to_dense(self) -> np.ndarray:
        m = np.diag(self.diag)
        if self.dim > 1:
            m += np.diag(self.offdiag, 1) + np.diag(self.offdiag, -1)
        return m


@dataclass
class StateVector:
    """Complex amplitudes plus the basis frame they refer to.

    ``frame`` counts right-rotations of the mode order relative to the
    base ordering (0 is the base frame).
    """

    amplitudes: np.ndarray
    frame: int = 0

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.frame)


def split_blocks(T: SymTriMatrix) -> list[tuple[int, int]]:
    """(start, size) of the irreducible blocks, split at exact zeros."""
    cuts = np.flatnonzero(T.offdiag == 0.0) + 1
    edges = np.concatenate([[0], cuts, [T.dim]])
    return [(int(a), int(b - a)) for a, b in zip(edges[:-1], edges[1:])]


@njit(cache=True)
def _tql_kernel(d, e, z, max_iter):
    # Implicit QL with Wilkinson-type shift. e[i] couples i and i+1; e[n-1]
    # is workspace. Returns the number of iterations, or -1 on failure.
    n = d.size
    iters = 0
    for l in range(n):
        while True:
            m = l
            while m < n - 1:
                dd = abs(d[m]) + abs(d[m + 1])
                if abs(e[m]) + dd == dd:
                    break
                m += 1
            if m == l:
                break
            if iters >= max_iter:
                return -1
            iters += 1
            g = (d[l + 1] - d[l]) / (2.0 * e[l])
            r = math.hypot(g, 1.0)
            g = d[m] - d[l] + e[l] / (g + math.copysign(r, g))
            s = 1.0
            c = 1.0
            p = 0.0
            underflow = False
            i = m - 1
            while i >= l:
                f = s * e[i]
                b = c * e[i]
                r = math.hypot(f, g)
                e[i + 1] = r
                if r == 0.0:
                    d[i + 1] -= p
                    e[m] = 0.0
                    underflow = True
                    break
                s = f / r
                c = g / r
                g = d[i + 1] - p
                r = (d[i] - g) * s + 2.0 * c * b
                p = s * r
                d[i + 1] = g + p
                g = c * r - b
                for k in range(n):
                    f = z[k, i + 1]
                    z[k, i + 1] = s * z[k, i] + c * f
                    z[k, i] = c * z[k, i] - s * f
                i -= 1
            if underflow:
                continue
            d[l] -= p
            e[l] = g
            e[m] = 0.0
    return iters


def eigh_block(diag, offdiag, *, block_start: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Eigenpairs of one symmetric tridiagonal block.

    Eigenvalues ascend; eigenvector columns are orthonormal with their first
    nonzero component positive.
    """
    d = np.array(diag, dtype=np.float64)
    n = d.size
    if n < 1 or len(offdiag) != n - 1:
        raise ValueError("block needs size >= 1 and size-1 off-diagonal entries")
    e = np.zeros(n)
    e[: n - 1] = offdiag
    z = np.eye(n)
    if n > 1 and _tql_kernel(d, e, z, 50 * n) < 0:
        raise ConvergenceError(f"QL iteration did not converge for block at {block_start} (size {n})")
    order = np.argsort(d, kind="stable")
    lam = d[order]
    q = z[:, order]
    first = np.argmax(q != 0.0, axis=0)
    signs = np.sign(q[first, np.arange(n)])
    q *= signs
    return lam, q


@dataclass(frozen=True)
class Block:
    start: int
    size: int
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray


# Extended precision for the orthogonality refinement and the phases. On
# platforms where longdouble is plain double this degrades gracefully.
_LD = np.longdouble
_LD_EPS = float(np.finfo(_LD).eps)


def _refine_orthonormal(q: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Newton-Schulz polish of a stack of orthogonal matrices, returned as
    float64 (hi, lo) pairs whose sum is orthogonal to ~eps**2.

    A float64 eigenvector matrix is only orthogonal to ~eps; applied once per
    step for 10**4 steps that fixed defect shows up as linear norm drift.
    """
    Q = q.astype(_LD)
    s = q.shape[-1]
    eye = np.eye(s, dtype=_LD)
    for _ in range(4):
        R = np.matmul(np.swapaxes(Q, -1, -2), Q) - eye
        if np.max(np.abs(R), initial=0) <= 8 * s * _LD_EPS:
            break
        Q = Q - np.matmul(Q, R) / 2
    hi = Q.astype(np.float64)
    lo = (Q - hi).astype(np.float64)
    return hi, lo


def _split(x) -> tuple[np.ndarray, np.ndarray]:
    hi = x.astype(np.float64)
    return hi, (x - hi).astype(np.float64)


@intrinsic
def _fma(typingctx, a, b, c):
    sig = types.float64(types.float64, types.float64, types.float64)

    def codegen(context, builder, signature, args):
        d = ir.DoubleType()
        fn = cgutils.get_or_insert_function(builder.module, ir.FunctionType(d, [d, d, d]), "llvm.fma.f64")
        return builder.call(fn, args)

    return sig, codegen


@njit(cache=True, nogil=True)
def _exp_kernel(b0, b1, starts, sizes, qoff, qh, ql, qth, qtl, ch, cl, sh, sl, xr, xi, outr, outi):
    # Per block: y = Q^T x, y *= phase, out = Q y. Every product and sum is
    # compensated (fma two-product, Knuth two-sum) so each stage output is a
    # single, unbiased rounding of the exact result with the hi+lo data.
    m = 1
    for b in range(b0, b1):
        m = max(m, sizes[b])
    sr = np.empty(m)
    si = np.empty(m)
    er = np.empty(m)
    ei = np.empty(m)
    yr = np.empty(m)
    yi = np.empty(m)
    for b in range(b0, b1):
        s = sizes[b]
        a0 = starts[b]
        o = qoff[b]
        for j in range(s):
            sr[j] = 0.0
            si[j] = 0.0
            er[j] = 0.0
            ei[j] = 0.0
        # y_j = sum_i Q[i, j] x_i, row i of Q is contiguous
        for i in range(s):
            u = xr[a0 + i]
            v = xi[a0 + i]
            r = o + i * s
            for j in range(s):
                h = qh[r + j]
                lo = ql[r + j]
                p = h * u
                pe = _fma(h, u, -p)
                t = sr[j] + p
                z = t - sr[j]
                er[j] += (pe + ((sr[j] - (t - z)) + (p - z))) + lo * u
                sr[j] = t
                p = h * v
                pe = _fma(h, v, -p)
                t = si[j] + p
                z = t - si[j]
                ei[j] += (pe + ((si[j] - (t - z)) + (p - z))) + lo * v
                si[j] = t
        for j in range(s):
            u = sr[j] + er[j]
            v = si[j] + ei[j]
            k = a0 + j
            # (u + iv)(c + is) with c = ch + cl, s = sh + sl
            p1 = u * ch[k]
            p2 = -v * sh[k]
            e1 = _fma(u, ch[k], -p1)
            e2 = _fma(-v, sh[k], -p2)
            t = p1 + p2
            z = t - p1
            yr[j] = t + (((p1 - (t - z)) + (p2 - z)) + e1 + e2 + (u * cl[k] - v * sl[k]))
            p1 = u * sh[k]
            p2 = v * ch[k]
            e1 = _fma(u, sh[k], -p1)
            e2 = _fma(v, ch[k], -p2)
            t = p1 + p2
            z = t - p1
            yi[j] = t + (((p1 - (t - z)) + (p2 - z)) + e1 + e2 + (u * sl[k] + v * cl[k]))
            sr[j] = 0.0
            si[j] = 0.0
            er[j] = 0.0
            ei[j] = 0.0
        # out_i = sum_j Q[i, j] y_j via rows of Q^T
        for j in range(s):
            u = yr[j]
            v = yi[j]
            r = o + j * s
            for i in range(s):
                h = qth[r + i]
                lo = qtl[r + i]
                p = h * u
                pe = _fma(h, u, -p)
                t = sr[i] + p
                z = t - sr[i]
                er[i] += (pe + ((sr[i] - (t - z)) + (p - z))) + lo * u
                sr[i] = t
                p = h * v
                pe = _fma(h, v, -p)
                t = si[i] + p
                z = t - si[i]
                ei[i] += (pe + ((si[i] - (t - z)) + (p - z))) + lo * v
                si[i] = t
        for i in range(s):
            outr[a0 + i] = sr[i] + er[i]
            outi[a0 + i] = si[i] + ei[i]


@dataclass
class BlockSpectralForm:
    """Eigen-decomposition of every irreducible block, stored flat.

    Block ``b`` covers ``[starts[b], starts[b] + sizes[b])``; its eigenvector
    matrix (columns, row-major) lives at ``qoff[b]`` in ``q_hi + q_lo`` and its
    transpose at the same offset in ``qt_hi + qt_lo``. ``eigenvalues`` is
    aligned with vector positions because the blocks tile ``[0, dim)``.
    """

    dim: int
    blocks: list[Block]
    starts: np.ndarray = field(repr=False)
    sizes: np.ndarray = field(repr=False)
    qoff: np.ndarray = field(repr=False)
    q_hi: np.ndarray = field(repr=False)
    q_lo: np.ndarray = field(repr=False)
    qt_hi: np.ndarray = field(repr=False)
    qt_lo: np.ndarray = field(repr=False)
    eigenvalues: np.ndarray = field(repr=False)
    _phase_cache: dict = field(default_factory=dict, repr=False)

    def block_sizes(self) -> np.ndarray:
        return self.sizes.copy()

    def size_histogram(self) -> dict[int, int]:
        sizes, counts = np.unique(self.sizes, return_counts=True)
        return {int(s): int(c) for s, c in zip(sizes, counts)}

    def phases(self, factor: complex) -> tuple[np.ndarray, ...]:
        """exp(factor * eigenvalues) as (re_hi, re_lo, im_hi, im_lo); memoized.

        Evaluated in extended precision so that, for imaginary ``factor``,
        the hi+lo pair has unit modulus to ~eps**2.
        """
        key = complex(factor)
        ph = self._phase_cache.get(key)
        if ph is None:
            if len(self._phase_cache) >= 16:
                self._phase_cache.clear()
            lam = self.eigenvalues.astype(_LD)
            mag = np.exp(_LD(key.real) * lam) if key.real != 0 else np.ones_like(lam)
            arg = _LD(key.imag) * lam
            ph = _split(mag * np.cos(arg)) + _split(mag * np.sin(arg))
            self._phase_cache[key] = ph
        return ph

    def work_splits(self, parts: int) -> list[tuple[int, int]]:
        """Contiguous block ranges of roughly equal matvec work."""
        w = np.cumsum(self.sizes.astype(np.float64) ** 2)
        nb = self.sizes.size
        if parts <= 1 or nb <= 1:
            return [(0, nb)]
        cuts = np.searchsorted(w, w[-1] * np.arange(1, parts) / parts, side="right")
        edges = np.unique(np.concatenate([[0], cuts, [nb]]))
        return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:])]


def spectral_form(T: SymTriMatrix) -> BlockSpectralForm:
    spans = split_blocks(T)
    starts = np.array([a for a, _ in spans], dtype=np.int64)
    sizes = np.array([s for _, s in spans], dtype=np.int64)
    qoff = np.concatenate([[0], np.cumsum(sizes**2)[:-1]]).astype(np.int64)
    n_q = int(np.sum(sizes**2))
    q_hi, q_lo, qt_hi, qt_lo = (np.empty(n_q) for _ in range(4))
    lam_all = np.empty(T.dim)
    blocks: list[Block | None] = [None] * len(spans)
    for size in np.unique(sizes):
        size = int(size)
        which = np.flatnonzero(sizes == size)
        q = np.empty((which.size, size, size))
        for i, b in enumerate(which):
            s0 = int(starts[b])
            lam, q[i] = eigh_block(T.diag[s0 : s0 + size], T.offdiag[s0 : s0 + size - 1], block_start=s0)
            lam_all[s0 : s0 + size] = lam
        hi, lo = _refine_orthonormal(q) if size > 1 else (q, np.zeros_like(q))
        for i, b in enumerate(which):
            sl = slice(qoff[b], qoff[b] + size * size)
            q_hi[sl] = hi[i].ravel()
            q_lo[sl] = lo[i].ravel()
            qt_hi[sl] = hi[i].T.ravel()
            qt_lo[sl] = lo[i].T.ravel()
            s0 = int(starts[b])
            blocks[b] = Block(s0, size, lam_all[s0 : s0 + size], q_hi[sl].reshape(size, size))
    return BlockSpectralForm(T.dim, blocks, starts, sizes, qoff, q_hi, q_lo, qt_hi, qt_lo, lam_all)


def _apply_range(F: BlockSpectralForm, ph, xr, xi, outr, outi, b0: int, b1: int) -> None:
    _exp_kernel(b0, b1, F.starts, F.sizes, F.qoff, F.q_hi, F.q_lo, F.qt_hi, F.qt_lo, *ph, xr, xi, outr, outi)


def exp_apply(
    F: BlockSpectralForm,
    tau: complex,
    v: np.ndarray,
    scale: float = 1.0,
    out: np.ndarray | None = None,
    threads: int = 1,
) -> np.ndarray:
    """out = Q exp(tau * scale * Lambda) Q^T v, block by block.

    ``out`` must not alias ``v``. Blocks touch disjoint slices and the
    arithmetic per block does not depend on how blocks are distributed,
    so any ``threads`` gives bit-identical results.
    """
    v = np.asarray(v)
    if v.shape != (F.dim,):
        raise ValueError(f"vector of shape {v.shape} does not match dimension {F.dim}")
    if out is None:
        out = np.empty(F.dim, dtype=np.complex128)
    elif out.shape != (F.dim,) or out.dtype != np.complex128:
        raise ValueError(f"output must be complex128 of shape ({F.dim},)")
    elif np.shares_memory(out, v):
        raise ValueError("exp_apply cannot work in place")
    factor = complex(tau) * float(scale)
    if factor == 0:
        out[:] = v
        return out
    ph = F.phases(factor)
    xr = np.ascontiguousarray(v.real, dtype=np.float64)
    xi = np.ascontiguousarray(v.imag, dtype=np.float64) if np.iscomplexobj(v) else np.zeros(F.dim)
    outr = np.empty(F.dim)
    outi = np.empty(F.dim)
    ranges = F.work_splits(threads)
    if len(ranges) > 1:
        with ThreadPoolExecutor(max_workers=len(ranges)) as pool:
            list(pool.map(lambda r: _apply_range(F, ph, xr, xi, outr, outi, *r), ranges))
    else:
        _apply_range(F, ph, xr, xi, outr, outi, 0, F.sizes.size)
    out.real = outr
    out.imag = outi
    return out
