"""Split-operator propagators built from tridiagonal factors and shuffles.

A :class:`PropagatorPlan` is a list of steps in the order they act on the
state: exponentials of a tridiagonal term (through its block spectral form)
and index permutations.  The time step enters as tau = -i dt (hbar = 1).

Bose-Hubbard chains use a single pair term ``H_12`` and the shuffle ``S``:

* first order, descending:  (e^{tau H12} S)^K
* first order, ascending:   (S^T e^{tau H12})^K
* second order:             (e^{tau/2 H12} S)^K (S^T e^{tau/2 H12})^K

and with open boundaries K-1 pair factors plus one on-site factor
``e^{tau d_1}`` that the surrounding shuffles carry to site K.  The driven
optomechanical system alternates ``e^{tau H_int}`` with the drive
exponential taken in the swapped (b-first) ordering.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .hamiltonians import (
    BHParams,
    OMParams,
    UnsupportedConfigurationError,
    build_bh_diag,
    build_bh_pair,
    build_om_drive,
    build_om_int,
)
from .shuffle import ShufflePermutation, apply_perm, basis_shuffle, product_shuffle, transpose
from .tridiag import BlockSpectralForm, StateVector, SymTriMatrix, exp_apply, spectral_form

ORDERS = ("first-ascending", "first-descending", "second")


class FrameMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class ExpStep:
    form: str
    fraction: float = 1.0
    driven: bool = False  # exponent scaled by the drive E(t + dt/2)


@dataclass(frozen=True)
class PermStep:
    perm: str


@dataclass
class BHModel:
    params: BHParams
    pair: SymTriMatrix
    shuffle: ShufflePermutation
    last_site: np.ndarray  # on-site energies of site K (open chains)

    @property
    def basis(self):
        return self.params.basis

    def energy(self, psi: np.ndarray, t: float = 0.0) -> float:
        # <psi| S^{j-1} H12 S^{T(j-1)} |psi> = <phi_j| H12 |phi_j>, phi_j = S^{T(j-1)} psi
        K = self.params.K
        n_pairs = K if self.params.boundary == "periodic" else K - 1
        st = transpose(self.shuffle)
        phi = psi
        e = 0.0
        for j in range(n_pairs):
            if j:
                phi = apply_perm(st, phi)
            e += float(np.vdot(phi, self.pair.matvec(phi)).real)
        if self.params.boundary == "open":
            e += float(np.dot(self.last_site, np.abs(psi) ** 2))
        return e

    def occupations(self, psi: np.ndarray) -> np.ndarray:
        return (np.abs(psi) ** 2) @ self.basis.tuples

    def column_names(self) -> list[str]:
        return [f"n_{j}" for j in range(1, self.params.K + 1)]


@dataclass
class OMModel:
    params: OMParams
    interaction: SymTriMatrix
    drive: SymTriMatrix  # b-first ordering
    shuffle: ShufflePermutation  # a-first -> b-first

    def energy(self, psi: np.ndarray, t: float = 0.0) -> float:
        e = float(np.vdot(psi, self.interaction.matvec(psi)).real)
        E = self.params.drive_at(t)
        if E != 0.0:
            phi = apply_perm(self.shuffle, psi)
            e += E * float(np.vdot(phi, self.drive.matvec(phi)).real)
        return e

    def occupations(self, psi: np.ndarray) -> np.ndarray:
        na, nb = self.params.occupations()
        prob = np.abs(psi) ** 2
        return np.array([prob @ na, prob @ nb], dtype=np.float64)

    def boundary_population(self, psi: np.ndarray) -> float:
        """Probability on states at a truncation cap (n_a = Na or n_b = Nb)."""
        na, nb = self.params.occupations()
        edge = (na == self.params.Na) | (nb == self.params.Nb)
        return float(np.sum(np.abs(psi[edge]) ** 2))

    def column_names(self) -> list[str]:
        return ["n_a", "n_b"]


@dataclass
class PropagatorPlan:
    steps: list  # application order
    order: str
    boundary: str | None
    dt: float
    matrices: dict[str, SymTriMatrix]
    forms: dict[str, BlockSpectralForm]
    perms: dict[str, ShufflePermutation]
    model: BHModel | OMModel
    drive: Callable[[float], float] | None = None
    threads: int = 1
    kernel: list = field(init=False, repr=False)

    def __post_init__(self):
        self.kernel = compact(self.steps, self.perms)

    @property
    def dim(self) -> int:
        return next(iter(self.matrices.values())).dim

    @property
    def tau(self) -> complex:
        return -1j * self.dt

    def factor_string(self) -> str:
        """The step list in operator-product notation (rightmost acts first)."""
        words = []
        for s in reversed(self.steps):
            if isinstance(s, PermStep):
                words.append("S^T" if s.perm == "ST" else s.perm)
            else:
                frac = "tau" if s.fraction == 1 else ("tau/2" if s.fraction == 0.5 else f"{s.fraction:g}*tau")
                drive = "*E" if s.driven else ""
                words.append(f"exp({frac}{drive}*{s.form})")
        return " ".join(words)

    def net_shift(self) -> int:
        K = next(iter(self.perms.values())).K
        return sum(self.perms[s.perm].shift for s in self.steps if isinstance(s, PermStep)) % K


def compact(steps: Sequence, perms: dict[str, ShufflePermutation]) -> list:
    """Cancel adjacent inverse permutations and merge adjacent exponentials
    of the same term."""
    out: list = []
    for s in steps:
        prev = out[-1] if out else None
        if isinstance(s, PermStep) and isinstance(prev, PermStep):
            if np.array_equal(perms[prev.perm].map, perms[s.perm].inverse):
                out.pop()
                continue
        if isinstance(s, ExpStep) and isinstance(prev, ExpStep):
            if prev.form == s.form and prev.driven == s.driven:
                out[-1] = ExpStep(s.form, prev.fraction + s.fraction, s.driven)
                continue
        out.append(s)
    return out


def _pair_sweeps(order: str, boundary: str, K: int) -> list:
    e, e_half, d = ExpStep("H12"), ExpStep("H12", 0.5), ExpStep("d1")
    S, ST = PermStep("S"), PermStep("ST")
    if boundary == "periodic":
        if order == "first-descending":
            return [S, e] * K
        if order == "first-ascending":
            return [e, ST] * K
        return [e_half, ST] * K + [S, e_half] * K
    if order == "first-descending":
        return [S, d] + [S, e] * (K - 1)
    if order == "first-ascending":
        return [e, ST] * (K - 1) + [d, ST]
    return [e_half, ST] * (K - 1) + [d] + [S, e_half] * (K - 1)


def plan_bh(
    params: BHParams, order: str = "second", dt: float = 0.01, threads: int = 1, timings: dict | None = None
) -> PropagatorPlan:
    """Plan for a site-independent chain; ``timings`` (if given) receives
    wall-clock seconds for the ``build`` and ``spectral`` phases."""
    if order not in ORDERS:
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    if not params.site_independent:
        raise UnsupportedConfigurationError(
            "shuffle recycling of H_12 requires site-independent mu, U and J"
        )
    t0 = time.perf_counter()
    pair = build_bh_pair(params)
    S = basis_shuffle(params.basis)
    matrices = {"H12": pair}
    if params.boundary == "open":
        matrices["d1"] = SymTriMatrix(build_bh_diag(params, 1), np.zeros(pair.dim - 1))
    model = BHModel(params, pair, S, build_bh_diag(params, params.K))
    t1 = time.perf_counter()
    forms = {name: spectral_form(m) for name, m in matrices.items()}
    if timings is not None:
        timings.update(build=t1 - t0, spectral=time.perf_counter() - t1)
    return PropagatorPlan(
        steps=_pair_sweeps(order, params.boundary, params.K),
        order=order,
        boundary=params.boundary,
        dt=float(dt),
        matrices=matrices,
        forms=forms,
        perms={"S": S, "ST": transpose(S)},
        model=model,
        threads=threads,
    )


def plan_om(
    params: OMParams, order: str = "second", dt: float = 0.01, threads: int = 1, timings: dict | None = None
) -> PropagatorPlan:
    if order not in ORDERS + ("first",):
        raise ValueError(f"order must be one of {ORDERS}, got {order!r}")
    t0 = time.perf_counter()
    S = product_shuffle((params.Na + 1, params.Nb + 1))
    matrices = {"Hint": build_om_int(params), "Hdrive": build_om_drive(params)}
    t1 = time.perf_counter()
    forms = {name: spectral_form(m) for name, m in matrices.items()}
    if timings is not None:
        timings.update(build=t1 - t0, spectral=time.perf_counter() - t1)
    drive_sandwich = [PermStep("S"), ExpStep("Hdrive", 1.0, driven=True), PermStep("ST")]
    if order in ("first", "first-ascending"):
        steps = [ExpStep("Hint")] + drive_sandwich
    elif order == "first-descending":
        steps = drive_sandwich + [ExpStep("Hint")]
    else:
        steps = [ExpStep("Hint", 0.5)] + drive_sandwich + [ExpStep("Hint", 0.5)]
    return PropagatorPlan(
        steps=steps,
        order=order,
        boundary=None,
        dt=float(dt),
        matrices=matrices,
        forms=forms,
        perms={"S": S, "ST": transpose(S)},
        model=OMModel(params, matrices["Hint"], matrices["Hdrive"], S),
        drive=params.drive_at,
        threads=threads,
    )


def step(plan: PropagatorPlan, state: StateVector, t: float = 0.0) -> StateVector:
    """Advance ``state`` (in the base frame) by one time step from ``t``."""
    if state.frame != 0:
        raise FrameMismatchError(f"state is in frame {state.frame}, plan expects the base frame")
    if state.dim != plan.dim:
        raise ValueError(f"state dimension {state.dim} does not match plan dimension {plan.dim}")
    a = state.amplitudes.copy()
    b = np.empty_like(a)
    scale = plan.drive(t + plan.dt / 2) if plan.drive is not None else 1.0
    for s in plan.kernel:
        if isinstance(s, PermStep):
            np.take(a, plan.perms[s.perm].inverse, out=b)
        else:
            exp_apply(
                plan.forms[s.form], plan.tau * s.fraction, a, scale=scale if s.driven else 1.0, out=b,
                threads=plan.threads,
            )
        a, b = b, a
    return StateVector(a, (state.frame + plan.net_shift()) % next(iter(plan.perms.values())).K)


OBSERVERS = ("norm", "energy", "occupations", "boundary")


def evolve(
    plan: PropagatorPlan,
    state0: StateVector,
    n_steps: int,
    observers: Iterable[str] = ("norm", "energy", "occupations"),
    sample_every: int = 1,
    t0: float = 0.0,
    on_sample: Callable[[int, float, StateVector], dict] | None = None,
) -> dict[str, np.ndarray]:
    """Propagate ``n_steps`` steps, recording observables every
    ``sample_every`` steps (and at the last step).

    Returns columns ``step``, ``t`` and one column per observable; the
    optional ``on_sample(step, t, state)`` hook may return extra columns.
    """
    observers = tuple(observers)
    unknown = set(observers) - set(OBSERVERS)
    if unknown:
        raise ValueError(f"unknown observers {sorted(unknown)}; choose from {OBSERVERS}")
    if "boundary" in observers and not isinstance(plan.model, OMModel):
        raise ValueError("boundary population is only defined for the optomechanical model")
    if n_steps < 0 or sample_every < 1:
        raise ValueError("need n_steps >= 0 and sample_every >= 1")

    rows: dict[str, list] = {"step": [], "t": []}

    def record(k: int, t: float, st: StateVector):
        psi = st.amplitudes
        rows["step"].append(k)
        rows["t"].append(t)
        if "norm" in observers:
            rows.setdefault("norm", []).append(float(np.linalg.norm(psi)))
        if "energy" in observers:
            rows.setdefault("energy", []).append(plan.model.energy(psi, t))
        if "occupations" in observers:
            for name, val in zip(plan.model.column_names(), plan.model.occupations(psi)):
                rows.setdefault(name, []).append(float(val))
        if "boundary" in observers:
            rows.setdefault("boundary_pop", []).append(plan.model.boundary_population(psi))
        if on_sample is not None:
            for name, val in on_sample(k, t, st).items():
                rows.setdefault(name, []).append(val)

    state = state0
    record(0, t0, state)
    for k in range(1, n_steps + 1):
        t = t0 + (k - 1) * plan.dt
        state = step(plan, state, t)
        if k % sample_every == 0 or k == n_steps:
            record(k, t0 + k * plan.dt, state)
    return {name: np.asarray(col) for name, col in rows.items()}


def fock_state(basis, occupation: Sequence[int]) -> StateVector:
    """Basis vector |n_1, ..., n_K> of a Skolem-ordered basis."""
    idx = int(basis.index_of([list(occupation)])[0])
    if idx < 0:
        raise ValueError(f"{tuple(occupation)} is not in the basis {basis.label}")
    psi = np.zeros(basis.dim, dtype=np.complex128)
    psi[idx] = 1.0
    return StateVector(psi)
