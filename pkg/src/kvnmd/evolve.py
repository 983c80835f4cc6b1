"""Time propagation of KvN states.

The full Liouvillian splits into a classical part and an electronic part.
The classical exponential is computed directly (dense eigendecomposition or a
Lanczos-Krylov exponential); the electronic exponential is diagonal after a
Fourier transform along each momentum axis and is therefore exact. The two
are combined with the recursive 2k-th order Trotter-Suzuki product formula.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, NumericalError, ValidationError
from .grid import KvnState, PhaseSpaceGrid
from .liouville import LiouvillianOperator, _position_field, electronic_force

CLASS, EL = "class", "el"
KRYLOV_DIM = 30
KRYLOV_TOL = 1e-9


def suzuki_u(k: int) -> float:
    """Recursion weight u_k = 1 / (4 - 4^(1/(2k-1)))."""
    if k < 2:
        raise ValidationError("u_k is defined for k >= 2")
    return 1.0 / (4.0 - 4.0 ** (1.0 / (2 * k - 1)))


def _raw_stages(k: int, scale: float) -> list:
    if k == 1:
        return [(CLASS, 0.5 * scale), (EL, 1.0 * scale), (CLASS, 0.5 * scale)]
    u = suzuki_u(k)
    outer = _raw_stages(k - 1, u * scale)
    mid = _raw_stages(k - 1, (1.0 - 4.0 * u) * scale)
    return outer + outer + mid + outer + outer


def _merge(stages: list) -> list:
    out = []
    for op, c in stages:
        if out and out[-1][0] == op:
            out[-1] = (op, out[-1][1] + c)
        else:
            out.append((op, c))
    return out


def heuristic_order(mu: float, t: float, eps: float) -> int:
    """k = round(sqrt(log_5(mu t / eps) / 2 + 1)), at least 1."""
    if mu * t <= 0:
        return 1
    arg = 0.5 * math.log(mu * t / eps, 5) + 1.0
    return max(1, int(round(math.sqrt(max(arg, 0.0)))))


@dataclass(frozen=True)
class TrotterPlan:
    """A segment count plus the staged product for one segment.

    ``stages`` holds (operator, coefficient) pairs in units of ``dt`` after
    merging neighbours that act with the same operator.
    """

    k: int
    r: int
    t: float
    stages: tuple
    u: tuple = ()
    unmerged_count: int = 0

    @property
    def dt(self) -> float:
        return self.t / self.r

    @property
    def order(self) -> int:
        return 2 * self.k

    @property
    def n_exp(self) -> int:
        """Exponentials per segment, 2 * 5^(k-1) + 1."""
        return len(self.stages)

    @property
    def total_time(self) -> float:
        """Sum of |coefficient| * t over classical stages, bounded by 5^(k-1) t."""
        return self.t * sum(abs(c) for op, c in self.stages if op == CLASS)

    def coefficient_sum(self, op: str) -> float:
        return sum(c for o, c in self.stages if o == op)


def build_plan(k: int, r: int, t: float) -> TrotterPlan:
    """Plan with explicit order and segment count."""
    if int(k) != k or k < 1:
        raise ValidationError("k must be a positive integer")
    if int(r) != r or r < 1:
        raise ValidationError("r must be a positive integer")
    if t < 0:
        raise DomainError("t must be nonnegative")
    raw = _raw_stages(int(k), 1.0)
    u = tuple(suzuki_u(j) for j in range(2, int(k) + 1))
    return TrotterPlan(int(k), int(r), float(t), tuple(_merge(raw)), u, len(raw))


def segment_count(alpha_c: float, t: float, eps: float, k: int) -> int:
    """r = ceil(alpha_c^(1/2k) t^(1+1/2k) / eps^(1/2k)) with unit constant."""
    ell = 2 * k
    if t == 0:
        return 1
    val = alpha_c ** (1.0 / ell) * t ** (1.0 + 1.0 / ell) / eps ** (1.0 / ell)
    return max(1, int(math.ceil(val)))


def plan_trotter(t: float, eps: float, alpha_c, k: int | None = None,
                 mu: float | None = None) -> TrotterPlan:
    """Choose k (if unset) and r so the commutator-scaling error is below eps.

    Args:
        t: Total evolution time.
        eps: Target error in (0, 1).
        alpha_c: Nested-commutator bound, either a number (used as the
            alpha_c(2k) value) or a callable ``ell -> alpha_c(ell)``.
        k: Order parameter; ``None`` picks it from the heuristic, which needs ``mu``.
        mu: Norm bound on L used by the heuristic.
    """
    if t < 0:
        raise DomainError("t must be nonnegative")
    if not 0 < eps < 1:
        raise DomainError("eps must lie in (0, 1)")
    if k is None:
        if mu is None:
            raise ValidationError("mu is required when k is chosen automatically")
        k = heuristic_order(mu, t, eps)
    a = alpha_c(2 * k) if callable(alpha_c) else float(alpha_c)
    return build_plan(k, segment_count(a, t, eps, k), t)


def _state(grid: PhaseSpaceGrid, amps) -> KvnState:
    return KvnState.from_amplitudes(grid, amps, check=False)


def exact_propagate(L, state: KvnState, t: float) -> KvnState:
    """psi(t) = exp(-i L t) psi(0) through a Hermitian eigendecomposition."""
    if t == 0:
        return state
    if isinstance(L, LiouvillianOperator):
        w, V = L.eigh()
    else:
        M = np.asarray(L)
        if M.shape != (state.grid.eta, state.grid.eta):
            raise ValidationError("operator and state dimensions differ")
        w, V = np.linalg.eigh(0.5 * (M + M.conj().T))
    amps = V @ (np.exp(-1j * w * t) * (V.conj().T @ state.amplitudes))
    return _state(state.grid, amps)


def _lanczos(matvec, v0, m):
    """Lanczos with full reorthogonalization. Returns (V, alpha, beta, happy)."""
    n = v0.size
    V = np.zeros((m + 1, n), dtype=np.complex128)
    alpha = np.zeros(m)
    beta = np.zeros(m)
    V[0] = v0
    for j in range(m):
        w = matvec(V[j])
        alpha[j] = np.vdot(V[j], w).real
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        w = w - V[: j + 1].T @ (V[: j + 1].conj() @ w)
        b = np.linalg.norm(w)
        beta[j] = b
        if b < 1e-13 * max(1.0, abs(alpha[j])):
            return V[: j + 1], alpha[: j + 1], beta[: j + 1], True
        V[j + 1] = w / b
    return V, alpha, beta, False


def _tridiag_exp(alpha, beta, tau):
    m = alpha.size
    T = np.diag(alpha) + np.diag(beta[: m - 1], 1) + np.diag(beta[: m - 1], -1)
    w, S = np.linalg.eigh(T)
    return S @ (np.exp(-1j * w * tau) * S[0].conj())


def krylov_expm(matvec, psi: np.ndarray, tau: float, m: int = KRYLOV_DIM,
                tol: float = KRYLOV_TOL, max_substeps: int = 1 << 16) -> np.ndarray:
    """exp(-i H tau) psi for Hermitian H given as a matvec.

    Sub-steps shrink until the a-posteriori estimate
    ``beta_m |e_m^T exp(-i T h) e_1|`` per unit time falls below ``tol``.
    With full reorthogonalization each sub-step preserves the norm to roundoff.
    """
    nrm = np.linalg.norm(psi)
    if tau == 0 or nrm == 0:
        return psi.copy()
    m = min(m, psi.size)
    v = psi / nrm
    remaining, h, steps = float(tau), float(tau), 0
    sign = 1.0 if tau > 0 else -1.0
    while abs(remaining) > 0:
        h = sign * min(abs(h), abs(remaining))
        V, alpha, beta, happy = _lanczos(matvec, v, m)
        while True:
            y = _tridiag_exp(alpha, beta, h)
            err = 0.0 if happy else beta[-1] * abs(y[-1])
            if happy or err <= tol * abs(h) / abs(tau):
                break
            h *= 0.5
            steps += 1
            if steps > max_substeps:
                raise NumericalError("Krylov tolerance unreachable within the sub-step budget")
        v = V[: y.size].T @ y
        remaining -= h
        if abs(remaining) < 1e-15 * abs(tau):
            remaining = 0.0
        h *= 2.0
    return nrm * v


def propagate_classical(L_class: LiouvillianOperator, state: KvnState, tau: float,
                        method: str = "dense_exact") -> KvnState:
    """exp(-i L_class tau) psi by dense eigendecomposition or Krylov."""
    if tau == 0:
        return state
    if method == "dense_exact":
        return exact_propagate(L_class, state, tau)
    if method == "krylov":
        return _state(state.grid, krylov_expm(L_class.apply, state.amplitudes, tau))
    raise ValidationError(f"unknown classical propagation method {method!r}")


class ElectronicPhases:
    """Precomputed exp(i D^el(x) sin(2 pi l / g) / h_p) factors per coordinate.

    Raising the stored unit-time phase to the power tau gives the exact
    electronic exponential for any step length.
    """

    def __init__(self, grid: PhaseSpaceGrid, pes_table, d_e: int):
        self.grid = grid
        self.forces = [_position_field(f, grid) for f in electronic_force(grid, pes_table, d_e)]
        self.axes = []
        for n in range(grid.n_nuclei):
            for j in range(grid.spatial_dims):
                ap = grid.p_axis(n, j)
                ax = grid.axes[ap]
                g = ax.g
                if g < 2 or g & (g - 1):
                    raise ValidationError(f"momentum axis {ap} size {g} is not a power of two")
                shape = [1] * grid.ndim
                shape[ap] = g
                sin = (np.sin(2 * np.pi * np.arange(g) / g) / ax.h).reshape(shape)
                self.axes.append((ap, sin))

    def apply(self, amps: np.ndarray, tau: float) -> np.ndarray:
        x = np.asarray(amps, dtype=np.complex128).reshape(self.grid.shape)
        for force, (ap, sin) in zip(self.forces, self.axes):
            if not np.any(force):
                continue
            f = np.fft.fft(x, axis=ap)
            f *= np.exp(1j * tau * force * sin)
            x = np.fft.ifft(f, axis=ap)
        return x.reshape(-1)


def propagate_electronic(pes_table, state: KvnState, tau: float, d_e: int = 1,
                         phases: ElectronicPhases | None = None) -> KvnState:
    """Exact exp(-i L_el tau) psi via Fourier diagonalization of D^1 on momenta."""
    if tau == 0:
        return state
    if phases is None:
        phases = ElectronicPhases(state.grid, pes_table, d_e)
    return _state(state.grid, phases.apply(state.amplitudes, tau))


@dataclass
class PropagationRecord:
    """Per-segment norm drift |‖psi‖ - 1| collected by :func:`propagate`."""

    norm_drift: list = field(default_factory=list)

    @property
    def max_drift(self) -> float:
        return max(self.norm_drift, default=0.0)


def propagate(plan: TrotterPlan, L_class: LiouvillianOperator, pes_table, state: KvnState,
              d_e: int = 1, method: str = "dense_exact",
              record: PropagationRecord | None = None, callback=None) -> KvnState:
    """Apply ``plan.r`` segments of the staged Trotter product.

    Args:
        plan: Segment count and stage list.
        L_class: Classical part of the Liouvillian.
        pes_table: Tabulated PES on the position sub-grid.
        state: Initial state.
        d_e: Electronic stencil half-order.
        method: Classical propagator, ``dense_exact`` or ``krylov``.
        record: Optional collector for per-segment norm drift.
        callback: Optional ``f(segment_index, state)`` called after each segment.
    """
    if L_class.grid != state.grid:
        raise ValidationError("operator and state grids differ")
    if plan.t == 0:
        return state
    phases = ElectronicPhases(state.grid, pes_table, d_e)
    dt = plan.dt
    amps = state.amplitudes.copy()
    n0 = np.linalg.norm(amps)
    for seg in range(plan.r):
        try:
            for op, c in plan.stages:
                if op == CLASS:
                    amps = propagate_classical(L_class, _state(state.grid, amps), c * dt,
                                               method).amplitudes
                else:
                    amps = phases.apply(amps, c * dt)
        except NumericalError as exc:
            raise NumericalError(f"segment {seg}: {exc}") from exc
        if record is not None:
            record.norm_drift.append(abs(np.linalg.norm(amps) - n0))
        if callback is not None:
            callback(seg, _state(state.grid, amps))
    return _state(state.grid, amps)
