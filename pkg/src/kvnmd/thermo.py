"""Thermodynamic estimators on NVT KvN states.

The diagonal of the reduced system density is the |psi|^2 marginal after
summing out the bath momentum. Entropy, internal energy and free energy are
then exact reductions over that probability vector.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError, ValidationError
from .grid import KvnState, PhaseSpaceGrid
from .liouville import SystemParams


@dataclass(frozen=True)
class DiagonalDensity:
    """Probabilities over the system sub-grid (positions, virtual momenta, s)."""

    grid: PhaseSpaceGrid
    probabilities: np.ndarray

    def __post_init__(self):
        p = np.array(self.probabilities, dtype=float).reshape(system_shape(self.grid))
        if np.any(p < 0) or not np.all(np.isfinite(p)):
            raise ValidationError("probabilities must be finite and nonnegative")
        if abs(p.sum() - 1.0) > 1e-9:
            raise ValidationError(f"probabilities sum to {p.sum()!r}, expected 1")
        p.flags.writeable = False
        object.__setattr__(self, "probabilities", p)

    @property
    def eta(self) -> int:
        return self.probabilities.size


@dataclass(frozen=True)
class ThermoReport:
    S_G: float
    U_kin: float
    U_pot: float
    U_Eel: float
    U: float
    F: float
    T: float

    @property
    def S_G_bits(self) -> float:
        return self.S_G / math.log(2)

    def to_json(self) -> str:
        d = asdict(self)
        d["S_G_bits"] = self.S_G_bits
        return json.dumps(d, sort_keys=True)


def system_shape(grid: PhaseSpaceGrid) -> tuple:
    if grid.ensemble != "NVT":
        raise ValidationError("thermodynamic estimators need an NVT-shaped grid")
    return grid.shape[:-1]


def extract_diagonal(state: KvnState) -> DiagonalDensity:
    """Sum |psi|^2 over the bath momentum axis."""
    shape = system_shape(state.grid)
    rho = state.density.reshape(state.grid.shape).sum(axis=-1)
    total = rho.sum()
    if total <= 0:
        raise ValidationError("state has zero norm")
    return DiagonalDensity(state.grid, (rho / total).reshape(shape))


def gibbs_entropy(d: DiagonalDensity, k_B: float = 1.0) -> float:
    """-k_B sum p ln p, with 0 ln 0 = 0."""
    p = d.probabilities.reshape(-1)
    nz = p[p > 0]
    return float(-k_B * np.sum(nz * np.log(nz)))


def _system_axis_values(grid: PhaseSpaceGrid, axis: int) -> np.ndarray:
    v = grid.axes[axis].values
    shape = [1] * (grid.ndim - 1)
    shape[axis] = -1
    return v.reshape(shape)


def energy_diagonals(grid: PhaseSpaceGrid, params: SystemParams, pes_table) -> tuple:
    """Diagonals of the kinetic, Coulomb and electronic parts of H_nuc.

    Kinetic: sum p'^2 / (m sigma^2). Coulomb: sum over ordered pairs n != n'
    of Z_n Z_n' / sqrt(r^2 + Delta^2). Electronic: the PES table. Each is
    shaped to broadcast over the system sub-grid.
    """
    shape = system_shape(grid)
    table = np.asarray(pes_table, dtype=float)
    if table.size != int(np.prod(grid.position_shape)):
        raise ValidationError("PES table does not cover the position sub-grid")
    if not np.all(np.isfinite(table)):
        raise ValidationError("PES table has missing entries")
    sigma = _system_axis_values(grid, grid.s_axis)
    kin = np.zeros(shape)
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            pp = _system_axis_values(grid, grid.p_axis(n, j))
            kin = kin + pp ** 2 / (params.masses[n] * sigma ** 2)
    pot = np.zeros(shape)
    for n in range(grid.n_nuclei):
        for m in range(grid.n_nuclei):
            if m == n:
                continue
            r2 = 0.0
            for j in range(grid.spatial_dims):
                an, am = grid.x_axis(n, j), grid.x_axis(m, j)
                d = _system_axis_values(grid, an) - _system_axis_values(grid, am)
                if params.minimum_image:
                    box = grid.axes[an].extent
                    d = d - box * np.round(d / box)
                r2 = r2 + d ** 2
            pot = pot + params.charges[n] * params.charges[m] / np.sqrt(r2 + params.delta ** 2)
    eshape = [1] * (grid.ndim - 1)
    for a, g in zip(grid.position_axes, grid.position_shape):
        eshape[a] = g
    eel = np.broadcast_to(table.reshape(eshape), shape)
    return kin, np.broadcast_to(pot, shape), eel


def internal_energy(d: DiagonalDensity, params: SystemParams, pes_table) -> tuple:
    """(U_kin, U_pot, U_Eel, U) as probability-weighted sums of the diagonals."""
    p = d.probabilities
    kin, pot, eel = energy_diagonals(d.grid, params, pes_table)
    u_kin = float(np.sum(p * kin))
    u_pot = float(np.sum(p * pot))
    u_el = float(np.sum(p * eel))
    return u_kin, u_pot, u_el, u_kin + u_pot + u_el


def free_energy_of(d: DiagonalDensity, params: SystemParams, pes_table) -> ThermoReport:
    s = gibbs_entropy(d, params.k_B)
    u_kin, u_pot, u_el, u = internal_energy(d, params, pes_table)
    T = params.temperature
    return ThermoReport(s, u_kin, u_pot, u_el, u, u - T * s, T)


def free_energy(state: KvnState, params: SystemParams, pes_table) -> ThermoReport:
    """F = U - T S_G on the diagonal density of an evolved NVT state."""
    return free_energy_of(extract_diagonal(state), params, pes_table)


def boltzmann_density(grid: PhaseSpaceGrid, params: SystemParams, pes_table) -> DiagonalDensity:
    """p_i proportional to exp(-E_i / (k_B T)) over the system sub-grid."""
    if params.temperature <= 0:
        raise DomainError("a Boltzmann density needs T > 0")
    e = sum(energy_diagonals(grid, params, pes_table))
    w = -e / (params.k_B * params.temperature)
    w = np.exp(w - w.max())
    return DiagonalDensity(grid, w / w.sum())


def log_partition(grid: PhaseSpaceGrid, params: SystemParams, pes_table) -> float:
    """ln sum_i exp(-E_i / (k_B T)), computed stably."""
    e = sum(energy_diagonals(grid, params, pes_table)).reshape(-1)
    w = -e / (params.k_B * params.temperature)
    mx = w.max()
    return float(mx + np.log(np.sum(np.exp(w - mx))))


def fannes_bound(tv: float, eta: int) -> float:
    """2 T log2(eta) - 2 T log2(2 T), the entropy-difference bound in bits."""
    if tv < 0:
        raise DomainError("trace distance must be nonnegative")
    if tv > 1.0 / (2.0 * math.e):
        raise DomainError(f"trace distance {tv} exceeds 1/(2e)")
    if eta < 1:
        raise DomainError("eta must be positive")
    if tv == 0:
        return 0.0
    return 2 * tv * math.log2(eta) - 2 * tv * math.log2(2 * tv)


def real_momentum_marginal(d: DiagonalDensity, nucleus: int = 0, component: int = 0) -> np.ndarray:
    """Distribution of p = p'/(s + s_min), binned to the nearest momentum grid point."""
    grid = d.grid
    ap = grid.p_axis(nucleus, component)
    pax = grid.axes[ap]
    marg = d.probabilities.sum(axis=tuple(a for a in range(grid.ndim - 1) if a not in (ap, grid.s_axis)))
    pp = pax.values[:, None]
    sigma = grid.axes[grid.s_axis].values[None, :]
    real = pp / sigma
    idx = np.rint((real - pax.offset) / pax.h).astype(np.int64)
    out = np.zeros(pax.g)
    inside = (idx >= 0) & (idx < pax.g)
    np.add.at(out, idx[inside], marg[inside])
    total = out.sum()
    return out / total if total > 0 else out


def maxwell_boltzmann(values: np.ndarray, mass: float, temperature: float, k_B: float = 1.0) -> np.ndarray:
    """Normalized exp(-p^2 / (2 m k_B T)) on a momentum grid."""
    w = np.exp(-np.asarray(values) ** 2 / (2 * mass * k_B * temperature))
    return w / w.sum()


def ks_statistic(p: np.ndarray, q: np.ndarray) -> float:
    """Largest CDF gap between two distributions on the same ordered support."""
    return float(np.max(np.abs(np.cumsum(p) / np.sum(p) - np.cumsum(q) / np.sum(q))))


def kl_divergence(p: np.ndarray, q: np.ndarray) -> float:
    """sum p ln(p / q) with 0 ln 0 = 0; infinite when q vanishes under p."""
    p = np.asarray(p, dtype=float).reshape(-1)
    q = np.asarray(q, dtype=float).reshape(-1)
    mask = p > 0
    if np.any(q[mask] <= 0):
        return math.inf
    return float(np.sum(p[mask] * np.log(p[mask] / q[mask])))
