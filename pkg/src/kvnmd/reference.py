"""Trajectory-ensemble ground truth for the KvN propagators.

Samples drawn from a grid density are pushed along the continuum equations of
motion whose velocity field matches the diagonals of the discretized
Liouvillian. Histograms and moments of the ensemble are then compared with
|psi|^2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ValidationError
from .grid import KvnState, PhaseSpaceGrid
from .liouville import SystemParams
from .pes import PesOracle, ZeroPes

MAX_HALVINGS = 8
DRIFT_TOL = 1e-6


@dataclass
class TrajectoryEnsemble:
    """Phase-space samples, one row per trajectory, columns in grid axis order."""

    samples: np.ndarray
    grid: PhaseSpaceGrid
    integrator: str = "rk4"
    dt_ref: float = 1e-2
    time: float = 0.0
    energy_drift: float = 0.0

    def __len__(self) -> int:
        return self.samples.shape[0]


def sample_density(state, grid: PhaseSpaceGrid, n_samples: int, seed: int = 0,
                   jitter: bool = False) -> np.ndarray:
    """Inverse-CDF samples of grid points, returned as physical coordinates.

    Args:
        state: A :class:`KvnState` or a flat probability vector over the grid.
        grid: Grid the density lives on.
        n_samples: Number of samples.
        seed: RNG seed.
        jitter: Spread each sample uniformly over its grid cell.
    """
    p = state.density if isinstance(state, KvnState) else np.asarray(state, dtype=float).reshape(-1)
    if p.size != grid.eta:
        raise ValidationError("density and grid sizes differ")
    rng = np.random.default_rng(seed)
    cdf = np.cumsum(p)
    cdf /= cdf[-1]
    flat = np.minimum(np.searchsorted(cdf, rng.random(n_samples), side="right"), grid.eta - 1)
    idx = np.unravel_index(flat, grid.shape)
    cols = []
    for a, ax in enumerate(grid.axes):
        v = ax.offset + ax.h * idx[a]
        if jitter:
            v = v + ax.h * (rng.random(n_samples) - 0.5)
        cols.append(v)
    return np.stack(cols, axis=1)


def _split(y, grid):
    N, dims = grid.n_nuclei, grid.spatial_dims
    x = y[:, grid.position_axes].reshape(-1, N, dims)
    p = y[:, grid.momentum_axes].reshape(-1, N, dims)
    return x, p


def _coulomb(x, params: SystemParams, box):
    """Pair forces and energy for positions x of shape (M, N, dims)."""
    N = x.shape[1]
    force = np.zeros_like(x)
    energy = np.zeros(x.shape[0])
    z = np.asarray(params.charges)
    for n in range(N):
        for m in range(N):
            if m == n:
                continue
            d = x[:, n] - x[:, m]
            if params.minimum_image:
                d = d - box * np.round(d / box)
            r2 = np.sum(d ** 2, axis=1) + params.delta ** 2
            force[:, n] += z[n] * z[m] * d / r2[:, None] ** 1.5
            if m > n:
                energy += z[n] * z[m] / np.sqrt(r2)
    return force, energy


class FlowField:
    """Continuum velocity field and conserved energy for NVE or NVT grids."""

    def __init__(self, grid: PhaseSpaceGrid, params: SystemParams, pes: PesOracle | None = None):
        if params.N != grid.n_nuclei:
            raise ValidationError("params and grid disagree on the number of nuclei")
        self.grid = grid
        self.params = params
        self.pes = pes if pes is not None else ZeroPes()
        self.nvt = grid.ensemble == "NVT"
        self.box = np.array([grid.axes[grid.x_axis(0, j)].extent for j in range(grid.spatial_dims)])
        self.m = np.asarray(params.masses)[None, :, None]

    def velocity(self, y: np.ndarray) -> np.ndarray:
        g = self.grid
        x, p = _split(y, g)
        fc, _ = _coulomb(x, self.params, self.box)
        force = fc - self.pes.gradient(x)
        out = np.empty_like(y)
        if self.nvt:
            sigma = y[:, g.s_axis][:, None, None]
            out[:, g.position_axes] = (p / (self.m * sigma ** 2)).reshape(len(y), -1)
            out[:, g.momentum_axes] = force.reshape(len(y), -1)
            out[:, g.s_axis] = y[:, g.ps_axis] / self.params.bath_mass
            c = self.params.bath_force_factor
            sig = y[:, g.s_axis]
            kin = np.sum(p ** 2 / self.m, axis=(1, 2))
            n_f = self.params.n_f(g.spatial_dims)
            out[:, g.ps_axis] = c * kin / sig ** 3 - n_f * self.params.k_B * self.params.temperature / sig
        else:
            out[:, g.position_axes] = (p / self.m).reshape(len(y), -1)
            out[:, g.momentum_axes] = force.reshape(len(y), -1)
        return out

    def energy(self, y: np.ndarray) -> np.ndarray:
        """H_NVE, or the extended-system H_NVT with sigma = s + s_min."""
        g = self.grid
        x, p = _split(y, g)
        _, ec = _coulomb(x, self.params, self.box)
        pot = ec + self.pes.evaluate(x)
        if self.nvt:
            sigma = y[:, g.s_axis]
            kin = np.sum(p ** 2 / (2 * self.m), axis=(1, 2)) / sigma ** 2
            n_f = self.params.n_f(g.spatial_dims)
            bath = (y[:, g.ps_axis] ** 2 / (2 * self.params.bath_mass)
                    + n_f * self.params.k_B * self.params.temperature * np.log(sigma))
            return kin + pot + bath
        return np.sum(p ** 2 / (2 * self.m), axis=(1, 2)) + pot

    @property
    def conserves_energy(self) -> bool:
        return not self.nvt or self.params.bath_force_factor == 1.0


def _rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)


def _verlet_step(field: FlowField, y, dt):
    g = field.grid
    if field.nvt:
        raise ValidationError("velocity Verlet is only available for NVE grids")
    v = field.velocity(y)
    y = y.copy()
    y[:, g.momentum_axes] += 0.5 * dt * v[:, g.momentum_axes]
    v = field.velocity(y)
    y[:, g.position_axes] += dt * v[:, g.position_axes]
    v = field.velocity(y)
    y[:, g.momentum_axes] += 0.5 * dt * v[:, g.momentum_axes]
    return y


def _run(field, y0, t, dt, integrator):
    n = max(1, int(np.ceil(abs(t) / dt - 1e-12)))
    h = t / n
    y = y0.copy()
    for _ in range(n):
        y = _rk4_step(field.velocity, y, h) if integrator == "rk4" else _verlet_step(field, y, h)
    return y


def wrap_samples(y: np.ndarray, grid: PhaseSpaceGrid) -> np.ndarray:
    """Map every coordinate into its periodic axis range [offset, offset + extent)."""
    out = y.copy()
    for a, ax in enumerate(grid.axes):
        out[:, a] = ax.offset + np.mod(out[:, a] - ax.offset, ax.extent)
    return out


def integrate_ensemble(initial, grid: PhaseSpaceGrid, params: SystemParams, t: float,
                       pes: PesOracle | None = None, n_samples: int = 10_000, seed: int = 0,
                       integrator: str = "rk4", dt_ref: float = 1e-2, jitter: bool = False,
                       check_energy: bool = True) -> TrajectoryEnsemble:
    """Advance sampled trajectories to time ``t`` and wrap them onto the grid box.

    ``initial`` is a :class:`KvnState`, a density vector, or an explicit
    (M, ndim) sample array. When the flow conserves an energy, the relative
    drift per unit time must stay below 1e-6; otherwise dt is halved up to
    eight times before giving up.
    """
    if integrator not in ("rk4", "velocity_verlet"):
        raise ValidationError(f"unknown integrator {integrator!r}")
    if isinstance(initial, np.ndarray) and initial.ndim == 2:
        y0 = np.asarray(initial, dtype=float)
    else:
        y0 = sample_density(initial, grid, n_samples, seed, jitter)
    if y0.shape[0] == 0:
        raise ValidationError("ensemble is empty")
    field = FlowField(grid, params, pes)
    check = check_energy and field.conserves_energy and t != 0
    e0 = field.energy(y0) if check else None
    dt = dt_ref
    for _ in range(MAX_HALVINGS + 1):
        y = _run(field, y0, t, dt, integrator)
        if not check:
            return TrajectoryEnsemble(wrap_samples(y, grid), grid, integrator, dt, t, 0.0)
        e1 = field.energy(y)
        drift = float(np.max(np.abs(e1 - e0) / np.maximum(np.abs(e0), 1.0)) / abs(t))
        if np.isfinite(drift) and drift < DRIFT_TOL:
            return TrajectoryEnsemble(wrap_samples(y, grid), grid, integrator, dt, t, drift)
        dt *= 0.5
    raise NumericalError(f"energy drift {drift:.3e} per unit time persists after {MAX_HALVINGS} halvings")


def _moment(values_x, values_p, a, b, weights=None):
    f = values_x ** a * values_p ** b
    if weights is None:
        return float(np.mean(f)), float(np.std(f) / np.sqrt(max(len(f) - 1, 1)))
    return float(np.sum(weights * f)), 0.0


@dataclass
class MomentReport:
    """Ensemble-versus-KvN discrepancies for one coordinate."""

    moments: dict       # (a, b) -> (ensemble, kvn, |difference|, sigma)
    tv_distance: float

    def discrepancy(self, a: int, b: int) -> float:
        return self.moments[(a, b)][2]

    def sigma(self, a: int, b: int) -> float:
        return self.moments[(a, b)][3]


def coarse_histogram(points_idx, grid_shape, bins) -> np.ndarray:
    """Counts of integer grid indices grouped into ``bins`` equal blocks per axis."""
    coarse = [np.asarray(ix) * b // g for ix, g, b in zip(points_idx, grid_shape, bins)]
    h = np.zeros(bins)
    np.add.at(h, tuple(coarse), 1.0)
    return h


def tv_distance(ensemble: TrajectoryEnsemble, state: KvnState, axes, bins=8) -> float:
    """Total variation between the ensemble histogram and the |psi|^2 marginal.

    Both are accumulated on ``bins`` common coarse cells per listed axis.
    """
    grid = state.grid
    axes = tuple(axes)
    bins = tuple([bins] * len(axes)) if np.isscalar(bins) else tuple(bins)
    gs = [grid.axes[a].g for a in axes]
    bins = tuple(min(b, g) for b, g in zip(bins, gs))
    idx = []
    for a in axes:
        ax = grid.axes[a]
        idx.append(np.rint((ensemble.samples[:, a] - ax.offset) / ax.h).astype(np.int64) % ax.g)
    h_ens = coarse_histogram(idx, gs, bins)
    h_ens /= h_ens.sum()
    marg = state.marginal(axes)
    mesh = np.meshgrid(*[np.arange(g) for g in gs], indexing="ij")
    h_kvn = np.zeros(bins)
    np.add.at(h_kvn, tuple(m * b // g for m, g, b in zip(mesh, gs, bins)), marg / marg.sum())
    return 0.5 * float(np.abs(h_ens - h_kvn).sum())


def compare_moments(ensemble: TrajectoryEnsemble, state: KvnState, orders,
                    coordinate: tuple = (0, 0), bins=8) -> MomentReport:
    """Compare <x^a p^b> of one coordinate between ensemble and |psi|^2.

    Args:
        ensemble: Propagated trajectories.
        state: Propagated KvN state on the same grid.
        orders: Iterable of (a, b) exponent pairs.
        coordinate: (nucleus, component) whose x and p are used.
        bins: Coarse bins per axis for the total-variation distance.
    """
    if len(ensemble) == 0:
        raise ValidationError("ensemble is empty")
    grid = state.grid
    if ensemble.grid.shape != grid.shape:
        raise ValidationError("ensemble and state grids differ")
    ax, ap = grid.x_axis(*coordinate), grid.p_axis(*coordinate)
    marg = state.marginal((ax, ap))
    marg = marg / marg.sum()
    X, P = np.meshgrid(grid.axes[ax].values, grid.axes[ap].values, indexing="ij")
    out = {}
    for a, b in orders:
        me, se = _moment(ensemble.samples[:, ax], ensemble.samples[:, ap], a, b)
        mk, _ = _moment(X, P, a, b, marg)
        out[(a, b)] = (me, mk, abs(me - mk), se)
    return MomentReport(out, tv_distance(ensemble, state, (ax, ap), bins))
