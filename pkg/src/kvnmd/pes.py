"""Potential-energy-surface oracles E_el({x_n}) and their grid tabulation.

Oracles take nuclear positions shaped ``(..., N, dims)`` and return energies
shaped ``(...)``. Every oracle must be periodic in the simulation box because
the phase-space grid uses periodic boundary conditions.

The plane-wave model is a single-electron Hamiltonian in a periodic cell whose
exact ground-state energy stands in for the quantum ground-state pipeline.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import NumericalError, ResourceCapError, ValidationError
from .grid import PhaseSpaceGrid

DEFAULT_TABLE_CAP = 1 << 20
MAX_PLANE_WAVES = 4096


def _minimum_image(d, box):
    return d - box * np.round(d / box)


class PesOracle:
    """Base class. Subclasses implement :meth:`evaluate`.

    Attributes:
        kind: ``analytic``, ``tabulated`` or ``plane_wave_model``.
        smoothness: Declared (chi, u) with |d^{m} E / dx^{m}| <= chi u^{m}.
    """

    kind = "analytic"

    def __init__(self, smoothness=None):
        self.smoothness = smoothness
        self._tables = {}

    def evaluate(self, positions) -> np.ndarray:
        raise NotImplementedError

    def gradient(self, positions, step: float = 1e-5) -> np.ndarray:
        """dE/dx_{n,j}; central differences unless overridden."""
        x = np.asarray(positions, dtype=float)
        grad = np.empty_like(x)
        for n in range(x.shape[-2]):
            for j in range(x.shape[-1]):
                e = np.zeros(x.shape[-2:])
                e[n, j] = step
                grad[..., n, j] = (self.evaluate(x + e) - self.evaluate(x - e)) / (2 * step)
        return grad

    def __call__(self, positions):
        return self.evaluate(positions)


class ZeroPes(PesOracle):
    def __init__(self):
        super().__init__(smoothness=(0.0, 0.0))

    def evaluate(self, positions):
        return np.zeros(np.shape(positions)[:-2])

    def gradient(self, positions, step=None):
        return np.zeros(np.shape(positions))


class ConstantPes(PesOracle):
    def __init__(self, value: float):
        super().__init__(smoothness=(0.0, 0.0))
        self.value = float(value)

    def evaluate(self, positions):
        return np.full(np.shape(positions)[:-2], self.value)

    def gradient(self, positions, step=None):
        return np.zeros(np.shape(positions))


class CosinePes(PesOracle):
    """Separable periodic well E = sum_{n,j} A (1 - cos(2 pi (x_{n,j} - x0_j) / box)).

    Near its minimum this is a harmonic well with curvature A (2 pi / box)^2.
    """

    def __init__(self, amplitude: float, box: float, center=0.0):
        self.amplitude = float(amplitude)
        self.box = float(box)
        self.center = np.atleast_1d(np.asarray(center, dtype=float))
        super().__init__(smoothness=(abs(self.amplitude), 2 * math.pi / self.box))

    def _phase(self, x):
        return 2 * math.pi * (np.asarray(x, dtype=float) - self.center) / self.box

    def evaluate(self, positions):
        return self.amplitude * (1 - np.cos(self._phase(positions))).sum(axis=(-2, -1))

    def gradient(self, positions, step=None):
        return self.amplitude * (2 * math.pi / self.box) * np.sin(self._phase(positions))

    def curvature(self) -> float:
        return self.amplitude * (2 * math.pi / self.box) ** 2


class HarmonicPes(PesOracle):
    """E = 1/2 omega^2 d^2 with d the minimum-image displacement from ``center``."""

    def __init__(self, omega: float, box: float, center=0.0, smoothness=None):
        super().__init__(smoothness=smoothness)
        self.omega = float(omega)
        self.box = float(box)
        self.center = np.atleast_1d(np.asarray(center, dtype=float))

    def _disp(self, x):
        return _minimum_image(np.asarray(x, dtype=float) - self.center, self.box)

    def evaluate(self, positions):
        return 0.5 * self.omega ** 2 * (self._disp(positions) ** 2).sum(axis=(-2, -1))

    def gradient(self, positions, step=None):
        return self.omega ** 2 * self._disp(positions)


class TabulatedPes(PesOracle):
    """Energies given on the position sub-grid; only grid points can be evaluated."""

    kind = "tabulated"

    def __init__(self, table, grid: PhaseSpaceGrid, smoothness=None):
        super().__init__(smoothness=smoothness)
        table = np.asarray(table, dtype=float)
        if table.size != int(np.prod(grid.position_shape)):
            raise ValidationError(
                f"PES table has {table.size} entries, position sub-grid needs "
                f"{int(np.prod(grid.position_shape))}")
        self.table = table.reshape(grid.position_shape)
        self.grid = grid
        self._tables[_grid_key(grid)] = self.table

    def _indices(self, positions):
        x = np.asarray(positions, dtype=float)
        idx = []
        for n in range(self.grid.n_nuclei):
            for j in range(self.grid.spatial_dims):
                ax = self.grid.axes[self.grid.x_axis(n, j)]
                k = np.rint((x[..., n, j] - ax.offset) / ax.h).astype(np.int64) % ax.g
                idx.append(k)
        return tuple(idx)

    def evaluate(self, positions):
        return self.table[self._indices(positions)]


@dataclass(frozen=True)
class PlaneWaveModel:
    """Single-electron plane-wave Hamiltonian in a periodic cell.

    Attributes:
        n_per_dim: Plane waves per dimension; B = n_per_dim ** dims.
        h_el: Real-space resolution; the cell volume defaults to (n_per_dim h_el)^dims.
        charges: Nuclear charges Z_n.
        dims: Spatial dimension of the cell.
        omega: Cell volume override.
        n_electrons: Must be 1.
    """

    n_per_dim: int
    h_el: float
    charges: tuple
    dims: int = 1
    omega: float | None = None
    n_electrons: int = 1

    @property
    def B(self) -> int:
        return int(self.n_per_dim) ** self.dims

    @property
    def volume(self) -> float:
        if self.omega is not None:
            return float(self.omega)
        return float((self.n_per_dim * self.h_el) ** self.dims)

    @property
    def cell_length(self) -> float:
        return self.volume ** (1.0 / self.dims)

    def integer_vectors(self) -> np.ndarray:
        """Integer labels b, centred so that b = 0 is included."""
        n = int(self.n_per_dim)
        axis = np.arange(n) - n // 2
        grids = np.meshgrid(*([axis] * self.dims), indexing="ij")
        return np.stack([g.reshape(-1) for g in grids], axis=-1)

    def wavevectors(self) -> np.ndarray:
        return 2 * math.pi * self.integer_vectors() / self.cell_length


def build_plane_wave_hamiltonian(model: PlaneWaveModel, nuclear_positions) -> np.ndarray:
    """Dense kinetic + electron-nucleus Hamiltonian in the plane-wave basis."""
    if model.n_electrons != 1:
        raise ValidationError("only single-electron plane-wave models are supported")
    if model.B > MAX_PLANE_WAVES:
        raise ResourceCapError(f"B={model.B} exceeds plane-wave cap {MAX_PLANE_WAVES}")
    x = np.asarray(nuclear_positions, dtype=float).reshape(-1, model.dims)
    z = np.asarray(model.charges, dtype=float)
    if z.size != x.shape[0]:
        raise ValidationError("need one charge per nucleus")
    k = model.wavevectors()
    diff = k[None, :, :] - k[:, None, :]          # [b, c] -> k_c - k_b
    q2 = np.sum(diff ** 2, axis=-1)
    np.fill_diagonal(q2, 1.0)
    phase = np.exp(1j * np.einsum("bcd,nd->nbc", diff, x))
    structure = np.einsum("n,nbc->bc", z, phase)
    H = -(4 * math.pi / model.volume) * structure / q2
    np.fill_diagonal(H, 0.5 * np.sum(k ** 2, axis=-1))
    return H


def ground_state_gap(model: PlaneWaveModel, positions) -> tuple:
    """(E_0, E_1 - E_0) of the plane-wave Hamiltonian."""
    H = build_plane_wave_hamiltonian(model, positions)
    try:
        w = np.linalg.eigvalsh(H)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"eigensolver failed: {exc}") from exc
    gap = float(w[1] - w[0]) if w.size > 1 else 0.0
    return float(w[0]), gap


def ground_energy(model: PlaneWaveModel, positions) -> float:
    return ground_state_gap(model, positions)[0]


class PlaneWavePes(PesOracle):
    kind = "plane_wave_model"

    def __init__(self, model: PlaneWaveModel, smoothness=None):
        super().__init__(smoothness=smoothness)
        self.model = model

    def evaluate(self, positions):
        x = np.asarray(positions, dtype=float)
        flat = x.reshape(-1, *x.shape[-2:])
        out = np.array([ground_energy(self.model, p) for p in flat])
        return out.reshape(x.shape[:-2])


def _grid_key(grid: PhaseSpaceGrid):
    return tuple(grid.axes[a] for a in grid.position_axes) + (grid.n_nuclei, grid.spatial_dims)


def position_points(grid: PhaseSpaceGrid) -> np.ndarray:
    """All position sub-grid points, shape (*position_shape, N, dims)."""
    vals = [grid.axes[a].values for a in grid.position_axes]
    mesh = np.meshgrid(*vals, indexing="ij")
    pts = np.stack(mesh, axis=-1)
    return pts.reshape(*grid.position_shape, grid.n_nuclei, grid.spatial_dims)


def tabulate_pes(oracle: PesOracle, grid: PhaseSpaceGrid, cap: int = DEFAULT_TABLE_CAP,
                 threads: int = 1) -> np.ndarray:
    """Energy at every position grid point, shape ``grid.position_shape``.

    Results are cached on the oracle per grid; the returned array is read-only.
    """
    key = _grid_key(grid)
    if key in oracle._tables:
        return oracle._tables[key]
    size = int(np.prod(grid.position_shape))
    if size > cap:
        raise ResourceCapError(f"position sub-grid has {size} points, cap is {cap}")
    pts = position_points(grid)
    flat = pts.reshape(size, grid.n_nuclei, grid.spatial_dims)
    if isinstance(oracle, PlaneWavePes) and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            vals = np.array(list(pool.map(lambda p: ground_energy(oracle.model, p), flat)))
    else:
        vals = np.asarray(oracle.evaluate(flat), dtype=float)
    table = vals.reshape(grid.position_shape)
    table.flags.writeable = False
    oracle._tables[key] = table
    return table


def write_pes_table(path, table) -> None:
    """Write one ``index energy`` line per position grid point."""
    flat = np.asarray(table, dtype=float).reshape(-1)
    with open(path, "w") as fh:
        for i, e in enumerate(flat):
            fh.write(f"{i} {float(e)!r}\n")


def read_pes_table(path, grid: PhaseSpaceGrid) -> np.ndarray:
    """Parse a tabulated PES file; every position grid point must appear once."""
    size = int(np.prod(grid.position_shape))
    table = np.full(size, np.nan)
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ValidationError(f"{path}:{lineno}: expected 'index energy'")
            try:
                i, e = int(parts[0]), float(parts[1])
            except ValueError as exc:
                raise ValidationError(f"{path}:{lineno}: {exc}") from exc
            if not 0 <= i < size:
                raise ValidationError(f"{path}:{lineno}: index {i} outside [0, {size})")
            table[i] = e
    missing = np.flatnonzero(np.isnan(table))
    if missing.size:
        raise ValidationError(f"{path}: missing PES entries, first at index {missing[0]}")
    return table.reshape(grid.position_shape)
