"""Discretized phase space: axis layout, periodic index arithmetic, states.

Axes are stored in canonical row-major order::

    (x_{1,1}, p_{1,1}, x_{1,2}, p_{1,2}, ..., x_{N,dims}, p_{N,dims}[, s, p_s])

so the flat index of a grid point is ``np.ravel_multi_index`` over the axis
counts. All physical quantities are in atomic units.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, ValidationError

AXIS_KINDS = ("position", "momentum", "bath_s", "bath_ps")


def _is_power_of_two(g: int) -> bool:
    return g >= 2 and (g & (g - 1)) == 0


def _spacing(extent: float, g: int, kind: str) -> float:
    if int(g) != g or not _is_power_of_two(int(g)):
        raise ValidationError(f"{kind} axis: g={g} must be a power of two >= 2")
    return extent / g


@dataclass(frozen=True)
class AxisSpec:
    """One periodic grid axis.

    The physical value at index ``k`` is ``offset + k * h``.

    Attributes:
        kind: One of ``position``, ``momentum``, ``bath_s``, ``bath_ps``.
        g: Number of grid points, a power of two.
        h: Grid spacing.
        offset: Physical value at index 0.
    """

    kind: str
    g: int
    h: float
    offset: float = 0.0

    def __post_init__(self):
        if self.kind not in AXIS_KINDS:
            raise ValidationError(f"unknown axis kind {self.kind!r}")
        if int(self.g) != self.g or not _is_power_of_two(int(self.g)):
            raise ValidationError(
                f"{self.kind} axis: g={self.g} must be a power of two >= 2")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValidationError(f"{self.kind} axis: spacing h={self.h} must be positive")
        object.__setattr__(self, "g", int(self.g))
        object.__setattr__(self, "h", float(self.h))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def extent(self) -> float:
        """Axis length g*h (x_max, p_max, s_max, ...)."""
        return self.g * self.h

    @property
    def values(self) -> np.ndarray:
        return self.offset + self.h * np.arange(self.g)

    @property
    def max_abs(self) -> float:
        """Largest |value| attained on the axis."""
        v = self.values
        return float(np.max(np.abs(v)))

    @classmethod
    def position(cls, g: int, x_max: float) -> "AxisSpec":
        return cls("position", g, _spacing(x_max, g, "position"), 0.0)

    @classmethod
    def momentum(cls, g: int, p_max: float, centered: bool = True) -> "AxisSpec":
        """Momentum axis of extent ``p_max``.

        With ``centered`` the axis covers [-p_max/2, p_max/2) so that the
        periodic grid holds both signs of momentum.
        """
        h = _spacing(p_max, g, "momentum")
        return cls("momentum", g, h, -(g // 2) * h if centered else 0.0)

    @classmethod
    def bath_s(cls, g: int, s_max: float, s_min: float) -> "AxisSpec":
        """Bath coordinate axis storing the shifted value s + s_min."""
        if not s_min > 0:
            raise ValidationError(f"s_min={s_min} must be positive")
        return cls("bath_s", g, _spacing(s_max, g, "bath_s"), s_min)

    @classmethod
    def bath_ps(cls, g: int, ps_max: float, centered: bool = True) -> "AxisSpec":
        h = _spacing(ps_max, g, "bath_ps")
        return cls("bath_ps", g, h, -(g // 2) * h if centered else 0.0)


@dataclass(frozen=True)
class PhaseSpaceGrid:
    """Tensor-product grid over all nuclear (and bath) phase-space axes."""

    axes: tuple
    n_nuclei: int
    spatial_dims: int = 1

    def __post_init__(self):
        axes = tuple(self.axes)
        object.__setattr__(self, "axes", axes)
        if self.n_nuclei < 1:
            raise ValidationError("n_nuclei must be >= 1")
        if self.spatial_dims not in (1, 2, 3):
            raise ValidationError("spatial_dims must be 1, 2 or 3")
        n_pairs = self.n_nuclei * self.spatial_dims
        if len(axes) not in (2 * n_pairs, 2 * n_pairs + 2):
            raise ValidationError(
                f"expected {2 * n_pairs} (NVE) or {2 * n_pairs + 2} (NVT) axes, got {len(axes)}")
        for i in range(n_pairs):
            if axes[2 * i].kind != "position" or axes[2 * i + 1].kind != "momentum":
                raise ValidationError(f"axis pair {i} must be (position, momentum)")
        if len(axes) == 2 * n_pairs + 2:
            if axes[-2].kind != "bath_s" or axes[-1].kind != "bath_ps":
                raise ValidationError("NVT grid must end with (bath_s, bath_ps) axes")

    @classmethod
    def build(cls, n_nuclei: int, spatial_dims: int, g_x: int, x_max: float,
              g_p: int, p_max: float, *, g_s: int | None = None,
              s_max: float | None = None, s_min: float | None = None,
              g_ps: int | None = None, ps_max: float | None = None,
              centered_momentum: bool = True) -> "PhaseSpaceGrid":
        """Uniform grid with identical position and momentum axes per coordinate.

        Passing the four bath arguments produces an NVT-shaped grid.
        """
        axes = []
        for _ in range(n_nuclei * spatial_dims):
            axes.append(AxisSpec.position(g_x, x_max))
            axes.append(AxisSpec.momentum(g_p, p_max, centered_momentum))
        if g_s is not None:
            if None in (s_max, s_min, g_ps, ps_max):
                raise ValidationError("NVT grid needs g_s, s_max, s_min, g_ps and ps_max")
            axes.append(AxisSpec.bath_s(g_s, s_max, s_min))
            axes.append(AxisSpec.bath_ps(g_ps, ps_max, centered_momentum))
        return cls(tuple(axes), n_nuclei, spatial_dims)

    @property
    def ensemble(self) -> str:
        return "NVT" if self.axes[-1].kind == "bath_ps" else "NVE"

    @property
    def shape(self) -> tuple:
        return tuple(a.g for a in self.axes)

    @property
    def eta(self) -> int:
        """Total number of grid points."""
        return int(np.prod(self.shape, dtype=np.int64))

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def x_axis(self, n: int, j: int) -> int:
        """Axis index of position component j of nucleus n (both 0-based)."""
        return 2 * (n * self.spatial_dims + j)

    def p_axis(self, n: int, j: int) -> int:
        return self.x_axis(n, j) + 1

    @property
    def position_axes(self) -> tuple:
        return tuple(range(0, 2 * self.n_nuclei * self.spatial_dims, 2))

    @property
    def momentum_axes(self) -> tuple:
        return tuple(range(1, 2 * self.n_nuclei * self.spatial_dims, 2))

    @property
    def s_axis(self) -> int:
        if self.ensemble != "NVT":
            raise ValidationError("grid has no bath axes")
        return self.ndim - 2

    @property
    def ps_axis(self) -> int:
        if self.ensemble != "NVT":
            raise ValidationError("grid has no bath axes")
        return self.ndim - 1

    @property
    def position_shape(self) -> tuple:
        return tuple(self.axes[a].g for a in self.position_axes)

    def axis_values(self, axis: int, broadcast: bool = True) -> np.ndarray:
        """Physical values along ``axis``, optionally shaped to broadcast."""
        v = self.axes[axis].values
        if not broadcast:
            return v
        shape = [1] * self.ndim
        shape[axis] = -1
        return v.reshape(shape)


def flat_index(multi_index, grid: PhaseSpaceGrid) -> int:
    """Row-major flat index of a multi-index."""
    multi = tuple(int(m) for m in multi_index)
    if len(multi) != grid.ndim:
        raise IndexError(f"expected {grid.ndim} components, got {len(multi)}")
    for m, g in zip(multi, grid.shape):
        if not 0 <= m < g:
            raise IndexError(f"component {m} outside [0, {g})")
    return int(np.ravel_multi_index(multi, grid.shape))


def unflat_index(index: int, grid: PhaseSpaceGrid) -> tuple:
    """Inverse of :func:`flat_index`."""
    if not 0 <= int(index) < grid.eta:
        raise IndexError(f"flat index {index} outside [0, {grid.eta})")
    return tuple(int(i) for i in np.unravel_index(int(index), grid.shape))


def wrap(index: int, g: int) -> int:
    """Periodic wrap of ``index`` into [0, g)."""
    if g <= 0:
        raise DomainError(f"wrap needs g >= 1, got {g}")
    return int(index) % int(g)


@dataclass(frozen=True)
class KvnState:
    """Complex amplitudes over the grid; |amplitude|^2 is the density.

    The constructor checks normalization to 1e-12. Propagators build states
    through :meth:`from_amplitudes` with ``check=False`` and track the norm
    drift themselves.
    """

    grid: PhaseSpaceGrid
    amplitudes: np.ndarray = field(repr=False)

    def __post_init__(self):
        a = np.array(self.amplitudes, dtype=np.complex128).reshape(-1)
        if a.size != self.grid.eta:
            raise ValidationError(f"amplitude length {a.size} != eta {self.grid.eta}")
        a.flags.writeable = False
        object.__setattr__(self, "amplitudes", a)

    @classmethod
    def from_amplitudes(cls, grid: PhaseSpaceGrid, amplitudes, check: bool = True,
                        tol: float = 1e-12) -> "KvnState":
        state = cls(grid, amplitudes)
        if check and abs(state.norm() - 1.0) > tol:
            raise ValidationError(f"state norm {state.norm()!r} differs from 1 by more than {tol}")
        return state

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    @property
    def density(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    @property
    def tensor(self) -> np.ndarray:
        """Amplitudes reshaped to the grid shape (read-only view)."""
        return self.amplitudes.reshape(self.grid.shape)

    def marginal(self, axes) -> np.ndarray:
        """Density summed over every axis not listed in ``axes``."""
        axes = tuple(axes) if np.iterable(axes) else (axes,)
        rho = self.density.reshape(self.grid.shape)
        drop = tuple(a for a in range(self.grid.ndim) if a not in axes)
        m = rho.sum(axis=drop)
        order = sorted(axes)
        return np.transpose(m, [order.index(a) for a in axes])

    def expectation(self, diagonal) -> float:
        """<psi| diag |psi> for a real diagonal broadcastable to the grid."""
        rho = self.density.reshape(self.grid.shape)
        return float(np.sum(rho * np.broadcast_to(diagonal, self.grid.shape)))


def load_density(probabilities, grid: PhaseSpaceGrid) -> KvnState:
    """Encode a classical density as amplitudes sqrt(p_k)."""
    p = np.asarray(probabilities, dtype=float).reshape(-1)
    if p.size != grid.eta:
        raise ValidationError(f"density length {p.size} != eta {grid.eta}")
    if np.any(p < 0) or not np.all(np.isfinite(p)):
        raise ValidationError("density has negative or non-finite entries")
    total = p.sum()
    if abs(total - 1.0) > 1e-9:
        raise ValidationError(f"density sums to {total}, expected 1")
    a = np.sqrt(p / total)
    return KvnState.from_amplitudes(grid, a.astype(np.complex128))
