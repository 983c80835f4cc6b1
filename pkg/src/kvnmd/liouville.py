"""Discretized NVE and NVT Liouvillians, their split, and analytic bounds.

Every term has the form ``-i * diag(v) (x) D_a``: a real velocity field ``v``
that does not depend on coordinate ``a`` times an antisymmetric stencil along
``a``. Such a product is Hermitian, and so is the sum ``L``; propagation is
``exp(-i L t)``. In continuum language ``-i L = -sum_a v_a d/da``.

The electronic force is always carried on the d = 1 momentum stencil so that
``L = L_class + L_el`` holds exactly.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import _bounds
from .errors import ResourceCapError, ValidationError
from .findiff import FdScheme, check_stencil_fits, derivative_matrix, fd_coefficients, stencil_apply
from .grid import PhaseSpaceGrid
from .kernels import stencil_diag_apply

DENSE_CAP = 4096


@dataclass(frozen=True)
class SystemParams:
    """Physical and discretization parameters of the nuclear system.

    Attributes:
        masses: Nuclear masses m_n.
        charges: Nuclear charges Z_n (nonnegative integers).
        delta: Coulomb regularization length.
        d_x, d_p, d_e: Stencil half-orders for positions, momenta and the
            electronic force.
        d_s, d_ps: Stencil half-orders for the bath axes (NVT only).
        temperature: Target temperature T.
        bath_mass: Thermostat mass Q.
        constraints: Number of constraints K; N_f = dims * N - K.
        k_B: Boltzmann constant (1 in atomic units).
        lam: Bound on |E_el| used in the electronic norm bound. ``None`` means
            the largest |E| in the tabulated PES.
        minimum_image: Use minimum-image Coulomb displacements.
        bath_force_factor: Prefactor c in the bath force c p'^2 / (m s^3).
            The NVT definition writes 2; c = 1 is the exact derivative of the
            extended Hamiltonian.
    """

    masses: tuple
    charges: tuple
    delta: float = 1.0
    d_x: int = 1
    d_p: int = 1
    d_e: int = 1
    d_s: int = 1
    d_ps: int = 1
    temperature: float = 0.0
    bath_mass: float = 1.0
    constraints: int = 0
    k_B: float = 1.0
    lam: float | None = None
    minimum_image: bool = True
    bath_force_factor: float = 2.0

    def __post_init__(self):
        object.__setattr__(self, "masses", tuple(float(m) for m in np.atleast_1d(self.masses)))
        object.__setattr__(self, "charges", tuple(float(z) for z in np.atleast_1d(self.charges)))
        if len(self.masses) != len(self.charges):
            raise ValidationError("masses and charges must have one entry per nucleus")
        if any(m <= 0 for m in self.masses):
            raise ValidationError("masses must be positive")
        if any(z < 0 or z != int(z) for z in self.charges):
            raise ValidationError("charges must be nonnegative integers")
        if not self.delta > 0:
            raise ValidationError("Coulomb regularizer delta must be positive")
        if not self.bath_mass > 0:
            raise ValidationError("bath mass Q must be positive")
        if self.temperature < 0:
            raise ValidationError("temperature must be nonnegative")
        if self.constraints < 0:
            raise ValidationError("constraint count must be nonnegative")
        for name in ("d_x", "d_p", "d_e", "d_s", "d_ps"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise ValidationError(f"{name} must be a positive integer")

    @property
    def N(self) -> int:
        return len(self.masses)

    def n_f(self, dims: int) -> int:
        return dims * self.N - self.constraints


@dataclass
class Term:
    """One Hermitian summand ``-i diag(velocity) (x) D_axis``."""

    label: str
    axis: int
    scheme: FdScheme
    velocity: np.ndarray  # broadcastable to the grid shape

    def full_velocity(self, grid: PhaseSpaceGrid) -> np.ndarray:
        return np.ascontiguousarray(np.broadcast_to(self.velocity, grid.shape), dtype=float)

    def matrix(self, grid: PhaseSpaceGrid) -> sp.csr_matrix:
        ax = grid.axes[self.axis]
        D = derivative_matrix(self.scheme, ax.g, ax.h)
        outer = int(np.prod(grid.shape[:self.axis], dtype=np.int64))
        inner = int(np.prod(grid.shape[self.axis + 1:], dtype=np.int64))
        op = sp.kron(sp.kron(sp.identity(outer), D), sp.identity(inner), format="csr")
        v = self.full_velocity(grid).reshape(-1)
        return (-1j * sp.diags(v) @ op).tocsr()


@dataclass
class LiouvillianOperator:
    """Assembled Liouvillian as a list of terms plus analytic bound metadata."""

    grid: PhaseSpaceGrid
    terms: list
    ensemble: str
    mu_bound: float
    bounds: dict = field(default_factory=dict)
    lam: float = 0.0
    _plan: list | None = field(default=None, repr=False)
    _matrix: sp.csr_matrix | None = field(default=None, repr=False)
    _eig: tuple | None = field(default=None, repr=False)

    @property
    def eta(self) -> int:
        return self.grid.eta

    def labels(self) -> list:
        return [t.label for t in self.terms]

    def _apply_plan(self):
        # Terms sharing axis and stencil add their velocities.
        if self._plan is None:
            groups = {}
            for t in self.terms:
                key = (t.axis, t.scheme.d)
                v = t.full_velocity(self.grid)
                if key in groups:
                    groups[key][1] += v
                else:
                    groups[key] = [t.scheme, v.copy()]
            plan = []
            for (axis, _), (scheme, v) in groups.items():
                if not np.any(v):
                    continue
                ax = self.grid.axes[axis]
                offs, coeffs = scheme.nonzero()
                plan.append((axis, offs, coeffs / ax.h, np.ascontiguousarray(v)))
            self._plan = plan
        return self._plan

    def apply(self, psi: np.ndarray, backend: str | None = None) -> np.ndarray:
        """Matrix-free L @ psi for a flat amplitude vector."""
        x = np.ascontiguousarray(psi, dtype=np.complex128).reshape(self.grid.shape)
        out = np.zeros(self.grid.shape, dtype=np.complex128)
        for axis, offs, w, v in self._apply_plan():
            stencil_diag_apply(x, axis, offs, w, v, out, -1j, backend=backend)
        return out.reshape(-1)

    def matrix(self) -> sp.csr_matrix:
        if self._matrix is None:
            m = sp.csr_matrix((self.eta, self.eta), dtype=np.complex128)
            for t in self.terms:
                m = m + t.matrix(self.grid)
            self._matrix = m.tocsr()
        return self._matrix

    def dense(self, cap: int = DENSE_CAP) -> np.ndarray:
        if self.eta > cap:
            raise ResourceCapError(f"dense materialization of eta={self.eta} exceeds cap {cap}")
        return self.matrix().toarray()

    def eigh(self, cap: int = DENSE_CAP) -> tuple:
        """Cached eigendecomposition (w, V) of the Hermitian matrix."""
        if self._eig is None:
            M = self.dense(cap)
            self._eig = np.linalg.eigh(0.5 * (M + M.conj().T))
        return self._eig

    def linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.eta, self.eta), matvec=self.apply,
                                   rmatvec=self.apply, dtype=np.complex128)

    def subset(self, predicate, mu_bound: float | None = None) -> "LiouvillianOperator":
        terms = [t for t in self.terms if predicate(t.label)]
        return LiouvillianOperator(self.grid, terms, self.ensemble,
                                   self.mu_bound if mu_bound is None else mu_bound,
                                   dict(self.bounds), self.lam)


def _position_field(arr: np.ndarray, grid: PhaseSpaceGrid) -> np.ndarray:
    """Reshape a position-sub-grid array so it broadcasts over the full grid."""
    shape = [1] * grid.ndim
    for a, g in zip(grid.position_axes, grid.position_shape):
        shape[a] = g
    return np.asarray(arr).reshape(shape)


def electronic_force(grid: PhaseSpaceGrid, pes_table: np.ndarray, d_e: int) -> list:
    """Stencil derivatives D^el_{n,j} of the tabulated PES on the position sub-grid.

    Returns a list indexed by coordinate n * dims + j.
    """
    table = np.asarray(pes_table, dtype=float)
    if table.shape != grid.position_shape:
        if table.size != int(np.prod(grid.position_shape)):
            raise ValidationError(
                f"PES table shape {table.shape} does not cover position sub-grid {grid.position_shape}")
        table = table.reshape(grid.position_shape)
    if not np.all(np.isfinite(table)):
        raise ValidationError("PES table has missing (non-finite) entries")
    scheme = fd_coefficients(d_e)
    out = []
    for c, a in enumerate(grid.position_axes):
        ax = grid.axes[a]
        check_stencil_fits(d_e, ax.g, "electronic stencil on position axis")
        out.append(stencil_apply(table, scheme, ax.h, axis=c))
    return out


def _coulomb_velocity(grid, params, n, m, j):
    """Z_n Z_m (x_{n,j} - x_{m,j}) / (|x_n - x_m|^2 + Delta^2)^{3/2}."""
    r2 = 0.0
    comp = None
    for jj in range(grid.spatial_dims):
        an, am = grid.x_axis(n, jj), grid.x_axis(m, jj)
        d = grid.axis_values(an) - grid.axis_values(am)
        if params.minimum_image:
            box = grid.axes[an].extent
            d = d - box * np.round(d / box)
        r2 = r2 + d ** 2
        if jj == j:
            comp = d
    zz = params.charges[n] * params.charges[m]
    return zz * comp / (r2 + params.delta ** 2) ** 1.5


def _check_shapes(grid, params):
    if params.N != grid.n_nuclei:
        raise ValidationError(f"params describe {params.N} nuclei, grid has {grid.n_nuclei}")
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            check_stencil_fits(params.d_x, grid.axes[grid.x_axis(n, j)].g, f"x_{n},{j}")
            check_stencil_fits(params.d_p, grid.axes[grid.p_axis(n, j)].g, f"p_{n},{j}")
    if grid.ensemble == "NVT":
        check_stencil_fits(params.d_s, grid.axes[grid.s_axis].g, "s axis")
        check_stencil_fits(params.d_ps, grid.axes[grid.ps_axis].g, "p_s axis")


def bound_params(grid: PhaseSpaceGrid, params: SystemParams, lam: float) -> _bounds.BoundParams:
    """Collect the scalar inputs of the analytic bounds from a concrete grid."""
    xa = [grid.axes[a] for a in grid.position_axes]
    pa = [grid.axes[a] for a in grid.momentum_axes]
    kw = dict(
        N=grid.n_nuclei, dims=grid.spatial_dims,
        p_max=max(a.extent for a in pa), m_min=min(params.masses),
        h_x=min(a.h for a in xa), d_x=params.d_x,
        Z_max=max(params.charges), x_max=max(a.extent for a in xa),
        delta=params.delta, h_p=min(a.h for a in pa), d_p=params.d_p,
        lam=float(lam), d_e=params.d_e,
    )
    if grid.ensemble == "NVT":
        s_ax, ps_ax = grid.axes[grid.s_axis], grid.axes[grid.ps_axis]
        kw.update(nvt=True, s_min=s_ax.offset, ps_max=ps_ax.extent, Q=params.bath_mass,
                  h_s=s_ax.h, d_s=params.d_s, h_ps=ps_ax.h, d_ps=params.d_ps,
                  N_f=params.n_f(grid.spatial_dims), k_B=params.k_B, T=params.temperature)
    return _bounds.BoundParams(**kw)


def _resolve_lambda(params, pes_table):
    if params.lam is not None:
        return float(params.lam)
    return float(np.max(np.abs(pes_table))) if np.size(pes_table) else 0.0


def _nuclear_terms(grid, params, pes_table, kinetic_velocity):
    terms = []
    sx, sp_, s1 = fd_coefficients(params.d_x), fd_coefficients(params.d_p), fd_coefficients(1)
    del_ = electronic_force(grid, pes_table, params.d_e)
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            ax, ap = grid.x_axis(n, j), grid.p_axis(n, j)
            terms.append(Term(f"K_{n}_{j}", ax, sx, kinetic_velocity(n, ap)))
            for m in range(grid.n_nuclei):
                if m != n:
                    terms.append(Term(f"V_class_{n}_{m}_{j}", ap, sp_,
                                      _coulomb_velocity(grid, params, n, m, j)))
            f_el = del_[n * grid.spatial_dims + j]
            terms.append(Term(f"V_el_{n}_{j}", ap, s1, -_position_field(f_el, grid)))
    return terms


def build_nve(grid: PhaseSpaceGrid, params: SystemParams, pes_table) -> LiouvillianOperator:
    """Assemble L_NVE = -i sum_{n,j} (D_x (x) p/m - dH/dx (x) D_p)."""
    if grid.ensemble != "NVE":
        raise ValidationError("build_nve needs an NVE-shaped grid")
    _check_shapes(grid, params)

    def kinetic(n, ap):
        return grid.axis_values(ap) / params.masses[n]

    terms = _nuclear_terms(grid, params, pes_table, kinetic)
    lam = _resolve_lambda(params, pes_table)
    bp = bound_params(grid, params, lam)
    return LiouvillianOperator(grid, terms, "NVE", _bounds.mu(bp), _bounds.term_bounds(bp), lam)


def build_nvt(grid: PhaseSpaceGrid, params: SystemParams, pes_table) -> LiouvillianOperator:
    """Assemble the Nose extended-system Liouvillian L_NVT.

    The bath axis stores sigma = s + s_min, so every (s + s_min) factor is the
    axis value itself.
    """
    if grid.ensemble != "NVT":
        raise ValidationError("build_nvt needs an NVT-shaped grid")
    _check_shapes(grid, params)
    s_ax = grid.axes[grid.s_axis]
    if not s_ax.offset > 0:
        raise ValidationError("s_min (bath axis offset) must be positive")
    sigma = grid.axis_values(grid.s_axis)
    p_s = grid.axis_values(grid.ps_axis)

    def kinetic(n, ap):
        return grid.axis_values(ap) / (params.masses[n] * sigma ** 2)

    terms = _nuclear_terms(grid, params, pes_table, kinetic)
    ss, sps = fd_coefficients(params.d_s), fd_coefficients(params.d_ps)
    terms.append(Term("K_bath", grid.s_axis, ss, p_s / params.bath_mass))
    c = params.bath_force_factor
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            pp = grid.axis_values(grid.p_axis(n, j))
            terms.append(Term(f"V_bath_{n}_{j}", grid.ps_axis, sps,
                              c * pp ** 2 / (params.masses[n] * sigma ** 3)))
    n_f = params.n_f(grid.spatial_dims)
    terms.append(Term("V_bath_T", grid.ps_axis, sps,
                      -n_f * params.k_B * params.temperature / sigma))
    lam = _resolve_lambda(params, pes_table)
    bp = bound_params(grid, params, lam)
    return LiouvillianOperator(grid, terms, "NVT", _bounds.mu(bp), _bounds.term_bounds(bp), lam)


def build(grid, params, pes_table) -> LiouvillianOperator:
    return build_nvt(grid, params, pes_table) if grid.ensemble == "NVT" else build_nve(grid, params, pes_table)


def is_electronic(label: str) -> bool:
    return label.startswith("V_el_")


def split(op: LiouvillianOperator) -> tuple:
    """(L_class, L_el) with L_el = i sum D^el (x) D^1_p and L_class = L - L_el."""
    return (op.subset(lambda lab: not is_electronic(lab)),
            op.subset(is_electronic))


def term_family(label: str, ensemble: str) -> str:
    """Map a term label onto its bound key."""
    if label.startswith("K_bath"):
        return "K_bath"
    if label.startswith("K_"):
        return "K_NVT" if ensemble == "NVT" else "K_NVE"
    if label.startswith("V_class"):
        return "V_class"
    if label.startswith("V_el"):
        return "V_el"
    if label == "V_bath_T":
        return "V_bath_T"
    if label.startswith("V_bath"):
        return "V_bath"
    raise ValidationError(f"unknown term label {label}")


def term_norm_bounds(params: SystemParams, grid: PhaseSpaceGrid, lam: float | None = None) -> dict:
    """The seven analytic term bounds (bath entries only for NVT grids)."""
    if lam is None:
        if params.lam is None:
            raise ValidationError("lambda must be given explicitly or in params")
        lam = params.lam
    return _bounds.term_bounds(bound_params(grid, params, lam))


def commutator_bound(params: SystemParams, grid: PhaseSpaceGrid, ell: int,
                     lam: float | None = None) -> tuple:
    """(mu'(ell), bound on alpha_c(ell) = 2^ell mu'(ell)^(ell+1))."""
    if ell < 1:
        raise ValidationError("ell must be >= 1")
    if lam is None:
        if params.lam is None:
            raise ValidationError("lambda must be given explicitly or in params")
        lam = params.lam
    bp = bound_params(grid, params, lam)
    return _bounds.mu_prime(bp, ell), _bounds.alpha_c_bound(bp, ell)


def spectral_norm(op, dense_cap: int = 1024, tol: float = 1e-10) -> float:
    """Largest singular value of a Hermitian operator or sparse/dense matrix."""
    if isinstance(op, LiouvillianOperator):
        if op.eta <= dense_cap:
            M = op.dense()
        else:
            M = op.matrix()
    else:
        M = op
    if sp.issparse(M):
        if M.shape[0] <= dense_cap:
            M = M.toarray()
        else:
            if M.nnz == 0:
                return 0.0
            # Hermitian: ||M|| = max |eigenvalue|
            w = spla.eigsh(M, k=1, which="LM", tol=tol, return_eigenvectors=False,
                           maxiter=20 * M.shape[0])
            return float(abs(w[0]))
    M = np.asarray(M)
    if not np.any(M):
        return 0.0
    return float(np.linalg.norm(M, 2))


def nested_commutator_sum(A: np.ndarray, B: np.ndarray, ell: int) -> float:
    """Sum of ||[X_{ell+1}, ... [X_2, X_1]]|| over all X_i in {A, B}.

    This is the two-summand nested-commutator quantity that the Trotter
    error bound controls; ell = 1 gives 2 ||[A, B]||.
    """
    if ell < 1:
        raise ValidationError("ell must be >= 1")
    ops = (np.asarray(A), np.asarray(B))
    layer = [ops[0], ops[1]]
    for _ in range(ell):
        layer = [X @ C - C @ X for C in layer for X in ops]
    return float(sum(spectral_norm(C) for C in layer))
