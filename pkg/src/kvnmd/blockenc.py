"""Dense block encodings and their composition rules.

A block encoding of A is a unitary U on (ancilla (x) system) with
``A ~ alpha * (<0| (x) I) U (|0> (x) I)``. Ancillas are the most significant
register, so the encoded block is the top-left ``s_dim x s_dim`` corner.
Every constructor measures the actual error and checks it against the
certified ``eps``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .findiff import fd_coefficients
from .grid import PhaseSpaceGrid
from .liouville import SystemParams

UNITARY_TOL = 1e-10
CERT_SLACK = 1e-10
MAX_TERMS = 64


def _check_unitary(U: np.ndarray, label: str = "matrix") -> None:
    n = U.shape[0]
    if U.shape != (n, n):
        raise ValidationError(f"{label} is not square")
    if np.max(np.abs(U.conj().T @ U - np.eye(n))) > UNITARY_TOL:
        raise ValidationError(f"{label} is not unitary")


def top_left_block(U: np.ndarray, s_dim: int) -> np.ndarray:
    return U[:s_dim, :s_dim]


@dataclass
class BlockEncoding:
    """(alpha, a, eps) block encoding of ``target`` by the unitary ``U``."""

    U: np.ndarray
    alpha: float
    a: int
    eps: float
    target: np.ndarray

    def __post_init__(self):
        self.U = np.asarray(self.U, dtype=np.complex128)
        self.target = np.asarray(self.target, dtype=np.complex128)
        if self.U.shape[0] != (1 << self.a) * self.s_dim:
            raise ValidationError("unitary size does not match ancilla and system dimensions")
        _check_unitary(self.U, "block-encoding unitary")
        err = self.measured_error()
        if err > self.eps + CERT_SLACK * max(1.0, self.alpha):
            raise ValidationError(f"measured error {err:.3e} exceeds certificate {self.eps:.3e}")

    @property
    def s_dim(self) -> int:
        return self.target.shape[0]

    @property
    def block(self) -> np.ndarray:
        return top_left_block(self.U, self.s_dim)

    def encoded(self) -> np.ndarray:
        return self.alpha * self.block

    def measured_error(self) -> float:
        return float(np.linalg.norm(self.target - self.encoded(), 2))


def complete_unitary(column: np.ndarray) -> np.ndarray:
    """A unitary whose first column is the given unit vector."""
    v = np.asarray(column, dtype=np.complex128).reshape(-1)
    nrm = np.linalg.norm(v)
    if abs(nrm - 1.0) > 1e-12:
        raise ValidationError("PREP column must be a unit vector")
    n = v.size
    M = np.eye(n, dtype=np.complex128)
    M[:, 0] = v
    # Swap in a basis vector that keeps the seed matrix well conditioned.
    j = int(np.argmax(np.abs(v)))
    if j != 0:
        M[:, j] = np.eye(n)[:, 0]
    Q, _ = np.linalg.qr(M)
    Q[:, 0] *= np.vdot(Q[:, 0], v)
    return Q


def _num_bits(m: int) -> int:
    return max(0, math.ceil(math.log2(m))) if m > 1 else 0


def select(unitaries: list, bits: int) -> np.ndarray:
    """Block-diagonal SEL = sum_j |j><j| (x) U_j, padded with identities."""
    n = unitaries[0].shape[0]
    size = 1 << bits
    S = np.zeros((size * n, size * n), dtype=np.complex128)
    for j in range(size):
        U = unitaries[j] if j < len(unitaries) else np.eye(n)
        S[j * n:(j + 1) * n, j * n:(j + 1) * n] = U
    return S


def lcu_unitary(prep_left: np.ndarray, sel: np.ndarray, prep_right: np.ndarray, n: int) -> np.ndarray:
    """(P_L^dagger (x) I) SEL (P_R (x) I)."""
    I = np.eye(n)
    return np.kron(prep_left.conj().T, I) @ sel @ np.kron(prep_right, I)


def lcu_encode(unitaries, weights) -> BlockEncoding:
    """Exact encoding of sum_j w_j U_j with alpha = sum_j w_j."""
    unitaries = [np.asarray(U, dtype=np.complex128) for U in unitaries]
    w = np.asarray(weights, dtype=float)
    if not unitaries or len(unitaries) != w.size:
        raise ValidationError("need one weight per unitary")
    if len(unitaries) > MAX_TERMS:
        raise ValidationError(f"at most {MAX_TERMS} unitaries are supported")
    if np.any(w < 0):
        raise ValidationError("weights must be nonnegative")
    n = unitaries[0].shape[0]
    for U in unitaries:
        if U.shape != (n, n):
            raise ValidationError("unitaries must share one dimension")
        _check_unitary(U, "LCU term")
    alpha = float(w.sum())
    if alpha <= 0:
        raise ValidationError("weights must not all vanish")
    bits = _num_bits(len(unitaries))
    col = np.zeros(1 << bits, dtype=np.complex128)
    col[: w.size] = np.sqrt(w / alpha)
    P = complete_unitary(col)
    U = lcu_unitary(P, select(unitaries, bits), P, n)
    target = sum(wj * Uj for wj, Uj in zip(w, unitaries))
    return BlockEncoding(U, alpha, bits, 1e-12 * max(1.0, alpha), target)


def perturbed_prep_error(unitaries, weights, delta: float, rng=None) -> tuple:
    """Measured error of an LCU whose PREP column moved by distance ``delta``.

    Returns (measured, bound) with bound = 2 alpha sqrt(2^a) delta.
    """
    if not 0 <= delta <= 1:
        raise ValidationError("delta must lie in [0, 1]")
    rng = np.random.default_rng(rng)
    exact = lcu_encode(unitaries, weights)
    n = exact.s_dim
    dim = 1 << exact.a
    w = np.asarray(weights, dtype=float)
    v = np.zeros(dim, dtype=np.complex128)
    v[: w.size] = np.sqrt(w / exact.alpha)
    r = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    r -= np.vdot(v, r) * v
    r /= np.linalg.norm(r)
    theta = 2 * math.asin(delta / 2)
    vp = math.cos(theta) * v + math.sin(theta) * r
    Pp = complete_unitary(vp)
    units = [np.asarray(U, dtype=np.complex128) for U in unitaries]
    Up = lcu_unitary(Pp, select(units, exact.a), Pp, n)
    measured = float(np.linalg.norm(exact.target - exact.alpha * top_left_block(Up, n), 2))
    bound = 2 * exact.alpha * math.sqrt(dim) * delta
    return measured, bound


def _embed_on_ancilla(U: np.ndarray, a_self: int, a_other: int, s_dim: int, self_first: bool) -> np.ndarray:
    """Extend U on (anc_self, sys) to (anc_first, anc_second, sys)."""
    A, B = 1 << a_self, 1 << a_other
    if not self_first:
        return np.kron(np.eye(B), U)
    U4 = U.reshape(A, s_dim, A, s_dim)
    W = np.einsum("isjt,bc->ibsjct", U4, np.eye(B))
    return W.reshape(A * B * s_dim, A * B * s_dim)


def product_encoding(u: BlockEncoding, v: BlockEncoding) -> BlockEncoding:
    """Encoding of u.target @ v.target: (alpha beta, a + b, alpha eps_v + beta eps_u)."""
    if u.s_dim != v.s_dim:
        raise ValidationError("system dimensions differ")
    n = u.s_dim
    Wu = _embed_on_ancilla(u.U, u.a, v.a, n, self_first=True)
    Wv = _embed_on_ancilla(v.U, v.a, u.a, n, self_first=False)
    eps = u.alpha * v.eps + v.alpha * u.eps
    return BlockEncoding(Wu @ Wv, u.alpha * v.alpha, u.a + v.a, eps, u.target @ v.target)


@dataclass
class PrepPair:
    """State-preparation pair: P_L|0> = sum c_j |j>, P_R|0> = sum d_j |j>.

    ``beta * conj(c_j) d_j`` approximates ``y_j`` to total error ``eps``.
    """

    c: np.ndarray
    d: np.ndarray
    beta: float
    y: np.ndarray
    eps: float = 0.0

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.complex128)
        self.d = np.asarray(self.d, dtype=np.complex128)
        self.y = np.asarray(self.y, dtype=np.complex128)
        if self.c.size != self.d.size or self.c.size & (self.c.size - 1):
            raise ValidationError("prep amplitudes must have equal power-of-two length")
        for vec in (self.c, self.d):
            if abs(np.linalg.norm(vec) - 1) > 1e-12:
                raise ValidationError("prep amplitudes must be unit vectors")
        m = self.y.size
        if np.any(np.abs(np.conj(self.c[m:]) * self.d[m:]) > 1e-14):
            raise ValidationError("prep overlap must vanish beyond the first m slots")
        err = self.measured_error()
        if err > self.eps + CERT_SLACK * max(1.0, self.beta):
            raise ValidationError(f"prep pair error {err:.3e} exceeds declared {self.eps:.3e}")

    @property
    def b(self) -> int:
        return int(math.log2(self.c.size))

    def measured_error(self) -> float:
        m = self.y.size
        return float(np.sum(np.abs(self.beta * np.conj(self.c[:m]) * self.d[:m] - self.y)))

    @classmethod
    def for_coefficients(cls, y) -> "PrepPair":
        """Exact pair for real coefficients y: signs ride on the right amplitudes."""
        y = np.asarray(y, dtype=float)
        beta = float(np.abs(y).sum())
        if beta == 0:
            raise ValidationError("coefficients must not all vanish")
        size = 1 << _num_bits(y.size)
        c = np.zeros(size, dtype=np.complex128)
        d = np.zeros(size, dtype=np.complex128)
        c[: y.size] = np.sqrt(np.abs(y) / beta)
        d[: y.size] = np.sign(y) * np.sqrt(np.abs(y) / beta)
        return cls(c, d, beta, y, 0.0)


def sum_encoding(encodings, pair: PrepPair) -> BlockEncoding:
    """Encoding of sum_j y_j A_j: (alpha beta, a + b, alpha eps_pair + beta eps_max)."""
    encodings = list(encodings)
    if not encodings or len(encodings) != pair.y.size:
        raise ValidationError("need one encoding per coefficient")
    alpha, a, n = encodings[0].alpha, encodings[0].a, encodings[0].s_dim
    for e in encodings:
        if not math.isclose(e.alpha, alpha, rel_tol=1e-12) or e.a != a or e.s_dim != n:
            raise ValidationError("sub-encodings must share alpha, ancilla count and dimension; renormalize first")
    inner = (1 << a) * n
    PL = complete_unitary(pair.c)
    PR = complete_unitary(pair.d)
    sel = select([e.U for e in encodings], pair.b)
    U = lcu_unitary(PL, sel, PR, inner)
    target = sum(complex(yj) * e.target for yj, e in zip(pair.y, encodings))
    eps = alpha * pair.eps + pair.beta * max(e.eps for e in encodings)
    return BlockEncoding(U, alpha * pair.beta, a + pair.b, eps, target)


def renormalize(enc: BlockEncoding, beta: float) -> BlockEncoding:
    """Read an (alpha, a, eps) encoding of A as an (alpha beta, a, beta eps) encoding of beta A."""
    if beta <= 0:
        raise ValidationError("beta must be positive")
    return BlockEncoding(enc.U, enc.alpha * beta, enc.a, enc.eps * beta, enc.target * beta)


def pad_ancillas(enc: BlockEncoding, a_new: int) -> BlockEncoding:
    """Add idle ancillas (most significant) so the total count is ``a_new``."""
    if a_new < enc.a:
        raise ValidationError("cannot remove ancillas")
    if a_new == enc.a:
        return enc
    U = np.kron(np.eye(1 << (a_new - enc.a)), enc.U)
    return BlockEncoding(U, enc.alpha, a_new, enc.eps, enc.target)


def combine(encodings, coefficients) -> BlockEncoding:
    """Weighted sum of encodings with arbitrary alphas and ancilla counts.

    Each encoding is first rescaled to alpha = 1 and padded to a common
    ancilla count; the coefficients are then scaled by the original alphas.
    """
    encodings = list(encodings)
    a = max(e.a for e in encodings)
    unit = [pad_ancillas(renormalize(e, 1.0 / e.alpha), a) for e in encodings]
    y = np.asarray(coefficients, dtype=float) * np.array([e.alpha for e in encodings])
    return sum_encoding(unit, PrepPair.for_coefficients(y))


def embed(enc: BlockEncoding, left: int, right: int) -> BlockEncoding:
    """Tensor the system with identities: target I_left (x) A (x) I_right."""
    A = 1 << enc.a
    n = enc.s_dim
    U4 = enc.U.reshape(A, n, A, n)
    W = np.einsum("isjt,lm,rq->ilsrjmtq", U4, np.eye(left), np.eye(right))
    size = A * left * n * right
    target = np.kron(np.kron(np.eye(left), enc.target), np.eye(right))
    return BlockEncoding(W.reshape(size, size), enc.alpha, enc.a, enc.eps, target)


def alternating_sign_encode(values, a: int, scale: float = 1.0, rounded: bool = False,
                            target=None) -> BlockEncoding:
    """Encode diag(scale * v) for integers v in [0, 2^a) via the alternating-sign trick.

    PREP is the uniform superposition over 2^a ancilla states; SEL applies
    (-1)^j whenever j > v. The block is v / 2^a for even v and (v + 1) / 2^a
    for odd v, so alpha = scale 2^a and the certified error is ``scale``
    (``1.5 scale`` when the integers came from rounding real values).
    """
    v = np.asarray(values)
    if np.any(v != np.round(v)) or np.any(v < 0) or np.any(v >= (1 << a)):
        raise ValidationError(f"values must be integers in [0, 2^{a})")
    v = v.astype(np.int64)
    dim = 1 << a
    n = v.size
    j = np.arange(dim)[:, None]
    phases = np.where(j > v[None, :], (-1.0) ** j, 1.0)
    sel = np.diag(phases.reshape(-1).astype(np.complex128))
    P = complete_unitary(np.full(dim, 1 / math.sqrt(dim)))
    U = lcu_unitary(P, sel, P, n)
    if target is None:
        target = np.diag(scale * v.astype(float))
    has_odd = bool(np.any(v % 2))
    eps = scale * (1.5 if rounded else (1.0 if has_odd else 0.0))
    return BlockEncoding(U, scale * dim, a, eps + 1e-12 * scale * dim, target)


def encode_diagonal(real_values, a: int, v_max: float) -> BlockEncoding:
    """Round nonnegative reals onto the integer grid and encode them."""
    x = np.asarray(real_values, dtype=float)
    if np.any(x < 0) or np.any(x > v_max):
        raise ValidationError("values must lie in [0, v_max]")
    scale = v_max / ((1 << a) - 1)
    vi = np.rint(x / scale)
    return alternating_sign_encode(vi, a, scale, rounded=True, target=np.diag(x))


def sign_encoding(values) -> BlockEncoding:
    """Exact (1, 0, 0) encoding of diag(sign(v)) with sign(0) = +1."""
    s = np.where(np.asarray(values) < 0, -1.0, 1.0)
    D = np.diag(s.astype(np.complex128))
    return BlockEncoding(D, 1.0, 0, 0.0, D)


def signed_momentum_encoding(axis_values, h: float) -> BlockEncoding:
    """Encoding of diag(p) on a centered momentum axis: sign times |p|."""
    p = np.asarray(axis_values, dtype=float)
    g = p.size
    mag = np.rint(np.abs(p) / h)
    a = int(math.log2(g))
    alt = alternating_sign_encode(mag, a, h)
    return product_encoding(sign_encoding(p), alt)


def shift_matrix(g: int, k: int) -> np.ndarray:
    """(S_k f)(z) = f(z + k) on a periodic axis."""
    S = np.zeros((g, g))
    S[np.arange(g), (np.arange(g) + k) % g] = 1.0
    return S


def derivative_encoding(d: int, g: int, h: float) -> BlockEncoding:
    """-i D as sum_k |c_k|/h (-i sign(c_k) S_k)."""
    scheme = fd_coefficients(d)
    offs, coeffs = scheme.nonzero()
    units = [-1j * np.sign(c) * shift_matrix(g, int(k)) for k, c in zip(offs, coeffs)]
    return lcu_encode(units, np.abs(coeffs) / h)


def kinetic_hierarchy(grid: PhaseSpaceGrid, params: SystemParams, cap: int = 64) -> BlockEncoding:
    """Encoding of the NVE kinetic Liouvillian sum_{n,j} -i diag(p/m) (x) D_x.

    Each (n, j) term is the product of a derivative LCU on x_{n,j} and a
    signed-momentum encoding on p_{n,j}; the terms are then joined by a
    prep pair with weights 1/m_n.
    """
    if grid.ensemble != "NVE":
        raise ValidationError("the hierarchy check covers NVE grids")
    if grid.eta > cap:
        raise ValidationError(f"hierarchy verification is capped at eta <= {cap}")
    shape = grid.shape
    terms, weights = [], []
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            ax, ap = grid.x_axis(n, j), grid.p_axis(n, j)
            dx = derivative_encoding(params.d_x, shape[ax], grid.axes[ax].h)
            pm = signed_momentum_encoding(grid.axes[ap].values, grid.axes[ap].h)
            dx_full = embed(dx, int(np.prod(shape[:ax])), int(np.prod(shape[ax + 1:])))
            pm_full = embed(pm, int(np.prod(shape[:ap])), int(np.prod(shape[ap + 1:])))
            terms.append(product_encoding(pm_full, dx_full))
            weights.append(1.0 / params.masses[n])
    return sum_encoding(terms, PrepPair.for_coefficients(np.asarray(weights)))


def kinetic_normalization(grid: PhaseSpaceGrid, params: SystemParams) -> float:
    """alpha of :func:`kinetic_hierarchy`: (sum 1/m) (h_p 2^a_p) (sum |c| / h_x)."""
    total = 0.0
    for n in range(grid.n_nuclei):
        for j in range(grid.spatial_dims):
            ax, ap = grid.axes[grid.x_axis(n, j)], grid.axes[grid.p_axis(n, j)]
            per = ap.h * ap.g * fd_coefficients(params.d_x).abs_sum / ax.h
            total += per / params.masses[n]
    return total


def inequality_test_gates(n: int) -> list:
    """Toffoli list of the n-bit comparator that outputs 0 iff a <= b.

    Per bit one three-Toffoli compare block (the C^3 NOT), then n - 1
    carry transfers between bit positions and n - 1 uncompute steps.
    """
    if n < 1:
        raise ValidationError("bit width must be positive")
    gates = []
    for i in range(n):
        gates += [("toffoli", f"compare[{i}].{t}") for t in range(3)]
    gates += [("toffoli", f"carry[{i}]") for i in range(n - 1)]
    gates += [("toffoli", f"uncompute[{i}]") for i in range(n - 1)]
    return gates


def inequality_test_toffolis(n: int) -> int:
    """5n - 2."""
    if n < 1:
        raise ValidationError("bit width must be positive")
    return 5 * n - 2
