"""Cost model: normalizations, Trotter segment counts, Toffoli and query totals.

Every big-O expression is evaluated with unit constants; reports carry a
banner saying so. Logarithms are base 2 and clamped below at 1 so that a
log factor never shrinks a count. ``constant_mode="user_supplied"`` multiplies
named components by user constants.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import asdict, dataclass, replace

from . import _bounds
from .errors import DomainError, ResourceCapError, ValidationError
from .evolve import heuristic_order, segment_count

BANNER = "constants are unit-normalized envelopes"
LOG2_3 = math.log2(3)


def lg(x: float) -> float:
    """log2 clamped at 1."""
    if x <= 2:
        return 1.0
    return math.log2(x)


@dataclass(frozen=True)
class CostParams:
    """Inputs of the cost formulas (atomic units).

    Grid sizes ``g_*`` and spacings ``h_*`` describe one axis of each kind;
    ``x_max`` and ``p_max`` are axis extents. ``coulomb_delta`` regularizes
    the pair potential, ``overlap_delta`` lower-bounds the initial-state
    overlap with the electronic ground state, ``gap`` lower-bounds the
    electronic spectral gap, and ``chi``/``u`` describe PES smoothness.
    """

    t: float = 1.0
    eps: float = 1e-3
    xi: float = 1e-2
    k: int | None = None
    N: int = 2
    N_el: int = 2
    dims: int = 3
    m_min: float = 1836.0
    Z_max: float = 1.0
    x_max: float = 10.0
    p_max: float = 10.0
    g_x: int = 32
    g_p: int = 32
    d_x: int = 2
    d_p: int = 2
    d_e: int | None = None
    coulomb_delta: float = 0.5
    B: int = 64
    h_el: float = 0.5
    overlap_delta: float = 0.5
    gap: float = 0.1
    chi: float = 1.0
    u: float = 1.0
    nvt: bool = False
    g_s: int = 16
    g_ps: int = 16
    s_max: float = 2.0
    s_min: float = 0.5
    ps_max: float = 10.0
    d_s: int = 2
    d_ps: int = 2
    Q: float = 10.0
    T: float = 0.01
    constraints: int = 0
    k_B: float = 1.0
    lam: float | None = None
    nu: float = 0.5
    eta: float | None = None
    constant_mode: str = "unit"
    constants: tuple = ()

    def __post_init__(self):
        for name in ("eps", "xi", "overlap_delta"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise DomainError(f"{name} must lie in (0, 1)")
        for name in ("m_min", "x_max", "p_max", "coulomb_delta", "h_el", "gap", "Q", "s_min",
                     "s_max", "ps_max", "k_B", "u"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if self.t < 0:
            raise DomainError("t must be nonnegative")
        if self.constant_mode not in ("unit", "user_supplied"):
            raise ValidationError("constant_mode must be 'unit' or 'user_supplied'")

    @property
    def h_x(self) -> float:
        return self.x_max / self.g_x

    @property
    def h_p(self) -> float:
        return self.p_max / self.g_p

    @property
    def h_s(self) -> float:
        return self.s_max / self.g_s

    @property
    def h_ps(self) -> float:
        return self.ps_max / self.g_ps

    @property
    def N_tot(self) -> int:
        return self.N + self.N_el

    @property
    def N_f(self) -> int:
        return self.dims * self.N - self.constraints

    def constant(self, name: str) -> float:
        if self.constant_mode == "unit":
            return 1.0
        return float(dict(self.constants).get(name, 1.0))


@dataclass
class EulerReport:
    delta_grad: float
    h_step: float
    steps: float
    per_gradient: float
    toffoli_MD: float


@dataclass
class CostReport:
    lambda_: float
    mu: float
    mu_prime: float
    alpha_c: float
    alpha_class: float
    d_e: int
    k_chosen: int
    r: int
    n_exp: int
    total_time_T2k: float
    toffoli_classical_part: float
    toffoli_electronic_part: float
    toffoli_total: float
    queries_UI: float
    toffoli_entropy: float | None = None
    toffoli_internal: float | None = None
    queries_UI_total: float | None = None
    entropy_queries: float | None = None
    internal_queries: float | None = None
    alpha_nuc: float | None = None
    euler: EulerReport | None = None
    banner: str = BANNER

    def to_dict(self) -> dict:
        d = asdict(self)
        d["lambda"] = d.pop("lambda_")
        for key in ("toffoli_total", "toffoli_classical_part", "toffoli_electronic_part"):
            d["log2_" + key] = math.log2(d[key]) if d[key] > 0 else float("-inf")
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def lambda_electronic(p: CostParams) -> float:
    """N_el / h_el^2 + N N_el Z_max / h_el + N_el^2 / h_el."""
    if p.lam is not None:
        return float(p.lam)
    h = p.h_el
    return p.N_el / h ** 2 + p.N * p.N_el * p.Z_max / h + p.N_el ** 2 / h


def electronic_stencil_order(p: CostParams) -> int:
    """d_e = ceil(log(N chi u t / (h_p eps)) / log(1 / (u h_x))), at least 1."""
    if p.d_e is not None:
        return int(p.d_e)
    uh = p.u * p.h_x
    if not uh < 1:
        raise DomainError("the electronic stencil order needs u h_x < 1")
    num = p.N * p.chi * p.u * max(p.t, 1e-300) / (p.h_p * p.eps)
    if num <= 1:
        return 1
    return max(1, math.ceil(math.log(num) / math.log(1 / uh)))


def bound_params(p: CostParams) -> _bounds.BoundParams:
    kw = dict(N=p.N, dims=p.dims, p_max=p.p_max, m_min=p.m_min, h_x=p.h_x, d_x=p.d_x,
              Z_max=p.Z_max, x_max=p.x_max, delta=p.coulomb_delta, h_p=p.h_p, d_p=p.d_p,
              lam=lambda_electronic(p), d_e=electronic_stencil_order(p))
    if p.nvt:
        kw.update(nvt=True, s_min=p.s_min, ps_max=p.ps_max, Q=p.Q, h_s=p.h_s, d_s=p.d_s,
                  h_ps=p.h_ps, d_ps=p.d_ps, N_f=p.N_f, k_B=p.k_B, T=p.T)
    return _bounds.BoundParams(**kw)


def mu_bounds(p: CostParams) -> tuple:
    """(mu, per-family breakdown) for the selected ensemble."""
    b = bound_params(p)
    return _bounds.mu(b), _bounds.mu_breakdown(b)


def trotter_costs(p: CostParams) -> dict:
    """k, r, N_exp, T_2k bound and alpha_c(2k) for the two-operator split."""
    b = bound_params(p)
    mu = _bounds.mu(b)
    k = p.k if p.k is not None else heuristic_order(mu, p.t, p.eps)
    alpha_c = _bounds.alpha_c_bound(b, 2 * k)
    r = segment_count(alpha_c, p.t, p.eps, k)
    return {"k": k, "r": r, "n_exp": 2 * 5 ** (k - 1) + 1, "T_2k": 5 ** (k - 1) * p.t,
            "alpha_c": alpha_c, "mu_prime": _bounds.mu_prime(b, 2 * k), "mu": mu}


def simulation_cost(p: CostParams) -> CostReport:
    """Query and Toffoli totals for one Liouvillian simulation to error eps."""
    b = bound_params(p)
    tc = trotter_costs(p)
    k, r = tc["k"], tc["r"]
    lam = lambda_electronic(p)
    alpha = _bounds.class_normalization(b)
    d_e = electronic_stencil_order(p)
    five_k = 5.0 ** k
    t, eps, xi = p.t, p.eps, p.xi
    g = max(p.g_x, p.g_p, p.g_s if p.nvt else 0, p.g_ps if p.nvt else 0)
    d = max(p.d_x, p.d_p, p.d_s if p.nvt else 0, p.d_ps if p.nvt else 0)
    hxhp = p.h_x * p.h_p

    eps_c = eps / (five_k * max(t, 1e-300))
    tof_class_query = (p.N * lg(g * alpha / eps_c) + lg(alpha / eps_c) ** LOG2_3 + d * lg(g))
    steps = r * five_k
    q_class = lg(steps / xi) * (alpha * five_k * t + steps * lg(steps / eps))

    M = steps * p.N * d_e
    X = M * lam * math.log(d_e + 1) * t / (hxhp * eps)
    q_el = (five_k * p.N * d_e * lg(M / xi) * (lam * t / hxhp + r * lg(X) * lg(M * lg(X) / eps))
            + M * lam / (p.gap * p.overlap_delta) * lg(M / (p.overlap_delta * eps)) * lg(M / xi))
    q_ui = M / p.overlap_delta * lg(M / xi)
    tof_el_query = p.N + p.N_el + lg(p.B * five_k * 36 * p.N * d_e * t / (hxhp * eps))

    if t == 0:
        q_class = q_el = q_ui = 0.0
    tof_class = p.constant("classical") * q_class * tof_class_query
    tof_el = p.constant("electronic") * q_el * tof_el_query
    return CostReport(
        lambda_=lam, mu=tc["mu"], mu_prime=tc["mu_prime"], alpha_c=tc["alpha_c"],
        alpha_class=alpha, d_e=d_e, k_chosen=k, r=r, n_exp=tc["n_exp"],
        total_time_T2k=tc["T_2k"], toffoli_classical_part=tof_class,
        toffoli_electronic_part=tof_el, toffoli_total=tof_class + tof_el,
        queries_UI=p.constant("queries") * q_ui)


def alpha_nuc(p: CostParams) -> float:
    """dims N p'^2 / (m s_min^2) + N^2 Z^2 / Delta + lambda."""
    return (p.dims * p.N * p.p_max ** 2 / (p.m_min * p.s_min ** 2)
            + p.N ** 2 * p.Z_max ** 2 / p.coulomb_delta + lambda_electronic(p))


def log2_eta_pur(p: CostParams) -> float:
    """log2 of g_x^(2 dims N) g_p^(2 dims N) g_s^2 g_ps."""
    n = 2 * p.dims * p.N
    return n * math.log2(p.g_x) + n * math.log2(p.g_p) + 2 * math.log2(p.g_s) + math.log2(p.g_ps)


def system_size(p: CostParams) -> float:
    """Size of the system sub-grid (positions, virtual momenta, s)."""
    if p.eta is not None:
        return float(p.eta)
    n = p.dims * p.N
    log2_eta = n * math.log2(p.g_x) + n * math.log2(p.g_p) + math.log2(p.g_s)
    if log2_eta >= 1023:
        raise ResourceCapError(f"system sub-grid size 2^{log2_eta:.0f} overflows double precision")
    return 2.0 ** log2_eta


def _scaled_eps(p: CostParams, log_divisor: float) -> float:
    e = math.exp(math.log(p.eps) - log_divisor)
    if e <= 0 or not math.isfinite(e):
        raise ResourceCapError("evolution precision underflows double precision")
    return e


def free_energy_cost(p: CostParams) -> CostReport:
    """Entropy plus internal-energy estimation costs on top of NVT evolution."""
    if not 0 < p.nu < 1:
        raise DomainError("nu must lie in (0, 1)")
    if not p.T > 0:
        raise DomainError("free-energy estimation needs T > 0")
    eta = system_size(p)
    ln_pur = log2_eta_pur(p) * math.log(2)
    log_xi = lg(1 / p.xi)
    lam = lambda_electronic(p)
    a_nuc = alpha_nuc(p)

    ent_q = eta * (2 * p.k_B * p.T / p.eps) ** 1.5 * log_xi
    eps_u = _scaled_eps(p, ln_pur + math.log(8 * p.k_B * p.T * math.log2(eta / p.nu)))
    ev_u = simulation_cost(replace(p, eps=eps_u, nvt=True))

    int_q = a_nuc / p.eps * log_xi
    eps_i = _scaled_eps(p, ln_pur + math.log(36 * a_nuc))
    ev_i = simulation_cost(replace(p, eps=eps_i, nvt=True))
    g = max(p.g_x, p.g_p, p.g_s, p.g_ps)
    h_terms = (p.N * lg(g * a_nuc / p.eps) + lg(a_nuc / p.eps) ** LOG2_3
               + p.N_tot * lam * (1 / p.eps + 1 / (p.gap * p.overlap_delta)))

    base = simulation_cost(replace(p, nvt=True))
    base.toffoli_entropy = p.constant("entropy") * ent_q * ev_u.toffoli_total
    base.toffoli_internal = p.constant("internal") * int_q * (ev_i.toffoli_total + h_terms)
    base.queries_UI_total = ent_q * ev_u.queries_UI + int_q * ev_i.queries_UI
    base.entropy_queries = ent_q
    base.internal_queries = int_q
    base.alpha_nuc = a_nuc
    base.toffoli_total = base.toffoli_total + base.toffoli_entropy + base.toffoli_internal
    return base


def euler_baseline(eps_md: float, K: float, T: float, N_a: float) -> EulerReport:
    """Worst-case gradient-descent-style MD cost with Lipschitz constant K."""
    for name, v in (("eps_md", eps_md), ("K", K), ("T", T), ("N_a", N_a)):
        if not v > 0:
            raise DomainError(f"{name} must be positive")
    delta = eps_md * K / (3 * math.exp(K * T) * math.log(2))
    h = math.log(2) / K
    steps = K * T / math.log(2)
    per = N_a ** 3.5 / delta
    return EulerReport(delta, h, steps, per, steps * per)


def log_euler_total(eps_md: float, K: float, T: float, N_a: float) -> float:
    """ln of the Euler total, safe for large K T."""
    return (math.log(K * T / math.log(2)) + 3.5 * math.log(N_a)
            - math.log(eps_md * K / (3 * math.log(2))) + K * T)


def crossover_time(p: CostParams, K: float, N_a: float, T_lo: float = 1e-3,
                   T_hi: float = 1e4, points: int = 400) -> float | None:
    """Smallest T on a log grid where the Euler total exceeds the Liouvillian total."""
    prev = None
    for i in range(points):
        T = T_lo * (T_hi / T_lo) ** (i / (points - 1))
        liou = simulation_cost(replace(p, t=T)).toffoli_total
        diff = log_euler_total(p.eps, K, T, N_a) - math.log(max(liou, 1e-300))
        if diff > 0:
            if prev is None:
                return T
            lo, hi = prev, T
            for _ in range(60):
                mid = math.sqrt(lo * hi)
                liou = simulation_cost(replace(p, t=mid)).toffoli_total
                if log_euler_total(p.eps, K, mid, N_a) > math.log(max(liou, 1e-300)):
                    hi = mid
                else:
                    lo = mid
            return hi
        prev = T
    return None


def sweep(p: CostParams, name: str, values, mode: str = "simulation") -> list:
    """Reports for each value of one CostParams field."""
    fn = free_energy_cost if mode == "free_energy" else simulation_cost
    return [(v, fn(replace(p, **{name: v}))) for v in values]


def reports_to_csv(rows, key: str) -> str:
    """CSV with one line per (value, report) pair; nested fields are skipped."""
    buf = io.StringIO()
    flat = []
    for v, rep in rows:
        d = {key: v}
        d.update({k: x for k, x in rep.to_dict().items() if not isinstance(x, dict)})
        flat.append(d)
    w = csv.DictWriter(buf, fieldnames=list(flat[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(flat)
    return buf.getvalue()


def estimate_gap(model, grid) -> float:
    """Smallest plane-wave ground-state gap over all position grid points."""
    from .pes import ground_state_gap, position_points

    pts = position_points(grid).reshape(-1, grid.n_nuclei, grid.spatial_dims)
    return float(min(ground_state_gap(model, x)[1] for x in pts))

