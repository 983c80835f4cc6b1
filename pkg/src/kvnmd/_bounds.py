"""Closed-form spectral-norm and commutator bounds for the discretized Liouvillian.

This module is the single source for these formulas: ``liouville`` evaluates
them on concrete grids and ``resources`` on cost parameters, so both always
agree exactly.

Counting factors are written for ``dims`` spatial dimensions; with dims = 3
they reduce to the familiar 3N, 6N^2 prefactors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


def fd_sum_bound(d: int) -> float:
    """2(ln d + 1), the bound on sum_k |c_{d,k}|."""
    return 2.0 * (math.log(d) + 1.0)


def electronic_sum_bound(d_e: int) -> float:
    """2 ln(d_e + 1), the electronic-force stencil factor."""
    return 2.0 * math.log(d_e + 1.0)


@dataclass(frozen=True)
class BoundParams:
    """Scalar inputs shared by all bound formulas (atomic units)."""

    N: int
    dims: int
    p_max: float
    m_min: float
    h_x: float
    d_x: int
    Z_max: float
    x_max: float
    delta: float
    h_p: float
    d_p: int
    lam: float
    d_e: int
    nvt: bool = False
    s_min: float = 1.0
    ps_max: float = 0.0
    Q: float = 1.0
    h_s: float = 1.0
    d_s: int = 1
    h_ps: float = 1.0
    d_ps: int = 1
    N_f: float = 0.0
    k_B: float = 1.0
    T: float = 0.0


def term_bounds(b: BoundParams) -> dict:
    """Upper bounds on the spectral norm of each family of Liouvillian terms."""
    out = {
        "K_NVE": b.p_max / b.m_min * fd_sum_bound(b.d_x) / b.h_x,
        "K_NVT": b.p_max / (b.m_min * b.s_min ** 2) * fd_sum_bound(b.d_x) / b.h_x,
        "V_class": 2 * b.Z_max ** 2 * b.x_max / b.delta ** 3 * fd_sum_bound(b.d_p) / b.h_p,
        "V_el": b.lam * electronic_sum_bound(b.d_e) / (b.h_x * b.h_p),
    }
    if b.nvt:
        out["K_bath"] = b.ps_max / b.Q * fd_sum_bound(b.d_s) / b.h_s
        out["V_bath"] = 2 * b.p_max ** 2 / (b.m_min * b.s_min ** 3) * fd_sum_bound(b.d_ps) / b.h_ps
        out["V_bath_T"] = b.N_f * b.k_B * b.T / b.s_min * fd_sum_bound(b.d_ps) / b.h_ps
    return out


def mu_breakdown(b: BoundParams) -> dict:
    """Per-family contributions to the bound mu on ||L||."""
    t = term_bounds(b)
    n_coord = b.dims * b.N
    parts = {
        "kinetic": n_coord * (t["K_NVT"] if b.nvt else t["K_NVE"]),
        "coulomb": 2 * b.dims * b.N ** 2 * t["V_class"],
        "electronic": n_coord * t["V_el"],
    }
    if b.nvt:
        parts["bath_kinetic"] = t["K_bath"]
        parts["bath_coupling"] = n_coord * t["V_bath"]
        parts["bath_temperature"] = t["V_bath_T"]
    return parts


def mu(b: BoundParams) -> float:
    return float(sum(mu_breakdown(b).values()))


def class_normalization(b: BoundParams) -> float:
    """Block-encoding normalization of L_class: mu without the electronic part."""
    parts = mu_breakdown(b)
    return float(sum(v for k, v in parts.items() if k != "electronic"))


def mu_prime(b: BoundParams, ell: int) -> float:
    """Commutator-structured bound mu'(ell)."""
    if ell < 1:
        raise ValueError("ell must be >= 1")
    t = term_bounds(b)
    n_coord = b.dims * b.N
    val = (n_coord * (t["K_NVT"] if b.nvt else t["K_NVE"])
           + 2 * n_coord * ell * t["V_class"]
           + n_coord * t["V_el"])
    if b.nvt:
        val += t["K_bath"] + ell * t["V_bath"] + t["V_bath_T"]
    return float(val)


def alpha_c_bound(b: BoundParams, ell: int) -> float:
    """2^ell mu'(ell)^(ell+1), the bound on the nested-commutator sum."""
    return float(2.0 ** ell * mu_prime(b, ell) ** (ell + 1))
