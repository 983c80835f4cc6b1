import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from kvnmd.errors import DomainError, ValidationError
from kvnmd.grid import PhaseSpaceGrid, load_density
from kvnmd.liouville import SystemParams
from kvnmd.pes import CosinePes, tabulate_pes
from kvnmd.thermo import (DiagonalDensity, boltzmann_density, energy_diagonals, extract_diagonal,
                          fannes_bound, free_energy, free_energy_of, gibbs_entropy, kl_divergence,
                          ks_statistic, log_partition, maxwell_boltzmann, real_momentum_marginal)


def nvt_grid(n=1, g=4):
    return PhaseSpaceGrid.build(n, 1, g, 4.0, g, 4.0, g_s=4, s_max=2.0, s_min=0.5, g_ps=4, ps_max=4.0)


def params(n=1, T=0.8):
    return SystemParams([1.0 + i for i in range(n)], [1] * n, temperature=T)


def test_system_shape_excludes_bath_momentum():
    grid = nvt_grid()
    d = DiagonalDensity(grid, np.full(64, 1 / 64))
    assert d.probabilities.shape == (4, 4, 4)
    with pytest.raises(ValidationError):
        DiagonalDensity(PhaseSpaceGrid.build(1, 1, 4, 4.0, 4, 4.0), np.full(16, 1 / 16))
    with pytest.raises(ValidationError):
        DiagonalDensity(grid, np.full(64, 1 / 32))


def test_entropy_edge_cases():
    grid = nvt_grid()
    point = np.zeros(64)
    point[17] = 1.0
    assert gibbs_entropy(DiagonalDensity(grid, point)) == 0.0
    uni = DiagonalDensity(grid, np.full(64, 1 / 64))
    assert gibbs_entropy(uni) == pytest.approx(math.log(64), abs=1e-14)
    assert gibbs_entropy(uni, k_B=2.0) == pytest.approx(2 * math.log(64), abs=1e-14)


def test_extract_diagonal_sums_bath_momentum(rng):
    grid = nvt_grid()
    p = rng.random(grid.eta)
    p /= p.sum()
    d = extract_diagonal(load_density(p, grid))
    np.testing.assert_allclose(d.probabilities, p.reshape(grid.shape).sum(axis=-1), atol=1e-15)


def test_energy_diagonals_brute_force():
    grid = nvt_grid(n=2)
    prm = params(n=2)
    table = tabulate_pes(CosinePes(0.4, 4.0), grid)
    kin, pot, eel = energy_diagonals(grid, prm, table)
    vals = [ax.values for ax in grid.axes[:-1]]
    box = 4.0
    for idx in itertools.product(*[range(len(v)) for v in vals]):
        x1, p1, x2, p2, s = (vals[a][i] for a, i in enumerate(idx))
        k = p1 ** 2 / (1.0 * s ** 2) + p2 ** 2 / (2.0 * s ** 2)
        dx = x1 - x2
        dx -= box * round(dx / box)
        v = 2 * 1.0 / math.sqrt(dx * dx + 1.0)
        assert kin[idx] == pytest.approx(k, rel=1e-13)
        assert pot[idx] == pytest.approx(v, rel=1e-13)
        assert eel[idx] == pytest.approx(table[idx[0], idx[2]], rel=1e-13)


def test_boltzmann_free_energy_matches_log_partition():
    grid = nvt_grid()
    prm = params(T=0.6)
    table = tabulate_pes(CosinePes(0.5, 4.0), grid)
    e = sum(energy_diagonals(grid, prm, table)).reshape(-1)
    lnZ = math.log(sum(math.exp(-x / 0.6) for x in e))
    assert log_partition(grid, prm, table) == pytest.approx(lnZ, abs=1e-12)
    rep = free_energy_of(boltzmann_density(grid, prm, table), prm, table)
    assert rep.F == pytest.approx(-0.6 * lnZ, abs=1e-10)
    assert rep.U == pytest.approx(rep.U_kin + rep.U_pot + rep.U_Eel)
    assert rep.S_G_bits == pytest.approx(rep.S_G / math.log(2))
    with pytest.raises(DomainError):
        boltzmann_density(grid, params(T=0.0), table)


def test_free_energy_of_loaded_state():
    grid = nvt_grid()
    prm = params(T=0.6)
    table = tabulate_pes(CosinePes(0.5, 4.0), grid)
    d = boltzmann_density(grid, prm, table)
    full = np.repeat(d.probabilities[..., None], 4, axis=-1) / 4
    rep = free_energy(load_density(full.reshape(-1), grid), prm, table)
    assert rep.F == pytest.approx(-0.6 * log_partition(grid, prm, table), abs=1e-10)
    assert '"F"' in rep.to_json()


def test_fannes_frozen_and_domain():
    assert fannes_bound(0.1, 16) == pytest.approx(1.2643856189774725, rel=1e-14)
    assert fannes_bound(0.0, 16) == 0.0
    with pytest.raises(DomainError):
        fannes_bound(0.2, 16)
    with pytest.raises(DomainError):
        fannes_bound(-0.1, 16)


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2 ** 32 - 1), st.floats(0.0, 0.99 / (2 * math.e)))
def test_fannes_bound_holds(seed, target):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 65))
    p = r.dirichlet(np.ones(n))
    q = r.dirichlet(np.ones(n))
    # Mix toward q until the trace distance is at most the drawn target.
    tv0 = 0.5 * np.abs(p - q).sum()
    lam = min(1.0, target / tv0) if tv0 > 0 else 0.0
    q = (1 - lam) * p + lam * q
    tv = 0.5 * np.abs(p - q).sum()
    h = lambda v: -np.sum(v[v > 0] * np.log2(v[v > 0]))
    assert abs(h(p) - h(q)) <= fannes_bound(tv, n) + 1e-12


def test_real_momentum_marginal_unscales_virtual_momentum():
    grid = nvt_grid()
    probs = np.zeros((4, 4, 4))
    # p' = 1.0 at s = 1.0 is real momentum 1.0; p' = -1.0 at s = 2.0 is -0.5.
    probs[0, 3, 1] = 0.5
    probs[0, 1, 3] = 0.5
    m = real_momentum_marginal(DiagonalDensity(grid, probs))
    vals = grid.axes[1].values
    assert m[list(vals).index(1.0)] == pytest.approx(0.5)
    # -0.5 sits halfway between grid points; round-half-even bins it at 0.0.
    assert m[list(vals).index(0.0)] == pytest.approx(0.5)


def test_distribution_metrics():
    v = np.linspace(-3, 3, 13)
    mb = maxwell_boltzmann(v, 1.0, 1.0)
    assert mb.sum() == pytest.approx(1.0)
    assert ks_statistic(mb, mb) == 0.0
    assert ks_statistic(np.eye(3)[0], np.eye(3)[2]) == 1.0
    assert kl_divergence(mb, mb) == pytest.approx(0.0, abs=1e-15)
    assert kl_divergence([0.5, 0.5], [1.0, 0.0]) == math.inf
