"""Command-line driver: ``kvnmd run|validate|sweep --config FILE``.

Exit codes: 0 success, 2 validation failure, 3 numerical failure,
4 resource cap exceeded.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import struct
import sys
from dataclasses import asdict, fields, replace

import numpy as np

from . import __version__
from .config import RunConfig, diagnostics, load
from .errors import NumericalError, ResourceCapError, ValidationError
from .evolve import PropagationRecord, build_plan, plan_trotter, propagate
from .grid import PhaseSpaceGrid, load_density
from .liouville import (SystemParams, build, commutator_bound, nested_commutator_sum, split,
                        spectral_norm, term_family)
from .pes import (ConstantPes, CosinePes, HarmonicPes, PlaneWaveModel, PlaneWavePes, TabulatedPes,
                  ZeroPes, read_pes_table, tabulate_pes)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL, EXIT_CAP = 0, 2, 3, 4
THREADS_ENV = "KVNMD_THREADS"
BINARY_MAGIC = b"KVNM"
BINARY_COMPLEX64_LE = 1


class Writer:
    """Writes output files stamped with the library version and config hash."""

    def __init__(self, out_dir: str, cfg: RunConfig, fmt: str):
        self.out_dir = out_dir
        self.cfg = cfg
        self.fmt = fmt
        self.written = []
        os.makedirs(out_dir, exist_ok=True)

    @property
    def meta(self) -> dict:
        return {"version": __version__, "config_sha256": self.cfg.digest, "mode": self.cfg.mode,
                "seed": self.cfg.seed}

    def _path(self, name):
        p = os.path.join(self.out_dir, name)
        self.written.append(p)
        return p

    def json(self, name: str, payload: dict) -> str:
        path = self._path(name + ".json")
        with open(path, "w") as fh:
            json.dump({"meta": self.meta, **payload}, fh, sort_keys=True, indent=1, default=_jsonable)
            fh.write("\n")
        return path

    def csv(self, name: str, rows: list) -> str:
        path = self._path(name + ".csv")
        with open(path, "w", newline="") as fh:
            fh.write(f"# kvnmd {__version__} config_sha256={self.cfg.digest}\n")
            if rows:
                w = csv.DictWriter(fh, fieldnames=list(rows[0]), lineterminator="\n")
                w.writeheader()
                for r in rows:
                    w.writerow({k: _fmt(v) for k, v in r.items()})
        return path

    def table(self, name: str, rows: list) -> str:
        """Tabular output in the format chosen on the command line."""
        if self.fmt == "json":
            return self.json(name, {"rows": rows})
        return self.csv(name, rows)

    def binary_state(self, name: str, amplitudes: np.ndarray) -> str:
        """16-byte header (magic, format tag, eta) then little-endian complex64."""
        path = self._path(name + ".bin")
        a = np.asarray(amplitudes, dtype="<c8")
        with open(path, "wb") as fh:
            fh.write(BINARY_MAGIC + struct.pack("<IQ", BINARY_COMPLEX64_LE, a.size))
            fh.write(a.tobytes())
        return path


def read_binary_state(path: str) -> np.ndarray:
    with open(path, "rb") as fh:
        head = fh.read(16)
        if head[:4] != BINARY_MAGIC:
            raise ValidationError("not a kvnmd state dump")
        tag, eta = struct.unpack("<IQ", head[4:])
        if tag != BINARY_COMPLEX64_LE:
            raise ValidationError(f"unknown state format tag {tag}")
        return np.frombuffer(fh.read(), dtype="<c8", count=eta).astype(np.complex128)


def _fmt(v):
    if isinstance(v, float):
        return repr(v)
    return v


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def make_grid(cfg: RunConfig) -> PhaseSpaceGrid:
    g = cfg.section("grid")
    kw = {}
    if "g_s" in g or cfg.mode == "free-energy":
        kw = dict(g_s=g.get("g_s"), s_max=g.get("s_max"), s_min=g.get("s_min"),
                  g_ps=g.get("g_ps"), ps_max=g.get("ps_max"))
    return PhaseSpaceGrid.build(g["n_nuclei"], g["dims"], g["g_x"], g["x_max"], g["g_p"], g["p_max"],
                                centered_momentum=g.get("centered_momentum", True), **kw)


def make_params(cfg: RunConfig) -> SystemParams:
    s = dict(cfg.section("system"))
    names = {f.name for f in fields(SystemParams)}
    unknown = set(s) - names
    if unknown:
        raise ValidationError(f"unknown system keys: {', '.join(sorted(unknown))}")
    return SystemParams(**s)


def make_pes(cfg: RunConfig, grid: PhaseSpaceGrid):
    p = cfg.section("pes")
    kind = p.get("kind", "zero")
    box = p.get("box", grid.axes[0].extent)
    if kind == "zero":
        return ZeroPes()
    if kind == "constant":
        return ConstantPes(p.get("value", 0.0))
    if kind == "cosine":
        return CosinePes(p["amplitude"], box, p.get("center", 0.0))
    if kind == "harmonic":
        return HarmonicPes(p["omega"], box, p.get("center", 0.0))
    if kind == "table":
        path = os.path.join(cfg.base_dir, p["path"])
        return TabulatedPes(read_pes_table(path, grid), grid)
    if kind == "plane_wave":
        model = PlaneWaveModel(p["n_per_dim"], p["h_el"], tuple(p.get("charges", [1.0] * grid.n_nuclei)),
                               dims=grid.spatial_dims)
        return PlaneWavePes(model)
    raise ValidationError(f"unknown pes.kind {kind!r}")


def _per_coordinate(value, n, default):
    if value is None:
        value = default
    if isinstance(value, (list, tuple)):
        if len(value) != n:
            raise ValidationError(f"expected {n} values, got {len(value)}")
        return [float(v) for v in value]
    return [float(value)] * n


def initial_state(cfg: RunConfig, grid: PhaseSpaceGrid):
    """Gaussian product density over every axis, with optional random phases."""
    ini = cfg.section("initial")
    n = grid.n_nuclei * grid.spatial_dims
    x0 = _per_coordinate(ini.get("x0"), n, grid.axes[0].extent / 2)
    sx = _per_coordinate(ini.get("sigma_x"), n, grid.axes[0].extent / 8)
    p0 = _per_coordinate(ini.get("p0"), n, 0.0)
    sp = _per_coordinate(ini.get("sigma_p"), n, grid.axes[1].extent / 8)
    logp = np.zeros(grid.shape)
    for c in range(n):
        X = grid.axis_values(2 * c)
        P = grid.axis_values(2 * c + 1)
        logp = logp - (X - x0[c]) ** 2 / (2 * sx[c] ** 2) - (P - p0[c]) ** 2 / (2 * sp[c] ** 2)
    if grid.ensemble == "NVT":
        sa, pa = grid.axes[grid.s_axis], grid.axes[grid.ps_axis]
        s0 = float(ini.get("s0", sa.offset + sa.extent / 2))
        ss = float(ini.get("sigma_s", sa.extent / 8))
        q0 = float(ini.get("ps0", 0.0))
        sq = float(ini.get("sigma_ps", pa.extent / 8))
        logp = (logp - (grid.axis_values(grid.s_axis) - s0) ** 2 / (2 * ss ** 2)
                - (grid.axis_values(grid.ps_axis) - q0) ** 2 / (2 * sq ** 2))
    rho = np.exp(logp - logp.max())
    rho = (rho / rho.sum()).reshape(-1)
    state = load_density(rho, grid)
    if ini.get("random_phases", False):
        rng = np.random.default_rng(cfg.seed)
        phases = np.exp(2j * np.pi * rng.random(grid.eta))
        state = type(state).from_amplitudes(grid, state.amplitudes * phases)
    return state


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    return int(os.environ.get(THREADS_ENV, "1"))


def _setup(cfg, args):
    grid = make_grid(cfg)
    params = make_params(cfg)
    oracle = make_pes(cfg, grid)
    table = tabulate_pes(oracle, grid, threads=_threads(args))
    return grid, params, oracle, table


def _plan(cfg, L, params, grid):
    ev = cfg.section("evolution")
    t = float(ev["t"])
    k = ev.get("k", "auto")
    if ev.get("r") is not None:
        plan = build_plan(1 if k == "auto" else k, ev["r"], t)
    else:
        plan = plan_trotter(t, ev.get("eps", 1e-2),
                            lambda ell: commutator_bound(params, grid, ell, L.lam)[1],
                            k=None if k == "auto" else k, mu=L.mu_bound)
    cap = ev.get("max_segments", 100_000)
    if plan.r > cap:
        raise ResourceCapError(f"plan needs r={plan.r} segments, cap is evolution.max_segments={cap}")
    return plan


def _evolve(cfg, grid, params, table, writer):
    L = build(grid, params, table)
    L_class, _ = split(L)
    plan = _plan(cfg, L, params, grid)
    state0 = initial_state(cfg, grid)
    stride = int(cfg.get("output.snapshot_stride", max(1, plan.r // 4)))
    rows = []

    def snap(seg, st):
        time = (seg + 1) * plan.dt
        for a in range(grid.ndim):
            m = st.marginal((a,))
            for i, v in enumerate(grid.axes[a].values):
                rows.append({"segment": seg, "time": time, "axis": a, "kind": grid.axes[a].kind,
                             "value": float(v), "density": float(m[i])})

    snap(-1, state0)
    record = PropagationRecord()

    def callback(seg, st):
        if (seg + 1) % stride == 0 or seg + 1 == plan.r:
            snap(seg, st)

    method = cfg.get("evolution.method", "dense_exact")
    final = propagate(plan, L_class, table, state0, params.d_e, method, record, callback)
    writer.table("snapshots", rows)
    if cfg.get("output.binary", False):
        writer.binary_state("state", final.amplitudes)
    return L, plan, state0, final, record


def run_simulate(cfg, args, writer):
    from .reference import compare_moments, integrate_ensemble

    grid, params, oracle, table = _setup(cfg, args)
    L, plan, state0, final, record = _evolve(cfg, grid, params, table, writer)
    ref = cfg.section("reference")
    report = {"plan": {"k": plan.k, "r": plan.r, "t": plan.t, "n_exp": plan.n_exp},
              "max_norm_drift": record.max_drift, "final_norm": final.norm()}
    if ref.get("enabled", True):
        pes = oracle if oracle.kind == "analytic" else None
        ens = integrate_ensemble(state0, grid, params, plan.t, pes=pes,
                                 n_samples=ref.get("samples", 10_000), seed=cfg.seed,
                                 integrator=ref.get("integrator", "rk4"),
                                 dt_ref=ref.get("dt", 1e-2), jitter=ref.get("jitter", True))
        rep = compare_moments(ens, final, [(1, 0), (0, 1), (2, 0), (0, 2)])
        report["moments"] = [{"a": a, "b": b, "ensemble": v[0], "kvn": v[1], "discrepancy": v[2],
                              "sigma": v[3]} for (a, b), v in rep.moments.items()]
        report["tv_distance"] = rep.tv_distance
    writer.json("report", report)
    return EXIT_OK


def run_free_energy(cfg, args, writer):
    from .thermo import (extract_diagonal, free_energy, ks_statistic, maxwell_boltzmann,
                         real_momentum_marginal)

    grid, params, oracle, table = _setup(cfg, args)
    if grid.ensemble != "NVT":
        raise ValidationError("free-energy mode needs bath axes in the grid section")
    L, plan, state0, final, record = _evolve(cfg, grid, params, table, writer)
    rep = free_energy(final, params, table)
    payload = json.loads(rep.to_json())
    marg = real_momentum_marginal(extract_diagonal(final))
    mb = maxwell_boltzmann(grid.axes[grid.p_axis(0, 0)].values, params.masses[0],
                           max(params.temperature, 1e-300), params.k_B)
    payload["ks_maxwell_boltzmann"] = ks_statistic(marg, mb)
    payload["max_norm_drift"] = record.max_drift
    writer.json("thermo", payload)
    return EXIT_OK


def run_verify_bounds(cfg, args, writer):
    grid, params, oracle, table = _setup(cfg, args)
    L = build(grid, params, table)
    Lc, Le = split(L)
    rows = []

    def row(name, value, bound):
        rows.append({"quantity": name, "numeric": float(value), "bound": float(bound),
                     "status": "PASS" if value <= bound * (1 + 1e-12) + 1e-12 else "FAIL"})

    row("norm_L", spectral_norm(L), L.mu_bound)
    for t in L.terms:
        fam = term_family(t.label, L.ensemble)
        row(f"term:{t.label}", spectral_norm(t.matrix(grid)), L.bounds[fam])
    A, B = Lc.dense(), Le.dense()
    for ell in cfg.get("bounds.ells", [1, 2]):
        _, bound = commutator_bound(params, grid, ell, L.lam)
        row(f"nested_commutator_ell{ell}", nested_commutator_sum(A, B, ell), bound)
    writer.table("bounds", rows)
    failed = [r["quantity"] for r in rows if r["status"] == "FAIL"]
    for r in rows:
        print(f"{r['status']} {r['quantity']}: {r['numeric']:.6g} <= {r['bound']:.6g}")
    if failed:
        raise NumericalError(f"bounds violated: {', '.join(failed)}")
    return EXIT_OK


def cost_params(cfg: RunConfig):
    from .resources import CostParams

    kw = dict(cfg.section("resources"))
    if "constants" in kw:
        kw["constants"] = tuple(sorted(dict(kw["constants"]).items()))
    return CostParams(**kw)


def _report_row(rep) -> dict:
    return {k: v for k, v in rep.to_dict().items() if not isinstance(v, dict)}


def run_resources(cfg, args, writer, force_sweep=False):
    from .resources import free_energy_cost, simulation_cost, sweep

    p = cost_params(cfg)
    kind = cfg.get("output.report", "simulation")
    fn = free_energy_cost if kind == "free_energy" else simulation_cost
    sw = cfg.section("sweep")
    if force_sweep and not sw:
        raise ValidationError("sweep needs sweep.param and sweep.values")
    if sw:
        rows = []
        for v, rep in sweep(p, sw["param"], sw["values"], "free_energy" if kind == "free_energy" else "simulation"):
            rows.append({sw["param"]: v, **_report_row(rep)})
        writer.table("sweep", rows)
    if not force_sweep:
        writer.json("cost", fn(p).to_dict())
    return EXIT_OK


def run_euler(cfg, args, writer):
    from .resources import crossover_time, euler_baseline, log_euler_total, simulation_cost

    p = cost_params(cfg)
    eu = cfg.section("euler")
    rows = []
    for T in eu["T"]:
        r = euler_baseline(eu["eps_md"], eu["K"], T, eu["N_a"])
        liou = simulation_cost(replace(p, t=float(T), eps=min(eu["eps_md"], 0.999)))
        rows.append({"T": float(T), **asdict(r), "ln_toffoli_MD": log_euler_total(eu["eps_md"], eu["K"], T, eu["N_a"]),
                     "toffoli_liouvillian": liou.toffoli_total})
    writer.table("euler", rows)
    cross = crossover_time(replace(p, eps=min(eu["eps_md"], 0.999)), eu["K"], eu["N_a"])
    writer.json("crossover", {"crossover_T": cross})
    return EXIT_OK


RUNNERS = {
    "simulate": run_simulate,
    "free-energy": run_free_energy,
    "verify-bounds": run_verify_bounds,
    "resources": run_resources,
    "euler-compare": run_euler,
}


def validate(config_path: str) -> list:
    """Diagnostics for a config file; empty iff validation passes."""
    try:
        cfg = load(config_path)
    except ValidationError as exc:
        return [str(exc)]
    return diagnostics(cfg)


def run(config_path: str, out_dir: str | None = None, seed: int | None = None, fmt: str = "csv",
        threads: int | None = None, sweep_only: bool = False) -> int:
    """Run one config; raises on failure (see :func:`main` for exit codes)."""
    cfg = load(config_path)
    if seed is not None:
        cfg.seed = seed
    problems = diagnostics(cfg)
    if problems:
        raise ValidationError("; ".join(problems))
    out = out_dir or cfg.get("output.directory", "kvnmd_out")
    if not os.path.isabs(out) and out_dir is None:
        out = os.path.join(os.getcwd(), out)
    writer = Writer(out, cfg, fmt)
    args = argparse.Namespace(threads=threads)
    if sweep_only:
        if cfg.mode != "resources":
            raise ValidationError("the sweep subcommand needs mode = 'resources'")
        return run_resources(cfg, args, writer, force_sweep=True)
    return RUNNERS[cfg.mode](cfg, args, writer)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="kvnmd", description="KvN molecular dynamics driver")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, help_ in (("run", "run the mode named in the config"),
                        ("validate", "check a config without computing"),
                        ("sweep", "run the resource sweep of a config")):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", required=True)
        if name != "validate":
            p.add_argument("--out", default=None)
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--threads", type=int, default=None)
            p.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "validate":
        try:
            problems = validate(args.config)
        except OSError as exc:
            print(f"error: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        for p in problems:
            print(p)
        return EXIT_VALIDATION if problems else EXIT_OK
    try:
        return run(args.config, args.out, args.seed, args.format, args.threads,
                   sweep_only=args.command == "sweep")
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except ResourceCapError as exc:
        print(f"resource cap exceeded: {exc}", file=sys.stderr)
        return EXIT_CAP
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())

