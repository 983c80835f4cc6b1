"""Flat ``section.key = value`` run configuration.

Values are Python literals (numbers, strings, lists, booleans, ``None``);
anything that does not parse as a literal is kept as a bare string. Lines
starting with ``#`` are comments.
"""

from __future__ import annotations

import ast
import hashlib
import os
from dataclasses import dataclass, field, fields

from .errors import ValidationError

MODES = ("simulate", "free-energy", "verify-bounds", "resources", "euler-compare")
TOP_LEVEL = ("mode", "seed")
SECTIONS = ("grid", "system", "pes", "initial", "evolution", "reference", "output",
            "resources", "sweep", "euler", "bounds")
PES_KINDS = ("zero", "constant", "cosine", "harmonic", "table", "plane_wave")


@dataclass
class RunConfig:
    """Parsed configuration: top-level mode and seed plus one dict per section."""

    mode: str
    seed: int = 0
    sections: dict = field(default_factory=dict)
    path: str | None = None
    text: str = ""

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    def get(self, dotted: str, default=None):
        sec, _, key = dotted.partition(".")
        return self.sections.get(sec, {}).get(key, default)

    @property
    def digest(self) -> str:
        """sha256 of the config text plus the effective seed."""
        h = hashlib.sha256(self.text.encode())
        h.update(f"\nseed={self.seed}".encode())
        return h.hexdigest()

    @property
    def base_dir(self) -> str:
        return os.path.dirname(os.path.abspath(self.path)) if self.path else os.getcwd()


def _literal(raw: str):
    try:
        return ast.literal_eval(raw)
    except (ValueError, SyntaxError):
        return raw


def parse_text(text: str, path: str | None = None) -> RunConfig:
    """Parse config text, collecting every syntax problem before raising."""
    sections, top, problems = {}, {}, []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        if not s or s.startswith("#"):
            continue
        if "=" not in s:
            problems.append(f"line {lineno}: expected 'key = value'")
            continue
        key, raw = (part.strip() for part in s.split("=", 1))
        value = _literal(raw)
        if "." in key:
            sec, sub = key.split(".", 1)
            if sec not in SECTIONS:
                problems.append(f"line {lineno}: unknown section '{sec}'")
                continue
            sections.setdefault(sec, {})[sub] = value
        elif key in TOP_LEVEL:
            top[key] = value
        else:
            problems.append(f"line {lineno}: unknown top-level key '{key}'")
    mode = top.get("mode")
    if mode not in MODES:
        problems.append(f"mode must be one of {', '.join(MODES)} (got {mode!r})")
    seed = top.get("seed", 0)
    if not isinstance(seed, int) or isinstance(seed, bool):
        problems.append(f"seed must be an integer (got {seed!r})")
        seed = 0
    if problems:
        raise ValidationError("; ".join(problems))
    return RunConfig(mode, seed, sections, path, text)


def load(path: str) -> RunConfig:
    with open(path) as fh:
        text = fh.read()
    return parse_text(text, path)


def _is_pow2(g) -> bool:
    return isinstance(g, int) and not isinstance(g, bool) and g >= 2 and g & (g - 1) == 0


def _positive(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and v > 0


def diagnostics(cfg: RunConfig) -> list:
    """Every violated constraint, without running any computation."""
    out = []
    grid, system, pes = cfg.section("grid"), cfg.section("system"), cfg.section("pes")
    needs_grid = cfg.mode in ("simulate", "free-energy", "verify-bounds")
    if needs_grid:
        nvt = cfg.mode == "free-energy" or "g_s" in grid
        axes = ["g_x", "g_p"] + (["g_s", "g_ps"] if nvt else [])
        for name in ("n_nuclei", "dims"):
            v = grid.get(name)
            if not (isinstance(v, int) and v >= 1):
                out.append(f"grid.{name} must be a positive integer (got {v!r})")
        for ax in axes:
            g = grid.get(ax)
            if not _is_pow2(g):
                out.append(f"grid.{ax}={g!r} is not a power of two >= 2")
        extents = ["x_max", "p_max"] + (["s_max", "s_min", "ps_max"] if nvt else [])
        for name in extents:
            if not _positive(grid.get(name)):
                out.append(f"grid.{name} must be positive (got {grid.get(name)!r})")
        pairs = [("d_x", "g_x"), ("d_p", "g_p"), ("d_e", "g_x")]
        if nvt:
            pairs += [("d_s", "g_s"), ("d_ps", "g_ps")]
        for dname, gname in pairs:
            d, g = system.get(dname, 1), grid.get(gname)
            if not (isinstance(d, int) and d >= 1):
                out.append(f"system.{dname} must be a positive integer (got {d!r})")
            elif _is_pow2(g) and 2 * d >= g:
                out.append(f"stencil overlap: 2*system.{dname}={2 * d} >= grid.{gname}={g}")
        n = grid.get("n_nuclei")
        for name in ("masses", "charges"):
            v = system.get(name)
            if not isinstance(v, (list, tuple)) or (isinstance(n, int) and len(v) != n):
                out.append(f"system.{name} must list one value per nucleus")
        masses = system.get("masses")
        if isinstance(masses, (list, tuple)) and not all(_positive(m) for m in masses):
            out.append("system.masses must be positive")
        kind = pes.get("kind", "zero")
        if kind not in PES_KINDS:
            out.append(f"pes.kind must be one of {', '.join(PES_KINDS)} (got {kind!r})")
        if kind == "table":
            p = pes.get("path")
            if not isinstance(p, str) or not os.path.exists(os.path.join(cfg.base_dir, p)):
                out.append(f"pes.path {p!r} does not exist")
        if kind in ("cosine", "harmonic") and "box" in pes and not _positive(pes["box"]):
            out.append("pes.box must be positive")
    if cfg.mode in ("simulate", "free-energy"):
        ev = cfg.section("evolution")
        t = ev.get("t")
        if not (isinstance(t, (int, float)) and t >= 0):
            out.append(f"evolution.t must be nonnegative (got {t!r})")
        eps = ev.get("eps", 1e-2)
        if not (isinstance(eps, float) and 0 < eps < 1):
            out.append(f"evolution.eps must lie in (0, 1) (got {eps!r})")
        k = ev.get("k", "auto")
        if k != "auto" and not (isinstance(k, int) and k >= 1):
            out.append(f"evolution.k must be 'auto' or a positive integer (got {k!r})")
        if ev.get("method", "dense_exact") not in ("dense_exact", "krylov"):
            out.append("evolution.method must be dense_exact or krylov")
    if cfg.mode in ("resources",) or cfg.mode == "euler-compare":
        from .resources import CostParams

        names = {f.name for f in fields(CostParams)}
        for key in cfg.section("resources"):
            if key not in names:
                out.append(f"resources.{key} is not a cost parameter")
        sw = cfg.section("sweep")
        if sw and (sw.get("param") not in names or not isinstance(sw.get("values"), (list, tuple))):
            out.append("sweep.param must name a cost parameter and sweep.values must be a list")
    if cfg.mode == "euler-compare":
        eu = cfg.section("euler")
        for name in ("eps_md", "K", "N_a"):
            if not _positive(eu.get(name)):
                out.append(f"euler.{name} must be positive (got {eu.get(name)!r})")
        T = eu.get("T")
        if not (isinstance(T, (list, tuple)) and T and all(_positive(x) for x in T)):
            out.append("euler.T must be a nonempty list of positive times")
    return out
