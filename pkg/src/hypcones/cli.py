"""Command line front end.

Usage::

    hypcones <entropy|dimension|measure|growth|check|project-cocycle> \
        --config run.toml [--out DIR] [--threads N] [--seed S]

The config is TOML with exactly three tables, ``[system]``, ``[task]`` and an
optional ``[output]``; unknown keys are rejected. See README.md for the
grammar. Every run writes ``manifest.json`` next to its reports.

Exit codes: 0 success, 2 config error, 3 resource or budget error,
4 property-check failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from hypcones import ConvergenceError, DepthError, InputError, ResourceError, __version__

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

EXIT_OK, EXIT_CONFIG, EXIT_RESOURCE, EXIT_CHECK = 0, 2, 3, 4
COMMANDS = ("entropy", "dimension", "measure", "growth", "check", "project-cocycle")
SIG_DIGITS = 12


class ConfigError(InputError):
    pass


class CheckFailure(Exception):
    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


# config parsing

def _num(lo=-math.inf, hi=math.inf, integer=False, open_lo=False):
    def check(key, v):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"{key} must be a number")
        if integer and not float(v).is_integer():
            raise ConfigError(f"{key} must be an integer")
        if not math.isfinite(v) or v < lo or v > hi or (open_lo and v == lo):
            raise ConfigError(f"{key}={v} out of range")
        return int(v) if integer else float(v)
    return check


def _choice(*options):
    def check(key, v):
        if v not in options:
            raise ConfigError(f"{key} must be one of {options}, got {v!r}")
        return v
    return check


def _complex_value(key, v):
    if isinstance(v, (int, float)) and not isinstance(v, bool):
        return complex(v)
    if isinstance(v, list) and len(v) == 2 and all(isinstance(t, (int, float)) for t in v):
        return complex(v[0], v[1])
    raise ConfigError(f"{key} entries must be numbers or [re, im] pairs")


def _coefficients(key, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty list")
    return [_complex_value(key, t) for t in v]


def _matrix(key, v):
    if not isinstance(v, list) or not v or not all(isinstance(r, list) for r in v):
        raise ConfigError(f"{key} must be a list of rows")
    k = len(v)
    for i, row in enumerate(v):
        if len(row) != k:
            raise ConfigError(f"{key} row {i} has length {len(row)}, expected {k}")
        if any(x not in (0, 1) or isinstance(x, bool) for x in row):
            raise ConfigError(f"{key} row {i} must hold 0/1 entries")
    return [list(map(int, r)) for r in v]


def _float_list(key, v):
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{key} must be a non-empty list")
    return [_num()(key, t) for t in v]


def _string(key, v):
    if not isinstance(v, str):
        raise ConfigError(f"{key} must be a string")
    return v


def _psi(key, v):
    if not isinstance(v, dict):
        raise ConfigError(f"{key} must be a table {{cocycle = coefficient}}")
    out = {}
    for name, c in v.items():
        _choice("level", "derivative")(f"{key}.{name}", name)
        out[name] = _num()(f"{key}.{name}", c)
    return out


def _terms(key, v):
    if not isinstance(v, list) or not v or not all(isinstance(t, dict) for t in v):
        raise ConfigError(f"{key} must be an array of tables")
    allowed = {"kind", "position", "positions", "symbol", "coefficient"}
    for t in v:
        extra = set(t) - allowed
        if extra:
            raise ConfigError(f"unknown key(s) in {key}: {sorted(extra)}")
    return v


def _checks(key, v):
    if not isinstance(v, list):
        raise ConfigError(f"{key} must be a list")
    for name in v:
        _choice(*CHECKS)(key, name)
    return v


CERTIFICATE_KEYS = {
    "iterations": _num(1, 10**7, integer=True),
    "attraction_tol": _num(0, 1, open_lo=True),
    "min_distance": _num(0, 1e3),
    "escape_radius": _num(1, 1e300),
    "max_period": _num(1, 10**5, integer=True),
    "cloud_depth": _num(1, 20, integer=True),
}

SYSTEM_KEYS = {
    "type": _choice("sft", "rational"),
    "matrix": _matrix,
    "alphabet": _num(2, 10**4, integer=True),
    "numerator": _coefficients,
    "denominator": _coefficients,
    "seed": _complex_value,
    "certificate": None,
}

CHECKS = ("metric", "distortion", "radon_nikodym", "ahlfors", "livsic", "product_parry")

TASK_KEYS = {
    "command": _choice(*COMMANDS),
    "cocycle": _choice("level", "derivative"),
    "budget": _num(0, 1e4, open_lo=True),
    "psi": _psi,
    "s_grid": _float_list,
    "cell_depth": _num(1, 30, integer=True),
    "tol": _num(0, 1, open_lo=True),
    "alpha": _num(0, 1e6, open_lo=True),
    "depth": _num(1, 10**4, integer=True),
    "theta": _num(0, 1, open_lo=True),
    "terms": _terms,
    "max_period": _num(1, 16, integer=True),
    "measure_file": _string,
    "checks": _checks,
    "max_nodes": _num(1, 10**9, integer=True),
    "samples": _num(1, 10**7, integer=True),
}

OUTPUT_KEYS = {
    "directory": _string,
    "formats": None,
}


def _strict(block: dict, schema: dict, where: str) -> dict:
    if not isinstance(block, dict):
        raise ConfigError(f"[{where}] must be a table")
    extra = set(block) - set(schema)
    if extra:
        raise ConfigError(f"unknown key(s) in [{where}]: {sorted(extra)}")
    out = {}
    for k, v in block.items():
        check = schema[k]
        out[k] = v if check is None else check(f"{where}.{k}", v)
    return out


@dataclass
class RunConfig:
    system: dict
    task: dict
    output: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict)

    @property
    def kind(self) -> str:
        return self.system["type"]


def parse_config(text: str) -> RunConfig:
    try:
        raw = tomllib.loads(text)
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"config is not valid TOML: {e}") from None
    extra = set(raw) - {"system", "task", "output"}
    if extra:
        raise ConfigError(f"unknown table(s): {sorted(extra)}")
    if "system" not in raw:
        raise ConfigError("config needs exactly one [system] table")
    system = _strict(raw["system"], SYSTEM_KEYS, "system")
    if "type" not in system:
        if ("matrix" in system) == ("numerator" in system):
            raise ConfigError("[system] must define either matrix (sft) or numerator (rational)")
        system["type"] = "sft" if "matrix" in system else "rational"
    if system["type"] == "sft":
        if "matrix" not in system:
            raise ConfigError("sft system needs matrix")
        bad = {"numerator", "denominator", "seed", "certificate"} & set(system)
        if bad:
            raise ConfigError(f"sft system does not take {sorted(bad)}")
        if "alphabet" in system and system["alphabet"] != len(system["matrix"]):
            raise ConfigError("alphabet size does not match the matrix")
    else:
        if "numerator" not in system:
            raise ConfigError("rational system needs numerator")
        if {"matrix", "alphabet"} & set(system):
            raise ConfigError("rational system does not take matrix/alphabet")
        if "certificate" in system:
            system["certificate"] = _strict(system["certificate"], CERTIFICATE_KEYS,
                                            "system.certificate")
    task = _strict(raw.get("task", {}), TASK_KEYS, "task")
    output = _strict(raw.get("output", {}), OUTPUT_KEYS, "output")
    if "formats" in output:
        f = output["formats"]
        if not isinstance(f, list) or any(x not in ("json", "csv") for x in f):
            raise ConfigError("output.formats must be a list drawn from ['json', 'csv']")
    if "s_grid" in task and any(b >= a for a, b in zip(task["s_grid"], task["s_grid"][1:])):
        raise ConfigError("task.s_grid must be strictly decreasing")
    return RunConfig(system, task, output, raw)


def load_config(path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read config: {e}") from None
    return parse_config(text)


# system construction

def build_system(cfg: RunConfig):
    from hypcones.rational import Certificate, RationalMapSystem
    from hypcones.sft import SftSystem

    s = cfg.system
    if cfg.kind == "sft":
        return SftSystem(np.array(s["matrix"]))
    cert = Certificate(**s.get("certificate", {}))
    return RationalMapSystem(s["numerator"], s.get("denominator", [1]), s.get("seed"), cert)


def _cocycle(cfg: RunConfig) -> str:
    c = cfg.task.get("cocycle", "level" if cfg.kind == "sft" else "derivative")
    if cfg.kind == "sft" and c != "level":
        raise ConfigError("sft systems support the level cocycle only")
    return c


def build_cone(cfg: RunConfig, system, threads: int):
    """Cone for the configured system; returns ``(cone, cocycle index, budget)``."""
    from hypcones.rational import build_preimage_cone
    from hypcones.sft import SymbolicCone

    cocycle = _cocycle(cfg)
    if cfg.kind == "sft":
        budget = float(cfg.task.get("budget", 18))
        return SymbolicCone(system.matrix), 0, budget
    gi = 0 if cocycle == "level" else 1
    budget = float(cfg.task.get("budget", 14 if gi == 0 else 12 * math.log(2)))
    cone = build_preimage_cone(system, (gi, budget), threads=threads,
                               max_nodes=cfg.task.get("max_nodes", 10_000_000))
    return cone, gi, budget


def _psi_for(cfg: RunConfig, cone):
    psi = cfg.task.get("psi")
    if not psi:
        return None
    names = [sp.name for sp in cone.specs]
    for name in psi:
        if name not in names:
            raise ConfigError(f"psi refers to {name!r}, not a grading of this cone")
    return psi


# commands

def cmd_entropy(cfg: RunConfig, ctx: "Context") -> dict:
    from hypcones.growth import (check_growth_sandwich, check_submultiplicativity,
                                 pressure_estimate)

    system = build_system(cfg)
    cone, j, budget = build_cone(cfg, system, ctx.threads)
    psi = _psi_for(cfg, cone)
    est = pressure_estimate(cone, j, psi, budget)
    sandwich = check_growth_sandwich(est.series, est)
    ns = est.series.n
    pairs = [(ns[a], ns[b]) for a in range(1, len(ns)) for b in range(a, len(ns))
             if ns[a] + ns[b] <= budget + 1e-9][:32]
    c2 = check_submultiplicativity(cone, j, psi, pairs, est.series.delta_width) if pairs else None
    report = {"estimate": est.to_dict(), "sandwich": sandwich.to_dict(),
              "submultiplicativity_constant": c2, "budget": budget}
    ctx.write_json("entropy.json", report)
    return report


def cmd_growth(cfg: RunConfig, ctx: "Context") -> dict:
    from hypcones.growth import estimate_from_series, annulus_series

    system = build_system(cfg)
    cone, j, budget = build_cone(cfg, system, ctx.threads)
    series = annulus_series(cone, j, _psi_for(cfg, cone), budget)
    est = estimate_from_series(series)
    ctx.write_csv("annuli.csv", ["n", "count", "u"],
                  [[r["n"], r["count"], r["u"]] for r in series.records()])
    report = {"series": series.to_dict(), "estimate": est.to_dict()}
    ctx.write_json("growth.json", report)
    return report


def cmd_dimension(cfg: RunConfig, ctx: "Context") -> dict:
    from hypcones.conformal import critical_exponent, hausdorff_dimension_relation
    from hypcones.growth import entropy_estimate
    from hypcones.rational import certify

    system = build_system(cfg)
    tol = cfg.task.get("tol", 1e-6)
    if cfg.kind == "sft":
        cone, j, budget = build_cone(cfg, system, ctx.threads)
        est = entropy_estimate(cone, j, budget)
        alpha = cfg.task.get("alpha", 1.0)
        report = {"beta_hat": est.beta_hat, "bracket": list(est.bracket), "alpha": alpha,
                  "dimension": hausdorff_dimension_relation(est.beta_hat, alpha)}
        ctx.write_json("dimension.json", report)
        return report
    cert = certify(system)
    if not cert.passed:
        report = {"certificate": cert.to_dict(), "refused": True}
        ctx.write_json("dimension.json", report)
        raise CheckFailure("hyperbolicity certificate failed; dimension refused", report)
    cone, j, budget = build_cone(cfg, system, ctx.threads)
    dim = critical_exponent(cone, j, _psi_for(cfg, cone), tol)
    report = {"certificate": cert.to_dict(), "dimension": dim, "budget": budget,
              "nodes": len(cone), "cocycle": cone.specs[j].name}
    ctx.write_json("dimension.json", report)
    return report


def cmd_measure(cfg: RunConfig, ctx: "Context") -> dict:
    from hypcones.conformal import boundary_measure, total_variation
    from hypcones.sft import conformal_cylinder_measure, word_cone

    system = build_system(cfg)
    depth = cfg.task.get("cell_depth", 6)
    if cfg.kind == "sft":
        budget = int(cfg.task.get("budget", 16))
        cone, j = word_cone(system, budget), 0
    else:
        cone, j, budget = build_cone(cfg, system, ctx.threads)
    beta = None
    if "s_grid" not in cfg.task:
        raise ConfigError("measure needs task.s_grid")
    bm = boundary_measure(cone, j, cfg.task["s_grid"], depth, _psi_for(cfg, cone), beta)
    extrap = bm.extrapolated()
    report = {"boundary": bm.to_dict(), "extrapolated": {".".join(map(str, k)): v
                                                          for k, v in extrap.items()}}
    if cfg.kind == "rational" and j == 0:
        uniform = {c: system.degree ** -depth for c in bm.cells}
        report["tv_vs_brolin_lyubich"] = total_variation(extrap, uniform)
    if cfg.kind == "sft":
        # cells of the word cone are words below the empty root
        ref = {c: conformal_cylinder_measure(system, c) for c in bm.cells}
        tot = sum(ref.values())
        report["tv_vs_conformal"] = total_variation(extrap, {c: v / tot for c, v in ref.items()})
    ctx.write_text("cells.csv", bm.measure.to_csv())
    ctx.write_json("measure.json", report)
    return report


def _check_metric(cfg, system, ctx) -> dict:
    from hypcones.graded import (estimate_delta_hyperbolicity, logscale_from_cone,
                                 max_admissible_alpha, metric_from_logscale)
    from hypcones.rational import build_preimage_cone
    from hypcones.sft import word_cone

    if cfg.kind == "sft":
        cone, j = word_cone(system, 6), 0
    else:
        cone, j = build_preimage_cone(system, (0, 6), threads=ctx.threads), 1
    leaves = cone.nodes_at_depth(cone.max_depth)
    rng = np.random.default_rng(ctx.seed)
    leaves = np.sort(rng.choice(leaves, min(24, leaves.size), replace=False))
    table = logscale_from_cone(cone, j, leaves.tolist())
    alpha = min(1.0, max_admissible_alpha(table.delta))
    metric = metric_from_logscale(table, alpha)
    delta = estimate_delta_hyperbolicity(metric.distances, seed=ctx.seed)
    out = {"log_scale_defect": table.delta, "alpha": alpha, "constant": metric.constant,
           "four_point_delta": delta.delta}
    # the chain-infimum metric is comparable to exp(-alpha l) within 1 / (1 - 2(sqrt2 - 1))
    out["pass"] = bool(metric.constant <= 1 / (3 - 2 * math.sqrt(2)))
    return out


def _check_distortion(cfg, system, ctx) -> dict:
    from hypcones.rational import build_preimage_cone, distortion_check

    cone = build_preimage_cone(system, (0, 12), threads=ctx.threads)
    r8 = distortion_check(system, cone, 8, seed=ctx.seed)
    r12 = distortion_check(system, cone, 12, seed=ctx.seed)
    return {"depth_8": r8.to_dict(), "depth_12": r12.to_dict(),
            "pass": bool(r12.constant <= 1.05 * r8.constant)}


def _check_radon_nikodym(cfg, system, ctx) -> dict:
    from hypcones.conformal import (AtomicMeasure, branch_map_from_cone, critical_exponent,
                                    frontier_measure, itinerary_branch_map,
                                    radon_nikodym_check)
    from hypcones.rational import build_preimage_cone, brolin_lyubich
    from hypcones.sft import cylinder_measure_atoms, prepend_branch_map

    mf = cfg.task.get("measure_file")
    if cfg.kind == "sft":
        beta = system.entropy
        if mf is not None:
            measure = _read_measure(mf)
            depth = max(len(w) for w in measure.words)
        else:
            depth = 8
            measure = cylinder_measure_atoms(system, depth)
        rep = radon_nikodym_check(measure, prepend_branch_map(system, depth), beta)
        limit = 1 + 1e-8
    elif mf is not None:
        # an external measure is checked as the maximal-entropy measure of the level grading
        measure = _read_measure(mf)
        depth = max(len(w) for w in measure.words)
        cone = build_preimage_cone(system, (0, depth))
        rep = radon_nikodym_check(measure, branch_map_from_cone(cone, 0, depth),
                                  math.log(system.degree))
        limit = 1 + 1e-8
    else:
        bl = brolin_lyubich(system, 10)
        cone = build_preimage_cone(system, (0, 10))
        bl_rep = radon_nikodym_check(bl, branch_map_from_cone(cone, 0, 10),
                                     math.log(system.degree))
        cone = build_preimage_cone(system, (1, cfg.task.get("budget", 12 * math.log(2))),
                                   threads=ctx.threads)
        beta = critical_exponent(cone, 1)
        measure = frontier_measure(cone, 1, beta)
        rep = radon_nikodym_check(measure, itinerary_branch_map(measure, 8), beta)
        return {"brolin_lyubich_deviation": bl_rep.max_deviation, "beta": beta,
                "max_factor": rep.max_factor, "branches": len(rep.table),
                "pass": bool(bl_rep.max_deviation <= 1e-12 and rep.max_factor <= 1.5)}
    return {"max_deviation": rep.max_deviation, "max_factor": rep.max_factor,
            "branches": len(rep.table), "pass": bool(rep.max_factor <= limit)}


def _read_measure(path):
    from hypcones.conformal import AtomicMeasure

    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"cannot read measure file: {e}") from None
    m = AtomicMeasure.from_csv(text)
    if m.words is None:
        raise ConfigError("measure file needs a word column")
    return m


def _check_ahlfors(cfg, system, ctx) -> dict:
    from hypcones.conformal import ahlfors_regularity, critical_exponent, frontier_measure
    from hypcones.rational import build_preimage_cone

    budget = cfg.task.get("budget", 14 * math.log(2))
    cone = build_preimage_cone(system, (1, budget), threads=ctx.threads)
    beta = critical_exponent(cone, 1)
    rep = ahlfors_regularity(frontier_measure(cone, 1, beta), seed=ctx.seed)
    return {"slope": rep.slope, "residual": rep.residual, "critical_exponent": beta,
            "pass": bool(not rep.degenerate and abs(rep.slope - beta) <= 0.1)}


def _default_potential():
    return [{"kind": "symbol", "position": -1, "symbol": 1, "coefficient": 0.7},
            {"kind": "equal", "positions": [-2, 0], "coefficient": 0.2}]


def _projection(cfg, system):
    from hypcones.sft import livsic_check, local_potential, project_cocycle

    psi = local_potential(cfg.task.get("terms", _default_potential()),
                          cfg.task.get("theta", 0.5))
    proj = project_cocycle(system, psi, cfg.task.get("depth", 40), tol=cfg.task.get("tol", 1e-8))
    return proj, livsic_check(proj, cfg.task.get("max_period", 6))


def _check_livsic(cfg, system, ctx) -> dict:
    _, rep = _projection(cfg, system)
    return rep.to_dict()


def _check_product_parry(cfg, system, ctx) -> dict:
    from hypcones.sft import parry_two_sided, product_bowen

    worst = 0.0
    for n in range(2, 7):
        for w in system.words(n):
            for cut in range(n):
                a = product_bowen(system, w[:cut + 1], w[cut:])
                b = parry_two_sided(system, w, position=cut)
                worst = max(worst, abs(a - b))
    return {"max_deviation": worst, "pass": bool(worst <= 1e-8)}


CHECK_FUNCS = {
    "metric": _check_metric,
    "distortion": _check_distortion,
    "radon_nikodym": _check_radon_nikodym,
    "ahlfors": _check_ahlfors,
    "livsic": _check_livsic,
    "product_parry": _check_product_parry,
}
DEFAULT_CHECKS = {
    "sft": ("metric", "radon_nikodym", "livsic", "product_parry"),
    "rational": ("metric", "distortion", "radon_nikodym", "ahlfors"),
}


def cmd_check(cfg: RunConfig, ctx: "Context") -> dict:
    system = build_system(cfg)
    names = cfg.task.get("checks") or DEFAULT_CHECKS[cfg.kind]
    if "measure_file" in cfg.task:
        names = ["radon_nikodym"]
    results = {}
    for name in names:
        if name in ("distortion", "ahlfors") and cfg.kind != "rational":
            raise ConfigError(f"check {name!r} needs a rational system")
        if name in ("livsic", "product_parry") and cfg.kind != "sft":
            raise ConfigError(f"check {name!r} needs an sft system")
        results[name] = CHECK_FUNCS[name](cfg, system, ctx)
    report = {"checks": results, "pass": all(r["pass"] for r in results.values())}
    ctx.write_json("check.json", report)
    if not report["pass"]:
        failed = [k for k, r in results.items() if not r["pass"]]
        raise CheckFailure(f"property checks failed: {failed}", report)
    return report


def cmd_project_cocycle(cfg: RunConfig, ctx: "Context") -> dict:
    if cfg.kind != "sft":
        raise ConfigError("project-cocycle needs an sft system")
    system = build_system(cfg)
    proj, rep = _projection(cfg, system)
    report = {"depth": proj.depth, "tail_bound": proj.tail_bound, "livsic": rep.to_dict()}
    ctx.write_json("projection.json", report)
    if not rep.passed:
        raise CheckFailure("projected cocycle failed the Livsic check", report)
    return report


HANDLERS = {
    "entropy": cmd_entropy,
    "dimension": cmd_dimension,
    "measure": cmd_measure,
    "growth": cmd_growth,
    "check": cmd_check,
    "project-cocycle": cmd_project_cocycle,
}


# output and manifest

def round_sig(x, digits: int = SIG_DIGITS):
    """Recursively round floats to ``digits`` significant digits."""
    if isinstance(x, bool) or x is None or isinstance(x, (str, int)):
        return x
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if not math.isfinite(x) or x == 0:
            return x if math.isfinite(x) else repr(x)
        return float(f"{x:.{digits - 1}e}")
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, complex):
        return [round_sig(x.real, digits), round_sig(x.imag, digits)]
    if isinstance(x, dict):
        return {str(k): round_sig(v, digits) for k, v in x.items()}
    if isinstance(x, (list, tuple, np.ndarray)):
        return [round_sig(v, digits) for v in (x.tolist() if isinstance(x, np.ndarray) else x)]
    return str(x)


def _dumps(obj) -> str:
    return json.dumps(round_sig(obj), indent=2, sort_keys=True) + "\n"


class Context:
    def __init__(self, out: Path, threads: int, seed: int, formats=("json", "csv")):
        self.out = out
        self.threads = threads
        self.seed = seed
        self.formats = tuple(formats)
        self.files: dict[str, str] = {}

    def write_text(self, name: str, text: str):
        ext = name.rsplit(".", 1)[-1]
        if ext in ("json", "csv") and ext not in self.formats:
            return
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / name).write_text(text)
        self.files[name] = hashlib.sha256(text.encode()).hexdigest()

    def write_json(self, name: str, obj):
        self.write_text(name, _dumps(obj))

    def write_csv(self, name: str, header, rows):
        lines = [",".join(header)]
        for r in rows:
            lines.append(",".join(repr(round_sig(v)) if isinstance(v, float) else str(v)
                                  for v in r))
        self.write_text(name, "\n".join(lines) + "\n")


def manifest_fingerprint(manifest: dict) -> str:
    """Checksum of a manifest with the schedule-dependent fields removed."""
    core = {k: v for k, v in manifest.items() if k not in ("timings", "runtime")}
    return hashlib.sha256(_dumps(core).encode()).hexdigest()


def _summary(report) -> dict:
    keep = {}

    def walk(obj, prefix):
        if isinstance(obj, dict):
            for k, v in obj.items():
                if k in ("series", "table", "samples", "raw", "normalized", "entries"):
                    continue
                walk(v, f"{prefix}{k}.")
        elif isinstance(obj, (int, float, bool, str)) or obj is None:
            keep[prefix[:-1]] = obj
    walk(report, "")
    return keep


def run(command: str, config_path, out=None, threads=None, seed=0) -> tuple[int, dict]:
    started = time.perf_counter()
    manifest = {"software": {"name": "hypcones", "version": __version__}, "command": command,
                "seed": seed}
    threads = threads or os.cpu_count() or 1
    status, message, report = EXIT_OK, "ok", None
    ctx = None
    try:
        cfg = load_config(config_path)
        if "command" in cfg.task and cfg.task["command"] != command:
            raise ConfigError(f"config is for {cfg.task['command']!r}, not {command!r}")
        manifest["config"] = cfg.raw
        out_dir = Path(out or cfg.output.get("directory", "hypcones-out"))
        ctx = Context(out_dir, threads, seed, cfg.output.get("formats", ("json", "csv")))
        report = HANDLERS[command](cfg, ctx)
    except CheckFailure as e:
        status, message, report = EXIT_CHECK, str(e), e.report
    except (ResourceError, DepthError, MemoryError) as e:
        status, message = EXIT_RESOURCE, str(e)
    except (InputError, ValueError) as e:
        status, message = EXIT_CONFIG, str(e)
    except (ConvergenceError, RuntimeError) as e:
        status, message = EXIT_RESOURCE, str(e)
    if ctx is None:
        ctx = Context(Path(out or "hypcones-out"), threads, seed)
    manifest["status"] = {"exit_code": status, "message": message}
    manifest["constants"] = _summary(report) if report is not None else {}
    manifest["outputs"] = dict(sorted(ctx.files.items()))
    manifest["timings"] = {"wall_seconds": time.perf_counter() - started}
    manifest["runtime"] = {"threads": threads}
    ctx.formats = ("json",)
    ctx.write_json("manifest.json", manifest)
    return status, manifest


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="hypcones", description=__doc__.split("\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True)
    parser.add_argument("--out", default=None)
    parser.add_argument("--threads", type=int, default=None)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if args.threads is not None and args.threads < 1:
        print("error: --threads must be positive", file=sys.stderr)
        return EXIT_CONFIG
    status, manifest = run(args.command, args.config, args.out, args.threads, args.seed)
    msg = manifest["status"]["message"]
    print(f"{args.command}: {msg}", file=sys.stderr if status else sys.stdout)
    return status


if __name__ == "__main__":
    sys.exit(main())
