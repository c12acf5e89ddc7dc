"""Poincare series, Patterson-Sullivan approximants and conformality checks.

For ``s`` above the growth rate ``beta`` the atomic measure

    mu_s = (1 - exp(beta - s)) * sum_g exp(-s nu(g) + psi(g)) delta_g

lives on the nodes of a cone. Aggregating it over subtrees gives cylinder
masses whose limit as ``s -> beta+`` is the conformal (Patterson-Sullivan)
measure on the cone boundary.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from hypcones import DepthError, InputError
from hypcones.graded import GradedCone, psi_vector
from hypcones.growth import (GrowthEstimate, annulus_series, check_growth_sandwich,
                             estimate_from_series, pressure_estimate)

PROVENANCES = ("ps_limit", "brolin_lyubich", "parry_conformal", "product_bowen", "external")


class PrecisionError(RuntimeError):
    pass


def _word_str(w) -> str:
    return ".".join(str(int(s)) for s in w)


def _parse_word(s: str) -> tuple[int, ...]:
    s = s.strip()
    return tuple(int(x) for x in s.split(".")) if s else ()


class AtomicMeasure:
    """Finite list of weighted atoms at complex points and/or symbolic words."""

    def __init__(self, weights, points=None, words=None, provenance: str = "external",
                 meta: Mapping | None = None):
        self.weights = np.asarray(weights, dtype=float).copy()
        if self.weights.ndim != 1:
            raise InputError("weights must be one-dimensional")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise InputError("weights must be finite and non-negative")
        if points is None and words is None:
            raise InputError("atoms need points or words")
        self.points = None if points is None else np.asarray(points, dtype=complex).copy()
        self.words = None if words is None else [tuple(int(s) for s in w) for w in words]
        for arr in (self.points, self.words):
            if arr is not None and len(arr) != len(self.weights):
                raise InputError("atom locations and weights differ in length")
        if provenance not in PROVENANCES:
            raise InputError(f"unknown provenance {provenance!r}")
        self.provenance = provenance
        self.meta = dict(meta or {})

    def __len__(self) -> int:
        return len(self.weights)

    def __repr__(self) -> str:
        return f"AtomicMeasure(atoms={len(self)}, mass={self.total_mass:.6g}, {self.provenance})"

    @property
    def total_mass(self) -> float:
        return float(math.fsum(self.weights))

    def normalized(self) -> "AtomicMeasure":
        t = self.total_mass
        if t <= 0:
            raise InputError("cannot normalize a zero measure")
        return AtomicMeasure(self.weights / t, self.points, self.words, self.provenance, self.meta)

    def _need_words(self):
        if self.words is None:
            raise InputError("measure has no symbolic locations")

    def mass_of(self, prefix) -> float:
        """Mass of the cylinder of words starting with ``prefix``."""
        self._need_words()
        p = tuple(prefix)
        n = len(p)
        return float(math.fsum(w for w, word in zip(self.weights, self.words) if word[:n] == p))

    def cell_masses(self, depth: int) -> dict[tuple[int, ...], float]:
        """Aggregate atoms into depth-``depth`` cylinders (atoms with shorter words are skipped)."""
        self._need_words()
        out: dict[tuple[int, ...], list[float]] = {}
        for w, word in zip(self.weights, self.words):
            if len(word) >= depth:
                out.setdefault(word[:depth], []).append(w)
        return {k: math.fsum(v) for k, v in sorted(out.items())}

    def cylinder_table(self, max_depth: int | None = None) -> dict[tuple[int, ...], float]:
        """Masses of every prefix cylinder up to ``max_depth``."""
        self._need_words()
        out: dict[tuple[int, ...], float] = {}
        for w, word in zip(self.weights, self.words):
            top = len(word) if max_depth is None else min(len(word), max_depth)
            for k in range(top + 1):
                out[word[:k]] = out.get(word[:k], 0.0) + w
        return out

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        cols = []
        if self.points is not None:
            cols += ["location_re", "location_im"]
        if self.words is not None:
            cols.append("word")
        wr.writerow(cols + ["weight"])
        for i in range(len(self)):
            row = []
            if self.points is not None:
                row += [repr(float(self.points[i].real)), repr(float(self.points[i].imag))]
            if self.words is not None:
                row.append(_word_str(self.words[i]))
            wr.writerow(row + [repr(float(self.weights[i]))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, provenance: str = "external") -> "AtomicMeasure":
        rows = list(csv.DictReader(io.StringIO(text)))
        if not rows:
            raise InputError("empty measure file")
        keys = rows[0].keys()
        if "weight" not in keys:
            raise InputError("measure file lacks a weight column")
        weights = [float(r["weight"]) for r in rows]
        pts = None
        if "location_re" in keys:
            pts = [complex(float(r["location_re"]), float(r["location_im"])) for r in rows]
        words = [_parse_word(r["word"]) for r in rows] if "word" in keys else None
        return cls(weights, pts, words, provenance)

    def to_json(self) -> dict:
        atoms = []
        for i in range(len(self)):
            a = {"weight": float(self.weights[i])}
            if self.points is not None:
                a["location"] = [float(self.points[i].real), float(self.points[i].imag)]
            if self.words is not None:
                a["word"] = list(self.words[i])
            atoms.append(a)
        return {"provenance": self.provenance, "total_mass": self.total_mass,
                "meta": {k: v for k, v in self.meta.items() if _jsonable(v)}, "atoms": atoms}


def _jsonable(v) -> bool:
    try:
        json.dumps(v)
        return True
    except TypeError:
        return False


# Poincare series


@dataclass
class PoincareEvaluation:
    s: float
    partial_sum: float
    truncation: float
    tail_bound: float
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _tilted(cone, cocycle, psi, s) -> np.ndarray:
    coefs = psi_vector(cone, psi)
    coefs[cone.cocycle_index(cocycle)] -= s
    return coefs


def poincare_partial(cone, cocycle, psi, s: float, budget: float,
                     estimate: GrowthEstimate | None = None, tol: float = 1e-6) -> PoincareEvaluation:
    """Partial sum of ``sum exp(-s nu(g) + psi(g))`` over nodes with ``nu <= budget``.

    The tail bound uses the growth sandwich: annuli of width ``D`` beyond the
    budget carry at most ``k2 exp(beta n)`` weight and each term is at most
    ``exp(-s (n - D))``, giving
    ``k2 exp(s D) exp((beta - s) n_0) / (1 - exp((beta - s) step))``.
    """
    j = cone.cocycle_index(cocycle)
    have = cone.complete_through(j)
    if budget > have + 1e-9 * max(1.0, budget):
        raise DepthError(f"insufficient depth: budget {budget} exceeds completeness {have}")
    coefs = _tilted(cone, j, psi, s)
    _, sums = cone.annulus_sums(j, coefs, [budget], budget + 1.0)
    partial = float(sums[0])
    if estimate is None:
        # growth is a property of the cone, so use everything that is complete
        estimate = pressure_estimate(cone, j, psi, have if math.isfinite(have) else budget)
    beta = estimate.beta_hat
    if s <= beta + 1e-9 * max(1.0, abs(beta)):
        return PoincareEvaluation(s, partial, budget, math.inf, False)
    ser = estimate.series
    k2 = check_growth_sandwich(ser, estimate).k2_hat
    width, step, off = ser.delta_width, ser.step, ser.offset
    j0 = math.floor((budget - off) / step) + 1
    n0 = off + j0 * step
    tail = k2 * math.exp(s * width) * math.exp((beta - s) * n0) / (1 - math.exp((beta - s) * step))
    return PoincareEvaluation(s, partial, budget, float(tail), bool(tail < tol))


CUT_POINTS = 25


def _slope_at(cone, cocycle, psi, s, n_max, grid) -> float:
    if not grid and hasattr(cone, "cut_sums"):
        # first-crossing cuts avoid the lattice beating of fixed-width annuli
        top = n_max - 1e-9 * max(1.0, abs(n_max))
        ns = np.linspace(top / 2, top, CUT_POINTS)
        _, sums = cone.cut_sums(cocycle, _tilted(cone, cocycle, psi, s), ns)
        if np.any(sums <= 0):
            raise PrecisionError("empty cut; the cone is too shallow")
        return float(np.polyfit(ns, np.log(sums), 1)[0])
    ser = annulus_series(cone, cocycle, _tilted(cone, cocycle, psi, s), n_max, **grid)
    half = (len(ser) - 1) // 2
    if np.any(ser.u[half:] <= 0):
        raise PrecisionError("zero annulus sums; the cone is too shallow")
    return float(np.polyfit(ser.n[half:], np.log(ser.u[half:]), 1)[0])


def critical_exponent(cone, cocycle, psi=None, tol: float = 1e-6, n_max: float | None = None,
                      max_expand: int = 40, **grid) -> float:
    """Convergence threshold of the Poincare series.

    Bisection on ``s`` using the sign of the fitted growth rate of the sums of
    ``exp(-s nu + psi)`` over first-crossing cuts of explicit cones (or over
    annuli, for lazily counted cones or when grid options are passed); the
    returned ``s`` is a root of the pressure of ``psi - s nu`` to within ``tol``.
    """
    if tol <= 0:
        raise InputError("tol must be positive")
    j = cone.cocycle_index(cocycle)
    if n_max is None:
        n_max = cone.complete_through(j)
    center = _slope_at(cone, j, psi, 0.0, n_max, grid)
    lo, hi = center - 0.5, center + 0.5
    f_lo = _slope_at(cone, j, psi, lo, n_max, grid)
    f_hi = _slope_at(cone, j, psi, hi, n_max, grid)
    k = 0
    while f_lo <= 0 and k < max_expand:
        lo -= 2.0 ** k
        f_lo = _slope_at(cone, j, psi, lo, n_max, grid)
        k += 1
    k = 0
    while f_hi >= 0 and k < max_expand:
        hi += 2.0 ** k
        f_hi = _slope_at(cone, j, psi, hi, n_max, grid)
        k += 1
    if not (f_lo > 0 > f_hi):
        raise PrecisionError(f"growth slope indistinguishable from zero over s in [{lo}, {hi}]; "
                             f"grow the cone beyond grading {n_max}")
    while hi - lo >= tol:
        mid = 0.5 * (lo + hi)
        if _slope_at(cone, j, psi, mid, n_max, grid) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


# Patterson-Sullivan approximants


def _node_locations(cone: GradedCone):
    pts = np.asarray(cone.payload)
    points = pts if np.iscomplexobj(pts) else None
    return points, cone.words()


def entropy_midpoint(cone, cocycle, psi=None) -> float:
    est = pressure_estimate(cone, cocycle, psi)
    return 0.5 * (est.bracket[0] + est.bracket[1])


def ps_measure(cone: GradedCone, cocycle, s: float, psi=None, beta: float | None = None) -> AtomicMeasure:
    """``mu_s`` with atoms at every node, weight ``(1 - exp(beta - s)) exp(-s nu + psi)``.

    ``beta`` defaults to the midpoint of the measured growth bracket.
    """
    j = cone.cocycle_index(cocycle)
    if beta is None:
        beta = entropy_midpoint(cone, j, psi)
    if s <= beta:
        raise InputError(f"s = {s} must exceed beta = {beta}")
    coefs = _tilted(cone, j, psi, s)
    w = (1 - math.exp(beta - s)) * np.exp(cone.gradings @ coefs)
    points, words = _node_locations(cone)
    return AtomicMeasure(w, points=points, words=words, provenance="ps_limit",
                         meta={"s": s, "beta": beta, "cocycle": cone.specs[j].name})


@dataclass
class BoundaryMeasure:
    cells: list[tuple[int, ...]]
    s_values: list[float]
    raw: np.ndarray
    normalized: np.ndarray
    cauchy: list[float]
    shallow_fraction: list[float]
    beta: float
    measure: AtomicMeasure = field(repr=False, default=None)

    @property
    def final(self) -> dict[tuple[int, ...], float]:
        return dict(zip(self.cells, self.normalized[-1]))

    def extrapolated(self) -> dict[tuple[int, ...], float]:
        """Normalized cell masses extrapolated linearly in ``s - beta`` to ``s = beta``."""
        if len(self.s_values) < 2:
            return self.final
        x = np.asarray(self.s_values) - self.beta
        at_beta = np.polyfit(x, self.normalized, 1)[1]
        at_beta = np.clip(at_beta, 0.0, None)
        return dict(zip(self.cells, at_beta / at_beta.sum()))

    def to_dict(self) -> dict:
        return {"beta": self.beta, "s_values": self.s_values,
                "cells": [_word_str(c) for c in self.cells],
                "raw": self.raw.tolist(), "normalized": self.normalized.tolist(),
                "cauchy": self.cauchy, "shallow_fraction": self.shallow_fraction}


def boundary_measure(cone: GradedCone, cocycle, s_sequence: Sequence[float], cell_depth: int,
                     psi=None, beta: float | None = None) -> BoundaryMeasure:
    """Cylinder masses of ``mu_s`` along ``s_sequence`` decreasing to ``beta``.

    Each depth-``cell_depth`` cell receives the mass of its strict descendants.
    Masses are also normalized by the captured total (a finite cone misses the
    mass beyond its frontier). The final measure is the normalized value at the
    last ``s``.
    """
    s_seq = [float(s) for s in s_sequence]
    if len(s_seq) == 0 or any(b >= a for a, b in zip(s_seq, s_seq[1:])):
        raise InputError("s_sequence must be strictly decreasing")
    j = cone.cocycle_index(cocycle)
    if beta is None:
        beta = entropy_midpoint(cone, j, psi)
    if s_seq[-1] <= beta:
        raise InputError(f"every s must exceed beta = {beta}")
    if cell_depth >= cone.max_depth:
        raise DepthError("cell depth must be below the cone depth")
    cells_idx = cone.nodes_at_depth(cell_depth)
    anc = cone.ancestor_at_depth(cell_depth)
    strict = cone.depth > cell_depth
    slot = np.full(len(cone), -1)
    slot[cells_idx] = np.arange(cells_idx.size)
    owner = slot[np.where(strict, anc, cells_idx[0])]
    raw, norm, shallow = [], [], []
    for s in s_seq:
        mu = ps_measure(cone, j, s, psi, beta)
        masses = np.bincount(owner[strict], weights=mu.weights[strict], minlength=cells_idx.size)
        total = float(mu.weights.sum())
        raw.append(masses)
        norm.append(masses / masses.sum())
        shallow.append(float(mu.weights[~strict].sum() / total))
    raw_a, norm_a = np.array(raw), np.array(norm)
    cauchy = [float(np.abs(norm_a[i + 1] - norm_a[i]).sum()) for i in range(len(s_seq) - 1)]
    words = cone.words()
    cells = [words[i] for i in cells_idx]
    pts = np.asarray(cone.payload)
    points = pts[cells_idx] if np.iscomplexobj(pts) else None
    final = AtomicMeasure(norm_a[-1], points=points, words=cells, provenance="ps_limit",
                          meta={"s": s_seq[-1], "beta": beta, "cell_depth": cell_depth})
    return BoundaryMeasure(cells, s_seq, raw_a, norm_a, cauchy, shallow, beta, final)


def frontier_measure(cone: GradedCone, cocycle, beta: float, n: float | None = None,
                     width: float | None = None, psi=None) -> AtomicMeasure:
    """Atoms on one deep annulus with weight ``exp(-beta nu + psi)``, normalized.

    Words are itineraries: the labels read from the atom up to the root, so a
    prefix cylinder collects atoms that share their next few images. Each
    atom also records the increment of its last edge in ``meta["increments"]``.
    """
    from hypcones.growth import _require_depth, default_width

    j = cone.cocycle_index(cocycle)
    if width is None:
        width = default_width(cone, j)
    if n is None:
        # half a width inside the frontier keeps rounding ties out of the annulus
        n = cone.complete_through(j) - width / 2
    _require_depth(cone, j, n)
    idx = np.flatnonzero(cone.annulus_mask(j, n, width) & (cone.depth > 0))
    if idx.size == 0:
        raise DepthError(f"annulus at {n} is empty")
    v = cone.gradings[:, j]
    logw = -beta * v[idx] + cone.gradings[idx] @ psi_vector(cone, psi)
    w = np.exp(logw - logw.max())
    words = cone.words()
    itin = [tuple(reversed(words[i])) for i in idx]
    pts = np.asarray(cone.payload)
    points = pts[idx] if np.iscomplexobj(pts) else None
    inc = v[idx] - v[cone.parent[idx]]
    return AtomicMeasure(w / w.sum(), points=points, words=itin, provenance="ps_limit",
                         meta={"beta": beta, "n": float(n), "width": float(width),
                               "increments": inc})


def itinerary_branch_map(measure: AtomicMeasure, max_depth: int) -> list[tuple]:
    """Inverse-branch pairs ``(w, a + w, increment)`` on itinerary cylinders.

    The branch labelled ``a`` sends the cylinder ``[w]`` onto ``[a w]``; its
    increment is the mass-weighted mean last-edge increment over ``[a w]``.
    """
    measure._need_words()
    inc = np.asarray(measure.meta.get("increments"), dtype=float)
    if inc.shape != measure.weights.shape:
        raise InputError("measure lacks per-atom increments")
    mass: dict[tuple, float] = {}
    moment: dict[tuple, float] = {}
    for wt, word, x in zip(measure.weights, measure.words, inc):
        for k in range(1, min(len(word), max_depth) + 1):
            key = word[:k]
            mass[key] = mass.get(key, 0.0) + wt
            moment[key] = moment.get(key, 0.0) + wt * x
    return [(key[1:], key, moment[key] / mass[key]) for key in sorted(mass, key=lambda t: (len(t), t))
            if mass[key] > 0]


def total_variation(p: Mapping, q: Mapping) -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)


# conformality


@dataclass
class RadonNikodymReport:
    max_deviation: float
    max_factor: float
    table: list[dict]
    excluded: list[tuple]

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "max_factor": self.max_factor,
                "excluded": [[_word_str(a), _word_str(b)] for a, b in self.excluded],
                "table": self.table}


def radon_nikodym_check(measure, branch_map: Sequence[tuple], beta: float) -> RadonNikodymReport:
    """Compare ``mu(target) / mu(source)`` with ``exp(-beta * increment)`` for each branch.

    ``measure`` is an :class:`AtomicMeasure` with words or a mapping from cell
    words to masses; ``branch_map`` lists ``(source_cell, target_cell, increment)``.
    """
    if isinstance(measure, AtomicMeasure):
        depth = max((len(t) for _, t, _ in branch_map), default=0)
        masses = measure.cylinder_table(depth)
    else:
        masses = {tuple(k): float(v) for k, v in measure.items()}
    seen = set()
    dev, fac = 0.0, 1.0
    table, excluded = [], []
    for src, tgt, inc in branch_map:
        src, tgt = tuple(src), tuple(tgt)
        if tgt in seen:
            raise InputError(f"branch map is not injective at {tgt}")
        seen.add(tgt)
        ms, mt = masses.get(src, 0.0), masses.get(tgt, 0.0)
        if ms <= 0:
            excluded.append((src, tgt))
            continue
        expected = math.exp(-beta * inc)
        ratio = mt / ms
        d = abs(ratio / expected - 1)
        f = math.inf if ratio == 0 else max(ratio / expected, expected / ratio)
        dev, fac = max(dev, d), max(fac, f)
        table.append({"source": _word_str(src), "target": _word_str(tgt), "ratio": ratio,
                      "expected": expected, "deviation": d})
    return RadonNikodymReport(dev, fac, table, excluded)


def branch_map_from_cone(cone: GradedCone, cocycle, max_depth: int) -> list[tuple]:
    """Pairs ``(parent cell, child cell, edge increment)`` for children at depth ``<= max_depth``."""
    j = cone.cocycle_index(cocycle)
    words = cone.words()
    v = cone.gradings[:, j]
    out = []
    for i in range(1, len(cone)):
        if cone.depth[i] > max_depth:
            break
        p = cone.parent[i]
        out.append((words[p], words[i], float(v[i] - v[p])))
    return out


# regularity


@dataclass
class AhlforsReport:
    slope: float
    residual: float
    per_center: list[float]
    spread: float
    radii: list[float]
    radius_floor: float
    degenerate: bool
    samples: list[tuple[complex, float, float]] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"slope": self.slope, "residual": self.residual, "spread": self.spread,
                "per_center": self.per_center, "radii": self.radii,
                "radius_floor": self.radius_floor, "degenerate": self.degenerate,
                "samples": [{"center": [c.real, c.imag], "radius": r, "mass": m}
                            for c, r, m in self.samples]}


def ahlfors_regularity(measure: AtomicMeasure, centers=None, radii=None, *, n_centers: int = 64,
                       seed: int = 0) -> AhlforsReport:
    """Pooled least-squares slope of ``ln mu(B(x, r))`` against ``ln r``.

    Ball masses are answered by a KD-tree over the atoms. Radii at which some
    ball is empty are dropped (the radius floor is raised and reported).
    """
    from scipy.spatial import cKDTree

    if measure.points is None:
        raise InputError("measure needs complex locations")
    pts = measure.points
    xy = np.column_stack([pts.real, pts.imag])
    rng = np.random.default_rng(seed)
    if centers is None:
        p = measure.weights / measure.weights.sum()
        idx = rng.choice(len(pts), size=min(n_centers, len(pts)), replace=False, p=None
                         if np.count_nonzero(p) < min(n_centers, len(pts)) else p)
        centers = pts[np.sort(idx)]
    centers = np.atleast_1d(np.asarray(centers, dtype=complex))
    if radii is None:
        radii = np.geomspace(1e-3, 1e-1, 9)
    radii = np.sort(np.asarray(radii, dtype=float))
    if radii[-1] / radii[0] < 100 - 1e-9:
        raise InputError("radii must span at least two decades")
    tree = cKDTree(xy)
    cxy = np.column_stack([centers.real, centers.imag])
    mass = np.empty((centers.size, radii.size))
    for t, r in enumerate(radii):
        hits = tree.query_ball_point(cxy, r)
        mass[:, t] = [measure.weights[h].sum() for h in hits]
    keep = np.all(mass > 0, axis=0)
    floor = float(radii[keep][0]) if keep.any() else math.inf
    samples = [(complex(c), float(r), float(mass[a, t]))
               for a, c in enumerate(centers) for t, r in enumerate(radii)]
    if keep.sum() < 2:
        return AhlforsReport(0.0, 0.0, [], 0.0, radii.tolist(), floor, True, samples)
    lr = np.log(radii[keep])
    lm = np.log(mass[:, keep])
    x = np.tile(lr, centers.size)
    y = lm.ravel()
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    slope = float(coef[0])
    resid = float(np.sqrt(res[0] / y.size)) if res.size else 0.0
    per = [float(np.polyfit(lr, row, 1)[0]) for row in lm]
    degenerate = len(measure) == 1 or bool(np.all(np.ptp(lm, axis=1) < 1e-12))
    return AhlforsReport(slope, resid, per, float(np.ptp(per)), radii[keep].tolist(), floor,
                         degenerate, samples)


def hausdorff_dimension_relation(beta: float, alpha: float) -> float:
    """Dimension ``beta / alpha`` of the conformal measure in a metric of exponent ``alpha``."""
    if alpha <= 0:
        raise InputError("alpha must be positive")
    return beta / alpha
