"""Annulus counting, entropy and pressure of graded cones.

Annuli are the node sets ``L(n) = {g : n - width < nu(g) <= n}`` and the
weighted sums ``u(n) = sum_{g in L(n)} exp(psi(g))``. Growth rates are read off
a grid ``n_j = offset + j * step`` by least squares, and bracketed with the
Polya normalization ``a_j = ln u_j / ln c2`` where ``c2`` is the measured
sub/super-multiplicativity constant.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from hypcones import DepthError, InputError
from hypcones.graded import LEVEL, psi_vector


class DegenerateSeriesError(InputError):
    pass


def default_width(cone, cocycle) -> float:
    """Annulus width: largest observed edge increment plus the spec's eta."""
    j = cone.cocycle_index(cocycle)
    spec = cone.specs[j]
    if spec.kind == LEVEL:
        return 1.0
    return cone.max_increment(j) + spec.eta


def _grid_defaults(cone, cocycle, width, step, offset):
    j = cone.cocycle_index(cocycle)
    level = cone.specs[j].kind == LEVEL
    if width is None:
        width = default_width(cone, j)
    if step is None:
        step = 1.0 if level else width
    if offset is None:
        # half-step offset keeps grid points away from exact multiples of the increment
        offset = 0.0 if level else step / 2.0
    if width <= 0 or step <= 0:
        raise InputError("annulus width and grid step must be positive")
    return float(width), float(step), float(offset)


def _require_depth(cone, cocycle, n: float):
    have = cone.complete_through(cocycle)
    if n > have + 1e-9 * max(1.0, abs(n)):
        raise DepthError(f"insufficient depth: annulus at n={n} needs the cone complete "
                         f"through grading {n}, but it is complete only through {have}")


def annulus(cone, cocycle, n: float, delta_width: float | None = None) -> np.ndarray:
    """Node indices with ``n - delta_width < nu(g) <= n``."""
    j = cone.cocycle_index(cocycle)
    if delta_width is None:
        delta_width = default_width(cone, j)
    if delta_width + 1e-12 < cone.max_increment(j):
        raise InputError(f"delta_width {delta_width} below the largest edge increment "
                         f"{cone.max_increment(j)}")
    _require_depth(cone, j, n)
    return np.flatnonzero(cone.annulus_mask(j, n, delta_width))


def partition_sum(cone, cocycle, psi, n: float, delta_width: float | None = None) -> float:
    """``sum exp(psi(g))`` over the annulus at ``n``."""
    j = cone.cocycle_index(cocycle)
    if delta_width is None:
        delta_width = default_width(cone, j)
    _require_depth(cone, j, n)
    _, sums = cone.annulus_sums(j, psi_vector(cone, psi), [n], delta_width)
    return float(sums[0])


@dataclass
class AnnulusSeries:
    delta_width: float
    step: float
    offset: float
    n: np.ndarray
    count: np.ndarray
    u: np.ndarray
    cocycle: str = ""

    def __len__(self) -> int:
        return len(self.n)

    def records(self) -> list[dict]:
        return [{"n": float(a), "count": int(b), "u": float(c)}
                for a, b, c in zip(self.n, self.count, self.u)]

    def to_dict(self) -> dict:
        return {"cocycle": self.cocycle, "delta_width": self.delta_width, "step": self.step,
                "offset": self.offset, "entries": self.records()}


def annulus_series(cone, cocycle, psi=None, n_max: float | None = None, *,
                   width: float | None = None, step: float | None = None,
                   offset: float | None = None) -> AnnulusSeries:
    j = cone.cocycle_index(cocycle)
    width, step, offset = _grid_defaults(cone, j, width, step, offset)
    if n_max is None:
        n_max = cone.complete_through(j)
        if not math.isfinite(n_max):
            raise InputError("n_max is required for lazily generated cones")
    _require_depth(cone, j, n_max)
    count = int(math.floor((n_max - offset) / step + 1e-9)) + 1
    if count < 1:
        raise InputError("n_max below the first grid point")
    ns = offset + step * np.arange(count)
    counts, sums = cone.annulus_sums(j, psi_vector(cone, psi), ns, width)
    return AnnulusSeries(width, step, offset, ns, counts, sums, cone.specs[j].name)


@dataclass
class GrowthEstimate:
    beta_hat: float
    bracket: tuple[float, float]
    c2_hat: float
    n_range: tuple[float, float]
    series: AnnulusSeries | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def width(self) -> float:
        return self.bracket[1] - self.bracket[0]

    def contains(self, value: float, slack: float = 0.0) -> bool:
        return self.bracket[0] - slack <= value <= self.bracket[1] + slack

    def to_dict(self) -> dict:
        out = {"beta_hat": self.beta_hat, "bracket_low": self.bracket[0],
               "bracket_high": self.bracket[1], "c2_hat": self.c2_hat,
               "n_range": list(self.n_range), "notes": list(self.notes)}
        if self.series is not None:
            out["series"] = self.series.records()
        return out


def _index_c2(u: np.ndarray, j_lo: int) -> float:
    J = len(u) - 1
    lu = np.log(u)
    worst = 0.0
    for j1 in range(j_lo, J + 1):
        for j2 in range(j1, J - j1 + 1):
            worst = max(worst, abs(lu[j1] + lu[j2] - lu[j1 + j2]))
    return math.exp(worst)


def estimate_from_series(series: AnnulusSeries, min_annuli: int = 6) -> GrowthEstimate:
    u = np.asarray(series.u, dtype=float)
    if len(u) < min_annuli:
        raise DegenerateSeriesError(f"need at least {min_annuli} usable annuli, got {len(u)}")
    if np.any(u <= 0) or np.any(series.count == 0):
        raise DegenerateSeriesError("annulus series has zero entries")
    J = len(u) - 1
    half = J // 2
    if np.any(np.diff(series.count[half:]) < 0):
        raise DegenerateSeriesError("annulus counts are not monotone over the fit window")
    lu = np.log(u)
    n = series.n
    slope = float(np.polyfit(n[half:], lu[half:], 1)[0])

    c2 = _index_c2(u, max(1, J // 6))
    lc2 = math.log(c2)
    lo, hi = -math.inf, math.inf
    for j in range(max(1, half), J + 1):
        lo = max(lo, (lu[j] - lc2) / j)
        hi = min(hi, (lu[j] + lc2) / j)
    notes = []
    if lo > hi:
        notes.append("Polya intervals did not intersect; using the n_max interval")
        lo, hi = (lu[J] - lc2) / J, (lu[J] + lc2) / J
    lo, hi = lo / series.step, hi / series.step
    if not lo <= slope <= hi:
        notes.append("least-squares slope outside Polya bracket; bracket widened")
        lo, hi = min(lo, slope), max(hi, slope)
    return GrowthEstimate(slope, (float(lo), float(hi)), c2, (float(n[half]), float(n[J])),
                          series, notes)


def pressure_estimate(cone, cocycle, psi=None, n_max: float | None = None, **grid) -> GrowthEstimate:
    """Exponential growth rate of ``u(n)`` with weight ``exp(psi)``."""
    return estimate_from_series(annulus_series(cone, cocycle, psi, n_max, **grid))


def entropy_estimate(cone, cocycle, n_max: float | None = None, **grid) -> GrowthEstimate:
    return pressure_estimate(cone, cocycle, None, n_max, **grid)


@dataclass
class SandwichReport:
    k1_hat: float
    k2_hat: float
    passed: bool
    shift_ratio: float

    def to_dict(self) -> dict:
        return {"k1_hat": self.k1_hat, "k2_hat": self.k2_hat, "pass": self.passed,
                "shift_ratio": self.shift_ratio}


def check_growth_sandwich(series: AnnulusSeries, estimate: GrowthEstimate) -> SandwichReport:
    """Constants ``k1 <= u(n) exp(-beta n) <= k2`` over the series.

    ``shift_ratio`` is the largest ``u(n_{j+1}) / (u(n_j) exp(beta step))``
    (or its inverse): comparability of annuli one grid step apart.
    """
    u = np.asarray(series.u, dtype=float)
    with np.errstate(divide="ignore"):
        scaled = u * np.exp(-estimate.beta_hat * series.n)
    k1, k2 = float(scaled.min()), float(scaled.max())
    ok = bool(np.isfinite(k1) and np.isfinite(k2) and k1 > 0 and k2 > 0)
    if ok and len(u) > 1:
        r = scaled[1:] / scaled[:-1]
        shift = float(max(r.max(), (1 / r).max()))
    else:
        shift = math.inf
    return SandwichReport(k1, k2, ok, shift)


def check_submultiplicativity(cone, cocycle, psi, pairs: Iterable[tuple[float, float]],
                              width: float | None = None) -> float:
    """Smallest ``c >= 1`` with ``u(n1)u(n2)/c <= u(n1+n2) <= c u(n1)u(n2)`` over ``pairs``."""
    j = cone.cocycle_index(cocycle)
    if width is None:
        width = default_width(cone, j)
    coefs = psi_vector(cone, psi)
    c = 1.0
    for n1, n2 in pairs:
        _require_depth(cone, j, n1 + n2)
        _, s = cone.annulus_sums(j, coefs, [n1, n2, n1 + n2], width)
        if s[0] <= 0 or s[1] <= 0 or s[2] <= 0:
            return math.inf
        r = s[0] * s[1] / s[2]
        c = max(c, r, 1 / r)
    return float(c)


@dataclass
class DualEntropyReport:
    forward: GrowthEstimate
    transpose: GrowthEstimate
    overlap: bool
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"beta_forward": self.forward.beta_hat, "beta_transpose": self.transpose.beta_hat,
                "forward_bracket": list(self.forward.bracket),
                "transpose_bracket": list(self.transpose.bracket),
                "overlap": self.overlap, "warnings": self.warnings}


def dual_entropy_check(sft, n_max: int = 18) -> DualEntropyReport:
    """Entropy of the word cone of ``A`` against that of ``A^T``."""
    from hypcones.sft import SymbolicCone, is_irreducible

    notes = []
    if not is_irreducible(sft.matrix):
        notes.append("matrix is reducible; entropies need not agree")
        warnings.warn(notes[-1])
    fwd = entropy_estimate(SymbolicCone(sft.matrix), 0, n_max)
    bwd = entropy_estimate(SymbolicCone(sft.matrix.T), 0, n_max)
    overlap = fwd.bracket[0] <= bwd.bracket[1] and bwd.bracket[0] <= fwd.bracket[1]
    return DualEntropyReport(fwd, bwd, bool(overlap), notes)
