"""Hyperbolic complex rational maps and their preimage cones.

Coefficients are listed highest degree first (``numpy.polyval`` order), so
``z**2 - 1`` is ``numerator=[1, 0, -1], denominator=[1]``.

A preimage cone rooted at a seed ``z0`` has the points of ``f^-n(z0)`` as its
depth-``n`` nodes. Two gradings are accumulated: the level cocycle (depth) and
the derivative cocycle whose edge increment is ``ln|f'(child)|``.
"""

from __future__ import annotations

import cmath
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from hypcones import ConvergenceError, InputError, ResourceError
from hypcones.graded import DERIVATIVE, LEVEL, GradedCone, QuasiCocycleSpec

LEVEL_INDEX = 0
DERIVATIVE_INDEX = 1
EPS = np.finfo(float).eps


class EvaluationError(ArithmeticError):
    pass


class CertificateError(InputError):
    pass


class ConeExpansionError(RuntimeError):
    def __init__(self, message, node=None):
        super().__init__(message)
        self.node = node


@dataclass(frozen=True)
class Certificate:
    iterations: int = 2000
    attraction_tol: float = 1e-9
    min_distance: float = 1e-3
    escape_radius: float = 1e6
    max_period: int = 64
    cloud_depth: int = 9


@dataclass
class CertificateReport:
    passed: bool
    critical_points: list[complex]
    attractors: list[str]
    min_distance: float
    messages: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"passed": self.passed,
                "critical_points": [[c.real, c.imag] for c in self.critical_points],
                "attractors": self.attractors, "min_distance": self.min_distance,
                "messages": self.messages}


def _trim(c) -> np.ndarray:
    c = np.atleast_1d(np.asarray(c, dtype=complex))
    nz = np.flatnonzero(np.abs(c) > 0)
    if nz.size == 0:
        return np.zeros(1, dtype=complex)
    return c[nz[0]:]


class RationalMapSystem:
    """Rational map ``p/q`` with seed point and hyperbolicity certificate parameters."""

    def __init__(self, numerator: Sequence[complex], denominator: Sequence[complex] = (1,),
                 seed: complex | None = None, certificate: Certificate | None = None,
                 root_tol: float = 1e-12):
        self.p = _trim(numerator)
        self.q = _trim(denominator)
        if not np.any(self.q):
            raise InputError("denominator is identically zero")
        self.degree = max(len(self.p), len(self.q)) - 1
        if self.degree < 2:
            raise InputError("degree must be at least 2")
        self.dp = np.polyder(self.p) if len(self.p) > 1 else np.zeros(1, dtype=complex)
        self.dq = np.polyder(self.q) if len(self.q) > 1 else np.zeros(1, dtype=complex)
        self.certificate = certificate or Certificate()
        self.root_tol = float(root_tol)
        self._check_coprime()
        self.seed = complex(seed) if seed is not None else self.repelling_fixed_point()

    def __repr__(self) -> str:
        return f"RationalMapSystem(p={self.p.tolist()}, q={self.q.tolist()}, seed={self.seed})"

    @property
    def is_polynomial(self) -> bool:
        return len(self.q) == 1

    @property
    def scale(self) -> float:
        lead = abs(self.p[0]) if len(self.p) > len(self.q) else 1.0
        return 1.0 + float(max(np.abs(self.p).max(), np.abs(self.q).max()) / max(lead, 1e-300))

    def _check_coprime(self):
        if len(self.q) == 1 or len(self.p) == 1:
            return
        for r in np.roots(self.q):
            if abs(np.polyval(self.p, r)) < 1e3 * self.root_tol * max(1.0, abs(r)) ** len(self.p):
                raise InputError(f"numerator and denominator share a root near {r}")

    # evaluation

    def __call__(self, z):
        return evaluate(self, z)

    def polynomial_for(self, w) -> np.ndarray:
        """Coefficients of ``p(z) - w q(z)``."""
        n = self.degree + 1
        p = np.concatenate([np.zeros(n - len(self.p), complex), self.p])
        q = np.concatenate([np.zeros(n - len(self.q), complex), self.q])
        w = np.asarray(w, dtype=complex)
        return p[None, :] - w.reshape(-1, 1) * q[None, :]

    def critical_points(self) -> np.ndarray:
        """Finite critical points: zeros of ``p'q - pq'``."""
        num = np.polysub(np.polymul(self.dp, self.q), np.polymul(self.p, self.dq))
        num = _trim(num)
        if len(num) == 1:
            return np.zeros(0, dtype=complex)
        return np.roots(num)

    def fixed_points(self) -> np.ndarray:
        poly = _trim(np.polysub(self.p, np.polymul([1, 0], self.q)))
        return np.roots(poly) if len(poly) > 1 else np.zeros(0, dtype=complex)

    def repelling_fixed_point(self) -> complex:
        fps = self.fixed_points()
        if fps.size == 0:
            raise InputError("no finite fixed point")
        mult = np.abs(derivative(self, fps))
        i = int(np.argmax(mult))
        if mult[i] <= 1:
            raise InputError("no repelling finite fixed point")
        return complex(fps[i])


def evaluate(system: RationalMapSystem, z):
    """``p(z)/q(z)``; poles map to complex infinity."""
    z = np.asarray(z, dtype=complex)
    pz = np.polyval(system.p, z)
    qz = np.polyval(system.q, z)
    tiny = np.abs(qz) < 1e-300
    if np.any(tiny):
        if np.any(tiny & (np.abs(pz) < 1e-300)):
            raise EvaluationError("0/0 in both charts")
        out = np.where(tiny, complex(np.inf, np.inf), pz / np.where(tiny, 1, qz))
    else:
        out = pz / qz
    return complex(out) if out.ndim == 0 else out


def derivative(system: RationalMapSystem, z):
    """``f'(z) = (p'q - pq') / q**2``."""
    z = np.asarray(z, dtype=complex)
    pz = np.polyval(system.p, z)
    qz = np.polyval(system.q, z)
    if np.any(np.abs(qz) < 1e-300):
        raise EvaluationError("derivative requested at a pole")
    out = (np.polyval(system.dp, z) * qz - pz * np.polyval(system.dq, z)) / qz ** 2
    return complex(out) if out.ndim == 0 else out


# root finding


def _polyval_rows(c: np.ndarray, z: np.ndarray) -> np.ndarray:
    """Evaluate row-wise polynomials ``c[i]`` at points ``z[i, :]`` (Horner)."""
    out = np.broadcast_to(c[:, :1], z.shape).astype(complex)
    for k in range(1, c.shape[1]):
        out = out * z + c[:, k:k + 1]
    return out


def aberth_roots(coeffs, tol: float = 1e-12, max_iter: int = 500):
    """All roots of each row of ``coeffs`` by simultaneous Aberth iteration.

    Returns ``(roots, residuals, converged)``. Rows are independent; the
    iteration stops per row once every correction is below ``tol`` relative
    to the root size or the residual is at rounding level.
    """
    c = np.atleast_2d(np.asarray(coeffs, dtype=complex))
    lead = c[:, 0]
    if np.any(np.abs(lead) == 0):
        raise InputError("leading coefficient vanishes (root at infinity)")
    c = c / lead[:, None]
    m, n1 = c.shape
    d = n1 - 1
    if d == 0:
        return np.zeros((m, 0), complex), np.zeros((m, 0)), np.ones(m, bool)
    dc = c[:, :-1] * np.arange(d, 0, -1)[None, :]
    radius = 1.0 + np.abs(c[:, 1:]).max(axis=1)
    ang = 2 * np.pi * np.arange(d) / d + 0.4
    z = (0.5 * radius)[:, None] * np.exp(1j * ang)[None, :]
    absc = np.abs(c)
    done = np.zeros(m, dtype=bool)
    eye = np.eye(d, dtype=bool)
    for _ in range(max_iter):
        act = ~done
        if not act.any():
            break
        za, ca = z[act], c[act]
        pz = _polyval_rows(ca, za)
        dpz = _polyval_rows(dc[act], za)
        diff = za[:, :, None] - za[:, None, :]
        diff[:, eye] = 1.0
        inv = 1.0 / diff
        inv[:, eye] = 0.0
        s = inv.sum(axis=2)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = pz / dpz
            corr = ratio / (1.0 - ratio * s)
        bad = ~np.isfinite(corr)
        corr[bad] = 1e-3 * (1 + np.abs(za[bad]))
        za = za - corr
        z[act] = za
        backward = _polyval_rows(absc[act], np.abs(za)) * EPS * 8
        res = np.abs(_polyval_rows(ca, za))
        small = np.abs(corr) <= tol * np.maximum(1.0, np.abs(za))
        ok = np.all(small | (res <= backward), axis=1)
        idx = np.flatnonzero(act)
        done[idx[ok]] = True
    res = np.abs(_polyval_rows(c, z))
    return z, res, done


def cluster_threshold(tol: float) -> float:
    """Root separation below which a multiplicity is flagged."""
    return 100.0 * max(tol, math.sqrt(EPS))


@dataclass
class PreimageResult:
    roots: np.ndarray
    residuals: np.ndarray
    multiple: np.ndarray

    def __iter__(self):
        return iter(self.roots)


def _angular_order(roots: np.ndarray) -> np.ndarray:
    cen = roots.mean(axis=1, keepdims=True)
    ang = np.angle(roots - cen)
    ang = np.round(ang, 12)
    return np.argsort(ang, axis=1, kind="stable")


def preimages_batch(system: RationalMapSystem, w, tol: float | None = None):
    """Preimages of each value in ``w`` (rows), angularly ordered.

    Returns ``(roots, residuals, multiple)`` with shape ``(len(w), d)``.
    """
    tol = system.root_tol if tol is None else tol
    w = np.atleast_1d(np.asarray(w, dtype=complex))
    coeffs = system.polynomial_for(w)
    if np.any(np.abs(coeffs[:, 0]) == 0):
        raise InputError("value is omitted in the affine chart (preimage at infinity)")
    roots, res, ok = aberth_roots(coeffs, tol)
    if not ok.all():
        bad = np.flatnonzero(~ok)[:5]
        raise ConvergenceError(f"root finding did not converge for w={w[bad]} "
                               f"(residuals {res[bad].max(axis=1)})")
    order = _angular_order(roots)
    roots = np.take_along_axis(roots, order, axis=1)
    res = np.take_along_axis(res, order, axis=1)
    d = roots.shape[1]
    gap = np.abs(roots[:, :, None] - roots[:, None, :])
    gap[:, np.eye(d, dtype=bool)] = np.inf
    multiple = gap.min(axis=2) < cluster_threshold(tol) * np.maximum(1.0, np.abs(roots))
    return roots, res, multiple


def preimages(system: RationalMapSystem, w: complex) -> PreimageResult:
    """All solutions of ``f(z) = w`` with multiplicity flags."""
    r, res, mult = preimages_batch(system, [w])
    return PreimageResult(r[0], res[0], mult[0])


# hyperbolicity certificate


def julia_cloud(system: RationalMapSystem, depth: int | None = None) -> np.ndarray:
    """Points of ``f^-depth(z*)`` for the repelling fixed point ``z*`` (inverse iteration)."""
    depth = system.certificate.cloud_depth if depth is None else depth
    pts = np.array([system.repelling_fixed_point()])
    for _ in range(depth):
        r, _, _ = preimages_batch(system, pts)
        pts = r.ravel()
    return pts


def certify(system: RationalMapSystem) -> CertificateReport:
    """Heuristic hyperbolicity check.

    Every finite critical orbit must be attracted to an attracting cycle (or to
    infinity for polynomials) within the iteration budget and stay away from
    the sampled Julia cloud.
    """
    cert = system.certificate
    crit = system.critical_points()
    cloud = julia_cloud(system)
    messages = []
    attractors = []
    mind = math.inf
    passed = True
    poly_at_infinity = len(system.p) >= len(system.q) + 2
    for c in crit:
        z = complex(c)
        orbit = [z]
        escaped = False
        for _ in range(cert.iterations):
            z = complex(evaluate(system, z))
            if not cmath.isfinite(z) or abs(z) > cert.escape_radius:
                escaped = True
                break
            orbit.append(z)
        pts = np.array(orbit)
        dist = float(np.abs(pts[:, None] - cloud[None, :]).min())
        mind = min(mind, dist)
        if escaped:
            if poly_at_infinity:
                attractors.append("infinity")
            else:
                passed = False
                messages.append(f"critical orbit of {c} escapes but infinity is not attracting")
            continue
        found = _attracting_cycle(system, z, cert)
        if found is None:
            passed = False
            messages.append(f"critical orbit of {c} not attracted within {cert.iterations} steps")
        else:
            attractors.append(found)
    if mind <= cert.min_distance:
        passed = False
        messages.append(f"critical orbit within {mind:.3g} of the Julia cloud")
    return CertificateReport(passed, [complex(c) for c in crit], attractors, mind, messages)


def _attracting_cycle(system, z, cert: Certificate) -> str | None:
    w = z
    mult = 1.0 + 0j
    for period in range(1, cert.max_period + 1):
        mult *= derivative(system, w)
        w = complex(evaluate(system, w))
        if abs(w - z) < cert.attraction_tol * max(1.0, abs(z)):
            if abs(mult) < 1:
                return f"period {period} cycle, |multiplier| = {abs(mult):.3g}"
            return None
    return None


# cones


def build_preimage_cone(system: RationalMapSystem, budget: tuple[int, float],
                        max_nodes: int = 10_000_000, threads: int = 1,
                        chunk: int = 4096) -> GradedCone:
    """Breadth-first preimage cone of ``system.seed``.

    ``budget = (grading index, limit)``: a node is expanded while its grading is
    below ``limit``, so every node with grading ``<= limit`` is present.
    Gradings: 0 = level (depth), 1 = derivative (``ln|(f^n)'|`` at the node).
    """
    gi, limit = budget
    if gi not in (LEVEL_INDEX, DERIVATIVE_INDEX):
        raise InputError("budget grading must be 0 (level) or 1 (derivative)")
    limit = float(limit)
    slack = 1e-9 * max(1.0, abs(limit))
    d = system.degree
    pts = [np.array([system.seed])]
    parents = [np.array([-1])]
    labels = [np.array([0])]
    grads = [np.zeros((1, 2))]
    root_check = preimages_batch(system, [system.seed])
    if root_check[2].any():
        raise ConeExpansionError("seed is a critical value: preimage multiplicity at the root",
                                 node=0)
    offset = 0
    total = 1
    front = np.array([0])
    while True:
        cur_pts, cur_grad = pts[-1], grads[-1]
        expand = np.flatnonzero(cur_grad[:, gi] < limit - slack)
        if expand.size == 0:
            break
        total += expand.size * d
        if total > max_nodes:
            raise ResourceError(f"cone exceeds {max_nodes} nodes")
        ws = cur_pts[expand]
        roots, _, mult = _solve_chunks(system, ws, threads, chunk)
        if mult.any():
            bad = offset + int(expand[np.flatnonzero(mult.any(axis=1))[0]])
            raise ConeExpansionError(f"preimage multiplicity (critical point hit) below node {bad}",
                                     node=bad)
        new_pts = roots.ravel()
        fprime = np.abs(derivative(system, new_pts))
        inc = np.log(fprime)
        new_grad = np.repeat(cur_grad[expand], d, axis=0)
        new_grad[:, 0] += 1.0
        new_grad[:, 1] += inc
        parents.append(np.repeat(offset + expand, d))
        labels.append(np.tile(np.arange(d), expand.size))
        offset += cur_pts.shape[0]
        pts.append(new_pts)
        grads.append(new_grad)
    payload = np.concatenate(pts)
    parent = np.concatenate(parents)
    cone = GradedCone(parent, np.concatenate(labels), payload, np.concatenate(grads),
                      [QuasiCocycleSpec("level", LEVEL), QuasiCocycleSpec("derivative", DERIVATIVE)],
                      meta={"model": "rational", "seed": system.seed, "budget": (gi, limit)})
    return cone


def _solve_chunks(system, ws, threads, chunk):
    parts = [ws[i:i + chunk] for i in range(0, ws.size, chunk)]
    if threads > 1 and len(parts) > 1:
        with ThreadPoolExecutor(max_workers=threads) as ex:
            out = list(ex.map(lambda w: preimages_batch(system, w), parts))
    else:
        out = [preimages_batch(system, w) for w in parts]
    return (np.concatenate([o[0] for o in out]), np.concatenate([o[1] for o in out]),
            np.concatenate([o[2] for o in out]))


def cone_residual(system: RationalMapSystem, cone: GradedCone) -> float:
    """Largest ``|f(child) - parent|`` over the cone."""
    if len(cone) == 1:
        return 0.0
    z = np.asarray(cone.payload)
    return float(np.abs(evaluate(system, z[1:]) - z[cone.parent[1:]]).max())


def cocycle_identity_error(system: RationalMapSystem, cone: GradedCone) -> float:
    """Largest mismatch between node derivative values and ``ln|(f^n)'|`` via the chain rule."""
    z = np.asarray(cone.payload)
    inc = np.log(np.abs(derivative(system, z[1:])))
    acc = np.zeros(len(cone))
    for i in range(1, len(cone)):
        acc[i] = acc[cone.parent[i]] + inc[i - 1]
    return float(np.abs(acc - cone.gradings[:, 1]).max())


# distortion


@dataclass
class DistortionReport:
    constant: float
    max_ratio: float
    min_ratio: float
    pairs: int
    skipped: int
    depth: int
    eps: float

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _chain_targets(cone: GradedCone, nodes: np.ndarray) -> np.ndarray:
    """Cone points along each root-to-node path, shape ``(len(nodes), depth + 1)``."""
    depth = int(cone.depth[nodes[0]])
    z = np.asarray(cone.payload)
    out = np.empty((nodes.size, depth + 1), dtype=complex)
    cur = nodes.copy()
    for k in range(depth, -1, -1):
        out[:, k] = z[cur]
        cur = np.where(cur > 0, cone.parent[cur], 0)
    return out


def distortion_check(system: RationalMapSystem, cone: GradedCone, depth: int, eps: float = 1e-4,
                     n_nodes: int = 64, n_pairs: int = 8, seed: int = 0) -> DistortionReport:
    """Bounded-distortion constant of inverse-branch chains at ``depth``.

    Pairs ``x, y`` with ``|x - y| = eps`` lie in the ``eps``-disk around the root
    point; each chain is applied by nearest-root continuation toward the cone
    points. The ratio ``|B(x) - B(y)| / (exp(-nu1) |x - y|)`` is collected and
    ``c = max(max ratio, 1 / min ratio)``.
    """
    nodes = cone.nodes_at_depth(depth)
    if nodes.size == 0:
        raise InputError(f"cone has no nodes at depth {depth}")
    rng = np.random.default_rng(seed)
    if nodes.size > n_nodes:
        nodes = np.sort(rng.choice(nodes, n_nodes, replace=False))
    z0 = complex(cone.payload[0])
    a = rng.uniform(0, 2 * np.pi, n_pairs)
    b = rng.uniform(0, 2 * np.pi, n_pairs)
    r = rng.uniform(0, 0.5, n_pairs)
    x0 = z0 + eps * r * np.exp(1j * a)
    y0 = x0 + eps * np.exp(1j * b)
    targets = _chain_targets(cone, nodes)
    xs = np.repeat(x0[None, :], nodes.size, axis=0).ravel()
    ys = np.repeat(y0[None, :], nodes.size, axis=0).ravel()
    tgt = np.repeat(targets, n_pairs, axis=0)
    valid = np.ones(xs.size, dtype=bool)
    for k in range(1, depth + 1):
        xs, okx = _nearest_branch(system, xs, tgt[:, k])
        ys, oky = _nearest_branch(system, ys, tgt[:, k])
        valid &= okx & oky
    nu1 = np.repeat(cone.gradings[nodes, 1], n_pairs)
    ratio = np.abs(xs - ys) / (np.exp(-nu1) * eps)
    ratio = ratio[valid]
    if ratio.size == 0:
        raise ConvergenceError("every pair was skipped for branch ambiguity")
    mx, mn = float(ratio.max()), float(ratio.min())
    return DistortionReport(max(mx, 1 / mn), mx, mn, int(ratio.size), int((~valid).sum()),
                            depth, eps)


def _nearest_branch(system, w, target):
    roots, _, _ = preimages_batch(system, w)
    dist = np.abs(roots - target[:, None])
    order = np.argsort(dist, axis=1)
    best = np.take_along_axis(roots, order[:, :1], axis=1)[:, 0]
    d0 = np.take_along_axis(dist, order[:, :1], axis=1)[:, 0]
    d1 = np.take_along_axis(dist, order[:, 1:2], axis=1)[:, 0]
    ok = d1 - d0 > 10 * system.root_tol * np.maximum(1.0, d1)
    return best, ok


# measures


def brolin_lyubich(system: RationalMapSystem, n: int, cone: GradedCone | None = None):
    """Uniform distribution on ``f^-n(seed)`` (weight ``d^-n`` per preimage)."""
    from hypcones.conformal import AtomicMeasure

    if n < 0:
        raise InputError("n must be non-negative")
    if cone is None or cone.max_depth < n:
        cone = build_preimage_cone(system, (LEVEL_INDEX, n))
    nodes = cone.nodes_at_depth(n)
    words = cone.words()
    pts = np.asarray(cone.payload)[nodes]
    w = np.full(nodes.size, float(system.degree) ** -n)
    return AtomicMeasure(w, points=pts, words=[words[i] for i in nodes],
                         provenance="brolin_lyubich", meta={"depth": n})


def pushforward(system: RationalMapSystem, measure):
    """Image measure under ``f`` (atoms at ``f(z)``, words lose their last label)."""
    from hypcones.conformal import AtomicMeasure

    pts = evaluate(system, measure.points)
    words = None if measure.words is None else [w[:-1] for w in measure.words]
    return AtomicMeasure(measure.weights.copy(), points=np.atleast_1d(pts), words=words,
                         provenance=measure.provenance, meta=dict(measure.meta))


def match_atomic(a, b, tol: float = 1e-8) -> float:
    """Max weight mismatch after merging atoms of ``a`` onto the nearest atoms of ``b``.

    Returns ``inf`` if some atom of ``a`` has no atom of ``b`` within ``tol``.
    """
    from scipy.spatial import cKDTree

    tb = cKDTree(np.column_stack([b.points.real, b.points.imag]))
    dist, idx = tb.query(np.column_stack([a.points.real, a.points.imag]))
    if np.any(dist > tol):
        return math.inf
    merged = np.bincount(idx, weights=a.weights, minlength=len(b.weights))
    return float(np.abs(merged - b.weights).max())


# dimension


def julia_dimension(system: RationalMapSystem, tol: float = 1e-6,
                    budget: float = 12 * math.log(2), cone: GradedCone | None = None,
                    threads: int = 1) -> float:
    """Critical exponent of ``sum_n sum_{z in f^-n(z0)} |(f^n)'(z)|^-s``."""
    from hypcones.conformal import critical_exponent

    if tol <= 0:
        raise InputError("tol must be positive")
    if cone is None:
        cone = build_preimage_cone(system, (DERIVATIVE_INDEX, budget), threads=threads)
    return critical_exponent(cone, DERIVATIVE_INDEX, None, tol)


# dual cocycle


@dataclass
class DualCocycleResult:
    value: float
    tail_bound: float
    contraction: float
    shadowing_radius: float
    orbit_z: np.ndarray
    orbit_w: np.ndarray

    def to_dict(self) -> dict:
        return {"value": self.value, "tail_bound": self.tail_bound,
                "contraction": self.contraction, "shadowing_radius": self.shadowing_radius}


class ShadowingError(InputError):
    pass


def _log_derivative_lipschitz(system, pts, h=1e-6) -> float:
    """Local bound on ``|d/dz ln|f'(z)||`` via ``|f''/f'|`` by central differences."""
    pts = np.asarray(pts, dtype=complex)
    d0 = derivative(system, pts)
    d2 = (derivative(system, pts + h) - derivative(system, pts - h)) / (2 * h)
    return float(np.abs(d2 / d0).max())


def dual_cocycle(system: RationalMapSystem, z: complex, w: complex, depth: int,
                 branches: Sequence[int] | None = None,
                 radius: float | None = None) -> DualCocycleResult:
    """``D_n = sum_{k<n} ln|f'(z_k)| - ln|f'(w_k)|`` along shadowing inverse orbits.

    ``z_k`` follows ``branches`` (default: label 0 at every step, angular order);
    ``w_k`` is the preimage of ``w_{k-1}`` nearest to ``z_k``.
    """
    z, w = complex(z), complex(w)
    zs = [z]
    ws = [w]
    min_sep = math.inf
    for k in range(depth):
        roots, _, _ = preimages_batch(system, [zs[-1]])
        r = roots[0]
        sep = np.abs(r[:, None] - r[None, :])
        sep[np.eye(len(r), dtype=bool)] = np.inf
        min_sep = min(min_sep, float(sep.min()))
        lab = 0 if branches is None else int(branches[k])
        zs.append(complex(r[lab]))
    rad = min_sep / 4 if radius is None else radius
    if abs(z - w) >= rad:
        raise ShadowingError(f"|z - w| = {abs(z - w):.3g} not below shadowing radius {rad:.3g}")
    for k in range(1, depth + 1):
        roots, _, _ = preimages_batch(system, [ws[-1]])
        r = roots[0]
        dist = np.sort(np.abs(r - zs[k]))
        if len(dist) > 1 and dist[1] - dist[0] <= 10 * system.root_tol:
            raise ShadowingError(f"shadowing ambiguous at step {k}")
        ws.append(complex(r[np.argmin(np.abs(r - zs[k]))]))
    zs_a, ws_a = np.array(zs), np.array(ws)
    terms = np.log(np.abs(derivative(system, zs_a[:depth]))) - \
        np.log(np.abs(derivative(system, ws_a[:depth])))
    value = float(terms.sum()) if depth else 0.0
    gaps = np.abs(zs_a - ws_a)
    if gaps[0] == 0:
        return DualCocycleResult(0.0, 0.0, 0.0, rad, zs_a, ws_a)
    # gaps below the rounding floor carry no information about contraction
    floor = 1e3 * np.finfo(float).eps * max(1.0, float(np.abs(zs_a).max()))
    resolved = np.flatnonzero(gaps > floor)
    last = int(resolved.max()) if resolved.size else 0
    if last == 0:
        lam = 0.0 if depth else 1.0
    else:
        lam = float((gaps[last] / gaps[0]) ** (1.0 / last))
    if lam >= 1:
        tail = math.inf
    else:
        k = np.arange(last + 1)
        with np.errstate(divide="ignore"):
            fit = float(np.max(gaps[:last + 1] / (gaps[0] * lam ** k))) if lam > 0 else 1.0
        lip = _log_derivative_lipschitz(system, zs_a)
        tail = 2 * lip * gaps[0] * fit * lam ** depth / (1 - lam)
    return DualCocycleResult(value, float(tail), lam, rad, zs_a, ws_a)
