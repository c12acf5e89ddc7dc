"""Graded cones, log-scales and the metrics they induce.

A :class:`GradedCone` is a finite rooted tree (the cone of positive germs at a
basepoint) stored as flat arrays in breadth-first order. Every node carries one
accumulated value per registered quasi-cocycle. Gromov products, log-scale
tables, chain-infimum metrics, four-point hyperbolicity and Busemann
increments are computed on top of it.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Any, Callable, Mapping, Sequence

import numpy as np

from hypcones import DepthError, InputError

LEVEL = "level"
DERIVATIVE = "derivative"
CUSTOM = "custom"
_KINDS = (LEVEL, DERIVATIVE, CUSTOM)


@dataclass(frozen=True)
class QuasiCocycleSpec:
    """Grading assignment on cone edges.

    ``increment(parent_payload, child_payload)`` returns the edge increment.
    It may be omitted when the cone is built with precomputed values.
    """

    name: str
    kind: str = LEVEL
    eta: float = 0.0
    increment: Callable[[Any, Any], float] | None = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise InputError(f"unknown cocycle kind {self.kind!r}")
        if self.eta < 0:
            raise InputError("eta must be non-negative")
        if self.kind in (LEVEL, DERIVATIVE) and self.eta != 0.0:
            raise InputError(f"{self.kind} cocycles are exact, eta must be 0")


def _frozen(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


class GradedCone:
    """Finite rooted cone with per-node grading vectors.

    Nodes are indexed ``0..N-1`` in breadth-first order; node 0 is the root.
    ``gradings[i, j]`` is the accumulated value of cocycle ``j`` at node ``i``.
    """

    def __init__(self, parent, label, payload, gradings, specs: Sequence[QuasiCocycleSpec],
                 meta: Mapping[str, Any] | None = None):
        parent = np.asarray(parent, dtype=np.int64)
        label = np.asarray(label, dtype=np.int64)
        gradings = np.asarray(gradings, dtype=float)
        if gradings.ndim == 1:
            gradings = gradings[:, None]
        n = parent.shape[0]
        if n == 0 or parent[0] != -1:
            raise InputError("node 0 must be the root (parent -1)")
        if label.shape[0] != n or gradings.shape[0] != n or len(payload) != n:
            raise InputError("node arrays have inconsistent lengths")
        if gradings.shape[1] != len(specs):
            raise InputError("one cocycle spec per grading column is required")
        if np.any(parent[1:] < 0) or np.any(parent[1:] >= np.arange(1, n)):
            raise InputError("parents must precede children (breadth-first order)")
        depth = np.zeros(n, dtype=np.int64)
        for i in range(1, n):
            depth[i] = depth[parent[i]] + 1
        if np.any(np.diff(depth) < 0):
            raise InputError("nodes must be sorted by depth")
        self.parent = _frozen(parent)
        self.label = _frozen(label)
        self.depth = _frozen(depth)
        self.payload = payload
        self.gradings = _frozen(gradings)
        self.specs = tuple(specs)
        self.meta = dict(meta or {})
        n_children = np.bincount(parent[1:], minlength=n)
        self._is_leaf = _frozen(n_children == 0)

    def __len__(self) -> int:
        return self.parent.shape[0]

    def __repr__(self) -> str:
        names = ", ".join(s.name for s in self.specs)
        return f"GradedCone(nodes={len(self)}, depth={self.max_depth}, cocycles=[{names}])"

    @property
    def max_depth(self) -> int:
        return int(self.depth[-1])

    @property
    def leaves(self) -> np.ndarray:
        return np.flatnonzero(self._is_leaf)

    def cocycle_index(self, cocycle: int | str) -> int:
        if isinstance(cocycle, str):
            for j, spec in enumerate(self.specs):
                if spec.name == cocycle:
                    return j
            raise InputError(f"no cocycle named {cocycle!r}")
        if not 0 <= cocycle < len(self.specs):
            raise InputError(f"cocycle index {cocycle} not registered")
        return int(cocycle)

    def check_node(self, i) -> int:
        i = int(i)
        if not 0 <= i < len(self):
            raise InputError(f"unknown node index {i}")
        return i

    def values(self, cocycle) -> np.ndarray:
        return self.gradings[:, self.cocycle_index(cocycle)]

    def increments(self, cocycle) -> np.ndarray:
        """Edge increment into each non-root node (recomputed from accumulated values)."""
        v = self.values(cocycle)
        return v[1:] - v[self.parent[1:]]

    def max_increment(self, cocycle) -> float:
        inc = self.increments(cocycle)
        return float(inc.max()) if inc.size else 0.0

    def min_increment(self, cocycle) -> float:
        inc = self.increments(cocycle)
        return float(inc.min()) if inc.size else 0.0

    def complete_through(self, cocycle) -> float:
        """Largest value v such that every node with grading <= v is present.

        Absent nodes are children of leaves and have strictly larger values than
        their leaf parent, so the minimum leaf value is a safe bound.
        """
        v = self.values(cocycle)
        return float(v[self._is_leaf].min())

    def path(self, i) -> list[int]:
        i = self.check_node(i)
        out = [i]
        while i:
            i = int(self.parent[i])
            out.append(i)
        return out[::-1]

    def word(self, i) -> tuple[int, ...]:
        """Branch labels along the root-to-node path."""
        return tuple(int(self.label[j]) for j in self.path(i)[1:])

    def words(self) -> list[tuple[int, ...]]:
        out: list[tuple[int, ...]] = [()]
        for i in range(1, len(self)):
            out.append(out[self.parent[i]] + (int(self.label[i]),))
        return out

    def ancestor_at_depth(self, k: int) -> np.ndarray:
        """Ancestor of every node at depth ``k``; -1 for nodes shallower than ``k``."""
        anc = np.arange(len(self))
        for _ in range(max(self.max_depth - k, 0)):
            anc = np.where(self.depth[anc] > k, self.parent[anc], anc)
        return np.where(self.depth < k, -1, anc)

    def nodes_at_depth(self, k: int) -> np.ndarray:
        return np.flatnonzero(self.depth == k)

    def lca(self, a, b) -> int:
        a, b = self.check_node(a), self.check_node(b)
        while self.depth[a] > self.depth[b]:
            a = int(self.parent[a])
        while self.depth[b] > self.depth[a]:
            b = int(self.parent[b])
        while a != b:
            a, b = int(self.parent[a]), int(self.parent[b])
        return a

    def tree_distance(self, a, b) -> int:
        c = self.lca(a, b)
        return int(self.depth[a] + self.depth[b] - 2 * self.depth[c])

    def annulus_mask(self, cocycle, n: float, width: float) -> np.ndarray:
        v = self.values(cocycle)
        return (v > n - width) & (v <= n)

    def annulus_sums(self, cocycle, coefs: np.ndarray, ns: Sequence[float], width: float):
        """Counts and sums of ``exp(coefs . gradings)`` over the annuli ``(n - width, n]``."""
        j = self.cocycle_index(cocycle)
        v = self.gradings[:, j]
        order = np.argsort(v, kind="stable")
        vs = v[order]
        if np.any(coefs):
            weights = np.exp(self.gradings[order] @ coefs)
        else:
            weights = np.ones(len(self))
        counts = np.empty(len(ns), dtype=np.int64)
        sums = np.empty(len(ns))
        for t, n in enumerate(ns):
            lo = np.searchsorted(vs, n - width, side="right")
            hi = np.searchsorted(vs, n, side="right")
            counts[t] = hi - lo
            sums[t] = weights[lo:hi].sum()
        return counts, sums

    def cut_sums(self, cocycle, coefs: np.ndarray, ns: Sequence[float]):
        """Counts and sums over the first-crossing cuts ``nu(parent) <= n < nu(g)``.

        Each cut is a stopping line: every ray from the root crosses it once.
        Complete for ``n`` below :meth:`complete_through`.
        """
        j = self.cocycle_index(cocycle)
        v = self.gradings[1:, j]
        vp = self.gradings[self.parent[1:], j]
        if np.any(coefs):
            weights = np.exp(self.gradings[1:] @ coefs)
        else:
            weights = np.ones(len(self) - 1)
        counts = np.empty(len(ns), dtype=np.int64)
        sums = np.empty(len(ns))
        for t, n in enumerate(ns):
            sel = (vp <= n) & (v > n)
            counts[t] = int(sel.sum())
            sums[t] = weights[sel].sum()
        return counts, sums


def psi_vector(cone, psi) -> np.ndarray:
    """Normalize a weight specification into a coefficient vector over gradings.

    ``psi`` may be ``None`` (zero weight), a grading index or name, a mapping
    ``{grading: coefficient}`` or an explicit coefficient array.
    """
    k = len(cone.specs)
    out = np.zeros(k)
    if psi is None:
        return out
    if isinstance(psi, (int, np.integer, str)):
        out[cone.cocycle_index(psi)] = 1.0
        return out
    if isinstance(psi, Mapping):
        for key, c in psi.items():
            out[cone.cocycle_index(key)] += float(c)
        return out
    arr = np.asarray(psi, dtype=float)
    if arr.shape != (k,):
        raise InputError(f"psi coefficient vector must have length {k}")
    return arr.copy()


def full_cone(k: int, depth: int) -> GradedCone:
    """Full ``k``-ary cone to ``depth`` with the level grading."""
    if k < 1 or depth < 0:
        raise InputError("need k >= 1 and depth >= 0")
    parent = [-1]
    label = [0]
    level = [0.0]
    start, stop = 0, 1
    for d in range(1, depth + 1):
        for p in range(start, stop):
            for a in range(k):
                parent.append(p)
                label.append(a)
                level.append(float(d))
        start, stop = stop, len(parent)
    payload = np.zeros(len(parent), dtype=np.int64)
    return GradedCone(parent, label, payload, np.array(level),
                      [QuasiCocycleSpec("level", LEVEL)], meta={"model": f"full-{k}-ary"})


# Gromov products and log-scales


def gromov_product(cone: GradedCone, cocycle, a, b) -> float:
    """Cocycle value at the deepest common ancestor of ``a`` and ``b`` (+inf if equal)."""
    j = cone.cocycle_index(cocycle)
    a, b = cone.check_node(a), cone.check_node(b)
    if a == b:
        return math.inf
    return float(cone.gradings[cone.lca(a, b), j])


@dataclass(frozen=True)
class LogScaleTable:
    ids: tuple
    values: np.ndarray
    delta: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        n = len(self.ids)
        if v.shape != (n, n):
            raise InputError("log-scale table shape does not match ids")
        if not np.array_equal(v, v.T):
            raise InputError("log-scale table must be symmetric")
        if not np.all(np.isposinf(np.diag(v))):
            raise InputError("log-scale diagonal must be +inf")
        off = v[~np.eye(n, dtype=bool)]
        if np.any(np.isinf(off)):
            raise InputError("off-diagonal log-scale values must be finite")
        object.__setattr__(self, "values", _frozen(v.copy()))

    def __len__(self) -> int:
        return len(self.ids)

    def to_csv(self) -> str:
        return table_to_csv(self.ids, self.values)

    @classmethod
    def from_csv(cls, text: str, delta: float | None = None) -> "LogScaleTable":
        ids, values = table_from_csv(text)
        if delta is None:
            delta = triple_defect(values)
        return cls(tuple(ids), values, float(delta))


def triple_defect(values: np.ndarray) -> float:
    """Smallest delta with l(x,z) >= min(l(x,y), l(y,z)) - delta over all triples."""
    v = np.asarray(values, dtype=float)
    n = v.shape[0]
    worst = 0.0
    for y in range(n):
        row = v[:, y]
        m = np.minimum(row[:, None], row[None, :])
        mask = np.ones((n, n), dtype=bool)
        mask[y, :] = False
        mask[:, y] = False
        np.fill_diagonal(mask, False)
        if not mask.any():
            continue
        with np.errstate(invalid="ignore"):
            d = (m - v)[mask]
        worst = max(worst, float(d.max()))
    return max(worst, 0.0)


def logscale_from_cone(cone: GradedCone, cocycle, leaves: Sequence[int]) -> LogScaleTable:
    leaves = [cone.check_node(x) for x in leaves]
    if len(leaves) < 2:
        raise InputError("need at least 2 leaves")
    if len(set(leaves)) != len(leaves):
        raise InputError("leaves must be pairwise distinct")
    n = len(leaves)
    v = np.full((n, n), math.inf)
    for p, q in combinations(range(n), 2):
        v[p, q] = v[q, p] = gromov_product(cone, cocycle, leaves[p], leaves[q])
    return LogScaleTable(tuple(leaves), v, triple_defect(v))


# metric synthesis

MAX_EXPANSION = 2.0 ** 0.25


@dataclass(frozen=True)
class SynthesizedMetric:
    ids: tuple
    distances: np.ndarray
    alpha: float
    constant: float

    def to_csv(self) -> str:
        return table_to_csv(self.ids, self.distances, diagonal="0")


def max_admissible_alpha(delta: float) -> float:
    return math.inf if delta <= 0 else math.log(MAX_EXPANSION) / delta


def metric_from_logscale(table: LogScaleTable, alpha: float) -> SynthesizedMetric:
    """Chain-infimum metric ``d(x,y) = inf sum exp(-alpha l(z_i, z_i+1))``.

    Requires ``exp(alpha * delta) <= 2**(1/4)``. The reported constant ``c``
    satisfies ``exp(-alpha l)/c <= d <= exp(-alpha l)``.
    """
    if alpha <= 0:
        raise InputError("alpha must be positive")
    if len(table) < 2:
        raise InputError("need at least 2 points")
    amax = max_admissible_alpha(table.delta)
    if alpha > amax:
        raise InputError(f"alpha={alpha} too large for delta={table.delta}; "
                         f"maximal admissible alpha is {amax}")
    w = np.exp(-alpha * table.values)
    d = w.copy()
    n = d.shape[0]
    for k in range(n):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    np.fill_diagonal(d, 0.0)
    off = ~np.eye(n, dtype=bool)
    c = float(np.max(w[off] / d[off]))
    return SynthesizedMetric(table.ids, _frozen(d), float(alpha), max(c, 1.0))


# four-point hyperbolicity


@dataclass(frozen=True)
class DeltaEstimate:
    delta: float
    quadruples: int
    exhaustive: bool
    seed: int | None

    def __float__(self) -> float:
        return self.delta


def _four_point(d, x, y, z, w) -> np.ndarray:
    s1 = d[x, y] + d[z, w]
    s2 = d[x, z] + d[y, w]
    s3 = d[x, w] + d[y, z]
    s = np.sort(np.stack([s1, s2, s3]), axis=0)
    return (s[2] - s[1]) / 2.0


def estimate_delta_hyperbolicity(distances, *, max_exhaustive: int = 200,
                                 samples: int = 200_000, seed: int = 0) -> DeltaEstimate:
    """Four-point (Gromov) hyperbolicity constant of a finite metric.

    Exhaustive up to ``max_exhaustive`` points, otherwise over ``samples``
    random quadruples drawn with ``seed``.
    """
    d = np.asarray(distances, dtype=float)
    n = d.shape[0]
    if d.ndim != 2 or d.shape != (n, n):
        raise InputError("distance table must be square")
    if n < 4:
        raise InputError("need at least 4 points")
    if n > max_exhaustive:
        rng = np.random.default_rng(seed)
        q = np.array([rng.choice(n, 4, replace=False) for _ in range(samples)])
        vals = _four_point(d, q[:, 0], q[:, 1], q[:, 2], q[:, 3])
        return DeltaEstimate(float(vals.max()), samples, False, seed)
    best = 0.0
    count = 0
    idx = np.arange(n)
    for x in range(n - 3):
        for y in range(x + 1, n - 2):
            zz, ww = np.meshgrid(idx[y + 1:], idx[y + 1:], indexing="ij")
            keep = zz < ww
            z, w = zz[keep], ww[keep]
            if z.size == 0:
                continue
            best = max(best, float(_four_point(d, x, y, z, w).max()))
            count += z.size
    return DeltaEstimate(best, count, True, None)


# Busemann cocycle


def _ray_node(cone: GradedCone, leaf, horizon: int) -> int:
    leaf = cone.check_node(leaf)
    if horizon < 0 or horizon > cone.depth[leaf]:
        raise DepthError(f"horizon {horizon} not reachable along ray ending at depth "
                         f"{int(cone.depth[leaf])}")
    return cone.path(leaf)[horizon]


def busemann_increment(cone: GradedCone, ray, v1, v2, horizon: int) -> float:
    """``|v1 - v_h| - |v2 - v_h|`` in the unit-edge tree metric, ``v_h`` the ray node at ``horizon``.

    ``ray`` is the node ending the root-to-leaf path.
    """
    vh = _ray_node(cone, ray, horizon)
    return float(cone.tree_distance(v1, vh) - cone.tree_distance(v2, vh))


def busemann_stabilization_depth(cone: GradedCone, ray, v1, v2) -> int:
    """Horizon from which :func:`busemann_increment` no longer changes."""
    ray = cone.check_node(ray)
    return int(max(cone.depth[cone.lca(v1, ray)], cone.depth[cone.lca(v2, ray)]))


# CSV tables


def _fmt(x: float, diagonal: str) -> str:
    if math.isinf(x):
        return "inf"
    return repr(float(x))


def table_to_csv(ids, values, diagonal: str = "inf") -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow([""] + [str(i) for i in ids])
    for p, i in enumerate(ids):
        row = []
        for q in range(len(ids)):
            row.append(diagonal if p == q else _fmt(values[p, q], diagonal))
        wr.writerow([str(i)] + row)
    return buf.getvalue()


def table_from_csv(text: str):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InputError("empty table")
    ids = rows[0][1:]
    body = rows[1:]
    if len(body) != len(ids) or any(len(r) != len(ids) + 1 for r in body):
        raise InputError("table body does not match header")
    vals = np.array([[float(x) for x in r[1:]] for r in body])
    parsed = []
    for i in ids:
        try:
            parsed.append(int(i))
        except ValueError:
            parsed.append(i)
    return parsed, vals
