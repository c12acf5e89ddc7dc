"""Subshifts of finite type: Perron data, cylinder measures, product measures and cocycle projection.

Words are tuples of symbols ``0..k-1``. One-sided cones grow words by
appending symbols on the right; the level cocycle is word length.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.sparse.csgraph import connected_components

from hypcones import ConvergenceError, InputError
from hypcones.graded import LEVEL, CUSTOM, GradedCone, QuasiCocycleSpec


class ReducibleMatrixError(InputError):
    def __init__(self, components):
        self.components = components
        super().__init__(f"matrix is reducible; strongly connected components: {components}")


def _as_matrix(A) -> np.ndarray:
    a = np.asarray(A)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or a.shape[0] < 1:
        raise InputError("transition matrix must be square")
    if not np.all((a == 0) | (a == 1)):
        raise InputError("transition matrix entries must be 0 or 1")
    return a.astype(np.int64)


def strong_components(A) -> list[list[int]]:
    a = _as_matrix(A)
    n, labels = connected_components(a, directed=True, connection="strong")
    return [np.flatnonzero(labels == c).tolist() for c in range(n)]


def is_irreducible(A) -> bool:
    return len(strong_components(A)) == 1


def is_aperiodic(A) -> bool:
    a = _as_matrix(A)
    if not is_irreducible(a):
        return False
    k = a.shape[0]
    # Wielandt: a primitive matrix has A^(k^2 - 2k + 2) > 0
    p = (a > 0).astype(np.int64)
    r = np.eye(k, dtype=np.int64)
    for _ in range(k * k - 2 * k + 2):
        r = ((r @ p) > 0).astype(np.int64)
    return bool(np.all(r > 0))


def pf_data(A, tol: float = 1e-13, max_iter: int = 1_000_000):
    """Perron eigenvalue with right (sum-normalized) and left (``u.m = 1``) eigenvectors.

    Power iteration on ``I + A`` from the all-ones vector; ``I + A`` is
    primitive whenever ``A`` is irreducible, so periodic matrices converge too.
    """
    a = _as_matrix(A).astype(float)
    comps = strong_components(a)
    if len(comps) != 1:
        raise ReducibleMatrixError(comps)
    m = _power(a, tol, max_iter)
    u = _power(a.T, tol, max_iter)
    lam = float((a @ m).sum() / m.sum())
    u = u / float(u @ m)
    for vec, mat in ((m, a), (u, a.T)):
        res = np.abs(mat @ vec - lam * vec).max()
        if res >= max(tol, 1e-15) * np.abs(vec).max() * max(lam, 1.0) * 10:
            raise ConvergenceError(f"Perron residual {res} above tolerance")
    return lam, m, u


def _power(a: np.ndarray, tol: float, max_iter: int) -> np.ndarray:
    b = a + np.eye(a.shape[0])
    x = np.ones(a.shape[0]) / a.shape[0]
    for _ in range(max_iter):
        y = b @ x
        y /= y.sum()
        if np.abs(y - x).max() < tol * 0.1:
            return y
        x = y
    raise ConvergenceError("power iteration did not converge")


@dataclass(frozen=True)
class SftSystem:
    """Alphabet ``0..k-1`` with 0/1 transition matrix and its Perron data."""

    matrix: np.ndarray
    tol: float = 1e-13

    def __post_init__(self):
        a = _as_matrix(self.matrix)
        if a.shape[0] < 2:
            raise InputError("alphabet size must be at least 2")
        a.setflags(write=False)
        object.__setattr__(self, "matrix", a)

    @property
    def k(self) -> int:
        return self.matrix.shape[0]

    @cached_property
    def irreducible(self) -> bool:
        return is_irreducible(self.matrix)

    @cached_property
    def aperiodic(self) -> bool:
        return is_aperiodic(self.matrix)

    @cached_property
    def perron(self):
        return pf_data(self.matrix, self.tol)

    @property
    def lam(self) -> float:
        return self.perron[0]

    @property
    def m(self) -> np.ndarray:
        return self.perron[1]

    @property
    def u(self) -> np.ndarray:
        return self.perron[2]

    @property
    def entropy(self) -> float:
        return math.log(self.lam)

    def transpose(self) -> "SftSystem":
        return SftSystem(self.matrix.T.copy(), self.tol)

    @cached_property
    def dual(self) -> "SftSystem":
        return self.transpose()

    def admissible(self, word: Sequence[int]) -> bool:
        if any(not 0 <= s < self.k for s in word):
            return False
        return all(self.matrix[a, b] for a, b in zip(word, word[1:]))

    def check_word(self, word: Sequence[int]) -> tuple[int, ...]:
        w = tuple(int(s) for s in word)
        if not w:
            raise InputError("empty word")
        if not self.admissible(w):
            raise InputError(f"inadmissible word {w}")
        return w

    def words(self, n: int, first: int | None = None) -> list[tuple[int, ...]]:
        if n == 0:
            return [()]
        out = [(s,) for s in range(self.k)] if first is None else [(first,)]
        for _ in range(n - 1):
            out = [w + (b,) for w in out for b in range(self.k) if self.matrix[w[-1], b]]
        return out

    def periodic_words(self, p: int) -> list[tuple[int, ...]]:
        """Words ``w`` of length ``p`` with ``w w w ...`` admissible (one per periodic point)."""
        return [w for w in self.words(p) if self.matrix[w[-1], w[0]]]


def golden_mean() -> SftSystem:
    return SftSystem(np.array([[1, 1], [1, 0]]))


def full_shift(k: int) -> SftSystem:
    return SftSystem(np.ones((k, k), dtype=np.int64))


# cones


class SymbolicCone:
    """Lazily counted word cone of an SFT graded by word length.

    Extra gradings add ``increments[a]`` each time symbol ``a`` is appended.
    Annulus sums are computed by a transfer recursion over the last symbol, so
    counts are exact without enumerating words.
    """

    def __init__(self, matrix, root_symbol: int | None = None,
                 extra: dict[str, Sequence[float]] | None = None):
        self.matrix = _as_matrix(matrix)
        self.root_symbol = root_symbol
        extra = extra or {}
        self.specs = (QuasiCocycleSpec("level", LEVEL),) + tuple(
            QuasiCocycleSpec(name, CUSTOM) for name in extra)
        k = self.matrix.shape[0]
        incs = [np.ones(k)] + [np.asarray(v, dtype=float) for v in extra.values()]
        if any(v.shape != (k,) for v in incs):
            raise InputError("per-symbol increments must have one entry per symbol")
        self.symbol_increments = np.stack(incs, axis=1)

    def cocycle_index(self, cocycle) -> int:
        if isinstance(cocycle, str):
            for j, s in enumerate(self.specs):
                if s.name == cocycle:
                    return j
            raise InputError(f"no cocycle named {cocycle!r}")
        if not 0 <= cocycle < len(self.specs):
            raise InputError(f"cocycle index {cocycle} not registered")
        return int(cocycle)

    def complete_through(self, cocycle) -> float:
        return math.inf

    def max_increment(self, cocycle) -> float:
        return float(self.symbol_increments[:, self.cocycle_index(cocycle)].max())

    def _level_sums(self, coefs: np.ndarray, depth: int):
        step = np.exp(self.symbol_increments @ coefs)
        a = self.matrix.astype(float)
        k = a.shape[0]
        counts = [1]
        sums = [1.0]
        if self.root_symbol is None:
            cnt = np.ones(k, dtype=object)
            wt = step.copy()
        else:
            cnt = np.zeros(k, dtype=object)
            cnt[self.root_symbol] = 1
            wt = np.zeros(k)
            wt[self.root_symbol] = 1.0
            # the root word [s] is the cone's root; deeper levels append symbols
            counts, sums = [], []
        ai = self.matrix.astype(object)
        while len(counts) <= depth:
            counts.append(int(cnt.sum()))
            sums.append(float(wt.sum()))
            cnt = cnt @ ai
            wt = (wt @ a) * step
        return counts, sums

    def annulus_sums(self, cocycle, coefs, ns, width):
        j = self.cocycle_index(cocycle)
        if self.specs[j].kind != LEVEL:
            raise InputError("symbolic cones support annuli of the level grading only; "
                             "materialize with word_cone() for other gradings")
        coefs = np.asarray(coefs, dtype=float)
        top = int(math.floor(max(ns) + 1e-9)) if len(ns) else 0
        counts, sums = self._level_sums(coefs, max(top, 0))
        out_c = np.zeros(len(ns), dtype=np.int64)
        out_s = np.zeros(len(ns))
        for t, n in enumerate(ns):
            for d in range(len(counts)):
                if n - width < d <= n:
                    out_c[t] += counts[d]
                    out_s[t] += sums[d]
        return out_c, out_s


def word_cone(sft_or_matrix, depth: int, root_symbol: int | None = None,
              extra: dict[str, Sequence[float]] | None = None) -> GradedCone:
    """Explicit word cone: root is the empty word (or ``[root_symbol]``), children append symbols."""
    a = _as_matrix(getattr(sft_or_matrix, "matrix", sft_or_matrix))
    k = a.shape[0]
    extra = extra or {}
    incs = np.stack([np.ones(k)] + [np.asarray(v, dtype=float) for v in extra.values()], axis=1)
    specs = [QuasiCocycleSpec("level", LEVEL)] + [QuasiCocycleSpec(n, CUSTOM) for n in extra]
    parent = [-1]
    label = [-1 if root_symbol is None else root_symbol]
    last = [-1 if root_symbol is None else root_symbol]
    grad = [np.zeros(len(specs))]
    start, stop = 0, 1
    for _ in range(depth):
        for p in range(start, stop):
            nxt = range(k) if last[p] < 0 else np.flatnonzero(a[last[p]])
            for b in nxt:
                parent.append(p)
                label.append(int(b))
                last.append(int(b))
                grad.append(grad[p] + incs[b])
        start, stop = stop, len(parent)
    return GradedCone(parent, label, np.array(last), np.array(grad), specs,
                      meta={"model": "sft", "root_symbol": root_symbol})


# cylinder measures


def conformal_cylinder_measure(sft: SftSystem, word) -> float:
    """``mu([w]) = lam^-(n-1) m_{w_last} / sum(m)``; ``mu([aw]) = mu([w]) / lam``."""
    w = sft.check_word(word)
    return float(sft.lam ** -(len(w) - 1) * sft.m[w[-1]] / sft.m.sum())


def parry_two_sided(sft: SftSystem, word, position: int = 0) -> float:
    """Parry measure of the cylinder ``[w]`` placed at ``position`` (shift invariant)."""
    w = sft.check_word(word)
    return float(sft.u[w[0]] * sft.lam ** -(len(w) - 1) * sft.m[w[-1]])


def product_bowen(sft: SftSystem, past, future) -> float:
    """Density-corrected product of forward and backward conformal measures.

    ``past`` ends and ``future`` starts with the seam symbol at position 0.
    The forward factor is the conformal measure of ``A`` on ``future``; the
    backward factor is the conformal measure of ``A^T`` on the reversed past.
    For the level cocycle both transfer functions vanish, so the density
    ``exp(-beta (phi_minus - phi_plus))`` is 1 and only the global
    normalization over seam rectangles remains.
    """
    p = tuple(int(s) for s in past)
    f = tuple(int(s) for s in future)
    if not p or not f or p[-1] != f[0]:
        raise InputError("past and future must share the seam symbol")
    sft.check_word(p + f[1:])
    dual = sft.dual
    plus = conformal_cylinder_measure(sft, f)
    minus = conformal_cylinder_measure(dual, p[::-1])
    beta = sft.entropy
    phi_plus = phi_minus = 0.0
    density = math.exp(-beta * (phi_minus - phi_plus))
    norm = sum(conformal_cylinder_measure(sft, (s,)) * conformal_cylinder_measure(dual, (s,))
               for s in range(sft.k))
    return plus * minus * density / norm


# two-sided points


@dataclass(frozen=True)
class TwoSidedPoint:
    """Finite window of a bi-infinite sequence: ``past`` holds ``x_{-n}..x_{-1}``, ``future`` ``x_0..x_m``."""

    past: tuple[int, ...]
    future: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "past", tuple(int(s) for s in self.past))
        object.__setattr__(self, "future", tuple(int(s) for s in self.future))
        if not self.future:
            raise InputError("a two-sided point needs the symbol at position 0")

    def __getitem__(self, i: int) -> int:
        if i >= 0:
            if i >= len(self.future):
                raise IndexError(f"position {i} beyond the future window")
            return self.future[i]
        if -i > len(self.past):
            raise IndexError(f"position {i} beyond the past window")
        return self.past[i]

    @property
    def seam(self) -> int:
        return self.future[0]

    def shift(self, n: int = 1) -> "TwoSidedPoint":
        if n > len(self.future) - 1:
            raise IndexError("future window too short to shift")
        return TwoSidedPoint(self.past + self.future[:n], self.future[n:])

    def admissible(self, sft: SftSystem) -> bool:
        return sft.admissible(self.past + self.future)


def holonomy_bracket(x: TwoSidedPoint, y: TwoSidedPoint) -> TwoSidedPoint:
    """``[x, y]``: past of ``x`` joined to future of ``y`` (same seam symbol)."""
    if x.seam != y.seam:
        raise InputError(f"points lie in different charts (seam {x.seam} vs {y.seam})")
    return TwoSidedPoint(x.past, y.future)


def periodic_point(word: Sequence[int], past_len: int, future_len: int) -> TwoSidedPoint:
    w = tuple(word)
    p = len(w)
    fut = tuple(w[i % p] for i in range(future_len))
    pst = tuple(w[i % p] for i in range(-past_len, 0))
    return TwoSidedPoint(pst, fut)


def smallest_cycle(sft: SftSystem, symbol: int) -> tuple[int, ...]:
    """Lexicographically smallest shortest cycle word starting at ``symbol``."""
    for length in range(1, sft.k + 1):
        for w in sft.words(length, first=symbol):
            if sft.matrix[w[-1], symbol]:
                return w
    raise InputError(f"no cycle through symbol {symbol}")


def reference_past(sft: SftSystem, symbol: int, length: int) -> tuple[int, ...]:
    """Eventually periodic admissible past ending just before ``symbol``."""
    c = smallest_cycle(sft, symbol)
    p = len(c)
    return tuple(c[i % p] for i in range(-length, 0))


# cocycle projection


@dataclass(frozen=True)
class Potential:
    """Function on two-sided points with declared Hoelder data ``var_n <= constant * theta**n``.

    ``past_window`` and ``future_window`` bound the coordinates read by ``func``.
    """

    func: Callable[[TwoSidedPoint], float]
    theta: float
    constant: float
    past_window: int
    future_window: int

    def __call__(self, x: TwoSidedPoint) -> float:
        return float(self.func(x))


@dataclass
class ProjectedCocycle:
    sft: SftSystem
    psi: Potential
    depth: int
    tail_bound: float

    def _star(self, y: TwoSidedPoint) -> TwoSidedPoint:
        need = self.depth + self.psi.past_window + 1
        return TwoSidedPoint(reference_past(self.sft, y.seam, need), y.future)

    def required_future(self) -> int:
        return self.depth + self.psi.future_window + 2

    def phi(self, y: TwoSidedPoint) -> float:
        """Transfer function ``sum_{n<=depth} psi(s^n y) - psi(s^n [y, x_B])``."""
        if len(y.future) < self.depth + self.psi.future_window + 1:
            raise InputError("future window too short for the projection depth")
        ystar = self._star(y)
        total = 0.0
        a, b = y, ystar
        for n in range(self.depth + 1):
            total += self.psi(a) - self.psi(b)
            if n < self.depth:
                a, b = a.shift(), b.shift()
        return total

    def psi_plus(self, y: TwoSidedPoint) -> float:
        return self.psi(y) - self.phi(y) + self.phi(y.shift())

    def birkhoff(self, func: Callable[[TwoSidedPoint], float], word: Sequence[int]) -> float:
        p = len(word)
        x = periodic_point(word, self.psi.past_window + 2 * p + 2,
                           self.required_future() + 2 * p + 2)
        total = 0.0
        for _ in range(p):
            total += func(x)
            x = x.shift()
        return total


class HolderViolation(InputError):
    pass


def spot_check_holder(sft: SftSystem, psi: Potential, *, trials: int = 200, max_n: int = 8,
                      seed: int = 0) -> None:
    """Random pairs agreeing on ``[-n, n]`` must differ by at most ``constant * theta**n``."""
    rng = np.random.default_rng(seed)
    span = max(psi.past_window, psi.future_window, max_n) + 2
    for _ in range(trials):
        n = int(rng.integers(0, max_n + 1))
        core = random_word(sft, 2 * n + 1, rng)
        x = _extend(sft, core, n, span, rng)
        y = _extend(sft, core, n, span, rng)
        diff = abs(psi(x) - psi(y))
        if diff > psi.constant * psi.theta ** n + 1e-12:
            raise HolderViolation(f"declared Hoelder data violated on window [-{n}, {n}] "
                                  f"around {core}: |dpsi| = {diff}")


def random_word(sft: SftSystem, n: int, rng, first: int | None = None) -> tuple[int, ...]:
    w = [int(rng.integers(sft.k)) if first is None else first]
    while len(w) < n:
        nxt = np.flatnonzero(sft.matrix[w[-1]])
        w.append(int(rng.choice(nxt)))
    return tuple(w)


def _random_left(sft: SftSystem, before: int, n: int, rng) -> tuple[int, ...]:
    out = [before]
    for _ in range(n):
        prev = np.flatnonzero(sft.matrix[:, out[-1]])
        out.append(int(rng.choice(prev)))
    return tuple(out[1:][::-1])


def _extend(sft, core, center, span, rng) -> TwoSidedPoint:
    left = _random_left(sft, core[0], span, rng)
    right = random_word(sft, span + 1, rng, first=core[-1])[1:]
    seq = left + core + right
    zero = len(left) + center
    return TwoSidedPoint(seq[:zero], seq[zero:])


def project_cocycle(sft: SftSystem, psi: Potential, depth: int, tol: float = 1e-8,
                    check: bool = True) -> ProjectedCocycle:
    """Sinai-type projection of ``psi`` onto a cohomologous function of the future.

    ``psi_plus = psi - phi + phi o shift`` with ``phi`` the transfer function
    against the reference pasts of :func:`reference_past`.
    """
    if not 0 < psi.theta < 1:
        raise InputError("theta must lie in (0, 1)")
    tail = psi.constant * psi.theta ** depth / (1 - psi.theta)
    if tail >= tol:
        need = math.ceil(math.log(tol * (1 - psi.theta) / psi.constant) / math.log(psi.theta))
        raise InputError(f"depth {depth} too small for theta={psi.theta}: tail bound {tail} "
                         f">= {tol}; need depth >= {need}")
    if check:
        spot_check_holder(sft, psi)
    return ProjectedCocycle(sft, psi, depth, tail)


@dataclass
class LivsicReport:
    max_deviation: float
    orbits: int
    certificate_max: float
    certificate_bound: float
    passed: bool
    per_period: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"max_deviation": self.max_deviation, "orbits": self.orbits,
                "certificate_max": self.certificate_max,
                "certificate_bound": self.certificate_bound, "pass": self.passed,
                "per_period": self.per_period}


def livsic_check(proj: ProjectedCocycle, max_period: int = 6, pairs: int = 100,
                 tol: float = 1e-6, seed: int = 0) -> LivsicReport:
    """Periodic-orbit agreement of ``psi`` and ``psi_plus`` plus the future-dependence certificate."""
    sft = proj.sft
    worst = 0.0
    count = 0
    per = {}
    for p in range(1, max_period + 1):
        wp = 0.0
        for w in sft.periodic_words(p):
            d = abs(proj.birkhoff(proj.psi, w) - proj.birkhoff(proj.psi_plus, w))
            wp = max(wp, d)
            count += 1
        per[p] = wp
        worst = max(worst, wp)
    rng = np.random.default_rng(seed)
    cert = 0.0
    flen = proj.required_future() + 4
    plen = proj.psi.past_window + 4
    for _ in range(pairs):
        fut = random_word(sft, flen, rng)
        x = TwoSidedPoint(_random_left(sft, fut[0], plen, rng), fut)
        y = TwoSidedPoint(_random_left(sft, fut[0], plen, rng), fut)
        cert = max(cert, abs(proj.psi_plus(x) - proj.psi_plus(y)))
    bound = 2 * proj.tail_bound
    return LivsicReport(worst, count, cert, bound, worst <= tol and cert <= bound, per)


def cylinder_measure_atoms(sft: SftSystem, length: int):
    """Conformal measure on all admissible words of ``length`` as an atomic measure."""
    from hypcones.conformal import AtomicMeasure

    words = sft.words(length)
    w = np.array([conformal_cylinder_measure(sft, x) for x in words])
    return AtomicMeasure(w, words=words, provenance="parry_conformal")


def prepend_branch_map(sft: SftSystem, max_len: int) -> list[tuple[tuple, tuple, float]]:
    """Pairs ``([w], [aw], 1)`` for every admissible ``aw`` of length ``<= max_len``."""
    out = []
    for n in range(1, max_len):
        for w in sft.words(n):
            for a in range(sft.k):
                if sft.matrix[a, w[0]]:
                    out.append((w, (a,) + w, 1.0))
    return out


def basepoint_comparability(sft: SftSystem, n_max: int = 12) -> float:
    """Largest ratio between annulus counts of cones rooted at different symbols."""
    series = []
    for s in range(sft.k):
        counts, _ = SymbolicCone(sft.matrix, root_symbol=s)._level_sums(np.zeros(1), n_max)
        series.append(np.array(counts[: n_max + 1], dtype=float))
    arr = np.stack(series)
    return float((arr.max(axis=0) / arr.min(axis=0)).max())


def all_words_upto(sft: SftSystem, n: int):
    return itertools.chain.from_iterable(sft.words(i) for i in range(1, n + 1))


def local_potential(terms: Sequence[Mapping], theta: float = 0.5) -> Potential:
    """Locally constant potential from indicator terms.

    Each term is ``{"kind": "symbol", "position": i, "symbol": a, "coefficient": c}``
    (``c * [x_i = a]``) or ``{"kind": "equal", "positions": [i, j], "coefficient": c}``
    (``c * [x_i = x_j]``). Such a function varies only on windows narrower than
    its support, so ``var_n <= 2 sum|c|`` below the support radius and 0 beyond;
    the declared constant is ``2 sum|c| / theta**radius``.
    """
    if not 0 < theta < 1:
        raise InputError("theta must lie in (0, 1)")
    parsed = []
    for t in terms:
        kind = t.get("kind")
        c = float(t.get("coefficient", 1.0))
        if kind == "symbol":
            pos = (int(t["position"]),)
            parsed.append((kind, pos, int(t["symbol"]), c))
        elif kind == "equal":
            pos = tuple(int(p) for p in t["positions"])
            if len(pos) != 2:
                raise InputError("an 'equal' term needs exactly two positions")
            parsed.append((kind, pos, None, c))
        else:
            raise InputError(f"unknown potential term kind {kind!r}")
    if not parsed:
        raise InputError("potential needs at least one term")
    positions = [p for _, pos, _, _ in parsed for p in pos]
    past = max(0, -min(positions))
    future = max(0, max(positions)) + 1
    radius = max(past, future)
    total = sum(abs(c) for *_, c in parsed)

    def func(x: TwoSidedPoint) -> float:
        out = 0.0
        for kind, pos, sym, c in parsed:
            if kind == "symbol":
                out += c * (x[pos[0]] == sym)
            else:
                out += c * (x[pos[0]] == x[pos[1]])
        return out

    return Potential(func, theta, 2 * total / theta ** radius, past, future)
