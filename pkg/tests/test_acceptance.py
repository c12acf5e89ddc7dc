"""Acceptance criteria, one test each, with a printed pass/fail line."""
import itertools
import json
import math
import time

import numpy as np
import pytest

from hypcones.cli import manifest_fingerprint, run
from hypcones.conformal import (ahlfors_regularity, boundary_measure, branch_map_from_cone,
                                critical_exponent, frontier_measure, itinerary_branch_map,
                                radon_nikodym_check, total_variation)
from hypcones.graded import (LogScaleTable, full_cone, gromov_product, logscale_from_cone,
                             metric_from_logscale, triple_defect)
from hypcones.growth import dual_entropy_check, entropy_estimate, pressure_estimate
from hypcones.rational import (RationalMapSystem, brolin_lyubich, build_preimage_cone,
                               distortion_check, julia_dimension)
from hypcones.sft import (SftSystem, SymbolicCone, all_words_upto, conformal_cylinder_measure,
                          full_shift, golden_mean, livsic_check, local_potential,
                          parry_two_sided, product_bowen, project_cocycle)

LN2 = math.log(2)
LOG_PHI = math.log((1 + math.sqrt(5)) / 2)


@pytest.fixture
def verdict(capsys):
    def report(number, ok, detail):
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number} failed: {detail}"
    return report


def test_c01_full_shift_entropy(verdict):
    details, ok = [], True
    for k in (2, 3):
        t0 = time.perf_counter()
        est = entropy_estimate(SymbolicCone(np.ones((k, k))), 0, 18)
        dt = time.perf_counter() - t0
        good = est.contains(math.log(k)) and est.width <= 0.01 and dt < 10
        ok &= good
        details.append(f"k={k} bracket=[{est.bracket[0]:.6f}, {est.bracket[1]:.6f}] {dt:.2f}s")
    verdict(1, ok, "; ".join(details))


def test_c02_golden_entropy(verdict):
    t0 = time.perf_counter()
    est = entropy_estimate(SymbolicCone(golden_mean().matrix), 0, 18)
    dt = time.perf_counter() - t0
    ok = est.contains(0.481211825) and est.width <= 0.02 and dt < 10
    verdict(2, ok, f"bracket=[{est.bracket[0]:.6f}, {est.bracket[1]:.6f}] {dt:.2f}s")


def test_c03_pressure(verdict):
    details, ok = [], True
    for t in (0.3, 1.0):
        est = pressure_estimate(SymbolicCone(np.ones((2, 2))), 0, {"level": -t}, 18)
        ok &= abs(est.beta_hat - (LN2 - t)) <= 0.02
        details.append(f"t={t} P={est.beta_hat:.6f} oracle={LN2 - t:.6f}")
    verdict(3, ok, "; ".join(details))


def test_c04_dual_entropy(verdict):
    details, ok = [], True
    for a in ([[1, 1], [1, 0]], [[1, 1, 0], [0, 1, 1], [1, 0, 0]]):
        rep = dual_entropy_check(SftSystem(np.array(a)))
        ok &= rep.overlap
        details.append(f"{a}: {rep.forward.beta_hat:.6f} vs {rep.transpose.beta_hat:.6f}")
    verdict(4, ok, "; ".join(details))


def test_c05_conformality(verdict):
    worst = 0.0
    for a in ([[1, 1], [1, 0]], [[1, 1, 0], [0, 1, 1], [1, 0, 0]], np.ones((2, 2))):
        s = SftSystem(np.array(a))
        lam = float(np.max(np.abs(np.linalg.eigvals(s.matrix))))
        for w in all_words_upto(s, 9):
            for b in range(s.k):
                aw = (b,) + tuple(w)
                if s.matrix[b, w[0]]:
                    lhs = conformal_cylinder_measure(s, aw)
                    rhs = conformal_cylinder_measure(s, w) / lam
                    worst = max(worst, abs(lhs - rhs))
    verdict(5, worst <= 1e-10, f"max deviation {worst:.3e}")


def test_c06_product_bowen(verdict):
    worst = 0.0
    for s in (golden_mean(), full_shift(2)):
        for n in range(1, 7):
            for w in s.words(n):
                for cut in range(n):
                    dev = abs(product_bowen(s, w[:cut + 1], w[cut:]) - parry_two_sided(s, w))
                    worst = max(worst, dev)
    verdict(6, worst <= 1e-8, f"max deviation {worst:.3e}")


def test_c07_projection(verdict):
    psi = local_potential([
        {"kind": "symbol", "position": -1, "symbol": 1, "coefficient": 0.7},
        {"kind": "equal", "positions": [-2, 0], "coefficient": 0.2},
    ])
    proj = project_cocycle(full_shift(2), psi, 40)
    rep = livsic_check(proj, max_period=6, tol=1e-6)
    ok = rep.max_deviation <= 1e-6 and rep.certificate_max <= rep.certificate_bound
    verdict(7, ok, f"periodic deviation {rep.max_deviation:.3e} over {rep.orbits} orbits, "
                   f"certificate {rep.certificate_max:.3e} <= {rep.certificate_bound:.3e}")


def test_c08_julia_dimension_z2(verdict):
    t0 = time.perf_counter()
    d = julia_dimension(RationalMapSystem([1, 0, 0]), budget=12 * LN2)
    dt = time.perf_counter() - t0
    verdict(8, 0.98 <= d <= 1.02 and dt < 60, f"dimension {d:.6f} in {dt:.2f}s")


def test_c09_level_entropy(verdict):
    details, ok = [], True
    for c in (-1.0, 0.1):
        cone = build_preimage_cone(RationalMapSystem([1, 0, c]), (0, 14))
        est = entropy_estimate(cone, 0)
        ok &= est.contains(LN2)
        details.append(f"c={c} bracket=[{est.bracket[0]:.6f}, {est.bracket[1]:.6f}]")
    verdict(9, ok, "; ".join(details))


def test_c10_ps_equals_brolin_lyubich(verdict):
    s = RationalMapSystem([1, 0, -1])
    cone = build_preimage_cone(s, (0, 14))
    bm = boundary_measure(cone, 0, [LN2 + 0.1, LN2 + 0.05, LN2 + 0.02], 6, beta=LN2)
    tv = total_variation(bm.extrapolated(), brolin_lyubich(s, 6, cone).cell_masses(6))
    verdict(10, tv <= 0.05, f"total variation {tv:.3e}")


def test_c11_radon_nikodym(verdict):
    devs = []
    for c in (0.0, -1.0, 0.2):
        s = RationalMapSystem([1, 0, c])
        cone = build_preimage_cone(s, (0, 10))
        rep = radon_nikodym_check(brolin_lyubich(s, 10, cone), branch_map_from_cone(cone, 0, 10),
                                  LN2)
        devs.append(rep.max_deviation)
    cone = build_preimage_cone(RationalMapSystem([1, 0, 0.2]), (1, 12 * LN2))
    beta = critical_exponent(cone, 1)
    mu = frontier_measure(cone, 1, beta)
    rep = radon_nikodym_check(mu, itinerary_branch_map(mu, 8), beta)
    ok = max(devs) <= 1e-12 and rep.max_factor <= 1.5
    verdict(11, ok, f"pushforward deviation {max(devs):.3e}; z^2+0.2 beta={beta:.5f} "
                    f"factor {rep.max_factor:.4f} over {len(rep.table)} branches")


def test_c12_ahlfors(verdict):
    z2 = ahlfors_regularity(brolin_lyubich(RationalMapSystem([1, 0, 0]), 14))
    cone = build_preimage_cone(RationalMapSystem([1, 0, 0.2]), (1, 12 * LN2))
    beta = critical_exponent(cone, 1)
    c02 = ahlfors_regularity(frontier_measure(cone, 1, beta))
    ok = abs(z2.slope - 1) <= 0.1 and abs(c02.slope - beta) <= 0.1
    verdict(12, ok, f"z^2 slope {z2.slope:.4f}; z^2+0.2 slope {c02.slope:.4f} vs "
                    f"exponent {beta:.4f}")


def test_c13_distortion(verdict):
    z2 = RationalMapSystem([1, 0, 0])
    cone = build_preimage_cone(z2, (0, 8))
    cz = max(distortion_check(z2, cone, 8, eps=e).constant for e in (1e-4, 1e-5))
    c02 = RationalMapSystem([1, 0, 0.2])
    cone = build_preimage_cone(c02, (0, 12))
    c8 = distortion_check(c02, cone, 8).constant
    c12 = distortion_check(c02, cone, 12).constant
    ok = cz <= 1.01 and abs(c12 - c8) <= 0.05 * c8
    verdict(13, ok, f"z^2 c={cz:.6f}; z^2+0.2 c8={c8:.5f} c12={c12:.5f}")


def _chain_oracle(w):
    n = w.shape[0]
    best = w.copy()
    for x, y in itertools.permutations(range(n), 2):
        others = [i for i in range(n) if i not in (x, y)]
        for k in range(1, len(others) + 1):
            for mid in itertools.permutations(others, k):
                path = (x,) + mid + (y,)
                best[x, y] = min(best[x, y], sum(w[a, b] for a, b in zip(path, path[1:])))
    np.fill_diagonal(best, 0.0)
    return best


def test_c14_metric_synthesis(verdict):
    cone = full_cone(2, 6)
    table = logscale_from_cone(cone, 0, cone.nodes_at_depth(6)[::4])
    m = metric_from_logscale(table, 0.7)
    off = ~np.eye(len(table), dtype=bool)
    tree_dev = float(np.max(np.abs(m.distances[off] - np.exp(-0.7 * table.values[off]))))
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        leaves = rng.choice(full_cone(2, 4).nodes_at_depth(4), 8, replace=False)
        base = full_cone(2, 4)
        v = np.full((8, 8), math.inf)
        for p, q in itertools.combinations(range(8), 2):
            v[p, q] = v[q, p] = gromov_product(base, 0, leaves[p], leaves[q]) + \
                rng.uniform(0, 0.2)
        t = LogScaleTable(tuple(range(8)), v, triple_defect(v))
        alpha = min(0.5, math.log(2) / 4 / max(t.delta, 1e-12))
        got = metric_from_logscale(t, alpha).distances
        want = _chain_oracle(np.where(np.isinf(v), 0.0, np.exp(-alpha * v)))
        worst = max(worst, float(np.max(np.abs(got - want))))
    ok = tree_dev == 0.0 and worst <= 1e-15
    verdict(14, ok, f"tree deviation {tree_dev:.1e}; chain oracle deviation {worst:.1e}")


def test_c15_reproducibility(verdict, tmp_path):
    cfgs = {
        "golden.toml": "[system]\nmatrix = [[1, 1], [1, 0]]\n[task]\nbudget = 18\n",
        "z2.toml": "[system]\nnumerator = [1, 0, 0]\n[task]\ncocycle = 'derivative'\n",
    }
    same = []
    for name, text in cfgs.items():
        p = tmp_path / name
        p.write_text(text)
        for cmd in ("entropy", "dimension"):
            _, m1 = run(cmd, p, tmp_path / f"{name}-{cmd}-1", threads=1)
            _, m8 = run(cmd, p, tmp_path / f"{name}-{cmd}-8", threads=8)
            same.append(m1["status"]["exit_code"] == 0 and
                        manifest_fingerprint(m1) == manifest_fingerprint(m8))
    verdict(15, all(same), f"{sum(same)}/{len(same)} command manifests identical at 1 and 8 threads")
