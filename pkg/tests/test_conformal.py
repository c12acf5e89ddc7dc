import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypcones import DepthError, InputError
from hypcones.conformal import (AtomicMeasure, ahlfors_regularity, boundary_measure,
                                branch_map_from_cone, critical_exponent, frontier_measure,
                                hausdorff_dimension_relation, itinerary_branch_map,
                                poincare_partial, ps_measure, radon_nikodym_check,
                                total_variation)
from hypcones.graded import full_cone
from hypcones.rational import RationalMapSystem, brolin_lyubich, build_preimage_cone
from hypcones.sft import (SymbolicCone, cylinder_measure_atoms, full_shift, prepend_branch_map,
                          word_cone)

LN2 = math.log(2)
LOG_PHI = 0.48121182505960347
PHI = (1 + math.sqrt(5)) / 2


@pytest.fixture(scope="module")
def binary():
    return full_cone(2, 14)


# Poincare series


def test_poincare_binary_converges_to_two(binary):
    vals = [poincare_partial(binary, 0, None, math.log(4), b).partial_sum for b in (4, 8, 14)]
    # oracle: sum_{n<=b} 2^-n
    for b, v in zip((4, 8, 14), vals):
        assert v == pytest.approx(2 - 2.0 ** -b, rel=1e-13)
    ev = poincare_partial(binary, 0, None, math.log(4), 14)
    assert abs(2 - ev.partial_sum) <= ev.tail_bound


def test_poincare_at_beta_diverges(binary):
    ev = poincare_partial(binary, 0, None, LN2, 10)
    assert not ev.converged and ev.tail_bound == math.inf


def test_poincare_z2_derivative(z2_cone):
    budget = 11.5 * LN2
    ev = poincare_partial(z2_cone, 1, None, 1.5, budget)
    # oracle: sum over depths n <= 11 of 2^n 2^{-1.5 n}
    direct = sum(2.0 ** (-0.5 * n) for n in range(12))
    assert ev.partial_sum == pytest.approx(direct, rel=1e-12)
    limit = 1 / (1 - 2 ** -0.5)
    assert 0 <= limit - ev.partial_sum <= ev.tail_bound


def test_poincare_insufficient_depth(binary):
    with pytest.raises(DepthError):
        poincare_partial(binary, 0, None, 1.0, 20)


@settings(max_examples=20, deadline=None)
@given(st.floats(0.8, 2.0), st.integers(6, 10))
def test_poincare_tail_bound_honored(s, budget):
    cone = full_cone(2, 16)
    ev = poincare_partial(cone, 0, None, s, budget)
    full = poincare_partial(cone, 0, None, s, 16).partial_sum
    exact = 1 / (1 - 2 * math.exp(-s))
    assert full - ev.partial_sum <= exact - ev.partial_sum <= ev.tail_bound * (1 + 1e-12)


# critical exponent


def test_critical_exponent_examples(binary, z2_cone, golden):
    assert critical_exponent(binary, 0) == pytest.approx(LN2, abs=1e-5)
    assert critical_exponent(z2_cone, 1) == pytest.approx(1.0, abs=1e-5)
    assert critical_exponent(SymbolicCone(golden.matrix), 0, n_max=18) == \
        pytest.approx(LOG_PHI, abs=1e-3)
    with pytest.raises(InputError):
        critical_exponent(binary, 0, tol=0)


def _cauchy_ratio(cone, j, s, budgets):
    sums = [poincare_partial(cone, j, None, s, b).partial_sum for b in budgets]
    return (sums[-1] - sums[-2]) / (sums[-2] - sums[-3])


@pytest.mark.parametrize("name", ["binary", "z2", "c02"])
def test_critical_exponent_monotone_consistent(name, binary, z2_cone, c02_cone):
    cone, j = {"binary": (binary, 0), "z2": (z2_cone, 1), "c02": (c02_cone, 1)}[name]
    s_star = critical_exponent(cone, j)
    top = cone.complete_through(j)
    # equal windows, shifted off the lattice of exact gradings:
    # increments shrink above s* and grow below it
    budgets = [(k / 3 - 0.01) * top for k in (1, 2, 3)]
    assert _cauchy_ratio(cone, j, s_star + 0.1, budgets) < 1
    assert _cauchy_ratio(cone, j, s_star - 0.1, budgets) > 1


def test_level_exponent_is_ln_d():
    s = RationalMapSystem([1, 0, 0.1])
    cone = build_preimage_cone(s, (0, 14))
    from hypcones.growth import entropy_estimate
    est = entropy_estimate(cone, 0)
    assert est.contains(LN2)
    assert critical_exponent(cone, 0) == pytest.approx(LN2, abs=1e-5)


# Patterson-Sullivan measures


def test_ps_weights_binary(binary):
    s = LN2 + 0.1
    mu = ps_measure(binary, 0, s, beta=LN2)
    depth = binary.depth
    expect = (1 - math.exp(-0.1)) * np.exp(-s * depth)
    assert mu.weights == pytest.approx(expect, rel=1e-13)
    # oracle: geometric sum of 2^n e^{-sn} over the finite cone
    total = (1 - math.exp(-0.1)) * sum(2 ** n * math.exp(-s * n) for n in range(15))
    assert mu.total_mass == pytest.approx(total, rel=1e-12)
    assert mu.mass_of((0,)) == pytest.approx(mu.mass_of((1,)), rel=1e-13)


def test_ps_rejects_small_s(binary):
    with pytest.raises(InputError):
        ps_measure(binary, 0, 0.6, beta=LN2)


def test_ps_z2_level_halves(z2):
    cone = build_preimage_cone(z2, (0, 12))
    mu = ps_measure(cone, 0, LN2 + 0.01, beta=LN2)
    assert mu.mass_of((0,)) == pytest.approx(mu.mass_of((1,)), rel=1e-12)


def test_boundary_binary_depth1(binary):
    bm = boundary_measure(binary, 0, [1.0, 0.8, 0.75], 1, beta=LN2)
    assert np.allclose(bm.normalized, 0.5)


def test_boundary_golden(golden):
    cone = word_cone(golden, 16)
    bm = boundary_measure(cone, 0, [LOG_PHI + 0.1, LOG_PHI + 0.05, LOG_PHI + 0.02], 1,
                          beta=LOG_PHI)
    final = bm.extrapolated()
    assert final[(0,)] == pytest.approx(1 / PHI, abs=0.01)
    assert final[(1,)] == pytest.approx(1 / PHI ** 2, abs=0.01)
    assert all(c >= 0 for c in bm.cauchy)


def test_boundary_basilica_vs_brolin_lyubich(basilica):
    cone = build_preimage_cone(basilica, (0, 14))
    bm = boundary_measure(cone, 0, [LN2 + 0.1, LN2 + 0.05, LN2 + 0.02], 6, beta=LN2)
    bl = brolin_lyubich(basilica, 6, cone)
    assert total_variation(bm.final, bl.cell_masses(6)) <= 0.05
    assert bm.shallow_fraction[-1] < bm.shallow_fraction[0]


def test_boundary_rejects_bad_sequences(binary):
    with pytest.raises(InputError):
        boundary_measure(binary, 0, [0.8, 0.9], 2, beta=LN2)
    with pytest.raises(InputError):
        boundary_measure(binary, 0, [0.9, 0.6], 2, beta=LN2)


def test_boundary_cells_additive(c02_cone):
    raw4 = boundary_measure(c02_cone, 1, [1.2, 1.1], 4, beta=1.0).raw[-1]
    bm5 = boundary_measure(c02_cone, 1, [1.2, 1.1], 5, beta=1.0)
    cells4 = c02_cone.nodes_at_depth(4)
    cells5 = c02_cone.nodes_at_depth(5)
    mu = ps_measure(c02_cone, 1, 1.1, beta=1.0)
    # parent cell (strict descendants) = children cells (strict) + children atoms
    child_sum = np.zeros(cells4.size)
    pos = {c: i for i, c in enumerate(cells4)}
    for i, c in enumerate(cells5):
        p = c02_cone.parent[c]
        child_sum[pos[p]] += bm5.raw[-1][i] + mu.weights[c]
    assert child_sum == pytest.approx(raw4, rel=1e-12)


# Radon-Nikodym


def test_rn_brolin_lyubich(z2, basilica):
    for s in (z2, basilica):
        cone = build_preimage_cone(s, (0, 9))
        rep = radon_nikodym_check(brolin_lyubich(s, 9, cone), branch_map_from_cone(cone, 0, 9), LN2)
        assert rep.max_deviation <= 1e-12 and not rep.excluded


def test_rn_parry_prepend(golden):
    rep = radon_nikodym_check(cylinder_measure_atoms(golden, 9), prepend_branch_map(golden, 9),
                              LOG_PHI)
    assert rep.max_deviation <= 1e-10


def test_rn_zero_cell_excluded():
    m = {(0,): 0.0, (0, 1): 0.0, (1,): 1.0, (1, 0): 0.5}
    rep = radon_nikodym_check(m, [((0,), (0, 1), 1.0), ((1,), (1, 0), LN2)], 1.0)
    assert rep.excluded == [((0,), (0, 1))]
    assert rep.max_deviation == pytest.approx(0.0, abs=1e-15)


def test_rn_not_injective():
    with pytest.raises(InputError):
        radon_nikodym_check({(0,): 1.0, (0, 0): 0.5}, [((0,), (0, 0), 1.0), ((1,), (0, 0), 1.0)],
                            1.0)


def test_rn_itinerary_conformal(c02_cone):
    beta = critical_exponent(c02_cone, 1)
    mu = frontier_measure(c02_cone, 1, beta)
    rep = radon_nikodym_check(mu, itinerary_branch_map(mu, 8), beta)
    assert rep.max_factor <= 1.5


# Ahlfors regularity


def test_ahlfors_z2_uniform(z2):
    mu = brolin_lyubich(z2, 14)
    rep = ahlfors_regularity(mu)
    assert rep.slope == pytest.approx(1.0, abs=0.05)
    assert not rep.degenerate


def test_ahlfors_single_atom():
    mu = AtomicMeasure([1.0], points=[0.3 + 0.1j])
    rep = ahlfors_regularity(mu)
    assert rep.degenerate and rep.slope == pytest.approx(0.0, abs=1e-12)


def test_ahlfors_c02_matches_exponent(c02_cone):
    beta = critical_exponent(c02_cone, 1)
    rep = ahlfors_regularity(frontier_measure(c02_cone, 1, beta))
    assert abs(rep.slope - beta) <= 0.1


def test_ahlfors_radius_floor():
    pts = np.exp(2j * np.pi * np.arange(50) / 50)
    rep = ahlfors_regularity(AtomicMeasure(np.full(50, 0.02), points=pts), centers=pts[:5] + 0.05)
    assert rep.radius_floor > 1e-3


def test_ahlfors_needs_two_decades():
    with pytest.raises(InputError):
        ahlfors_regularity(AtomicMeasure([1.0], points=[0j]), radii=[0.01, 0.05])


# dimension relation


def test_hausdorff_relation():
    assert hausdorff_dimension_relation(LN2, LN2) == 1
    with pytest.raises(InputError):
        hausdorff_dimension_relation(1.0, 0)
    # box-counting oracle: N_n admissible golden words of length n cover at scale 2^-n
    fib = [1, 2]
    for _ in range(60):
        fib.append(fib[-1] + fib[-2])
    box = math.log(fib[-1]) / (len(fib) * LN2)
    assert hausdorff_dimension_relation(LOG_PHI, LN2) == pytest.approx(0.6942, abs=1e-4)
    assert box == pytest.approx(0.6942, abs=0.02)


# atomic measure plumbing


def test_atomic_csv_roundtrip():
    mu = AtomicMeasure([0.25, 0.75], points=[1 + 2j, -0.5j], words=[(0, 1), (1,)],
                       provenance="ps_limit")
    back = AtomicMeasure.from_csv(mu.to_csv())
    assert np.array_equal(back.weights, mu.weights)
    assert np.array_equal(back.points, mu.points) and back.words == mu.words
    assert mu.to_csv().splitlines()[0] == "location_re,location_im,word,weight"
    js = mu.to_json()
    assert js["total_mass"] == 1.0 and js["atoms"][0]["word"] == [0, 1]


def test_atomic_validation():
    with pytest.raises(InputError):
        AtomicMeasure([-1.0], words=[(0,)])
    with pytest.raises(InputError):
        AtomicMeasure([1.0])
    with pytest.raises(InputError):
        AtomicMeasure([1.0], words=[(0,)], provenance="nope")


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 10), min_size=1, max_size=40), st.integers(0, 1000))
def test_atomic_mass_identities(weights, seed):
    rng = np.random.default_rng(seed)
    words = [tuple(rng.integers(0, 2, size=3)) for _ in weights]
    mu = AtomicMeasure(weights, words=words)
    assert mu.total_mass == pytest.approx(sum(weights), rel=1e-12, abs=1e-300)
    table = mu.cylinder_table(3)
    for w, m in table.items():
        if len(w) < 3:
            kids = sum(table.get(w + (b,), 0.0) for b in (0, 1))
            assert kids == pytest.approx(m, rel=1e-12, abs=1e-12)
