import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hypcones import DepthError, InputError
from hypcones.graded import full_cone
from hypcones.growth import (AnnulusSeries, DegenerateSeriesError, annulus, annulus_series,
                             check_growth_sandwich, check_submultiplicativity,
                             dual_entropy_check, entropy_estimate, estimate_from_series,
                             partition_sum, pressure_estimate)
from hypcones.rational import build_preimage_cone
from hypcones.sft import SftSystem, SymbolicCone, full_shift, word_cone

LN2 = math.log(2)
LOG_PHI = 0.48121182505960347  # ln((1 + sqrt 5) / 2)


def admissible_count(a, n):
    """Brute-force count of admissible words of length n."""
    k = a.shape[0]
    return sum(all(a[x, y] for x, y in zip(w, w[1:])) for w in itertools.product(range(k), repeat=n))


def perron(a):
    return float(max(abs(np.linalg.eigvals(a))))


def test_annulus_full_binary():
    cone = full_cone(2, 6)
    nodes = annulus(cone, 0, 5, 1)
    assert len(nodes) == 32 and np.all(cone.depth[nodes] == 5)
    assert list(annulus(cone, 0, 0, 1)) == [0]


def test_annulus_golden_depth6(golden):
    cone = word_cone(golden, 7)
    assert admissible_count(golden.matrix, 6) == 21
    assert len(annulus(cone, 0, 6, 1)) == 21


def test_annulus_insufficient_depth():
    cone = full_cone(2, 4)
    with pytest.raises(DepthError, match="insufficient depth"):
        annulus(cone, 0, 5, 1)


def test_annulus_width_below_increment():
    with pytest.raises(InputError):
        annulus(full_cone(2, 4), 0, 3, 0.5)


def test_partition_sum_examples():
    cone = full_cone(2, 6)
    assert partition_sum(cone, 0, None, 5, 1) == 32
    assert partition_sum(cone, 0, {"level": -1.0}, 5, 1) == pytest.approx(32 * math.exp(-5),
                                                                           rel=1e-14)


def test_partition_sum_basilica_derivative(basilica):
    cone = build_preimage_cone(basilica, (1, 4.0))
    width = cone.max_increment(1)
    # oracle: walk the tree by hand, recomputing ln|f'| = ln|2z| from the points
    z = np.asarray(cone.payload)
    acc = np.zeros(len(cone))
    for i in range(1, len(cone)):
        acc[i] = acc[cone.parent[i]] + math.log(abs(2 * z[i]))
    expect = int(np.sum((acc > 4 - width) & (acc <= 4)))
    assert partition_sum(cone, 1, None, 4.0, width) == expect


def test_entropy_full_binary_exact():
    est = entropy_estimate(full_cone(2, 12), 0)
    assert est.beta_hat == pytest.approx(LN2, abs=1e-12)
    assert est.contains(LN2) and est.width < 1e-12


def test_entropy_golden(golden):
    assert perron(golden.matrix) == pytest.approx(1.618033988749895)
    est = entropy_estimate(SymbolicCone(golden.matrix), 0, 18)
    assert est.contains(LOG_PHI)
    assert est.width <= 0.02


def test_entropy_z2_derivative(z2_cone):
    est = entropy_estimate(z2_cone, 1)
    assert est.beta_hat == pytest.approx(1.0, abs=1e-6)


def test_pressure_psi_zero_matches_entropy(golden):
    cone = SymbolicCone(golden.matrix)
    a = pressure_estimate(cone, 0, None, 16)
    b = entropy_estimate(cone, 0, 16)
    assert a.beta_hat == b.beta_hat and a.bracket == b.bracket


@pytest.mark.parametrize("t", [0.3, 1.0])
def test_pressure_tilted_full_shift(t):
    est = pressure_estimate(SymbolicCone(np.ones((2, 2))), 0, {"level": -t}, 18)
    assert est.beta_hat == pytest.approx(LN2 - t, abs=1e-12)


def test_pressure_golden_symbol_weights(golden):
    w = np.array([0.3, -0.4])
    oracle = math.log(perron(golden.matrix * np.exp(w)[None, :]))
    cone = SymbolicCone(golden.matrix, extra={"w": w})
    est = pressure_estimate(cone, 0, {"w": 1.0}, 18)
    assert est.contains(oracle)
    assert est.beta_hat == pytest.approx(oracle, abs=0.01)


def test_sandwich_full_binary():
    cone = full_cone(2, 10)
    est = entropy_estimate(cone, 0)
    rep = check_growth_sandwich(est.series, est)
    assert rep.k1_hat == pytest.approx(1.0) and rep.k2_hat == pytest.approx(1.0)
    assert rep.passed


def test_sandwich_golden(golden):
    cone = SymbolicCone(golden.matrix)
    est = entropy_estimate(cone, 0, 18)
    rep = check_growth_sandwich(est.series, est)
    assert rep.passed and 0 < rep.k1_hat <= rep.k2_hat < math.inf


def test_sandwich_zero_entry_fails():
    ser = AnnulusSeries(1.0, 1.0, 0.0, np.arange(4.0), np.array([1, 0, 2, 4]),
                        np.array([1.0, 0.0, 2.0, 4.0]))
    from hypcones.growth import GrowthEstimate
    rep = check_growth_sandwich(ser, GrowthEstimate(LN2, (0.6, 0.8), 1.0, (0, 3)))
    assert not rep.passed


def test_submultiplicativity():
    full = full_cone(2, 10)
    assert check_submultiplicativity(full, 0, None, [(2, 3), (4, 5), (1, 1)], 1) == 1.0
    assert check_submultiplicativity(full, 0, None, [(0, 0)], 1) == 1.0


def test_submultiplicativity_golden(golden):
    cone = SymbolicCone(golden.matrix)
    pairs = [(a, b) for a in range(1, 9) for b in range(a, 9)]
    c = check_submultiplicativity(cone, 0, None, pairs, 1)
    # oracle: exhaustive pair scan over brute-force counts
    cnt = [admissible_count(golden.matrix, n) if n else 1 for n in range(17)]
    worst = max(max(cnt[a] * cnt[b] / cnt[a + b], cnt[a + b] / (cnt[a] * cnt[b])) for a, b in pairs)
    assert c == pytest.approx(worst, rel=1e-12)


def test_degenerate_series():
    with pytest.raises(DegenerateSeriesError):
        entropy_estimate(full_cone(2, 4), 0)


def test_dual_entropy(golden):
    rep = dual_entropy_check(golden)
    assert rep.overlap and rep.forward.contains(LOG_PHI) and rep.transpose.contains(LOG_PHI)
    rep3 = dual_entropy_check(full_shift(3))
    assert rep3.forward.beta_hat == pytest.approx(math.log(3))
    assert rep3.transpose.beta_hat == pytest.approx(math.log(3))
    flipped = dual_entropy_check(SftSystem(np.array([[0, 1], [1, 1]])))
    assert flipped.overlap and flipped.forward.contains(LOG_PHI)


def test_dual_entropy_reducible_warns():
    with pytest.warns(UserWarning):
        rep = dual_entropy_check(SftSystem(np.array([[1, 1], [0, 1]]), tol=1e-6), n_max=12)
    assert rep.warnings


def test_series_json_keys(golden):
    est = entropy_estimate(SymbolicCone(golden.matrix), 0, 12)
    d = est.to_dict()
    assert {"beta_hat", "bracket_low", "bracket_high", "c2_hat"} <= set(d)
    assert set(d["series"][0]) == {"n", "count", "u"}


# properties


@settings(max_examples=20, deadline=None)
@given(st.integers(2, 4), st.floats(-1.0, 1.0))
def test_tilt_is_linear_on_full_shifts(k, t):
    cone = SymbolicCone(np.ones((k, k)))
    est = pressure_estimate(cone, 0, {"level": t}, 14)
    assert est.beta_hat == pytest.approx(math.log(k) + t, abs=1e-10)
    assert est.width < 1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_psi_zero_sum_is_count(seed):
    rng = np.random.default_rng(seed)
    a = (rng.random((3, 3)) < 0.7).astype(int)
    a[np.arange(3), (np.arange(3) + 1) % 3] = 1
    cone = word_cone(a, 6)
    ser = annulus_series(cone, 0, None, 6)
    assert np.array_equal(ser.u, ser.count.astype(float))


@settings(max_examples=15, deadline=None)
@given(st.floats(0.3, 1.0))
def test_annuli_cover_with_bounded_overlap(width_scale):
    cone = full_cone(3, 5)
    width = 1.0 + width_scale
    ns = np.arange(0, 6)
    covered = np.zeros(len(cone), dtype=int)
    for n in ns:
        covered[annulus(cone, 0, n, width)] += 1
    assert np.all(covered >= 1)
    assert covered.max() <= math.ceil(width / 1.0) + 1
