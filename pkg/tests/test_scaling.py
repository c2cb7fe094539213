import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from aligntax.conflict import effective_angle_multi
from aligntax.errors import (
    EmptyPairSet,
    InsufficientSeries,
    NearOrthogonalityViolated,
    NotSuperposed,
    SpecInfeasible,
)
from aligntax.geometry import orthogonal_residual
from aligntax.scaling import (
    AnglePackingSpec,
    PackingSpec,
    Regime,
    SeriesPoint,
    angle_convergence,
    build_angle_packing,
    build_packing,
    coherence,
    expected_random_projection,
    fit_inverse_d,
    irreducible_tax,
    monte_carlo_tax,
    regime_classify,
    residual_bound,
    sample_uniform_direction,
    scaling_series,
    trial_rng,
    welch_bound,
)


# sample_uniform_direction


def test_uniform_direction_d1_is_a_sign():
    rng = trial_rng(0)
    vals = [float(sample_uniform_direction(1, rng).coords[0]) for _ in range(2000)]
    assert set(vals) == {1.0, -1.0}
    assert abs(np.mean(vals)) < 4 / math.sqrt(2000)


def test_uniform_direction_is_deterministic():
    a = sample_uniform_direction(8, trial_rng(42)).coords
    b = sample_uniform_direction(8, trial_rng(42)).coords
    assert np.array_equal(a, b)


def test_uniform_direction_mean_square_coordinate():
    rng = trial_rng(5)
    x = np.array([sample_uniform_direction(64, rng).coords[0] ** 2 for _ in range(100_000)])
    se = x.std(ddof=1) / math.sqrt(x.size)
    assert abs(x.mean() - 1 / 64) <= 3 * se


def test_uniform_direction_is_isotropic():
    rng = trial_rng(11)
    x = np.vstack([sample_uniform_direction(3, rng).coords for _ in range(20_000)])
    # second moment matrix of a uniform unit vector is I/d
    assert np.allclose(x.T @ x / x.shape[0], np.eye(3) / 3, atol=0.01)
    assert np.allclose(x.mean(axis=0), 0, atol=0.02)


def test_streams_differ_by_key():
    a = trial_rng(1, 0).standard_normal(4)
    b = trial_rng(1, 1).standard_normal(4)
    assert not np.array_equal(a, b)


@pytest.mark.parametrize("seed", [-1, 2**64, 1.5])
def test_bad_seed(seed):
    with pytest.raises(ValueError):
        trial_rng(seed)


# PackingSpec / build_packing


def test_spec_rejects_overlaps_outside_ball():
    with pytest.raises(SpecInfeasible):
        PackingSpec(8, (0.8, 0.6))
    with pytest.raises(SpecInfeasible):
        PackingSpec(8, (1.0,))


def test_spec_needs_room_for_intrinsics():
    with pytest.raises(SpecInfeasible):
        PackingSpec(2, (0.1, 0.1))


def test_superposition_flag():
    assert not PackingSpec(8, (0.1,), 7).superposed
    assert PackingSpec(8, (0.1,), 8).superposed


def test_single_overlap_is_exact():
    ens = build_packing(PackingSpec(16, (0.5,), 0), seed=3)
    assert ens.realized_overlaps[0] == pytest.approx(0.5, abs=1e-12)
    assert ens.tax() == pytest.approx(0.25, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(
    st.lists(st.floats(-0.5, 0.5), min_size=1, max_size=4),
    st.integers(0, 6),
    st.integers(0, 2**32),
)
def test_intrinsic_overlaps_exact(gammas, m_prime, seed):
    spec = PackingSpec(12, tuple(gammas), m_prime)
    ens = build_packing(spec, seed)
    np.testing.assert_allclose(ens.realized_overlaps[: len(gammas)], gammas, atol=1e-10)
    assert abs(np.linalg.norm(ens.safety.coords) - 1) < 1e-12
    caps = ens.capabilities.matrix
    assert np.allclose(np.linalg.norm(caps, axis=0), 1, atol=1e-12)
    # intrinsic capabilities are mutually orthogonal
    k = len(gammas)
    assert np.allclose(caps[:, :k].T @ caps[:, :k], np.eye(k), atol=1e-12)


def test_build_packing_reproducible():
    spec = PackingSpec(32, (0.3, -0.2), 5)
    a, b = build_packing(spec, 99, (1, 2)), build_packing(spec, 99, (1, 2))
    assert np.array_equal(a.safety.coords, b.safety.coords)
    assert np.array_equal(a.capabilities.matrix, b.capabilities.matrix)
    assert np.array_equal(a.realized_overlaps, b.realized_overlaps)
    c = build_packing(spec, 100, (1, 2))
    assert not np.array_equal(a.safety.coords, c.safety.coords)


def test_incidental_overlap_mean_square():
    spec = PackingSpec(4, (), 1)
    sq = np.array([build_packing(spec, 8, (t,)).realized_overlaps[0] ** 2 for t in range(20_000)])
    se = sq.std(ddof=1) / math.sqrt(sq.size)
    assert abs(sq.mean() - 0.25) <= 3 * se


def test_safety_marginally_uniform():
    # v must stay uniform even with prescribed overlaps
    spec = PackingSpec(3, (0.6,), 0)
    x = np.vstack([build_packing(spec, 2, (t,)).safety.coords for t in range(20_000)])
    assert np.allclose(x.T @ x / x.shape[0], np.eye(3) / 3, atol=0.01)


def test_joint_overlaps_give_irreducible_tax():
    # two intrinsic capabilities: tau equals sum of squares, not less
    ens = build_packing(PackingSpec(64, (0.5, 0.5), 0), 0)
    assert ens.tax() == pytest.approx(0.5, abs=1e-12)


def test_no_capabilities():
    ens = build_packing(PackingSpec(8, (), 0), 0)
    assert ens.capabilities is None
    assert ens.tax() == 0.0


def test_unrelated_pairs_exclude_intrinsic():
    ens = build_packing(PackingSpec(8, (0.2, 0.1), 1), 0)
    pairs = ens.unrelated_pairs()
    assert (0, 1) not in pairs and (0, 2) not in pairs
    assert (0, 3) in pairs and (1, 2) in pairs and len(pairs) == 4


# coherence / Welch


def test_coherence_orthonormal():
    assert coherence(np.eye(5)) == 0.0


def test_coherence_hand_example():
    f = [np.array([1.0, 0.0]), np.array([1.0, 1.0]) / math.sqrt(2)]
    assert coherence(f, [(0, 1)]) == pytest.approx(1 / math.sqrt(2), abs=1e-15)


def test_coherence_only_declared_pairs():
    f = [np.array([1.0, 0.0]), np.array([1.0, 0.0]), np.array([0.0, 1.0])]
    assert coherence(f, [(0, 2)]) == 0.0
    assert coherence(f) == 1.0


def test_coherence_empty_pairs():
    with pytest.raises(EmptyPairSet):
        coherence(np.eye(3), [])


def test_coherence_random_packing_sanity_ceiling():
    rng = trial_rng(17)
    x = np.vstack([sample_uniform_direction(256, rng).coords for _ in range(512)])
    assert coherence(x) < 5 * math.sqrt(math.log(512) / 256)


def test_welch_examples():
    assert welch_bound(16, 8) == pytest.approx(math.sqrt(1 / 15), abs=1e-15)
    assert welch_bound(2, 1) == pytest.approx(1.0)
    for d in (2, 5, 40):
        assert welch_bound(d + 1, d) == pytest.approx(1 / d, rel=1e-14)
    assert welch_bound(8, 8) == 0.0
    with pytest.raises(NotSuperposed):
        welch_bound(4, 8)


def test_simplex_attains_welch():
    # the regular simplex (d+1 vectors in R^d) is an equiangular tight frame
    d = 6
    e = np.eye(d + 1) - 1.0 / (d + 1)
    q, _ = np.linalg.qr(e.T)
    x = e @ q[:, :d]
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    assert coherence(x) == pytest.approx(welch_bound(d + 1, d), abs=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 12), st.integers(1, 20), st.integers(0, 2**32))
def test_coherence_obeys_welch(d, extra, seed):
    rng = trial_rng(seed)
    n = d + extra
    x = np.vstack([sample_uniform_direction(d, rng).coords for _ in range(n)])
    assert coherence(x) >= welch_bound(n, d) - 1e-12


# irreducible tax and residual bound


def test_irreducible_tax_examples():
    assert irreducible_tax(PackingSpec(4)) == 0
    assert irreducible_tax(PackingSpec(4, (0.3, 0.4))) == pytest.approx(0.25, abs=1e-15)
    assert irreducible_tax(PackingSpec(4, (1 - 1e-9,))) == pytest.approx(1.0, abs=1e-8)


def test_residual_bound_examples():
    assert residual_bound(0.3, 5, 3, 0.0, 0.5, 2) == 0.0
    assert residual_bound(0.25, 12, 10, 0.05, 0.4, 2) == pytest.approx(0.65, abs=1e-12)
    with pytest.raises(NearOrthogonalityViolated):
        residual_bound(0.25, 20, 18, 0.05, 0.4, 2)


def test_residual_bound_dominates_realized_residual():
    checked = 0
    for spec in (PackingSpec(512, (0.5, 0.3), 4), PackingSpec(1024, (0.6,), 6), PackingSpec(256, (), 3)):
        for t in range(40):
            ens = build_packing(spec, 5, (t,))
            mu = ens.coherence()
            if spec.m * mu >= 1:
                continue
            bound = residual_bound(irreducible_tax(spec), spec.m, spec.m_prime, mu, spec.gamma_bar, spec.i_count)
            assert abs(ens.tax() - irreducible_tax(spec)) <= bound + 1e-12
            checked += 1
    assert checked >= 100


# Monte Carlo


def test_monte_carlo_incidental_mean():
    est = monte_carlo_tax(PackingSpec(100, (), 10), 10_000, 3)
    assert abs(est.mean - 0.1) <= 3 * est.std_error


def test_monte_carlo_single_overlap_is_deterministic():
    est = monte_carlo_tax(PackingSpec(40, (0.5,), 0), 50, 1)
    assert est.mean == pytest.approx(0.25, abs=1e-10)
    assert est.std_error < 1e-10


def test_monte_carlo_no_capabilities():
    assert monte_carlo_tax(PackingSpec(10, (), 0), 20, 1).mean == 0.0


def test_monte_carlo_independent_of_workers():
    spec = PackingSpec(48, (0.2,), 6)
    a = monte_carlo_tax(spec, 301, 12, workers=1)
    b = monte_carlo_tax(spec, 301, 12, workers=8)
    c = monte_carlo_tax(spec, 301, 12, workers=3)
    assert a == b == c


def test_monte_carlo_within_unit_interval():
    for spec in (PackingSpec(4, (0.9,), 10), PackingSpec(3, (), 5)):
        est = monte_carlo_tax(spec, 200, 0)
        assert 0 <= est.mean <= 1


def test_superposed_tax_is_one():
    # m' >= d incidental capabilities span the whole space
    est = monte_carlo_tax(PackingSpec(4, (), 6), 30, 0)
    assert est.mean == pytest.approx(1.0, abs=1e-10)


# regime classification


def test_regime_fixed_synthetic():
    ds = [100, 400, 1600]
    v = regime_classify([(d, 0.2 + 10 / d) for d in ds], 0.2)
    assert v.regime is Regime.FIXED
    assert v.slope == pytest.approx(10, rel=1e-12)


def test_regime_linear_plateau():
    v = regime_classify([(d, 0.5) for d in (100, 400, 1600)], 0.2)
    assert v.regime is Regime.LINEAR


def test_regime_sublinear():
    ds = [64, 256, 1024, 4096]
    v = regime_classify([(d, 0.1 + 1 / math.sqrt(d)) for d in ds], 0.1)
    assert v.regime is Regime.SUBLINEAR
    assert v.loglog_exponent == pytest.approx(0.5, abs=1e-9)


def test_regime_undetermined_when_growing():
    v = regime_classify([(100, 0.2), (200, 0.1), (400, 0.3)], 0.0)
    assert v.regime is Regime.UNDETERMINED


def test_regime_zero_excess_is_fixed():
    v = regime_classify([(10, 0.3), (20, 0.3), (40, 0.3)], 0.3)
    assert v.regime is Regime.FIXED and v.slope == 0.0


def test_regime_insufficient():
    with pytest.raises(InsufficientSeries):
        regime_classify([(64, 0.1)], 0.0)
    with pytest.raises(InsufficientSeries):
        regime_classify([(64, 0.1), (64, 0.1), (128, 0.05)], 0.0)


def test_fit_inverse_d_exact():
    pts = [SeriesPoint(d, 0.3 + 7 / d, 0.0, 1) for d in (10, 20, 80)]
    fit = fit_inverse_d(pts)
    assert fit.intercept == pytest.approx(0.3, abs=1e-12)
    assert fit.slope == pytest.approx(7, abs=1e-10)
    assert fit.intercept_se == 0.0


def test_scaling_series_fixed_regime():
    series = scaling_series(PackingSpec(8, (0.4,), 6), [32, 128, 512], 1500, seed=4)
    assert series.tau0 == pytest.approx(0.16)
    assert series.regime is Regime.FIXED
    for p in series.points:
        assert 0 <= p.mean_tax <= 1 and p.std_error >= 0
    assert series.fit.intercept == pytest.approx(0.16, abs=4 * series.fit.intercept_se + 1e-3)


def test_scaling_series_linear_regime():
    # m' grows with d: the excess plateaus
    pts = []
    for d in (32, 128, 512):
        est = monte_carlo_tax(PackingSpec(d, (), d // 4), 60, 9)
        pts.append((d, est.mean))
    assert regime_classify(pts, 0.0).regime is Regime.LINEAR


# angle convergence


def test_theta0_hand_value():
    spec = AnglePackingSpec(0.5, (0.3,), (0.3,))
    assert spec.cos_theta0 == pytest.approx(0.41 / 0.91, abs=1e-15)
    assert spec.theta0 == pytest.approx(1.103416, abs=1e-6)
    assert math.cos(spec.theta0) == pytest.approx(0.45055, abs=1e-5)


def test_angle_without_incidentals_is_exact():
    spec = AnglePackingSpec(0.2, (0.3, -0.1), (0.4, 0.2))
    pts, theta0 = angle_convergence(spec, [8, 32, 128], 5, 1)
    for p in pts:
        assert p.mean_theta == pytest.approx(theta0, abs=1e-9)


def test_angle_packing_realizes_rho_and_overlaps():
    spec = AnglePackingSpec(-0.3, (0.3, 0.2), (-0.1, 0.5), m_prime=3)
    pair, caps = build_angle_packing(spec, 20, 0, (1,))
    assert pair.rho == pytest.approx(-0.3, abs=1e-12)
    np.testing.assert_allclose(caps.inner_products(pair.v1)[:2], spec.gamma1, atol=1e-12)
    np.testing.assert_allclose(caps.inner_products(pair.v2)[:2], spec.gamma2, atol=1e-12)


def test_angle_matches_direct_projection():
    spec = AnglePackingSpec(0.4, (0.2,), (0.5,), m_prime=4)
    pair, caps = build_angle_packing(spec, 16, 3, (0,))
    p1, p2 = orthogonal_residual(caps, pair.v1), orthogonal_residual(caps, pair.v2)
    direct = math.acos(p1 @ p2 / (np.linalg.norm(p1) * np.linalg.norm(p2)))
    assert effective_angle_multi(pair, caps).theta == pytest.approx(direct, abs=1e-10)


def test_angle_tends_to_right_angle():
    spec = AnglePackingSpec(0.0, (), (), m_prime=8)
    pts, theta0 = angle_convergence(spec, [16, 64, 256, 1024], 400, 2)
    assert theta0 == pytest.approx(math.pi / 2)
    # spread of theta around pi/2 shrinks like 1/sqrt(d)
    errs = [p.std_error for p in pts]
    assert all(a > b for a, b in zip(errs, errs[1:]))
    assert abs(pts[-1].mean_theta - math.pi / 2) < 4 * pts[-1].std_error + 1e-3


def test_angle_spec_inconsistent():
    with pytest.raises(SpecInfeasible):
        AnglePackingSpec(0.99, (0.9,), (-0.9,))
    with pytest.raises(SpecInfeasible):
        AnglePackingSpec(0.1, (0.1,), ())


# random projections


def test_projection_lora_value():
    est = expected_random_projection(8, 4096, 1, 0)
    assert est.analytic == pytest.approx(8 / 4096)
    assert round(100 * est.analytic, 1) == 0.2


def test_projection_full_space():
    est = expected_random_projection(5, 5, 20, 0)
    assert est.analytic == 1.0
    assert est.mean == pytest.approx(1.0, abs=1e-12)


def test_projection_monte_carlo():
    est = expected_random_projection(1, 4, 100_000, 6)
    assert abs(est.mean - 0.25) <= 3 * est.std_error


def test_projection_bad_rank():
    with pytest.raises(ValueError):
        expected_random_projection(0, 4, 10, 0)
    with pytest.raises(ValueError):
        expected_random_projection(5, 4, 10, 0)
