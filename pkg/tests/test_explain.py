import numpy as np
import pytest

from presage.dataset import Instance
from presage.explain import (
    METHOD_IPCA,
    METHOD_MEAN,
    NeighborConfig,
    Neighborhood,
    evaluate_fidelity,
    evaluate_truthfulness,
    explain_ipca,
    explain_mean,
    explanation_to_json,
    generate_neighbors,
    surrogate_predict,
)
from presage.mathcore import Rng

J, N = 3, 6


def center_instance(seed=0):
    rng = np.random.default_rng(seed)
    return Instance(rng.normal(size=(J, N)), 10.0, "u", N)


def linear_pm(weights, intercept=2.0):
    """Oracle model: exactly linear in every cell."""
    w = np.asarray(weights, dtype=float)

    def predict(values):
        return float((values * w).sum() + intercept)

    return predict


def feature_mean_pm(coeffs, intercept=1.0):
    """Oracle model: linear in the per-feature means."""
    c = np.asarray(coeffs, dtype=float)

    def predict(values):
        return float(c @ values.mean(axis=1) + intercept)

    return predict


class TestGenerateNeighbors:
    def test_degenerate_config_keeps_center(self):
        inst = center_instance()
        hood = generate_neighbors(inst, 12, Rng(0), NeighborConfig(noise_scale=0.0, mask_probability=0.0))
        np.testing.assert_array_equal(hood.neighbors, np.repeat(inst.values[None], 12, axis=0))
        np.testing.assert_array_equal(hood.weights, np.ones(12))
        np.testing.assert_array_equal(hood.distances, np.zeros(12))

    def test_fixed_seed_bit_identical(self):
        inst = center_instance(1)
        a = generate_neighbors(inst, 20, Rng(42))
        b = generate_neighbors(inst, 20, Rng(42))
        np.testing.assert_array_equal(a.neighbors, b.neighbors)
        np.testing.assert_array_equal(a.weights, b.weights)

    def test_mask_probability_one_changes_every_neighbor(self):
        inst = center_instance(2)
        hood = generate_neighbors(inst, 30, Rng(7), NeighborConfig(noise_scale=0.0, mask_probability=1.0))
        for neighbor in hood.neighbors:
            assert not np.array_equal(neighbor, inst.values)

    def test_weights_in_unit_interval_and_kernel_formula(self):
        inst = center_instance(3)
        hood = generate_neighbors(inst, 25, Rng(1))
        assert np.all(hood.weights > 0.0) and np.all(hood.weights <= 1.0)
        np.testing.assert_allclose(
            hood.weights, np.exp(-hood.distances**2 / hood.sigma**2), atol=1e-12
        )

    def test_minimum_count_enforced(self):
        with pytest.raises(ValueError):
            generate_neighbors(center_instance(), 5, Rng(0))


class TestExplainMean:
    def test_planted_coefficient_dominates(self):
        w = np.full((J, N), 0.01)
        w[1, 3] = 2.0  # planted dominant cell
        pm = linear_pm(w)
        hood = generate_neighbors(center_instance(4), 80, Rng(3))
        exp = explain_mean(pm, hood, lam=1e-6)
        target = abs(exp.ts[1, 3])
        others = np.abs(exp.ts).ravel()
        others = np.delete(others, 1 * N + 3)
        assert target > 5.0 * others.max()

    def test_s_is_mean_of_ts(self):
        pm = linear_pm(np.random.default_rng(0).normal(size=(J, N)))
        hood = generate_neighbors(center_instance(5), 40, Rng(9))
        exp = explain_mean(pm, hood)
        np.testing.assert_allclose(exp.s, exp.ts.mean(axis=1), atol=1e-12)

    def test_local_prediction_consistent_with_fidelity(self):
        pm = linear_pm(np.random.default_rng(1).normal(size=(J, N)))
        inst = center_instance(6)
        hood = generate_neighbors(inst, 60, Rng(2))
        exp = explain_mean(pm, hood, lam=1e-9)
        mae, r2 = evaluate_fidelity(pm, exp, hood)
        assert abs(exp.local_prediction - pm(inst.values)) <= max(10 * mae, 1e-6)
        assert r2 > 0.999999

    def test_exactly_linear_pm_is_reproduced(self):
        pm = linear_pm(np.random.default_rng(2).normal(size=(J, N)))
        hood = generate_neighbors(center_instance(7), 60, Rng(4))
        exp = explain_mean(pm, hood, lam=0.0)
        mae, r2 = evaluate_fidelity(pm, exp, hood)
        assert mae <= 1e-6
        assert r2 >= 0.999999

    def test_permutation_invariance(self):
        pm = feature_mean_pm([1.0, -2.0, 0.5])
        inst = center_instance(8)
        hood = generate_neighbors(inst, 50, Rng(5))
        perm = np.random.default_rng(3).permutation(50)
        shuffled = Neighborhood(
            center=hood.center,
            neighbors=hood.neighbors[perm],
            distances=hood.distances[perm],
            weights=hood.weights[perm],
            sigma=hood.sigma,
        )
        a = explain_mean(pm, hood)
        b = explain_mean(pm, shuffled)
        np.testing.assert_allclose(a.ts, b.ts, atol=1e-9)
        assert a.local_prediction == pytest.approx(b.local_prediction, abs=1e-9)


class TestExplainIpca:
    def test_feature_mean_pm_dominates(self):
        pm = feature_mean_pm([0.02, 3.0, -0.02])  # planted dependence on feature 1
        # coherent-shift-only neighborhood keeps every per-feature component
        # aligned with its level, making the dominance structural
        hood = generate_neighbors(
            center_instance(9), 80, Rng(6), NeighborConfig(noise_scale=0.3, mask_probability=0.0)
        )
        exp = explain_ipca(pm, hood, rng=Rng(10))
        assert abs(exp.s[1]) > 5.0 * max(abs(exp.s[0]), abs(exp.s[2]))

    def test_argmax_identifies_planted_feature_both_methods(self):
        for seed in range(25):
            rng = np.random.default_rng(seed)
            coeffs = rng.uniform(-0.3, 0.3, J)
            planted = int(rng.integers(0, J))
            coeffs[planted] = float(rng.choice([-3.0, 3.0]))
            pm = feature_mean_pm(coeffs)
            hood = generate_neighbors(
                center_instance(seed + 400), 60, Rng(seed),
                NeighborConfig(noise_scale=0.3, mask_probability=0.0),
            )
            assert int(np.argmax(np.abs(explain_mean(pm, hood).s))) == planted
            assert int(np.argmax(np.abs(explain_ipca(pm, hood, rng=Rng(seed + 1)).s))) == planted

    def test_loadings_unit_norm_and_ts_identity(self):
        pm = feature_mean_pm([1.0, -1.0, 2.0])
        hood = generate_neighbors(center_instance(10), 40, Rng(7))
        exp = explain_ipca(pm, hood, rng=Rng(11))
        for f in range(J):
            assert np.linalg.norm(exp.loadings[f]) == pytest.approx(1.0, abs=1e-9)
            np.testing.assert_allclose(exp.ts[f], exp.s[f] * exp.loadings[f], atol=1e-12)

    def test_degenerate_feature_flag_and_uniform_loadings(self):
        inst = center_instance(11)
        inst.values[2, :] = 1.5  # constant feature survives mean masking untouched
        hood = generate_neighbors(inst, 30, Rng(8), NeighborConfig(noise_scale=0.0, mask_probability=1.0))
        exp = explain_ipca(feature_mean_pm([1.0, 1.0, 1.0]), hood, rng=Rng(12))
        assert exp.degenerate[2]
        np.testing.assert_allclose(exp.loadings[2], np.full(N, 1 / np.sqrt(N)))

    def test_permutation_invariance(self):
        pm = feature_mean_pm([1.0, -2.0, 0.5])
        hood = generate_neighbors(center_instance(12), 40, Rng(13))
        perm = np.random.default_rng(5).permutation(40)
        shuffled = Neighborhood(
            center=hood.center,
            neighbors=hood.neighbors[perm],
            distances=hood.distances[perm],
            weights=hood.weights[perm],
            sigma=hood.sigma,
        )
        a = explain_ipca(pm, hood, rng=Rng(14))
        b = explain_ipca(pm, shuffled, rng=Rng(14))
        np.testing.assert_allclose(a.s, b.s, atol=1e-9)
        np.testing.assert_allclose(a.ts, b.ts, atol=1e-9)

    def test_reduced_dimension_is_feature_count(self):
        pm = feature_mean_pm([1.0, 0.5, -0.5])
        hood = generate_neighbors(center_instance(13), 25, Rng(15))
        exp = explain_ipca(pm, hood, rng=Rng(16))
        assert exp.s.shape == (J,)
        assert exp.loadings.shape == (J, N)


class TestFidelity:
    def test_constant_pm_flags_r2(self):
        hood = generate_neighbors(center_instance(14), 20, Rng(17))
        exp = explain_mean(lambda v: 7.0, hood)
        mae, r2 = evaluate_fidelity(lambda v: 7.0, exp, hood)
        assert mae == pytest.approx(0.0, abs=1e-9)
        assert np.isnan(r2)

    def test_mae_nonnegative(self):
        pm = feature_mean_pm([1.0, 2.0, 3.0])
        hood = generate_neighbors(center_instance(15), 20, Rng(18))
        mae, _ = evaluate_fidelity(pm, explain_mean(pm, hood), hood)
        assert mae >= 0.0

    def test_surrogate_predict_matches_fit_for_both_methods(self):
        pm = feature_mean_pm([1.0, -1.0, 0.5])
        inst = center_instance(16)
        hood = generate_neighbors(inst, 30, Rng(19))
        for exp in (explain_mean(pm, hood), explain_ipca(pm, hood, rng=Rng(20))):
            assert surrogate_predict(exp, inst.values) == pytest.approx(exp.local_prediction, abs=1e-9)


class TestTruthfulness:
    def test_analytic_linear_pm_scores_one(self):
        coeffs = [2.0, -1.5, 0.75]
        pm = feature_mean_pm(coeffs)
        inst = center_instance(17)
        hood = generate_neighbors(inst, 60, Rng(21))
        exp = explain_mean(pm, hood)
        score, probes = evaluate_truthfulness(pm, inst, exp, delta=0.5)
        assert score == 1.0
        assert probes == 2 * J

    def test_flipped_signs_score_zero(self):
        coeffs = [2.0, -1.5, 0.75]
        pm = feature_mean_pm(coeffs)
        inst = center_instance(18)
        hood = generate_neighbors(inst, 60, Rng(22))
        exp = explain_mean(pm, hood)
        exp.s = -exp.s
        score, _ = evaluate_truthfulness(pm, inst, exp, delta=0.5)
        assert score == 0.0

    def test_score_bounds_and_zero_importances(self):
        pm = feature_mean_pm([1.0, 1.0, 1.0])
        inst = center_instance(19)
        hood = generate_neighbors(inst, 30, Rng(23))
        exp = explain_mean(pm, hood)
        score, _ = evaluate_truthfulness(pm, inst, exp)
        assert 0.0 <= score <= 1.0
        exp.s = np.zeros(J)
        flagged, probes = evaluate_truthfulness(pm, inst, exp)
        assert np.isnan(flagged) and probes == 0


class TestSerialization:
    def test_documented_shape(self):
        pm = feature_mean_pm([1.0, -1.0, 0.5])
        hood = generate_neighbors(center_instance(20), 20, Rng(24))
        mean_json = explanation_to_json(explain_mean(pm, hood))
        assert set(mean_json) == {"method", "s", "ts", "loadings", "local_prediction", "degenerate"}
        assert mean_json["method"] == METHOD_MEAN
        assert mean_json["loadings"] is None
        assert len(mean_json["s"]) == J and len(mean_json["ts"]) == J

        ipca_json = explanation_to_json(explain_ipca(pm, hood, rng=Rng(25)))
        assert ipca_json["method"] == METHOD_IPCA
        assert len(ipca_json["loadings"]) == J
        assert len(ipca_json["degenerate"]) == J
