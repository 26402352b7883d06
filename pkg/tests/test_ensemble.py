"""Online model combination: BMA recursion, stacking, mixture moments."""

import numpy as np
import pytest

from seqgp import ensemble as ens
from seqgp.errors import ConfigurationError, DataError


def batch_bma_oracle(loglik_matrix):
    """Weights from the summed evidences, computed independently per step."""
    T, K = loglik_matrix.shape
    out = np.empty((T, K))
    cum = np.zeros(K)
    for t in range(T):
        cum = cum + loglik_matrix[t]
        shifted = cum - cum.max()
        w = np.exp(shifted)
        out[t] = w / w.sum()
    return out


def eg_oracle(density_matrix, k_members):
    """Closed-form exponentiated-gradient iterates mirrored in the test."""
    w = np.full(k_members, 1.0 / k_members)
    path = []
    for t, p in enumerate(density_matrix, start=1):
        eta = np.sqrt(np.log(k_members) / t)
        w = w * np.exp(eta * p / float(w @ p))
        w = w / w.sum()
        path.append(w.copy())
    return np.array(path)


class TestBma:
    def test_identical_members_stay_uniform(self):
        state = ens.init_ensemble(2, "bma")
        for _ in range(200):
            state = ens.bma_update(state, [-1.3, -1.3])
            np.testing.assert_allclose(state.weights, [0.5, 0.5], atol=1e-15)

    def test_matches_batch_evidence_weighting(self):
        rng = np.random.default_rng(60)
        lls = rng.normal(-1.0, 0.5, size=(400, 3))
        state = ens.init_ensemble(3, "bma")
        oracle = batch_bma_oracle(lls)
        for t in range(400):
            state = ens.bma_update(state, lls[t])
            np.testing.assert_allclose(state.weights, oracle[t], atol=1e-10)

    def test_minus_infinity_surrogate_handled(self):
        state = ens.init_ensemble(2, "bma")
        state = ens.bma_update(state, [-1e6, -1.0])
        assert not np.any(np.isnan(state.weights))
        assert state.weights[0] < 1e-300
        assert state.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_simplex_preserved_under_adversarial_stream(self):
        state = ens.init_ensemble(3, "bma")
        for t in range(100_000):
            sign = 500.0 if t % 2 == 0 else -500.0
            state = ens.bma_update(state, [sign, -sign, 0.0])
            if t % 10_000 == 0:
                assert np.all(state.weights >= 0.0)
                assert state.weights.sum() == pytest.approx(1.0, abs=1e-12)
        assert state.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_nan_loglik_rejected(self):
        with pytest.raises(DataError):
            ens.bma_update(ens.init_ensemble(2, "bma"), [np.nan, 0.0])


class TestStacking:
    def test_single_member_stays_at_one(self):
        state = ens.init_ensemble(1, "stacking")
        for _ in range(10):
            state = ens.stacking_update(state, [0.3])
        np.testing.assert_allclose(state.weights, [1.0], atol=1e-15)

    def test_equal_densities_leave_weights_unchanged(self):
        state = ens.init_ensemble(3, "stacking")
        for _ in range(50):
            state = ens.stacking_update(state, [0.7, 0.7, 0.7])
        np.testing.assert_allclose(state.weights, np.full(3, 1 / 3), atol=1e-12)

    def test_dominant_member_wins_and_matches_eg_oracle(self):
        rng = np.random.default_rng(61)
        T = 400
        weak = rng.uniform(0.01, 0.02, size=T)
        strong = 10.0 * weak + rng.uniform(0.05, 0.1, size=T)
        densities = np.stack([strong, weak], axis=1)
        state = ens.init_ensemble(2, "stacking")
        path = []
        for t in range(T):
            state = ens.stacking_update(state, densities[t])
            path.append(state.weights.copy())
        path = np.array(path)
        oracle = eg_oracle(densities, 2)
        np.testing.assert_allclose(path, oracle, atol=1e-10)
        burn = 50
        lead = path[burn:, 0]
        assert np.all(np.diff(lead) >= -1e-12)  # monotone growth after burn-in
        assert lead[-1] > 0.95

    def test_all_zero_densities_skip_with_warning(self):
        state = ens.init_ensemble(2, "stacking")
        state = ens.stacking_update(state, [0.4, 0.2])
        before = state.weights.copy()
        with pytest.warns(UserWarning):
            state = ens.stacking_update(state, [0.0, 0.0])
        np.testing.assert_allclose(state.weights, before, atol=0)
        assert state.step_count == 2

    def test_simplex_preserved_under_adversarial_stream(self):
        # alternating +-500-nat likelihoods mapped to finite density extremes
        state = ens.init_ensemble(2, "stacking")
        for t in range(100_000):
            p = [1e300, 1e-300] if t % 2 == 0 else [1e-300, 1e300]
            state = ens.stacking_update(state, p)
        assert np.all(state.weights >= 0.0)
        assert state.weights.sum() == pytest.approx(1.0, abs=1e-12)

    def test_negative_density_rejected(self):
        with pytest.raises(DataError):
            ens.stacking_update(ens.init_ensemble(2, "stacking"), [-0.1, 0.5])


class TestMixturePredict:
    def test_identical_members(self):
        state = ens.init_ensemble(3, "bma")
        mean, var, dens = ens.mixture_predict(state, [0.7] * 3, [0.2] * 3, [0.5] * 3)
        assert mean == pytest.approx(0.7)
        assert var == pytest.approx(0.2)
        assert dens == pytest.approx(0.5)

    def test_symmetric_two_member_moments(self):
        state = ens.init_ensemble(2, "bma")
        mean, var, _ = ens.mixture_predict(state, [-1.0, 1.0], [1.0, 1.0])
        assert mean == pytest.approx(0.0, abs=1e-15)
        assert var == pytest.approx(2.0, rel=1e-12)

    def test_density_bounded_by_members(self):
        rng = np.random.default_rng(62)
        state = ens.init_ensemble(4, "bma")
        state = ens.bma_update(state, rng.normal(size=4))
        p = rng.uniform(0.1, 2.0, size=4)
        _, _, dens = ens.mixture_predict(state, np.zeros(4), np.ones(4), p)
        assert p.min() <= dens <= p.max()

    def test_bad_member_count(self):
        with pytest.raises(DataError):
            ens.mixture_predict(ens.init_ensemble(2, "bma"), [0.0], [1.0])


class TestInit:
    def test_uniform_prior(self):
        state = ens.init_ensemble(5, "stacking")
        np.testing.assert_allclose(state.weights, np.full(5, 0.2), atol=1e-15)

    def test_bad_arguments(self):
        with pytest.raises(ConfigurationError):
            ens.init_ensemble(0, "bma")
        with pytest.raises(ConfigurationError):
            ens.init_ensemble(2, "mean")
