import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lncass.errors import DataError, DimensionError, ModelSpecError
from lncass.metrics import (
    PosteriorSummary,
    auc,
    hard_select,
    mae,
    recovery_auc,
    roc_curve,
    summarize,
)
from lncass.sampler import PosteriorDraws
from lncass.simulate import GroundTruth


def brute_force_auc(scores, labels):
    """All-pairs oracle: wins count 1, ties count one half."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                total += 1.0
            elif sp == sn:
                total += 0.5
    return total / (len(pos) * len(neg))


class TestAuc:
    def test_perfect_separation(self):
        assert auc([0.1, 0.9], [0, 1]) == 1.0

    def test_all_ties(self):
        assert auc([0.4, 0.4, 0.4], [0, 1, 0]) == 0.5

    def test_matches_brute_force_on_random_instances(self, rng):
        for _ in range(200):
            n = rng.integers(2, 13)
            labels = np.zeros(n)
            labels[rng.choice(n, size=rng.integers(1, n), replace=False)] = 1
            if labels.sum() in (0, n):
                continue
            # quantized scores force plenty of ties
            scores = rng.integers(0, 4, size=n) / 3.0
            assert auc(scores, labels) == pytest.approx(
                brute_force_auc(scores, labels), abs=0
            )

    def test_single_class_rejected(self):
        with pytest.raises(DataError):
            auc([0.1, 0.2], [1, 1])

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_invariant_under_monotone_transform(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=20)
        labels = (rng.random(20) < 0.5).astype(float)
        if labels.sum() in (0, 20):
            return
        assert auc(scores, labels) == pytest.approx(auc(np.exp(scores), labels))

    @given(st.integers(min_value=0, max_value=2**32 - 1))
    def test_sign_flip_complements(self, seed):
        rng = np.random.default_rng(seed)
        scores = rng.normal(size=25)  # continuous, ties almost surely absent
        labels = (rng.random(25) < 0.4).astype(float)
        if labels.sum() in (0, 25):
            return
        assert auc(scores, labels) + auc(-scores, labels) == pytest.approx(1.0)


class TestRocCurve:
    def test_perfect_classifier_passes_through_corner(self):
        curve = roc_curve([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1])
        pts = set(zip(curve.fpr.tolist(), curve.tpr.tolist()))
        assert (0.0, 1.0) in pts

    def test_endpoints_present_and_monotone(self, rng):
        scores = rng.normal(size=50)
        labels = (rng.random(50) < 0.5).astype(float)
        curve = roc_curve(scores, labels)
        assert curve.fpr[0] == 0.0 and curve.tpr[0] == 0.0
        assert curve.fpr[-1] == 1.0 and curve.tpr[-1] == 1.0
        assert np.all(np.diff(curve.fpr) >= 0)
        assert np.all(np.diff(curve.tpr) >= 0)
        assert np.all(np.diff(curve.thresholds) < 0)

    def test_random_scores_give_half_area(self, rng):
        scores = rng.normal(size=4000)
        labels = (rng.random(4000) < 0.5).astype(float)
        assert roc_curve(scores, labels).area() == pytest.approx(0.5, abs=0.05)

    def test_area_equals_auc_on_random_instances(self, rng):
        for _ in range(100):
            n = int(rng.integers(4, 40))
            scores = rng.integers(0, 6, size=n) / 5.0
            labels = (rng.random(n) < 0.5).astype(float)
            if labels.sum() in (0, n):
                continue
            assert roc_curve(scores, labels).area() == pytest.approx(
                auc(scores, labels), abs=1e-12
            )


class TestMae:
    def test_identical_vectors(self):
        assert mae([1.0, 2.0], [1.0, 2.0]) == 0.0

    def test_hand_arithmetic(self):
        assert mae([1.0, 1.0], [0.0, 2.0]) == 1.0

    def test_matches_one_line_oracle(self, rng):
        a = rng.normal(size=30)
        b = rng.normal(size=30)
        assert mae(a, b) == pytest.approx(float(np.abs(a - b).mean()), abs=1e-12)

    def test_symmetry_and_nonnegativity(self, rng):
        a = rng.normal(size=10)
        b = rng.normal(size=10)
        assert mae(a, b) == mae(b, a) >= 0.0

    def test_length_mismatch(self):
        with pytest.raises(DimensionError):
            mae([1.0], [1.0, 2.0])


class TestRecoveryAuc:
    def _truth(self):
        beta = np.array([0, 0, 2.0, -1.5, 0])
        return GroundTruth(beta=beta, groups=np.zeros(5, dtype=int))

    def test_exact_estimates_score_one(self):
        truth = self._truth()
        assert recovery_auc(truth.beta, truth) == 1.0

    def test_zero_estimates_score_half(self):
        assert recovery_auc(np.zeros(5), self._truth()) == 0.5

    def test_sign_flip_invariance(self, rng):
        truth = self._truth()
        est = rng.normal(size=5)
        assert recovery_auc(est, truth) == recovery_auc(-est, truth)


def _draws_from(array):
    chains, n, dim = array.shape
    return PosteriorDraws(
        array=array,
        names=tuple(f"x[{i}]" for i in range(dim)),
        divergences=np.zeros(chains, dtype=int),
        accept_rate=np.ones(chains),
        step_size=np.ones(chains),
        seed=0,
    )


class TestSummarize:
    def test_constant_draws(self):
        d = _draws_from(np.full((2, 50, 1), 3.25))
        s = summarize(d)
        assert s.median[0] == s.mean[0] == s.lower[0] == s.upper[0] == 3.25

    def test_sorted_integers_median(self):
        vals = np.arange(1, 1001, dtype=float).reshape(2, 500, 1)
        s = summarize(_draws_from(vals))
        assert s.median[0] == pytest.approx(500.5)

    def test_normal_interval_bounds(self, rng):
        vals = rng.normal(size=(4, 5000, 1))
        s = summarize(_draws_from(vals), interval_mass=0.9)
        assert s.lower[0] == pytest.approx(-1.6449, abs=0.06)
        assert s.upper[0] == pytest.approx(1.6449, abs=0.06)
        assert s.lower[0] <= s.median[0] <= s.upper[0]


class TestHardSelect:
    def _summary(self, medians):
        medians = np.asarray(medians, dtype=float)
        k = medians.size
        ones = np.ones(k)
        return PosteriorSummary(
            names=[f"beta[{i}]" for i in range(k)],
            median=medians,
            mean=medians,
            lower=medians,
            upper=medians,
            rhat=ones,
            ess=ones,
        )

    def test_largest_magnitudes_selected(self):
        sel = hard_select(self._summary([0.0, 3.0, -5.0]), 2)
        assert set(sel.tolist()) == {1, 2}

    def test_k_equals_p(self):
        sel = hard_select(self._summary([1.0, -2.0, 0.5]), 3)
        assert np.array_equal(sel, [0, 1, 2])

    def test_ties_break_by_ascending_index(self):
        sel = hard_select(self._summary([1.0, -1.0, 1.0]), 2)
        assert np.array_equal(sel, [0, 1])

    def test_scale_invariance(self, rng):
        medians = rng.normal(size=8)
        a = hard_select(self._summary(medians), 3)
        b = hard_select(self._summary(7.3 * medians), 3)
        assert np.array_equal(a, b)

    def test_k_too_large(self):
        with pytest.raises(ModelSpecError):
            hard_select(self._summary([1.0, 2.0]), 3)
