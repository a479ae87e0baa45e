"""Metrics: accuracy, ROC/AUC against the exact pairwise oracle."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bcpnn.metrics import MetricError, accuracy, auc_oracle, roc_auc


class TestAccuracy:
    def test_identical_vectors(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 1, 1]) == 1.0

    def test_complemented_vectors(self):
        assert accuracy([1, 0, 1, 1], [0, 1, 0, 0]) == 0.0

    def test_three_of_four(self):
        assert accuracy([1, 0, 1, 1], [1, 0, 1, 0]) == 0.75

    def test_empty_raises(self):
        with pytest.raises(MetricError):
            accuracy([], [])

    def test_length_mismatch_raises(self):
        with pytest.raises(MetricError):
            accuracy([1, 0], [1])


class TestRocAuc:
    def test_perfect_separation(self):
        curve = roc_auc([0.9, 0.8, 0.2, 0.1], [1, 1, 0, 0])
        assert curve.auc == 1.0

    def test_all_scores_equal_is_single_diagonal(self):
        curve = roc_auc([0.5, 0.5, 0.5, 0.5], [1, 0, 1, 0])
        assert curve.auc == 0.5
        # one tie group: (0,0) -> (1,1) directly
        np.testing.assert_array_equal(curve.points, [[0.0, 0.0], [1.0, 1.0]])

    def test_known_mixed_example(self):
        # Pairs (signal, background): (0.35,0.1) +, (0.35,0.4) -, (0.8,0.1) +,
        # (0.8,0.4) + => 3 of 4 concordant.
        curve = roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert curve.auc == 0.75

    def test_endpoints_and_monotonicity(self):
        rng = np.random.default_rng(5)
        scores = rng.random(200)
        labels = rng.integers(0, 2, 200)
        curve = roc_auc(scores, labels)
        np.testing.assert_array_equal(curve.points[0], [0.0, 0.0])
        np.testing.assert_array_equal(curve.points[-1], [1.0, 1.0])
        assert np.all(np.diff(curve.points[:, 0]) >= 0)
        assert np.all(np.diff(curve.points[:, 1]) >= 0)

    def test_single_class_raises(self):
        with pytest.raises(MetricError):
            roc_auc([0.1, 0.2], [1, 1])

    def test_csv_export(self, tmp_path):
        curve = roc_auc([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        path = tmp_path / "roc.csv"
        curve.to_csv(path)
        rows = path.read_text().strip().splitlines()
        assert rows[0] == "fpr,tpr"
        first = [float(v) for v in rows[1].split(",")]
        last = [float(v) for v in rows[-1].split(",")]
        assert first == [0.0, 0.0] and last == [1.0, 1.0]


class TestOracleAgreement:
    def test_matches_oracle_on_1000_random_cases(self):
        rng = np.random.default_rng(12345)
        for case in range(1000):
            n = int(rng.integers(2, 60))
            # Quantised scores force plenty of ties.
            scores = np.round(rng.random(n), 1)
            labels = rng.integers(0, 2, n)
            if labels.min() == labels.max():
                labels[0] = 1 - labels[0]
            assert abs(roc_auc(scores, labels).auc - auc_oracle(scores, labels)) <= 1e-12

    def test_reversed_scores_give_complement(self):
        rng = np.random.default_rng(7)
        scores = np.round(rng.random(101), 2)
        labels = rng.integers(0, 2, 101)
        labels[0] = 1
        labels[1] = 0
        assert roc_auc(-scores, labels).auc == pytest.approx(1.0 - roc_auc(scores, labels).auc, abs=1e-15)

    def test_duplicating_samples_preserves_auc(self):
        rng = np.random.default_rng(8)
        scores = np.round(rng.random(50), 1)
        labels = rng.integers(0, 2, 50)
        labels[:2] = [0, 1]
        doubled_scores = np.concatenate([scores, scores])
        doubled_labels = np.concatenate([labels, labels])
        assert roc_auc(doubled_scores, doubled_labels).auc == pytest.approx(
            roc_auc(scores, labels).auc, abs=1e-15
        )

    @settings(max_examples=200, deadline=None)
    @given(
        scores=st.lists(st.integers(0, 9), min_size=2, max_size=40),
        labels_seed=st.integers(0, 2**31),
    )
    def test_property_oracle_and_monotone_transform(self, scores, labels_seed):
        scores = np.asarray(scores, dtype=np.float64)
        rng = np.random.default_rng(labels_seed)
        labels = rng.integers(0, 2, len(scores))
        if labels.min() == labels.max():
            labels[0] = 1 - labels[0]
        base = roc_auc(scores, labels).auc
        assert base == pytest.approx(auc_oracle(scores, labels), abs=1e-12)
        # strictly monotone transform leaves the AUC unchanged
        transformed = np.exp(scores / 3.0) + 5.0
        assert roc_auc(transformed, labels).auc == pytest.approx(base, abs=1e-12)
