import math

import numpy as np
import pytest

from evifuse.metrics import (
    EvalRecord,
    accuracy,
    auc_binary,
    ece,
    metrics_report,
    ood_detect,
    predictive_entropy,
)

from oracles import auc_reference, ece_reference


def make_records(confs, corrects):
    return [
        EvalRecord(0, c, 0.5, 0 if ok else 1, f"r{i}")
        for i, (c, ok) in enumerate(zip(confs, corrects))
    ]


HAND_CONFS = (0.3, 0.4, 0.8, 0.9)
HAND_CORRECT = (False, True, True, True)


class TestEvalRecord:
    def test_bounds(self):
        with pytest.raises(ValueError):
            EvalRecord(0, 1.5, 0.5, 0, "a")
        with pytest.raises(ValueError):
            EvalRecord(0, 0.5, -0.5, 0, "a")

    def test_correct_property(self):
        assert EvalRecord(2, 0.5, 0.1, 2, "a").correct
        assert not EvalRecord(2, 0.5, 0.1, 1, "a").correct


class TestEce:
    def test_two_bin_hand_case(self):
        got = ece(make_records(HAND_CONFS, HAND_CORRECT), 2)
        assert got == pytest.approx(0.15, abs=1e-12)

    def test_one_bin_collapses_to_gap(self):
        records = make_records(HAND_CONFS, HAND_CORRECT)
        got = ece(records, 1)
        assert got == pytest.approx(abs(0.75 - 0.6), abs=1e-12)

    def test_zero_confidence_lands_in_first_bin(self):
        report = metrics_report(make_records((0.0, 0.05), (True, False)), 10)
        assert report["bins"][0]["count"] == 2

    def test_upper_closed_edges(self):
        # 0.1 belongs to (0, 0.1], 0.2 to (0.1, 0.2]
        report = metrics_report(make_records((0.1, 0.2), (True, True)), 10)
        counts = [b["count"] for b in report["bins"]]
        assert counts[0] == 1 and counts[1] == 1

    def test_perfectly_calibrated_split(self):
        # 10 records at confidence 0.7, exactly 7 correct
        records = make_records([0.7] * 10, [True] * 7 + [False] * 3)
        assert ece(records, 10) == pytest.approx(0.0, abs=1e-12)

    def test_matches_reference(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            n = int(rng.integers(1, 60))
            confs = rng.uniform(0.0, 1.0, n)
            corrects = rng.uniform(size=n) < confs
            records = make_records(confs, corrects)
            for m in (1, 2, 5, 15):
                want = ece_reference(confs.tolist(), corrects.tolist(), m)
                assert ece(records, m) == pytest.approx(want, abs=1e-12)

    def test_order_invariance(self):
        rng = np.random.default_rng(1)
        confs = rng.uniform(0.0, 1.0, 40)
        corrects = rng.uniform(size=40) < 0.6
        records = make_records(confs, corrects)
        want = ece(records, 10)
        for _ in range(20):
            perm = rng.permutation(40)
            shuffled = [records[i] for i in perm]
            assert ece(shuffled, 10) == pytest.approx(want, abs=1e-15)

    def test_validation(self):
        with pytest.raises(ValueError):
            ece([], 10)
        with pytest.raises(ValueError):
            ece(make_records((0.5,), (True,)), 0)


class TestAccuracy:
    def test_simple(self):
        assert accuracy(make_records((0.5, 0.5, 0.5, 0.5), (True, True, True, False))) == 0.75

    def test_empty(self):
        with pytest.raises(ValueError):
            accuracy([])


class TestAuc:
    def test_hand_case(self):
        got = auc_binary([0.1, 0.4, 0.35, 0.8], [0, 0, 1, 1])
        assert got == pytest.approx(0.75, abs=1e-15)

    def test_extremes(self):
        assert auc_binary([0.1, 0.2, 0.8, 0.9], [0, 0, 1, 1]) == 1.0
        assert auc_binary([0.9, 0.8, 0.2, 0.1], [0, 0, 1, 1]) == 0.0

    def test_ties_get_half_credit(self):
        assert auc_binary([0.5, 0.5], [0, 1]) == 0.5
        assert auc_binary([0.3, 0.5, 0.5, 0.7], [0, 0, 1, 1]) == pytest.approx(0.875)

    def test_invariant_under_monotone_transforms(self):
        rng = np.random.default_rng(2)
        scores = rng.normal(size=50)
        labels = (rng.uniform(size=50) < 0.4).astype(int)
        want = auc_binary(scores, labels)
        assert auc_binary(3.0 * scores + 5.0, labels) == pytest.approx(want, abs=1e-15)
        assert auc_binary(np.exp(scores), labels) == pytest.approx(want, abs=1e-12)

    def test_matches_reference_with_ties(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            n = int(rng.integers(4, 40))
            scores = rng.integers(0, 6, n) / 5.0  # coarse grid forces ties
            labels = np.zeros(n, dtype=int)
            labels[: max(1, n // 3)] = 1
            rng.shuffle(labels)
            want = auc_reference(scores.tolist(), labels.tolist())
            assert auc_binary(scores, labels) == pytest.approx(want, abs=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            auc_binary([0.5, 0.6], [1, 1])
        with pytest.raises(ValueError):
            auc_binary([0.5, 0.6], [0, 2])
        with pytest.raises(ValueError):
            auc_binary([0.5], [0, 1])


class TestEntropy:
    def test_hand_cases(self):
        want = -(0.75 * math.log(0.75) + 0.25 * math.log(0.25))
        assert predictive_entropy([0.75, 0.25]) == pytest.approx(want, rel=1e-12)
        assert predictive_entropy([0.75, 0.25]) == pytest.approx(0.5623, abs=5e-5)
        assert predictive_entropy([0.5, 0.5]) == pytest.approx(math.log(2.0), rel=1e-12)
        assert predictive_entropy([1.0, 0.0]) == 0.0
        assert predictive_entropy([0.25] * 4) == pytest.approx(math.log(4.0), rel=1e-12)

    def test_validation(self):
        with pytest.raises(ValueError):
            predictive_entropy([0.5, 0.6])
        with pytest.raises(ValueError):
            predictive_entropy([1.5, -0.5])


class TestOodDetect:
    def test_hand_case_threshold(self):
        res = ood_detect([0.1, 0.2], [0.8, 0.9], percentile=50.0)
        assert res.threshold == pytest.approx(0.5, abs=1e-12)
        assert np.array_equal(res.flags, [True, True])
        assert np.allclose(res.scaled_val, [0.0, 0.125], atol=1e-12)
        assert np.allclose(res.scaled_test, [0.875, 1.0], atol=1e-12)

    def test_flags_are_strictly_above(self):
        # with a constant test pool at the threshold nothing gets flagged
        res = ood_detect([0.0, 1.0], [0.5, 0.5], percentile=50.0)
        assert res.threshold == pytest.approx(0.5, abs=1e-12)
        assert not res.flags.any()

    def test_affine_invariance(self):
        rng = np.random.default_rng(4)
        val = rng.uniform(0.0, 0.4, 80)
        test = rng.uniform(0.2, 1.0, 60)
        a = ood_detect(val, test, 60.0)
        b = ood_detect(3.0 * val + 0.2, 3.0 * test + 0.2, 60.0)
        assert np.allclose(a.scaled_val, b.scaled_val, atol=1e-12)
        assert np.allclose(a.scaled_test, b.scaled_test, atol=1e-12)
        assert np.array_equal(a.flags, b.flags)

    def test_validation(self):
        with pytest.raises(ValueError, match="constant"):
            ood_detect([0.5, 0.5], [0.5, 0.5])
        with pytest.raises(ValueError):
            ood_detect([], [0.5])
        with pytest.raises(ValueError):
            ood_detect([0.1], [0.5], percentile=120.0)


class TestReport:
    def test_shape_and_binary_auc(self):
        records = [
            EvalRecord(1, 0.9, 0.1, 1, "a"),
            EvalRecord(1, 0.8, 0.2, 0, "b"),
            EvalRecord(0, 0.7, 0.3, 0, "c"),
            EvalRecord(0, 0.6, 0.4, 1, "d"),
        ]
        report = metrics_report(records, num_bins=4)
        assert report["n"] == 4
        assert report["acc"] == 0.5
        scores = [0.9, 0.8, 1.0 - 0.7, 1.0 - 0.6]
        assert report["auc"] == pytest.approx(auc_binary(scores, [1, 0, 0, 1]), abs=1e-15)
        assert sum(b["count"] for b in report["bins"]) == 4
        assert report["bins"][0]["lo"] == 0.0 and report["bins"][-1]["hi"] == 1.0

    def test_empty_bins_report_none(self):
        report = metrics_report(make_records((0.95,), (True,)), 10)
        assert report["bins"][0]["acc"] is None and report["bins"][0]["conf"] is None
        assert report["bins"][9]["count"] == 1

    def test_auc_none_beyond_binary(self):
        records = [
            EvalRecord(0, 0.5, 0.2, 0, "a"),
            EvalRecord(1, 0.5, 0.2, 1, "b"),
            EvalRecord(2, 0.5, 0.2, 2, "c"),
        ]
        assert metrics_report(records, 10)["auc"] is None

    def test_auc_none_when_one_class_observed(self):
        records = [EvalRecord(1, 0.9, 0.1, 1, "a"), EvalRecord(1, 0.8, 0.2, 1, "b")]
        assert metrics_report(records, 10)["auc"] is None

    def test_ece_matches_standalone(self):
        rng = np.random.default_rng(5)
        confs = rng.uniform(size=30)
        records = make_records(confs, rng.uniform(size=30) < 0.5)
        assert metrics_report(records, 7)["ece"] == ece(records, 7)
