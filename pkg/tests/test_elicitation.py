import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from coralcast.elicitation import (ClassificationRecord, ClassificationStore,
                                   LABELS, accuracy_for_user,
                                   confusion_counts, sample_points,
                                   score_accuracy, read_classification_csv)


class TestSamplePoints:
    def test_twenty_points_fill_the_5x4_grid(self):
        points = sample_points("img1", "alice", n=20, seed=7)
        assert len(points) == 20
        strata = {(int(p.x * 5), int(p.y * 4)) for p in points}
        assert len(strata) == 20

    def test_deterministic_per_media_user_seed(self):
        a = sample_points("img1", "alice", n=20, seed=7)
        b = sample_points("img1", "alice", n=20, seed=7)
        assert a == b

    def test_distinct_users_get_distinct_sets(self):
        a = sample_points("img1", "alice", n=20, seed=7)
        b = sample_points("img1", "bob", n=20, seed=7)
        assert a != b

    def test_single_point_is_uniform_in_unit_square(self):
        (p,) = sample_points("img1", "alice", n=1, seed=3)
        assert 0 <= p.x < 1 and 0 <= p.y < 1

    def test_zero_points_rejected(self):
        with pytest.raises(ValueError):
            sample_points("img1", "alice", n=0)

    @given(st.integers(min_value=1, max_value=60), st.integers())
    @settings(max_examples=60, deadline=None)
    def test_one_point_per_stratum_property(self, n, seed):
        points = sample_points("m", "u", n=n, seed=seed)
        assert len(points) == n
        assert len({p.point_id for p in points}) == n
        assert all(0 <= p.x < 1 and 0 <= p.y < 1 for p in points)


class TestStore:
    def _store_with_issue(self, **kwargs):
        store = ClassificationStore(**kwargs)
        store.issue_points("img1", "alice", n=20, seed=1)
        return store

    def _record(self, point_id=0, label="coral", user="alice"):
        return ClassificationRecord("img1", 150.0, -23.0, point_id, label,
                                    user, "2015-06-01T00:00:00Z")

    def test_record_and_retrieve(self):
        store = self._store_with_issue()
        store.record(self._record())
        assert store.records_for("img1", "alice")[0].label == "coral"

    def test_resubmission_replaces_label(self):
        store = self._store_with_issue()
        store.record(self._record(label="coral"))
        store.record(self._record(label="algae"))
        assert len(store) == 1
        assert store.records_for("img1", "alice")[0].label == "algae"

    def test_unissued_point_rejected(self):
        store = self._store_with_issue()
        with pytest.raises(KeyError):
            store.record(self._record(point_id=99))
        with pytest.raises(KeyError):
            store.record(self._record(user="mallory"))

    def test_invalid_label_rejected(self):
        with pytest.raises(ValueError):
            self._record(label="fish")

    def test_replay_reproduces_store(self, tmp_path):
        log = tmp_path / "classifications.log"
        store = self._store_with_issue(log_path=log)
        store.record(self._record(point_id=0, label="coral"))
        store.record(self._record(point_id=1, label="sand"))
        store.record(self._record(point_id=0, label="water"))
        replayed = ClassificationStore(log_path=log)
        assert len(replayed) == len(store) == 2
        assert [r.label for r in replayed.records_for("img1", "alice")] == \
            [r.label for r in store.records_for("img1", "alice")]

    def test_export_csv_schema(self, tmp_path):
        store = self._store_with_issue()
        store.record(self._record())
        path = tmp_path / "export.csv"
        store.export_csv(path)
        header = path.read_text().splitlines()[0]
        assert header == "media_id,lon,lat,point_id,label,user_id"
        assert read_classification_csv(path)[0].label == "coral"


class TestConfusionCounts:
    def test_perfect_agreement(self):
        user = ["coral"] * 8 + ["algae"] * 12
        assert confusion_counts(user, user) == (8, 12, 0, 0)

    def test_unknown_excluded(self):
        user = ["coral", "unknown", "algae"]
        expert = ["coral", "coral", "coral"]
        assert confusion_counts(user, expert) == (1, 0, 0, 1)

    def test_all_unknown_gives_zero_counts(self):
        assert confusion_counts(["unknown"] * 3, ["coral", "sand", "algae"]) \
            == (0, 0, 0, 0)

    def test_length_mismatch_rejected(self):
        with pytest.raises(ValueError):
            confusion_counts(["coral"], ["coral", "sand"])

    def test_expert_unknown_rejected(self):
        with pytest.raises(ValueError):
            confusion_counts(["coral"], ["unknown"])


class TestScoreAccuracy:
    def test_single_image(self):
        assert score_accuracy([(15, 3, 1, 1)]) == pytest.approx(0.90)

    def test_mean_of_per_image_accuracies(self):
        # 0.9 and 0.7 -> 0.8
        assert score_accuracy([(9, 0, 1, 0), (7, 0, 3, 0)]) == \
            pytest.approx(0.80)

    def test_perfect_classifier(self):
        assert score_accuracy([(10, 10, 0, 0), (5, 15, 0, 0)]) == 1.0

    def test_zero_denominator_images_skipped(self):
        assert score_accuracy([(0, 0, 0, 0), (9, 0, 1, 0)]) == \
            pytest.approx(0.9)

    def test_no_scorable_images_raises(self):
        with pytest.raises(ValueError):
            score_accuracy([(0, 0, 0, 0)])

    def test_accuracy_symmetric_under_class_swap(self):
        # swapping TP<->TN and FP<->FN leaves per-image accuracy unchanged
        rng = np.random.default_rng(0)
        for _ in range(200):
            tp, tn, fp, fn = rng.integers(0, 20, size=4)
            if tp + tn + fp + fn == 0:
                continue
            assert score_accuracy([(tp, tn, fp, fn)]) == \
                pytest.approx(score_accuracy([(tn, tp, fn, fp)]))

    def test_bounds_hold_under_randomized_trials(self):
        rng = np.random.default_rng(123)
        for _ in range(10_000):
            counts = [tuple(rng.integers(0, 25, size=4))
                      for _ in range(rng.integers(1, 5))]
            if all(sum(c) == 0 for c in counts):
                continue
            w_a = score_accuracy(counts)
            assert 0.0 <= w_a <= 1.0

    def test_unity_iff_no_errors(self):
        assert score_accuracy([(3, 2, 0, 0), (1, 19, 0, 0)]) == 1.0
        assert score_accuracy([(3, 2, 1, 0)]) < 1.0
        assert score_accuracy([(3, 2, 0, 2)]) < 1.0


class TestAccuracyForUser:
    def test_scores_against_expert_on_shared_points(self):
        store = ClassificationStore()
        store.issue_points("val1", "alice", n=4, seed=0, shared=True)
        labels = ["coral", "coral", "algae", "sand"]
        for pid, lab in enumerate(labels):
            store.record(ClassificationRecord("val1", 0.0, 0.0, pid, lab,
                                              "alice"))
        expert = {"val1": {0: "coral", 1: "algae", 2: "algae", 3: "coral"}}
        profile = accuracy_for_user(store, expert, "alice")
        # tp=1 (pt0), fp=1 (pt1), tn=1 (pt2), fn=1 (pt3)
        assert profile.per_image_counts["val1"] == (1, 1, 1, 1)
        assert profile.w_a == pytest.approx(0.5)

    def test_no_validation_answers_raises(self):
        store = ClassificationStore()
        with pytest.raises(ValueError):
            accuracy_for_user(store, {"val1": {0: "coral"}}, "alice")
