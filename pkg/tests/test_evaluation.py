import numpy as np
import pytest

from temploc.evaluation import (
    average_precision,
    evaluate,
    match_detections,
    top_k_filter,
    write_per_class_csv,
    write_results_csv,
)
from temploc.intervals import GroundTruthInstance, TemporalInterval, VideoAnnotation
from temploc.pipeline import Detection
from oracles import ap_literal, evaluate_literal


def det(start, end, conf, label=1, video="v"):
    return Detection(video, TemporalInterval(start, end), label, conf)


def ann(video_id, frames, *instances):
    return VideoAnnotation(
        video_id=video_id,
        total_frames=frames,
        instances=tuple(
            GroundTruthInstance(TemporalInterval(s, e), c) for s, e, c in instances
        ),
        trimmed=False,
    )


class TestMatchDetections:
    def test_exact_hit(self):
        verdicts = match_detections([det(0, 16, 0.9)], [("v", TemporalInterval(0, 16))], 0.5)
        assert verdicts[0].is_tp and verdicts[0].gt_index == 0

    def test_one_detection_per_ground_truth(self):
        dets = [det(0, 16, 0.9), det(0, 18, 0.8)]  # IoUs 1.0 and 0.888
        verdicts = match_detections(dets, [("v", TemporalInterval(0, 16))], 0.5)
        assert [v.is_tp for v in verdicts] == [True, False]

    def test_below_threshold_is_fp(self):
        # IoU 9/20 = 0.45 < 0.5
        verdicts = match_detections([det(0, 9, 0.9)], [("v", TemporalInterval(0, 20))], 0.5)
        assert not verdicts[0].is_tp

    def test_strictly_greater_than_threshold(self):
        # IoU exactly 0.5 does not count
        verdicts = match_detections([det(0, 8, 0.9)], [("v", TemporalInterval(0, 16))], 0.5)
        assert not verdicts[0].is_tp

    def test_wrong_video_is_fp(self):
        verdicts = match_detections(
            [det(0, 16, 0.9, video="a")], [("b", TemporalInterval(0, 16))], 0.5
        )
        assert not verdicts[0].is_tp

    def test_consumes_highest_iou_gt(self):
        gts = [("v", TemporalInterval(0, 16)), ("v", TemporalInterval(2, 18))]
        verdicts = match_detections([det(2, 18, 0.9)], gts, 0.5)
        assert verdicts[0].gt_index == 1

    def test_resorts_defensively(self):
        gts = [("v", TemporalInterval(0, 16))]
        low_first = [det(0, 10, 0.2), det(0, 16, 0.9)]
        verdicts = match_detections(low_first, gts, 0.5)
        assert verdicts[0].detection.confidence == 0.9 and verdicts[0].is_tp

    def test_never_double_assigns(self):
        rng = np.random.default_rng(0)
        for _ in range(200):
            dets = [
                det(int(s), int(s) + int(l), float(c))
                for s, l, c in zip(
                    rng.integers(0, 50, size=8),
                    rng.integers(4, 30, size=8),
                    rng.uniform(0.1, 1.0, size=8),
                )
            ]
            gts = [
                ("v", TemporalInterval(int(s), int(s) + int(l)))
                for s, l in zip(rng.integers(0, 50, size=4), rng.integers(4, 30, size=4))
            ]
            verdicts = match_detections(dets, gts, 0.3)
            matched = [v.gt_index for v in verdicts if v.is_tp]
            assert len(matched) == len(set(matched))
            assert sum(v.is_tp for v in verdicts) <= len(gts)


class TestAveragePrecision:
    def test_perfect_single(self):
        assert average_precision([True], 1) == 1.0

    def test_fp_then_tp(self):
        assert average_precision([False, True], 1) == 0.5

    def test_interleaved(self):
        assert average_precision([True, False, True], 2) == pytest.approx((1.0 + 2 / 3) / 2)

    def test_matches_literal_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(300):
            n = int(rng.integers(0, 12))
            verdicts = [bool(b) for b in rng.integers(0, 2, size=n)]
            gt_count = max(sum(verdicts), 1) + int(rng.integers(0, 3))
            assert average_precision(verdicts, gt_count) == pytest.approx(
                ap_literal(verdicts, gt_count)
            )

    def test_bounds(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            n = int(rng.integers(1, 10))
            verdicts = [bool(b) for b in rng.integers(0, 2, size=n)]
            gt_count = max(sum(verdicts), 1)
            assert 0.0 <= average_precision(verdicts, gt_count) <= 1.0

    def test_appending_trailing_fps_never_increases(self):
        rng = np.random.default_rng(3)
        for _ in range(100):
            verdicts = [bool(b) for b in rng.integers(0, 2, size=6)]
            gt_count = max(sum(verdicts), 1)
            base = average_precision(verdicts, gt_count)
            extended = average_precision(verdicts + [False, False], gt_count)
            assert extended <= base + 1e-12

    def test_undefined_without_gt(self):
        with pytest.raises(ValueError):
            average_precision([True], 0)

    def test_interpolated_variant(self):
        assert average_precision([True], 1, interpolated=True) == pytest.approx(1.0)
        plain = average_precision([False, True], 1)
        interp = average_precision([False, True], 1, interpolated=True)
        assert interp >= plain


class TestTopK:
    def test_identity_when_k_large(self):
        dets = [det(0, 8, 0.9), det(10, 18, 0.5)]
        assert top_k_filter(dets, 5) == sorted(dets, key=lambda d: -d.confidence)

    def test_zero(self):
        assert top_k_filter([det(0, 8, 0.9)], 0) == []

    def test_keeps_highest(self):
        dets = [det(0, 8, 0.9), det(10, 18, 0.5), det(20, 28, 0.1)]
        kept = top_k_filter(dets, 2)
        assert [d.confidence for d in kept] == [0.9, 0.5]

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            top_k_filter([], -1)


class TestEvaluate:
    def test_oracle_detections_score_one(self):
        annotations = [ann("a", 64, (0, 16, 1), (32, 48, 2)), ann("b", 64, (8, 24, 1))]
        dets = [
            det(0, 16, 0.9, 1, "a"),
            det(32, 48, 0.8, 2, "a"),
            det(8, 24, 0.7, 1, "b"),
        ]
        result = evaluate(dets, annotations, [0.1, 0.3, 0.5])
        assert all(v == 1.0 for v in result.mean_ap.values())

    def test_empty_detections_score_zero(self):
        annotations = [ann("a", 64, (0, 16, 1))]
        result = evaluate([], annotations, [0.5])
        assert result.mean_ap[0.5] == 0.0

    def test_class_without_gt_excluded(self):
        annotations = [ann("a", 64, (0, 16, 1))]
        result = evaluate([det(0, 16, 0.9, 1, "a")], annotations, [0.5], num_classes=2)
        assert result.classes == (1,)
        assert result.mean_ap[0.5] == 1.0

    def test_unknown_class_rejected(self):
        annotations = [ann("a", 64, (0, 16, 1))]
        with pytest.raises(ValueError):
            evaluate([det(0, 16, 0.9, 7, "a")], annotations, [0.5], num_classes=2)

    def test_no_gts_rejected(self):
        with pytest.raises(ValueError):
            evaluate([], [ann("a", 64)], [0.5])

    def test_matches_brute_force_oracle(self):
        rng = np.random.default_rng(4)
        for _ in range(250):
            n_videos = int(rng.integers(1, 5))
            annotations = []
            for i in range(n_videos):
                instances = []
                cursor = 0
                for _ in range(int(rng.integers(1, 3))):
                    start = cursor + int(rng.integers(0, 10))
                    end = start + int(rng.integers(4, 20))
                    if end > 90:
                        break
                    instances.append((start, end, int(rng.integers(1, 3))))
                    cursor = end + 1
                if not instances:
                    instances = [(0, 8, 1)]
                annotations.append(ann(f"v{i}", 100, *instances))
            dets = [
                det(int(s), int(s) + int(l), float(c), int(k), f"v{rng.integers(0, n_videos)}")
                for s, l, c, k in zip(
                    rng.integers(0, 80, size=10),
                    rng.integers(4, 20, size=10),
                    rng.uniform(0.05, 1.0, size=10),
                    rng.integers(1, 3, size=10),
                )
            ]
            theta = float(rng.choice([0.3, 0.5, 0.7]))
            result = evaluate(dets, annotations, [theta], num_classes=2)
            oracle_per_class, oracle_map = evaluate_literal(dets, annotations, theta)
            assert result.mean_ap[theta] == pytest.approx(oracle_map)
            for cls, value in oracle_per_class.items():
                assert result.ap[theta][cls] == pytest.approx(value)

    def test_map_nonincreasing_in_theta(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            annotations = [ann("a", 100, (10, 40, 1), (50, 80, 2))]
            dets = [
                det(int(s), int(s) + int(l), float(c), int(k), "a")
                for s, l, c, k in zip(
                    rng.integers(0, 70, size=8),
                    rng.integers(10, 35, size=8),
                    rng.uniform(0.05, 1.0, size=8),
                    rng.integers(1, 3, size=8),
                )
            ]
            thetas = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7]
            result = evaluate(dets, annotations, thetas)
            values = [result.mean_ap[t] for t in thetas]
            for a, b in zip(values, values[1:]):
                assert b <= a + 1e-12

    def test_csv_outputs(self, tmp_path):
        annotations = [ann("a", 64, (0, 16, 1), (32, 48, 2))]
        dets = [det(0, 16, 0.9, 1, "a")]
        result = evaluate(dets, annotations, [0.3, 0.5])
        write_results_csv(tmp_path / "results.csv", result)
        write_per_class_csv(tmp_path / "per_class.csv", result, 0.5)
        lines = (tmp_path / "results.csv").read_text().strip().splitlines()
        assert lines[0] == "class,theta_0.3,theta_0.5"
        assert lines[-1].startswith("mAP,")
        per_class = (tmp_path / "per_class.csv").read_text().strip().splitlines()
        assert per_class[0] == "class,ap"
        assert len(per_class) == 3
