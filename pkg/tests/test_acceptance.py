"""Acceptance gate: every criterion runs at its stated tolerance and prints
one PASS/FAIL line.

Criteria 5-7 share one ablation run over the pinned desk-scale dataset
(configs/desk.json) with training seeds 0, 1, 2; "median improvement" is
checked both as the median of per-seed improvements and as the difference
of medians, which is the stricter reading.
"""

import json
import statistics
import time
from pathlib import Path

import numpy as np
import pytest

from temploc.cli import main
from temploc.config import load_config
from temploc.gradcheck import check_loss_gradients, check_network_gradients
from temploc.intervals import GroundTruthInstance, TemporalInterval
from temploc.labeling import assign_labels
from temploc.losses import per_sample_loss_curve
from temploc.net.model import NetConfig, init_params
from temploc.pipeline import Detection, nms
from temploc.evaluation import evaluate
from temploc.windows import CandidateSegment, sample_frames
from temploc.ablation import run_ablation
from temploc.synth import generate
from oracles import assign_labels_literal, evaluate_literal, nms_greedy

REPO = Path(__file__).resolve().parents[1]


def report(criterion: int, passed: bool, detail: str) -> None:
    print(f"[criterion {criterion}] {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


def test_criterion_1_loss_gradients_match_finite_differences():
    t0 = time.time()
    result = check_loss_gradients(trials=1000, seed=123)
    elapsed = time.time() - t0
    ok = result.passed(1e-5) and elapsed < 10.0
    report(
        1,
        ok,
        f"{result.checked} coordinates over 1000 batch configs, max rel err "
        f"{result.max_rel_error:.3e} (< 1e-5), {elapsed:.2f}s (< 10s)",
    )


def test_criterion_2_loss_minimum_location(tmp_path):
    grid_v = [round(0.1 * k, 1) for k in range(1, 11)]
    alphas = [0.25, 0.5, 1.0]
    worst = 0.0
    for alpha in alphas:
        argmins = []
        for v in grid_v:
            curve = per_sample_loss_curve(v, alpha=alpha, lam=1.0, resolution=10_000)
            argmin = float(curve[curve[:, 3].argmin(), 0])
            target = float(np.sqrt(v**alpha))
            worst = max(worst, abs(argmin - target))
            argmins.append(argmin)
        # qualitative family shape: the minimum location grows with overlap
        assert argmins == sorted(argmins)
    # the v=1 curve decreases monotonically toward P=1
    curve = per_sample_loss_curve(1.0, alpha=1.0, lam=1.0, resolution=10_000)
    assert np.all(np.diff(curve[:, 3]) < 0)
    out_csv = tmp_path / "loss_curves.csv"
    code = main([
        "losscurve", "--v", ",".join(str(v) for v in grid_v),
        "--alpha", "1.0", "--resolution", "10000", "--out", str(out_csv),
    ])
    ok = worst <= 1e-4 and code == 0 and out_csv.exists()
    report(
        2,
        ok,
        f"argmin of per-positive loss equals sqrt(v^alpha) within {worst:.2e} "
        f"(<= 1e-4) over v grid x alpha {{0.25,0.5,1.0}}; curve family CSV emitted",
    )


def test_criterion_3_full_network_gradient_check():
    t0 = time.time()
    arch = NetConfig(
        conv_filters=(4, 8), temporal_pools=((2, 2), (2, 2)), fc_widths=(16,)
    ).architecture((1, 8, 8, 8), 3)
    kinds = {layer.kind for layer in arch.layers}
    assert {"conv3d", "pool3d"} <= kinds
    params = init_params(arch, seed=0)
    assert params.num_parameters() <= 5000
    result = check_network_gradients(arch, batch_size=3, probes_per_tensor=60, seed=321)
    elapsed = time.time() - t0
    ok = result.passed(1e-4) and elapsed < 60.0
    report(
        3,
        ok,
        f"{params.num_parameters()} parameters (conv3d+pool3d net), "
        f"{result.checked} probed coordinates, max rel err "
        f"{result.max_rel_error:.3e} (< 1e-4), {elapsed:.2f}s (< 60s)",
    )


def test_criterion_4_oracle_equivalences():
    t0 = time.time()
    rng = np.random.default_rng(99)

    def random_interval(limit=80, max_len=40):
        start = int(rng.integers(0, limit))
        return TemporalInterval(start, start + int(rng.integers(4, max_len)))

    # labeling rules vs the literal three-rule oracle
    for _ in range(220):
        candidates = [
            CandidateSegment(iv, sample_frames(iv, 4), "v")
            for iv in (random_interval() for _ in range(int(rng.integers(1, 21))))
        ]
        gts = [
            GroundTruthInstance(random_interval(), int(rng.integers(1, 4)))
            for _ in range(int(rng.integers(0, 6)))
        ]
        ours = assign_labels(candidates, gts)
        for row, (label, overlap, role) in zip(ours, assign_labels_literal(candidates, gts)):
            assert (row.label, row.overlap, row.role) == (label, overlap, role)

    # NMS vs the greedy oracle
    for _ in range(220):
        dets = [
            Detection(
                video_id=str(rng.choice(["a", "b"])),
                interval=random_interval(),
                label=int(rng.integers(1, 3)),
                confidence=float(rng.uniform(0.05, 1.0)),
            )
            for _ in range(int(rng.integers(1, 16)))
        ]
        threshold = float(rng.uniform(0.2, 0.8))
        assert set(nms(dets, threshold)) == nms_greedy(dets, threshold)

    # evaluation matching + AP vs the literal evaluator
    from temploc.intervals import VideoAnnotation

    for _ in range(220):
        annotations = []
        for i in range(int(rng.integers(1, 5))):
            cursor, instances = 0, []
            for _ in range(int(rng.integers(1, 3))):
                start = cursor + int(rng.integers(0, 10))
                end = start + int(rng.integers(4, 20))
                if end > 95:
                    break
                instances.append(
                    GroundTruthInstance(TemporalInterval(start, end), int(rng.integers(1, 3)))
                )
                cursor = end + 1
            if not instances:
                instances = [GroundTruthInstance(TemporalInterval(0, 8), 1)]
            annotations.append(
                VideoAnnotation(f"v{i}", 100, tuple(instances), False)
            )
        dets = [
            Detection(
                f"v{int(rng.integers(0, len(annotations)))}", random_interval(80, 20),
                int(rng.integers(1, 3)), float(rng.uniform(0.05, 1.0)),
            )
            for _ in range(int(rng.integers(0, 11)))
        ]
        theta = float(rng.choice([0.3, 0.5, 0.7]))
        result = evaluate(dets, annotations, [theta], num_classes=2)
        oracle_ap, oracle_map = evaluate_literal(dets, annotations, theta)
        assert result.mean_ap[theta] == oracle_map
        for cls, value in oracle_ap.items():
            assert result.ap[theta][cls] == value

    elapsed = time.time() - t0
    ok = elapsed < 30.0
    report(
        4,
        ok,
        f"labeling, NMS, and evaluation match brute-force oracles exactly on "
        f"220 randomized instances each, {elapsed:.2f}s (< 30s)",
    )


@pytest.fixture(scope="module")
def desk_ablation(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("desk")
    cfg = load_config(REPO / "configs" / "desk.json")
    t0 = time.time()
    dataset = generate(cfg.data, tmp / "data", window_cfg=cfg.windows)
    result = run_ablation(dataset, cfg, seeds=[0, 1, 2])
    elapsed = time.time() - t0
    return dataset, result, elapsed


def _medians(result, variant):
    return statistics.median(result.map_by_variant(variant))


def _delta_medians(result, variant):
    full = result.map_by_variant("full")
    other = result.map_by_variant(variant)
    return statistics.median([f - o for f, o in zip(full, other)])


def test_criterion_5_ablation_trend(desk_ablation):
    dataset, result, elapsed = desk_ablation
    probe_ok = dataset.probe_accuracy > 0.9
    assert len(dataset.splits["test"]) == 40

    med_full = _medians(result, "full")
    checks = {}
    for variant in ("no_localization_loss", "no_classification_init"):
        checks[variant] = (
            med_full - _medians(result, variant),
            _delta_medians(result, variant),
        )
    ok = (
        probe_ok
        and elapsed < 900.0
        and all(dm > 0 and md > 0 for dm, md in checks.values())
    )
    detail = (
        f"probe {dataset.probe_accuracy:.3f} (> 0.9); median mAP@0.5 full "
        f"{med_full:.4f}; improvement over w/o-localization "
        f"{checks['no_localization_loss'][0]:+.4f} (median-of-deltas "
        f"{checks['no_localization_loss'][1]:+.4f}); over w/o-classification-init "
        f"{checks['no_classification_init'][0]:+.4f} (median-of-deltas "
        f"{checks['no_classification_init'][1]:+.4f}); all strictly positive; "
        f"runtime {elapsed:.0f}s (< 900s)"
    )
    report(5, ok, detail)


def test_criterion_6_proposal_filtering(desk_ablation):
    _, result, _ = desk_ablation
    full_scored = result.scored_by_variant("full")
    noprop_scored = result.scored_by_variant("no_proposal")
    strictly_fewer = all(f < n for f, n in zip(full_scored, noprop_scored))
    med_full = _medians(result, "full")
    med_noprop = _medians(result, "no_proposal")
    ok = strictly_fewer and med_full >= med_noprop - 0.02
    report(
        6,
        ok,
        f"localization scored {full_scored} segments with the proposal stage vs "
        f"{noprop_scored} without (strictly fewer per seed); median mAP@0.5 "
        f"{med_full:.4f} vs {med_noprop:.4f} (not lower by more than 0.02)",
    )


def test_criterion_7_alpha_stability(desk_ablation):
    _, result, _ = desk_ablation
    alphas = sorted({a for a, _, _ in result.alpha_sweep})
    assert alphas == [0.25, 0.5, 1.0]
    medians = {
        alpha: statistics.median([m for a, _, m in result.alpha_sweep if a == alpha])
        for alpha in alphas
    }
    spread = max(medians.values()) - min(medians.values())
    ok = spread <= 0.05
    report(
        7,
        ok,
        f"median mAP@0.5 per alpha {[f'{medians[a]:.4f}' for a in alphas]}, "
        f"range {spread:.4f} (<= 0.05)",
    )


def test_criterion_8_full_scale_numbers_out_of_scope():
    detail = (
        "absolute mAP numbers reported for full-scale video benchmarks (and "
        "their per-class AP histograms) are NOT reproducible at desk scale: "
        "they require a pretrained full-size 3D ConvNet backbone and the real "
        "video datasets, both deliberately out of scope here; criteria 5-7 "
        "replace them with direction-only checks on synthetic data"
    )
    report(8, True, detail)


def test_criterion_9_cli_determinism(tmp_path):
    config_doc = {
        "seed": 0,
        "data": {
            "num_classes": 2, "trimmed_per_class": 2, "untrimmed_train": 4,
            "untrimmed_test": 3, "untrimmed_frames": [64, 100],
            "resolution": [1, 8, 8], "instances_per_video": [1, 2],
            "action_length": [12, 32], "min_gap": 8, "noise_sigma": 0.4, "seed": 5,
        },
        "windows": {"lengths": [8, 16, 32], "overlap": 0.75, "sample_count": 8},
        "net": {"conv_filters": [2, 4], "temporal_pools": [[2, 2], [2, 2]],
                "fc_widths": [8]},
        "train": {
            "proposal": {"iterations": 40, "batch_size": 8, "base_lr": 3e-3,
                         "head_lr": 1e-2, "drop_interval": 30},
            "classification": {"iterations": 40, "batch_size": 8, "base_lr": 3e-3,
                               "head_lr": 1e-2, "drop_interval": 30},
            "localization": {"iterations": 20, "batch_size": 8, "base_lr": 3e-3,
                             "head_lr": 1e-2, "drop_interval": 15},
        },
    }

    artifacts = {}
    for run in ("a", "b"):
        base = tmp_path / run
        doc = json.loads(json.dumps(config_doc))
        doc["paths"] = {
            "dataset": str(base / "data"),
            "models": str(base / "models"),
            "detections": str(base / "detections.csv"),
            "results": str(base / "results"),
        }
        config_path = base / "config.json"
        base.mkdir()
        config_path.write_text(json.dumps(doc))
        assert main(["gen-data", "-c", str(config_path)]) == 0
        assert main(["train", "-c", str(config_path)]) == 0
        assert main(["predict", "-c", str(config_path)]) == 0
        assert main(["eval", "-c", str(config_path)]) == 0
        artifacts[run] = {
            "detections": (base / "detections.csv").read_bytes(),
            "results": (base / "results" / "results.csv").read_bytes(),
            "per_class": (base / "results" / "per_class.csv").read_bytes(),
        }

    same = all(artifacts["a"][k] == artifacts["b"][k] for k in artifacts["a"])
    report(
        9,
        same,
        "cmd_train + cmd_predict + cmd_eval rerun with the same config and seed "
        "produced byte-identical detections and results CSVs",
    )
