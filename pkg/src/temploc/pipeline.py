"""Three-stage training and prediction pipeline.

Training: the proposal network learns action-vs-background on a balanced
two-way set; the classification network learns (K+1)-way labels; the
localization network fine-tunes the classification weights under the
combined overlap-aware loss.  Prediction: sliding-window segments are
filtered by the proposal score, scored by the localization network,
rescored by a class/window-length frequency prior, and deduplicated with
per-class NMS.  Ablation flags switch each stage off to reproduce the
"without X" variants.
"""

from __future__ import annotations

import csv
from collections import defaultdict
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from temploc.intervals import GroundTruthInstance, TemporalInterval, iou
from temploc.labeling import (
    AssignedLabel,
    LabeledSample,
    LabelingThresholds,
    assign_labels,
    build_classification_set,
    build_localization_set,
    build_proposal_set,
)
from temploc.losses import LossConfig
from temploc.net import model as net_model
from temploc.net.train import SgdConfig, TrainingSet, TrainRecord, train
from temploc.windows import CandidateSegment, WindowConfig, make_segments, sample_frames, segment_tensor


@dataclass(frozen=True)
class Detection:
    video_id: str
    interval: TemporalInterval
    label: int
    confidence: float

    def __post_init__(self) -> None:
        if self.label < 1:
            raise ValueError("detections are never background (label >= 1)")
        if not 0.0 < self.confidence <= 1.0:
            raise ValueError(f"confidence must be in (0, 1], got {self.confidence}")


def detection_rank_key(det: Detection):
    """Confidence-descending order with a deterministic tie-break."""
    return (-det.confidence, det.video_id, det.interval.start, det.interval.length, det.label)


@dataclass(frozen=True)
class FrequencyPrior:
    """Per-class frequency of ground-truth lengths over the window lengths."""

    lengths: tuple[int, ...]
    table: tuple[tuple[float, ...], ...]  # rows = classes 1..K, normalized

    def __post_init__(self) -> None:
        for row in self.table:
            if len(row) != len(self.lengths):
                raise ValueError("prior table width does not match window lengths")
            if any(f < 0 for f in row):
                raise ValueError("prior frequencies must be >= 0")
            if abs(sum(row) - 1.0) > 1e-9:
                raise ValueError("prior rows must sum to 1")

    def value(self, category: int, window_length: int) -> float:
        if not 1 <= category <= len(self.table):
            raise ValueError(f"unknown category {category}")
        try:
            column = self.lengths.index(window_length)
        except ValueError:
            raise ValueError(f"window length {window_length} not in prior") from None
        return self.table[category - 1][column]

    def to_dict(self) -> dict:
        return {"lengths": list(self.lengths), "table": [list(r) for r in self.table]}

    @staticmethod
    def from_dict(doc: dict) -> "FrequencyPrior":
        return FrequencyPrior(
            lengths=tuple(int(v) for v in doc["lengths"]),
            table=tuple(tuple(float(f) for f in row) for row in doc["table"]),
        )


def compute_frequency_prior(
    gts: Sequence[GroundTruthInstance],
    window_lengths: Sequence[int],
    num_classes: int,
) -> FrequencyPrior:
    """Histogram ground-truth lengths into the nearest window length (ties to
    the shorter), per class; unseen cells get a 1/(10K) floor before the
    per-class normalization so no confidence is zeroed outright."""
    if not gts:
        raise ValueError("frequency prior needs at least one ground-truth instance")
    lengths = tuple(sorted(window_lengths))
    counts = np.zeros((num_classes, len(lengths)))
    for gt in gts:
        gaps = [abs(length - gt.interval.length) for length in lengths]
        column = gaps.index(min(gaps))  # sorted ascending, so ties pick the shorter
        counts[gt.category - 1, column] += 1.0
    counts[counts == 0.0] = 1.0 / (10.0 * num_classes)
    table = counts / counts.sum(axis=1, keepdims=True)
    return FrequencyPrior(lengths=lengths, table=tuple(tuple(row) for row in table))


@dataclass(frozen=True)
class PipelineConfig:
    windows: WindowConfig
    thresholds: LabelingThresholds
    loss: LossConfig
    net: net_model.NetConfig
    proposal_sgd: SgdConfig
    classification_sgd: SgdConfig
    localization_sgd: SgdConfig
    input_shape: tuple[int, int, int, int]
    num_classes: int
    proposal_threshold: float = 0.7
    nms_offset: float = 0.1
    eval_threshold: float = 0.5
    use_proposal: bool = True
    use_classification_init: bool = True
    use_localization_loss: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.proposal_threshold < 1.0:
            raise ValueError(
                f"proposal threshold must be in (0, 1), got {self.proposal_threshold}"
            )
        if self.eval_threshold - self.nms_offset <= 0.0:
            raise ValueError(
                f"NMS threshold (eval {self.eval_threshold} - offset {self.nms_offset}) "
                "must be positive"
            )
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        if self.input_shape[1] != self.windows.sample_count:
            raise ValueError(
                f"network temporal extent {self.input_shape[1]} must equal the "
                f"window sample count {self.windows.sample_count}"
            )

    @property
    def nms_threshold(self) -> float:
        return self.eval_threshold - self.nms_offset


@dataclass
class TrainedModels:
    proposal: net_model.ModelParams
    classification: net_model.ModelParams
    localization: net_model.ModelParams
    prior: FrequencyPrior


@dataclass
class TrainingSummary:
    proposal_log: list[TrainRecord]
    classification_log: list[TrainRecord]
    localization_log: list[TrainRecord]
    assigned: list[AssignedLabel]
    set_sizes: dict[str, int]


class _VideoSource:
    """Caches per-video tensors while a stage's samples are gathered."""

    def __init__(self, dataset) -> None:
        self._dataset = dataset
        self._cache: dict[str, np.ndarray] = {}

    def video(self, video_id: str) -> np.ndarray:
        if video_id not in self._cache:
            self._cache[video_id] = self._dataset.load_video(video_id)
        return self._cache[video_id]


def _gather(source: _VideoSource, samples: Sequence[LabeledSample]) -> TrainingSet:
    inputs = np.stack(
        [segment_tensor(source.video(s.segment.video_id), s.segment) for s in samples]
    )
    labels = np.array([s.label for s in samples], dtype=np.int64)
    overlaps = np.array([s.overlap for s in samples])
    return TrainingSet(inputs=inputs, labels=labels, overlaps=overlaps)


def _trimmed_samples(dataset, cfg: PipelineConfig) -> list[LabeledSample]:
    samples = []
    for video_id in dataset.splits["trimmed"]:
        ann = dataset.annotations[video_id]
        if ann.total_frames < cfg.windows.sample_count:
            raise ValueError(
                f"{video_id}: trimmed video of {ann.total_frames} frames is shorter "
                f"than the {cfg.windows.sample_count}-frame sample count"
            )
        interval = TemporalInterval(0, ann.total_frames)
        segment = CandidateSegment(
            interval=interval,
            frames=sample_frames(interval, cfg.windows.sample_count),
            video_id=video_id,
        )
        samples.append(
            LabeledSample(segment=segment, label=ann.instances[0].category, overlap=1.0)
        )
    return samples


def train_pipeline(dataset, cfg: PipelineConfig) -> tuple[TrainedModels, TrainingSummary]:
    """Train the proposal, classification, and localization networks plus the
    frequency prior on the dataset's trimmed + train splits."""
    train_gts: list[GroundTruthInstance] = []
    for split in ("trimmed", "train"):
        for video_id in dataset.splits[split]:
            train_gts.extend(dataset.annotations[video_id].instances)
    seen = {gt.category for gt in train_gts}
    missing = sorted(set(range(1, cfg.num_classes + 1)) - seen)
    if missing:
        raise ValueError(f"training data has no instances for classes {missing}")

    assigned: list[AssignedLabel] = []
    for video_id in dataset.splits["train"]:
        ann = dataset.annotations[video_id]
        if ann.total_frames < min(cfg.windows.lengths):
            raise ValueError(
                f"{video_id}: untrimmed training video of {ann.total_frames} frames "
                f"is shorter than the smallest window"
            )
        candidates = make_segments(video_id, ann.total_frames, cfg.windows)
        assigned.extend(assign_labels(candidates, list(ann.instances), cfg.thresholds))

    trimmed = _trimmed_samples(dataset, cfg)
    proposal_set = build_proposal_set(assigned, trimmed, seed=cfg.proposal_sgd.seed)
    cls_set = build_classification_set(
        assigned, trimmed, cfg.num_classes, seed=cfg.classification_sgd.seed
    )
    loc_set = build_localization_set(cls_set)

    source = _VideoSource(dataset)
    softmax_only = replace(cfg.loss, mode="softmax-only")
    proposal_arch = cfg.net.architecture(cfg.input_shape, 2)
    stage_arch = cfg.net.architecture(cfg.input_shape, cfg.num_classes + 1)

    proposal_params, proposal_log = train(
        _gather(source, proposal_set), proposal_arch, cfg.proposal_sgd, softmax_only
    )
    cls_params, cls_log = train(
        _gather(source, cls_set), stage_arch, cfg.classification_sgd, softmax_only
    )
    loc_loss = cfg.loss if cfg.use_localization_loss else replace(cfg.loss, lam=0.0)
    loc_params, loc_log = train(
        _gather(source, loc_set),
        stage_arch,
        cfg.localization_sgd,
        loc_loss,
        init=cls_params if cfg.use_classification_init else None,
    )

    prior = compute_frequency_prior(train_gts, cfg.windows.lengths, cfg.num_classes)
    models = TrainedModels(
        proposal=proposal_params,
        classification=cls_params,
        localization=loc_params,
        prior=prior,
    )
    summary = TrainingSummary(
        proposal_log=proposal_log,
        classification_log=cls_log,
        localization_log=loc_log,
        assigned=assigned,
        set_sizes={
            "proposal": len(proposal_set),
            "classification": len(cls_set),
            "localization": len(loc_set),
        },
    )
    return models, summary


# --- prediction ---------------------------------------------------------------


@dataclass
class PredictAudit:
    windows_total: int = 0
    proposal_survivors: int = 0
    localization_scored: int = 0

    def merge(self, other: "PredictAudit") -> None:
        self.windows_total += other.windows_total
        self.proposal_survivors += other.proposal_survivors
        self.localization_scored += other.localization_scored


def _batched_probs(params: net_model.ModelParams, x: np.ndarray, chunk: int = 256) -> np.ndarray:
    rows = []
    for start in range(0, len(x), chunk):
        rows.append(net_model.predict_scores(params, x[start : start + chunk]).probs)
    return np.concatenate(rows, axis=0)


def nms(dets: Sequence[Detection], threshold: float) -> list[Detection]:
    """Greedy per-class (and per-video) NMS: repeatedly keep the highest
    confidence detection and drop same-class detections with IoU >= threshold
    against it.  Ties break to the earlier start, then the shorter length."""
    if not 0.0 < threshold < 1.0:
        raise ValueError(f"NMS threshold must be in (0, 1), got {threshold}")
    groups: dict[tuple[str, int], list[Detection]] = defaultdict(list)
    for det in dets:
        groups[(det.video_id, det.label)].append(det)
    kept: list[Detection] = []
    for key in sorted(groups):
        pool = sorted(
            groups[key],
            key=lambda d: (-d.confidence, d.interval.start, d.interval.length),
        )
        while pool:
            top = pool.pop(0)
            kept.append(top)
            pool = [d for d in pool if iou(d.interval, top.interval) < threshold]
    return sorted(kept, key=detection_rank_key)


def predict(
    video: np.ndarray,
    video_id: str,
    total_frames: int,
    models: TrainedModels,
    cfg: PipelineConfig,
) -> tuple[list[Detection], PredictAudit]:
    """Detections for one video, sorted by confidence descending.

    A video shorter than every window yields an empty list, not an error.
    """
    audit = PredictAudit()
    if total_frames < min(cfg.windows.lengths):
        return [], audit
    segments = make_segments(video_id, total_frames, cfg.windows)
    audit.windows_total = len(segments)
    inputs = np.stack([segment_tensor(video, s) for s in segments])

    if cfg.use_proposal:
        action_prob = _batched_probs(models.proposal, inputs)[:, 1]
        keep = action_prob >= cfg.proposal_threshold
        segments = [s for s, flag in zip(segments, keep) if flag]
        inputs = inputs[keep]
    audit.proposal_survivors = len(segments)
    audit.localization_scored = len(segments)
    if not segments:
        return [], audit

    probs = _batched_probs(models.localization, inputs)
    labels = probs.argmax(axis=1)
    candidates: list[Detection] = []
    for segment, label, row in zip(segments, labels, probs):
        if label == 0:
            continue
        confidence = float(row[label]) * models.prior.value(
            int(label), segment.interval.length
        )
        candidates.append(
            Detection(
                video_id=video_id,
                interval=segment.interval,
                label=int(label),
                confidence=confidence,
            )
        )

    detections = nms(candidates, cfg.nms_threshold)
    if cfg.use_proposal:
        surviving = {s.interval for s in segments}
        for det in detections:
            assert det.interval in surviving, "detection bypassed the proposal filter"
    return detections, audit


# --- detections CSV -----------------------------------------------------------


def write_detections_csv(path: str | Path, dets: Iterable[Detection]) -> None:
    ordered = sorted(dets, key=detection_rank_key)
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "start", "end", "class", "confidence"])
        for det in ordered:
            writer.writerow(
                [det.video_id, det.interval.start, det.interval.end, det.label,
                 repr(det.confidence)]
            )


def read_detections_csv(path: str | Path) -> list[Detection]:
    out = []
    with Path(path).open(newline="") as fh:
        for row in csv.DictReader(fh):
            out.append(
                Detection(
                    video_id=row["video_id"],
                    interval=TemporalInterval(int(row["start"]), int(row["end"])),
                    label=int(row["class"]),
                    confidence=float(row["confidence"]),
                )
            )
    return out
