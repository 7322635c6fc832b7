"""Retrieval-style evaluation: greedy matching, per-class AP, mAP per IoU
threshold.

A detection is a true positive when some unmatched ground truth of the same
class in the same video has IoU strictly greater than the threshold; each
ground truth allows one detection, matched greedily in confidence order to
its highest-IoU unmatched ground truth.  AP is uninterpolated by default
(an 11-point interpolated switch exists for sensitivity checks); mAP
averages classes that have at least one ground truth.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from temploc.intervals import TemporalInterval, VideoAnnotation, iou
from temploc.pipeline import Detection, detection_rank_key


@dataclass(frozen=True)
class MatchVerdict:
    detection: Detection
    is_tp: bool
    gt_index: int | None  # index into the class's ground-truth list


def match_detections(
    dets: Sequence[Detection],
    gts: Sequence[tuple[str, TemporalInterval]],
    threshold: float,
) -> list[MatchVerdict]:
    """Greedy one-class matching; re-sorts detections by confidence first.

    A detection consumes the highest-IoU unmatched same-video ground truth
    with IoU > threshold (ties to the lowest ground-truth index).
    """
    ordered = sorted(dets, key=detection_rank_key)
    taken = [False] * len(gts)
    verdicts = []
    for det in ordered:
        best_index: int | None = None
        best_iou = threshold
        for index, (video_id, interval) in enumerate(gts):
            if taken[index] or video_id != det.video_id:
                continue
            value = iou(det.interval, interval)
            if value > best_iou:
                best_iou = value
                best_index = index
        if best_index is None:
            verdicts.append(MatchVerdict(det, is_tp=False, gt_index=None))
        else:
            taken[best_index] = True
            verdicts.append(MatchVerdict(det, is_tp=True, gt_index=best_index))
    return verdicts


def average_precision(
    verdicts: Sequence[bool], gt_count: int, interpolated: bool = False
) -> float:
    """AP over a confidence-ranked verdict list.

    Uninterpolated: sum of precision at each true-positive rank, divided by
    the ground-truth count.  Interpolated: the 11-point variant.
    """
    if gt_count < 1:
        raise ValueError("AP is undefined without ground truths")
    if not verdicts:
        return 0.0
    tp = 0
    precisions = []
    recalls = []
    for rank, is_tp in enumerate(verdicts, start=1):
        if is_tp:
            tp += 1
        precisions.append(tp / rank)
        recalls.append(tp / gt_count)
    if not interpolated:
        return sum(p for p, v in zip(precisions, verdicts) if v) / gt_count
    total = 0.0
    for level in (i / 10.0 for i in range(11)):
        total += max(
            (p for p, r in zip(precisions, recalls) if r >= level), default=0.0
        )
    return total / 11.0


def top_k_filter(dets: Sequence[Detection], k: int) -> list[Detection]:
    """Keep the k highest-confidence detections globally."""
    if k < 0:
        raise ValueError(f"k must be >= 0, got {k}")
    return sorted(dets, key=detection_rank_key)[:k]


@dataclass
class EvalResult:
    thresholds: tuple[float, ...]
    classes: tuple[int, ...]  # classes with >= 1 ground truth, ascending
    ap: dict[float, dict[int, float]]  # threshold -> class -> AP
    mean_ap: dict[float, float]

    def table_rows(self) -> list[list[str]]:
        header = ["class"] + [f"theta_{t:g}" for t in self.thresholds]
        rows = [header]
        for cls in self.classes:
            rows.append([str(cls)] + [f"{self.ap[t][cls]:.6f}" for t in self.thresholds])
        rows.append(["mAP"] + [f"{self.mean_ap[t]:.6f}" for t in self.thresholds])
        return rows


def evaluate(
    dets: Sequence[Detection],
    annotations: Iterable[VideoAnnotation] | Mapping[str, VideoAnnotation],
    thresholds: Sequence[float],
    num_classes: int | None = None,
    interpolated: bool = False,
) -> EvalResult:
    """Per-class AP and mAP for every threshold.

    Classes without ground truth are excluded from mAP; a detection with a
    class id outside 1..K is a hard error.
    """
    if isinstance(annotations, Mapping):
        annotations = list(annotations.values())
    gts_by_class: dict[int, list[tuple[str, TemporalInterval]]] = {}
    for ann in annotations:
        for inst in ann.instances:
            gts_by_class.setdefault(inst.category, []).append(
                (ann.video_id, inst.interval)
            )
    if not gts_by_class:
        raise ValueError("annotations carry no ground-truth instances")
    if num_classes is None:
        num_classes = max(gts_by_class)
    elif max(gts_by_class) > num_classes:
        raise ValueError(
            f"annotations carry class {max(gts_by_class)} beyond K = {num_classes}"
        )

    dets_by_class: dict[int, list[Detection]] = {}
    for det in dets:
        if not 1 <= det.label <= num_classes:
            raise ValueError(f"detection class {det.label} unknown (K = {num_classes})")
        dets_by_class.setdefault(det.label, []).append(det)

    classes = tuple(sorted(gts_by_class))
    ap: dict[float, dict[int, float]] = {}
    mean_ap: dict[float, float] = {}
    for threshold in thresholds:
        per_class = {}
        for cls in classes:
            verdicts = match_detections(
                dets_by_class.get(cls, []), gts_by_class[cls], threshold
            )
            per_class[cls] = average_precision(
                [v.is_tp for v in verdicts], len(gts_by_class[cls]), interpolated
            )
        ap[threshold] = per_class
        mean_ap[threshold] = sum(per_class.values()) / len(classes)
    return EvalResult(
        thresholds=tuple(thresholds), classes=classes, ap=ap, mean_ap=mean_ap
    )


def write_results_csv(path: str | Path, result: EvalResult) -> None:
    """Threshold x class AP grid plus the mAP row."""
    with Path(path).open("w", newline="") as fh:
        csv.writer(fh).writerows(result.table_rows())


def write_per_class_csv(path: str | Path, result: EvalResult, threshold: float) -> None:
    """Per-class AP histogram at one threshold."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["class", "ap"])
        for cls in result.classes:
            writer.writerow([cls, f"{result.ap[threshold][cls]:.6f}"])
