"""Training-set construction from candidate segments.

Per-candidate labels follow three rules: best IoU above the positive
threshold makes a positive, below the background threshold makes a
background, anything between is left out of training.  A rescue pass then
gives each otherwise-uncovered ground truth its single best candidate when
that candidate clears the rescue threshold.  Balanced proposal /
classification / localization sets are sampled from the labeled pool.
"""

from __future__ import annotations

import csv
import logging
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from temploc.intervals import GroundTruthInstance, iou
from temploc.windows import CandidateSegment

logger = logging.getLogger(__name__)

POSITIVE = "positive"
BACKGROUND = "background"
UNLABELED = "unlabeled"


@dataclass(frozen=True)
class LabelingThresholds:
    positive_iou: float = 0.7
    background_iou: float = 0.3
    rescue_iou: float = 0.5

    def __post_init__(self) -> None:
        if not self.background_iou < self.rescue_iou <= self.positive_iou:
            raise ValueError(
                "thresholds must satisfy background < rescue <= positive, got "
                f"{self.background_iou} / {self.rescue_iou} / {self.positive_iou}"
            )


@dataclass(frozen=True)
class AssignedLabel:
    """Per-candidate labeling outcome; unlabeled rows never enter training."""

    segment: CandidateSegment
    label: int
    overlap: float
    role: str


@dataclass(frozen=True)
class LabeledSample:
    """A training sample: segment, class label k (0 = background), overlap v.

    Background overlap is a sentinel 1.0; it never enters the loss.
    """

    segment: CandidateSegment
    label: int
    overlap: float

    def __post_init__(self) -> None:
        if self.label < 0:
            raise ValueError(f"label must be >= 0, got {self.label}")
        if self.label == 0 and self.overlap != 1.0:
            raise ValueError("background samples carry the sentinel overlap 1.0")
        if not 0.0 < self.overlap <= 1.0:
            raise ValueError(f"overlap must be in (0, 1], got {self.overlap}")


def assign_labels(
    candidates: Sequence[CandidateSegment],
    gts: Sequence[GroundTruthInstance],
    thresholds: LabelingThresholds = LabelingThresholds(),
) -> list[AssignedLabel]:
    """Label every candidate of one untrimmed video.

    With no ground truths every candidate becomes background.  The rescue
    pass assigns each uncovered ground truth its best candidate; when one
    candidate is the best for several ground truths, the higher IoU wins
    (ties to the lower ground-truth index).
    """
    if not gts:
        return [
            AssignedLabel(c, label=0, overlap=1.0, role=BACKGROUND) for c in candidates
        ]

    matrix = [[iou(c.interval, gt.interval) for gt in gts] for c in candidates]

    labels: list[int] = []
    overlaps: list[float] = []
    roles: list[str] = []
    for row in matrix:
        best = max(row)
        best_gt = row.index(best)
        if best > thresholds.positive_iou:
            labels.append(gts[best_gt].category)
            overlaps.append(best)
            roles.append(POSITIVE)
        elif best < thresholds.background_iou:
            labels.append(0)
            overlaps.append(1.0)
            roles.append(BACKGROUND)
        else:
            labels.append(0)
            overlaps.append(1.0)
            roles.append(UNLABELED)

    # Rescue uncovered ground truths: those with no candidate above the
    # positive threshold take their single highest-IoU candidate.
    rescued_for: dict[int, tuple[float, int]] = {}  # candidate -> (iou, gt index)
    for gt_idx, gt in enumerate(gts):
        column = [row[gt_idx] for row in matrix]
        if not column or max(column) > thresholds.positive_iou:
            continue
        cand_idx = column.index(max(column))
        value = column[cand_idx]
        if value <= thresholds.rescue_iou:
            continue
        if roles[cand_idx] == POSITIVE:
            # already positive for another ground truth with at least this IoU
            continue
        if cand_idx in rescued_for and rescued_for[cand_idx][0] >= value:
            continue
        rescued_for[cand_idx] = (value, gt_idx)

    for cand_idx, (value, gt_idx) in rescued_for.items():
        labels[cand_idx] = gts[gt_idx].category
        overlaps[cand_idx] = value
        roles[cand_idx] = POSITIVE

    return [
        AssignedLabel(c, label=k, overlap=v, role=r)
        for c, k, v, r in zip(candidates, labels, overlaps, roles)
    ]


def _merge_order(sample: AssignedLabel | LabeledSample):
    seg = sample.segment
    return (seg.video_id, seg.interval.start, seg.interval.length)


def _split_pool(
    assigned: Sequence[AssignedLabel],
) -> tuple[list[AssignedLabel], list[AssignedLabel]]:
    ordered = sorted(assigned, key=_merge_order)
    positives = [a for a in ordered if a.role == POSITIVE]
    backgrounds = [a for a in ordered if a.role == BACKGROUND]
    return positives, backgrounds


def _sample_backgrounds(
    backgrounds: Sequence[AssignedLabel], target: int, seed: int
) -> list[AssignedLabel]:
    if target >= len(backgrounds):
        if target > len(backgrounds):
            logger.warning(
                "background pool exhausted: wanted %d, have %d", target, len(backgrounds)
            )
        return list(backgrounds)
    picked = random.Random(seed).sample(range(len(backgrounds)), target)
    return [backgrounds[i] for i in sorted(picked)]


def build_proposal_set(
    assigned: Sequence[AssignedLabel],
    trimmed: Sequence[LabeledSample],
    seed: int = 0,
) -> list[LabeledSample]:
    """Two-way training set: all positives (label collapsed to 1) plus about
    as many uniformly sampled backgrounds."""
    positives, backgrounds = _split_pool(assigned)
    pos_samples = sorted(trimmed, key=_merge_order)
    pos_samples = [
        LabeledSample(s.segment, label=1, overlap=s.overlap) for s in pos_samples
    ] + [LabeledSample(a.segment, label=1, overlap=a.overlap) for a in positives]
    if not pos_samples:
        raise ValueError("no positive segments; the proposal network is untrainable")
    chosen = _sample_backgrounds(backgrounds, len(pos_samples), seed)
    return pos_samples + [
        LabeledSample(a.segment, label=0, overlap=1.0) for a in chosen
    ]


def build_classification_set(
    assigned: Sequence[AssignedLabel],
    trimmed: Sequence[LabeledSample],
    num_classes: int,
    seed: int = 0,
) -> list[LabeledSample]:
    """(K+1)-way training set: positives keep class labels, background count
    reduced to ceil(positives / K) to balance the classes."""
    if num_classes < 1:
        raise ValueError(f"num_classes must be >= 1, got {num_classes}")
    positives, backgrounds = _split_pool(assigned)
    pos_samples = sorted(trimmed, key=_merge_order)
    pos_samples = list(pos_samples) + [
        LabeledSample(a.segment, label=a.label, overlap=a.overlap) for a in positives
    ]
    if not pos_samples:
        raise ValueError("no positive segments; the classification network is untrainable")
    target = -(-len(pos_samples) // num_classes)  # ceil division
    chosen = _sample_backgrounds(backgrounds, target, seed)
    return pos_samples + [
        LabeledSample(a.segment, label=0, overlap=1.0) for a in chosen
    ]


def build_localization_set(cls_set: Sequence[LabeledSample]) -> list[LabeledSample]:
    """The localization set reuses the classification samples; each already
    carries its overlap measurement (1.0 for trimmed positives and for
    backgrounds, IoU for untrimmed positives)."""
    return list(cls_set)


def write_labeling_report(
    path: str | Path, assigned: Sequence[AssignedLabel]
) -> None:
    """Debug CSV: one row per candidate with its label, overlap, and role."""
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["video_id", "start", "end", "label", "overlap", "role"])
        for a in assigned:
            writer.writerow(
                [
                    a.segment.video_id,
                    a.segment.interval.start,
                    a.segment.interval.end,
                    a.label,
                    f"{a.overlap:.6f}",
                    a.role,
                ]
            )
