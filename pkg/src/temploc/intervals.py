"""Temporal intervals, IoU arithmetic, and annotation containers.

Frame intervals are half-open ``[start, end)`` over 0-based integer frame
indices, so ``length == end - start`` with no off-by-one ambiguity.
Annotation JSON files use the same convention.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence


@dataclass(frozen=True, order=True)
class TemporalInterval:
    """Half-open frame interval [start, end)."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0:
            raise ValueError(f"interval start must be >= 0, got {self.start}")
        if self.end <= self.start:
            raise ValueError(
                f"interval must be non-empty: end ({self.end}) <= start ({self.start})"
            )

    @property
    def length(self) -> int:
        return self.end - self.start

    def shifted(self, offset: int) -> "TemporalInterval":
        return TemporalInterval(self.start + offset, self.end + offset)


@dataclass(frozen=True)
class GroundTruthInstance:
    """An annotated action instance: interval plus 1-based category id."""

    interval: TemporalInterval
    category: int

    def __post_init__(self) -> None:
        if self.category < 1:
            raise ValueError(f"ground-truth category must be >= 1, got {self.category}")


@dataclass(frozen=True)
class VideoAnnotation:
    video_id: str
    total_frames: int
    instances: tuple[GroundTruthInstance, ...]
    trimmed: bool

    def __post_init__(self) -> None:
        if self.total_frames < 1:
            raise ValueError(f"total_frames must be >= 1, got {self.total_frames}")
        for inst in self.instances:
            if inst.interval.end > self.total_frames:
                raise ValueError(
                    f"{self.video_id}: instance {inst.interval} exceeds "
                    f"video extent [0, {self.total_frames})"
                )
        if self.trimmed:
            if len(self.instances) != 1:
                raise ValueError(
                    f"{self.video_id}: trimmed video must carry exactly one instance, "
                    f"got {len(self.instances)}"
                )
            span = self.instances[0].interval
            if span.start != 0 or span.end != self.total_frames:
                raise ValueError(
                    f"{self.video_id}: trimmed instance must span the whole video, "
                    f"got {span} over {self.total_frames} frames"
                )


def iou(a: TemporalInterval, b: TemporalInterval) -> float:
    """Intersection-over-union of two frame intervals; 0.0 when disjoint."""
    inter = min(a.end, b.end) - max(a.start, b.start)
    if inter <= 0:
        return 0.0
    union = a.length + b.length - inter
    return inter / union


def best_overlap(
    candidate: TemporalInterval, gts: Sequence[GroundTruthInstance]
) -> tuple[float, int | None]:
    """Highest IoU of ``candidate`` over ``gts`` and the index attaining it.

    Returns ``(0.0, None)`` for an empty sequence.  Ties break to the lowest
    index.
    """
    best = 0.0
    best_idx: int | None = None
    for idx, gt in enumerate(gts):
        value = iou(candidate, gt.interval)
        if best_idx is None or value > best:
            best = value
            best_idx = idx
    if best_idx is None:
        return 0.0, None
    return best, best_idx


# --- annotation file I/O ---------------------------------------------------
#
# One JSON document per dataset: a list of video records
#   {"id": str, "frames": int, "trimmed": bool,
#    "instances": [{"start": int, "end": int, "class": int}]}
# Class ids are 1-based ints; a separate label-map file {name: id} carries
# human-readable names.


def load_annotations(path: str | Path) -> list[VideoAnnotation]:
    records = json.loads(Path(path).read_text())
    if not isinstance(records, list):
        raise ValueError(f"{path}: annotation document must be a JSON list")
    annotations = []
    for rec in records:
        instances = tuple(
            GroundTruthInstance(
                interval=TemporalInterval(int(inst["start"]), int(inst["end"])),
                category=int(inst["class"]),
            )
            for inst in rec["instances"]
        )
        annotations.append(
            VideoAnnotation(
                video_id=str(rec["id"]),
                total_frames=int(rec["frames"]),
                instances=instances,
                trimmed=bool(rec["trimmed"]),
            )
        )
    return annotations


def save_annotations(path: str | Path, annotations: Iterable[VideoAnnotation]) -> None:
    records = [
        {
            "id": ann.video_id,
            "frames": ann.total_frames,
            "trimmed": ann.trimmed,
            "instances": [
                {
                    "start": inst.interval.start,
                    "end": inst.interval.end,
                    "class": inst.category,
                }
                for inst in ann.instances
            ],
        }
        for ann in annotations
    ]
    Path(path).write_text(json.dumps(records, indent=1) + "\n")


def load_label_map(path: str | Path) -> dict[str, int]:
    """Label-map file: {class name -> class id}, ids 1-based."""
    raw = json.loads(Path(path).read_text())
    label_map = {str(name): int(idx) for name, idx in raw.items()}
    for name, idx in label_map.items():
        if idx < 1:
            raise ValueError(f"label map id for {name!r} must be >= 1, got {idx}")
    return label_map


def save_label_map(path: str | Path, label_map: dict[str, int]) -> None:
    Path(path).write_text(json.dumps(label_map, indent=1, sort_keys=True) + "\n")
