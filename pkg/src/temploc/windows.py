"""Multi-scale sliding-window generation and uniform frame sampling.

Candidate segments are produced per window length with a stride of
``round(length * (1 - overlap))`` (round half up, clamped to >= 1), then a
fixed number of frame indices is sampled uniformly from each window.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from temploc.intervals import TemporalInterval


@dataclass(frozen=True)
class WindowConfig:
    lengths: tuple[int, ...] = (16, 32, 64, 128, 256, 512)
    overlap: float = 0.75
    sample_count: int = 16

    def __post_init__(self) -> None:
        if not self.lengths:
            raise ValueError("window lengths must be non-empty")
        if self.sample_count < 1:
            raise ValueError(f"sample_count must be >= 1, got {self.sample_count}")
        if not 0.0 <= self.overlap < 1.0:
            raise ValueError(f"overlap must be in [0, 1), got {self.overlap}")
        for length in self.lengths:
            if length < self.sample_count:
                raise ValueError(
                    f"window length {length} shorter than sample_count {self.sample_count}"
                )

    def stride(self, length: int) -> int:
        # round half up; the exact-half case matters for odd length*(1-overlap)
        return max(1, int(length * (1.0 - self.overlap) + 0.5))


@dataclass(frozen=True)
class CandidateSegment:
    """A window plus the frame indices sampled from it."""

    interval: TemporalInterval
    frames: tuple[int, ...]
    video_id: str

    def __post_init__(self) -> None:
        prev = None
        for f in self.frames:
            if not self.interval.start <= f < self.interval.end:
                raise ValueError(f"sampled frame {f} outside interval {self.interval}")
            if prev is not None and f < prev:
                raise ValueError("sampled frames must be nondecreasing")
            prev = f


def generate_windows(total_frames: int, cfg: WindowConfig) -> list[TemporalInterval]:
    """All sliding windows over a video of ``total_frames`` frames.

    Ordered by (length, start).  Lengths longer than the video are skipped;
    a video shorter than every configured length is rejected.
    """
    if total_frames < min(cfg.lengths):
        raise ValueError(
            f"video of {total_frames} frames is shorter than the smallest "
            f"window length {min(cfg.lengths)}"
        )
    out = []
    for length in sorted(cfg.lengths):
        if length > total_frames:
            continue
        stride = cfg.stride(length)
        for start in range(0, total_frames - length + 1, stride):
            out.append(TemporalInterval(start, start + length))
    return out


def sample_frames(interval: TemporalInterval, count: int) -> tuple[int, ...]:
    """Uniformly sample ``count`` frame indices from the interval.

    index_i = start + floor(i * length / count); the identity enumeration
    when count == length.
    """
    if count < 1:
        raise ValueError(f"sample count must be >= 1, got {count}")
    length = interval.length
    return tuple(interval.start + (i * length) // count for i in range(count))


def make_segments(
    video_id: str, total_frames: int, cfg: WindowConfig
) -> list[CandidateSegment]:
    return [
        CandidateSegment(
            interval=window,
            frames=sample_frames(window, cfg.sample_count),
            video_id=video_id,
        )
        for window in generate_windows(total_frames, cfg)
    ]


def segment_tensor(video: np.ndarray, segment: CandidateSegment) -> np.ndarray:
    """Gather the segment's sampled frames from a (C, T, H, W) video tensor."""
    if video.ndim != 4:
        raise ValueError(f"expected a (C, T, H, W) video tensor, got shape {video.shape}")
    total = video.shape[1]
    for f in segment.frames:
        if not 0 <= f < total:
            raise ValueError(
                f"segment frame {f} out of range for video with {total} frames"
            )
    return video[:, list(segment.frames)]
