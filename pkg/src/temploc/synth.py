"""Synthetic trimmed/untrimmed video generator.

Videos are small (C, T, H, W) float tensors: Gaussian background noise plus
planted action instances.  Each class renders a moving blob with its own
lane, sweep direction, and period, so appearance alone is not enough and
the temporal axis carries the class signal; the lanes differ spatially per
class, which keeps time-averaged features linearly separable (checked by a
ridge-regression probe whose accuracy is stored in the dataset manifest).

Files per dataset: one tensor file per video (flat little-endian float32
with a small dims header), an annotation JSON, a label map, and a manifest
with splits, seed, and probe accuracy.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from temploc.intervals import (
    GroundTruthInstance,
    TemporalInterval,
    VideoAnnotation,
    load_annotations,
    save_annotations,
    save_label_map,
)
from temploc.windows import WindowConfig, generate_windows
from temploc.intervals import iou

TENSOR_MAGIC = b"VTEN"
TENSOR_VERSION = 1
_DTYPE_F32 = 0


@dataclass(frozen=True)
class SynthConfig:
    num_classes: int = 2
    trimmed_per_class: int = 6
    untrimmed_train: int = 12
    untrimmed_test: int = 40
    untrimmed_frames: tuple[int, int] = (72, 160)
    resolution: tuple[int, int, int] = (1, 8, 8)  # (C, H, W)
    instances_per_video: tuple[int, int] = (1, 3)
    action_length: tuple[int, int] = (16, 40)
    min_gap: int = 8
    noise_sigma: float = 0.3
    amplitude: float = 2.0
    blob_radius: float = 1.1
    base_period: int = 10
    bound: float = 6.0
    seed: int = 7

    def __post_init__(self) -> None:
        if self.num_classes < 1:
            raise ValueError(f"num_classes must be >= 1, got {self.num_classes}")
        for low, high, what in (
            (*self.untrimmed_frames, "untrimmed_frames"),
            (*self.instances_per_video, "instances_per_video"),
            (*self.action_length, "action_length"),
        ):
            if low < 1 or high < low:
                raise ValueError(f"{what} range ({low}, {high}) is invalid")
        if self.min_gap < 0:
            raise ValueError(f"min_gap must be >= 0, got {self.min_gap}")
        if min(self.resolution) < 1 or len(self.resolution) != 3:
            raise ValueError(f"resolution must be (C, H, W) >= 1, got {self.resolution}")
        if self.resolution[1] < 2 or self.resolution[2] < 2:
            raise ValueError("spatial resolution must be at least 2x2")
        if self.noise_sigma < 0 or self.amplitude <= 0 or self.bound <= 0:
            raise ValueError("noise_sigma >= 0, amplitude > 0, bound > 0 required")
        if self.base_period < 2:
            raise ValueError(f"base_period must be >= 2, got {self.base_period}")
        worst = (
            self.instances_per_video[1] * self.action_length[1]
            + (self.instances_per_video[1] - 1) * self.min_gap
        )
        if worst > self.untrimmed_frames[1]:
            raise ValueError(
                f"packing infeasible: {self.instances_per_video[1]} instances of up to "
                f"{self.action_length[1]} frames with gap {self.min_gap} need {worst} "
                f"frames, untrimmed maximum is {self.untrimmed_frames[1]}"
            )


@dataclass
class SynthDataset:
    root: Path
    annotations: dict[str, VideoAnnotation]
    splits: dict[str, tuple[str, ...]]
    label_map: dict[str, int]
    probe_accuracy: float
    probe_per_class: dict[int, float]
    seed: int

    @property
    def num_classes(self) -> int:
        return max(self.label_map.values())

    def load_video(self, video_id: str) -> np.ndarray:
        return read_tensor(self.root / "tensors" / f"{video_id}.vten").astype(np.float64)


# --- tensor files ------------------------------------------------------------


def write_tensor(path: str | Path, array: np.ndarray) -> None:
    array = np.asarray(array, dtype="<f4")
    with Path(path).open("wb") as fh:
        fh.write(TENSOR_MAGIC)
        fh.write(struct.pack("<III", TENSOR_VERSION, _DTYPE_F32, array.ndim))
        fh.write(struct.pack(f"<{array.ndim}I", *array.shape))
        fh.write(array.tobytes())


def read_tensor(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != TENSOR_MAGIC:
        raise ValueError(f"{path}: not a tensor file")
    version, dtype_tag, ndim = struct.unpack_from("<III", raw, 4)
    if version != TENSOR_VERSION or dtype_tag != _DTYPE_F32:
        raise ValueError(f"{path}: unsupported tensor format ({version}, {dtype_tag})")
    shape = struct.unpack_from(f"<{ndim}I", raw, 16)
    data = np.frombuffer(raw, dtype="<f4", offset=16 + 4 * ndim)
    if data.size != int(np.prod(shape)):
        raise ValueError(f"{path}: payload does not match header dims {shape}")
    return data.reshape(shape).copy()


# --- pattern rendering --------------------------------------------------------


def class_signature(category: int, cfg: SynthConfig) -> tuple[int, int, int]:
    """(sweep style, lane, period) for a class; styles cycle through
    left-right / top-down / right-left / bottom-up with distinct lanes."""
    style = (category - 1) % 4
    _, height, width = cfg.resolution
    lanes_h = (height // 4, (3 * height) // 4)
    lanes_w = (width // 4, (3 * width) // 4)
    lane = (lanes_h[0], lanes_w[1], lanes_h[1], lanes_w[0])[style]
    period = cfg.base_period + 2 * ((category - 1) // 4)
    return style, lane, period


def _render_instance(
    video: np.ndarray, interval: TemporalInterval, category: int, cfg: SynthConfig
) -> None:
    _, height, width = cfg.resolution
    style, lane, period = class_signature(category, cfg)
    rows = np.arange(height)[:, None]
    cols = np.arange(width)[None, :]
    for t in range(interval.start, interval.end):
        phase = ((t - interval.start) % period) / period
        if style == 0:
            ch, cw = float(lane), phase * (width - 1)
        elif style == 1:
            ch, cw = phase * (height - 1), float(lane)
        elif style == 2:
            ch, cw = float(lane), (1.0 - phase) * (width - 1)
        else:
            ch, cw = (1.0 - phase) * (height - 1), float(lane)
        blob = cfg.amplitude * np.exp(
            -((rows - ch) ** 2 + (cols - cw) ** 2) / (2.0 * cfg.blob_radius**2)
        )
        video[0, t] += blob


# --- generation ---------------------------------------------------------------


def _pack_instances(
    rng: np.random.Generator, cfg: SynthConfig
) -> tuple[int, list[tuple[TemporalInterval, int]]]:
    """Draw instance count/lengths/classes and a video length that fits them,
    then scatter the slack over the gaps."""
    count = int(rng.integers(cfg.instances_per_video[0], cfg.instances_per_video[1] + 1))
    lengths = rng.integers(
        cfg.action_length[0], cfg.action_length[1] + 1, size=count
    ).tolist()
    categories = rng.integers(1, cfg.num_classes + 1, size=count).tolist()
    needed = sum(lengths) + cfg.min_gap * (count - 1)
    low, high = cfg.untrimmed_frames
    if needed > high:
        raise ValueError(f"instances need {needed} frames, maximum video is {high}")
    total = int(rng.integers(max(needed, low), high + 1))
    extra = rng.multinomial(total - needed, np.full(count + 1, 1.0 / (count + 1)))
    instances = []
    cursor = int(extra[0])
    for i in range(count):
        instances.append(
            (TemporalInterval(cursor, cursor + lengths[i]), int(categories[i]))
        )
        cursor += lengths[i] + cfg.min_gap + int(extra[i + 1])
    return total, instances


def generate(
    cfg: SynthConfig,
    out_dir: str | Path,
    window_cfg: WindowConfig | None = None,
) -> SynthDataset:
    """Generate the dataset on disk; byte-identical given the same config.

    When ``window_cfg`` is given, every planted instance is verified to be
    recoverable (some window reaches IoU > 0.5 with it).
    """
    root = Path(out_dir)
    (root / "tensors").mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(cfg.seed)
    channels, height, width = cfg.resolution

    annotations: dict[str, VideoAnnotation] = {}
    splits: dict[str, list[str]] = {"trimmed": [], "train": [], "test": []}

    def emit(video_id: str, total: int, instances, trimmed: bool, split: str) -> None:
        video = rng.normal(0.0, cfg.noise_sigma, size=(channels, total, height, width))
        for interval, category in instances:
            _render_instance(video, interval, category, cfg)
        np.clip(video, -cfg.bound, cfg.bound, out=video)
        write_tensor(root / "tensors" / f"{video_id}.vten", video)
        annotations[video_id] = VideoAnnotation(
            video_id=video_id,
            total_frames=total,
            instances=tuple(
                GroundTruthInstance(interval=iv, category=cat) for iv, cat in instances
            ),
            trimmed=trimmed,
        )
        splits[split].append(video_id)

    index = 0
    for category in range(1, cfg.num_classes + 1):
        for _ in range(cfg.trimmed_per_class):
            total = int(rng.integers(cfg.action_length[0], cfg.action_length[1] + 1))
            emit(
                f"trim{index:03d}",
                total,
                [(TemporalInterval(0, total), category)],
                trimmed=True,
                split="trimmed",
            )
            index += 1

    for split, count in (("train", cfg.untrimmed_train), ("test", cfg.untrimmed_test)):
        for i in range(count):
            total, instances = _pack_instances(rng, cfg)
            emit(f"{split}{i:03d}", total, instances, trimmed=False, split=split)

    if window_cfg is not None:
        for ann in annotations.values():
            if ann.trimmed:
                continue
            windows = generate_windows(ann.total_frames, window_cfg)
            for inst in ann.instances:
                best = max(iou(w, inst.interval) for w in windows)
                if best <= 0.5:
                    raise ValueError(
                        f"{ann.video_id}: instance {inst.interval} unrecoverable, "
                        f"best window IoU {best:.3f}"
                    )

    label_map = {f"action{c}": c for c in range(1, cfg.num_classes + 1)}
    save_annotations(root / "annotations.json", annotations.values())
    save_label_map(root / "label_map.json", label_map)

    dataset = SynthDataset(
        root=root,
        annotations=annotations,
        splits={k: tuple(v) for k, v in splits.items()},
        label_map=label_map,
        probe_accuracy=0.0,
        probe_per_class={},
        seed=cfg.seed,
    )
    accuracy, per_class = bayes_separability_check(dataset)
    dataset.probe_accuracy = accuracy
    dataset.probe_per_class = per_class

    manifest = {
        "format_version": 1,
        "seed": cfg.seed,
        "num_classes": cfg.num_classes,
        "splits": {k: list(v) for k, v in dataset.splits.items()},
        "annotations": "annotations.json",
        "label_map": "label_map.json",
        "tensor_dir": "tensors",
        "probe_accuracy": accuracy,
        "probe_per_class": {str(k): v for k, v in per_class.items()},
    }
    (root / "manifest.json").write_text(json.dumps(manifest, indent=1) + "\n")
    return dataset


def load_dataset(root: str | Path) -> SynthDataset:
    root = Path(root)
    manifest = json.loads((root / "manifest.json").read_text())
    annotations = {a.video_id: a for a in load_annotations(root / manifest["annotations"])}
    label_map = {
        str(k): int(v) for k, v in json.loads((root / manifest["label_map"]).read_text()).items()
    }
    return SynthDataset(
        root=root,
        annotations=annotations,
        splits={k: tuple(v) for k, v in manifest["splits"].items()},
        label_map=label_map,
        probe_accuracy=float(manifest["probe_accuracy"]),
        probe_per_class={int(k): float(v) for k, v in manifest["probe_per_class"].items()},
        seed=int(manifest["seed"]),
    )


# --- separability probe -------------------------------------------------------


def _background_windows(ann: VideoAnnotation, max_length: int) -> list[TemporalInterval]:
    """One deterministic zero-overlap window per background gap."""
    marks = [0]
    for inst in sorted(ann.instances, key=lambda i: i.interval.start):
        marks += [inst.interval.start, inst.interval.end]
    marks.append(ann.total_frames)
    out = []
    for lo, hi in zip(marks[::2], marks[1::2]):
        gap = hi - lo
        if gap < 2:
            continue
        length = min(gap, max_length)
        start = lo + (gap - length) // 2
        out.append(TemporalInterval(start, start + length))
    return out


def bayes_separability_check(dataset: SynthDataset) -> tuple[float, dict[int, float]]:
    """Linear-probe sanity check that the classes are learnable at all.

    Fits a ridge one-hot regression on time-averaged instance tensors
    (classes 1..K) and background gap windows (class 0), using a
    deterministic per-class even/odd split, and reports held-out argmax
    accuracy, overall and per class.  Acceptance configs require > 0.9.
    """
    feats: list[np.ndarray] = []
    labels: list[int] = []
    max_len = 0
    for ann in dataset.annotations.values():
        for inst in ann.instances:
            max_len = max(max_len, inst.interval.length)
    for video_id in sorted(dataset.annotations):
        ann = dataset.annotations[video_id]
        video = dataset.load_video(video_id)
        for inst in ann.instances:
            window = video[:, inst.interval.start : inst.interval.end]
            feats.append(window.mean(axis=1).ravel())
            labels.append(inst.category)
        if not ann.trimmed:
            for gap in _background_windows(ann, max_len):
                window = video[:, gap.start : gap.end]
                feats.append(window.mean(axis=1).ravel())
                labels.append(0)

    x = np.column_stack([np.asarray(feats), np.ones(len(feats))])
    y = np.asarray(labels)
    fit_rows: list[int] = []
    eval_rows: list[int] = []
    for value in np.unique(y):
        group = np.flatnonzero(y == value)
        fit_rows.extend(group[::2])
        eval_rows.extend(group[1::2] if len(group) > 1 else group[:1])
    fit_rows.sort()
    eval_rows.sort()

    num_classes = dataset.num_classes
    onehot = np.eye(num_classes + 1)[y[fit_rows]]
    x_fit = x[fit_rows]
    gram = x_fit.T @ x_fit + 1e-8 * np.eye(x.shape[1])
    weights = np.linalg.solve(gram, x_fit.T @ onehot)
    predicted = (x[eval_rows] @ weights).argmax(axis=1)
    held_out = y[eval_rows]

    overall = float((predicted == held_out).mean())
    per_class = {
        int(c): float((predicted[held_out == c] == c).mean())
        for c in np.unique(held_out)
    }
    return overall, per_class
