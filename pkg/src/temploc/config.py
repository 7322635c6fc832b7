"""Run configuration: one JSON document drives every command.

Sub-sections mirror the module configs (data, windows, labeling, net, loss,
train.{proposal,classification,localization}, pipeline, eval, paths).
Unknown keys are rejected, every violated invariant is reported (not just
the first), and per-stage RNG seeds derive from the single top-level seed
so reruns are reproducible.  Missing keys fall back to defaults.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any

from temploc.labeling import LabelingThresholds
from temploc.losses import LossConfig
from temploc.net.model import NetConfig
from temploc.net.train import SgdConfig
from temploc.pipeline import PipelineConfig
from temploc.synth import SynthConfig
from temploc.windows import WindowConfig


class ConfigError(ValueError):
    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__("invalid configuration:\n" + "\n".join(f"- {v}" for v in violations))


@dataclass(frozen=True)
class RunPaths:
    dataset: str = "runs/data"
    models: str = "runs/models"
    detections: str = "runs/detections.csv"
    results: str = "runs/results"
    labeling_report: str | None = None


@dataclass(frozen=True)
class EvalOptions:
    thetas: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    top_k: int | None = None
    interpolated: bool = False

    def __post_init__(self) -> None:
        if not self.thetas:
            raise ValueError("eval thetas must be non-empty")
        for theta in self.thetas:
            if not 0.0 < theta < 1.0:
                raise ValueError(f"eval theta must be in (0, 1), got {theta}")
        if self.top_k is not None and self.top_k < 0:
            raise ValueError(f"top_k must be >= 0, got {self.top_k}")


@dataclass(frozen=True)
class StageTraining:
    proposal: SgdConfig
    classification: SgdConfig
    localization: SgdConfig


@dataclass(frozen=True)
class PipelineOptions:
    proposal_threshold: float = 0.7
    nms_offset: float = 0.1
    eval_threshold: float = 0.5
    use_proposal: bool = True
    use_classification_init: bool = True
    use_localization_loss: bool = True


@dataclass(frozen=True)
class RunConfig:
    seed: int
    paths: RunPaths
    data: SynthConfig
    windows: WindowConfig
    labeling: LabelingThresholds
    net: NetConfig
    loss: LossConfig
    train: StageTraining
    pipeline: PipelineOptions
    eval: EvalOptions

    @property
    def input_shape(self) -> tuple[int, int, int, int]:
        channels, height, width = self.data.resolution
        return (channels, self.windows.sample_count, height, width)

    def pipeline_config(self) -> PipelineConfig:
        return PipelineConfig(
            windows=self.windows,
            thresholds=self.labeling,
            loss=self.loss,
            net=self.net,
            proposal_sgd=self.train.proposal,
            classification_sgd=self.train.classification,
            localization_sgd=self.train.localization,
            input_shape=self.input_shape,
            num_classes=self.data.num_classes,
            proposal_threshold=self.pipeline.proposal_threshold,
            nms_offset=self.pipeline.nms_offset,
            eval_threshold=self.pipeline.eval_threshold,
            use_proposal=self.pipeline.use_proposal,
            use_classification_init=self.pipeline.use_classification_init,
            use_localization_loss=self.pipeline.use_localization_loss,
        )

    def with_seed(self, seed: int) -> "RunConfig":
        train = StageTraining(
            proposal=replace(self.train.proposal, seed=_stage_seed(seed, 0)),
            classification=replace(self.train.classification, seed=_stage_seed(seed, 1)),
            localization=replace(self.train.localization, seed=_stage_seed(seed, 2)),
        )
        return replace(self, seed=seed, train=train)


def _stage_seed(seed: int, stage: int) -> int:
    return seed * 1000 + stage + 1


_SGD_KEYS = {
    "iterations", "batch_size", "base_lr", "head_lr", "momentum",
    "weight_decay", "lr_drop_factor", "drop_interval",
}

_SCHEMA: dict[str, set[str]] = {
    "": {"seed", "paths", "data", "windows", "labeling", "net", "loss", "train",
         "pipeline", "eval"},
    "paths": {"dataset", "models", "detections", "results", "labeling_report"},
    "data": {"num_classes", "trimmed_per_class", "untrimmed_train", "untrimmed_test",
             "untrimmed_frames", "resolution", "instances_per_video", "action_length",
             "min_gap", "noise_sigma", "amplitude", "blob_radius", "base_period",
             "bound", "seed"},
    "windows": {"lengths", "overlap", "sample_count"},
    "labeling": {"positive_iou", "background_iou", "rescue_iou"},
    "net": {"conv_filters", "temporal_pools", "fc_widths"},
    "loss": {"lam", "alpha", "mode"},
    "train": {"proposal", "classification", "localization"},
    "train.proposal": _SGD_KEYS,
    "train.classification": _SGD_KEYS,
    "train.localization": _SGD_KEYS,
    "pipeline": {"proposal_threshold", "nms_offset", "eval_threshold", "use_proposal",
                 "use_classification_init", "use_localization_loss"},
    "eval": {"thetas", "top_k", "interpolated"},
}


def _check_keys(doc: dict, section: str, violations: list[str]) -> None:
    allowed = _SCHEMA[section]
    for key in doc:
        dotted = f"{section}.{key}" if section else key
        if key not in allowed:
            violations.append(f"unknown key {dotted!r}")
        elif dotted in _SCHEMA and isinstance(doc[key], dict):
            _check_keys(doc[key], dotted, violations)
        elif dotted in _SCHEMA:
            violations.append(f"{dotted!r} must be an object")


def _tupled(value: Any) -> Any:
    if isinstance(value, list):
        return tuple(_tupled(v) for v in value)
    return value


def _build(factory, doc: dict, section: str, violations: list[str], **extra):
    kwargs = {k: _tupled(v) for k, v in doc.items()}
    kwargs.update(extra)
    try:
        return factory(**kwargs)
    except (TypeError, ValueError) as exc:
        violations.append(f"{section}: {exc}")
        return None


def parse_config(doc: dict) -> RunConfig:
    """Build a validated RunConfig; raises ConfigError listing every problem."""
    violations: list[str] = []
    if not isinstance(doc, dict):
        raise ConfigError(["configuration document must be a JSON object"])
    _check_keys(doc, "", violations)
    if violations:
        raise ConfigError(violations)

    seed = doc.get("seed", 0)
    if not isinstance(seed, int):
        violations.append(f"seed must be an integer, got {seed!r}")
        seed = 0

    paths = _build(RunPaths, doc.get("paths", {}), "paths", violations)
    data = _build(SynthConfig, doc.get("data", {}), "data", violations)
    windows = _build(WindowConfig, doc.get("windows", {}), "windows", violations)
    labeling = _build(LabelingThresholds, doc.get("labeling", {}), "labeling", violations)
    net = _build(NetConfig, doc.get("net", {}), "net", violations)
    loss = _build(LossConfig, doc.get("loss", {}), "loss", violations)
    pipeline = _build(PipelineOptions, doc.get("pipeline", {}), "pipeline", violations)
    eval_options = _build(EvalOptions, doc.get("eval", {}), "eval", violations)

    train_doc = doc.get("train", {})
    stages = {}
    for stage_index, stage in enumerate(("proposal", "classification", "localization")):
        merged = {"iterations": 100, "batch_size": 16, **train_doc.get(stage, {})}
        if "drop_interval" not in merged and isinstance(merged.get("iterations"), int):
            merged["drop_interval"] = max(1, merged["iterations"])
        stages[stage] = _build(
            SgdConfig,
            merged,
            f"train.{stage}",
            violations,
            seed=_stage_seed(seed, stage_index),
        )

    if violations:
        raise ConfigError(violations)

    cfg = RunConfig(
        seed=seed,
        paths=paths,
        data=data,
        windows=windows,
        labeling=labeling,
        net=net,
        loss=loss,
        train=StageTraining(**stages),
        pipeline=pipeline,
        eval=eval_options,
    )

    # cross-section invariants
    if cfg.data.action_length[0] < cfg.windows.sample_count:
        violations.append(
            f"data.action_length minimum ({cfg.data.action_length[0]}) is below "
            f"windows.sample_count ({cfg.windows.sample_count}); segments could not "
            "be sampled from the shortest actions"
        )
    if cfg.data.untrimmed_frames[0] < min(cfg.windows.lengths):
        violations.append(
            f"data.untrimmed_frames minimum ({cfg.data.untrimmed_frames[0]}) is below "
            f"the smallest window length ({min(cfg.windows.lengths)})"
        )
    if cfg.pipeline.eval_threshold - cfg.pipeline.nms_offset <= 0:
        violations.append(
            "pipeline: eval_threshold - nms_offset must be positive"
        )
    try:
        cfg.pipeline_config()
    except ValueError as exc:
        violations.append(f"pipeline: {exc}")
    if violations:
        raise ConfigError(violations)
    return cfg


def load_config(path: str | Path) -> RunConfig:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: not valid JSON ({exc})"]) from exc
    return parse_config(doc)


def config_digest(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
