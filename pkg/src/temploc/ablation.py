"""Ablation experiments: the four pipeline variants plus the alpha sweep.

Per training seed this trains the proposal and classification networks once
and derives each variant's localization network from them, then predicts on
the test split and scores mAP at the pipeline's evaluation threshold.
Variants:

  full                   proposal filter + overlap-loss fine-tuning
  no_proposal            full's models, proposal filter switched off
  no_classification_init localization trained from a fresh seed
  no_localization_loss   localization trained with the overlap term off

The alpha sweep retrains the localization stage per alpha (reusing the full
variant when alpha matches) and keeps the proposal filter on.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

from temploc.config import RunConfig
from temploc.evaluation import evaluate, top_k_filter
from temploc.net.train import train
from temploc.pipeline import (
    Detection,
    PipelineConfig,
    PredictAudit,
    TrainedModels,
    predict,
    train_pipeline,
)
from temploc.synth import SynthDataset


@dataclass
class VariantResult:
    variant: str
    seed: int
    mean_ap: float
    localization_scored: int
    detections: int


@dataclass
class AblationResult:
    eval_threshold: float
    variants: list[VariantResult]
    alpha_sweep: list[tuple[float, int, float]]  # (alpha, seed, mAP)

    def map_by_variant(self, variant: str) -> list[float]:
        return [r.mean_ap for r in self.variants if r.variant == variant]

    def scored_by_variant(self, variant: str) -> list[int]:
        return [r.localization_scored for r in self.variants if r.variant == variant]


def predict_split(
    dataset: SynthDataset,
    split: str,
    models: TrainedModels,
    cfg: PipelineConfig,
    jobs: int = 1,
) -> tuple[list[Detection], PredictAudit]:
    """Run prediction over every video of a split; detections come back in
    global confidence order with a merged audit."""
    if split not in dataset.splits:
        raise ValueError(f"unknown split {split!r}; have {sorted(dataset.splits)}")
    video_ids = list(dataset.splits[split])

    def run(video_id: str):
        ann = dataset.annotations[video_id]
        return predict(dataset.load_video(video_id), video_id, ann.total_frames, models, cfg)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            outcomes = list(pool.map(run, video_ids))
    else:
        outcomes = [run(v) for v in video_ids]

    detections: list[Detection] = []
    audit = PredictAudit()
    for dets, video_audit in outcomes:
        detections.extend(dets)
        audit.merge(video_audit)
    detections.sort(key=lambda d: (-d.confidence, d.video_id, d.interval.start))
    return detections, audit


def _test_map(
    dataset: SynthDataset,
    detections: list[Detection],
    cfg: PipelineConfig,
    top_k: int | None = None,
) -> float:
    if top_k is not None:
        detections = top_k_filter(detections, top_k)
    test_annotations = [dataset.annotations[v] for v in dataset.splits["test"]]
    result = evaluate(
        detections, test_annotations, [cfg.eval_threshold], num_classes=cfg.num_classes
    )
    return result.mean_ap[cfg.eval_threshold]


def run_ablation(
    dataset: SynthDataset,
    run_cfg: RunConfig,
    seeds: list[int],
    alphas: tuple[float, ...] = (0.25, 0.5, 1.0),
    jobs: int = 1,
) -> AblationResult:
    variants: list[VariantResult] = []
    sweep: list[tuple[float, int, float]] = []

    for seed in seeds:
        cfg = run_cfg.with_seed(seed).pipeline_config()
        models, _ = train_pipeline(dataset, cfg)

        def score(variant: str, active: TrainedModels, variant_cfg: PipelineConfig):
            dets, audit = predict_split(dataset, "test", active, variant_cfg, jobs)
            variants.append(
                VariantResult(
                    variant=variant,
                    seed=seed,
                    mean_ap=_test_map(dataset, dets, variant_cfg),
                    localization_scored=audit.localization_scored,
                    detections=len(dets),
                )
            )

        score("full", models, cfg)
        score("no_proposal", models, replace(cfg, use_proposal=False))

        fresh_cfg = replace(cfg, use_classification_init=False)
        fresh_models, _ = _retrain_localization(dataset, fresh_cfg, models)
        score("no_classification_init", fresh_models, fresh_cfg)

        plain_cfg = replace(cfg, use_localization_loss=False)
        plain_models, _ = _retrain_localization(dataset, plain_cfg, models)
        score("no_localization_loss", plain_models, plain_cfg)

        for alpha in alphas:
            if alpha == cfg.loss.alpha:
                sweep_models, sweep_cfg = models, cfg
            else:
                sweep_cfg = replace(cfg, loss=replace(cfg.loss, alpha=alpha))
                sweep_models, _ = _retrain_localization(dataset, sweep_cfg, models)
            dets, _ = predict_split(dataset, "test", sweep_models, sweep_cfg, jobs)
            sweep.append((alpha, seed, _test_map(dataset, dets, sweep_cfg)))

    return AblationResult(
        eval_threshold=run_cfg.pipeline.eval_threshold,
        variants=variants,
        alpha_sweep=sweep,
    )


def _retrain_localization(
    dataset: SynthDataset, cfg: PipelineConfig, base: TrainedModels
) -> tuple[TrainedModels, list]:
    """Retrain only the localization stage, reusing the trained proposal and
    classification networks (they do not depend on the varied settings)."""
    from temploc.labeling import (
        assign_labels,
        build_classification_set,
        build_localization_set,
    )
    from temploc.pipeline import _VideoSource, _gather, _trimmed_samples
    from temploc.windows import make_segments

    assigned = []
    for video_id in dataset.splits["train"]:
        ann = dataset.annotations[video_id]
        candidates = make_segments(video_id, ann.total_frames, cfg.windows)
        assigned.extend(assign_labels(candidates, list(ann.instances), cfg.thresholds))
    trimmed = _trimmed_samples(dataset, cfg)
    cls_set = build_classification_set(
        assigned, trimmed, cfg.num_classes, seed=cfg.classification_sgd.seed
    )
    loc_set = build_localization_set(cls_set)

    loc_loss = cfg.loss if cfg.use_localization_loss else replace(cfg.loss, lam=0.0)
    source = _VideoSource(dataset)
    stage_arch = cfg.net.architecture(cfg.input_shape, cfg.num_classes + 1)
    loc_params, log = train(
        _gather(source, loc_set),
        stage_arch,
        cfg.localization_sgd,
        loc_loss,
        init=base.classification if cfg.use_classification_init else None,
    )
    return (
        TrainedModels(
            proposal=base.proposal,
            classification=base.classification,
            localization=loc_params,
            prior=base.prior,
        ),
        log,
    )
