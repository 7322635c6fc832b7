"""Command-line surface.

One JSON config document drives every command; flags only select inputs and
outputs.  Exit codes: 0 success, 1 usage or config error, 2 runtime or
numeric error.  Every command writes a run-metadata JSON (config digest,
seed, versions, backend, wall time) next to its primary output.
"""

from __future__ import annotations

import argparse
import csv
import json
import platform
import sys
import time
from pathlib import Path

import numpy as np

import temploc
from temploc import losses
from temploc.ablation import run_ablation, predict_split
from temploc.config import ConfigError, RunConfig, config_digest, load_config
from temploc.evaluation import evaluate, top_k_filter, write_per_class_csv, write_results_csv
from temploc.gradcheck import check_loss_gradients, check_network_gradients
from temploc.labeling import write_labeling_report
from temploc.net import BACKEND
from temploc.net.checkpoint import load_checkpoint, save_checkpoint
from temploc.net.model import NetConfig
from temploc.pipeline import (
    FrequencyPrior,
    TrainedModels,
    read_detections_csv,
    train_pipeline,
    write_detections_csv,
)
from temploc.synth import generate, load_dataset

_USAGE_ERROR, _RUNTIME_ERROR = 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        raise SystemExit(_USAGE_ERROR)


def _write_meta(out_dir: Path, command: str, config_path: str | None, seed, t0: float,
                outputs: list[str]) -> None:
    out_dir.mkdir(parents=True, exist_ok=True)
    meta = {
        "command": command,
        "config_sha256": config_digest(config_path) if config_path else None,
        "seed": seed,
        "versions": {
            "temploc": temploc.__version__,
            "python": platform.python_version(),
            "numpy": np.__version__,
        },
        "kernel_backend": BACKEND,
        "wall_time_s": round(time.time() - t0, 3),
        "outputs": outputs,
    }
    (out_dir / f"meta_{command.replace('-', '_')}.json").write_text(
        json.dumps(meta, indent=1) + "\n"
    )


def _load_models(cfg: RunConfig, override_dir: str | None = None) -> TrainedModels:
    models_dir = Path(override_dir or cfg.paths.models)
    num_classes = cfg.data.num_classes
    proposal_arch = cfg.net.architecture(cfg.input_shape, 2)
    stage_arch = cfg.net.architecture(cfg.input_shape, num_classes + 1)
    proposal, _ = load_checkpoint(models_dir / "proposal.ckpt", proposal_arch)
    classification, _ = load_checkpoint(models_dir / "classification.ckpt", stage_arch)
    localization, _ = load_checkpoint(models_dir / "localization.ckpt", stage_arch)
    prior = FrequencyPrior.from_dict(json.loads((models_dir / "prior.json").read_text()))
    return TrainedModels(
        proposal=proposal,
        classification=classification,
        localization=localization,
        prior=prior,
    )


def _write_train_log(path: Path, log) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "lr", "loss", "loss_softmax", "loss_overlap"])
        for rec in log:
            writer.writerow([rec.iteration, rec.lr, rec.loss, rec.loss_softmax, rec.loss_overlap])


def cmd_gen_data(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    dataset = generate(cfg.data, cfg.paths.dataset, window_cfg=cfg.windows)
    print(f"generated {len(dataset.annotations)} videos under {cfg.paths.dataset}")
    print(f"linear-probe accuracy: {dataset.probe_accuracy:.4f}")
    _write_meta(Path(cfg.paths.dataset), "gen-data", args.config, cfg.data.seed, t0,
                ["manifest.json", "annotations.json", "label_map.json"])
    return 0


def cmd_train(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    dataset = load_dataset(cfg.paths.dataset)
    models, summary = train_pipeline(dataset, cfg.pipeline_config())

    models_dir = Path(cfg.paths.models)
    models_dir.mkdir(parents=True, exist_ok=True)
    for stage, params, sgd in (
        ("proposal", models.proposal, cfg.train.proposal),
        ("classification", models.classification, cfg.train.classification),
        ("localization", models.localization, cfg.train.localization),
    ):
        save_checkpoint(models_dir / f"{stage}.ckpt", params, sgd_config=sgd.to_dict())
    (models_dir / "prior.json").write_text(json.dumps(models.prior.to_dict(), indent=1) + "\n")
    _write_train_log(models_dir / "train_log_proposal.csv", summary.proposal_log)
    _write_train_log(models_dir / "train_log_classification.csv", summary.classification_log)
    _write_train_log(models_dir / "train_log_localization.csv", summary.localization_log)
    if cfg.paths.labeling_report:
        write_labeling_report(cfg.paths.labeling_report, summary.assigned)

    for stage, log in (("proposal", summary.proposal_log),
                       ("classification", summary.classification_log),
                       ("localization", summary.localization_log)):
        final = log[-1].loss if log else float("nan")
        print(f"{stage}: {len(log)} iterations, final loss {final:.4f}")
    _write_meta(models_dir, "train", args.config, cfg.seed, t0,
                ["proposal.ckpt", "classification.ckpt", "localization.ckpt", "prior.json"])
    return 0


def cmd_predict(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    dataset = load_dataset(cfg.paths.dataset)
    models = _load_models(cfg, args.models)
    detections, audit = predict_split(
        dataset, args.split, models, cfg.pipeline_config(), jobs=args.jobs
    )
    out_path = Path(args.out or cfg.paths.detections)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    write_detections_csv(out_path, detections)
    print(
        f"{len(detections)} detections over split {args.split!r} "
        f"({audit.windows_total} windows, {audit.localization_scored} scored)"
    )
    _write_meta(out_path.parent, "predict", args.config, cfg.seed, t0, [out_path.name])
    return 0


def cmd_eval(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    dataset = load_dataset(cfg.paths.dataset)
    detections = read_detections_csv(args.detections or cfg.paths.detections)
    thetas = (
        tuple(float(v) for v in args.thetas.split(",")) if args.thetas else cfg.eval.thetas
    )
    top_k = args.top_k if args.top_k is not None else cfg.eval.top_k
    if top_k is not None:
        detections = top_k_filter(detections, top_k)
    if args.split not in dataset.splits:
        raise ValueError(f"unknown split {args.split!r}; have {sorted(dataset.splits)}")
    split_ids = set(dataset.splits[args.split])
    annotations = [a for v, a in dataset.annotations.items() if v in split_ids]
    result = evaluate(
        detections, annotations, thetas,
        num_classes=dataset.num_classes, interpolated=cfg.eval.interpolated,
    )

    results_dir = Path(cfg.paths.results)
    results_dir.mkdir(parents=True, exist_ok=True)
    write_results_csv(results_dir / "results.csv", result)
    histogram_theta = 0.5 if 0.5 in result.thresholds else result.thresholds[-1]
    write_per_class_csv(results_dir / "per_class.csv", result, histogram_theta)
    for row in result.table_rows():
        print(",".join(row))
    _write_meta(results_dir, "eval", args.config, cfg.seed, t0,
                ["results.csv", "per_class.csv"])
    return 0


def cmd_gradcheck(args) -> int:
    t0 = time.time()
    loss_report = check_loss_gradients(trials=args.trials, seed=args.seed)
    arch = NetConfig(conv_filters=(4, 8), temporal_pools=((2, 2), (2, 2)),
                     fc_widths=(16,)).architecture((1, 8, 8, 8), 3)
    net_report = check_network_gradients(arch, seed=args.seed)
    loss_ok = loss_report.passed(1e-5)
    net_ok = net_report.passed(1e-4)
    print(
        f"loss gradients: {'PASS' if loss_ok else 'FAIL'}, "
        f"{loss_report.checked} coordinates, max rel err {loss_report.max_rel_error:.3e}"
    )
    print(
        f"network gradients: {'PASS' if net_ok else 'FAIL'}, "
        f"{net_report.checked} coordinates, max rel err {net_report.max_rel_error:.3e}"
    )
    for failure in (loss_report.failures + net_report.failures)[:10]:
        print(f"  {failure}")
    print(f"wall time {time.time() - t0:.2f}s")
    return 0 if (loss_ok and net_ok) else _RUNTIME_ERROR


def cmd_losscurve(args) -> int:
    t0 = time.time()
    out_path = Path(args.out)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    v_values = [float(v) for v in args.v.split(",")]
    with out_path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["v", "p", "loss_softmax", "loss_overlap", "loss"])
        for v in v_values:
            curve = losses.per_sample_loss_curve(
                v, alpha=args.alpha, lam=args.lam, resolution=args.resolution
            )
            for p, part_softmax, part_overlap, total in curve:
                writer.writerow([v, repr(p), repr(part_softmax), repr(part_overlap), repr(total)])
            argmin = curve[curve[:, 3].argmin(), 0]
            print(f"v={v}: argmin P = {argmin:.4f} (target {np.sqrt(v ** args.alpha):.4f})")
    _write_meta(out_path.parent, "losscurve", None, None, t0, [out_path.name])
    return 0


def cmd_ablate(args) -> int:
    t0 = time.time()
    cfg = load_config(args.config)
    dataset = load_dataset(cfg.paths.dataset)
    seeds = [int(s) for s in args.seeds.split(",")]
    result = run_ablation(dataset, cfg, seeds=seeds, jobs=args.jobs)

    out_dir = Path(args.out or cfg.paths.results)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "ablation.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["variant", "seed", "map", "localization_scored", "detections"])
        for row in result.variants:
            writer.writerow([row.variant, row.seed, f"{row.mean_ap:.6f}",
                             row.localization_scored, row.detections])
    with (out_dir / "alpha_sweep.csv").open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["alpha", "seed", "map"])
        for alpha, seed, mean_ap in result.alpha_sweep:
            writer.writerow([alpha, seed, f"{mean_ap:.6f}"])

    def median(values):
        values = sorted(values)
        return values[len(values) // 2] if len(values) % 2 else sum(values[len(values)//2-1:len(values)//2+1]) / 2

    print(f"mAP@{result.eval_threshold:g} medians over seeds {seeds}:")
    for variant in ("full", "no_proposal", "no_classification_init", "no_localization_loss"):
        values = result.map_by_variant(variant)
        scored = result.scored_by_variant(variant)
        print(f"  {variant:24s} {median(values):.4f}  (localization scored {scored})")
    alphas = sorted({a for a, _, _ in result.alpha_sweep})
    for alpha in alphas:
        values = [m for a, _, m in result.alpha_sweep if a == alpha]
        print(f"  alpha={alpha:<4g}             {median(values):.4f}")
    _write_meta(out_dir, "ablate", args.config, cfg.seed, t0,
                ["ablation.csv", "alpha_sweep.csv"])
    return 0


def _config_key_reference() -> str:
    from temploc.config import _SCHEMA

    lines = ["config document keys (JSON; unknown keys are rejected):"]
    for section in sorted(_SCHEMA):
        if not section:
            continue
        lines.append(f"  {section}: {', '.join(sorted(_SCHEMA[section]))}")
    lines.append("  (top level: seed plus the sections above)")
    return "\n".join(lines)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="temploc",
                     description="Desk-scale multi-stage temporal action localization.",
                     epilog=_config_key_reference(),
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, fn, **kwargs):
        p = sub.add_parser(name, **kwargs)
        p.set_defaults(fn=fn)
        return p

    p = add("gen-data", cmd_gen_data, help="generate the synthetic dataset")
    p.add_argument("-c", "--config", required=True)

    p = add("train", cmd_train, help="train proposal/classification/localization networks")
    p.add_argument("-c", "--config", required=True)

    p = add("predict", cmd_predict, help="run detection over a split")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--split", default="test")
    p.add_argument("--models", default=None, help="checkpoint dir (default: paths.models)")
    p.add_argument("--out", default=None, help="detections CSV (default: paths.detections)")
    p.add_argument("--jobs", type=int, default=1)

    p = add("eval", cmd_eval, help="score detections against annotations")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--detections", default=None)
    p.add_argument("--split", default="test")
    p.add_argument("--thetas", default=None, help="comma-separated IoU thresholds")
    p.add_argument("--top-k", type=int, default=None)

    p = add("gradcheck", cmd_gradcheck, help="finite-difference gradient verification")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=200)

    p = add("losscurve", cmd_losscurve, help="per-positive loss curve CSV")
    p.add_argument("--v", required=True, help="comma-separated overlap values")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--lam", type=float, default=1.0)
    p.add_argument("--resolution", type=int, default=10_000)
    p.add_argument("--out", required=True)

    p = add("ablate", cmd_ablate, help="variant comparison plus alpha sweep")
    p.add_argument("-c", "--config", required=True)
    p.add_argument("--seeds", default="0,1,2")
    p.add_argument("--out", default=None)
    p.add_argument("--jobs", type=int, default=1)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return _USAGE_ERROR
    except FileNotFoundError as exc:
        print(f"missing input: {exc}", file=sys.stderr)
        return _USAGE_ERROR
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return _RUNTIME_ERROR


if __name__ == "__main__":
    sys.exit(main())
