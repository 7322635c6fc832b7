"""SGD with momentum, weight decay, and a stepped learning-rate schedule.

Update form (stated because "momentum" alone underdetermines it):

    velocity = momentum * velocity - lr * (grad + decay * param)
    param   += velocity

The final fc layer uses its own faster learning rate; every learning rate
is divided by the drop factor once per drop interval.  Mini-batches come
from a seeded reshuffle each epoch, so training is bitwise deterministic.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from temploc.losses import LossConfig, loss_forward, loss_backward, softmax
from temploc.net import model as net_model

logger = logging.getLogger(__name__)


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class SgdConfig:
    iterations: int
    batch_size: int
    base_lr: float = 1e-4
    head_lr: float = 1e-2
    momentum: float = 0.9
    weight_decay: float = 5e-4
    lr_drop_factor: float = 10.0
    drop_interval: int = 10_000
    seed: int = 0

    def __post_init__(self) -> None:
        if self.iterations < 0:
            raise ValueError(f"iterations must be >= 0, got {self.iterations}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.base_lr <= 0 or self.head_lr <= 0:
            raise ValueError("learning rates must be positive")
        if self.momentum < 0 or self.weight_decay < 0:
            raise ValueError("momentum and weight decay must be >= 0")
        if self.lr_drop_factor < 1:
            raise ValueError(f"lr_drop_factor must be >= 1, got {self.lr_drop_factor}")
        if self.drop_interval < 1:
            raise ValueError(f"drop_interval must be >= 1, got {self.drop_interval}")
        if self.iterations > 0 and self.drop_interval > self.iterations:
            raise ValueError(
                f"drop_interval ({self.drop_interval}) exceeds total iterations "
                f"({self.iterations})"
            )

    def lr_at(self, iteration: int) -> tuple[float, float]:
        scale = self.lr_drop_factor ** (iteration // self.drop_interval)
        return self.base_lr / scale, self.head_lr / scale

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "batch_size": self.batch_size,
            "base_lr": self.base_lr,
            "head_lr": self.head_lr,
            "momentum": self.momentum,
            "weight_decay": self.weight_decay,
            "lr_drop_factor": self.lr_drop_factor,
            "drop_interval": self.drop_interval,
            "seed": self.seed,
        }


class TrainingSet(NamedTuple):
    """Batched training tensors: inputs (N, C, T, H, W), labels k, overlaps v."""

    inputs: np.ndarray
    labels: np.ndarray
    overlaps: np.ndarray


class TrainRecord(NamedTuple):
    iteration: int
    lr: float
    loss: float
    loss_softmax: float
    loss_overlap: float


def sgd_step(
    tensors: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    velocity: dict[str, np.ndarray],
    lr_for: dict[str, float],
    momentum: float,
    weight_decay: float,
) -> None:
    """One in-place update: velocity = momentum*velocity - lr*(grad + decay*w)."""
    for key, tensor in tensors.items():
        vel = velocity[key]
        vel *= momentum
        vel -= lr_for[key] * (grads[key] + weight_decay * tensor)
        tensor += vel


def train(
    data: TrainingSet,
    arch: net_model.Architecture,
    cfg: SgdConfig,
    loss_cfg: LossConfig,
    init: net_model.ModelParams | None = None,
) -> tuple[net_model.ModelParams, list[TrainRecord]]:
    """Train (or fine-tune, when ``init`` is given) and return params + log."""
    n = len(data.labels)
    if n == 0:
        raise ValueError("training data must be nonempty")
    if init is not None and init.arch != arch:
        raise ValueError("init parameters were built for a different architecture")

    params = init.copy() if init is not None else net_model.init_params(arch, cfg.seed)
    if cfg.iterations == 0:
        return params, []

    head_keys = set(net_model.head_tensor_names(arch))
    velocity = {k: np.zeros_like(v) for k, v in params.tensors.items()}
    rng = np.random.default_rng(cfg.seed)
    inputs = np.ascontiguousarray(data.inputs, dtype=np.float64)
    labels = np.asarray(data.labels, dtype=np.int64)
    overlaps = np.asarray(data.overlaps, dtype=np.float64)

    log: list[TrainRecord] = []
    iteration = 0
    while iteration < cfg.iterations:
        order = rng.permutation(n)
        for start in range(0, n, cfg.batch_size):
            if iteration >= cfg.iterations:
                break
            batch = order[start : start + cfg.batch_size]
            x, k, v = inputs[batch], labels[batch], overlaps[batch]

            scores, cache = net_model.forward(params, x)
            if not np.all(np.isfinite(scores)):
                raise TrainingDiverged(
                    f"non-finite network output at iteration {iteration}"
                )
            total, part_softmax, part_overlap = loss_forward(
                softmax(scores), k, v, loss_cfg
            )
            if not np.isfinite(total):
                raise TrainingDiverged(
                    f"non-finite loss {total} at iteration {iteration} "
                    f"(softmax {part_softmax}, overlap {part_overlap})"
                )
            grads, _ = net_model.backward(params, cache, loss_backward(scores, k, v, loss_cfg))

            base_lr, head_lr = cfg.lr_at(iteration)
            lr_for = {
                key: head_lr if key in head_keys else base_lr
                for key in params.tensors
            }
            sgd_step(params.tensors, grads, velocity, lr_for, cfg.momentum, cfg.weight_decay)

            log.append(TrainRecord(iteration, base_lr, total, part_softmax, part_overlap))
            iteration += 1

    params.iteration = iteration
    if log:
        logger.debug(
            "trained %d iterations, final loss %.4f", iteration, log[-1].loss
        )
    return params, log
