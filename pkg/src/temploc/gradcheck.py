"""Finite-difference verification of analytic gradients.

Central differences of the forward loss are the independent oracle here:
they never touch the analytic backward path.  Errors are relative, with an
absolute criterion of 1e-8 where both gradient magnitudes fall under 1e-6.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from temploc.losses import LossConfig, loss_backward, loss_forward, softmax
from temploc.net import model as net_model

MAGNITUDE_FLOOR = 1e-6
ABSOLUTE_FLOOR = 1e-8


@dataclass
class GradCheckReport:
    checked: int = 0
    max_rel_error: float = 0.0
    failures: list[str] = field(default_factory=list)

    def merge(self, analytic: float, numeric: float, where: str) -> None:
        self.checked += 1
        scale = max(abs(analytic), abs(numeric))
        if scale < MAGNITUDE_FLOOR:
            if abs(analytic - numeric) > ABSOLUTE_FLOOR:
                self.failures.append(
                    f"{where}: tiny-gradient mismatch {analytic} vs {numeric}"
                )
            return
        rel = abs(analytic - numeric) / scale
        if rel > self.max_rel_error:
            self.max_rel_error = rel

    def passed(self, tolerance: float) -> bool:
        return not self.failures and self.max_rel_error < tolerance


def check_loss_gradients(
    trials: int = 1000, seed: int = 0, step: float = 1e-5
) -> GradCheckReport:
    """Randomized batches of final-layer scores vs central differences.

    Sweeps batch size <= 8, class count <= 4, scores uniform in (-2, 2),
    overlaps in (0, 1], alpha in {0.25, 0.5, 1.0}, lambda in {0, 0.5, 1}.
    """
    rng = np.random.default_rng(seed)
    alphas = (0.25, 0.5, 1.0)
    lams = (0.0, 0.5, 1.0)
    report = GradCheckReport()
    for trial in range(trials):
        n = int(rng.integers(1, 9))
        k_max = int(rng.integers(1, 5))
        scores = rng.uniform(-2.0, 2.0, size=(n, k_max + 1))
        labels = rng.integers(0, k_max + 1, size=n)
        overlaps = rng.uniform(0.01, 1.0, size=n)
        cfg = LossConfig(lam=float(rng.choice(lams)), alpha=float(rng.choice(alphas)))

        analytic = loss_backward(scores, labels, overlaps, cfg)
        for i in range(n):
            for j in range(k_max + 1):
                bumped = scores.copy()
                bumped[i, j] += step
                up = loss_forward(softmax(bumped), labels, overlaps, cfg)[0]
                bumped[i, j] -= 2 * step
                down = loss_forward(softmax(bumped), labels, overlaps, cfg)[0]
                numeric = (up - down) / (2 * step)
                report.merge(analytic[i, j], numeric, f"trial {trial} O[{i},{j}]")
    return report


def check_network_gradients(
    arch: net_model.Architecture,
    batch_size: int = 3,
    probes_per_tensor: int = 50,
    seed: int = 0,
    step: float = 1e-5,
    loss_cfg: LossConfig = LossConfig(lam=1.0, alpha=0.5),
) -> GradCheckReport:
    """Full-model check: loss-through-network gradients for every parameter
    tensor, probed at random coordinates, vs central differences."""
    rng = np.random.default_rng(seed)
    params = net_model.init_params(arch, seed=seed)
    x = rng.uniform(-1.0, 1.0, size=(batch_size,) + arch.input_shape)
    num_outputs = arch.num_outputs
    labels = rng.integers(0, num_outputs, size=batch_size)
    overlaps = rng.uniform(0.1, 1.0, size=batch_size)

    def total_loss() -> float:
        scores, _ = net_model.forward(params, x, keep_cache=False)
        return loss_forward(softmax(scores), labels, overlaps, loss_cfg)[0]

    scores, cache = net_model.forward(params, x)
    grads, _ = net_model.backward(
        params, cache, loss_backward(scores, labels, overlaps, loss_cfg)
    )

    report = GradCheckReport()
    for name in sorted(params.tensors):
        tensor = params.tensors[name]
        coords = np.arange(tensor.size)
        if tensor.size > probes_per_tensor:
            coords = rng.choice(tensor.size, size=probes_per_tensor, replace=False)
        flat = tensor.reshape(-1)
        for coord in coords:
            original = flat[coord]
            flat[coord] = original + step
            up = total_loss()
            flat[coord] = original - step
            down = total_loss()
            flat[coord] = original
            numeric = (up - down) / (2 * step)
            report.merge(grads[name].reshape(-1)[coord], numeric, f"{name}[{coord}]")
    return report
