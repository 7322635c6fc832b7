"""Miniature spatiotemporal network: 3D conv, 3D max-pool, ReLU, FC.

The layer vocabulary matches the reference 3D ConvNet recipe (3x3x3
stride-1 same-padded convolutions, 2x2/2 spatial pooling with per-layer
temporal kernel/stride, fully connected head), but filter counts and
widths are configurable so the whole thing trains on a desk.  Forward
returns final-layer scores plus the cache backprop needs; parameters are
plain float64 arrays keyed by layer name.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from temploc.losses import softmax
from temploc.net import kernels

CONV3D = "conv3d"
POOL3D = "pool3d"
FC = "fc"
RELU = "relu"


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    filters: int = 0
    width: int = 0
    temporal_kernel: int = 1
    temporal_stride: int = 1


def conv3d(filters: int) -> LayerSpec:
    if filters < 1:
        raise ValueError(f"conv3d needs filters >= 1, got {filters}")
    return LayerSpec(CONV3D, filters=filters)


def pool3d(temporal_kernel: int, temporal_stride: int) -> LayerSpec:
    if temporal_kernel < 1 or temporal_stride < 1:
        raise ValueError("pool3d temporal kernel and stride must be >= 1")
    return LayerSpec(POOL3D, temporal_kernel=temporal_kernel, temporal_stride=temporal_stride)


def fc(width: int) -> LayerSpec:
    if width < 1:
        raise ValueError(f"fc needs width >= 1, got {width}")
    return LayerSpec(FC, width=width)


def relu() -> LayerSpec:
    return LayerSpec(RELU)


@dataclass(frozen=True)
class Architecture:
    """Input shape (C, T, H, W) plus the layer chain, shape-checked."""

    input_shape: tuple[int, int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self) -> None:
        if len(self.input_shape) != 4 or min(self.input_shape) < 1:
            raise ValueError(f"input shape must be 4 positive dims, got {self.input_shape}")
        if not self.layers or self.layers[-1].kind != FC:
            raise ValueError("layer chain must end with an fc layer")
        self.feature_shapes()  # raises on an incompatible chain

    def feature_shapes(self) -> list[tuple[int, ...]]:
        """Per-layer output shapes (excluding the batch axis)."""
        shape: tuple[int, ...] = self.input_shape
        shapes = []
        for i, layer in enumerate(self.layers):
            if layer.kind == CONV3D:
                if len(shape) != 4:
                    raise ValueError(f"layer {i}: conv3d after flattening")
                shape = (layer.filters,) + shape[1:]
            elif layer.kind == POOL3D:
                if len(shape) != 4:
                    raise ValueError(f"layer {i}: pool3d after flattening")
                c, t, h, w = shape
                if t < layer.temporal_kernel or h < 2 or w < 2:
                    raise ValueError(f"layer {i}: input {shape} too small to pool")
                shape = (
                    c,
                    (t - layer.temporal_kernel) // layer.temporal_stride + 1,
                    h // 2,
                    w // 2,
                )
            elif layer.kind == FC:
                shape = (layer.width,)
            elif layer.kind == RELU:
                pass
            else:
                raise ValueError(f"layer {i}: unknown kind {layer.kind!r}")
            shapes.append(shape)
        return shapes

    @property
    def num_outputs(self) -> int:
        return self.layers[-1].width

    def fingerprint(self) -> str:
        doc = {
            "input_shape": list(self.input_shape),
            "layers": [
                [l.kind, l.filters, l.width, l.temporal_kernel, l.temporal_stride]
                for l in self.layers
            ],
        }
        return hashlib.sha256(json.dumps(doc, separators=(",", ":")).encode()).hexdigest()

    def to_dict(self) -> dict:
        return {
            "input_shape": list(self.input_shape),
            "layers": [
                {
                    "kind": l.kind,
                    "filters": l.filters,
                    "width": l.width,
                    "temporal_kernel": l.temporal_kernel,
                    "temporal_stride": l.temporal_stride,
                }
                for l in self.layers
            ],
        }

    @staticmethod
    def from_dict(doc: dict) -> "Architecture":
        return Architecture(
            input_shape=tuple(doc["input_shape"]),
            layers=tuple(LayerSpec(**layer) for layer in doc["layers"]),
        )


@dataclass(frozen=True)
class NetConfig:
    """Shared body layout; the head width differs per pipeline stage."""

    conv_filters: tuple[int, ...] = (4, 8)
    temporal_pools: tuple[tuple[int, int], ...] = ((2, 2), (2, 2))
    fc_widths: tuple[int, ...] = (16,)

    def __post_init__(self) -> None:
        if len(self.conv_filters) != len(self.temporal_pools):
            raise ValueError("need one temporal pool spec per conv block")

    def architecture(
        self, input_shape: tuple[int, int, int, int], num_outputs: int
    ) -> Architecture:
        layers: list[LayerSpec] = []
        for filters, (kt, st) in zip(self.conv_filters, self.temporal_pools):
            layers += [conv3d(filters), relu(), pool3d(kt, st)]
        for width in self.fc_widths:
            layers += [fc(width), relu()]
        layers.append(fc(num_outputs))
        return Architecture(input_shape=input_shape, layers=tuple(layers))


def paper_scale_layout(num_classes: int) -> Architecture:
    """The full-scale reference layout (conv 64..512, fc 4096) over 3x16x128x171
    input.  Representable for shape checking; far too large to train here."""
    layers = (
        conv3d(64), relu(), pool3d(1, 1),
        conv3d(128), relu(), pool3d(2, 2),
        conv3d(256), relu(), conv3d(256), relu(), pool3d(2, 2),
        conv3d(512), relu(), conv3d(512), relu(), pool3d(2, 2),
        conv3d(512), relu(), conv3d(512), relu(), pool3d(2, 2),
        fc(4096), relu(), fc(4096), relu(), fc(num_classes + 1),
    )
    return Architecture(input_shape=(3, 16, 128, 171), layers=layers)


@dataclass
class ModelParams:
    arch: Architecture
    tensors: dict[str, np.ndarray]
    iteration: int = 0

    @property
    def fingerprint(self) -> str:
        return self.arch.fingerprint()

    def num_parameters(self) -> int:
        return sum(t.size for t in self.tensors.values())

    def copy(self) -> "ModelParams":
        return ModelParams(
            arch=self.arch,
            tensors={k: v.copy() for k, v in self.tensors.items()},
            iteration=self.iteration,
        )


class ScoreVector(NamedTuple):
    logits: np.ndarray
    probs: np.ndarray


def _layer_name(index: int) -> str:
    return f"layer{index:02d}"


def head_tensor_names(arch: Architecture) -> tuple[str, str]:
    """Tensor keys of the final fc layer (the fast-learning-rate head)."""
    index = len(arch.layers) - 1
    return f"{_layer_name(index)}.weight", f"{_layer_name(index)}.bias"


def init_params(arch: Architecture, seed: int) -> ModelParams:
    """He-style fan-in scaled uniform weights, zero biases, seeded."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    shapes = [arch.input_shape] + arch.feature_shapes()
    for i, layer in enumerate(arch.layers):
        name = _layer_name(i)
        shape = shapes[i]
        if layer.kind == CONV3D:
            fan_in = shape[0] * 27
            bound = np.sqrt(6.0 / fan_in)
            tensors[f"{name}.weight"] = rng.uniform(
                -bound, bound, size=(layer.filters, shape[0], 3, 3, 3)
            )
            tensors[f"{name}.bias"] = np.zeros(layer.filters)
        elif layer.kind == FC:
            fan_in = int(np.prod(shape))
            bound = np.sqrt(6.0 / fan_in)
            tensors[f"{name}.weight"] = rng.uniform(
                -bound, bound, size=(layer.width, fan_in)
            )
            tensors[f"{name}.bias"] = np.zeros(layer.width)
    return ModelParams(arch=arch, tensors=tensors)


def forward(
    params: ModelParams, x: np.ndarray, keep_cache: bool = True
) -> tuple[np.ndarray, list]:
    """Run the network on a batch (N, C, T, H, W) -> final scores (N, K+1).

    The returned cache feeds ``backward``; pass ``keep_cache=False`` for
    inference to skip retaining intermediates.
    """
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim != 5 or x.shape[1:] != params.arch.input_shape:
        raise ValueError(
            f"input shape {x.shape} does not match architecture "
            f"(N, {', '.join(map(str, params.arch.input_shape))})"
        )
    cache: list = []
    for i, layer in enumerate(params.arch.layers):
        name = _layer_name(i)
        if layer.kind == CONV3D:
            w, b = params.tensors[f"{name}.weight"], params.tensors[f"{name}.bias"]
            if keep_cache:
                cache.append(x)
            x = kernels.conv3d_forward(x, w, b)
        elif layer.kind == POOL3D:
            y, idx = kernels.pool3d_forward(x, layer.temporal_kernel, layer.temporal_stride)
            if keep_cache:
                cache.append((x.shape, idx))
            x = y
        elif layer.kind == RELU:
            mask = x > 0
            if keep_cache:
                cache.append(mask)
            x = np.where(mask, x, 0.0)
        elif layer.kind == FC:
            w, b = params.tensors[f"{name}.weight"], params.tensors[f"{name}.bias"]
            flat = x.reshape(x.shape[0], -1)
            if keep_cache:
                cache.append((flat, x.shape))
            x = flat @ w.T + b
    return x, cache


def backward(
    params: ModelParams, cache: list, dscores: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Backpropagate dL/dscores; returns (parameter gradients, input gradient)."""
    if len(cache) != len(params.arch.layers):
        raise ValueError(
            f"cache carries {len(cache)} layer records, architecture has "
            f"{len(params.arch.layers)}; forward cache does not match"
        )
    grads: dict[str, np.ndarray] = {}
    dx = np.ascontiguousarray(dscores, dtype=np.float64)
    for i in reversed(range(len(params.arch.layers))):
        layer = params.arch.layers[i]
        name = _layer_name(i)
        if layer.kind == CONV3D:
            x_in = cache[i]
            dx, dw, db = kernels.conv3d_backward(x_in, params.tensors[f"{name}.weight"], dx)
            grads[f"{name}.weight"] = dw
            grads[f"{name}.bias"] = db
        elif layer.kind == POOL3D:
            in_shape, idx = cache[i]
            dx = kernels.pool3d_backward(idx, in_shape, dx)
        elif layer.kind == RELU:
            dx = dx * cache[i]
        elif layer.kind == FC:
            flat, in_shape = cache[i]
            w = params.tensors[f"{name}.weight"]
            grads[f"{name}.weight"] = dx.T @ flat
            grads[f"{name}.bias"] = dx.sum(axis=0)
            dx = (dx @ w).reshape(in_shape)
    return grads, dx


def predict_scores(params: ModelParams, x: np.ndarray) -> ScoreVector:
    """Inference convenience: final scores plus softmax probabilities."""
    logits, _ = forward(params, x, keep_cache=False)
    return ScoreVector(logits=logits, probs=softmax(logits))
