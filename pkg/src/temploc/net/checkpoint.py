"""Versioned binary checkpoint container.

Layout: 8-byte magic ``TLCKPT01``, a little-endian uint64 header length, a
UTF-8 JSON header (architecture, fingerprint, optional trainer-config
snapshot, iteration count, tensor index), then the tensors themselves as
row-major little-endian float64 in header order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from temploc.net.model import Architecture, ModelParams

MAGIC = b"TLCKPT01"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(
    path: str | Path,
    params: ModelParams,
    sgd_config: dict | None = None,
) -> None:
    names = sorted(params.tensors)
    header = {
        "format_version": FORMAT_VERSION,
        "fingerprint": params.fingerprint,
        "num_classes": params.arch.num_outputs,
        "architecture": params.arch.to_dict(),
        "sgd_config": sgd_config,
        "iteration": params.iteration,
        "tensors": [
            {"name": name, "shape": list(params.tensors[name].shape)} for name in names
        ],
    }
    blob = json.dumps(header, separators=(",", ":")).encode("utf-8")
    with Path(path).open("wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<Q", len(blob)))
        fh.write(blob)
        for name in names:
            fh.write(np.ascontiguousarray(params.tensors[name], dtype="<f8").tobytes())


def load_checkpoint(
    path: str | Path, expected_arch: Architecture | None = None
) -> tuple[ModelParams, dict]:
    """Load params and the header; rejects fingerprint mismatches."""
    raw = Path(path).read_bytes()
    if raw[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file (bad magic)")
    (header_len,) = struct.unpack_from("<Q", raw, len(MAGIC))
    header_start = len(MAGIC) + 8
    header = json.loads(raw[header_start : header_start + header_len].decode("utf-8"))
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError(
            f"{path}: unsupported checkpoint version {header.get('format_version')}"
        )

    arch = Architecture.from_dict(header["architecture"])
    if arch.fingerprint() != header["fingerprint"]:
        raise CheckpointError(f"{path}: fingerprint does not match stored architecture")
    if expected_arch is not None and expected_arch.fingerprint() != header["fingerprint"]:
        raise CheckpointError(
            f"{path}: checkpoint fingerprint {header['fingerprint'][:12]}... does not "
            f"match the requested architecture {expected_arch.fingerprint()[:12]}..."
        )

    tensors: dict[str, np.ndarray] = {}
    offset = header_start + header_len
    for entry in header["tensors"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(raw, dtype="<f8", count=count, offset=offset)
        if not np.all(np.isfinite(data)):
            raise CheckpointError(f"{path}: tensor {entry['name']} has non-finite values")
        tensors[entry["name"]] = data.reshape(shape).astype(np.float64)
        offset += count * 8
    if offset != len(raw):
        raise CheckpointError(f"{path}: trailing or missing tensor bytes")

    params = ModelParams(arch=arch, tensors=tensors, iteration=int(header["iteration"]))
    return params, header
