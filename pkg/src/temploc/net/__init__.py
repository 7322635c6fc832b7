"""Miniature 3D ConvNet: kernels, model, trainer, checkpoints."""

from temploc.net.kernels import BACKEND

__all__ = ["BACKEND"]
