"""Desk-scale multi-stage temporal action localization.

Sliding-window segment proposals, a miniature 3D ConvNet trained with an
overlap-aware loss, frequency-prior rescoring plus NMS post-processing, and
retrieval-style mAP evaluation, all runnable on synthetic video tensors.
"""

__version__ = "0.1.0"
