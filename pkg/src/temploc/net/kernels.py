"""Kernel backend selection.

Prefers the compiled extension (built via ``setup.py build_ext --inplace``
or a regular install) and falls back to the NumPy implementation when the
extension is unavailable.  ``BACKEND`` names the active implementation;
``benchmarks/bench_kernels.py`` times the two side by side.
"""

from __future__ import annotations

try:
    from temploc.net import _kernels as _impl

    BACKEND = "compiled"
except ImportError:
    from temploc.net import _kernels_py as _impl  # type: ignore[no-redef]

    BACKEND = "python"

conv3d_forward = _impl.conv3d_forward
conv3d_backward = _impl.conv3d_backward
pool3d_forward = _impl.pool3d_forward
pool3d_backward = _impl.pool3d_backward
