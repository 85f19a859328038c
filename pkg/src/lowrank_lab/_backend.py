"""Kernel backend selection: compiled Cython core with pure-Python fallback.

Import order: the compiled ``_ckernels`` extension if it built, otherwise
``_pykernels``. Setting the environment variable ``LOWRANK_LAB_PURE=1``
forces the fallback (used by the benchmark and the parity tests).
"""

import os

if os.environ.get("LOWRANK_LAB_PURE", "") == "1":
    from lowrank_lab import _pykernels as kernels
else:
    try:
        from lowrank_lab import _ckernels as kernels  # type: ignore[no-redef]
    except ImportError:
        from lowrank_lab import _pykernels as kernels  # type: ignore[no-redef]

HAVE_COMPILED = bool(getattr(kernels, "COMPILED", False))

uint64_fill = kernels.uint64_fill
normal_fill = kernels.normal_fill
jacobi_sweeps = kernels.jacobi_sweeps
