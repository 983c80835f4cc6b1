"""Hot-loop backend selection.

The compiled extension ``kvnmd._kernels`` is used when it imports; otherwise
a numpy implementation with identical semantics takes over. Set
``KVNMD_KERNEL=numpy`` to force the fallback (``cython`` demands the
extension and fails loudly if it is missing).
"""

from __future__ import annotations

import os

import numpy as np


def _numpy_stencil_diag_apply(psi, vel, offsets, weights, out, scale):
    acc = np.zeros_like(psi)
    for k, w in zip(offsets, weights):
        acc += w * np.roll(psi, -int(k), axis=1)
    out += scale * vel * acc


def _select():
    choice = os.environ.get("KVNMD_KERNEL", "auto").lower()
    if choice == "numpy":
        return "numpy", _numpy_stencil_diag_apply
    try:
        from ._kernels import stencil_diag_apply
    except ImportError:
        if choice == "cython":
            raise
        return "numpy", _numpy_stencil_diag_apply
    return "cython", stencil_diag_apply


BACKEND, _impl = _select()


def as_three_axis(arr: np.ndarray, axis: int) -> np.ndarray:
    """View a C-contiguous array as (outer, g, inner) around ``axis``."""
    shape = arr.shape
    outer = int(np.prod(shape[:axis], dtype=np.int64))
    inner = int(np.prod(shape[axis + 1:], dtype=np.int64))
    return arr.reshape(outer, shape[axis], inner)


def stencil_diag_apply(psi: np.ndarray, axis: int, offsets, weights, vel: np.ndarray,
                       out: np.ndarray, scale: complex = 1.0, backend: str | None = None) -> None:
    """Accumulate ``scale * vel * (D psi)`` into ``out`` in place.

    ``D`` is the periodic stencil sum_k weights[k] psi(z + offsets[k]) along
    ``axis``. ``psi``, ``vel`` and ``out`` share the grid shape; ``vel`` is real.
    """
    psi3 = as_three_axis(np.ascontiguousarray(psi, dtype=np.complex128), axis)
    vel3 = as_three_axis(np.ascontiguousarray(vel, dtype=np.float64), axis)
    out3 = as_three_axis(out, axis)
    offs = np.ascontiguousarray(offsets, dtype=np.intp)
    w = np.ascontiguousarray(weights, dtype=np.float64)
    impl = _impl
    if backend == "numpy":
        impl = _numpy_stencil_diag_apply
    elif backend == "cython":
        from ._kernels import stencil_diag_apply as impl
    impl(psi3, vel3, offs, w, out3, complex(scale))
