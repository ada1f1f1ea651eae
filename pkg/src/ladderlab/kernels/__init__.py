"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension (``_ckernels``, Cython) is preferred when it built
successfully; otherwise the numpy backend is used. Set ``LADDER_KERNELS`` to
``numpy`` or ``cython`` to force a backend (the tests and the benchmark use
this). Both backends implement the same five primitives:

    conv2d_fwd, conv2d_dx, conv2d_dw, maxpool_fwd, maxpool_bwd

Within one process the selected backend is fixed, which keeps repeated runs
bit-identical.
"""

import os

from . import _pykernels


def _select():
    forced = os.environ.get("LADDER_KERNELS", "").strip().lower()
    if forced == "numpy":
        return _pykernels
    try:
        from . import _ckernels
    except ImportError:
        if forced == "cython":
            raise ImportError(
                "LADDER_KERNELS=cython but the compiled extension is unavailable"
            )
        return _pykernels
    return _ckernels


_impl = _select()

BACKEND = _impl.BACKEND
conv2d_fwd = _impl.conv2d_fwd
conv2d_dx = _impl.conv2d_dx
conv2d_dw = _impl.conv2d_dw
maxpool_fwd = _impl.maxpool_fwd
maxpool_bwd = _impl.maxpool_bwd


def available_backends():
    names = ["numpy"]
    try:
        from . import _ckernels  # noqa: F401

        names.append("cython")
    except ImportError:
        pass
    return names


def get_backend(name: str):
    """Return the backend module by name (for benchmarks and tests)."""
    if name == "numpy":
        return _pykernels
    if name == "cython":
        from . import _ckernels

        return _ckernels
    raise ValueError(f"unknown kernel backend: {name!r}")
