"""Backend selection for the hot propagation kernel.

The compiled extension is preferred; set ``FLOQUET_SPEC_PURE_PYTHON=1`` to
force the numpy fallback.
"""
import os

from floquet_spec import _pykernels

BACKEND = "python"
_impl = _pykernels

if os.environ.get("FLOQUET_SPEC_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from floquet_spec import _ckernels as _impl  # noqa: F811
        BACKEND = "cython"
    except ImportError:  # pragma: no cover - depends on the build
        pass

propagate_companion = _impl.propagate_companion
python_propagate_companion = _pykernels.propagate_companion


def compiled_propagate_companion():
    """Return the compiled kernel, or ``None`` when it was not built."""
    try:
        from floquet_spec import _ckernels
    except ImportError:  # pragma: no cover
        return None
    return _ckernels.propagate_companion
