"""Hot-kernel backend selection.

The compiled Cython core is preferred when it imported cleanly; the
pure-numpy fallback is always available.  SEMIPOT_KERNEL=python or
SEMIPOT_KERNEL=compiled forces a backend (the latter raises if the
extension is missing).  Both backends produce bitwise-identical results.
"""
from __future__ import annotations

import os

from . import _ref

KERNEL_ENV = "SEMIPOT_KERNEL"

try:
    from . import _core
except ImportError:
    _core = None


def _select():
    choice = os.environ.get(KERNEL_ENV)
    if choice is None:
        return _core if _core is not None else _ref
    if choice == "python":
        return _ref
    if choice == "compiled":
        if _core is None:
            raise ImportError(
                f"{KERNEL_ENV}=compiled but the semipot.kernels._core extension "
                "is not built; run `python setup.py build_ext --inplace` or "
                "reinstall the package"
            )
        return _core
    raise ValueError(f"{KERNEL_ENV} must be 'python' or 'compiled', got {choice!r}")


_backend = _select()

FLAG_OK = _ref.FLAG_OK
FLAG_ESCAPED = _ref.FLAG_ESCAPED
FLAG_MASKED = _ref.FLAG_MASKED


def backend_name() -> str:
    return "compiled" if _backend is _core and _core is not None else "python"


def available_backends() -> dict:
    out = {"python": _ref}
    if _core is not None:
        out["compiled"] = _core
    return out


def integrate_velocity_paths(*args, **kwargs):
    return _backend.integrate_velocity_paths(*args, **kwargs)


def integrate_force_paths(*args, **kwargs):
    return _backend.integrate_force_paths(*args, **kwargs)


def floodfill_unwrap(*args, **kwargs):
    return _backend.floodfill_unwrap(*args, **kwargs)
