"""Backend selection for the hot likelihood kernels.

The compiled Cython extension (:mod:`attrisk._core`) is preferred when it
was built; otherwise the pure-NumPy twin (:mod:`attrisk._core_py`) is used.
Selection happens once at import. Set ``ATTRISK_BACKEND=numpy`` or
``ATTRISK_BACKEND=compiled`` to force a choice; forcing ``compiled`` when
the extension is missing is an error rather than a silent fallback.

Both backends satisfy the same contract (see ``attrisk/_core_py.py``) and
agree to floating-point roundoff; chains are bit-reproducible per backend.
"""
from __future__ import annotations

import os

from . import _core_py

try:
    from . import _core
except ImportError:  # extension not built
    _core = None

_BY_NAME = {"numpy": _core_py}
if _core is not None:
    _BY_NAME["compiled"] = _core


def available_backends() -> tuple[str, ...]:
    return tuple(sorted(_BY_NAME))


def get_backend(name: str | None = None):
    """Return a kernel module by name, or the default when name is None."""
    if name is None:
        return DEFAULT
    try:
        return _BY_NAME[name]
    except KeyError:
        raise RuntimeError(
            f"kernel backend {name!r} unavailable; built backends: {available_backends()}"
        ) from None


def backend_name(module=None) -> str:
    return (module or DEFAULT).BACKEND


_forced = os.environ.get("ATTRISK_BACKEND")
if _forced is not None and _forced not in _BY_NAME:
    raise RuntimeError(
        f"ATTRISK_BACKEND={_forced!r} but built backends are {available_backends()}"
    )
DEFAULT = _BY_NAME[_forced] if _forced else _BY_NAME.get("compiled", _core_py)
