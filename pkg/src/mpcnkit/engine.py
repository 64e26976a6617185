"""Backend selection for the chain engine.

The compiled ``_engine`` extension is used when it imports; otherwise the
numpy implementation in ``_engine_py`` takes over. Set
``MPCNKIT_BACKEND=python`` to force the fallback.
"""
import logging
import os

from . import _engine_py

log = logging.getLogger(__name__)

_BACKENDS = {"python": _engine_py.advance}

try:
    from ._engine import advance as _advance_ext
except ImportError:  # pragma: no cover - depends on build
    _advance_ext = None
else:
    _BACKENDS["cython"] = _advance_ext

if os.environ.get("MPCNKIT_BACKEND", "").lower() == "python" or _advance_ext is None:
    BACKEND = "python"
else:
    BACKEND = "cython"

if _advance_ext is None:
    log.debug("compiled engine unavailable; using numpy fallback")


def available_backends():
    return sorted(_BACKENDS)


def get_advance(backend=None):
    """Return the ``advance`` function for ``backend`` (default: the active one)."""
    name = backend or BACKEND
    try:
        return _BACKENDS[name]
    except KeyError:
        raise ValueError(f"backend {name!r} not available; have {available_backends()}") from None
