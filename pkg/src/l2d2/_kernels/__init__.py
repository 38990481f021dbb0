"""Network kernel backends.

The compiled Cython core is preferred when present; otherwise the numpy
fallback is selected at import time. Both expose the same three
functions: ``forward``, ``backward`` and ``train_epoch``. Set
``L2D2_KERNEL_BACKEND=numpy`` to force the fallback.
"""

import os

from . import numpy_backend

try:
    from . import _core as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

_forced = os.environ.get("L2D2_KERNEL_BACKEND")
if _forced == "numpy" or compiled_backend is None:
    active = numpy_backend
elif _forced in (None, "compiled"):
    active = compiled_backend
else:
    raise ImportError(f"unknown L2D2_KERNEL_BACKEND {_forced!r}")
ACTIVE_NAME = active.NAME


def available_backends() -> dict:
    out = {"numpy": numpy_backend}
    if compiled_backend is not None:
        out["compiled"] = compiled_backend
    return out


def get_backend(name: str):
    try:
        return available_backends()[name]
    except KeyError:
        raise ValueError(f"unknown or unavailable backend {name!r}") from None
