"""Pick the compiled kernels when available, else the pure-Python ones.

Set ``EWRESERVE_PURE=1`` to force the fallback.
"""

import logging
import os

from . import _pykernels

log = logging.getLogger(__name__)

python = _pykernels
compiled = None

if not os.environ.get("EWRESERVE_PURE"):
    try:
        from . import _kernels as compiled
    except ImportError:
        log.debug("compiled kernels unavailable, using pure Python")

backend = compiled if compiled is not None else python


def use(name: str) -> None:
    """Switch the active backend (``"cython"`` or ``"python"``)."""
    global backend
    if name == "python":
        backend = python
    elif name == "cython":
        if compiled is None:
            raise RuntimeError("compiled kernels are not built")
        backend = compiled
    else:
        raise ValueError(f"unknown backend {name!r}")
