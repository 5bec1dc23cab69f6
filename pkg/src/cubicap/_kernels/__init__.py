"""Kernel selection: compiled collector if available, pure Python otherwise.

Set CUBICAP_PURE=1 to force the pure-Python engine.
"""

from __future__ import annotations

import os

if os.environ.get("CUBICAP_PURE"):
    from . import pure as _impl
else:
    try:
        from . import _collectc as _impl  # type: ignore[attr-defined]
    except ImportError:
        from . import pure as _impl

Collector = _impl.Collector
IMPLEMENTATION = _impl.IMPLEMENTATION


def available_implementations():
    names = ["pure"]
    try:
        from . import _collectc  # noqa: F401

        names.append("compiled")
    except ImportError:
        pass
    return names
