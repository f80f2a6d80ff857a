"""Choose the compiled loop when it is importable, else the Python mirror.

Set ``ABPSIM_BACKEND=python`` to force the fallback.
"""
import os

from . import _pycore

try:
    from . import _core as _compiled
except ImportError:  # extension not built
    _compiled = None


def get(name: str | None = None):
    name = name or os.environ.get("ABPSIM_BACKEND", "auto")
    if name == "python":
        return _pycore
    if name == "compiled":
        if _compiled is None:
            raise ImportError("the compiled core is not built")
        return _compiled
    return _compiled if _compiled is not None else _pycore


def name_of(mod) -> str:
    return "compiled" if mod is _compiled and mod is not None else "python"


available = ("compiled", "python") if _compiled is not None else ("python",)
