"""Desk-scale LEO beam-prediction lab.

Subpackages are imported lazily on attribute access so that `import leobeam`
stays cheap (numba-backed modules compile on first use, not at import).
"""

__version__ = "0.1.0"

_SUBMODULES = (
    "geometry",
    "codebook",
    "channel",
    "dataset",
    "nn",
    "federated",
    "evaluate",
    "config",
    "cli",
)


def __getattr__(name):
    if name in _SUBMODULES:
        import importlib

        return importlib.import_module(f"{__name__}.{name}")
    raise AttributeError(f"module {__name__!r} has no attribute {name!r}")
