"""Permutation-code toolkit: proper sets, CN gap recovery, identification engine."""

import os
import sys

_build_dir = os.environ.get("PERIDOT_BUILD_DIR")
if _build_dir and _build_dir not in sys.path:
    sys.path.insert(0, _build_dir)

try:
    from ._peridot import *  # noqa: F401,F403
    from . import _peridot as _impl
except ImportError:
    # in-tree / build-dir usage without an installed wheel
    import _peridot as _impl  # type: ignore
    from _peridot import *  # noqa: F401,F403

__all__ = [name for name in dir(_impl) if not name.startswith("_")]
