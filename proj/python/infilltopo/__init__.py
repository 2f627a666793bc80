"""Porous infill topology optimization with stress-topology-guided initialization."""

from infilltopo._core import *  # noqa: F401,F403
from infilltopo._core import __doc__ as _core_doc

__all__ = [n for n in dir() if not n.startswith("_")]
