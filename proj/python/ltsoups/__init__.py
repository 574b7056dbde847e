from ._core import *  # noqa: F401,F403
from ._core import Error, REPORT_HEADER

__all__ = [name for name in dir() if not name.startswith("_")]
