"""Numerical evaluation of the Hardy, Rellich and CKN-type inequalities."""

from .checks import *  # noqa: F401,F403
from .checks import __all__ as _checks_all
from .constants import *  # noqa: F401,F403
from .constants import __all__ as _constants_all
from .core import *  # noqa: F401,F403
from .core import __all__ as _core_all

__all__ = list(_core_all) + list(_constants_all) + list(_checks_all)
