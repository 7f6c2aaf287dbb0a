"""Python bindings for the execstream block-streaming library."""

from ._execstream import *  # noqa: F401,F403
from ._execstream import __doc__  # noqa: F401
