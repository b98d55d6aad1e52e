"""Combinatorics behind the convergence bounds: endofunctions, block tables, two-scale graphs, power counting."""

from .blocks import *  # noqa: F401,F403
from .ffe import *  # noqa: F401,F403
from .power import *  # noqa: F401,F403
from .suites import *  # noqa: F401,F403
from .twoscale import *  # noqa: F401,F403
from . import blocks, ffe, power, suites, twoscale

__all__ = blocks.__all__ + ffe.__all__ + power.__all__ + suites.__all__ + twoscale.__all__
