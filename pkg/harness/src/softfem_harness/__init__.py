"""Optimization and SysId scripting layer for the softfem engine.

Everything here talks to the engine through its command line and file
formats only; no engine modules are imported.
"""

from .legopt import LEG_SPACE_PARAMS, leg_optimize
from .plots import plot_trajectory
from .search import Param, SearchSpace, TrialRecord, random_search

__all__ = ["LEG_SPACE_PARAMS", "leg_optimize", "plot_trajectory", "Param",
           "SearchSpace", "TrialRecord", "random_search"]
