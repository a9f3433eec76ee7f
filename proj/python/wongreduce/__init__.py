"""Symmetry reduction of mechanical systems, reduced Wong dynamics, relative
equilibria and a Coulomb-gauge lattice field on top of the C++ core."""

from ._wongreduce import *  # noqa: F401,F403
from ._wongreduce import __version__  # noqa: F401
