"""Simulation, basin analysis and time-optimal control of a two-population conflict model."""
from .errors import *  # noqa: F401,F403
from .model import *  # noqa: F401,F403
from .integrator import *  # noqa: F401,F403
from .equilibria import *  # noqa: F401,F403
from .separatrix import *  # noqa: F401,F403
from .victory import *  # noqa: F401,F403
from .synth import *  # noqa: F401,F403
from .optimal import *  # noqa: F401,F403
from .sweep import *  # noqa: F401,F403

__version__ = "0.1.0"
