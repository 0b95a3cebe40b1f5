"""Numerical laboratory for Coulomb and log gases, periodic jellium energies
and Ginzburg-Landau vortices.

Hot loops are numba-compiled; set ``COULOMB_LAB_BACKEND=numpy`` for the
vectorised numpy fallbacks.
"""

__version__ = "0.1.0"

from .errors import (CapabilityError, ConfigError, CoulombLabError, DegreeError, DomainError,  # noqa: F401
                     ReproductionMismatch, SingularityError, SolverError)
from .kernels import *  # noqa: F401,F403
from .potentials import PotentialSpec, quadratic, from_dict, load_potentials  # noqa: F401
from .grids import Grid, GridField  # noqa: F401
from .equilibrium import *  # noqa: F401,F403
from .gas_energy import *  # noqa: F401,F403
from .jellium import *  # noqa: F401,F403
from .sampler import *  # noqa: F401,F403
from .gl_field import *  # noqa: F401,F403
from .vortex_balls import *  # noqa: F401,F403
from .london import *  # noqa: F401,F403
