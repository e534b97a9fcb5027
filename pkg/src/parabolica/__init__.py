"""Parabolic motions of the Newtonian N-body problem via action minimization."""

__version__ = "0.1.0"

from .configspace import MassSystem  # noqa: E402
from .central import CentralConfig, find_minimizing_central_configuration, parabolic_constants  # noqa: E402
from .kepler1d import solve_energy_h, kepler_action_S  # noqa: E402
from .action import DiscretePath, SolverConfig, minimize_fixed_endpoints  # noqa: E402
from .parabolic import run_parabolic  # noqa: E402

__all__ = [
    "MassSystem", "CentralConfig", "find_minimizing_central_configuration",
    "parabolic_constants", "solve_energy_h", "kepler_action_S", "DiscretePath",
    "SolverConfig", "minimize_fixed_endpoints", "run_parabolic", "__version__",
]
