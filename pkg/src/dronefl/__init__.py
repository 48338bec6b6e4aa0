"""Drone fleet location with priority queueing: model, solver, simulator."""

__version__ = "0.1.0"

from .instance import Instance, generate_instance, read_instance, write_instance  # noqa: E402
from .queueing import Assignment, analyze, objective  # noqa: E402
from .solver import budget, min_fleet, solve  # noqa: E402
from .simulator import SimConfig, simulate  # noqa: E402

__all__ = ["Instance", "generate_instance", "read_instance", "write_instance", "Assignment", "analyze",
           "objective", "budget", "min_fleet", "solve", "SimConfig", "simulate", "__version__"]
