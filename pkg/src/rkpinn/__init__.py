"""Physics-informed Runge-Kutta stage networks for power-system time-domain simulation."""

from . import config, dynamics, experiment, nn, pinn, solver, tableau

__all__ = ["config", "dynamics", "experiment", "nn", "pinn", "solver", "tableau"]

__version__ = "0.1.0"
