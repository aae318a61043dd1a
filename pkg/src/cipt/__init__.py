"""Simulation and fluctuation statistics for control-induced phase transitions."""
from .bits import Observable, defect_density_of_index, fdw_of_index, magnetization_of_index
from .kernels import BACKEND
from .state import MeasurementOutcome, PureState, new_product_state

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "Observable",
    "MeasurementOutcome",
    "PureState",
    "defect_density_of_index",
    "fdw_of_index",
    "magnetization_of_index",
    "new_product_state",
]
