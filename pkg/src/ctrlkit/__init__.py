"""High-throughput robot-learning toolkit: analytic environments with a
get/set-state interface, parallel trajectory sampling, MPPI model-predictive
control, natural policy gradient training, and a live control-loop service.
"""

from ctrlkit.spaces import Space
from ctrlkit.envcore import ContractViolation, Environment, StepResult

__all__ = ["Space", "Environment", "StepResult", "ContractViolation"]
__version__ = "0.1.0"
