"""Entanglement distribution through nitrogen-impurity spin channels.

Simulates Lindblad dynamics of an ancilla-NV-channel-NV system with a dense
matrix-free integrator for small channels and an operator-basis tensor
network for long ones, and measures the entanglement of formation delivered
between the ancilla and the far NV.
"""

from .errors import (CapabilityError, ConfigError, ConvergenceError,
                     NumericalError, SpinChannelError)
from .model import (ChannelSpec, Geometry, build_dissipators,
                    build_hamiltonian, build_layout, dipolar_coupling,
                    initial_state_spec, uniform_spec)
from .observables import (Trajectory, concurrence, entanglement_of_formation,
                          max_entanglement)
from .dense import evolve_dense
from .tebd import build_trotter_plan, converge_chi, evolve_tebd
from .experiments import (DisorderEnsemble, MissingSpinEnsemble,
                          SolverSettings, disorder_average, fig_ratio,
                          missing_spin_average, run_dynamics, sweep_length)

__version__ = "0.1.0"

__all__ = [
    "CapabilityError", "ConfigError", "ConvergenceError", "NumericalError",
    "SpinChannelError", "ChannelSpec", "Geometry", "build_dissipators",
    "build_hamiltonian", "build_layout", "dipolar_coupling",
    "initial_state_spec", "uniform_spec", "Trajectory", "concurrence",
    "entanglement_of_formation", "max_entanglement", "evolve_dense",
    "build_trotter_plan", "converge_chi", "evolve_tebd", "DisorderEnsemble",
    "MissingSpinEnsemble", "SolverSettings", "disorder_average", "fig_ratio",
    "missing_spin_average", "run_dynamics", "sweep_length", "__version__",
]
