"""Lyapunov-control preparation of topological edge modes.

Quadratic Hamiltonians (Kitaev and SSH chains), their quasiparticle
spectra, feedback laws that steer a mode vector onto an edge mode, a
fixed-step RK4 integrator and seeded robustness sweeps.
"""

__version__ = "0.1.0"

from .control import (DualTargetLaw, ImplicitLaw, OverlapLaw, PMatrixLaw,  # noqa: E402
                      SquareWave, build_p_matrix)
from .dynamics import ControlledSystem, Trajectory, evolve  # noqa: E402
from .errors import ConfigError, ModelError, NumericalError, TopoLyapError  # noqa: E402
from .hamiltonian import (ModeVector, QuadraticHamiltonian, Statistics,  # noqa: E402
                          validate_quadratic)
from .models import (KitaevParams, SSHParams, boundary_number_control,  # noqa: E402
                     build_kitaev, build_ssh)
from .robustness import PerturbationSpec, run_sweep  # noqa: E402
from .spectral import eigenmodes, identify_edge_modes, labelled_eigenmodes  # noqa: E402

__all__ = [
    "ControlledSystem", "ConfigError", "DualTargetLaw", "ImplicitLaw", "KitaevParams",
    "ModeVector", "ModelError", "NumericalError", "OverlapLaw", "PMatrixLaw",
    "PerturbationSpec", "QuadraticHamiltonian", "SSHParams", "SquareWave", "Statistics",
    "TopoLyapError", "Trajectory", "boundary_number_control", "build_kitaev", "build_p_matrix",
    "build_ssh", "eigenmodes", "evolve", "identify_edge_modes", "labelled_eigenmodes",
    "run_sweep", "validate_quadratic",
]
