"""Multi-port interferometers made of Fourier-transform and phase-shifter layers."""

from ftmesh.interferometer import (
    MeshConfig,
    Mode,
    evaluate_state,
    evaluate_unitary,
    fourier_matrix,
    gradient_state,
    gradient_unitary,
    phase_layer,
)
from ftmesh.metrics import state_infidelity, unitary_infidelity
from ftmesh.optimize import OptimResult, OptimSettings, local_minimize, multi_start
from ftmesh.sampling import (
    SeedSpec,
    TargetKind,
    TargetSpec,
    block_diagonal_unitary,
    haar_state,
    haar_unitary,
    planted_target,
)

__all__ = [
    "MeshConfig",
    "Mode",
    "OptimResult",
    "OptimSettings",
    "SeedSpec",
    "TargetKind",
    "TargetSpec",
    "block_diagonal_unitary",
    "evaluate_state",
    "evaluate_unitary",
    "fourier_matrix",
    "gradient_state",
    "gradient_unitary",
    "haar_state",
    "haar_unitary",
    "local_minimize",
    "multi_start",
    "phase_layer",
    "planted_target",
    "state_infidelity",
    "unitary_infidelity",
]
