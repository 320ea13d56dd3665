"""Fourier-transform / phase-shifter meshes.

A mesh in unitary mode with ``N`` Fourier layers implements

    V = P_N F P_{N-1} F ... P_1 F P_0

where ``F`` is the d-point discrete Fourier transform and every ``P_j`` is a
diagonal phase layer whose first entry is pinned to 1. In state mode ``P_0`` is
dropped and the mesh acts on the fixed input ``|1>`` (first basis vector).

Phase vectors are flat, layer-major, holding modes 2..d of each layer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from ftmesh.metrics import raw_state_infidelity, raw_unitary_infidelity


class Mode(str, enum.Enum):
    UNITARY = "unitary"
    STATE = "state"


@dataclass(frozen=True)
class MeshConfig:
    """Topology of a mesh.

    Attributes:
        dim: number of modes ``d``.
        ft_layers: number of Fourier layers ``N``.
        mode: unitary synthesis (``N + 1`` phase layers) or state
            preparation (``N`` phase layers).
        pinned: extra flat phase indices held at 0 by the optimizer. Used by
            the phase-reduction ablations; evaluation ignores it.
    """

    dim: int
    ft_layers: int
    mode: Mode = Mode.UNITARY
    pinned: tuple[int, ...] = ()

    def __post_init__(self):
        if self.dim < 2:
            raise ValueError(f"dim must be >= 2, got {self.dim}")
        if self.ft_layers < 1:
            raise ValueError(f"ft_layers must be >= 1, got {self.ft_layers}")
        object.__setattr__(self, "mode", Mode(self.mode))
        pinned = tuple(sorted(set(int(i) for i in self.pinned)))
        if pinned and not (0 <= pinned[0] and pinned[-1] < self.n_phases):
            raise ValueError(f"pinned indices out of range [0, {self.n_phases})")
        object.__setattr__(self, "pinned", pinned)

    @property
    def n_phase_layers(self) -> int:
        return self.ft_layers + 1 if self.mode is Mode.UNITARY else self.ft_layers

    @property
    def n_phases(self) -> int:
        return self.n_phase_layers * (self.dim - 1)

    @property
    def free_mask(self) -> np.ndarray:
        """Boolean mask over the phase vector: True where the optimizer may move."""
        mask = np.ones(self.n_phases, dtype=bool)
        mask[list(self.pinned)] = False
        return mask

    def layer_slice(self, layer: int) -> slice:
        """Slice of the phase vector belonging to phase layer ``layer``.

        Layers are counted from the input side: in unitary mode layer 0 is
        ``P_0``; in state mode layer 0 is ``P_1``.
        """
        k = self.dim - 1
        return slice(layer * k, (layer + 1) * k)


def fourier_matrix(d: int) -> np.ndarray:
    """Unitary DFT matrix with entries ``exp(2 pi i j k / d) / sqrt(d)`` (0-based)."""
    if d < 1:
        raise ValueError(f"invalid dimension {d}")
    j = np.arange(d)
    # reduce j*k mod d first so equal phases give bit-identical entries
    return np.exp(2j * np.pi * (np.outer(j, j) % d) / d) / np.sqrt(d)


def phase_layer(d: int, free_phases) -> np.ndarray:
    """Diagonal phase layer ``diag(1, e^{i phi_2}, ..., e^{i phi_d})``."""
    free_phases = np.asarray(free_phases, dtype=float)
    if free_phases.shape != (d - 1,):
        raise ValueError(f"expected {d - 1} phases, got shape {free_phases.shape}")
    return np.diag(_layer_factors(free_phases[None, :])[0])


def _layer_factors(phases_2d: np.ndarray) -> np.ndarray:
    """(layers, d-1) phases -> (layers, d) complex diagonal entries."""
    p = np.ones((phases_2d.shape[0], phases_2d.shape[1] + 1), dtype=complex)
    p[:, 1:] = np.exp(1j * phases_2d)
    return p


def _prepare(config: MeshConfig, phases, mode: Mode) -> np.ndarray:
    if config.mode is not mode:
        raise ValueError(f"config is in {config.mode.value} mode, expected {mode.value}")
    phases = np.asarray(phases, dtype=float)
    if phases.shape != (config.n_phases,):
        raise ValueError(f"expected {config.n_phases} phases, got shape {phases.shape}")
    return _layer_factors(phases.reshape(config.n_phase_layers, config.dim - 1))


def evaluate_unitary(config: MeshConfig, phases) -> np.ndarray:
    """Transfer matrix ``P_N F ... P_1 F P_0`` of a unitary-mode mesh."""
    p = _prepare(config, phases, Mode.UNITARY)
    f = fourier_matrix(config.dim)
    v = np.diag(p[0])
    for layer in p[1:]:
        v = layer[:, None] * (f @ v)
    return v


def evaluate_state(config: MeshConfig, phases) -> np.ndarray:
    """Output state ``P_N F ... P_1 F |1>`` of a state-mode mesh."""
    p = _prepare(config, phases, Mode.STATE)
    f = fourier_matrix(config.dim)
    v = np.zeros(config.dim, dtype=complex)
    v[0] = 1.0
    for layer in p:
        v = layer * (f @ v)
    return v


def unitary_objective(config: MeshConfig, phases, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Infidelity of the mesh against ``target`` and its gradient over all phases.

    With ``V = L_j P_j R_j``, the derivative of ``t = tr(U^H V)`` in the
    k-th phase of layer j is ``i p_jk (R_j U^H L_j)_kk``. Right products
    ``R_j`` are cached on the forward pass and ``U^H L_j`` is accumulated on
    the backward pass.
    """
    p = _prepare(config, phases, Mode.UNITARY)
    d = config.dim
    f = fourier_matrix(d)
    n_layers = p.shape[0]

    rights = [np.eye(d, dtype=complex)]
    v = np.diag(p[0])
    for j in range(1, n_layers):
        r = f @ v
        rights.append(r)
        v = p[j][:, None] * r

    infid, t = raw_unitary_infidelity(target, v)

    g = target.conj().T  # U^H L_N with L_N = I
    dt = np.empty((n_layers, d), dtype=complex)
    for j in range(n_layers - 1, -1, -1):
        dt[j] = np.einsum("ij,ji->i", rights[j], g)
        if j > 0:
            g = (g * p[j][None, :]) @ f
    dt *= 1j * p
    grad = -2.0 * np.real(np.conj(t) * dt) / d**2
    return infid, grad[:, 1:].ravel()


def state_objective(config: MeshConfig, phases, target: np.ndarray) -> tuple[float, np.ndarray]:
    """State-mode counterpart of :func:`unitary_objective`."""
    p = _prepare(config, phases, Mode.STATE)
    d = config.dim
    f = fourier_matrix(d)
    n_layers = p.shape[0]

    pre = np.empty((n_layers, d), dtype=complex)  # F applied to the incoming state
    v = np.zeros(d, dtype=complex)
    v[0] = 1.0
    for j in range(n_layers):
        pre[j] = f @ v
        v = p[j] * pre[j]

    infid, t = raw_state_infidelity(v, target)

    b = target.conj()
    dt = np.empty((n_layers, d), dtype=complex)
    for j in range(n_layers - 1, -1, -1):
        dt[j] = b * pre[j]
        b = (b * p[j]) @ f
    dt *= 1j * p
    grad = -2.0 * np.real(np.conj(t) * dt)
    return infid, grad[:, 1:].ravel()


def gradient_unitary(config: MeshConfig, phases, target: np.ndarray) -> np.ndarray:
    """Analytic gradient of the unitary infidelity with respect to every phase."""
    return unitary_objective(config, phases, np.asarray(target, dtype=complex))[1]


def gradient_state(config: MeshConfig, phases, target: np.ndarray) -> np.ndarray:
    """Analytic gradient of the state infidelity with respect to every phase."""
    return state_objective(config, phases, np.asarray(target, dtype=complex))[1]


def objective(config: MeshConfig, phases, target: np.ndarray) -> tuple[float, np.ndarray]:
    """Dispatch to the unitary or state objective according to ``config.mode``."""
    if config.mode is Mode.UNITARY:
        return unitary_objective(config, phases, target)
    return state_objective(config, phases, target)


def evaluate(config: MeshConfig, phases) -> np.ndarray:
    if config.mode is Mode.UNITARY:
        return evaluate_unitary(config, phases)
    return evaluate_state(config, phases)
