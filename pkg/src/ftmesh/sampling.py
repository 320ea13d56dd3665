"""Seeded target generation: Haar unitaries and states, block-diagonal unitaries, planted targets.

Every random draw comes from its own ``numpy`` generator built from a
:class:`SeedSpec`. The pair ``(master_seed, stream_path)`` is fed to
``SeedSequence`` as entropy and spawn key, so equal specs give bit-identical
draws no matter how work is scheduled.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from ftmesh.interferometer import MeshConfig, Mode, evaluate

GENERATOR_NAME = "numpy.random.PCG64(SeedSequence(entropy=master_seed, spawn_key=stream_path))"


@dataclass(frozen=True)
class SeedSpec:
    master_seed: int
    stream_path: tuple[int, ...] = ()

    def __post_init__(self):
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must be a 64-bit unsigned integer")
        object.__setattr__(self, "stream_path", tuple(int(i) for i in self.stream_path))

    def child(self, *path: int) -> SeedSpec:
        return SeedSpec(self.master_seed, self.stream_path + tuple(path))

    def rng(self) -> np.random.Generator:
        ss = np.random.SeedSequence(self.master_seed, spawn_key=self.stream_path)
        return np.random.Generator(np.random.PCG64(ss))

    def to_dict(self) -> dict:
        return {"master_seed": self.master_seed, "stream_path": list(self.stream_path)}

    @classmethod
    def from_dict(cls, data: dict) -> SeedSpec:
        return cls(int(data["master_seed"]), tuple(data["stream_path"]))


class TargetKind(str, enum.Enum):
    HAAR_UNITARY = "haar-unitary"
    HAAR_STATE = "haar-state"
    BLOCK_DIAGONAL = "block-diagonal"
    PLANTED = "planted"
    EXTERNAL = "external"  # loaded from a file, no seed lineage


@dataclass(frozen=True, eq=False)
class TargetSpec:
    kind: TargetKind
    payload: np.ndarray
    provenance: SeedSpec | None = None
    block_dims: tuple[int, int] | None = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if (self.block_dims is not None) != (self.kind is TargetKind.BLOCK_DIAGONAL):
            raise ValueError("block_dims must be given exactly for block-diagonal targets")
        if self.block_dims is not None and sum(self.block_dims) != self.payload.shape[0]:
            raise ValueError("block dimensions must sum to the target dimension")

    @property
    def dim(self) -> int:
        return self.payload.shape[0]

    @property
    def is_state(self) -> bool:
        return self.payload.ndim == 1


def _check_dim(d: int, minimum: int = 1):
    if d < minimum:
        raise ValueError(f"invalid dimension {d} (need >= {minimum})")


def _haar_from_rng(d: int, rng: np.random.Generator) -> np.ndarray:
    z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2)
    q, r = np.linalg.qr(z)
    # fix the phase freedom of QR: make diag(R) real positive
    diag = np.diag(r)
    return q * (diag / np.abs(diag))


def haar_unitary(d: int, seed: SeedSpec) -> np.ndarray:
    """Haar-random ``d x d`` unitary (Ginibre matrix, QR, phase-corrected R)."""
    _check_dim(d)
    return _haar_from_rng(d, seed.rng())


def haar_state(d: int, seed: SeedSpec) -> np.ndarray:
    """Uniformly random unit vector in ``C^d`` (normalized complex Gaussian)."""
    _check_dim(d)
    rng = seed.rng()
    z = rng.standard_normal(d) + 1j * rng.standard_normal(d)
    return z / np.linalg.norm(z)


def block_dims_for(d: int) -> tuple[int, int]:
    """Block sizes: ``(d/2, d/2)`` for even d, ``((d-1)/2, (d+1)/2)`` for odd d."""
    return d // 2, d - d // 2


def block_diagonal_unitary(d: int, seed: SeedSpec) -> TargetSpec:
    """Direct sum of two independent Haar unitaries on the leading and trailing modes."""
    _check_dim(d, 2)
    d1, d2 = block_dims_for(d)
    rng = seed.rng()
    u = np.zeros((d, d), dtype=complex)
    u[:d1, :d1] = _haar_from_rng(d1, rng)
    u[d1:, d1:] = _haar_from_rng(d2, rng)
    return TargetSpec(TargetKind.BLOCK_DIAGONAL, u, seed, (d1, d2))


def random_phases(config: MeshConfig, rng: np.random.Generator) -> np.ndarray:
    """Phases uniform in [0, 2 pi), zero at pinned positions."""
    phases = rng.uniform(0.0, 2 * np.pi, config.n_phases)
    phases[~config.free_mask] = 0.0
    return phases


def planted_target(config: MeshConfig, seed: SeedSpec) -> tuple[TargetSpec, np.ndarray]:
    """Target produced by the mesh itself at random phases; returns ``(target, phases)``."""
    phases = random_phases(config, seed.rng())
    payload = evaluate(config, phases)
    return TargetSpec(TargetKind.PLANTED, payload, seed), phases


def haar_target(kind: TargetKind, d: int, seed: SeedSpec) -> TargetSpec:
    """Draw a target of a random family as a :class:`TargetSpec`."""
    if kind is TargetKind.HAAR_UNITARY:
        return TargetSpec(kind, haar_unitary(d, seed), seed)
    if kind is TargetKind.HAAR_STATE:
        return TargetSpec(kind, haar_state(d, seed), seed)
    if kind is TargetKind.BLOCK_DIAGONAL:
        return block_diagonal_unitary(d, seed)
    raise ValueError(f"{kind.value} is not a random target family")


def mode_for(target: TargetSpec) -> Mode:
    return Mode.STATE if target.is_state else Mode.UNITARY
