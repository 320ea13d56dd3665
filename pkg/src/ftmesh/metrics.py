"""Infidelity between pure states and between unitaries.

Both metrics are evaluated through the residual ``1 - x = ||a - c b||^2 / 2``
(``c`` the optimal global phase) instead of ``1 - x`` directly, so that values
around 1e-15 and below keep their relative precision.
"""

from __future__ import annotations

import numpy as np

# Inputs further than this from unit norm / unitarity are rejected.
VALIDATION_TOL = 1e-10


def _phase_of(t: complex) -> complex:
    r = abs(t)
    return t / r if r > 0.0 else 1.0


def raw_state_infidelity(a: np.ndarray, b: np.ndarray) -> tuple[float, complex]:
    """Unchecked state infidelity. Returns ``(infidelity, <b|a>)``."""
    t = np.vdot(b, a)
    resid = a - _phase_of(t) * b
    one_minus = 0.5 * float(np.vdot(resid, resid).real)
    return one_minus * (1.0 + abs(t)), t


def raw_unitary_infidelity(u: np.ndarray, v: np.ndarray) -> tuple[float, complex]:
    """Unchecked unitary infidelity of ``v`` against ``u``. Returns ``(infidelity, tr(u^H v))``."""
    d = u.shape[0]
    t = np.vdot(u, v)  # tr(u^H v)
    resid = v - _phase_of(t) * u
    one_minus = float(np.vdot(resid, resid).real) / (2 * d)
    return one_minus * (1.0 + abs(t) / d), t


def _check_normalized(name: str, a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=complex)
    if a.ndim != 1:
        raise ValueError(f"{name} must be a 1-d vector, got shape {a.shape}")
    err = abs(float(np.vdot(a, a).real) - 1.0)
    if err > VALIDATION_TOL:
        raise ValueError(f"{name} is not normalized (| <v|v> - 1 | = {err:.3e})")
    return a


def unitarity_error(u: np.ndarray) -> float:
    """Max-abs-entry deviation of ``u^H u`` from the identity."""
    u = np.asarray(u)
    return float(np.max(np.abs(u.conj().T @ u - np.eye(u.shape[0]))))


def _check_unitary(name: str, u: np.ndarray) -> np.ndarray:
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValueError(f"{name} must be a square matrix, got shape {u.shape}")
    err = unitarity_error(u)
    if err > VALIDATION_TOL:
        raise ValueError(f"{name} is not unitary (max|U^H U - I| = {err:.3e})")
    return u


def state_infidelity(a: np.ndarray, b: np.ndarray) -> float:
    """Infidelity ``1 - |<a|b>|^2`` between two normalized state vectors.

    Raises:
        ValueError: if either vector is off unit norm by more than 1e-10 or
            the dimensions differ.
    """
    a = _check_normalized("a", a)
    b = _check_normalized("b", b)
    if a.shape != b.shape:
        raise ValueError(f"dimension mismatch: {a.shape} vs {b.shape}")
    return raw_state_infidelity(a, b)[0]


def unitary_infidelity(u: np.ndarray, v: np.ndarray) -> float:
    """Infidelity ``1 - |tr(u^H v)|^2 / d^2`` between two unitaries.

    Invariant under a global phase on either argument.

    Raises:
        ValueError: on shape mismatch or if either input deviates from
            unitarity by more than 1e-10.
    """
    u = _check_unitary("u", u)
    v = _check_unitary("v", v)
    if u.shape != v.shape:
        raise ValueError(f"dimension mismatch: {u.shape} vs {v.shape}")
    return raw_unitary_infidelity(u, v)[0]
