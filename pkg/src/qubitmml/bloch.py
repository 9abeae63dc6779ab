"""Qubit states in Bloch form and as 2x2 density matrices.

Bloch vectors are plain ``numpy`` arrays of shape ``(3,)`` (or ``(n, 3)`` for
batches).  They are not constrained to the unit ball: estimates built from
finite statistics routinely land outside it and must stay representable.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

SIGMA_I = np.eye(2, dtype=complex)
SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
PAULIS = np.stack([SIGMA_X, SIGMA_Y, SIGMA_Z])

_ATOL = 1e-12


class PauliAxis(enum.IntEnum):
    X = 0
    Y = 1
    Z = 2

    @property
    def label(self) -> str:
        return self.name.lower()

    @classmethod
    def parse(cls, text: str) -> "PauliAxis":
        try:
            return cls[text.strip().upper()]
        except KeyError:
            raise ValueError(f"unknown Pauli axis {text!r}") from None


@dataclass(frozen=True)
class Effect:
    """Projector ``(I + sign * sigma_axis) / 2``."""

    axis: PauliAxis
    sign: int

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValueError(f"sign must be +1 or -1, got {self.sign}")
        object.__setattr__(self, "axis", PauliAxis(self.axis))

    @property
    def operator(self) -> np.ndarray:
        return 0.5 * (SIGMA_I + self.sign * PAULIS[self.axis])


def as_bloch(r) -> np.ndarray:
    r = np.asarray(r, dtype=float)
    if r.shape[-1:] != (3,):
        raise ValueError(f"Bloch vectors have 3 components, got shape {r.shape}")
    if not np.all(np.isfinite(r)):
        raise ValueError("Bloch vector has non-finite components")
    return r


@dataclass(frozen=True, eq=False)
class DensityMatrix:
    """Hermitian, unit-trace 2x2 operator.

    Positivity is deliberately not enforced so that unphysical reconstructions
    can be carried around; use :meth:`is_physical` to test it.
    """

    m: np.ndarray

    def __post_init__(self):
        m = np.array(self.m, dtype=complex)
        if m.shape != (2, 2):
            raise ValueError(f"expected a 2x2 matrix, got shape {m.shape}")
        if np.max(np.abs(m - m.conj().T)) > _ATOL:
            raise ValueError("density matrix is not Hermitian")
        if abs(np.trace(m) - 1) > _ATOL:
            raise ValueError(f"density matrix trace is {np.trace(m).real}, not 1")
        m.setflags(write=False)
        object.__setattr__(self, "m", m)

    def eigenvalues(self) -> np.ndarray:
        return np.linalg.eigvalsh(self.m)

    def is_physical(self, tol: float = 1e-12) -> bool:
        return bool(self.eigenvalues()[0] >= -tol)


def bloch_to_density(r) -> DensityMatrix:
    r = as_bloch(r)
    return DensityMatrix(0.5 * (SIGMA_I + np.tensordot(r, PAULIS, axes=1)))


def density_to_bloch(rho: DensityMatrix) -> np.ndarray:
    m = rho.m if isinstance(rho, DensityMatrix) else np.asarray(rho)
    return np.real(np.einsum("ij,aji->a", m, PAULIS))


def outcome_probability(r, effect: Effect, clamp: bool = True) -> float:
    """Born-rule probability ``Tr(rho F)`` for a (possibly unphysical) Bloch vector.

    Clamping to ``[0, 1]`` is only meaningful when the number is used to draw
    samples; pass ``clamp=False`` to get the raw linear value.
    """
    r = as_bloch(r)
    p = 0.5 * (1.0 + effect.sign * r[..., effect.axis])
    return np.clip(p, 0.0, 1.0) if clamp else p


def trace_distance(rho1: DensityMatrix, rho2: DensityMatrix) -> float:
    """Half the trace norm of ``rho1 - rho2``."""
    diff = rho1.m - rho2.m
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(diff))))


def bloch_trace_distance(r1, r2) -> np.ndarray:
    """Trace distance in Bloch coordinates, ``|r1 - r2| / 2``; broadcasts over batches."""
    return 0.5 * np.linalg.norm(np.asarray(r1) - np.asarray(r2), axis=-1)


def regularize_state(r, k: float) -> np.ndarray:
    """Mix with the total mixture: ``k rho + (1 - k) I/2``, i.e. ``r -> k r``."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"mixing weight k must lie in [0, 1], got {k}")
    return k * as_bloch(r)
