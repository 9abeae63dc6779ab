"""Affine (Bloch-sphere) representation of qubit channels.

A trace-preserving Hermiticity-preserving qubit map acts on Bloch vectors as
``r -> T r + t``.  Complete positivity is not built in; it is tested through
the Choi operator ``(E x I)[P+]``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.linalg import lapack

from .bloch import PAULIS, SIGMA_I, bloch_trace_distance

# Tensor ordering for the Choi operator: system acted on by E first, reference
# second, i.e. Omega = 1/2 sum_ij E(|i><j|) kron |i><j|.
_MATRIX_UNITS = [
    (i, j, np.outer(np.eye(2)[i], np.eye(2)[j]).astype(complex))
    for j in range(2)
    for i in range(2)
]


@dataclass(frozen=True, eq=False)
class AffineChannel:
    """Qubit map ``r -> T r + t``.  May be non-CP (e.g. the universal NOT)."""

    T: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        T = np.array(self.T, dtype=float)
        t = np.array(self.t, dtype=float)
        if T.shape != (3, 3) or t.shape != (3,):
            raise ValueError(f"expected T of shape (3, 3) and t of shape (3,), got {T.shape}, {t.shape}")
        if not (np.all(np.isfinite(T)) and np.all(np.isfinite(t))):
            raise ValueError("channel has non-finite entries")
        T.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "T", T)
        object.__setattr__(self, "t", t)

    def __call__(self, r) -> np.ndarray:
        return apply(self, r)

    def __eq__(self, other):
        if not isinstance(other, AffineChannel):
            return NotImplemented
        return np.array_equal(self.T, other.T) and np.array_equal(self.t, other.t)

    __hash__ = None

    @classmethod
    def diagonal(cls, l1: float, l2: float, l3: float, t=(0.0, 0.0, 0.0)) -> "AffineChannel":
        return cls(np.diag([l1, l2, l3]), t)

    @classmethod
    def from_params(cls, x) -> "AffineChannel":
        """Build from the 12-tuple ``(t, T row-major)`` (block-matrix reading order)."""
        x = np.asarray(x, dtype=float)
        if x.shape != (12,):
            raise ValueError(f"expected 12 parameters, got shape {x.shape}")
        return cls(x[3:].reshape(3, 3), x[:3])

    def params(self) -> np.ndarray:
        return np.concatenate([self.t, self.T.ravel()])

    @classmethod
    def from_block(cls, block) -> "AffineChannel":
        block = np.asarray(block, dtype=float)
        if block.shape != (4, 4):
            raise ValueError(f"expected a 4x4 block matrix, got shape {block.shape}")
        if not np.allclose(block[0], [1, 0, 0, 0], atol=1e-12):
            raise ValueError("first row of a trace-preserving block matrix must be (1, 0, 0, 0)")
        return cls(block[1:, 1:], block[1:, 0])


StateTransform = Callable[[np.ndarray], np.ndarray]
MapLike = Union[AffineChannel, StateTransform]


def apply(ch: AffineChannel, r) -> np.ndarray:
    """Act on one Bloch vector or a batch of shape ``(n, 3)``."""
    r = np.asarray(r, dtype=float)
    return r @ ch.T.T + ch.t


def block_matrix(ch: AffineChannel) -> np.ndarray:
    """4x4 real matrix acting on ``(1, r)``: first row ``(1, 0, 0, 0)``, then ``[t | T]``."""
    out = np.zeros((4, 4))
    out[0, 0] = 1.0
    out[1:, 0] = ch.t
    out[1:, 1:] = ch.T
    return out


def _act_on_operator(ch: AffineChannel, X: np.ndarray) -> np.ndarray:
    # Linear extension to arbitrary (non-Hermitian) operators through the
    # Pauli expansion X = (Tr X I + sum_a Tr(X s_a) s_a) / 2.
    tr = np.trace(X)
    c = np.einsum("ij,aji->a", X, PAULIS)
    out_c = ch.T @ c + tr * ch.t
    return 0.5 * (tr * SIGMA_I + np.tensordot(out_c, PAULIS, axes=1))


def choi(ch: AffineChannel) -> np.ndarray:
    """Choi operator ``(E x I)[P+]`` with ``P+`` the projector onto ``(|00> + |11>)/sqrt 2``.

    The result is a Hermitian 4x4 matrix of unit trace; it is positive
    semidefinite exactly when the channel is completely positive.
    """
    omega = np.zeros((4, 4), dtype=complex)
    for _, _, unit in _MATRIX_UNITS:
        omega += np.kron(_act_on_operator(ch, unit), unit)
    return 0.5 * omega


def _choi_basis():
    # Omega depends affinely on the 12 parameters (t, T); tabulate that map once
    # from the generic construction so the hot path is a single contraction.
    zero = AffineChannel(np.zeros((3, 3)), np.zeros(3))
    offset = choi(zero)
    basis = np.empty((12, 4, 4), dtype=complex)
    for k in range(12):
        x = np.zeros(12)
        x[k] = 1.0
        basis[k] = choi(AffineChannel.from_params(x)) - offset
    return offset, basis


_CHOI_OFFSET, _CHOI_BASIS = _choi_basis()
_CHOI_OFFSET_FLAT = _CHOI_OFFSET.ravel()
_CHOI_BASIS_FLAT = _CHOI_BASIS.reshape(12, 16)


def choi_from_params(x: np.ndarray) -> np.ndarray:
    """Choi operator of ``AffineChannel.from_params(x)`` without building the channel."""
    return (_CHOI_OFFSET_FLAT + x @ _CHOI_BASIS_FLAT).reshape(4, 4)


def min_choi_eigenvalue_params(x: np.ndarray) -> float:
    # direct LAPACK call: numpy's eigvalsh wrapper costs as much as the 4x4 solve
    w, _, info = lapack.zheev(choi_from_params(x), compute_v=0)
    if info != 0:
        raise np.linalg.LinAlgError(f"zheev failed with info={info}")
    return float(w[0])


def min_choi_eigenvalue(ch: AffineChannel) -> float:
    return min_choi_eigenvalue_params(ch.params())


class CpCheck(NamedTuple):
    cp: bool
    min_eigenvalue: float

    def __bool__(self):
        return self.cp


def is_cp(ch: AffineChannel, tol: float = 1e-9) -> CpCheck:
    """Complete-positivity test; truthy iff the Choi spectrum is ``>= -tol``."""
    if tol < 0:
        raise ValueError("tol must be nonnegative")
    lam = min_choi_eigenvalue(ch)
    return CpCheck(lam >= -tol, lam)


def unital_tetrahedron_cp(l1: float, l2: float, l3: float) -> bool:
    """CP test for the diagonal unital map ``diag(l1, l2, l3)``.

    Checks ``|l1 + l2| <= 1 + l3`` and ``|l1 - l2| <= 1 - l3``.  Inside the cube
    of positive maps (``|l3| <= 1``) the right-hand sides are nonnegative and
    may equally be written ``|1 +- l3|``; outside it only the signed form is
    equivalent to a positive Choi operator.
    """
    return (abs(l1 + l2) <= 1 + l3) and (abs(l1 - l2) <= 1 - l3)


def unital_positivity(l1: float, l2: float, l3: float) -> bool:
    return max(abs(l1), abs(l2), abs(l3)) <= 1


class SignedSvd(NamedTuple):
    """``T = R_U diag(lam) R_V`` with proper rotations and signed ``lam``.

    ``tau`` is the translation of the rotated-frame diagonal map,
    ``s -> diag(lam) s + tau``, so that ``T r + t = R_U (diag(lam) R_V r + tau)``.
    """

    R_U: np.ndarray
    lam: np.ndarray
    R_V: np.ndarray
    tau: np.ndarray


def _diagonal_signed_svd(d: np.ndarray):
    order = sorted(range(3), key=lambda i: (-abs(d[i]), i))
    P = np.eye(3)[order]  # P @ diag(d) @ P.T = diag(d[order])
    if np.linalg.det(P) < 0:
        P = -P
    return P.T, d[order], P


def signed_svd(ch: AffineChannel) -> SignedSvd:
    T = ch.T
    if np.count_nonzero(T - np.diag(np.diag(T))) == 0:
        R_U, lam, R_V = _diagonal_signed_svd(np.diag(T).copy())
    else:
        U, s, Vh = np.linalg.svd(T)
        lam = s.copy()
        if np.linalg.det(U) < 0:
            U[:, -1] *= -1
            lam[-1] *= -1
        if np.linalg.det(Vh) < 0:
            Vh[-1, :] *= -1
            lam[-1] *= -1
        R_U, R_V = U, Vh
    return SignedSvd(R_U, lam, R_V, R_U.T @ ch.t)


def regularize_channel(ch: AffineChannel, k: float) -> AffineChannel:
    """Convex mixture ``k E + (1 - k) A`` with the completely depolarizing map ``A``."""
    if not 0.0 <= k <= 1.0:
        raise ValueError(f"mixing weight k must lie in [0, 1], got {k}")
    return AffineChannel(k * ch.T, k * ch.t)


def max_cp_mixing(ch: AffineChannel, tol: float = 1e-9, cp_tol: float = 1e-12) -> float:
    """Largest ``k`` in ``[0, 1]`` for which ``regularize_channel(ch, k)`` is CP.

    Bisection on ``k``; the feasible set is an interval ``[0, k*]`` because the
    CP maps form a convex set containing the depolarizing map.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")

    def feasible(k):
        return is_cp(regularize_channel(ch, k), cp_tol).cp

    if not feasible(0.0):
        raise RuntimeError("the depolarizing channel failed the CP test")
    if feasible(1.0):
        return 1.0
    lo, hi = 0.0, 1.0
    for _ in range(200):
        if hi - lo <= tol:
            break
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def as_transform(m: MapLike) -> StateTransform:
    if isinstance(m, AffineChannel):
        return m.__call__
    if callable(m):
        return m
    raise TypeError(f"cannot use {type(m).__name__} as a state transform")


def sample_pure_states(n: int, rng: np.random.Generator) -> np.ndarray:
    """``n`` Bloch vectors uniform on the unit sphere (uniform ``z``, uniform azimuth)."""
    z = rng.uniform(-1.0, 1.0, size=n)
    phi = rng.uniform(0.0, 2 * np.pi, size=n)
    s = np.sqrt(1.0 - z * z)
    return np.column_stack([s * np.cos(phi), s * np.sin(phi), z])


class DistanceEstimate(NamedTuple):
    distance: float
    stderr: float


def channel_distance(a: MapLike, b: MapLike, n_samples: int, rng: np.random.Generator) -> DistanceEstimate:
    """Average trace distance between the outputs of two maps over pure input states.

    Inputs are drawn uniformly from the Bloch sphere surface.  Either map may
    be an :class:`AffineChannel` or any callable acting on ``(n, 3)`` batches
    of Bloch vectors, so nonlinear maps are accepted.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    r = sample_pure_states(n_samples, rng)
    d = bloch_trace_distance(as_transform(a)(r), as_transform(b)(r))
    stderr = float(np.std(d, ddof=1) / np.sqrt(n_samples)) if n_samples > 1 else float("nan")
    return DistanceEstimate(float(np.mean(d)), stderr)
