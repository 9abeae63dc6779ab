"""Named maps: universal NOT, its best CP approximation, the depolarizing
channel, and the nonlinear polarization rotation (NPR) with its symmetric
CP approximation family ``diag(lam, lam, p)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson

from .channel import AffineChannel

_GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def identity() -> AffineChannel:
    return AffineChannel(np.eye(3), np.zeros(3))


def unot() -> AffineChannel:
    """Bloch-sphere inversion ``r -> -r``; positive but not CP."""
    return AffineChannel(-np.eye(3), np.zeros(3))


def unot_optimal() -> AffineChannel:
    return AffineChannel(-np.eye(3) / 3.0, np.zeros(3))


def average_channel() -> AffineChannel:
    """Sends every state to the total mixture."""
    return AffineChannel(np.zeros((3, 3)), np.zeros(3))


NAMED_MAPS = {
    "identity": identity,
    "unot": unot,
    "unot-optimal": unot_optimal,
    "average": average_channel,
}


def npr_apply(theta: float, r) -> np.ndarray:
    """Rotate ``r`` about z by ``theta * r_z``.  Accepts a batch of shape ``(n, 3)``."""
    r = np.asarray(r, dtype=float)
    phi = theta * r[..., 2]
    c, s = np.cos(phi), np.sin(phi)
    out = np.empty_like(r)
    out[..., 0] = c * r[..., 0] - s * r[..., 1]
    out[..., 1] = s * r[..., 0] + c * r[..., 1]
    out[..., 2] = r[..., 2]
    return out


@dataclass(frozen=True)
class NprMap:
    """The NPR map at fixed strength, usable wherever a state transform is expected."""

    theta: float

    def __post_init__(self):
        if not np.isfinite(self.theta):
            raise ValueError("theta must be finite")

    def __call__(self, r) -> np.ndarray:
        return npr_apply(self.theta, r)

    def __str__(self):
        return f"npr:{self.theta!r}"


def npr_approx_channel(lam: float, p: float = 1.0) -> AffineChannel:
    """``x -> lam x, y -> lam y, z -> p z``."""
    return AffineChannel(np.diag([lam, lam, p]), np.zeros(3))


def _simpson_grid(quad_points: int) -> np.ndarray:
    if quad_points < 16:
        raise ValueError("quad_points must be at least 16")
    n = quad_points + (quad_points % 2)  # Simpson needs an even number of intervals
    return np.linspace(0.0, np.pi, n + 1)


def npr_reduced_distance(theta: float, lam: float, quad_points: int = 512, p: float = 1.0) -> float:
    """Mean trace distance between NPR and ``diag(lam, lam, p)`` over pure states.

    Writing the input as ``(sin a cos f, sin a sin f, cos a)``, the output
    difference no longer depends on ``f``, which leaves

        1/4 int_0^pi sin a * sqrt(sin^2 a (1 + lam^2 - 2 lam cos(theta cos a)) + (1 - p)^2 cos^2 a) da

    evaluated with composite Simpson.  For ``p = 1`` this is
    ``1/4 int sin^2 a sqrt(1 + lam^2 - 2 lam cos(theta cos a)) da``.
    """
    a = _simpson_grid(quad_points)
    s, c = np.sin(a), np.cos(a)
    transverse = np.maximum(1.0 + lam * lam - 2.0 * lam * np.cos(theta * c), 0.0)
    integrand = s * np.sqrt(s * s * transverse + (1.0 - p) ** 2 * c * c)
    return 0.25 * float(simpson(integrand, x=a))


def golden_section_min(f, lo: float, hi: float, tol: float) -> float:
    """Minimizer of a unimodal ``f`` on ``[lo, hi]`` to bracket width ``tol``."""
    x1 = hi - _GOLDEN * (hi - lo)
    x2 = lo + _GOLDEN * (hi - lo)
    f1, f2 = f(x1), f(x2)
    while hi - lo > tol:
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _GOLDEN * (hi - lo)
            f1 = f(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _GOLDEN * (hi - lo)
            f2 = f(x2)
    return 0.5 * (lo + hi)


def npr_analytic_lambda(theta: float, quad_points: int = 512, tol: float = 1e-8) -> float:
    """Best ``lam`` in ``[-1, 1]`` for approximating NPR at strength ``theta``."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    if theta == 0.0:
        # the identity is exactly reachable; golden section would stop tol/2 short
        return 1.0
    return golden_section_min(lambda lam: npr_reduced_distance(theta, lam, quad_points), -1.0, 1.0, tol)
