"""Maximum-likelihood channel estimation constrained to completely positive maps.

The search runs over the raw 12 affine parameters ``(t, T)``.  Complete
positivity is not built into the parametrization: any trial point whose Choi
operator has an eigenvalue below ``-cp_tol`` scores ``-inf`` and is simply
never accepted by the simplex.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .channel import AffineChannel, max_cp_mixing, min_choi_eigenvalue_params, regularize_channel, signed_svd
from .tomography import ClickDataset, SufficientStatistics, aggregate

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MlConfig:
    max_iterations: int = 20000
    simplex_scale: float = 0.1
    convergence_tol: float = 1e-9
    restarts: int = 5
    cp_tol: float = 1e-9
    prob_floor: float = 1e-12
    # re-seed the simplex at the incumbent (random orientation, scales cycling
    # down by decades) until one full round of scales gains less than polish_tol
    max_polish_cycles: int = 40
    polish_scales: int = 4
    polish_tol: float = 1e-4
    # a simplex squeezed against the CP wall keeps -inf vertices forever; stop on its diameter
    simplex_xtol: float = 1e-12
    max_start_attempts: int = 100_000

    def __post_init__(self):
        for name in ("max_iterations", "simplex_scale", "convergence_tol", "restarts", "cp_tol", "prob_floor"):
            if not getattr(self, name) > 0:
                raise ValueError(f"MlConfig.{name} must be positive")


@dataclass(frozen=True)
class MlResult:
    channel: AffineChannel
    log_likelihood: float
    iterations_used: int
    restarts_used: int
    feasible: bool
    min_choi_eigenvalue: float


def _cell_design(stats: SufficientStatistics) -> np.ndarray:
    # Row c picks out (T r_c + t)[axis_c] from the parameter vector (t, T row-major).
    m = len(stats)
    design = np.zeros((m, 12))
    rows = np.arange(m)
    design[rows, stats.axes] = 1.0
    for j in range(3):
        design[rows, 3 + 3 * stats.axes + j] = stats.inputs[:, j]
    return design


def _as_stats(data) -> SufficientStatistics:
    return aggregate(data) if isinstance(data, ClickDataset) else data


def log_likelihood(ch: AffineChannel, data: SufficientStatistics | ClickDataset, prob_floor: float = 1e-12) -> float:
    """``sum_cells n log p`` with ``p = (1 + outcome * (T r + t)[axis]) / 2``; larger is better.

    Probabilities under ``prob_floor`` are replaced by the floor.
    """
    stats = _as_stats(data)
    p = 0.5 * (1.0 + stats.outcomes * (_cell_design(stats) @ ch.params()))
    return float(np.sum(stats.counts * np.log(np.maximum(p, prob_floor))))


def make_objective(data, cfg: MlConfig) -> Callable[[np.ndarray], float]:
    """Log-likelihood over the 12-vector, ``-inf`` outside the CP set."""
    stats = _as_stats(data)
    weighted = stats.outcomes * _cell_design(stats).T  # (12, m)
    counts = stats.counts
    floor = cfg.prob_floor
    cp_tol = cfg.cp_tol

    def objective(x: np.ndarray) -> float:
        if min_choi_eigenvalue_params(x) < -cp_tol:
            return -np.inf
        p = 0.5 * (1.0 + x @ weighted)
        return float(counts @ np.log(np.maximum(p, floor)))

    return objective


def nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0,
    max_iterations: int = 20000,
    simplex_scale: float = 0.1,
    convergence_tol: float = 1e-9,
    xtol: float = 0.0,
    initial_steps: np.ndarray | None = None,
) -> tuple[np.ndarray, float, int]:
    """Maximize ``objective`` with the Nelder-Mead simplex.

    Coefficients: reflection 1, expansion 2, contraction 1/2, shrink 1/2.
    Points outside the feasible region must score ``-inf``; they lose every
    comparison and are therefore never accepted, so the boundary acts as a
    wall rather than a penalty.  Stops when the spread of function values over
    the simplex drops below ``convergence_tol``, when every vertex lies within
    ``xtol`` of the best one, or after ``max_iterations``.

    The initial simplex is ``x0`` plus the rows of ``initial_steps``
    (default: ``simplex_scale`` times the coordinate axes).

    Returns ``(x_best, f_best, iterations)``.
    """
    x0 = np.asarray(x0, dtype=float)
    f0 = objective(x0)
    if not np.isfinite(f0):
        raise ValueError("nelder_mead needs a feasible starting point")
    n = x0.size
    steps = simplex_scale * np.eye(n) if initial_steps is None else np.asarray(initial_steps, dtype=float)
    simplex = np.vstack([x0, x0 + steps])
    fvals = np.array([f0] + [objective(v) for v in simplex[1:]])

    it = 0
    while it < max_iterations:
        order = np.argsort(-fvals, kind="stable")  # best first
        simplex, fvals = simplex[order], fvals[order]
        if fvals[0] - fvals[-1] < convergence_tol:
            break
        if xtol > 0 and np.max(np.abs(simplex[1:] - simplex[0])) <= xtol:
            break
        it += 1
        centroid = np.add.reduce(simplex[:-1]) / n
        worst = simplex[-1]

        xr = centroid + (centroid - worst)
        fr = objective(xr)
        if fr > fvals[0]:
            xe = centroid + 2.0 * (centroid - worst)
            fe = objective(xe)
            if fe > fr:
                simplex[-1], fvals[-1] = xe, fe
            else:
                simplex[-1], fvals[-1] = xr, fr
            continue
        if fr > fvals[-2]:
            simplex[-1], fvals[-1] = xr, fr
            continue
        if fr > fvals[-1]:
            xc = centroid + 0.5 * (xr - centroid)  # outside contraction
            fc = objective(xc)
            if fc >= fr:
                simplex[-1], fvals[-1] = xc, fc
                continue
        else:
            xc = centroid + 0.5 * (worst - centroid)  # inside contraction
            fc = objective(xc)
            if fc > fvals[-1]:
                simplex[-1], fvals[-1] = xc, fc
                continue
        best = simplex[0]
        simplex[1:] = best + 0.5 * (simplex[1:] - best)
        fvals[1:] = [objective(v) for v in simplex[1:]]

    i = int(np.argmax(fvals))
    return simplex[i].copy(), float(fvals[i]), it


def random_cp_channel(rng: np.random.Generator, cp_tol: float = 1e-9, max_attempts: int = 100_000) -> AffineChannel:
    """Rejection sample: ``T`` entries uniform in [-1, 1], ``t`` in [-0.2, 0.2], kept if CP."""
    for _ in range(max_attempts):
        x = np.concatenate([rng.uniform(-0.2, 0.2, 3), rng.uniform(-1.0, 1.0, 9)])
        if min_choi_eigenvalue_params(x) >= -cp_tol:
            return AffineChannel.from_params(x)
    raise RuntimeError(f"no CP channel found in {max_attempts} attempts")


def least_squares_start(data, cfg: MlConfig) -> AffineChannel:
    """Unconstrained least-squares affine fit of the outcomes, shrunk into the CP set.

    Each click has expectation ``(T r + t)[axis]``, so regressing the +-1
    outcomes on the cell design gives a linear estimate for any input set; the
    largest admissible mixing with the depolarizing map makes it CP.
    """
    stats = _as_stats(data)
    w = np.sqrt(stats.counts)
    design = _cell_design(stats)
    x, *_ = np.linalg.lstsq(design * w[:, None], stats.outcomes * w, rcond=None)
    raw = AffineChannel.from_params(x)
    # mix to a slightly stricter tolerance so the start is safely feasible
    k = max_cp_mixing(raw, tol=1e-9, cp_tol=0.5 * cfg.cp_tol)
    return regularize_channel(raw, k)


def _random_rotation(n: int, rng: np.random.Generator) -> np.ndarray:
    q, r = np.linalg.qr(rng.standard_normal((n, n)))
    return q * np.sign(np.diag(r))


def _single_start(objective, x0, cfg: MlConfig, rng: np.random.Generator) -> tuple[np.ndarray, float, int]:
    x, f, used = nelder_mead(objective, x0, cfg.max_iterations, cfg.simplex_scale, cfg.convergence_tol, cfg.simplex_xtol)
    # A simplex squeezed against the CP wall crawls along it.  Re-seeding at the
    # incumbent with a freshly oriented simplex, at decreasing sizes, lets it
    # slide along the wall instead.
    gains = []
    for cycle in range(cfg.max_polish_cycles):
        scale = cfg.simplex_scale * 10.0 ** -(cycle % cfg.polish_scales)
        steps = scale * _random_rotation(x.size, rng)
        x_new, f_new, it = nelder_mead(
            objective, x, cfg.max_iterations, cfg.simplex_scale, cfg.convergence_tol, cfg.simplex_xtol, steps
        )
        used += it
        gains.append(max(f_new - f, 0.0))
        if f_new > f:
            x, f = x_new, f_new
        if len(gains) >= cfg.polish_scales and sum(gains[-cfg.polish_scales:]) < cfg.polish_tol:
            break
    return x, f, used


def mml_estimate(data: ClickDataset | SufficientStatistics, cfg: MlConfig | None = None, rng: np.random.Generator | None = None) -> MlResult:
    """Most likely CP channel for the clicks.

    Start 0 is the depolarizing channel, start 1 the regularized least-squares
    fit, and any further starts are random CP channels drawn from independent
    sub-streams of ``rng``.  The best start wins, ties going to the lower
    start index.
    """
    cfg = cfg or MlConfig()
    stats = _as_stats(data)
    if stats.n_total <= 0:
        raise ValueError("need at least one click")
    rng = rng if rng is not None else np.random.default_rng()
    objective = make_objective(stats, cfg)
    streams = rng.spawn(cfg.restarts)

    best = None
    total_iterations = 0
    for k, stream in enumerate(streams):
        if k == 0:
            x0 = np.zeros(12)
        elif k == 1:
            x0 = least_squares_start(stats, cfg).params()
        else:
            x0 = random_cp_channel(stream, cfg.cp_tol, cfg.max_start_attempts).params()
        x, f, used = _single_start(objective, x0, cfg, stream)
        total_iterations += used
        log.debug("start %d: log L = %.12g after %d iterations", k, f, used)
        if best is None or f > best[1]:
            best = (x, f)

    ch = AffineChannel.from_params(best[0])
    lam = min_choi_eigenvalue_params(best[0])
    return MlResult(
        channel=ch,
        log_likelihood=log_likelihood(ch, stats, cfg.prob_floor),
        iterations_used=total_iterations,
        restarts_used=cfg.restarts,
        feasible=lam >= -cfg.cp_tol,
        min_choi_eigenvalue=lam,
    )


def npr_lambda_from_estimate(ch: AffineChannel) -> float:
    """Mean of the two short signed semi-axes of the output ellipsoid."""
    lam = signed_svd(ch).lam
    long_axis = int(np.argmax(np.abs(lam)))  # first index wins ties
    return float(np.mean(np.delete(lam, long_axis)))
