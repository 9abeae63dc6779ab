"""End-to-end acceptance checks, each at its stated tolerance and runtime budget.

The estimator sweeps are shared session fixtures, so the CP check over every estimate
reuses them instead of refitting.
"""

import time

import numpy as np
import pytest

from qubitmml.bloch import bloch_to_density, bloch_trace_distance, trace_distance
from qubitmml.channel import AffineChannel, channel_distance, is_cp, max_cp_mixing, unital_tetrahedron_cp
from qubitmml.cli import run_npr_curve, run_unot_convergence
from qubitmml.maps import npr_analytic_lambda, npr_reduced_distance, unot, unot_optimal
from qubitmml.mml import log_likelihood, mml_estimate, nelder_mead
from qubitmml.tomography import (
    SufficientStatistics,
    aggregate,
    linear_inversion,
    save_dataset,
    simulate_clicks,
    standard_plan,
)

pytestmark = pytest.mark.slow

SEED = 20240601


def timed(fn):
    start = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - start


@pytest.fixture(scope="session")
def unot_reconstruction():
    def run():
        out = {}
        for n in (1800, 18000):
            fits = []
            for seed in range(10):
                ds = simulate_clicks(unot(), standard_plan(n // 18), np.random.default_rng([SEED, n, seed]))
                res = mml_estimate(ds, rng=np.random.default_rng([SEED, n, seed, 1]))
                d = channel_distance(res.channel, unot_optimal(), 10_000, np.random.default_rng([SEED, n, seed, 2]))
                fits.append((d.distance, res.min_choi_eigenvalue))
            out[n] = fits
        return out

    return timed(run)


@pytest.fixture(scope="session")
def unot_convergence():
    return timed(lambda: run_unot_convergence([180, 1800, 18000], repeats=10, seed=SEED))


@pytest.fixture(scope="session")
def npr_curve():
    return timed(lambda: run_npr_curve([0.0, 0.5, 1.0, 1.5, 2.0, 2.5, 3.0], repeats=10, seed=SEED, clicks=1800))


def test_criterion_1_distance_value(report):
    est, elapsed = timed(lambda: channel_distance(unot(), unot_optimal(), 100_000, np.random.default_rng(SEED)))
    ok = abs(est.distance - 1 / 3) < 1e-9 and est.stderr < 1e-9 and elapsed < 1.0
    report(1, ok, f"d={est.distance:.15f} stderr={est.stderr:.2e} time={elapsed:.3f}s")
    assert ok


def test_criterion_2_minimal_regularization(report):
    k, elapsed = timed(lambda: max_cp_mixing(unot(), 1e-9))
    ok = abs(k - 1 / 3) <= 1e-6 and elapsed < 1.0
    report(2, ok, f"k*={k:.12f} time={elapsed:.3f}s")
    assert ok


def test_criterion_3_tetrahedron_matches_choi(report):
    def run():
        lams = np.random.default_rng(SEED).uniform(-1.5, 1.5, (10_000, 3))
        return sum(unital_tetrahedron_cp(*lam) == bool(is_cp(AffineChannel.diagonal(*lam), 1e-9)) for lam in lams)

    agree, elapsed = timed(run)
    ok = agree == 10_000 and elapsed < 10.0
    report(3, ok, f"agreement={agree}/10000 time={elapsed:.2f}s")
    assert ok


def test_criterion_4_unot_reconstruction(report, unot_reconstruction):
    fits, elapsed = unot_reconstruction
    med = {n: float(np.median([d for d, _ in fits[n]])) for n in fits}
    ok = med[1800] <= 0.05 and med[18000] <= 0.02 and elapsed < 300
    report(4, ok, f"median d(N=1800)={med[1800]:.4f} median d(N=18000)={med[18000]:.4f} time={elapsed:.0f}s")
    assert ok


def test_criterion_5_unot_convergence(report, unot_convergence):
    rows, elapsed = unot_convergence
    medians = [row.summary()[0] for row in rows]
    dev = [abs(m - 1 / 3) for m in medians]
    ok = dev[-1] <= 0.03 and all(b <= a for a, b in zip(dev, dev[1:])) and elapsed < 600
    shown = ", ".join(f"N={row.n}: {m:.4f}" for row, m in zip(rows, medians))
    report(5, ok, f"median d(E,U-NOT) {shown} time={elapsed:.0f}s")
    assert ok


def test_criterion_6_npr_curve(report, npr_curve):
    rows, elapsed = npr_curve
    within = [abs(r.lambda_est_mean - r.lambda_analytic) <= 3 * r.lambda_est_std for r in rows]
    exact_zero = npr_analytic_lambda(0.0) == 1.0
    ok = all(within) and exact_zero and elapsed < 900
    shown = "; ".join(
        f"{r.theta:g}: {r.lambda_analytic:.3f} vs {r.lambda_est_mean:.3f}±{r.lambda_est_std:.3f}" for r in rows
    )
    report(6, ok, f"{sum(within)}/{len(rows)} within 3 std [{shown}] time={elapsed:.0f}s")
    assert ok


def test_criterion_7_p_is_trivial(report):
    found = {}
    for theta in (1.0, 2.0, 3.0):
        x, _, _ = nelder_mead(lambda v: -npr_reduced_distance(theta, v[0], p=v[1]), [0.5, 0.5], 5000, 0.1, 1e-14)
        found[theta] = x[1]
    ok = all(abs(p - 1) <= 0.01 for p in found.values())
    report(7, ok, "p at theta=1,2,3: " + ", ".join(f"{p:.5f}" for p in found.values()))
    assert ok


def test_criterion_8_every_estimate_is_cp(report, unot_reconstruction, unot_convergence, npr_curve):
    eig = [e for fits in unot_reconstruction[0].values() for _, e in fits]
    eig += [run.min_choi_eigenvalue for row in unot_convergence[0] for run in row.runs]
    eig += [run.min_choi_eigenvalue for row in npr_curve[0] for run in row.runs]
    ok = all(e >= -1e-9 for e in eig)
    report(8, ok, f"{sum(e >= -1e-9 for e in eig)}/{len(eig)} estimates CP, worst min eigenvalue {min(eig):.3e}")
    assert ok


def test_criterion_9_property_suites(report, tmp_path):
    rng = np.random.default_rng(SEED)
    failures = []

    r1 = rng.normal(size=(200, 3))
    r1 *= rng.uniform(0, 1, (200, 1)) / np.linalg.norm(r1, axis=1, keepdims=True)
    r2 = r1[::-1]
    ops = np.array([trace_distance(bloch_to_density(a), bloch_to_density(b)) for a, b in zip(r1, r2)])
    if np.max(np.abs(ops - bloch_trace_distance(r1, r2))) > 1e-12:
        failures.append("trace distance")

    for k, seed in enumerate((1, 2)):
        ds = simulate_clicks(unot(), standard_plan(40), np.random.default_rng(seed), seed=seed)
        save_dataset(ds, tmp_path / f"a{k}.jsonl")
        save_dataset(simulate_clicks(unot(), standard_plan(40), np.random.default_rng(seed), seed=seed), tmp_path / f"b{k}.jsonl")
        if (tmp_path / f"a{k}.jsonl").read_bytes() != (tmp_path / f"b{k}.jsonl").read_bytes():
            failures.append("determinism")

    ds = simulate_clicks(unot(), standard_plan(25), rng)
    stats = aggregate(ds)
    for _ in range(10):
        ch = AffineChannel(rng.uniform(-0.5, 0.5, (3, 3)), rng.uniform(-0.2, 0.2, 3))
        per_click = sum(np.log(0.5 * (1 + rec.outcome * ch(rec.input)[rec.axis])) for rec in ds.records())
        if abs(per_click - log_likelihood(ch, stats)) > 1e-10:
            failures.append("aggregation")
            break

    for _ in range(20):
        ch = AffineChannel(rng.uniform(-1, 1, (3, 3)) / 4, rng.uniform(-1, 1, 3) / 4)
        est = linear_inversion(SufficientStatistics.expected(ch, standard_plan(1)))
        if max(np.max(np.abs(est.T - ch.T)), np.max(np.abs(est.t - ch.t))) > 1e-12:
            failures.append("linear inversion")
            break

    for seed in range(3):
        ds = simulate_clicks(unot(), standard_plan(100), np.random.default_rng([SEED, seed]))
        res = mml_estimate(ds, rng=np.random.default_rng([SEED, seed, 1]))
        if res.log_likelihood < log_likelihood(unot_optimal(), ds) - 1e-6:
            failures.append("optimizer quality")

    report(9, not failures, "all property checks hold" if not failures else "failed: " + ", ".join(failures))
    assert not failures
