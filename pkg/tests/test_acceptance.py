"""Acceptance checks, one test per criterion.

Each test prints a single ``criterion N: PASS|FAIL`` line (collected again in
the terminal summary) before asserting, so a failing criterion still reports
the numbers it was judged on.  Run directly with ``python
tests/test_acceptance.py`` to get just the ten lines.
"""

import math
import time

import numpy as np
import pytest

from lobexec import cli
from lobexec.chain import (
    asymptotic_exec_stats,
    build_kernel,
    exec_moments,
    exec_time_gf,
    exec_time_moments,
    free_time_asymptotics,
    small_q_coeffs,
)
from lobexec.firstpassage import (
    asymmetry_chi,
    strip_derivatives,
    strip_driftless_closed,
    strip_laplace,
)
from lobexec.model import ModelParams, ResetDistribution, StripGeometry
from lobexec.montecarlo import (
    SimConfig,
    simulate_execution,
    simulate_first_passage,
    simulate_free,
    snapshot_stats,
    summarize,
    variogram_slope,
)
from lobexec.quadrature import derivative_at_zero_plus
from oracles import frozen

pytestmark = [pytest.mark.acceptance, pytest.mark.slow]

MUS = (0.0, 0.5, 1.0)
Q_GRID = tuple(2.0 + 0.25 * k for k in range(17))  # 2 .. 6


def _random_states(rng, q, n):
    return [(float(rng.uniform(0.05, 3.0 * q)), float(rng.uniform(0.05, q - 0.05)))
            for _ in range(n)]


def test_conservation_suite(report):
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst_sum, outside, points = 0.0, 0, 0
    for mu in MUS:
        for omega in (0.0, 0.1, 1.0):
            for q in (3.0, 4.0, 6.0):
                for state in _random_states(rng, q, 4):
                    # raw values: the public wrapper clips into [0, 1]
                    vals = strip_derivatives(mu, q, state, omega, 0)
                    points += 1
                    if omega == 0.0:
                        worst_sum = max(worst_sum, abs(float(np.sum(vals)) - 1.0))
                    elif np.any(vals < 0.0) or np.any(vals > 1.0):
                        outside += 1
    elapsed = time.perf_counter() - t0
    ok = points >= 100 and worst_sum <= 1e-6 and outside == 0 and elapsed < 30.0
    report(1, ok, f"{points} points, max |sum-1| at w=0 = {worst_sum:.1e}, "
                  f"{outside} values outside [0,1] at w>0, {elapsed:.1f} s")
    assert ok


def test_driftless_closed_form_and_representations(report):
    rng = np.random.default_rng(202)
    p0 = ModelParams(mu=0.0)
    worst_closed, worst_rep = 0.0, 0.0
    for q in (3.0, 4.0, 5.0, 8.0):
        geom = StripGeometry(q)
        for state in _random_states(rng, q, 25):
            exact = np.array(strip_driftless_closed(state, q).as_tuple())
            series = np.array(strip_laplace(p0, geom, state, method="series").as_tuple())
            worst_closed = max(worst_closed, float(np.max(np.abs(series - exact))))
    for mu in MUS:
        params = ModelParams(mu=mu)
        for omega in (0.0, 0.1):
            for state in _random_states(rng, 4.0, 5):
                a = np.array(strip_laplace(params, StripGeometry(4.0), state, omega,
                                           method="series").as_tuple())
                b = np.array(strip_laplace(params, StripGeometry(4.0), state, omega,
                                           method="integral").as_tuple())
                worst_rep = max(worst_rep, float(np.max(np.abs(a - b))))
    ok = worst_closed <= 1e-8 and worst_rep <= 1e-6
    report(2, ok, f"100 states: max |series-closed| = {worst_closed:.1e}; "
                  f"max |series-integral| = {worst_rep:.1e}")
    assert ok


def test_hitting_triple_simulation(report):
    t0 = time.perf_counter()
    res = simulate_first_passage(ModelParams(mu=0.0), StripGeometry(4.0),
                                 SimConfig(n_paths=100_000, seed=3, dt=1e-3))
    elapsed = time.perf_counter() - t0
    exact = strip_driftless_closed((2.0, 2.0), 4.0).as_tuple()
    z = [(res[k] - e) / res["se_" + k] for k, e in zip(("ex", "up", "dn"), exact)]
    oracle_ok = np.allclose(exact, frozen.TRIPLE_22_Q4, atol=1e-12)
    ok = oracle_ok and all(abs(v) <= 3.0 for v in z) and elapsed < 90.0
    report(3, ok, f"MC ({res['ex']:.4f}, {res['up']:.4f}, {res['dn']:.4f}) vs "
                  f"({exact[0]:.4f}, {exact[1]:.4f}, {exact[2]:.4f}), "
                  f"z = {', '.join(f'{v:+.2f}' for v in z)}, {elapsed:.1f} s")
    assert ok


def _within(mc, se, an, k=2.0):
    return abs(mc - an) <= k * se


def test_execution_curves(report):
    t0 = time.perf_counter()
    names = ("mean_x", "mean_n", "mean_T")
    hits = {k: 0 for k in names}
    joint = 0
    total = 0
    for mu in MUS:
        params = ModelParams(mu=mu)
        sim = SimConfig(n_paths=8000, seed=7)
        for q in Q_GRID:
            geom = StripGeometry(q)
            mc = summarize(simulate_execution(params, geom, sim))
            an = exec_moments(params, geom)
            at = exec_time_moments(params, geom)
            good = {
                "mean_x": _within(mc.mean_x, mc.se["mean_x"], an.mean_x),
                "mean_n": _within(mc.mean_n, mc.se["mean_n"], an.mean_n),
                "mean_T": _within(mc.mean_T, mc.se["mean_T"], at.mean_T),
            }
            for k in names:
                hits[k] += good[k]
            joint += all(good.values())
            total += 1
    elapsed = time.perf_counter() - t0
    frac = {k: hits[k] / total for k in names}
    ok = all(f >= 0.9 for f in frac.values()) and elapsed < 600.0
    report(4, ok, "within 2 se: " + ", ".join(f"{k} {hits[k]}/{total}" for k in names)
                  + f"; all three jointly {joint}/{total}; {elapsed:.0f} s")
    assert ok


def test_large_q_laws(report):
    p0 = ModelParams(mu=0.0)
    chi = asymmetry_chi(p0)
    m12 = exec_moments(p0, StripGeometry(12.0))
    limit = (1.0 + chi) / 6.0
    err_x = abs(m12.mean_x / limit - 1.0)
    lo, hi = (exec_moments(p0, StripGeometry(q)).mean_n for q in (6.0, 14.0))
    slope = math.log(hi / lo) / math.log(14.0 / 6.0)
    ratio = m12.var_x / m12.mean_n
    err_v = abs(ratio / chi - 1.0)
    chi_ok = abs(chi - frozen.CHI_DRIFTLESS) < 1e-9
    checks = (err_x <= 0.10, abs(slope - 2.0) <= 0.15, err_v <= 0.15)
    ok = chi_ok and all(checks)
    report(5, ok, f"<x_T>(12) = {m12.mean_x:.4f} vs {limit:.4f} ({100 * err_x:.1f}%); "
                  f"<n_T> log-log slope [6,14] = {slope:.3f} (2 +- 0.15); "
                  f"Var x/<n> = {ratio:.4f} vs chi {chi:.4f} ({100 * err_v:.1f}%)")
    assert ok


def test_small_q_slope(report):
    p0 = ModelParams(mu=0.0)
    eps = 0.05
    at_v0 = exec_moments(p0, StripGeometry(2.0)).mean_x
    fd = (exec_moments(p0, StripGeometry(2.0 + eps)).mean_x - at_v0) / eps
    pred = asymptotic_exec_stats(p0, StripGeometry(2.0 + eps)).slope_mean_x
    coeffs = small_q_coeffs(p0)
    coeff_ok = (abs(coeffs.delta_up - frozen.DELTA_UP_0) < 1e-8
                and abs(coeffs.delta_dn - frozen.DELTA_DN_0) < 1e-8)
    err = abs(fd / pred - 1.0)
    ok = coeff_ok and err <= 0.05
    report(6, ok, f"secant slope {fd:.5f} vs predicted {pred:.5f} ({100 * err:.1f}%); "
                  f"rates up {coeffs.delta_up:.4f}, down {coeffs.delta_dn:.4f}")
    assert ok


def test_free_dynamics(report):
    t0 = time.perf_counter()
    times = tuple(float(f"{t:.12g}") for t in np.logspace(1.0, 4.0, 13))
    sim = SimConfig(n_paths=1000, seed=0, sample_times=times)
    drift0 = simulate_free(ModelParams(mu=0.0), sim)
    snaps = snapshot_stats(drift0)
    z = [sx.mean / sx.se_mean if sx.se_mean > 0 else 0.0 for sx, _ in snaps]
    worst = int(np.argmax(np.abs(z)))
    mean_ok = all(abs(v) <= 2.0 for v in z)
    n_end = snaps[-1][1].mean
    n_pred = times[-1] / math.log(times[-1]) * math.pi / 6.0
    n_err = abs(n_end / n_pred - 1.0)
    drift1 = simulate_free(ModelParams(mu=1.0), sim)
    rate, rate_se = variogram_slope(drift1, 1000.0, 1e4)
    sigma2 = free_time_asymptotics(ModelParams(mu=1.0), (1e4,)).sigma2
    vario_ok = abs(rate - sigma2) <= 3.0 * rate_se
    elapsed = time.perf_counter() - t0
    ok = mean_ok and n_err <= 0.25 and vario_ok and elapsed < 300.0
    report(7, ok, f"mu=0: max |<x_t>|/se = {abs(z[worst]):.2f} at t={times[worst]:.4g}; "
                  f"<n> at 1e4 = {n_end:.1f} vs {n_pred:.1f} ({100 * n_err:.0f}%); "
                  f"mu=1: variogram {rate:.4f} +- {rate_se:.4f} vs {sigma2:.4f}; "
                  f"{elapsed:.0f} s")
    assert ok


def test_granularity_robustness(report):
    p0 = ModelParams(mu=0.0)
    base = SimConfig(n_paths=5000, seed=11)
    worst = {"mean_x": (0.0, 0.0), "var_x": (0.0, 0.0)}
    bad = 0
    for q in Q_GRID:
        geom = StripGeometry(q)
        cont = summarize(simulate_execution(p0, geom, base))
        lat = summarize(simulate_execution(p0, geom, SimConfig(n_paths=5000, seed=11,
                                                               dv=0.3)))
        for k, a, b in (("mean_x", cont.mean_x, lat.mean_x), ("var_x", cont.var_x, lat.var_x)):
            se = math.hypot(cont.se[k], lat.se[k])
            zz = abs(a - b) / se if se > 0 else (0.0 if a == b else math.inf)
            if zz >= 2.0:
                bad += 1
            if zz > worst[k][0]:
                worst[k] = (zz, q)
    # stochastic resets, continuous and lattice
    finite = True
    for dv in (0.0, 0.3):
        cfg = SimConfig(n_paths=1000, seed=12, dv=dv,
                        reset_distribution=ResetDistribution.stochastic())
        for q in (3.0, 4.5, 6.0):
            m = summarize(simulate_execution(p0, StripGeometry(q), cfg))
            finite &= all(math.isfinite(v) for v in (m.mean_x, m.var_x, m.mean_n))
    ok = bad == 0 and finite
    report(8, ok, f"dv=0.3 vs dv=0: {bad} of {2 * len(Q_GRID)} comparisons at >= 2 sigma "
                  f"(worst mean_x {worst['mean_x'][0]:.1f} sigma at q={worst['mean_x'][1]}, "
                  f"var_x {worst['var_x'][0]:.1f} sigma at q={worst['var_x'][1]}); "
                  f"random resets finite: {finite}")
    assert ok


def test_execution_time_identity(report):
    worst_psi, worst_fd = 0.0, 0.0
    for mu in MUS:
        params = ModelParams(mu=mu)
        for q in Q_GRID:
            geom = StripGeometry(q)
            worst_psi = max(worst_psi, abs(exec_time_gf(build_kernel(params, geom, 0.0)) - 1.0))
            mean = exec_time_moments(params, geom).mean_T
            if mean == 0.0:
                continue
            fd = derivative_at_zero_plus(
                lambda w: exec_time_gf(build_kernel(params, geom, w)), 1, step=1e-3 / mean)
            worst_fd = max(worst_fd, abs(-fd.value / mean - 1.0))
    ok = worst_psi <= 1e-9 and worst_fd <= 1e-4
    report(9, ok, f"max |Psi(0)-1| = {worst_psi:.1e}; max rel |<T> + Psi'(0)|/<T> = "
                  f"{worst_fd:.1e}")
    assert ok


def test_cli_determinism(report, tmp_path):
    out = str(tmp_path / "det")
    args = ["exec", "--mu", "0,1", "--Q-grid", "2:5:0.5", "--paths", "400", "--seed", "5",
            "--out", out]
    blobs = []
    for extra in ([], [], ["--workers", "3"]):
        assert cli.main(args + extra) == 0
        blobs.append((tmp_path / "det.csv").read_bytes())
    same_rerun = blobs[0] == blobs[1]
    same_workers = blobs[0] == blobs[2]
    ok = same_rerun and same_workers
    report(10, ok, f"rerun identical: {same_rerun}; 1 vs 3 workers identical: {same_workers}")
    assert ok


if __name__ == "__main__":
    import inspect
    import sys
    import tempfile
    from pathlib import Path

    sys.path.insert(0, str(Path(__file__).parent))
    from conftest import format_line

    def _print(number, ok, detail):
        print(format_line(number, ok, detail), flush=True)
        return ok

    tests = [f for name, f in sorted(globals().items()) if name.startswith("test_")]
    tests.sort(key=lambda f: f.__code__.co_firstlineno)
    failed = 0
    for fn in tests:
        kwargs = {"report": _print}
        if "tmp_path" in inspect.signature(fn).parameters:
            kwargs["tmp_path"] = Path(tempfile.mkdtemp())
        try:
            fn(**kwargs)
        except AssertionError:
            failed += 1
    sys.exit(1 if failed else 0)
