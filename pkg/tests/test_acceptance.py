"""End-to-end acceptance runs on the shipped configurations.

Each test records one PASS/FAIL line, printed again in the terminal summary.
The two uniform sweeps take several minutes each.
"""
import dataclasses
import math
import time
from pathlib import Path

import numpy as np

from splitlab import bounds as bnd
from splitlab.classical import (PhasePoint, evolve_ensemble, initial_ensemble, lie_trotter_step,
                                moment_recursion_rhs, second_moment, strang_step)
from splitlab.harness.config import load
from splitlab.harness.experiments import coherent_husimi_distance, run_experiment
from splitlab.ot import DiscreteMeasure, brute_force_oracle, dist1_truncated, wasserstein2
from splitlab.phasespace import husimi_direct, husimi_via_smoothing, wigner_grid, wigner_transform
from splitlab.potentials import harmonic, lambda_constant, pendulum, zero
from splitlab.quantum import SpatialGrid, SplitPropagator, WaveFunction, l2_norm, sample_toeplitz

CONFIGS = Path(__file__).resolve().parents[1] / "configs"


def _run(name):
    cfg = load(CONFIGS / name)
    t0 = time.perf_counter()
    res = run_experiment(cfg)
    return cfg, res, time.perf_counter() - t0


def _violations(res):
    return [r for r in res.records if r.bound_satisfied is False]


def test_classical_lie_trotter_rate(criterion):
    cfg, res, secs = _run("classical_harmonic_lie_trotter.toml")
    slope = res.fits[0].slope
    bad = _violations(res)
    checked = sum(r.bound_value is not None for r in res.records)
    ok = 0.85 <= slope <= 1.15 and not bad and checked == len(cfg.dt_list) and secs <= 300
    criterion(1, "classical Lie-Trotter rate, harmonic", ok,
              f"slope {slope:.4f}, {checked} bound checks, {len(bad)} violations, {secs:.0f}s")
    assert ok


def test_classical_strang_rate(criterion):
    cfg, res, secs = _run("classical_pendulum_strang.toml")
    slope = res.fits[0].slope
    bad = _violations(res)
    checked = sum(r.bound_value is not None for r in res.records)
    ok = 1.8 <= slope <= 2.2 and not bad and checked == len(cfg.dt_list) and secs <= 300
    criterion(2, "classical Strang rate, pendulum", ok,
              f"slope {slope:.4f}, {checked} bound checks, {len(bad)} violations, {secs:.0f}s")
    assert ok


def test_quantum_fixed_hbar_orders(criterion):
    t0 = time.perf_counter()
    _, lt, _ = _run("quantum_pendulum_lie_trotter.toml")
    _, st, _ = _run("quantum_pendulum_strang.toml")
    secs = time.perf_counter() - t0
    s1, s2 = lt.fits[0].slope, st.fits[0].slope
    # the measured error must not grow as dt shrinks (5% slack at the finest dt)
    monotone = all(
        all(b.value <= a.value * (1.05 if k == len(res.records) - 2 else 1.0)
            for k, (a, b) in enumerate(zip(res.records, res.records[1:])))
        for res in (lt, st))
    richardson = max(v["richardson_error"] for res in (lt, st)
                     for v in res.diagnostics["reference"].values())
    ok = (0.9 <= s1 <= 1.1 and 1.9 <= s2 <= 2.1 and monotone and not _violations(lt)
          and richardson <= 1e-8 and secs <= 600)
    criterion(3, "quantum orders at hbar 0.5", ok,
              f"Lie-Trotter {s1:.4f}, Strang {s2:.4f}, reference error {richardson:.1e}, {secs:.0f}s")
    assert ok


def test_toeplitz_husimi_consistency(criterion):
    t0 = time.perf_counter()
    rows = [coherent_husimi_distance(h) for h in (1.0, 0.1, 0.01)]
    secs = time.perf_counter() - t0
    ok = all(r["w2"] <= r["bound"] for r in rows) and secs <= 120
    detail = ", ".join(f"hbar {r['hbar']:g}: {r['w2']:.4f} <= {r['bound']:.4f}" for r in rows)
    criterion(4, "point mass vs coherent-state Husimi", ok, f"{detail}, {secs:.1f}s")
    assert ok


def _uniform(number, config, title, bound_check):
    def test(criterion):
        cfg, res, secs = _run(config)
        cells = [r for r in res.records if r.metric == "dist1_husimi"]
        bad = _violations(res)
        extra_ok, extra = bound_check(res)
        ok = (len(cells) == len(cfg.dt_list) * len(cfg.hbar_list) and not bad and extra_ok
              and secs <= 3600)
        criterion(number, title, ok, f"{len(cells)} cells, {len(bad)} violations, {extra}, {secs:.0f}s")
        assert ok
    return test


def _decreasing(res):
    ok = res.summary["max_dist1_decreasing"]
    return ok, f"max-over-hbar dist1 decreasing: {ok}"


def _calibrated(res):
    ok = res.bounds.m_prime_source == "calibrated" and res.bounds.d_uniform is not None
    return ok, f"M' {res.bounds.m_prime:.4g} ({res.bounds.m_prime_source})"


test_uniform_bound_lie_trotter = _uniform(5, "uniform_pendulum_lie_trotter.toml",
                                          "uniform-in-hbar bound, Lie-Trotter", _decreasing)
test_uniform_bound_strang = _uniform(6, "uniform_pendulum_strang.toml",
                                     "uniform-in-hbar bound, Strang", _calibrated)


def _jacobian(step, z, dt, V, h=1e-6):
    d = z.shape[0] // 2
    J = np.empty((2 * d, 2 * d))
    for k in range(2 * d):
        e = np.zeros(2 * d)
        e[k] = h
        fp = step(PhasePoint((z + e)[:d], (z + e)[d:]), dt, V)
        fm = step(PhasePoint((z - e)[:d], (z - e)[d:]), dt, V)
        J[:, k] = (np.concatenate(fp) - np.concatenate(fm)) / (2 * h)
    return J


def _random_measure(rng, n):
    w = rng.random(n) + 0.05
    return DiscreteMeasure(rng.normal(size=(n, 2)), w / w.sum())


def test_invariant_suites(criterion, rng):
    t0 = time.perf_counter()
    checks = {}
    V = pendulum()
    checks["symplectic"] = max(abs(np.linalg.det(_jacobian(step, rng.uniform(-3, 3, 2), 0.1, V)) - 1)
                               for step in (lie_trotter_step, strang_step) for _ in range(100)) <= 1e-8

    g = SpatialGrid(1, 256, 2 * math.pi)
    h = 0.1
    ens = sample_toeplitz({"kind": "gaussian", "mean_q": 1.0, "mean_p": 0.0, "std_q": 0.25,
                           "std_p": 0.25}, 4, g, h, seed=0)
    prop = SplitPropagator(g, h, V)
    out = {s: prop.run(ens.amplitudes, s, 1e-3, 1000) for s in ("lie_trotter", "strang")}
    checks["unitarity"] = max(np.abs(l2_norm(a, g) - 1).max() for a in out.values()) <= 1e-11

    pg = wigner_grid(g, h)
    wig_ok = hus_ok = cross_ok = True
    for a in out["strang"]:
        psi = WaveFunction(g, a, h)
        w = wigner_transform(psi)          # raises if the imaginary residue is not negligible
        wig_ok &= abs(w.mass() - 1) <= 1e-10
        direct = husimi_direct(psi, pg)
        smooth = husimi_via_smoothing(w)
        hus_ok &= direct.values.min() >= 0 and abs(direct.mass() - 1) <= 1e-8
        cross_ok &= np.abs(direct.values - smooth.values).sum() * pg.cell_volume <= 1e-5
    checks["wigner real, unit mass"] = wig_ok
    checks["husimi nonnegative, unit mass"] = hus_ok
    checks["husimi cross-validation"] = cross_ok

    oracle = axioms = True
    for k in range(50):
        n, m = int(rng.integers(1, 5)), int(rng.integers(1, 5))
        a, b = _random_measure(rng, n), _random_measure(rng, m)
        for kind, solve in (("w2", wasserstein2), ("dist1", dist1_truncated)):
            oracle &= abs(solve(a, b).distance - brute_force_oracle(a, b, kind)) <= 1e-9
        c = _random_measure(rng, int(rng.integers(1, 8)))
        ab = wasserstein2(a, b).distance
        axioms &= (abs(ab - wasserstein2(b, a).distance) <= 1e-12 and wasserstein2(a, a).distance <= 1e-7
                   and ab <= wasserstein2(a, c).distance + wasserstein2(c, b).distance + 1e-12)
    checks["OT oracle equivalence"] = oracle
    checks["OT metric axioms"] = axioms
    checks["dist1 <= W2"] = all(
        dist1_truncated(a, b).distance <= wasserstein2(a, b).distance + 1e-12
        for a, b in ((_random_measure(rng, 15), _random_measure(rng, 12)) for _ in range(50)))

    # second-moment recursion at every step of the default classical run
    ens0 = initial_ensemble({"kind": "gaussian", "mean_q": 1.0, "mean_p": 0.0, "std_q": 0.25,
                             "std_p": 0.25}, 4096, 0)
    moment_ok = True
    for W in (harmonic(), pendulum()):
        for dt in (0.2, 0.1, 0.05, 0.025, 0.0125):
            cur = ens0
            for _ in range(int(math.floor(1.0 / dt + 1e-9))):
                nxt = evolve_ensemble(cur, "lie_trotter", dt, 1, W)
                moment_ok &= second_moment(nxt) <= moment_recursion_rhs(
                    second_moment(cur), dt, lambda_constant(W), W.grad_at_origin_norm) * (1 + 1e-12)
                cur = nxt
    checks["moment recursion"] = moment_ok

    secs = time.perf_counter() - t0
    failed = [k for k, v in checks.items() if not v]
    ok = not failed and secs <= 180
    criterion(7, "invariant suites", ok,
              f"{len(checks) - len(failed)}/{len(checks)} passed{', failed: ' + ', '.join(failed) if failed else ''}, {secs:.0f}s")
    assert ok


# 50-digit reference values from scripts/freeze_constants.py
FROZEN = [
    (zero(), 1.0, 0.1, 1.0, 0.0, 0.0, 1, None,
     {"c_T": 52.043019765718283986, "d_T": 11.582008943367512392, "c_uniform": 52.043019765718283986}),
    (pendulum(), 1.0, 0.2, 1.125, 0.07421875, 0.19947114020071635, 1, 0.5,
     {"c_T": 69.293153107990620102, "d_T": 11.984435055747047642,
      "c_uniform": 69.293153107990620102, "d_uniform": 11.984435055747047642}),
    (pendulum(2.0), 0.5, 0.05, 2.0, 1.0, 0.5, 1, 3.7,
     {"c_T": 200.6855717370818888, "d_T": 88.82909660249419711,
      "c_uniform": 200.6855717370818888, "d_uniform": 88.82909660249419711}),
    (pendulum(0.5, d=2), 2.0, 0.5, 0.3, 3.0, 1.0, 2, 1000.0,
     {"c_T": 9493.859709385748754, "d_T": 465.40587279475301648,
      "c_uniform": 9493.859709385748754, "d_uniform": 1000.0}),
    (pendulum(3.0), 0.1, 0.01, 0.0, 0.0, 0.3, 1, 2.0,
     {"c_T": 5.6731546817101777033, "d_T": 102.15779105319055959,
      "c_uniform": 33.941125496954281171, "d_uniform": 102.15779105319055959}),
    (dataclasses.replace(pendulum(), name="tilted", sup_grad=1.2, sup_hess=1.5, sup_third=0.9,
                         lip_grad=1.5, grad_at_origin_norm=0.7), 1.0, 0.1, 4.0, 2.5, 0.8, 1, 1.25,
     {"c_T": 1154.37638309126092, "d_T": 126.41426263056019465,
      "c_uniform": 1154.37638309126092, "d_uniform": 126.41426263056019465}),
]


def test_constant_regression(criterion):
    t0 = time.perf_counter()
    worst = 0.0
    for V, T, dt, mu0, nu0, abs_p, d, m_prime, ref in FROZEN:
        ct = bnd.c_T(V, T, dt, mu0)
        dT = bnd.d_T(V, T, nu0)
        got = {"c_T": ct, "d_T": dT, "c_uniform": bnd.uniform_constant_simple(V, T, abs_p, d, ct)}
        if m_prime is not None:
            got["d_uniform"] = bnd.uniform_constant_strang(V, T, d, dT, m_prime)
        assert set(got) == set(ref)
        worst = max(worst, max(abs(got[k] / ref[k] - 1) for k in ref))
    secs = time.perf_counter() - t0
    ok = worst <= 1e-12 and secs <= 1.0
    criterion(8, "constant regression", ok,
              f"{len(FROZEN)} parameter sets, worst relative error {worst:.1e}, {secs * 1e3:.1f}ms")
    assert ok
