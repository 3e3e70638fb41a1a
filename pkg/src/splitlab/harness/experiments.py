"""Convergence experiments: classical clouds, fixed-hbar wave functions and
the uniform (dt, hbar) sweep of Husimi distances."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .. import bounds as bnd
from ..classical import (PhaseEnsemble, PhasePoint, evolve_ensemble, initial_ensemble,
                         sample_initial_measure, strang_step)
from ..ot import (DiscreteMeasure, OTConfig, coupled_particle_upper_bound, dist1_truncated,
                  measure_from_ensemble, wasserstein2)
from ..phasespace import (Axis, PhaseDensity, PhaseGrid, coarsen, density_to_measure,
                          husimi_direct, husimi_members, threshold_for_discard)
from ..potentials import Potential, make_potential
from ..quantum import (SplitPropagator, choose_grid, coherent_state, l2_norm, phase_moments,
                       reference_solution, sample_toeplitz)
from .config import ExperimentConfig
from .fitting import DegenerateFit, fit_power_law, fit_rate
from .report import ErrorRecord


@dataclass
class ExperimentResult:
    records: list
    fits: list
    bounds: bnd.BoundReport
    summary: dict = field(default_factory=dict)
    diagnostics: dict = field(default_factory=dict)

    @property
    def all_bounds_satisfied(self) -> bool:
        return all(r.bound_satisfied is not False for r in self.records)


def _map(fn, args, jobs):
    """Ordered map, in worker processes when ``jobs`` > 1."""
    args = list(args)
    if jobs <= 1 or len(args) <= 1:
        return [fn(*a) for a in args]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(fn, *zip(*args)))


def _ot_config(cfg: ExperimentConfig) -> OTConfig:
    return OTConfig(exact_cap=cfg.ot.exact_cap, tol=cfg.ot.tol)


def _fit_or_note(records, metric, notes):
    try:
        return [fit_rate(records, metric=metric)]
    except DegenerateFit as exc:
        notes.append(str(exc))
        return []


def jackknife_stderr(estimates) -> float:
    """Delete-one-group jackknife standard error from the leave-out estimates."""
    e = np.asarray(estimates, float)
    g = e.size
    return float(math.sqrt((g - 1) / g * np.sum((e - e.mean()) ** 2)))


def _groups(n, g):
    return np.array_split(np.arange(n), g) if g >= 2 else []


# ------------------------------------------------------------------ classical


def _classical_cell(cfg: ExperimentConfig, dt: float):
    V = make_potential(cfg.potential, cfg.d)
    ens0 = initial_ensemble(cfg.initial, cfg.n_particles, cfg.seed, cfg.d)
    n = cfg.n_steps(dt)
    ref = evolve_ensemble(ens0, "reference", dt, n, V, cfg.reference.classical_tol)
    spl = evolve_ensemble(ens0, cfg.scheme, dt, n, V)
    ot = _ot_config(cfg)
    k = min(cfg.ot.classical_support, len(ens0))
    ref_s, spl_s = ref.head(k), spl.head(k)
    w2 = wasserstein2(measure_from_ensemble(spl_s), measure_from_ensemble(ref_s), ot).distance
    leave_out = []
    for grp in _groups(k, cfg.jackknife_groups):
        keep = np.setdiff1d(np.arange(k), grp)
        a = PhaseEnsemble(spl_s.x[keep], spl_s.xi[keep], np.full(keep.size, 1 / keep.size))
        b = PhaseEnsemble(ref_s.x[keep], ref_s.xi[keep], np.full(keep.size, 1 / keep.size))
        leave_out.append(wasserstein2(measure_from_ensemble(a), measure_from_ensemble(b), ot).distance)
    return {
        "dt": dt, "n_steps": n, "w2": w2,
        "stderr": jackknife_stderr(leave_out) if leave_out else None,
        "identity_bound_subsample": coupled_particle_upper_bound(spl_s, ref_s).distance,
        "identity_bound_full": coupled_particle_upper_bound(spl, ref).distance,
    }


def run_classical_convergence(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """W2 between split and exact particle clouds for every dt."""
    V = make_potential(cfg.potential, cfg.d)
    br = bnd.bound_report(V, cfg.T, max(cfg.dt_list), cfg.initial, cfg.d)
    cells = _map(_classical_cell, [(cfg, dt) for dt in cfg.dt_list], jobs)
    records = []
    for c in cells:
        if cfg.scheme == "lie_trotter":
            bound = br.c_T * c["dt"]
        else:
            bound = br.d_T * c["dt"] ** 2 if br.d_T is not None else None
        records.append(ErrorRecord(cfg.scheme, "w2_classical", c["dt"], c["n_steps"], c["w2"],
                                   None, bound, c["stderr"]))
    notes = []
    fits = _fit_or_note(records, "w2_classical", notes)
    diag = {"cells": cells, "notes": notes,
            "identity_bound_dominates": all(c["identity_bound_subsample"] >= c["w2"] - 1e-12
                                            for c in cells)}
    return ExperimentResult(records, fits, br, {}, diag)


# ------------------------------------------------------------------ quantum


def grid_for(cfg: ExperimentConfig, V: Potential, hbar: float, q, p):
    """Spatial grid holding every packet for the whole run.

    Phase points at +-3 sqrt(hbar) around each packet centre are pushed along
    the classical flow; their position/momentum extremes plus the 8 sqrt(hbar)
    Gaussian tail set the box and the resolution.
    """
    s = 3 * math.sqrt(hbar)
    offs = np.array([-s, 0.0, s])
    dq, dp = np.meshgrid(offs, offs, indexing="ij")
    x = (q[:, None, :] + dq.reshape(1, -1, 1)).reshape(-1, cfg.d)
    xi = (p[:, None, :] + dp.reshape(1, -1, 1)).reshape(-1, cfg.d)
    pt = PhasePoint(x, xi)
    n = 400
    step = cfg.T / n
    qmax, pmax = np.abs(x).max(), np.abs(xi).max()
    for _ in range(n):
        pt = strang_step(pt, step, V)
        qmax = max(qmax, float(np.abs(pt.x).max()))
        pmax = max(pmax, float(np.abs(pt.xi).max()))
    return choose_grid(hbar, qmax, pmax, V, cfg.d, cfg.grid.band_fraction, cfg.grid.max_points)


def _quantum_setup(cfg: ExperimentConfig, hbar: float):
    V = make_potential(cfg.potential, cfg.d)
    q, p = sample_initial_measure(cfg.initial, cfg.n_states, cfg.seed, cfg.d)
    grid = grid_for(cfg, V, hbar, q, p)
    ens = sample_toeplitz(cfg.initial, cfg.n_states, grid, hbar, cfg.seed)
    return V, grid, ens


def _references(cfg, ens, V):
    """One reference per distinct final time floor(T/dt) dt."""
    dt_ref = min(cfg.dt_list) / cfg.reference.refine
    refs = {}
    for dt in cfg.dt_list:
        t = round(cfg.n_steps(dt) * dt, 12)
        if t not in refs:
            refs[t] = reference_solution(ens, t, dt_ref, V, cfg.grid.guard_every)
    return refs


def _l2_bound(cfg, V, hbar, dt, t, ens):
    """Lie-Trotter L2 bound at the smallest member momentum: the strictest
    of the per-member bounds, compared against the worst member's error."""
    if cfg.scheme != "lie_trotter":
        return None
    pmin = float(np.min(np.linalg.norm(ens.sample_points[:, cfg.d:], axis=1)))
    try:
        return bnd.coherent_state_l2_bound(dt, hbar, t, V, _along_first_axis(pmin, cfg.d), cfg.d)
    except bnd.UnboundedDerivative:
        return None


def _along_first_axis(r, d):
    v = np.zeros(d)
    v[0] = r
    return v


def _split_runs(cfg, V, ens):
    prop = SplitPropagator(ens.grid, ens.hbar, V, cfg.grid.guard_every)
    out = {dt: prop.run(ens.amplitudes, cfg.scheme, dt, cfg.n_steps(dt)) for dt in cfg.dt_list}
    return out, prop.max_guard_fraction


def run_quantum_fixed_hbar(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Worst-member L2 error of the split wave functions against a fine
    Strang reference, for every dt at one hbar."""
    hbar = cfg.hbar_list[0]
    V, grid, ens = _quantum_setup(cfg, hbar)
    refs = _references(cfg, ens, V)
    runs, guard = _split_runs(cfg, V, ens)
    records = []
    for dt in cfg.dt_list:
        n = cfg.n_steps(dt)
        t = round(n * dt, 12)
        err = float(np.max(l2_norm(runs[dt] - refs[t].amplitudes, grid)))
        records.append(ErrorRecord(cfg.scheme, "l2_quantum", dt, n, err, hbar,
                                   _l2_bound(cfg, V, hbar, dt, t, ens)))
    notes = []
    fits = _fit_or_note(records, "l2_quantum", notes)
    br = bnd.bound_report(V, cfg.T, max(cfg.dt_list), cfg.initial, cfg.d)
    diag = {
        "grid": {"n_points": grid.n_points, "L": grid.L, "dx": grid.dx},
        "reference": {str(t): {"dt_ref": r.dt_ref, "n_steps": r.n_steps,
                               "richardson_error": r.richardson_error} for t, r in refs.items()},
        "max_guard_fraction": guard,
        "notes": notes,
    }
    return ExperimentResult(records, fits, br, {}, diag)


# ------------------------------------------------------------------ uniform sweep


def husimi_window(grid, hbar, amp_sets, d):
    """Phase grid covering every member of every ensemble in ``amp_sets``
    with an 8-sigma margin. Positions are spatial nodes at stride ~sqrt(hbar)/2."""
    lo_x, hi_x, lo_p, hi_p = [], [], [], []
    for amps in amp_sets:
        mx, sx, mp, sp = phase_moments(amps, grid, hbar)
        wx = 8 * np.sqrt(sx ** 2 + 0.5 * hbar)
        wp = 8 * np.sqrt(sp ** 2 + 0.5 * hbar)
        lo_x.append((mx - wx).min(0)), hi_x.append((mx + wx).max(0))
        lo_p.append((mp - wp).min(0)), hi_p.append((mp + wp).max(0))
    lo_x, hi_x = np.min(lo_x, 0), np.max(hi_x, 0)
    lo_p, hi_p = np.min(lo_p, 0), np.max(hi_p, 0)
    h = 0.5 * math.sqrt(hbar)
    stride = max(1, int(round(h / grid.dx)))
    hx = stride * grid.dx
    x_axes, p_axes = [], []
    for k in range(d):
        i0 = math.floor((lo_x[k] + grid.L) / grid.dx)
        count = min(max(8, math.ceil((hi_x[k] - lo_x[k]) / hx) + 2), grid.n_points // stride)
        x_axes.append(Axis(-grid.L + i0 * grid.dx, hx, count))
        pc = max(8, math.ceil((hi_p[k] - lo_p[k]) / h) + 2)
        p_axes.append(Axis(lo_p[k] - 0.5 * h, h, pc))
    return PhaseGrid(tuple(x_axes), tuple(p_axes))


def _binned_pair(pd_a: PhaseDensity, pd_b: PhaseDensity, cap: int, max_discard: float, start: int = 1):
    """Coarsen both densities by the smallest common factor that leaves at
    most ``cap`` support cells after dropping <= ``max_discard`` of the mass."""
    f = start
    while True:
        ca, cb = coarsen(pd_a, f), coarsen(pd_b, f)
        ma = density_to_measure(ca, threshold_for_discard(ca, max_discard))
        mb = density_to_measure(cb, threshold_for_discard(cb, max_discard))
        if max(len(ma), len(mb)) <= cap:
            return ma, mb, f
        f += 1


def _ensemble_density(members, weights, pgrid, hbar):
    return PhaseDensity(pgrid, np.tensordot(weights, members, axes=1), False, hbar)


def _uniform_hbar(cfg: ExperimentConfig, hbar: float):
    V, grid, ens = _quantum_setup(cfg, hbar)
    refs = _references(cfg, ens, V)
    runs, guard = _split_runs(cfg, V, ens)
    ref_sets = {t: r.amplitudes for t, r in refs.items()}
    pgrid = husimi_window(grid, hbar, list(ref_sets.values()) + list(runs.values()), cfg.d)
    ref_h = {t: husimi_members(ens.with_amplitudes(a), pgrid) for t, a in ref_sets.items()}
    ot = _ot_config(cfg)
    w = ens.weights
    groups = _groups(len(ens), cfg.jackknife_groups)
    cells = []
    for dt in cfg.dt_list:
        n = cfg.n_steps(dt)
        t = round(n * dt, 12)
        l2 = float(np.max(l2_norm(runs[dt] - refs[t].amplitudes, grid)))
        spl_h = husimi_members(ens.with_amplitudes(runs[dt]), pgrid)
        mass = float(min(spl_h.sum(axis=tuple(range(1, spl_h.ndim))).min(),
                         ref_h[t].sum(axis=tuple(range(1, spl_h.ndim))).min()) * pgrid.cell_volume)
        da = _ensemble_density(spl_h, w, pgrid, hbar)
        db = _ensemble_density(ref_h[t], w, pgrid, hbar)
        ma, mb, f = _binned_pair(da, db, cfg.ot.exact_cap, cfg.ot.max_discard)
        d1 = dist1_truncated(ma, mb, ot).distance
        w2 = wasserstein2(ma, mb, ot).distance
        jk1, jk2 = [], []
        for grp in groups:
            keep = np.setdiff1d(np.arange(len(ens)), grp)
            wk = w[keep] / w[keep].sum()
            ga = _ensemble_density(spl_h[keep], wk, pgrid, hbar)
            gb = _ensemble_density(ref_h[t][keep], wk, pgrid, hbar)
            xa, xb, _ = _binned_pair(ga, gb, cfg.ot.exact_cap, cfg.ot.max_discard, f)
            jk1.append(dist1_truncated(xa, xb, ot).distance)
            jk2.append(wasserstein2(xa, xb, ot).distance)
        cells.append({
            "dt": dt, "hbar": hbar, "n_steps": n, "l2": l2, "dist1": d1, "w2": w2,
            "dist1_stderr": jackknife_stderr(jk1) if jk1 else None,
            "w2_stderr": jackknife_stderr(jk2) if jk2 else None,
            "bin_factor": f, "support": [len(ma), len(mb)],
            "discarded_mass": max(ma.discarded_mass, mb.discarded_mass),
            "min_member_husimi_mass": mass,
        })
    diag = {
        "hbar": hbar,
        "grid": {"n_points": grid.n_points, "L": grid.L, "dx": grid.dx},
        "phase_grid": {"x_step": pgrid.x_axes[0].step, "p_step": pgrid.xi_axes[0].step,
                       "shape": list(pgrid.shape)},
        "richardson_error": max(r.richardson_error for r in refs.values()),
        "max_guard_fraction": guard,
        "min_member_p_norm": float(np.min(np.linalg.norm(ens.sample_points[:, cfg.d:], axis=1))),
    }
    return cells, diag


def run_uniform_sweep(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    """Husimi dist1 and W2 between split and reference ensembles over the
    whole (dt, hbar) grid, checked against the hbar-independent envelope."""
    V = make_potential(cfg.potential, cfg.d)
    out = _map(_uniform_hbar, [(cfg, h) for h in cfg.hbar_list], jobs)
    cells = [c for cs, _ in out for c in cs]
    per_hbar = [dg for _, dg in out]
    br = bnd.bound_report(V, cfg.T, max(cfg.dt_list), cfg.initial, cfg.d)
    if cfg.scheme == "strang":
        m_prime = bnd.calibrate_m_prime([(c["dt"], c["hbar"], c["l2"]) for c in cells])
        br = br.with_m_prime(m_prime, cfg.T, V, cfg.d)
    records = []
    for c in cells:
        dt, h, n = c["dt"], c["hbar"], c["n_steps"]
        if cfg.scheme == "lie_trotter":
            uni = bnd.uniform_bound_simple(br.c_uniform, dt)
            semi = bnd.semiclassical_bound_simple(dt, h, br.c_T, V, cfg.T, cfg.d)
            pmin = next(dg["min_member_p_norm"] for dg in per_hbar if dg["hbar"] == h)
            l2b = bnd.coherent_state_l2_bound(dt, h, n * dt, V, _along_first_axis(pmin, cfg.d), cfg.d)
        else:
            uni = bnd.uniform_bound_strang(br.d_uniform, dt)
            semi = bnd.semiclassical_bound_strang(dt, h, br.d_T, V, cfg.T, cfg.d)
            l2b = None
        records.append(ErrorRecord(cfg.scheme, "l2_quantum", dt, n, c["l2"], h, l2b))
        records.append(ErrorRecord(cfg.scheme, "w2_husimi", dt, n, c["w2"], h, semi, c["w2_stderr"]))
        records.append(ErrorRecord(cfg.scheme, "dist1_husimi", dt, n, c["dist1"], h, uni,
                                   c["dist1_stderr"]))
    dts = sorted(set(cfg.dt_list), reverse=True)
    worst = [max(c["dist1"] for c in cells if c["dt"] == dt) for dt in dts]
    notes = []
    try:
        fit = fit_power_law(dts, worst, "dist1_husimi_max_over_hbar", min_decades=0.0)
        fits = [fit]
    except DegenerateFit as exc:
        notes.append(str(exc))
        fits = []
    summary = {
        "dt": dts,
        "max_dist1_over_hbar": worst,
        "max_dist1_decreasing": bool(all(b < a for a, b in zip(worst, worst[1:]))),
        "max_stderr_to_bound": max(
            (r.mc_stderr or 0.0) / r.bound_value for r in records
            if r.metric == "dist1_husimi" and r.bound_value),
        "m_prime_source": br.m_prime_source,
    }
    diag = {"cells": cells, "per_hbar": per_hbar, "notes": notes}
    return ExperimentResult(records, fits, br, summary, diag)


def coherent_husimi_distance(hbar: float, q=1.0, p=0.0, d: int = 1, cap: int = 2000,
                             max_discard: float = 1e-4) -> dict:
    """W2 between the point mass at (q, p) and the Husimi density of the
    coherent state built on it. The exact value is sqrt(2 d hbar)."""
    q = np.broadcast_to(np.asarray(q, float), (d,))
    p = np.broadcast_to(np.asarray(p, float), (d,))
    V = make_potential({"kind": "zero"}, d)
    grid = choose_grid(hbar, float(np.abs(q).max()), float(np.abs(p).max()), V, d)
    psi = coherent_state(grid, hbar, q, p)
    pgrid = husimi_window(grid, hbar, [psi.amplitudes[None]], d)
    dens = husimi_direct(psi, pgrid)
    f = 1
    while True:
        pd = coarsen(dens, f)
        mu = density_to_measure(pd, threshold_for_discard(pd, max_discard))
        if len(mu) <= cap:
            break
        f += 1
    spacing = max(a.step for a in pd.grid.x_axes + pd.grid.xi_axes)
    dirac = DiscreteMeasure(np.concatenate([q, p])[None], np.ones(1))
    return {"hbar": hbar, "w2": wasserstein2(dirac, mu).distance, "exact": math.sqrt(2 * d * hbar),
            "grid_spacing": spacing, "bound": math.sqrt(2 * d * hbar) + 10 * spacing,
            "support": len(mu), "discarded_mass": mu.discarded_mass}


RUNNERS = {
    "classical": run_classical_convergence,
    "quantum_fixed_hbar": run_quantum_fixed_hbar,
    "uniform": run_uniform_sweep,
}


def run_experiment(cfg: ExperimentConfig, jobs: int = 1) -> ExperimentResult:
    return RUNNERS[cfg.experiment](cfg, jobs)
