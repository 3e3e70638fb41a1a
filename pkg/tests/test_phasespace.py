import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitlab.phasespace import (Axis, ExcessiveTruncation, NegativeAfterSmoothing, PhaseDensity,
                                 PhaseGrid, coarsen, density_to_measure, export_binary, export_csv,
                                 husimi_direct, husimi_of_ensemble, husimi_members,
                                 husimi_via_smoothing, threshold_for_discard, wigner_grid,
                                 wigner_transform)
from splitlab.potentials import pendulum
from splitlab.quantum import (SpatialGrid, SplitPropagator, WaveFunction, coherent_state,
                              first_excited_state, l2_norm, sample_toeplitz)

GAUSS = {"kind": "gaussian", "mean_q": 1.0, "mean_p": 0.0, "std_q": 0.25, "std_p": 0.25}


def _gaussian_on(pg, q, p, var):
    z = pg.nodes()
    d = pg.d
    r2 = np.sum((z[..., :d] - q) ** 2, -1) + np.sum((z[..., d:] - p) ** 2, -1)
    return np.exp(-r2 / (2 * var)) / (2 * math.pi * var) ** d


def test_axis_needs_eight_nodes():
    with pytest.raises(ValueError):
        Axis(0.0, 0.1, 7)
    assert Axis(-1.0, 0.25, 9).nodes[-1] == 1.0


def test_native_wigner_grid_layout():
    g = SpatialGrid(1, 128, 2 * math.pi)
    pg = wigner_grid(g, 0.1)
    assert pg.shape == (128, 256)
    assert pg.xi_axes[0].step == pytest.approx(math.pi * 0.1 / (4 * math.pi))
    assert pg.cell_volume == pytest.approx(g.dx * pg.xi_axes[0].step)


@pytest.mark.parametrize("d", [1, 2])
def test_wigner_of_coherent_state_matches_closed_form(d):
    # the 2-d case uses a coarser position sub-grid to keep the array small
    g = SpatialGrid(d, 128, 2 * math.pi) if d == 1 else SpatialGrid(2, 64, math.pi)
    h = 0.1
    q, p = np.full(d, 0.3), np.full(d, -0.5)
    w = wigner_transform(coherent_state(g, h, q, p), wigner_grid(g, h, x_stride=1 if d == 1 else 4))
    exact = _gaussian_on(w.grid, q, p, h / 2)
    assert np.abs(w.values - exact).max() <= 1e-6 * exact.max()
    assert w.signed


def test_wigner_is_real_and_has_unit_mass_and_marginals():
    g = SpatialGrid(1, 256, 2 * math.pi)
    ens = sample_toeplitz(GAUSS, 4, g, 0.1, seed=1)
    psi = ens.members[2]
    w = wigner_transform(psi)
    assert w.mass() == pytest.approx(1.0, abs=1e-10)
    # integrating out momentum recovers |psi|^2
    marg = w.values.sum(1) * w.grid.xi_axes[0].step
    assert np.abs(marg - np.abs(psi.amplitudes) ** 2).max() < 1e-10


def test_wigner_of_first_excited_state_is_negative_at_origin():
    h = 0.2
    g = SpatialGrid(1, 256, 2 * math.pi)
    w = wigner_transform(first_excited_state(g, h))
    i = g.n_points // 2
    j = w.grid.xi_axes[0].count // 2
    assert w.grid.x_axes[0].nodes[i] == pytest.approx(0.0, abs=1e-14)
    assert w.grid.xi_axes[0].nodes[j] == pytest.approx(0.0, abs=1e-14)
    assert w.values[i, j] == pytest.approx(-1 / (math.pi * h), rel=1e-9)
    with pytest.raises(ValueError):
        density_to_measure(w)


def test_wigner_rejects_foreign_momentum_axis():
    g = SpatialGrid(1, 64, math.pi)
    pg = PhaseGrid((Axis(-math.pi, g.dx, 64),), (Axis(-1.0, 0.1, 21),))
    with pytest.raises(ValueError):
        wigner_transform(coherent_state(g, 0.3, 0.0, 0.0), pg)


@pytest.mark.parametrize("d", [1, 2])
def test_husimi_of_coherent_state_matches_closed_form(d):
    g = SpatialGrid(d, 128, 2 * math.pi) if d == 1 else SpatialGrid(2, 64, math.pi)
    h = 0.1
    q, p = np.full(d, -0.3), np.full(d, 0.5)
    pg = wigner_grid(g, h, x_stride=1 if d == 1 else 4)
    hus = husimi_direct(coherent_state(g, h, q, p), pg)
    exact = _gaussian_on(pg, q, p, h)
    assert np.abs(hus.values - exact).max() <= 1e-9 * exact.max()
    assert not hus.signed


def test_husimi_routes_agree_on_evolved_states():
    h = 0.1
    g = SpatialGrid(1, 256, 2 * math.pi)
    ens = sample_toeplitz(GAUSS, 6, g, h, seed=2)
    amps = SplitPropagator(g, h, pendulum()).run(ens.amplitudes, "strang", 0.01, 100)
    pg = wigner_grid(g, h)
    for a in amps:
        psi = WaveFunction(g, a, h)
        smooth = husimi_via_smoothing(wigner_transform(psi))
        direct = husimi_direct(psi, pg)
        l1 = np.abs(smooth.values - direct.values).sum() * pg.cell_volume
        assert l1 <= 1e-5
        assert smooth.mass() == pytest.approx(1.0, abs=1e-8)


def test_husimi_is_nonnegative_and_normalised_on_strided_grid():
    h = 0.05
    g = SpatialGrid(1, 512, 2 * math.pi)
    ens = sample_toeplitz(GAUSS, 8, g, h, seed=3)
    pg = PhaseGrid((Axis(-math.pi, 4 * g.dx, 128),), (Axis(-2.0, 0.05, 81),))
    hus = husimi_of_ensemble(ens, pg)
    assert hus.values.min() >= 0.0
    assert hus.mass() == pytest.approx(1.0, abs=1e-6)
    members = husimi_members(ens, pg, chunk=3)
    assert np.allclose(np.tensordot(ens.weights, members, axes=1), hus.values, atol=1e-15)


def test_husimi_direct_requires_node_aligned_positions():
    g = SpatialGrid(1, 64, math.pi)
    pg = PhaseGrid((Axis(-math.pi + 0.3 * g.dx, g.dx, 64),), (Axis(-1.0, 0.1, 21),))
    with pytest.raises(ValueError):
        husimi_direct(coherent_state(g, 0.3, 0.0, 0.0), pg)


def test_smoothing_rejects_strongly_negative_input():
    pg = PhaseGrid((Axis(-1, 0.25, 9),), (Axis(-1, 0.25, 9),))
    vals = np.zeros(pg.shape)
    vals[4, 4] = -50.0
    with pytest.raises(NegativeAfterSmoothing):
        husimi_via_smoothing(PhaseDensity(pg, vals, True, 0.01))


def _toy_density():
    pg = PhaseGrid((Axis(0.0, 1.0, 8),), (Axis(0.0, 1.0, 8),))
    vals = np.zeros(pg.shape)
    vals[1, 1], vals[2, 3], vals[5, 5] = 0.5, 0.4999, 0.0001
    return PhaseDensity(pg, vals, False, 1.0)


def test_density_to_measure_examples():
    pd = _toy_density()
    mu = density_to_measure(pd)
    assert len(mu) == 3 and mu.discarded_mass == 0.0
    assert np.allclose(mu.support, [[1, 1], [2, 3], [5, 5]])
    mu = density_to_measure(pd, threshold=1e-3)
    assert len(mu) == 2
    assert mu.discarded_mass == pytest.approx(1e-4)
    assert mu.weights == pytest.approx([0.5 / 0.9999, 0.4999 / 0.9999])
    with pytest.raises(ExcessiveTruncation):
        density_to_measure(pd, threshold=1.0)


def test_threshold_for_discard_respects_budget():
    pd = _toy_density()
    assert len(density_to_measure(pd, threshold_for_discard(pd, 1e-4))) == 2
    assert len(density_to_measure(pd, threshold_for_discard(pd, 5e-5))) == 3


@given(st.integers(1, 5), st.integers(0, 2 ** 16))
def test_coarsen_preserves_mass(factor, seed):
    rng = np.random.default_rng(seed)
    pg = PhaseGrid((Axis(-1.0, 0.1, 24),), (Axis(-2.0, 0.2, 16),))
    pd = PhaseDensity(pg, rng.random(pg.shape), False, 0.1)
    out = coarsen(pd, factor)
    assert out.mass() == pytest.approx(pd.mass(), rel=1e-12)
    mean = lambda d: np.tensordot(d.values * d.grid.cell_volume, d.grid.nodes(), axes=2)
    if 24 % factor == 0 and 16 % factor == 0:
        # mass moves to block centres, at most half a block away
        shift = np.abs(mean(out) - mean(pd))
        assert np.all(shift <= 0.5 * (factor - 1) * np.array([0.1, 0.2]) + 1e-12)


def test_exports_round_trip(tmp_path):
    pd = _toy_density()
    export_csv(pd, tmp_path / "h.csv")
    rows = np.loadtxt(tmp_path / "h.csv", delimiter=",", skiprows=1)
    assert (tmp_path / "h.csv").read_text().splitlines()[0] == "x0,xi0,value"
    assert rows.shape == (64, 3) and rows[:, 2].sum() == pytest.approx(1.0)
    export_binary(pd, tmp_path / "h.bin")
    flat = np.fromfile(tmp_path / "h.bin", dtype="<f8").reshape(-1, 3)
    assert np.array_equal(flat, rows)


@given(st.floats(-1.0, 1.0), st.floats(-1.0, 1.0))
def test_wigner_mass_is_one_for_any_centre(q, p):
    g = SpatialGrid(1, 128, 4 * math.pi)
    psi = coherent_state(g, 0.5, q, p)
    assert wigner_transform(psi).mass() == pytest.approx(1.0, abs=1e-10)
    assert l2_norm(psi.amplitudes, g) == pytest.approx(1.0, abs=1e-13)
