import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from splitlab.potentials import harmonic, pendulum, zero
from splitlab.quantum import (BoundaryClipping, SpatialGrid, SpectralUnderresolution,
                              SplitPropagator, WaveFunction, choose_grid, coherent_state,
                              expected_momentum, expected_position, kinetic_propagate,
                              l2_norm, lie_trotter_step_q, phase_moments, reference_solution,
                              sample_toeplitz, strang_step_q)

GAUSS = {"kind": "gaussian", "mean_q": 1.0, "mean_p": 0.0, "std_q": 0.25, "std_p": 0.25}


def _overlap(a, b, grid):
    return np.vdot(a, b) * grid.cell


def test_grid_rejects_non_power_of_two():
    with pytest.raises(ValueError):
        SpatialGrid(1, 100, 1.0)
    with pytest.raises(ValueError):
        SpatialGrid(1, 8, 1.0)


def test_coherent_state_is_normalised_and_centred():
    g = SpatialGrid(1, 256, 2 * math.pi)
    psi = coherent_state(g, 0.1, 1.0, 0.5)
    assert psi.norm() == pytest.approx(1.0, abs=1e-13)
    mx, sx, mp, sp = phase_moments(psi.amplitudes, g, 0.1)
    assert mx[0] == pytest.approx(1.0, abs=1e-12) and mp[0] == pytest.approx(0.5, abs=1e-12)
    # position and momentum spreads are sqrt(hbar/2) each
    assert sx[0] == pytest.approx(math.sqrt(0.05), rel=1e-10)
    assert sp[0] == pytest.approx(math.sqrt(0.05), rel=1e-10)


def test_coherent_state_overlap_formula():
    # |<q,p|q',p'>|^2 = exp(-(|dq|^2 + |dp|^2) / (2 hbar))
    g = SpatialGrid(1, 512, 2 * math.pi)
    h = 0.2
    a = coherent_state(g, h, 0.3, -0.4).amplitudes
    b = coherent_state(g, h, 0.8, 0.1).amplitudes
    expect = math.exp(-(0.5 ** 2 + 0.5 ** 2) / (2 * h))
    assert abs(_overlap(a, b, g)) ** 2 == pytest.approx(expect, rel=1e-12)


def test_boundary_clipping():
    g = SpatialGrid(1, 128, math.pi)
    with pytest.raises(BoundaryClipping):
        coherent_state(g, 0.1, 3.0, 0.0)


def test_wave_function_must_be_normalised():
    g = SpatialGrid(1, 64, 1.0)
    with pytest.raises(ValueError):
        WaveFunction(g, np.ones(64, complex), 1.0)


@pytest.mark.parametrize("scheme", ["lie_trotter", "strang"])
def test_unitarity_over_a_thousand_steps(scheme):
    g = SpatialGrid(1, 256, 2 * math.pi)
    psi = coherent_state(g, 0.1, 0.5, 1.0).amplitudes
    out = SplitPropagator(g, 0.1, pendulum()).run(psi[None], scheme, 1e-3, 1000)
    assert abs(l2_norm(out[0], g) - 1.0) <= 1e-11


def test_single_state_steps_match_batched_propagator():
    g = SpatialGrid(1, 128, 2 * math.pi)
    V = pendulum()
    psi = coherent_state(g, 0.3, 0.5, 0.2)
    prop = SplitPropagator(g, 0.3, V)
    for step, scheme in ((lie_trotter_step_q, "lie_trotter"), (strang_step_q, "strang")):
        a = psi
        for _ in range(7):
            a = step(a, 0.05, V)
        b = prop.run(psi.amplitudes, scheme, 0.05, 7)
        assert np.abs(a.amplitudes - b).max() < 1e-13


def test_free_evolution_is_exact_for_both_schemes():
    g = SpatialGrid(1, 256, 2 * math.pi)
    psi = coherent_state(g, 0.2, 0.0, 1.0)
    exact = kinetic_propagate(psi, 1.0).amplitudes
    prop = SplitPropagator(g, 0.2, zero())
    for scheme in ("lie_trotter", "strang"):
        for n in (1, 10, 37):
            out = prop.run(psi.amplitudes, scheme, 1.0 / n, n)
            assert l2_norm(out - exact, g) <= 1e-12


def test_free_packet_moves_with_its_momentum():
    g = SpatialGrid(1, 512, 4 * math.pi)
    psi = coherent_state(g, 0.1, -1.0, 1.5)
    out = kinetic_propagate(psi, 2.0).amplitudes
    assert expected_position(out, g)[0] == pytest.approx(2.0, abs=1e-10)
    assert expected_momentum(out, g, 0.1)[0] == pytest.approx(1.5, abs=1e-10)


def test_harmonic_packet_returns_after_one_period():
    g = SpatialGrid(1, 256, 2 * math.pi)
    psi = coherent_state(g, 0.1, 1.0, 0.5)
    out = SplitPropagator(g, 0.1, harmonic()).run(psi.amplitudes, "strang", 2 * math.pi / 4000, 4000)
    # one full period returns the state up to the global phase exp(-i pi) = -1
    assert _overlap(psi.amplitudes, out, g).real == pytest.approx(-1.0, abs=1e-6)


def test_ehrenfest_for_harmonic_potential():
    g = SpatialGrid(1, 256, 2 * math.pi)
    psi = coherent_state(g, 0.1, 1.0, 0.0)
    out = SplitPropagator(g, 0.1, harmonic()).run(psi.amplitudes, "strang", 1e-3, 1000)
    assert expected_position(out, g)[0] == pytest.approx(math.cos(1.0), abs=1e-6)
    assert expected_momentum(out, g, 0.1)[0] == pytest.approx(-math.sin(1.0), abs=1e-6)


@pytest.mark.parametrize("scheme,order", [("lie_trotter", 1), ("strang", 2)])
def test_quantum_error_order(scheme, order):
    g = SpatialGrid(1, 256, 4 * math.pi)
    V = pendulum()
    psi = coherent_state(g, 0.5, 1.0, 0.0).amplitudes
    prop = SplitPropagator(g, 0.5, V)
    ref = prop.run(psi, "strang", 1 / 2048, 2048)
    errs = [l2_norm(prop.run(psi, scheme, 1 / n, n) - ref, g) for n in (16, 32, 64)]
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(np.abs(rates - order) < 0.1)


def test_spectral_guard_trips_on_underresolved_state():
    g = SpatialGrid(1, 32, math.pi)
    x = g.axis
    amps = np.exp(1j * 14 * x / 1.0) * np.exp(-x ** 2)
    amps = amps / l2_norm(amps, g)
    with pytest.raises(SpectralUnderresolution):
        SplitPropagator(g, 1.0, zero()).run(amps, "strang", 0.1, 1)


def test_choose_grid_rules():
    V = pendulum()
    g = choose_grid(1e-3, 2.0, 2.0, V)
    assert g.L == pytest.approx(math.pi)
    assert g.dx <= math.sqrt(1e-3) / 4
    assert g.dx <= 0.75 * math.pi * 1e-3 / (2.0 + 8 * math.sqrt(1e-3))
    assert g.n_points == 8192
    # a smaller grid would already violate the rule
    assert 2 * g.L / (g.n_points // 2) > min(math.sqrt(1e-3) / 4,
                                              0.75 * math.pi * 1e-3 / (2.0 + 8 * math.sqrt(1e-3)))
    assert choose_grid(1.0, 1.5, 1.0, V).L == pytest.approx(4 * math.pi)
    with pytest.raises(SpectralUnderresolution):
        choose_grid(1e-5, 2.0, 2.0, V)


def test_toeplitz_sampling_is_deterministic():
    g = SpatialGrid(1, 256, 2 * math.pi)
    a = sample_toeplitz(GAUSS, 16, g, 0.1, seed=4)
    b = sample_toeplitz(GAUSS, 16, g, 0.1, seed=4)
    assert np.array_equal(a.amplitudes, b.amplitudes)
    assert np.allclose(l2_norm(a.amplitudes, g), 1.0, atol=1e-13)
    assert np.allclose(expected_position(a.amplitudes, g)[:, 0], a.sample_points[:, 0], atol=1e-12)


def test_reference_solution_richardson_estimate_is_honest():
    g = SpatialGrid(1, 256, 4 * math.pi)
    ens = sample_toeplitz(GAUSS, 4, g, 0.5, seed=0)
    ref = reference_solution(ens, 1.0, 1 / 256, pendulum())
    exact = SplitPropagator(g, 0.5, pendulum()).run(ens.amplitudes, "strang", 1 / 4096, 4096)
    true_err = float(np.max(l2_norm(ref.amplitudes - exact, g)))
    assert ref.n_steps == 256
    assert true_err == pytest.approx(ref.richardson_error, rel=0.05)


@given(st.floats(-1.5, 1.5), st.floats(-2, 2), st.floats(0.05, 1.0))
def test_kinetic_step_is_unitary(q, p, h):
    g = SpatialGrid(1, 256, 4 * math.pi)
    psi = coherent_state(g, h, q, p)
    assert kinetic_propagate(psi, 0.37).norm() == pytest.approx(1.0, abs=1e-12)
