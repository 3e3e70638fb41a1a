"""Split-step spectral propagation of wave functions on a periodic grid.

Mixed states are carried as weighted ensembles of pure states (coherent
states sampled from a phase-space measure); propagation acts on every member
and never forms a density matrix.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import classical
from .potentials import Potential


class BoundaryClipping(ValueError):
    """A coherent state would not decay to 1e-12 before the domain edge."""


class SpectralUnderresolution(RuntimeError):
    """Too much spectral mass near the Nyquist band edge."""


TAIL_SIGMAS = 8.0
GUARD_FRACTION = 1.0 / 8.0
GUARD_LIMIT = 1e-8


@dataclass(frozen=True)
class SpatialGrid:
    """Uniform periodic grid on [-L, L)^d with ``n_points`` nodes per axis."""

    d: int
    n_points: int
    L: float

    def __post_init__(self):
        n = self.n_points
        if n < 16 or n & (n - 1):
            raise ValueError(f"n_points must be a power of two >= 16, got {n}")
        if self.L <= 0 or self.d < 1:
            raise ValueError("need L > 0 and d >= 1")

    @property
    def dx(self) -> float:
        return 2.0 * self.L / self.n_points

    @property
    def shape(self):
        return (self.n_points,) * self.d

    @property
    def axis(self) -> np.ndarray:
        return -self.L + self.dx * np.arange(self.n_points)

    @property
    def cell(self) -> float:
        return self.dx ** self.d

    def positions(self) -> np.ndarray:
        """Node coordinates, shape (n,)*d + (d,)."""
        axes = [self.axis] * self.d
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * np.fft.fftfreq(self.n_points, d=self.dx)

    def k_squared(self) -> np.ndarray:
        k = self.wavenumbers()
        ks = np.meshgrid(*([k] * self.d), indexing="ij")
        return sum(kk * kk for kk in ks)

    def guard_mask(self) -> np.ndarray:
        """Modes whose largest |k_i| lies in the top eighth of the band."""
        k = np.abs(self.wavenumbers())
        kmax = np.pi / self.dx
        ks = np.meshgrid(*([k] * self.d), indexing="ij")
        top = np.max(np.stack(ks), axis=0)
        return top >= (1.0 - GUARD_FRACTION) * kmax


@dataclass(frozen=True)
class WaveFunction:
    grid: SpatialGrid
    amplitudes: np.ndarray = field(repr=False)
    hbar: float

    def __post_init__(self):
        a = np.asarray(self.amplitudes, dtype=complex)
        if a.shape != self.grid.shape:
            raise ValueError(f"amplitudes shape {a.shape} != grid shape {self.grid.shape}")
        if self.hbar <= 0:
            raise ValueError("hbar must be positive")
        nrm = l2_norm(a, self.grid)
        if abs(nrm - 1.0) > 1e-10:
            raise ValueError(f"wave function not normalized: |psi| = {nrm!r}")
        object.__setattr__(self, "amplitudes", a)

    def norm(self) -> float:
        return l2_norm(self.amplitudes, self.grid)

    def _replace(self, amps):
        return WaveFunction(self.grid, amps, self.hbar)


@dataclass(frozen=True)
class StateEnsemble:
    """Equal-or-weighted collection of pure states on one grid.

    ``amplitudes`` has shape (members,) + grid.shape; ``sample_points`` holds
    the phase-space centres (q, p) the members were built from.
    """

    grid: SpatialGrid
    hbar: float
    amplitudes: np.ndarray = field(repr=False)
    weights: np.ndarray
    sample_points: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("ensemble weights must be nonnegative and sum to 1")
        if self.amplitudes.shape != (w.shape[0],) + self.grid.shape:
            raise ValueError("amplitudes must be (members,) + grid.shape")
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def members(self) -> list[WaveFunction]:
        return [WaveFunction(self.grid, a, self.hbar) for a in self.amplitudes]

    def with_amplitudes(self, amps) -> "StateEnsemble":
        return StateEnsemble(self.grid, self.hbar, amps, self.weights, self.sample_points,
                             self.rng_seed)

    def subset(self, idx) -> "StateEnsemble":
        idx = np.asarray(idx)
        w = self.weights[idx]
        return StateEnsemble(self.grid, self.hbar, self.amplitudes[idx], w / w.sum(),
                             self.sample_points[idx], self.rng_seed)


def l2_norm(amps, grid: SpatialGrid, axes=None) -> np.ndarray:
    if axes is None:
        axes = tuple(range(-grid.d, 0))
    return np.sqrt(np.sum(np.abs(amps) ** 2, axis=axes) * grid.cell)


# ----------------------------------------------------------------- states


def coherent_state(grid: SpatialGrid, hbar: float, q, p) -> WaveFunction:
    """Gaussian wave packet of width sqrt(hbar) centred at (q, p)."""
    q = np.broadcast_to(np.asarray(q, float), (grid.d,))
    p = np.broadcast_to(np.asarray(p, float), (grid.d,))
    margin = grid.L - TAIL_SIGMAS * math.sqrt(hbar)
    if np.any(np.abs(q) > margin):
        raise BoundaryClipping(
            f"|q|={np.abs(q).max():.4g} exceeds L - 8 sqrt(hbar) = {margin:.4g}")
    amps = _coherent_amplitudes(grid, hbar, q, p)
    return WaveFunction(grid, amps, hbar)


def _coherent_amplitudes(grid, hbar, q, p):
    x = grid.positions()
    u = x - q
    # the grid is periodic: measure offsets by the minimal image
    u = u - 2 * grid.L * np.round(u / (2 * grid.L))
    r2 = np.sum(u * u, axis=-1)
    phase = np.sum(p * (u + 0.5 * q), axis=-1) / hbar
    amps = (np.pi * hbar) ** (-grid.d / 4) * np.exp(-r2 / (2 * hbar) + 1j * phase)
    return amps / l2_norm(amps, grid)


def first_excited_state(grid: SpatialGrid, hbar: float) -> WaveFunction:
    """Odd harmonic-oscillator eigenfunction x exp(-x^2/2hbar), normalised (d=1)."""
    x = grid.positions()[..., 0]
    amps = x * np.exp(-np.sum(grid.positions() ** 2, axis=-1) / (2 * hbar)) + 0j
    return WaveFunction(grid, amps / l2_norm(amps, grid), hbar)


def sample_toeplitz(mu_in, n_states: int, grid: SpatialGrid, hbar: float, seed: int = 0) -> StateEnsemble:
    """Coherent-state ensemble whose density operator estimates the Toeplitz
    quantization of ``mu_in``.

    ``mu_in`` is an initial-measure mapping (see
    :func:`classical.sample_initial_measure`), a callable ``(n, seed) -> (q, p)``
    or an object with ``support``/``weights`` (a discrete measure in R^{2d}).
    """
    if n_states < 1:
        raise ValueError("n_states must be >= 1")
    d = grid.d
    if isinstance(mu_in, dict):
        q, p = classical.sample_initial_measure(mu_in, n_states, seed, d)
    elif callable(mu_in):
        q, p = mu_in(n_states, seed)
    else:
        support = np.asarray(mu_in.support, float)
        w = np.asarray(mu_in.weights, float)
        # stratified inverse-CDF draw from a low-discrepancy uniform sequence
        u = (np.arange(n_states) + np.random.default_rng(seed).random()) / n_states
        idx = np.searchsorted(np.cumsum(w), u * w.sum(), side="right")
        idx = np.minimum(idx, len(w) - 1)
        q, p = support[idx, :d], support[idx, d:]
    q = np.asarray(q, float).reshape(n_states, d)
    p = np.asarray(p, float).reshape(n_states, d)
    margin = grid.L - TAIL_SIGMAS * math.sqrt(hbar)
    if np.any(np.abs(q) > margin):
        raise BoundaryClipping(f"sampled |q| up to {np.abs(q).max():.4g} exceeds {margin:.4g}")
    amps = np.stack([_coherent_amplitudes(grid, hbar, qi, pi) for qi, pi in zip(q, p)])
    return StateEnsemble(grid, hbar, amps, np.full(n_states, 1.0 / n_states),
                         np.hstack([q, p]), seed)


# ----------------------------------------------------------------- propagators


def _fft_axes(d):
    return tuple(range(-d, 0))


def kinetic_propagate(psi: WaveFunction, t: float) -> WaveFunction:
    """Exact free evolution of the discretised state over time ``t``."""
    g = psi.grid
    ax = _fft_axes(g.d)
    mult = np.exp(-0.5j * t * psi.hbar * g.k_squared())
    return psi._replace(np.fft.ifftn(np.fft.fftn(psi.amplitudes, axes=ax) * mult, axes=ax))


def potential_propagate(psi: WaveFunction, t: float, V: Potential) -> WaveFunction:
    mult = np.exp(-1j * t * V.eval(psi.grid.positions()) / psi.hbar)
    return psi._replace(psi.amplitudes * mult)


def lie_trotter_step_q(psi: WaveFunction, dt: float, V: Potential) -> WaveFunction:
    return potential_propagate(kinetic_propagate(psi, dt), dt, V)


def strang_step_q(psi: WaveFunction, dt: float, V: Potential) -> WaveFunction:
    half = kinetic_propagate(psi, 0.5 * dt)
    return kinetic_propagate(potential_propagate(half, dt, V), 0.5 * dt)


class SplitPropagator:
    """Batched split-step evolution of arrays shaped (..., *grid.shape).

    Consecutive half kinetic steps of the Strang scheme are fused, so ``n``
    Strang steps cost ``n + 1`` FFT pairs. Every ``guard_every`` steps the
    spectral mass in the top eighth of the band is checked against 1e-8.
    """

    def __init__(self, grid: SpatialGrid, hbar: float, V: Potential, guard_every: int = 1):
        self.grid = grid
        self.hbar = hbar
        self.V = V
        self.guard_every = guard_every
        self._k2 = grid.k_squared()
        self._vx = V.eval(grid.positions())
        self._mask = grid.guard_mask()
        self._ax = _fft_axes(grid.d)
        self.max_guard_fraction = 0.0

    def _kin(self, t):
        return np.exp(-0.5j * t * self.hbar * self._k2)

    def _pot(self, t):
        return np.exp(-1j * t * self._vx / self.hbar)

    def _guard(self, spec):
        p = np.abs(spec) ** 2
        tot = np.sum(p, axis=self._ax)
        top = np.sum(p * self._mask, axis=self._ax)
        frac = float(np.max(top / tot))
        self.max_guard_fraction = max(self.max_guard_fraction, frac)
        if frac > GUARD_LIMIT:
            raise SpectralUnderresolution(
                f"spectral mass fraction {frac:.3e} in the top 1/8 of wavenumbers")

    def run(self, amps: np.ndarray, scheme: str, dt: float, n_steps: int) -> np.ndarray:
        if n_steps < 0 or dt < 0:
            raise ValueError("dt and n_steps must be nonnegative")
        if n_steps == 0 or dt == 0:
            return amps.copy()
        ax = self._ax
        fft, ifft = np.fft.fftn, np.fft.ifftn
        pot = self._pot(dt)
        if scheme == "lie_trotter":
            kin = self._kin(dt)
            psi = amps
            for k in range(n_steps):
                spec = fft(psi, axes=ax) * kin
                if k % self.guard_every == 0 or k == n_steps - 1:
                    self._guard(spec)
                psi = ifft(spec, axes=ax) * pot
            return psi
        if scheme == "strang":
            half, full = self._kin(0.5 * dt), self._kin(dt)
            spec = fft(amps, axes=ax) * half
            for k in range(n_steps):
                if k % self.guard_every == 0:
                    self._guard(spec)
                psi = ifft(spec, axes=ax) * pot
                spec = fft(psi, axes=ax) * (half if k == n_steps - 1 else full)
            self._guard(spec)
            return ifft(spec, axes=ax)
        raise ValueError(f"unknown scheme {scheme!r}")


def propagate_ensemble(ens: StateEnsemble, scheme: str, dt: float, n_steps: int, V: Potential,
                       guard_every: int = 1) -> StateEnsemble:
    prop = SplitPropagator(ens.grid, ens.hbar, V, guard_every)
    return ens.with_amplitudes(prop.run(ens.amplitudes, scheme, dt, n_steps))


@dataclass(frozen=True)
class ReferenceSolution:
    amplitudes: np.ndarray
    dt_ref: float
    n_steps: int
    richardson_error: float  # worst-member L2 estimate of the reference error


def reference_solution(ens: StateEnsemble, t_final: float, dt_ref: float, V: Potential,
                       guard_every: int = 1) -> ReferenceSolution:
    """Strang solution at ``t_final`` with step close to ``dt_ref``, plus a
    Richardson estimate of its own error from a run at twice the step."""
    n = max(2, int(math.ceil(t_final / dt_ref - 1e-9)))
    n += n % 2
    step = t_final / n
    prop = SplitPropagator(ens.grid, ens.hbar, V, guard_every)
    fine = prop.run(ens.amplitudes, "strang", step, n)
    coarse = prop.run(ens.amplitudes, "strang", 2 * step, n // 2)
    # second order: |fine - exact| ~ |fine - coarse| / 3
    err = float(np.max(l2_norm(fine - coarse, ens.grid))) / 3.0
    return ReferenceSolution(fine, step, n, err)


# ----------------------------------------------------------------- grids


def choose_grid(hbar: float, q_extent: float, p_max: float, V: Potential, d: int = 1,
                band_fraction: float = 0.75, max_points: int = 2 ** 15) -> SpatialGrid:
    """Smallest grid that holds every state with Gaussian-tail margins.

    ``q_extent`` bounds |q| of every packet centre over the run and ``p_max``
    bounds |p|. The half-width L is the smallest admissible multiple of half
    the potential's period (so periodic potentials stay periodic on the
    torus); the point count is the smallest power of two with
    dx <= sqrt(hbar)/4 and with p_max plus 8 momentum widths inside
    ``band_fraction`` of the Nyquist band.
    """
    tail = TAIL_SIGMAS * math.sqrt(hbar)
    need_L = q_extent + tail
    if V.period is not None:
        half = V.period / 2
        L = half * max(1, math.ceil(need_L / half - 1e-12))
    else:
        L = need_L
    dx_max = min(math.sqrt(hbar) / 4, band_fraction * math.pi * hbar / (p_max + tail))
    n = 16
    while 2 * L / n > dx_max:
        n *= 2
        if n > max_points:
            raise SpectralUnderresolution(
                f"hbar={hbar} needs more than {max_points} points per axis")
    return SpatialGrid(d, n, L)


def expected_position(amps, grid: SpatialGrid) -> np.ndarray:
    """<x> per member (minimal-image periodic coordinates), shape (..., d)."""
    x = grid.positions()
    ax = _fft_axes(grid.d)
    w = np.abs(amps) ** 2 * grid.cell
    return np.stack([np.sum(w * x[..., k], axis=ax) for k in range(grid.d)], axis=-1)


def expected_momentum(amps, grid: SpatialGrid, hbar: float) -> np.ndarray:
    ax = _fft_axes(grid.d)
    spec = np.abs(np.fft.fftn(amps, axes=ax)) ** 2
    spec = spec / np.sum(spec, axis=ax, keepdims=True)
    k = grid.wavenumbers()
    ks = np.meshgrid(*([k] * grid.d), indexing="ij")
    return np.stack([hbar * np.sum(spec * kk, axis=ax) for kk in ks], axis=-1)


def phase_moments(amps, grid: SpatialGrid, hbar: float):
    """Mean and standard deviation of position and momentum per member.

    Returns (mean_x, std_x, mean_p, std_p), each (..., d).
    """
    ax = _fft_axes(grid.d)
    x = grid.positions()
    w = np.abs(amps) ** 2 * grid.cell
    mx = np.stack([np.sum(w * x[..., k], axis=ax) for k in range(grid.d)], axis=-1)
    vx = np.stack([np.sum(w * x[..., k] ** 2, axis=ax) for k in range(grid.d)], axis=-1) - mx ** 2
    spec = np.abs(np.fft.fftn(amps, axes=ax)) ** 2
    spec = spec / np.sum(spec, axis=ax, keepdims=True)
    k = grid.wavenumbers()
    ks = np.meshgrid(*([k] * grid.d), indexing="ij")
    mp = np.stack([hbar * np.sum(spec * kk, axis=ax) for kk in ks], axis=-1)
    vp = np.stack([hbar ** 2 * np.sum(spec * kk ** 2, axis=ax) for kk in ks], axis=-1) - mp ** 2
    return mx, np.sqrt(np.maximum(vx, 0)), mp, np.sqrt(np.maximum(vp, 0))


