"""Wigner and Husimi phase-space densities of discretised wave functions.

Two independent Husimi routes are provided: Gaussian smoothing of the
Wigner function (heat flow for time hbar/4 in all 2d phase-space
coordinates) and the direct coherent-state overlap |<q,p|psi>|^2/(2 pi hbar)^d.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .ot import DiscreteMeasure
from .quantum import SpatialGrid, StateEnsemble, WaveFunction


class ImaginaryResidueTooLarge(RuntimeError):
    pass


class NegativeAfterSmoothing(RuntimeError):
    pass


class ExcessiveTruncation(RuntimeError):
    pass


@dataclass(frozen=True)
class Axis:
    start: float
    step: float
    count: int

    def __post_init__(self):
        if self.step <= 0 or self.count < 8:
            raise ValueError(f"axis needs step > 0 and count >= 8, got {self}")

    @property
    def nodes(self) -> np.ndarray:
        return self.start + self.step * np.arange(self.count)


@dataclass(frozen=True)
class PhaseGrid:
    """Tensor grid in (x_1..x_d, xi_1..xi_d); values are indexed in that order."""

    x_axes: tuple
    xi_axes: tuple

    @property
    def d(self) -> int:
        return len(self.x_axes)

    @property
    def shape(self):
        return tuple(a.count for a in self.x_axes) + tuple(a.count for a in self.xi_axes)

    @property
    def cell_volume(self) -> float:
        return float(np.prod([a.step for a in self.x_axes + self.xi_axes]))

    def nodes(self) -> np.ndarray:
        """Coordinates of every node, shape self.shape + (2d,)."""
        axes = [a.nodes for a in self.x_axes + self.xi_axes]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)


@dataclass(frozen=True)
class PhaseDensity:
    grid: PhaseGrid
    values: np.ndarray = field(repr=False)
    signed: bool
    hbar: float

    def mass(self) -> float:
        return float(np.sum(self.values) * self.grid.cell_volume)


def wigner_grid(grid: SpatialGrid, hbar: float, x_stride: int = 1) -> PhaseGrid:
    """Native Wigner grid: positions are grid nodes (every ``x_stride``-th),
    momenta are 2N nodes at spacing pi hbar / 2L spanning the full band."""
    n = grid.n_points
    xa = Axis(-grid.L, grid.dx * x_stride, n // x_stride)
    dxi = math.pi * hbar / (2 * grid.L)
    xia = Axis(-n * dxi, dxi, 2 * n)
    return PhaseGrid((xa,) * grid.d, (xia,) * grid.d)


def _upsample2(amps, d):
    """Band-limited interpolation onto the grid with half the spacing."""
    n = amps.shape[-1]
    spec = np.fft.fftn(amps, axes=tuple(range(-d, 0)))
    out = spec
    for ax in range(-d, 0):
        out = np.moveaxis(out, ax, -1)
        padded = np.zeros(out.shape[:-1] + (2 * n,), complex)
        padded[..., : n // 2] = out[..., : n // 2]
        padded[..., -(n // 2) + 1:] = out[..., n // 2 + 1:]
        nyq = out[..., n // 2]
        padded[..., n // 2] = 0.5 * nyq
        padded[..., -(n // 2)] = 0.5 * nyq
        out = np.moveaxis(padded, -1, ax)
    return np.fft.ifftn(out, axes=tuple(range(-d, 0))) * 2 ** d


def _check_x_axes(pgrid: PhaseGrid, grid: SpatialGrid):
    strides, offsets = [], []
    for a in pgrid.x_axes:
        s = a.step / grid.dx
        o = (a.start + grid.L) / grid.dx
        if abs(s - round(s)) > 1e-9 or abs(o - round(o)) > 1e-9 or round(s) < 1:
            raise ValueError("phase-grid positions must be spatial grid nodes")
        strides.append(int(round(s)))
        offsets.append(int(round(o)))
    return strides, offsets


def wigner_transform(psi: WaveFunction, pgrid: PhaseGrid | None = None) -> PhaseDensity:
    """Wigner function on (a position subset of) the native Wigner grid.

    Correlation lags are limited to half the box, so the result is exact for
    states whose support is shorter than the half-width L.
    """
    grid, hbar, d = psi.grid, psi.hbar, psi.grid.d
    native = wigner_grid(grid, hbar)
    if pgrid is None:
        pgrid = native
    if any(not np.isclose(a.step, native.xi_axes[0].step) or a.count != native.xi_axes[0].count
           or not np.isclose(a.start, native.xi_axes[0].start) for a in pgrid.xi_axes):
        raise ValueError("Wigner momenta must be the native grid (see wigner_grid)")
    strides, offsets = _check_x_axes(pgrid, grid)
    n = grid.n_points
    fine = _upsample2(psi.amplitudes, d)
    j = np.arange(2 * n)                   # fft order: j and j - 2n are the same offset
    idx_plus, idx_minus = [], []
    for k, ax in enumerate(pgrid.x_axes):
        i2 = 2 * ((offsets[k] + strides[k] * np.arange(ax.count)) % n)
        idx_plus.append((i2[:, None] + j[None, :]) % (2 * n))
        idx_minus.append((i2[:, None] - j[None, :]) % (2 * n))
    # build the (x..., s...) index arrays by broadcasting over 2d axes
    plus_ix, minus_ix = [], []
    for k in range(d):
        shape = [1] * (2 * d)
        shape[k] = pgrid.x_axes[k].count
        shape[d + k] = 2 * n
        plus_ix.append(idx_plus[k].reshape(shape))
        minus_ix.append(idx_minus[k].reshape(shape))
    prod = fine[tuple(plus_ix)] * np.conj(fine[tuple(minus_ix)])
    # lags |s| >= L/2 pair points that coincide modulo the period and only
    # produce a wrap-around ghost; states narrower than L never need them
    lag = np.abs(np.where(j < n, j, j - 2 * n))
    for k in range(d):
        shape = [1] * (2 * d)
        shape[d + k] = 2 * n
        prod = prod * (lag < n // 2).reshape(shape)
    s_axes = tuple(range(d, 2 * d))
    spec = np.fft.fftshift(np.fft.fftn(prod, axes=s_axes), axes=s_axes)
    spec *= (0.5 * grid.dx / (math.pi * hbar)) ** d
    resid = float(np.max(np.abs(spec.imag)))
    if resid > 1e-10 * max(1.0, float(np.max(np.abs(spec.real)))):
        raise ImaginaryResidueTooLarge(f"imaginary residue {resid:.3e}")
    return PhaseDensity(pgrid, spec.real.copy(), True, hbar)


def husimi_via_smoothing(w: PhaseDensity) -> PhaseDensity:
    """Convolve a (periodic) grid density with the Gaussian of variance
    hbar/2 per coordinate, by multiplication in Fourier space."""
    g, hbar = w.grid, w.hbar
    axes = g.x_axes + g.xi_axes
    mult = 1.0
    for k, a in enumerate(axes):
        kk = 2 * np.pi * np.fft.fftfreq(a.count, d=a.step)
        shape = [1] * len(axes)
        shape[k] = a.count
        mult = mult * np.exp(-0.25 * hbar * kk ** 2).reshape(shape)
    vals = np.fft.ifftn(np.fft.fftn(w.values) * mult).real
    return PhaseDensity(g, _clamp(vals), False, hbar)


def _clamp(vals):
    lo = float(vals.min())
    if lo < -1e-6:
        raise NegativeAfterSmoothing(f"Husimi value {lo:.3e} < -1e-6: Wigner input under-resolved")
    if lo < -1e-12:
        warnings.warn(f"clamping negative Husimi values down to {lo:.3e}", RuntimeWarning)
    return np.maximum(vals, 0.0)


def _window_transform_axis(arr, axis, grid: SpatialGrid, hbar, offset, stride, nq, p_nodes):
    """Gaussian-windowed DFT along one spatial axis.

    Replaces the length-N ``axis`` of ``arr`` with two axes (nq, np):
    sum_j exp(-u_j^2/2hbar) exp(-i p u_j/hbar) arr[i_q + j] dx, u_j = j dx.
    """
    n, dx = grid.n_points, grid.dx
    half = min(int(math.ceil(8.5 * math.sqrt(hbar) / dx)), n // 2)
    j = np.arange(-half, half + 1) if half < n // 2 else np.arange(-(n // 2), n // 2)
    u = j * dx
    win = np.exp(-u ** 2 / (2 * hbar)) * dx * (math.pi * hbar) ** -0.25
    kern = win[:, None] * np.exp(-1j * np.outer(u, p_nodes) / hbar)     # (W, np)
    centers = (offset + stride * np.arange(nq)) % n
    idx = (centers[:, None] + j[None, :]) % n                             # (nq, W)
    moved = np.moveaxis(arr, axis, -1)
    gathered = moved[..., idx]                                            # (..., nq, W)
    out = gathered @ kern                                                 # (..., nq, np)
    return np.moveaxis(out, (-2, -1), (axis, axis + 1)) if axis != -1 else out


def _husimi_direct_arrays(amps, grid: SpatialGrid, hbar, pgrid: PhaseGrid):
    d = grid.d
    strides, offsets = _check_x_axes(pgrid, grid)
    lead = amps.ndim - d
    out = amps
    # after each axis the array gains one axis; spatial axis k sits at lead + 2k
    for k in range(d):
        out = _window_transform_axis(out, lead + 2 * k, grid, hbar, offsets[k], strides[k],
                                     pgrid.x_axes[k].count, pgrid.xi_axes[k].nodes)
    # reorder (q1, p1, q2, p2, ...) -> (q1, q2, ..., p1, p2, ...)
    order = list(range(lead)) + [lead + 2 * k for k in range(d)] + [lead + 2 * k + 1 for k in range(d)]
    out = np.transpose(out, order)
    return np.abs(out) ** 2 / (2 * math.pi * hbar) ** d


def husimi_direct(psi: WaveFunction, pgrid: PhaseGrid) -> PhaseDensity:
    vals = _husimi_direct_arrays(psi.amplitudes, psi.grid, psi.hbar, pgrid)
    return PhaseDensity(pgrid, vals, False, psi.hbar)


def husimi_members(ens: StateEnsemble, pgrid: PhaseGrid, chunk: int = 8) -> np.ndarray:
    """Per-member Husimi values, shape (members,) + pgrid.shape."""
    out = np.empty((len(ens),) + pgrid.shape)
    for s in range(0, len(ens), chunk):
        out[s:s + chunk] = _husimi_direct_arrays(ens.amplitudes[s:s + chunk], ens.grid,
                                                 ens.hbar, pgrid)
    return out


def husimi_of_ensemble(ens: StateEnsemble, pgrid: PhaseGrid) -> PhaseDensity:
    vals = np.tensordot(ens.weights, husimi_members(ens, pgrid), axes=1)
    return PhaseDensity(pgrid, vals, False, ens.hbar)


def coarsen(pd: PhaseDensity, factor: int) -> PhaseDensity:
    """Sum ``factor``^(2d) blocks of cells into one (mass preserving); the
    trailing partial block on each axis is zero-padded."""
    if factor == 1:
        return pd
    vals = pd.values
    axes = pd.grid.x_axes + pd.grid.xi_axes
    new_axes = []
    for k, a in enumerate(axes):
        m = -(-a.count // factor)
        pad = [(0, 0)] * vals.ndim
        pad[k] = (0, m * factor - a.count)
        vals = np.pad(vals, pad)
        shape = vals.shape[:k] + (m, factor) + vals.shape[k + 1:]
        vals = vals.reshape(shape).sum(axis=k + 1)
        new_axes.append(Axis(a.start + 0.5 * (factor - 1) * a.step, a.step * factor, max(m, 8)))
        if m < 8:
            pad = [(0, 0)] * vals.ndim
            pad[k] = (0, 8 - m)
            vals = np.pad(vals, pad)
    d = pd.grid.d
    g = PhaseGrid(tuple(new_axes[:d]), tuple(new_axes[d:]))
    # block sums carry mass; divide by the new cell volume to stay a density
    vals = vals * pd.grid.cell_volume / g.cell_volume
    return PhaseDensity(g, vals, pd.signed, pd.hbar)


def density_to_measure(pd: PhaseDensity, threshold: float = 0.0) -> DiscreteMeasure:
    """Cells with mass >= threshold * (largest cell mass) become support
    points (cell centres); weights are renormalised and the dropped mass is
    kept on the measure."""
    mass = pd.values * pd.grid.cell_volume
    if np.any(mass < -1e-12 * max(1.0, float(np.abs(mass).max()))):
        raise ValueError("density_to_measure needs a nonnegative density")
    mass = np.maximum(mass, 0.0)
    total = float(mass.sum())
    cut = threshold * float(mass.max())
    keep = (mass >= cut) & (mass > 0)
    kept = float(mass[keep].sum())
    discarded = (total - kept) / total
    if discarded > 1e-3:
        raise ExcessiveTruncation(f"threshold {threshold:g} discards {discarded:.2e} of the mass")
    pts = pd.grid.nodes()[keep]
    w = mass[keep] / kept
    return DiscreteMeasure(pts, w, discarded_mass=discarded)


def threshold_for_discard(pd: PhaseDensity, max_discard: float) -> float:
    """Largest relative threshold whose dropped mass stays <= ``max_discard``."""
    mass = np.sort(np.maximum(pd.values.ravel(), 0.0))
    total = mass.sum()
    csum = np.cumsum(mass) / total
    k = int(np.searchsorted(csum, max_discard, side="right"))
    # cells 0..k-1 (smallest) may go; the threshold sits at cell k
    k = min(k, mass.size - 1)
    return float(mass[k] / mass[-1])


def export_csv(pd: PhaseDensity, path) -> None:
    """Rows of x_1..x_d, xi_1..xi_d, value."""
    pts = pd.grid.nodes().reshape(-1, 2 * pd.grid.d)
    rows = np.column_stack([pts, pd.values.reshape(-1)])
    d = pd.grid.d
    header = ",".join([f"x{k}" for k in range(d)] + [f"xi{k}" for k in range(d)] + ["value"])
    np.savetxt(path, rows, delimiter=",", header=header, comments="", fmt="%.17g")


def export_binary(pd: PhaseDensity, path) -> None:
    """Flat little-endian float64 rows (x..., xi..., value), no header."""
    pts = pd.grid.nodes().reshape(-1, 2 * pd.grid.d)
    np.column_stack([pts, pd.values.reshape(-1)]).astype("<f8").tofile(path)
