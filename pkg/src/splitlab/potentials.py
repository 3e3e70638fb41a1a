"""External potentials V and the scalar constants the error bounds need."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np


class UnboundedDerivative(ValueError):
    """A bound needs a sup-norm of a derivative of V that is infinite."""


ScalarField = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class Potential:
    """A smooth real potential with gradient, Hessian and derivative sup-norms.

    ``eval``, ``grad`` and ``hess`` act on arrays whose last axis is the
    position (length ``d``) and broadcast over leading axes: ``eval`` drops the
    last axis, ``grad`` keeps it and ``hess`` appends one more.
    """

    name: str
    d: int
    eval: ScalarField = field(repr=False)
    grad: ScalarField = field(repr=False)
    hess: ScalarField = field(repr=False)
    sup_grad: float
    sup_hess: float
    sup_third: float
    lip_grad: float
    grad_at_origin_norm: float
    estimated: bool = False
    params: dict = field(default_factory=dict, compare=False)
    period: float | None = None

    def __call__(self, x):
        return self.eval(np.asarray(x, dtype=float))


def _as_positions(x):
    return np.asarray(x, dtype=float)


def harmonic(omega: float = 1.0, d: int = 1) -> Potential:
    """V(x) = omega^2 |x|^2 / 2; gradient unbounded."""
    w2 = float(omega) ** 2

    def ev(x):
        x = _as_positions(x)
        return 0.5 * w2 * np.sum(x * x, axis=-1)

    def gr(x):
        return w2 * _as_positions(x)

    def he(x):
        x = _as_positions(x)
        return np.broadcast_to(w2 * np.eye(d), x.shape + (d,)).copy()

    return Potential("harmonic", d, ev, gr, he,
                     sup_grad=np.inf, sup_hess=w2, sup_third=0.0, lip_grad=w2,
                     grad_at_origin_norm=0.0, params={"omega": float(omega)})


def pendulum(amplitude: float = 1.0, d: int = 1) -> Potential:
    """V(x) = a * sum_k (1 - cos x_k), 2*pi periodic in each coordinate."""
    a = float(amplitude)

    def ev(x):
        x = _as_positions(x)
        return a * np.sum(1.0 - np.cos(x), axis=-1)

    def gr(x):
        return a * np.sin(_as_positions(x))

    def he(x):
        x = _as_positions(x)
        c = a * np.cos(x)
        return c[..., :, None] * np.eye(d)

    # the Hessian is diagonal, so every operator norm below is attained per axis
    aa = abs(a)
    return Potential("pendulum", d, ev, gr, he,
                     sup_grad=float(aa * np.sqrt(d)), sup_hess=aa, sup_third=aa, lip_grad=aa,
                     grad_at_origin_norm=0.0, params={"amplitude": a}, period=2 * math.pi)


def zero(d: int = 1) -> Potential:
    """V = 0 (free motion)."""

    def ev(x):
        return np.zeros(_as_positions(x).shape[:-1])

    def gr(x):
        return np.zeros_like(_as_positions(x))

    def he(x):
        x = _as_positions(x)
        return np.zeros(x.shape + (d,))

    return Potential("zero", d, ev, gr, he, sup_grad=0.0, sup_hess=0.0, sup_third=0.0,
                     lip_grad=0.0, grad_at_origin_norm=0.0)


def from_callables(name, eval, grad, hess, domain, d=1, samples_per_axis=10_000) -> Potential:
    """Wrap a user potential, estimating its sup-norms on ``domain``.

    ``domain`` is a (low, high) pair applied to every axis. Norms are grid
    maxima (safety factor 1.0) and the potential is flagged as estimated. The
    third-derivative norm comes from centered differences of the Hessian.
    """
    lo, hi = map(float, domain)
    if d == 1:
        pts = np.linspace(lo, hi, samples_per_axis)[:, None]
    else:
        # a full tensor grid at 10^4 per axis is out of reach beyond d=1
        n = max(int(round(samples_per_axis ** (1.0 / d))), 16) if d > 2 else 300
        axes = [np.linspace(lo, hi, n)] * d
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), -1).reshape(-1, d)
    g = np.asarray(grad(pts))
    h = np.asarray(hess(pts))
    sup_grad = float(np.max(np.linalg.norm(g, axis=-1)))
    sup_hess = float(np.max(np.linalg.norm(h, ord=2, axis=(-2, -1))))
    step = (hi - lo) / (samples_per_axis - 1) if d == 1 else (hi - lo) / 299
    third = 0.0
    for k in range(d):
        e = np.zeros(d)
        e[k] = step
        dh = (np.asarray(hess(pts + e)) - np.asarray(hess(pts - e))) / (2 * step)
        third = max(third, float(np.max(np.linalg.norm(dh, ord=2, axis=(-2, -1)))))
    g0 = float(np.linalg.norm(np.asarray(grad(np.zeros((1, d))))[0]))
    return Potential(name, d, eval, grad, hess, sup_grad=sup_grad, sup_hess=sup_hess,
                     sup_third=third, lip_grad=sup_hess, grad_at_origin_norm=g0,
                     estimated=True, params={"domain": [lo, hi]})


CATALOG = {"harmonic": harmonic, "pendulum": pendulum, "zero": zero}


def make_potential(spec: dict, d: int = 1) -> Potential:
    """Build a catalog potential from a config mapping such as
    ``{"kind": "pendulum", "amplitude": 1.0}``."""
    spec = dict(spec)
    kind = spec.pop("kind")
    if kind not in CATALOG:
        raise KeyError(f"unknown potential kind {kind!r}; choose from {sorted(CATALOG)}")
    return CATALOG[kind](d=d, **spec)


def lambda_constant(V: Potential) -> float:
    """max(1, |grad V(0)|, ||hess V||_inf)."""
    return float(max(1.0, V.grad_at_origin_norm, V.sup_hess))


def m_constant(V: Potential) -> float:
    """max(1, ||grad V||^2, ||hess V||^2, ||D^3 V||^2) over sup-norms."""
    norms = (V.sup_grad, V.sup_hess, V.sup_third)
    if not all(np.isfinite(norms)):
        raise UnboundedDerivative(f"{V.name}: derivative sup-norms {norms} are not all finite")
    return float(max(1.0, *(s * s for s in norms)))


def mv_constant(V: Potential) -> float:
    """max(2 ||grad V||_inf, ||hess V||_inf)."""
    if not (np.isfinite(V.sup_grad) and np.isfinite(V.sup_hess)):
        raise UnboundedDerivative(f"{V.name}: gradient or Hessian is unbounded")
    return float(max(2.0 * V.sup_grad, V.sup_hess))
