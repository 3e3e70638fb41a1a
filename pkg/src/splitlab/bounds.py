"""Closed-form constants and error envelopes for the splitting schemes."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy.stats import norm

from .classical import _gaussian_params, sobol_normal
from .potentials import (Potential, UnboundedDerivative, lambda_constant, m_constant,
                         mv_constant)


def _lip_term(V: Potential) -> float:
    return max(1.0, V.lip_grad ** 2)


def _growth(lam: float, T: float) -> float:
    return math.expm1((2 + lam) * T) / (2 + lam)


def c_T_squared(V: Potential, T: float, dt: float, mu0: float) -> float:
    if not 0 < dt <= 0.5 or T <= 0:
        raise ValueError("need 0 < dt <= 1/2 and T > 0")
    lam = lambda_constant(V)
    e = V.grad_at_origin_norm
    a = 1 + dt
    expo = math.exp(2 * T * (1 + lam ** 2 * a ** 2))
    bracket = 1 + expo * mu0 + 2 * a * e * (expo - 1) / (1 + a * (1 + 2 * lam ** 2 * a ** 2))
    return 2.25 * lam ** 2 * (0.5 + lam) ** 2 * _growth(lam, T) * bracket


def c_T(V: Potential, T: float, dt: float, mu0: float) -> float:
    """Lie-Trotter classical constant: W2 error <= c_T * dt."""
    return math.sqrt(c_T_squared(V, T, dt, mu0))


def d_T(V: Potential, T: float, nu0: float) -> float:
    """Strang classical constant: W2 error <= d_T * dt^2."""
    if T <= 0:
        raise ValueError("T must be positive")
    m = m_constant(V)
    return math.sqrt(_growth(lambda_constant(V), T) * m ** 3 * (1 + math.exp(3 * T) * (nu0 + m * m)))


def propagation_factor(t: float, lambda_kinetic: float, V: Potential) -> float:
    """Growth of the quantum-classical coupling cost over time t."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return math.exp(0.5 * t * (lambda_kinetic + _lip_term(V)))


def hbar_envelope(hbar: float, V: Potential, T: float, d: int) -> float:
    """The sqrt(hbar) term shared by both semiclassical bounds."""
    return 2 * math.sqrt(d * hbar) * (1 + propagation_factor(T, 1.0, V))


def semiclassical_bound_simple(dt, hbar, c_T, V, T, d) -> float:
    return c_T * dt + hbar_envelope(hbar, V, T, d)


def semiclassical_bound_strang(dt, hbar, d_T, V, T, d) -> float:
    return d_T * dt ** 2 + hbar_envelope(hbar, V, T, d)


def uniform_constant_simple(V: Potential, T: float, abs_p_moment: float, d: int, c_T: float) -> float:
    mv = mv_constant(V)
    return max(4 * math.sqrt(2) * mv, c_T, 4 * mv * (mv * T * T + d + abs_p_moment),
               2 * math.sqrt(d) * (1 + propagation_factor(T, 1.0, V)))


def uniform_constant_strang(V: Potential, T: float, d: int, d_T: float, m_prime: float) -> float:
    m_constant(V)   # eligibility: every derivative norm must be finite
    return max(d_T, m_prime, 2 * math.sqrt(d) * (1 + propagation_factor(T, 1.0, V)))


def uniform_bound_simple(c_uniform: float, dt: float) -> float:
    return 2 * c_uniform * dt ** (1 / 3)


def uniform_bound_strang(d_uniform: float, dt: float) -> float:
    return 2 * d_uniform * dt ** (2 / 3)


def coherent_state_l2_bound(dt, hbar, t, V, p, d) -> float:
    """L2 error bound of t/dt Lie-Trotter steps applied to |q, p>."""
    mv = mv_constant(V)
    h1 = math.sqrt(hbar ** 2 + float(np.dot(p, p)) + 0.5 * d * hbar)
    return 2 * dt / hbar * mv * (mv * t * t + h1)


def trace_norm_bound_simple(dt, hbar, t, V, d, abs_p_moment) -> float:
    """Trace-norm error bound of the Lie-Trotter density operator."""
    mv = mv_constant(V)
    return 4 * dt / hbar * mv * (mv * t * t + math.sqrt(2) * hbar + d + abs_p_moment)


def nu_recursion_rhs(nu_prev: float, dt: float, m: float) -> float:
    """Upper bound on the next Strang momentum moment given the current one."""
    return math.exp(3 * dt) * (nu_prev + m * (1 + m) * dt)


def calibrate_m_prime(samples, safety: float = 2.0) -> float:
    """Smallest M' with err <= M' dt^2 / hbar over ``(dt, hbar, err)`` samples,
    times ``safety``."""
    vals = [err * hbar / dt ** 2 for dt, hbar, err in samples]
    if not vals:
        raise ValueError("no calibration samples")
    return safety * max(vals)


# ------------------------------------------------------- initial-measure moments


@dataclass(frozen=True)
class Moments:
    mu0: float           # E(|q|^2 + |p|^2)
    nu0: float           # E(|p|^2 + |p|^4)
    abs_p: float         # E|p|
    estimated: bool = False


def _gaussian_moments(spec, d, mc_points=2 ** 16, seed=12345):
    mean, chol = _gaussian_params(spec, d)
    cov = chol @ chol.T
    mu0 = float(mean @ mean + np.trace(cov))
    mp, sp = mean[d:], cov[d:, d:]
    tr, m2 = float(np.trace(sp)), float(mp @ mp)
    p4 = (tr + m2) ** 2 + 2 * float(np.trace(sp @ sp)) + 4 * float(mp @ sp @ mp)
    nu0 = tr + m2 + p4
    if d == 1:
        m, s = float(mp[0]), math.sqrt(float(sp[0, 0]))
        if s == 0:
            abs_p = abs(m)
        else:
            abs_p = s * math.sqrt(2 / math.pi) * math.exp(-m * m / (2 * s * s)) + m * (1 - 2 * float(norm.cdf(-m / s)))
        return Moments(mu0, nu0, abs_p)
    z = sobol_normal(mc_points, d, seed)
    p = mp + z @ np.linalg.cholesky(sp + 1e-300 * np.eye(d)).T
    return Moments(mu0, nu0, float(np.mean(np.linalg.norm(p, axis=1))), estimated=True)


def measure_moments(spec: dict, d: int = 1) -> Moments:
    """Moments of an initial-measure spec (see classical.sample_initial_measure)."""
    kind = spec["kind"]
    if kind == "dirac":
        q = np.broadcast_to(np.asarray(spec["q"], float), (d,))
        p = np.broadcast_to(np.asarray(spec["p"], float), (d,))
        p2 = float(p @ p)
        return Moments(float(q @ q) + p2, p2 + p2 * p2, math.sqrt(p2))
    if kind == "gaussian":
        return _gaussian_moments(spec, d)
    if kind == "mixture":
        comps = spec["components"]
        w = np.array([c.get("weight", 1.0) for c in comps], float)
        w /= w.sum()
        parts = [measure_moments({k: v for k, v in c.items() if k != "weight"}, d) for c in comps]
        return Moments(float(sum(wi * m.mu0 for wi, m in zip(w, parts))),
                       float(sum(wi * m.nu0 for wi, m in zip(w, parts))),
                       float(sum(wi * m.abs_p for wi, m in zip(w, parts))),
                       any(m.estimated for m in parts))
    raise ValueError(f"unknown initial measure kind {kind!r}")


# ------------------------------------------------------------------- report


@dataclass(frozen=True)
class BoundReport:
    lambda_: float
    e_const: float
    m_const: float | None
    mv_const: float | None
    mu0: float
    nu0: float
    abs_p_moment: float
    dt_for_c_T: float
    c_T: float
    d_T: float | None
    c_uniform: float | None
    d_uniform: float | None
    m_prime: float | None = None
    m_prime_source: str | None = None      # "calibrated" when fitted from data
    eligibility: dict = field(default_factory=dict)
    potential_estimated: bool = False

    def to_dict(self) -> dict:
        out = asdict(self)
        out["lambda"] = out.pop("lambda_")
        return out

    def with_m_prime(self, m_prime: float, T: float, V: Potential, d: int) -> "BoundReport":
        d_uni = uniform_constant_strang(V, T, d, self.d_T, m_prime) if self.d_T is not None else None
        return replace(self, m_prime=m_prime, m_prime_source="calibrated", d_uniform=d_uni)


def _maybe(fn, *args):
    try:
        return fn(*args)
    except UnboundedDerivative:
        return None


def bound_report(V: Potential, T: float, dt_max: float, mu_in: dict, d: int = 1,
                 m_prime: float | None = None) -> BoundReport:
    """Every constant for one experiment; C_T is evaluated at the largest dt
    of the sweep because it increases with dt."""
    mom = measure_moments(mu_in, d)
    m = _maybe(m_constant, V)
    mv = _maybe(mv_constant, V)
    ct = c_T(V, T, dt_max, mom.mu0)
    dt_ = d_T(V, T, mom.nu0) if m is not None else None
    c_uni = uniform_constant_simple(V, T, mom.abs_p, d, ct) if mv is not None else None
    d_uni = (uniform_constant_strang(V, T, d, dt_, m_prime)
             if m is not None and m_prime is not None else None)
    finite_hess = math.isfinite(V.sup_hess)
    elig = {
        "classical_first_order": finite_hess,
        "classical_second_order": m is not None,
        "semiclassical_first_order": math.isfinite(V.lip_grad),
        "semiclassical_second_order": m is not None,
        "uniform_first_order": mv is not None,
        "uniform_second_order": m is not None,
    }
    return BoundReport(lambda_constant(V), V.grad_at_origin_norm, m, mv, mom.mu0, mom.nu0,
                       mom.abs_p, dt_max, ct, dt_, c_uni, d_uni, m_prime,
                       "calibrated" if m_prime is not None else None, elig,
                       V.estimated or mom.estimated)
