"""Classical Hamiltonian flow and its Lie-Trotter / Strang splittings.

Everything here moves particles forward in time. The splitting literature
writes the schemes as pullbacks of densities, ``f^{n+1} = f^n o P o K``; the
pushforward of the particle cloud by the inverse maps is the same measure,
which is why one Lie-Trotter step here is drift-then-kick.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np
from scipy.integrate import solve_ivp
from scipy.stats import norm, qmc

from .potentials import Potential

SCHEMES = ("lie_trotter", "strang", "reference")


class StepSizeUnderflow(RuntimeError):
    pass


class PhasePoint(NamedTuple):
    """Position ``x`` and momentum ``xi``; arrays of shape (..., d)."""

    x: np.ndarray
    xi: np.ndarray


@dataclass(frozen=True)
class PhaseEnsemble:
    """Weighted particle cloud: ``x`` and ``xi`` have shape (n, d)."""

    x: np.ndarray
    xi: np.ndarray
    weights: np.ndarray
    rng_seed: int = 0

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.x, dtype=float))
        xi = np.atleast_2d(np.asarray(self.xi, dtype=float))
        w = np.asarray(self.weights, dtype=float)
        if x.shape != xi.shape or x.shape[0] != w.shape[0] or w.shape[0] < 1:
            raise ValueError("points and weights must have matching lengths >= 1")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be nonnegative and sum to 1")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(xi))):
            raise ValueError("phase points must be finite")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    @property
    def d(self):
        return self.x.shape[1]

    @property
    def points(self):
        """Stacked (x, xi) coordinates, shape (n, 2d)."""
        return np.hstack([self.x, self.xi])

    def with_state(self, x, xi):
        return replace(self, x=x, xi=xi)

    def head(self, n):
        """First ``n`` particles, reweighted uniformly (only for equal weights)."""
        n = min(n, len(self))
        return PhaseEnsemble(self.x[:n], self.xi[:n], np.full(n, 1.0 / n), self.rng_seed)


def drift(p: PhasePoint, t: float) -> PhasePoint:
    x, xi = np.asarray(p[0], float), np.asarray(p[1], float)
    return PhasePoint(x + t * xi, xi)


def kick(p: PhasePoint, t: float, V: Potential) -> PhasePoint:
    x, xi = np.asarray(p[0], float), np.asarray(p[1], float)
    return PhasePoint(x, xi - t * V.grad(x))


def lie_trotter_step(p: PhasePoint, dt: float, V: Potential) -> PhasePoint:
    return kick(drift(p, dt), dt, V)


def strang_step(p: PhasePoint, dt: float, V: Potential) -> PhasePoint:
    return drift(kick(drift(p, 0.5 * dt), dt, V), 0.5 * dt)


def reference_flow(p: PhasePoint, t: float, V: Potential, tol: float = 1e-12) -> PhasePoint:
    """Solve x' = xi, xi' = -grad V(x) up to time ``t``.

    Free and harmonic motion use closed forms; anything else goes through an
    adaptive 8(5,3) Runge-Kutta integrator with rtol = atol = ``tol``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    x, xi = np.asarray(p[0], float), np.asarray(p[1], float)
    if t == 0:
        return PhasePoint(x.copy(), xi.copy())
    if V.name == "zero":
        return drift(PhasePoint(x, xi), t)
    if V.name == "harmonic":
        w = V.params["omega"]
        c, s = np.cos(w * t), np.sin(w * t)
        return PhasePoint(x * c + xi * s / w, -x * w * s + xi * c)

    shape = x.shape
    d = shape[-1]
    n = x.size

    def rhs(_, y):
        q = y[:n].reshape(-1, d)
        v = y[n:]
        return np.concatenate([v, -V.grad(q).ravel()])

    y0 = np.concatenate([x.ravel(), xi.ravel()])
    sol = solve_ivp(rhs, (0.0, t), y0, method="DOP853", rtol=tol, atol=tol)
    if sol.status != 0:
        raise StepSizeUnderflow(sol.message)
    y = sol.y[:, -1]
    return PhasePoint(y[:n].reshape(shape), y[n:].reshape(shape))


_STEPPERS = {"lie_trotter": lie_trotter_step, "strang": strang_step}


def evolve_ensemble(ens: PhaseEnsemble, scheme: str, dt: float, n_steps: int, V: Potential,
                    tol: float = 1e-12, on_step=None) -> PhaseEnsemble:
    """Push every particle ``n_steps`` times through the chosen map.

    Particle order and weights are kept, so the result can be compared with
    another run from the same initial cloud through the identity coupling.
    ``on_step(n, ensemble)`` is called after each splitting step.
    """
    if dt < 0 or n_steps < 0:
        raise ValueError("dt and n_steps must be nonnegative")
    if scheme not in SCHEMES:
        raise ValueError(f"unknown scheme {scheme!r}")
    p = PhasePoint(ens.x, ens.xi)
    if n_steps == 0 or dt == 0:
        return ens
    if scheme == "reference":
        p = reference_flow(p, dt * n_steps, V, tol)
        return ens.with_state(p.x, p.xi)
    step = _STEPPERS[scheme]
    for k in range(1, n_steps + 1):
        p = step(p, dt, V)
        if on_step is not None:
            on_step(k, ens.with_state(p.x, p.xi))
    return ens.with_state(p.x, p.xi)


def second_moment(ens: PhaseEnsemble) -> float:
    r2 = np.sum(ens.x ** 2, axis=1) + np.sum(ens.xi ** 2, axis=1)
    return float(ens.weights @ r2)


def momentum_moment_24(ens: PhaseEnsemble) -> float:
    p2 = np.sum(ens.xi ** 2, axis=1)
    return float(ens.weights @ (p2 + p2 * p2))


def moment_recursion_rhs(mu_prev: float, dt: float, lam: float, e_const: float) -> float:
    """Upper bound on the next second moment of a Lie-Trotter cloud given the
    current one."""
    return ((1 + dt + 2 * lam ** 2 * dt * (1 + dt) ** 2) * (1 + dt) * mu_prev
            + 2 * dt * (1 + dt) * e_const)


# ---------------------------------------------------------------- sampling


def sobol_normal(n: int, dim: int, seed: int) -> np.ndarray:
    """Scrambled Sobol points mapped to standard normals, shape (n, dim)."""
    sampler = qmc.Sobol(d=dim, scramble=True, seed=seed)
    m = int(np.ceil(np.log2(max(n, 1))))
    u = sampler.random_base2(m)[:n]
    u = np.clip(u, 1e-12, 1 - 1e-12)
    return norm.ppf(u)


def sample_initial_measure(spec: dict, n: int, seed: int, d: int = 1) -> tuple[np.ndarray, np.ndarray]:
    """Quasi-random samples (q, p), each (n, d), from an initial measure spec.

    Supported kinds: ``gaussian`` (``mean_q``, ``mean_p``, ``std_q``,
    ``std_p`` or a full ``cov`` of size 2d), ``dirac`` (``q``, ``p``) and
    ``mixture`` (``components`` list with ``weight`` entries).
    """
    kind = spec["kind"]
    if kind == "dirac":
        q = np.broadcast_to(np.asarray(spec["q"], float), (n, d)).copy()
        p = np.broadcast_to(np.asarray(spec["p"], float), (n, d)).copy()
        return q, p
    if kind == "gaussian":
        mean, chol = _gaussian_params(spec, d)
        z = sobol_normal(n, 2 * d, seed)
        s = mean + z @ chol.T
        return s[:, :d], s[:, d:]
    if kind == "mixture":
        comps = spec["components"]
        w = np.array([c.get("weight", 1.0) for c in comps], float)
        w /= w.sum()
        counts = np.floor(w * n).astype(int)
        counts[: n - counts.sum()] += 1
        qs, ps = [], []
        for k, (c, cnt) in enumerate(zip(comps, counts)):
            if cnt == 0:
                continue
            c = {key: val for key, val in c.items() if key != "weight"}
            q, p = sample_initial_measure(c, int(cnt), seed + 7919 * (k + 1), d)
            qs.append(q)
            ps.append(p)
        return np.vstack(qs), np.vstack(ps)
    raise ValueError(f"unknown initial measure kind {kind!r}")


def _gaussian_params(spec, d):
    mean = np.concatenate([np.broadcast_to(np.asarray(spec.get("mean_q", 0.0), float), (d,)),
                           np.broadcast_to(np.asarray(spec.get("mean_p", 0.0), float), (d,))])
    if "cov" in spec:
        cov = np.asarray(spec["cov"], float).reshape(2 * d, 2 * d)
    else:
        sq = np.broadcast_to(np.asarray(spec.get("std_q", 1.0), float), (d,))
        sp = np.broadcast_to(np.asarray(spec.get("std_p", 1.0), float), (d,))
        cov = np.diag(np.concatenate([sq, sp]) ** 2)
    return mean, np.linalg.cholesky(cov)


def initial_ensemble(spec: dict, n: int, seed: int, d: int = 1) -> PhaseEnsemble:
    q, p = sample_initial_measure(spec, n, seed, d)
    return PhaseEnsemble(q, p, np.full(q.shape[0], 1.0 / q.shape[0]), seed)
