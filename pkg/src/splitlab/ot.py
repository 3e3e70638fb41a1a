"""Optimal-transport distances between discrete phase-space measures.

Small problems (both supports within ``OTConfig.exact_cap``) are solved
exactly by network simplex; larger ones by log-domain Sinkhorn with
epsilon-scaling, accepted only once a primal/dual gap certifies the value.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from ._netsimplex import transport_simplex


class NonConvergence(RuntimeError):
    pass


class ProvenanceMismatch(ValueError):
    pass


class TooLarge(ValueError):
    pass


@dataclass(frozen=True)
class DiscreteMeasure:
    """Probability weights on distinct points of R^{2d}; ``support`` is (n, 2d)."""

    support: np.ndarray
    weights: np.ndarray
    discarded_mass: float = 0.0

    def __post_init__(self):
        s = np.atleast_2d(np.asarray(self.support, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if s.shape[0] != w.shape[0] or w.shape[0] == 0:
            raise ValueError("support and weights must be nonempty with equal lengths")
        if np.any(w <= 0) or abs(w.sum() - 1.0) > 1e-12:
            raise ValueError("weights must be positive and sum to 1")
        if np.unique(s, axis=0).shape[0] != s.shape[0]:
            raise ValueError("support points must be distinct")
        object.__setattr__(self, "support", s)
        object.__setattr__(self, "weights", w)

    def __len__(self):
        return self.weights.shape[0]

    @classmethod
    def from_points(cls, points, weights=None, discarded_mass=0.0):
        """Build a measure from possibly repeated points, merging duplicates."""
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        w = (np.full(pts.shape[0], 1.0 / pts.shape[0]) if weights is None
             else np.asarray(weights, dtype=float))
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        merged = np.bincount(inv.ravel(), weights=w, minlength=uniq.shape[0])
        keep = merged > 0
        merged = merged[keep]
        return cls(uniq[keep], merged / merged.sum(), discarded_mass)

    def shifted(self, v):
        return DiscreteMeasure(self.support + np.asarray(v, float), self.weights, self.discarded_mass)


@dataclass(frozen=True)
class Coupling:
    """Sparse transport plan in coordinate form."""

    rows: np.ndarray
    cols: np.ndarray
    masses: np.ndarray
    shape: tuple

    def dense(self) -> np.ndarray:
        out = np.zeros(self.shape)
        np.add.at(out, (self.rows, self.cols), self.masses)
        return out

    def marginals(self):
        return (np.bincount(self.rows, self.masses, minlength=self.shape[0]),
                np.bincount(self.cols, self.masses, minlength=self.shape[1]))


@dataclass(frozen=True)
class TransportResult:
    distance: float
    plan: Coupling | None
    method: str              # exact_lp | entropic | identity_upper_bound
    tolerance: float = 0.0   # certified relative gap for the entropic tier


@dataclass(frozen=True)
class OTConfig:
    exact_cap: int = 2000
    tol: float = 1e-4
    max_iter: int = 500_000          # total Sinkhorn sweeps over all eps levels
    eps_floor: float = 1e-7
    simplex_max_iter: int = 10_000_000


def squared_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (np.sum(a * a, 1)[:, None] + np.sum(b * b, 1)[None, :] - 2.0 * a @ b.T)
    return np.maximum(d2, 0.0)


def _cost(mu, nu, kind):
    diff = mu.support[:, None, :] - nu.support[None, :, :]
    d2 = np.einsum("ijk,ijk->ij", diff, diff)
    if kind == "w2":
        return d2
    return np.minimum(1.0, np.sqrt(d2))


def _exact(a, b, C, cfg):
    rows, cols, vals, u, v, status = transport_simplex(a, b, C, cfg.simplex_max_iter)
    if status != 0:
        raise NonConvergence(f"network simplex stopped with status {status}")
    plan = Coupling(rows, cols, vals, C.shape)
    return float(vals @ C[rows, cols]), plan


def _round_to_marginals(P, a, b):
    """Smallest-change repair making P an exact coupling of (a, b)."""
    r = P.sum(1)
    P = P * np.minimum(1.0, a / np.where(r > 0, r, 1.0))[:, None]
    c = P.sum(0)
    P = P * np.minimum(1.0, b / np.where(c > 0, c, 1.0))[None, :]
    ea = a - P.sum(1)
    eb = b - P.sum(0)
    s = ea.sum()
    if s > 0:
        P = P + np.outer(ea, eb) / s
    return P


def _entropic(a, b, C, cfg):
    scale = float(C.max()) if C.size else 0.0
    if scale == 0.0:
        n, m = C.shape
        P = np.outer(a, b)
        r, c = np.nonzero(P)
        return 0.0, Coupling(r, c, P[r, c], C.shape), 0.0
    Cn = C / scale
    la, lb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    eps = 0.5
    budget = cfg.max_iter
    plan_cost = 1.0
    while True:
        converged = False
        for k in range(budget):
            f = -eps * logsumexp(lb[None, :] + (g[None, :] - Cn) / eps, axis=1)
            g = -eps * logsumexp(la[:, None] + (f[:, None] - Cn) / eps, axis=0)
            if k % 20:
                continue
            # column marginals are exact after the g-update; watch the rows
            P = np.exp((f[:, None] + g[None, :] - Cn) / eps + la[:, None] + lb[None, :])
            # rounding moves the normalised cost by at most the marginal error
            if np.abs(P.sum(1) - a).sum() < 0.1 * cfg.tol * plan_cost:
                converged = True
                break
        budget -= k + 1
        rel, plan_cost, P = _certify(P, a, b, g, Cn)
        if rel <= cfg.tol:
            r, c = np.nonzero(P > 0)
            return plan_cost * scale, Coupling(r, c, P[r, c], C.shape), rel
        if budget <= 0 or eps <= cfg.eps_floor:
            raise NonConvergence(f"duality gap {rel:.2e} above tolerance {cfg.tol:g}")
        if converged:
            eps = max(0.5 * eps, cfg.eps_floor)


def _certify(P, a, b, g, Cn):
    """Relative gap between a feasible plan's cost and a feasible dual value."""
    P = _round_to_marginals(P, a, b)
    primal = float(np.sum(P * Cn))
    # c-transforms give a feasible dual pair: f_i + g_j <= C_ij
    fd = np.min(Cn - g[None, :], axis=1)
    gd = np.min(Cn - fd[:, None], axis=0)
    dual = float(a @ fd + b @ gd)
    gap = max(primal - dual, 0.0)
    return (0.0 if gap <= 1e-14 else gap / max(primal, 1e-300)), primal, P


def _solve(mu, nu, kind, cfg):
    C = _cost(mu, nu, kind)
    if max(len(mu), len(nu)) <= cfg.exact_cap:
        obj, plan = _exact(mu.weights, nu.weights, C, cfg)
        method, tol = "exact_lp", 0.0
    else:
        obj, plan, tol = _entropic(mu.weights, nu.weights, C, cfg)
        method = "entropic"
    obj = max(obj, 0.0)
    dist = math.sqrt(obj) if kind == "w2" else min(obj, 1.0)
    return TransportResult(dist, plan, method, tol)


def wasserstein2(mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: OTConfig = OTConfig()) -> TransportResult:
    """Quadratic Wasserstein distance between two discrete measures."""
    return _solve(mu, nu, "w2", cfg)


def dist1_truncated(mu: DiscreteMeasure, nu: DiscreteMeasure, cfg: OTConfig = OTConfig()) -> TransportResult:
    """Transport distance with the bounded cost min(1, |a - b|)."""
    return _solve(mu, nu, "dist1", cfg)


def coupled_particle_upper_bound(ens_a, ens_b, kind: str = "w2") -> TransportResult:
    """Cost of pairing particle i of one cloud with particle i of the other.

    Both clouds must descend from the same initial sample, so counts and
    weights agree; the value dominates the optimal transport cost.
    """
    if len(ens_a) != len(ens_b) or not np.array_equal(ens_a.weights, ens_b.weights):
        raise ProvenanceMismatch("ensembles differ in particle count or weights")
    diff = ens_a.points - ens_b.points
    r = np.sqrt(np.sum(diff * diff, axis=1))
    w = ens_a.weights
    if kind == "w2":
        dist = math.sqrt(float(w @ (r * r)))
    else:
        dist = float(w @ np.minimum(1.0, r))
    n = len(w)
    plan = Coupling(np.arange(n), np.arange(n), w.copy(), (n, n))
    return TransportResult(dist, plan, "identity_upper_bound")


def measure_from_ensemble(ens) -> DiscreteMeasure:
    """Empirical measure of a particle cloud (coincident particles merged)."""
    return DiscreteMeasure.from_points(ens.points, ens.weights)


def brute_force_oracle(mu: DiscreteMeasure, nu: DiscreteMeasure, kind: str = "w2", cap: int = 4) -> float:
    """Exact optimum by enumerating every basic solution of the
    transportation constraints (or every assignment for uniform equal-size
    measures). Exponential; only for supports of at most ``cap`` points."""
    n, m = len(mu), len(nu)
    if n > cap or m > cap:
        raise TooLarge(f"supports of size ({n}, {m}) exceed the cap {cap}")
    C = _cost(mu, nu, kind)
    uniform = (n == m and np.allclose(mu.weights, 1.0 / n, atol=1e-15, rtol=0)
               and np.allclose(nu.weights, 1.0 / m, atol=1e-15, rtol=0))
    if uniform:
        best = min(sum(C[i, s[i]] for i in range(n)) / n for s in itertools.permutations(range(m)))
    else:
        cells = [(i, j) for i in range(n) for j in range(m)]
        rhs = np.concatenate([mu.weights, nu.weights])
        best = np.inf
        for basis in itertools.combinations(range(n * m), n + m - 1):
            A = np.zeros((n + m, n + m - 1))
            for k, e in enumerate(basis):
                i, j = cells[e]
                A[i, k] = 1.0
                A[n + j, k] = 1.0
            x, *_ = np.linalg.lstsq(A, rhs, rcond=None)
            if np.abs(A @ x - rhs).max() > 1e-12 or x.min() < -1e-12:
                continue
            best = min(best, sum(x[k] * C[cells[e]] for k, e in enumerate(basis)))
    best = max(float(best), 0.0)
    return math.sqrt(best) if kind == "w2" else best


def export_plan_csv(plan: Coupling, path) -> None:
    """Sparse triplets (source, target, mass)."""
    with open(path, "w") as fh:
        fh.write("source,target,mass\n")
        for i, j, v in zip(plan.rows, plan.cols, plan.masses):
            fh.write(f"{int(i)},{int(j)},{float(v):.17g}\n")
