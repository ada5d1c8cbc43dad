"""Occupancy-measure divergence between policies, estimated from observed trajectories.

Each policy is summarized at a state ``s`` by ``pi(.|s) * q_i(s)``, where
``q_i`` is a Gaussian KDE over the states of that policy's trajectory.
Comparison states are drawn from a KDE pooled over all trajectories, and
the per-state Jensen-Shannon terms are summed with the pooled density as
weight.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .policy import forward

MIN_BANDWIDTH = 1e-3
DENSITY_FLOOR = 1e-300


class EmptySupportError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Kde:
    points: np.ndarray
    bandwidth: float

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, 2)
        if not len(pts):
            raise EmptySupportError("KDE needs at least one support point")
        if not (np.isfinite(self.bandwidth) and self.bandwidth > 0):
            raise ValueError(f"bandwidth must be finite and positive, got {self.bandwidth}")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "bandwidth", float(self.bandwidth))


def scott_bandwidth(points) -> float:
    """Scott's rule in 2D, ``n**(-1/6) * sigma``, sigma the root mean per-axis variance."""
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    n = len(pts)
    sigma = np.sqrt(pts.var(axis=0, ddof=1).mean()) if n > 1 else 0.0
    return max(n ** (-1.0 / 6.0) * sigma, MIN_BANDWIDTH)


def fit_kde(states, bandwidth="scott") -> Kde:
    pts = np.asarray(states, dtype=float).reshape(-1, 2)
    if not len(pts):
        raise EmptySupportError("cannot fit a KDE to an empty state set")
    h = scott_bandwidth(pts) if bandwidth == "scott" else float(bandwidth)
    return Kde(pts, h)


def kde_density(kde: Kde, s) -> np.ndarray | float:
    """Mixture of isotropic Gaussians N(s; p, h^2 I). Accepts one state or an (m, 2) array."""
    s = np.asarray(s, dtype=float)
    q = np.atleast_2d(s)
    h2 = kde.bandwidth ** 2
    d2 = ((q[:, None, :] - kde.points[None, :, :]) ** 2).sum(axis=2)
    dens = np.exp(-0.5 * d2 / h2).mean(axis=1) / (2.0 * np.pi * h2)
    return float(dens[0]) if s.ndim == 1 else dens


def kde_sample(kde: Kde, m: int, rng) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    idx = rng.integers(len(kde.points), size=m)
    return kde.points[idx] + kde.bandwidth * rng.standard_normal((m, 2))


def _xlogy_ratio(p, m):
    # p * log(p / m) with 0 log 0 = 0
    out = np.zeros(np.broadcast(p, m).shape)
    mask = p > 0
    pb = np.broadcast_to(p, out.shape)
    mb = np.broadcast_to(m, out.shape)
    # log difference, not log ratio: p / m underflows for subnormal p
    out[mask] = pb[mask] * (np.log(pb[mask]) - np.log(mb[mask]))
    return out


def js_divergence(p, q, normalize=True):
    """KL(p || m) + KL(q || m), m = (p + q) / 2, without the usual halving.

    Works along the last axis, so stacked vectors give stacked results.
    Bounded by 2 ln 2 when the inputs are normalized.
    """
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    if (p < 0).any() or (q < 0).any():
        raise ValueError("divergence inputs must be nonnegative")
    if normalize:
        p = p / p.sum(axis=-1, keepdims=True)
        q = q / q.sum(axis=-1, keepdims=True)
    m = 0.5 * (p + q)
    d = (_xlogy_ratio(p, m) + _xlogy_ratio(q, m)).sum(axis=-1)
    return float(d) if d.ndim == 0 else d


@dataclass(frozen=True, eq=False)
class DistanceMatrix:
    ids: tuple
    entries: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=float)
        n = len(self.ids)
        if e.shape != (n, n):
            raise ValueError(f"entries shape {e.shape} does not match {n} ids")
        if not np.array_equal(e, e.T):
            raise ValueError("distance matrix must be symmetric")
        if np.any(np.diag(e) != 0) or np.any(e < 0):
            raise ValueError("distance matrix needs zero diagonal and nonnegative entries")
        object.__setattr__(self, "ids", tuple(int(i) for i in self.ids))
        object.__setattr__(self, "entries", e)

    @property
    def n(self):
        return len(self.ids)

    def to_csv(self) -> str:
        order = np.argsort(self.ids, kind="stable")
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["id"] + [str(self.ids[i]) for i in order])
        for i in order:
            w.writerow([str(self.ids[i])] + [repr(float(self.entries[i, j])) for j in order])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text):
        rows = list(csv.reader(io.StringIO(text)))
        ids = [int(x) for x in rows[0][1:]]
        entries = np.array([[float(x) for x in r[1:]] for r in rows[1:]])
        return cls(tuple(ids), entries)


def occupancy_vectors(policies, kdes, states):
    """(num_policies, m, 4) array of pi_i(.|s) * q_i(s) over the given states."""
    out = []
    for pol, kde in zip(policies, kdes):
        dens = np.maximum(kde_density(kde, states), DENSITY_FLOOR)
        out.append(forward(pol, states) * dens[:, None])
    return np.stack(out)


def pooled_kde(trajectories, bandwidth="scott") -> Kde:
    """KDE over all trajectory states, support sorted so the input order does not matter."""
    pts = np.concatenate([tr.states for tr in trajectories])
    pts = pts[np.lexsort((pts[:, 1], pts[:, 0]))]
    return fit_kde(pts, bandwidth)


def pairwise_divergence(policies, trajectories, m_samples=100, rng=None, *, normalize=True,
                        weighting="density", bandwidth="scott", ids=None, states=None) -> DistanceMatrix:
    """Divergence between every pair of policies, each paired with its own trajectory.

    ``weighting="density"`` weights every sampled state by the pooled density
    on top of sampling from it. ``"uniform"`` averages over samples instead,
    which is the plain Monte-Carlo expectation. Passing ``states`` skips the
    sampling step and compares at those states.
    """
    if len(policies) != len(trajectories):
        raise ValueError(f"{len(policies)} policies but {len(trajectories)} trajectories")
    if m_samples < 1:
        raise ValueError("m_samples must be >= 1")
    if weighting not in ("density", "uniform"):
        raise ValueError(f"unknown weighting {weighting!r}")
    n = len(policies)
    if rng is None:
        rng = np.random.default_rng(0)
    if ids is None:
        ids = [getattr(t, "entity_id", i) for i, t in enumerate(trajectories)]
        if len(set(ids)) != n:
            ids = list(range(n))

    kdes = [fit_kde(tr.states, bandwidth) for tr in trajectories]
    pooled = pooled_kde(trajectories, bandwidth)
    samples = kde_sample(pooled, m_samples, rng) if states is None else np.asarray(states, float).reshape(-1, 2)
    if weighting == "density":
        w = kde_density(pooled, samples)
    else:
        w = np.full(len(samples), 1.0 / len(samples))
    rho = occupancy_vectors(policies, kdes, samples)

    D = np.zeros((n, n))
    for i in range(n):
        for j in range(i + 1, n):
            d = float(js_divergence(rho[i], rho[j], normalize) @ w)
            D[i, j] = D[j, i] = max(d, 0.0)
    return DistanceMatrix(tuple(ids), D)
