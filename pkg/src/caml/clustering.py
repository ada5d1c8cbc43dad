"""K-medoids (PAM: greedy BUILD then best-improvement SWAP) on a precomputed distance matrix."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np

from .divergence import DistanceMatrix


class InvalidKError(ValueError):
    pass


@dataclass(frozen=True)
class MedoidAssignment:
    medoid_indices: tuple
    labels: tuple
    cost: float

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["index", "label", "is_medoid"])
        medoids = set(self.medoid_indices)
        for i, lab in enumerate(self.labels):
            w.writerow([i, lab, int(i in medoids)])
        return buf.getvalue()


def _as_array(D):
    return D.entries if isinstance(D, DistanceMatrix) else np.asarray(D, dtype=float)


def assign(D, medoids):
    """Label every point with its nearest medoid (ties to the lowest medoid index)."""
    D = _as_array(D)
    medoids = list(medoids)
    order = np.argsort(medoids, kind="stable")
    sub = D[:, [medoids[o] for o in order]]
    nearest = order[np.argmin(sub, axis=1)]
    labels = nearest.copy()
    for pos, m in enumerate(medoids):
        labels[m] = pos
    cost = float(D[np.arange(len(D)), [medoids[l] for l in labels]].sum())
    return tuple(int(l) for l in labels), cost


def total_cost(D, medoids) -> float:
    D = _as_array(D)
    return float(D[:, list(medoids)].min(axis=1).sum())


def build(D, k):
    """Greedy BUILD: add the point that lowers total cost most, lowest index on ties."""
    n = len(D)
    medoids = [int(np.argmin(D.sum(axis=1)))]
    nearest = D[:, medoids[0]].copy()
    while len(medoids) < k:
        best, best_cost = -1, np.inf
        for c in range(n):
            if c in medoids:
                continue
            cost = np.minimum(nearest, D[:, c]).sum()
            if cost < best_cost:
                best, best_cost = c, cost
        medoids.append(best)
        nearest = np.minimum(nearest, D[:, best])
    return medoids


def swap(D, medoids, max_iter=1000):
    """Best-improvement SWAP until no medoid/non-medoid exchange lowers the cost."""
    medoids = list(medoids)
    n, k = len(D), len(medoids)
    cost = total_cost(D, medoids)
    history = [cost]
    for _ in range(max_iter):
        best_swap, best_cost = None, cost
        for mi in range(k):
            for c in range(n):
                if c in medoids:
                    continue
                trial = medoids[:mi] + [c] + medoids[mi + 1:]
                tc = total_cost(D, trial)
                # strict improvement with a relative guard against float noise
                if tc < best_cost - 1e-12 * max(1.0, abs(best_cost)):
                    best_swap, best_cost = (mi, c), tc
        if best_swap is None:
            break
        medoids[best_swap[0]] = best_swap[1]
        cost = best_cost
        history.append(cost)
    return medoids, history


def k_medoids(D, k: int, seed: int = 0, restarts: int = 8, return_history=False):
    """Partition around medoids.

    The greedy BUILD start is refined by SWAP; ``restarts`` extra SWAP runs from
    seeded random medoid sets guard against poor local optima. The cheapest
    result wins, with the BUILD run preferred on ties.
    """
    A = _as_array(D)
    n = len(A)
    if not 1 <= k <= n:
        raise InvalidKError(f"k must lie in [1, {n}], got {k}")
    medoids, history = swap(A, build(A, k))
    best_cost = history[-1]
    rng = np.random.default_rng(seed)
    for _ in range(restarts if k < n else 0):
        start = sorted(int(i) for i in rng.choice(n, size=k, replace=False))
        cand, _ = swap(A, start)
        c = total_cost(A, cand)
        if c < best_cost - 1e-12 * max(1.0, abs(best_cost)):
            medoids, best_cost = cand, c
            history.append(c)

    labels, cost = assign(A, medoids)
    result = MedoidAssignment(tuple(int(m) for m in medoids), labels, cost)
    return (result, history) if return_history else result
