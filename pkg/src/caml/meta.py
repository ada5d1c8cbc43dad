"""Cluster-adaptive meta-learning and the baselines it is compared against.

Every learner here produces initial policy parameters (CAML produces a set
of them). ``evaluate`` then measures few-shot fine-tuning from an init on a
held-out entity.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .clustering import MedoidAssignment, k_medoids
from .divergence import DistanceMatrix, pairwise_divergence
from .policy import (
    DEFAULT_LAYOUT,
    PolicyParams,
    TrainConfig,
    Trajectory,
    collect_batch,
    collect_trajectory,
    init_params,
    mean_return,
    reinforce_update,
)


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class MetaConfig:
    n: int = 24
    k: int = 6
    total_iterations: int = 100
    train: TrainConfig = TrainConfig()
    m_samples: int = 100
    normalize_occupancy: bool = True
    weighting: str = "density"
    init_seed: int = 0
    layout: tuple = DEFAULT_LAYOUT

    def __post_init__(self):
        if not self.n >= self.k >= 1:
            raise ConfigError(f"need n >= k >= 1, got n={self.n}, k={self.k}")

    @property
    def K(self):
        return self.train.K

    def theta(self) -> PolicyParams:
        return init_params(self.init_seed, self.layout)


@dataclass
class MedoidPolicySet:
    medoid_policies: list
    medoid_trajectories: list
    assignment: MedoidAssignment
    generation: int = 0
    distances: DistanceMatrix | None = None
    events: list = field(default_factory=list)

    def __post_init__(self):
        if len(self.medoid_policies) != len(self.medoid_trajectories):
            raise ValueError("medoid policies and trajectories must correspond")

    @property
    def k(self):
        return len(self.medoid_policies)


@dataclass
class BanditLog:
    records: list  # (medoid_index, episode_return)
    chosen_index: int
    final_positions: list = field(default_factory=list)

    @property
    def episodes(self):
        return len(self.records)


def adapt_once(params, entity, cfg: TrainConfig, rng):
    """K rollouts, one REINFORCE update, then one trajectory from the updated policy."""
    batch = collect_batch(params, entity, cfg.K, rng, cfg.env)
    new = reinforce_update(params, batch, cfg)
    return new, collect_trajectory(new, entity, rng, cfg.env), mean_return(batch)


def _cluster(policies, trajectories, cfg: MetaConfig, rng, generation, seed):
    D = pairwise_divergence(policies, trajectories, cfg.m_samples, rng,
                            normalize=cfg.normalize_occupancy, weighting=cfg.weighting,
                            ids=list(range(len(policies))))
    a = k_medoids(D, cfg.k, seed=seed)
    return MedoidPolicySet([policies[i] for i in a.medoid_indices],
                           [trajectories[i] for i in a.medoid_indices],
                           a, generation, D)


def caml_train(population, cfg: MetaConfig, rng) -> MedoidPolicySet:
    if not population:
        raise ConfigError("population is empty")
    if cfg.total_iterations < cfg.n:
        raise ConfigError(f"total_iterations ({cfg.total_iterations}) < n ({cfg.n})")
    theta = cfg.theta()
    events = []

    saved_p, saved_t = [], []
    for it in range(cfg.n):
        entity = population[rng.integers(len(population))]
        p, tr, ret = adapt_once(theta, entity, cfg.train, rng)
        saved_p.append(p)
        saved_t.append(tr)
        events.append({"event": "iteration", "iteration": it, "phase": 1,
                       "entity_id": entity.id, "medoid": None, "mean_return": ret})

    medoids = _cluster(saved_p, saved_t, cfg, rng, generation=0, seed=0)
    events.append({"event": "cluster", "iteration": cfg.n - 1, "generation": 0,
                   "cost": medoids.assignment.cost, "pool_size": len(saved_p)})

    saved_p, saved_t = [], []
    for it in range(cfg.n, cfg.total_iterations):
        entity = population[rng.integers(len(population))]
        m = int(rng.integers(medoids.k))
        p, tr, ret = adapt_once(medoids.medoid_policies[m], entity, cfg.train, rng)
        saved_p.append(p)
        saved_t.append(tr)
        events.append({"event": "iteration", "iteration": it, "phase": 2,
                       "entity_id": entity.id, "medoid": m, "mean_return": ret})
        if len(saved_p) == cfg.n:
            # pool = newly adapted policies plus the current medoids
            gen = medoids.generation + 1
            medoids = _cluster(saved_p + medoids.medoid_policies,
                               saved_t + medoids.medoid_trajectories, cfg, rng, gen, seed=gen)
            events.append({"event": "cluster", "iteration": it, "generation": gen,
                           "cost": medoids.assignment.cost, "pool_size": cfg.n + cfg.k})
            saved_p, saved_t = [], []

    medoids.events = events
    return medoids


def bandit_allocation(k, K, rng):
    """Round-robin arm schedule of length K; the remainder goes to distinct random arms."""
    order = [i % k for i in range((K // k) * k)]
    r = K % k
    if r:
        order += sorted(int(i) for i in rng.choice(k, size=r, replace=False))
    return order


def bandit_select(medoids, query_entity, K, rng, env=None):
    """Spend exactly K episodes on the query entity; pick the medoid with the best single episode."""
    if K < 1:
        raise ValueError("K must be >= 1")
    policies = medoids.medoid_policies if isinstance(medoids, MedoidPolicySet) else list(medoids)
    env = env if env is not None else TrainConfig().env
    order = bandit_allocation(len(policies), K, rng)
    returns = {}
    ends = {}
    for arm in range(len(policies)):
        pulls = order.count(arm)
        if pulls:
            batch = collect_batch(policies[arm], query_entity, pulls, rng, env)
            returns[arm] = [tr.total_return for tr in batch]
            ends[arm] = [tr.final_position for tr in batch]
    records, positions, seen = [], [], {a: 0 for a in returns}
    for arm in order:
        records.append((arm, returns[arm][seen[arm]]))
        positions.append(ends[arm][seen[arm]])
        seen[arm] += 1
    best = max(r for _, r in records)
    chosen = min(a for a, r in records if r == best)
    return policies[chosen], BanditLog(records, chosen, positions)


@dataclass
class EvalResult:
    means: list
    stds: list
    final_positions: list  # per update, list of (x, y)

    @property
    def curve(self):
        return self.means


def evaluate_detailed(init, query_entity, cfg: TrainConfig, num_updates, rng) -> EvalResult:
    if num_updates < 0:
        raise ValueError("num_updates must be >= 0")
    params = init
    means, stds, ends = [], [], []
    for u in range(num_updates + 1):
        batch = collect_batch(params, query_entity, cfg.K, rng, cfg.env)
        rets = np.array([tr.total_return for tr in batch])
        means.append(float(rets.mean()))
        stds.append(float(rets.std()))
        ends.append([tr.final_position for tr in batch])
        if u < num_updates:
            params = reinforce_update(params, batch, cfg)
    return EvalResult(means, stds, ends)


def evaluate(init, query_entity, cfg: TrainConfig, num_updates, rng):
    """Mean return of the K-episode batch before each of ``num_updates`` fine-tuning updates, and after the last."""
    return evaluate_detailed(init, query_entity, cfg, num_updates, rng).means


def _interpolate(theta, adapted, epsilon):
    # (1 - e) * a + e * b keeps e = 0 and e = 1 bit-exact
    return PolicyParams.from_flat(theta.layout, (1.0 - epsilon) * theta.flat() + epsilon * adapted.flat())


def reptile_train(population, cfg: MetaConfig, inner_steps, epsilon, rng, init=None) -> PolicyParams:
    if inner_steps <= 1:
        raise ConfigError("Reptile needs more than one inner step")
    theta = cfg.theta() if init is None else init
    for _ in range(cfg.total_iterations):
        entity = population[rng.integers(len(population))]
        adapted = theta
        for _ in range(inner_steps):
            batch = collect_batch(adapted, entity, cfg.K, rng, cfg.train.env)
            adapted = reinforce_update(adapted, batch, cfg.train)
        theta = _interpolate(theta, adapted, epsilon)
    return theta


def joint_pretrain(population, cfg: MetaConfig, rng, init=None) -> PolicyParams:
    """One policy, every episode of every batch on a freshly sampled entity."""
    params = cfg.theta() if init is None else init
    for _ in range(cfg.total_iterations):
        ents = [population[i] for i in rng.integers(len(population), size=cfg.K)]
        batch = collect_batch(params, ents, cfg.K, rng, cfg.train.env)
        params = reinforce_update(params, batch, cfg.train)
    return params


def pretrain_single(entity, cfg: MetaConfig, rng, init=None) -> PolicyParams:
    params = cfg.theta() if init is None else init
    for _ in range(cfg.total_iterations):
        batch = collect_batch(params, entity, cfg.K, rng, cfg.train.env)
        params = reinforce_update(params, batch, cfg.train)
    return params


def random_init(cfg: MetaConfig) -> PolicyParams:
    return cfg.theta()


def with_train(cfg: MetaConfig, **changes) -> MetaConfig:
    return replace(cfg, train=replace(cfg.train, **changes))
