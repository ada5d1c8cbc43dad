"""Personalized 2D particle navigation.

A particle starts at the origin and is steered toward a goal by four discrete
commands. Each entity type answers those commands differently: the cardinal
directions are permuted, and then a fixed offset is added on the axis the
remapped direction does not move along.
"""
from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LEFT, RIGHT, DOWN, UP = 0, 1, 2, 3
ACTION_NAMES = ("left", "right", "down", "up")
NUM_ACTIONS = 4

# index order left, right, down, up
_CANONICAL = ((-1.0, 0.0), (1.0, 0.0), (0.0, -1.0), (0.0, 1.0))
ALL_PERMUTATIONS = tuple(itertools.permutations(range(NUM_ACTIONS)))


class InvalidPopulationError(ValueError):
    pass


class EpisodeFinishedError(RuntimeError):
    pass


@dataclass(frozen=True)
class Vec2:
    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"non-finite Vec2 ({self.x}, {self.y})")

    def as_tuple(self):
        return (self.x, self.y)


def canonical_actions():
    return [Vec2(x, y) for x, y in _CANONICAL]


@dataclass(frozen=True)
class EntityType:
    """One personalized transition dynamic.

    ``remap[a]`` is the index of the canonical vector that command ``a``
    actually moves along; ``offsets[a]`` is added to the other coordinate.
    """

    id: int
    latent_group: int
    remap: tuple
    offsets: tuple

    def __post_init__(self):
        remap = tuple(int(r) for r in self.remap)
        offsets = tuple(float(o) for o in self.offsets)
        if sorted(remap) != list(range(NUM_ACTIONS)):
            raise InvalidPopulationError(f"remap {remap} is not a permutation of 0..3")
        if len(offsets) != NUM_ACTIONS or any(not abs(o) < 1.0 for o in offsets):
            raise InvalidPopulationError(f"offsets {offsets} must be 4 values with |o| < 1")
        object.__setattr__(self, "remap", remap)
        object.__setattr__(self, "offsets", offsets)

    def displacement_table(self) -> np.ndarray:
        """(4, 2) array of actual displacements, row per commanded action."""
        table = np.empty((NUM_ACTIONS, 2))
        for a in range(NUM_ACTIONS):
            v = apply_personalization(self, a)
            table[a] = (v.x, v.y)
        return table


def identity_entity(id: int = 0) -> EntityType:
    return EntityType(id=id, latent_group=0, remap=(0, 1, 2, 3), offsets=(0.0,) * 4)


def apply_personalization(entity: EntityType, a: int) -> Vec2:
    if not 0 <= a < NUM_ACTIONS:
        raise ValueError(f"action index {a} out of range")
    bx, by = _CANONICAL[entity.remap[a]]
    off = entity.offsets[a]
    # perturb only the zero coordinate so the cardinal direction is kept
    if bx == 0.0:
        return Vec2(off, by)
    return Vec2(bx, off)


def make_population(num_latent, variants_per_latent, variance_magnitude=0.5, seed=0,
                    force_identity=False, pure_first_variant=False):
    """Sample ``num_latent`` distinct remaps and ``variants_per_latent`` offset draws each.

    With ``pure_first_variant`` the first variant of every group keeps zero
    offsets. With ``force_identity`` the first group uses the identity permutation.
    """
    if not 1 <= num_latent <= len(ALL_PERMUTATIONS):
        raise InvalidPopulationError(
            f"num_latent must be in [1, {len(ALL_PERMUTATIONS)}], got {num_latent}")
    if variants_per_latent < 1:
        raise InvalidPopulationError("variants_per_latent must be >= 1")
    if not 0.0 <= variance_magnitude < 1.0:
        raise InvalidPopulationError("variance_magnitude must lie in [0, 1)")

    rng = np.random.default_rng(seed)
    if force_identity:
        rest = rng.choice(np.arange(1, len(ALL_PERMUTATIONS)), size=num_latent - 1, replace=False)
        perm_ids = [0] + [int(i) for i in rest]
    else:
        perm_ids = [int(i) for i in rng.choice(len(ALL_PERMUTATIONS), size=num_latent, replace=False)]

    population = []
    for g, pid in enumerate(perm_ids):
        for v in range(variants_per_latent):
            if v == 0 and pure_first_variant:
                offsets = (0.0,) * NUM_ACTIONS
            else:
                offsets = tuple(float(o) for o in
                                rng.uniform(-variance_magnitude, variance_magnitude, NUM_ACTIONS))
            population.append(EntityType(id=len(population), latent_group=g,
                                         remap=ALL_PERMUTATIONS[pid], offsets=offsets))
    return population


def make_query_types(population, num_query=3, split="unseen-latent", variance_magnitude=0.5,
                     seed=0):
    """Held-out entity types for evaluation, ids continuing after the population's.

    ``unseen-latent`` draws remaps no population member uses; ``unseen-variant``
    reuses population remaps (cycling through its groups) with fresh offsets.
    """
    rng = np.random.default_rng(seed)
    next_id = max(e.id for e in population) + 1
    groups = {}
    for e in population:
        groups.setdefault(e.latent_group, e.remap)
    next_group = max(groups) + 1
    if split == "unseen-latent":
        used = set(groups.values())
        free = [p for p in ALL_PERMUTATIONS if p not in used]
        if num_query > len(free):
            raise InvalidPopulationError(f"only {len(free)} unused remaps left for {num_query} query types")
        picks = rng.choice(len(free), size=num_query, replace=False)
        specs = [(next_group + i, free[int(j)]) for i, j in enumerate(picks)]
    elif split == "unseen-variant":
        keys = sorted(groups)
        specs = [(keys[i % len(keys)], groups[keys[i % len(keys)]]) for i in range(num_query)]
    else:
        raise ValueError(f"unknown query split {split!r}")
    out = []
    for i, (g, remap) in enumerate(specs):
        offsets = rng.uniform(-variance_magnitude, variance_magnitude, NUM_ACTIONS)
        out.append(EntityType(id=next_id + i, latent_group=g, remap=remap, offsets=tuple(offsets)))
    return out


@dataclass(frozen=True)
class EnvConfig:
    goal: tuple = (1.0, 1.0)
    horizon: int = 100
    goal_radius: float = 0.01
    step_scale: float = 1.0


@dataclass(frozen=True)
class EnvState:
    position: Vec2
    step: int = 0
    done: bool = False


@dataclass(frozen=True)
class StepResult:
    next_state: EnvState
    reward: float
    done: bool


def reset(entity: EntityType | None = None) -> EnvState:
    return EnvState(position=Vec2(0.0, 0.0), step=0)


def squared_goal_distance(x, y, goal):
    # shared with the vectorised rollout so scalar and batch paths agree bitwise
    dx = x - goal[0]
    dy = y - goal[1]
    return dx * dx + dy * dy


def step(state: EnvState, a: int, entity: EntityType, config: EnvConfig = EnvConfig()) -> StepResult:
    if state.done or state.step >= config.horizon:
        raise EpisodeFinishedError(f"episode already finished at step {state.step}")
    move = apply_personalization(entity, a)
    x = state.position.x + config.step_scale * move.x
    y = state.position.y + config.step_scale * move.y
    d2 = squared_goal_distance(x, y, config.goal)
    t = state.step + 1
    done = bool(d2 < config.goal_radius * config.goal_radius or t >= config.horizon)
    return StepResult(EnvState(Vec2(x, y), t, done), -d2, done)


# -- serialization -----------------------------------------------------------

POPULATION_FORMAT = "caml-population"


def population_to_dict(population, seed=None, meta=None):
    return {
        "format": POPULATION_FORMAT,
        "version": 1,
        "seed": seed,
        "meta": meta or {},
        "entities": [
            {"id": e.id, "latent_group": e.latent_group,
             "remap": list(e.remap), "offsets": list(e.offsets)}
            for e in population
        ],
    }


def population_from_dict(d):
    if d.get("format") != POPULATION_FORMAT:
        raise ValueError(f"not a population file (format={d.get('format')!r})")
    return [EntityType(id=int(e["id"]), latent_group=int(e["latent_group"]),
                       remap=tuple(e["remap"]), offsets=tuple(e["offsets"]))
            for e in d["entities"]]


def dumps_population(population, seed=None, meta=None) -> str:
    # json writes floats with repr, which round-trips exactly
    return json.dumps(population_to_dict(population, seed, meta), indent=2, sort_keys=True) + "\n"


def save_population(path, population, seed=None, meta=None):
    Path(path).write_text(dumps_population(population, seed, meta))


def load_population(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"population file not found: {path}")
    d = json.loads(path.read_text())
    return population_from_dict(d), d.get("seed"), d.get("meta", {})
