"""Experiment configuration: nested dataclasses loaded from a single JSON file."""
from __future__ import annotations

import dataclasses
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

from .meta import ConfigError, MetaConfig
from .policy import DEFAULT_LAYOUT, TrainConfig

LEARNERS = ("caml", "reptile", "joint", "pretrain-matched", "pretrain-unmatched", "random")


@dataclass(frozen=True)
class PopulationSpec:
    num_latent: int = 6
    variants_per_latent: int = 4
    variance_magnitude: float = 0.5
    seed: int = 0
    pure_first_variant: bool = False


@dataclass(frozen=True)
class MetaSpec:
    n: int = 24
    k: int = 6
    total_iterations: int = 100
    m_samples: int = 100
    normalize_occupancy: bool = True
    weighting: str = "density"
    init_seed: int = 0
    layout: tuple = DEFAULT_LAYOUT


@dataclass(frozen=True)
class ReptileSpec:
    inner_steps: int = 5
    epsilon: float = 0.1


@dataclass(frozen=True)
class DivergenceStudySpec:
    num_updates: int = 40
    checkpoint_every: int = 10
    k: int = 6
    m_samples: int = 100
    seed: int = 0


@dataclass(frozen=True)
class EvaluationSpec:
    split: str = "unseen-variant"
    num_query: int = 3
    query_seed: int = 0
    num_updates: int = 5
    seeds: tuple = (0, 1, 2, 3, 4)


@dataclass(frozen=True)
class ExperimentConfig:
    population: PopulationSpec = PopulationSpec()
    train: TrainConfig = TrainConfig()
    meta: MetaSpec = MetaSpec()
    reptile: ReptileSpec = ReptileSpec()
    divergence_study: DivergenceStudySpec = DivergenceStudySpec()
    evaluation: EvaluationSpec = EvaluationSpec()
    learners: tuple = LEARNERS
    out: str = "runs/default"

    def __post_init__(self):
        ds = self.divergence_study
        if ds.checkpoint_every < 1 or ds.num_updates % ds.checkpoint_every:
            raise ConfigError("divergence_study.checkpoint_every must divide num_updates")
        unknown = [l for l in self.learners if l not in LEARNERS]
        if unknown:
            raise ConfigError(f"unknown learners {unknown}; valid: {', '.join(LEARNERS)}")
        if not self.evaluation.seeds:
            raise ConfigError("evaluation.seeds must list at least one seed")
        if self.meta.total_iterations < self.meta.n:
            raise ConfigError("meta.total_iterations must be >= meta.n")
        self.meta_config()  # validates n >= k

    def meta_config(self) -> MetaConfig:
        m = self.meta
        return MetaConfig(n=m.n, k=m.k, total_iterations=m.total_iterations, train=self.train,
                          m_samples=m.m_samples, normalize_occupancy=m.normalize_occupancy,
                          weighting=m.weighting, init_seed=m.init_seed, layout=tuple(m.layout))

    def to_dict(self):
        return json.loads(json.dumps(asdict(self)))


_SECTIONS = {
    "population": PopulationSpec,
    "train": TrainConfig,
    "meta": MetaSpec,
    "reptile": ReptileSpec,
    "divergence_study": DivergenceStudySpec,
    "evaluation": EvaluationSpec,
}


def _build(cls, data, where):
    if not isinstance(data, dict):
        raise ConfigError(f"{where} must be an object")
    names = {f.name for f in dataclasses.fields(cls)}
    extra = set(data) - names
    if extra:
        raise ConfigError(f"unknown keys in {where}: {sorted(extra)}")
    kwargs = {k: tuple(v) if isinstance(v, list) else v for k, v in data.items()}
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {where}: {exc}") from exc


def config_from_dict(data) -> ExperimentConfig:
    data = dict(data or {})
    extra = set(data) - set(_SECTIONS) - {"learners", "out"}
    if extra:
        raise ConfigError(f"unknown top-level keys: {sorted(extra)}")
    kwargs = {name: _build(cls, data[name], name) for name, cls in _SECTIONS.items() if name in data}
    if "learners" in data:
        kwargs["learners"] = tuple(data["learners"])
    if "out" in data:
        kwargs["out"] = str(data["out"])
    return ExperimentConfig(**kwargs)


def load_config(path=None) -> ExperimentConfig:
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc})") from exc
    return config_from_dict(data)


def with_seed(cfg: ExperimentConfig, seed: int) -> ExperimentConfig:
    """Apply a ``--seed`` override to every seeded section."""
    return dataclasses.replace(
        cfg,
        population=dataclasses.replace(cfg.population, seed=seed),
        divergence_study=dataclasses.replace(cfg.divergence_study, seed=seed),
        evaluation=dataclasses.replace(cfg.evaluation, seeds=(seed,)),
    )
