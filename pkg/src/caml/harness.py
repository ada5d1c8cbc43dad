"""Experiment runners and the file-producing commands behind the CLI.

Every random stream is derived from explicit integers, so the same config
and seeds always reproduce byte-identical outputs.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import logging
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from sklearn.metrics import adjusted_rand_score

from . import __version__
from .clustering import k_medoids
from .config import LEARNERS, ExperimentConfig
from .divergence import pairwise_divergence
from .env import ACTION_NAMES, dumps_population, load_population, make_population, make_query_types
from .meta import (
    ConfigError,
    bandit_select,
    caml_train,
    evaluate_detailed,
    joint_pretrain,
    pretrain_single,
    random_init,
    reptile_train,
)
from .policy import (
    collect_batch,
    collect_trajectory,
    dumps_checkpoint,
    init_params,
    load_checkpoint,
    reinforce_update,
)

log = logging.getLogger(__name__)

# independent random streams, combined with the run seed
STREAM_TRAIN, STREAM_EVAL, STREAM_BANDIT, STREAM_STUDY, STREAM_STUDY_SAMPLES = 1, 2, 3, 4, 5


def rng_for(seed, *stream):
    return np.random.default_rng([int(seed), *(int(s) for s in stream)])


def sha256_bytes(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def sha256_file(path) -> str:
    return sha256_bytes(Path(path).read_bytes())


def write_atomic(path, text: str):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])
    return buf.getvalue()


class Manifest:
    """JSON-lines run record: header, metric lines, then the hashed list of output files."""

    def __init__(self, command, cfg: ExperimentConfig, out_dir, **header):
        self.out_dir = Path(out_dir)
        self.lines = [{"kind": "header", "command": command, "tool_version": __version__,
                       "config": cfg.to_dict(), **header}]
        self.files = {}

    def metric(self, **fields):
        self.lines.append({"kind": "metric", **fields})

    def write_file(self, relpath, text):
        write_atomic(self.out_dir / relpath, text)
        self.files[str(relpath)] = sha256_bytes(text.encode())

    def dumps(self):
        lines = self.lines + [{"kind": "files", "files": dict(sorted(self.files.items()))}]
        return "".join(json.dumps(l, sort_keys=True) + "\n" for l in lines)

    def save(self, name):
        path = self.out_dir / name
        write_atomic(path, self.dumps())
        return path


def read_manifest(path):
    return [json.loads(line) for line in Path(path).read_text().splitlines() if line.strip()]


# -- population ---------------------------------------------------------------

def build_population(cfg: ExperimentConfig):
    p = cfg.population
    return make_population(p.num_latent, p.variants_per_latent, p.variance_magnitude, p.seed,
                           pure_first_variant=p.pure_first_variant)


def build_queries(population, cfg: ExperimentConfig):
    e = cfg.evaluation
    return make_query_types(population, e.num_query, e.split, cfg.population.variance_magnitude,
                            e.query_seed)


def population_table(population) -> str:
    lines = ["  id  group  remap (l,r,d,u -> moves)        offsets"]
    for e in population:
        moves = ",".join(ACTION_NAMES[r][0] for r in e.remap)
        offs = " ".join(f"{o:+.3f}" for o in e.offsets)
        lines.append(f"{e.id:4d}  {e.latent_group:5d}  {moves:<30s} {offs}")
    return "\n".join(lines)


# -- divergence study ---------------------------------------------------------

def intra_inter(D, groups):
    groups = np.asarray(groups)
    same = groups[:, None] == groups[None, :]
    off = ~np.eye(len(groups), dtype=bool)
    intra = float(D[same & off].mean()) if (same & off).any() else 0.0
    inter = float(D[~same].mean()) if (~same).any() else 0.0
    return intra, inter


@dataclass
class StudyCheckpoint:
    update: int
    distances: object
    assignment: object
    mean_intra: float
    mean_inter: float
    ari: float

    @property
    def ratio(self):
        return self.mean_intra / self.mean_inter if self.mean_inter > 0 else float("inf")


def divergence_study(population, cfg: ExperimentConfig, seed=None):
    """Train one VPG policy per entity from a shared init; cluster them at every checkpoint."""
    spec = cfg.divergence_study
    seed = spec.seed if seed is None else seed
    train = cfg.train
    theta = init_params([cfg.meta.init_seed, seed], cfg.meta.layout)
    policies = [theta] * len(population)
    rngs = [rng_for(seed, STREAM_STUDY, e.id) for e in population]
    groups = [e.latent_group for e in population]
    k = min(spec.k, len(population))
    checkpoints = []
    for u in range(1, spec.num_updates + 1):
        for i, e in enumerate(population):
            batch = collect_batch(policies[i], e, train.K, rngs[i], train.env)
            policies[i] = reinforce_update(policies[i], batch, train)
        if u % spec.checkpoint_every:
            continue
        trajs = [collect_trajectory(p, e, rngs[i], train.env)
                 for i, (p, e) in enumerate(zip(policies, population))]
        D = pairwise_divergence(policies, trajs, spec.m_samples, rng_for(seed, STREAM_STUDY_SAMPLES, u),
                                normalize=cfg.meta.normalize_occupancy, weighting=cfg.meta.weighting,
                                ids=[e.id for e in population])
        a = k_medoids(D, k, seed=seed)
        intra, inter = intra_inter(D.entries, groups)
        ari = float(adjusted_rand_score(groups, a.labels))
        log.info("update %d: intra %.4g inter %.4g ari %.3f", u, intra, inter, ari)
        checkpoints.append(StudyCheckpoint(u, D, a, intra, inter, ari))
    return checkpoints


# -- learners -----------------------------------------------------------------

def seeded_meta(cfg: ExperimentConfig, seed):
    m = cfg.meta_config()
    return dataclasses.replace(m, init_seed=(cfg.meta.init_seed, int(seed)))


def unmatched_entity(population, query):
    for e in population:
        if e.latent_group != query.latent_group:
            return e
    return population[0]


def train_learner(name, population, queries, cfg: ExperimentConfig, seed):
    """Returns (policies, metrics). Per-query learners return one policy per query type."""
    if name not in LEARNERS:
        raise ConfigError(f"unknown learner {name!r}; valid: {', '.join(LEARNERS)}")
    mcfg = seeded_meta(cfg, seed)
    lid = LEARNERS.index(name)
    metrics = []
    if name == "caml":
        ms = caml_train(population, mcfg, rng_for(seed, STREAM_TRAIN, lid))
        metrics = ms.events
        return list(ms.medoid_policies), metrics
    if name == "reptile":
        return [reptile_train(population, mcfg, cfg.reptile.inner_steps, cfg.reptile.epsilon,
                              rng_for(seed, STREAM_TRAIN, lid))], metrics
    if name == "joint":
        return [joint_pretrain(population, mcfg, rng_for(seed, STREAM_TRAIN, lid))], metrics
    if name == "random":
        return [random_init(mcfg)], metrics
    out = []
    for qi, q in enumerate(queries):
        target = q if name == "pretrain-matched" else unmatched_entity(population, q)
        out.append(pretrain_single(target, mcfg, rng_for(seed, STREAM_TRAIN, lid, qi)))
        metrics.append({"event": "pretrain", "query_type": q.id, "entity_id": target.id})
    return out, metrics


@dataclass
class LearnerEval:
    learner: str
    query_type: int
    seed: int
    means: list
    stds: list
    final_positions: list
    bandit: object = None


def evaluate_learner(name, policies, queries, cfg: ExperimentConfig, seed):
    results = []
    for qi, q in enumerate(queries):
        bandit_log = None
        if name == "caml":
            init, bandit_log = bandit_select(policies, q, cfg.train.K, rng_for(seed, STREAM_BANDIT, qi),
                                             cfg.train.env)
        elif name in ("pretrain-matched", "pretrain-unmatched"):
            init = policies[qi]
        else:
            init = policies[0]
        # every learner sees the same evaluation stream for a given (seed, query)
        r = evaluate_detailed(init, q, cfg.train, cfg.evaluation.num_updates, rng_for(seed, STREAM_EVAL, qi))
        results.append(LearnerEval(name, q.id, int(seed), r.means, r.stds, r.final_positions, bandit_log))
    return results


def run_comparison(population, queries, cfg: ExperimentConfig, seeds=None, learners=None):
    """Train and evaluate every learner in memory; returns {learner: [LearnerEval, ...]}."""
    seeds = cfg.evaluation.seeds if seeds is None else seeds
    learners = cfg.learners if learners is None else learners
    out = {name: [] for name in learners}
    for seed in seeds:
        for name in learners:
            policies, _ = train_learner(name, population, queries, cfg, seed)
            out[name] += evaluate_learner(name, policies, queries, cfg, seed)
    return out


def curve_rows(evals):
    for ev in evals:
        for u, (m, s) in enumerate(zip(ev.means, ev.stds)):
            yield [ev.learner, ev.query_type, ev.seed, u, m, s]


def endpoint_rows(evals):
    for ev in evals:
        for u, ends in enumerate(ev.final_positions):
            for j, (x, y) in enumerate(ends):
                yield [ev.learner, ev.query_type, ev.seed, u, j, x, y]


def bandit_rows(evals):
    for ev in evals:
        if ev.bandit is None:
            continue
        for r, (arm, ret) in enumerate(ev.bandit.records):
            yield [ev.query_type, ev.seed, r, arm, ret, int(arm == ev.bandit.chosen_index)]


# -- commands -----------------------------------------------------------------

def _population_path(cfg, out_dir, population_path=None):
    return Path(population_path) if population_path else Path(out_dir) / "population.json"


def _load_population(cfg, out_dir, population_path=None):
    path = _population_path(cfg, out_dir, population_path)
    population, _, _ = load_population(path)
    return population, sha256_file(path)


def cmd_gen_population(cfg: ExperimentConfig, out_dir, echo=print):
    population = build_population(cfg)  # validates before anything is written
    out_dir = Path(out_dir)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create output directory {out_dir}: {exc}") from exc
    text = dumps_population(population, cfg.population.seed,
                            meta=dataclasses.asdict(cfg.population))
    m = Manifest("gen-population", cfg, out_dir, population_sha256=sha256_bytes(text.encode()))
    try:
        m.write_file("population.json", text)
    except OSError as exc:
        raise OSError(f"cannot write population file under {out_dir}: {exc}") from exc
    m.write_file("population_summary.csv", csv_text(
        ["id", "latent_group", "remap", "offset_left", "offset_right", "offset_down", "offset_up"],
        ([e.id, e.latent_group, "-".join(str(r) for r in e.remap), *map(float, e.offsets)]
         for e in population)))
    m.metric(entities=len(population), groups=len({e.latent_group for e in population}))
    m.save("manifest_gen-population.jsonl")
    if echo:
        echo(population_table(population))
    return out_dir / "population.json"


def cmd_divergence_study(cfg: ExperimentConfig, out_dir, population_path=None):
    population, pop_hash = _load_population(cfg, out_dir, population_path)
    spec = cfg.divergence_study
    m = Manifest("divergence-study", cfg, out_dir, population_sha256=pop_hash, seeds=[spec.seed])
    summary = []
    for cp in divergence_study(population, cfg):
        tag = f"u{cp.update:03d}"
        m.write_file(f"divergence/distances_{tag}.csv", cp.distances.to_csv())
        m.write_file(f"divergence/assignment_{tag}.csv", cp.assignment.to_csv())
        summary.append([cp.update, cp.mean_intra, cp.mean_inter, cp.ratio, cp.ari])
        m.metric(update=cp.update, mean_intra=cp.mean_intra, mean_inter=cp.mean_inter,
                 ari=cp.ari, medoids=[int(i) for i in cp.assignment.medoid_indices],
                 cost=cp.assignment.cost)
    m.write_file("divergence/summary.csv",
                 csv_text(["update", "mean_intra", "mean_inter", "ratio", "ari"], summary))
    return m.save("manifest_divergence-study.jsonl")


def checkpoint_path(out_dir, learner, seed):
    return Path(out_dir) / "checkpoints" / f"{learner}_seed{seed}.json"


def cmd_train(cfg: ExperimentConfig, learner, out_dir, population_path=None):
    if learner not in LEARNERS:
        raise ConfigError(f"unknown learner {learner!r}; valid: {', '.join(LEARNERS)}")
    population, pop_hash = _load_population(cfg, out_dir, population_path)
    queries = build_queries(population, cfg)
    seeds = list(cfg.evaluation.seeds)
    m = Manifest("train", cfg, out_dir, learner=learner, population_sha256=pop_hash, seeds=seeds,
                 query_types=[q.id for q in queries])
    for seed in seeds:
        policies, metrics = train_learner(learner, population, queries, cfg, seed)
        for row in metrics:
            m.metric(seed=seed, **row)
        meta = {"learner": learner, "seed": seed, "query_types": [q.id for q in queries]}
        rel = checkpoint_path("", learner, seed)
        m.write_file(rel, dumps_checkpoint(policies, meta))
    return m.save(f"manifest_train_{learner}.jsonl")


def cmd_evaluate(cfg: ExperimentConfig, out_dir, learners=None, population_path=None):
    learners = list(cfg.learners if learners is None else learners)
    population, pop_hash = _load_population(cfg, out_dir, population_path)
    queries = build_queries(population, cfg)
    seeds = list(cfg.evaluation.seeds)
    for name in learners:
        if name not in LEARNERS:
            raise ConfigError(f"unknown learner {name!r}; valid: {', '.join(LEARNERS)}")
        for seed in seeds:
            if not checkpoint_path(out_dir, name, seed).exists():
                raise FileNotFoundError(
                    f"missing checkpoint for learner {name!r} (seed {seed}): "
                    f"{checkpoint_path(out_dir, name, seed)}; run `caml train --learner {name}` first")
    m = Manifest("evaluate", cfg, out_dir, population_sha256=pop_hash, seeds=seeds,
                 learners=learners, query_types=[q.id for q in queries])
    evals = []
    for seed in seeds:
        for name in learners:
            path = checkpoint_path(out_dir, name, seed)
            policies, _ = load_checkpoint(path)
            m.metric(seed=seed, learner=name, checkpoint_sha256=sha256_file(path))
            evals += evaluate_learner(name, policies, queries, cfg, seed)
    m.write_file("curves.csv", csv_text(["learner", "query_type", "seed", "update", "mean_return", "std_return"],
                                        curve_rows(evals)))
    m.write_file("endpoints.csv", csv_text(["learner", "query_type", "seed", "update", "episode", "x", "y"],
                                           endpoint_rows(evals)))
    m.write_file("bandit.csv", csv_text(["query_type", "seed", "rollout", "medoid_index", "episode_return", "chosen"],
                                        bandit_rows(evals)))
    return m.save("manifest_evaluate.jsonl")
