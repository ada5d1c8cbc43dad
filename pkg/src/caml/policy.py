"""Feed-forward softmax policy and vanilla policy gradient (REINFORCE)."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .env import NUM_ACTIONS, EntityType, EnvConfig, squared_goal_distance

DEFAULT_LAYOUT = (2, 32, 32, 4)


@dataclass(frozen=True, eq=False)
class PolicyParams:
    """Weights ``W[l]`` of shape (fan_in, fan_out) and biases ``b[l]``; tanh between layers."""

    weights: tuple
    biases: tuple

    def __post_init__(self):
        ws = tuple(np.asarray(w, dtype=float) for w in self.weights)
        bs = tuple(np.asarray(b, dtype=float) for b in self.biases)
        if len(ws) != len(bs) or not ws:
            raise ValueError("need one bias vector per weight matrix")
        for i, (w, b) in enumerate(zip(ws, bs)):
            if w.ndim != 2 or b.shape != (w.shape[1],):
                raise ValueError(f"layer {i}: inconsistent shapes {w.shape} / {b.shape}")
            if i and ws[i - 1].shape[1] != w.shape[0]:
                raise ValueError(f"layer {i} fan_in does not match previous fan_out")
        if ws[0].shape[0] != 2 or ws[-1].shape[1] != NUM_ACTIONS:
            raise ValueError("layout must start at 2 inputs and end at 4 logits")
        for a in ws + bs:
            a.setflags(write=False)
        object.__setattr__(self, "weights", ws)
        object.__setattr__(self, "biases", bs)

    @property
    def layout(self):
        return (self.weights[0].shape[0],) + tuple(w.shape[1] for w in self.weights)

    def flat(self) -> np.ndarray:
        parts = []
        for w, b in zip(self.weights, self.biases):
            parts += [w.ravel(), b]
        return np.concatenate(parts)

    @classmethod
    def from_flat(cls, layout, vec):
        vec = np.asarray(vec, dtype=float)
        ws, bs, i = [], [], 0
        for fan_in, fan_out in zip(layout[:-1], layout[1:]):
            ws.append(vec[i:i + fan_in * fan_out].reshape(fan_in, fan_out))
            i += fan_in * fan_out
            bs.append(vec[i:i + fan_out].copy())
            i += fan_out
        if i != vec.size:
            raise ValueError(f"flat vector has {vec.size} entries, layout needs {i}")
        return cls(tuple(ws), tuple(bs))

    def __eq__(self, other):
        if not isinstance(other, PolicyParams) or self.layout != other.layout:
            return NotImplemented if not isinstance(other, PolicyParams) else False
        return bool(np.array_equal(self.flat(), other.flat()))

    __hash__ = None


def init_params(seed: int, layout=DEFAULT_LAYOUT) -> PolicyParams:
    layout = tuple(layout)
    if len(layout) < 2 or layout[0] != 2 or layout[-1] != NUM_ACTIONS:
        raise ValueError(f"layout must start at 2 and end at {NUM_ACTIONS}, got {layout}")
    rng = np.random.default_rng(seed)
    ws, bs = [], []
    for fan_in, fan_out in zip(layout[:-1], layout[1:]):
        limit = 1.0 / np.sqrt(fan_in)
        ws.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        bs.append(np.zeros(fan_out))
    return PolicyParams(tuple(ws), tuple(bs))


def zero_params(layout=DEFAULT_LAYOUT) -> PolicyParams:
    return PolicyParams.from_flat(layout, np.zeros(sum((i + 1) * o for i, o in zip(layout[:-1], layout[1:]))))


def _hidden(params, X):
    acts = [X]
    h = X
    for w, b in zip(params.weights[:-1], params.biases[:-1]):
        h = np.tanh(h @ w + b)
        acts.append(h)
    return acts


def logits(params: PolicyParams, states) -> np.ndarray:
    X = np.atleast_2d(np.asarray(states, dtype=float))
    h = _hidden(params, X)[-1]
    return h @ params.weights[-1] + params.biases[-1]


def softmax(z):
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def forward(params: PolicyParams, s) -> np.ndarray:
    """Action probabilities for one state (shape (4,)) or a batch (shape (n, 4))."""
    s = np.asarray(s, dtype=float)
    p = softmax(logits(params, s))
    return p[0] if s.ndim == 1 else p


def log_prob_grad(params: PolicyParams, states, actions, weights) -> np.ndarray:
    """Flat gradient of sum_n weights[n] * log pi(actions[n] | states[n])."""
    X = np.atleast_2d(np.asarray(states, dtype=float))
    actions = np.asarray(actions, dtype=int)
    weights = np.asarray(weights, dtype=float)
    acts = _hidden(params, X)
    z = acts[-1] @ params.weights[-1] + params.biases[-1]
    p = softmax(z)
    delta = -p
    delta[np.arange(len(actions)), actions] += 1.0
    delta *= weights[:, None]

    gw, gb = [None] * len(params.weights), [None] * len(params.weights)
    for l in range(len(params.weights) - 1, -1, -1):
        gw[l] = acts[l].T @ delta
        gb[l] = delta.sum(axis=0)
        if l:
            delta = (delta @ params.weights[l].T) * (1.0 - acts[l] ** 2)
    parts = []
    for w, b in zip(gw, gb):
        parts += [w.ravel(), b]
    return np.concatenate(parts)


def surrogate(params: PolicyParams, states, actions, weights) -> float:
    X = np.atleast_2d(np.asarray(states, dtype=float))
    z = logits(params, X)
    z = z - z.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    return float(np.sum(np.asarray(weights) * logp[np.arange(len(actions)), np.asarray(actions)]))


# -- rollouts ----------------------------------------------------------------

@dataclass
class Trajectory:
    states: np.ndarray  # (T+1, 2)
    actions: np.ndarray  # (T,)
    rewards: np.ndarray  # (T,)
    entity_id: int = -1

    def __post_init__(self):
        self.states = np.asarray(self.states, dtype=float).reshape(-1, 2)
        self.actions = np.asarray(self.actions, dtype=int)
        self.rewards = np.asarray(self.rewards, dtype=float)
        if not len(self.actions) == len(self.rewards) == len(self.states) - 1:
            raise ValueError("need len(actions) == len(rewards) == len(states) - 1")

    def __len__(self):
        return len(self.actions)

    @property
    def total_return(self) -> float:
        return float(self.rewards.sum())

    @property
    def final_position(self):
        return tuple(self.states[-1])


def sample_actions(probs, rng):
    cdf = np.cumsum(probs, axis=1)
    u = rng.random(len(probs)) * cdf[:, -1]
    # "<=" so a zero-probability action is never drawn
    return np.minimum((cdf <= u[:, None]).sum(axis=1), NUM_ACTIONS - 1)


def collect_batch(params, entities, K, rng, env=EnvConfig(), greedy=False):
    """Run ``K`` episodes in lockstep.

    ``entities`` is a single EntityType or a sequence of K of them (one per episode).
    """
    if isinstance(entities, EntityType):
        entities = [entities] * K
    if len(entities) != K:
        raise ValueError(f"expected {K} entities, got {len(entities)}")
    tables = np.stack([e.displacement_table() for e in entities])
    pos = np.zeros((K, 2))
    states = [[(0.0, 0.0)] for _ in range(K)]
    actions = [[] for _ in range(K)]
    rewards = [[] for _ in range(K)]
    alive = np.arange(K)
    r2 = env.goal_radius * env.goal_radius
    for t in range(env.horizon):
        probs = forward(params, pos[alive])
        a = np.argmax(probs, axis=1) if greedy else sample_actions(probs, rng)
        new = pos[alive] + env.step_scale * tables[alive, a]
        d2 = squared_goal_distance(new[:, 0], new[:, 1], env.goal)
        pos[alive] = new
        for j, ep in enumerate(alive):
            states[ep].append((new[j, 0], new[j, 1]))
            actions[ep].append(a[j])
            rewards[ep].append(-d2[j])
        keep = ~(d2 < r2)
        alive = alive[keep]
        if not alive.size:
            break
    return [Trajectory(states[i], actions[i], rewards[i], entities[i].id) for i in range(K)]


def collect_trajectory(params, entity, rng, env=EnvConfig()) -> Trajectory:
    return collect_batch(params, entity, 1, rng, env)[0]


# -- REINFORCE ---------------------------------------------------------------

@dataclass(frozen=True)
class TrainConfig:
    alpha: float = 0.01
    gamma: float = 0.99
    K: int = 10
    horizon: int = 100
    step_scale: float = 1.0
    normalize_advantages: bool = True

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError("alpha must be > 0")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")
        if self.K < 1 or self.horizon < 1:
            raise ValueError("K and horizon must be >= 1")

    @property
    def env(self) -> EnvConfig:
        return EnvConfig(horizon=self.horizon, step_scale=self.step_scale)


def discounted_returns(rewards, gamma):
    out = np.zeros(len(rewards))
    acc = 0.0
    for t in range(len(rewards) - 1, -1, -1):
        acc = rewards[t] + gamma * acc
        out[t] = acc
    return out


def advantages(batch, gamma, normalize=True):
    """Per-timestep advantages ``G_t - b_t`` with ``b_t`` the batch mean of ``G_t``.

    The mean at step t runs over the episodes still alive at t. With
    ``normalize`` the pooled advantages are divided by their standard deviation.
    """
    returns = [discounted_returns(tr.rewards, gamma) for tr in batch]
    T = max(len(g) for g in returns)
    total = np.zeros(T)
    count = np.zeros(T)
    for g in returns:
        total[:len(g)] += g
        count[:len(g)] += 1
    baseline = total / np.maximum(count, 1)
    adv = [g - baseline[:len(g)] for g in returns]
    if normalize:
        flat = np.concatenate(adv)
        sd = flat.std()
        if sd > 1e-12:
            adv = [a / sd for a in adv]
    return adv


def policy_gradient(params, batch, cfg: TrainConfig) -> np.ndarray:
    adv = advantages(batch, cfg.gamma, cfg.normalize_advantages)
    states = np.concatenate([tr.states[:-1] for tr in batch])
    actions = np.concatenate([tr.actions for tr in batch])
    return log_prob_grad(params, states, actions, np.concatenate(adv)) / len(batch)


def reinforce_update(params: PolicyParams, batch, cfg: TrainConfig) -> PolicyParams:
    if not batch:
        raise ValueError("empty batch")
    g = policy_gradient(params, batch, cfg)
    return PolicyParams.from_flat(params.layout, params.flat() + cfg.alpha * g)


def mean_return(batch) -> float:
    return float(np.mean([tr.total_return for tr in batch]))


def train_vpg(params, entity, cfg: TrainConfig, num_updates, rng, callback=None):
    """Plain VPG on one entity; ``callback(update_index, params, batch)`` after each update."""
    for u in range(num_updates):
        batch = collect_batch(params, entity, cfg.K, rng, cfg.env)
        params = reinforce_update(params, batch, cfg)
        if callback is not None:
            callback(u + 1, params, batch)
    return params


# -- checkpoints -------------------------------------------------------------

CHECKPOINT_FORMAT = "caml-policy-checkpoint"


def params_to_dict(params: PolicyParams):
    return {"layout": list(params.layout),
            "weights": [w.tolist() for w in params.weights],
            "biases": [b.tolist() for b in params.biases]}


def params_from_dict(d) -> PolicyParams:
    p = PolicyParams(tuple(np.array(w, dtype=float).reshape(len(w), -1) for w in d["weights"]),
                     tuple(np.array(b, dtype=float) for b in d["biases"]))
    if list(p.layout) != list(d["layout"]):
        raise ValueError(f"checkpoint layout {d['layout']} disagrees with weights {p.layout}")
    return p


def dumps_checkpoint(policies, meta=None) -> str:
    doc = {"format": CHECKPOINT_FORMAT, "version": 1, "meta": meta or {},
           "policies": [params_to_dict(p) for p in policies]}
    return json.dumps(doc, sort_keys=True) + "\n"


def save_checkpoint(path, policies, meta=None):
    Path(path).write_text(dumps_checkpoint(policies, meta))


def load_checkpoint(path):
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    doc = json.loads(path.read_text())
    if doc.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path} is not a policy checkpoint")
    return [params_from_dict(d) for d in doc["policies"]], doc.get("meta", {})
