"""Desk-scale policy optimization: linear-softmax agent policy + clipped PPO.

The policy chooses among a small set of (intent, price-action) pairs at the
agent's decision points. It is initialized by imitation on rule-generated
flows, then improved by gradient ascent on the clipped surrogate objective
with batch-normalized episode returns as advantages.
"""

from __future__ import annotations

import csv
import json
import random
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from . import concession
from .flow import SkeletonTurn, _legal_bundle_ops
from .model import (
    CompositeIntent,
    DealState,
    DealStatus,
    Intent,
    InvalidState,
)


class NoLegalAction(RuntimeError):
    pass


class EmptyCorpus(ValueError):
    pass


class DegenerateBatch(ValueError):
    """All-zero advantages: nothing to optimize."""


@dataclass(frozen=True)
class Action:
    intent: Intent
    bucket: str

    @property
    def name(self) -> str:
        return f"{self.intent.value}:{self.bucket}"


ACTIONS: tuple[Action, ...] = (
    Action(Intent.NEGOTIATE_PRICE_NOCHANGE, "hold"),
    Action(Intent.NEGOTIATE_PRICE_INCREASE, "concede-small"),
    Action(Intent.NEGOTIATE_PRICE_INCREASE, "concede-eq1"),
    Action(Intent.ACCEPT, "accept"),
    Action(Intent.REJECT, "reject"),
    Action(Intent.NEGOTIATE_ADD_X, "add-item"),
    Action(Intent.NEGOTIATE_REMOVE_X, "remove-item"),
)
_ACTION_INDEX = {a.name: i for i, a in enumerate(ACTIONS)}

_INTENT_ORDER = tuple(Intent)
FEATURE_DIM = 4 + len(_INTENT_ORDER)


def featurize_state(state: DealState,
                    last_customer_intent: Optional[CompositeIntent] = None) -> np.ndarray:
    """Fixed-length features: price gap, clocks, bundle size, last intent."""
    state.require_open()
    x = np.zeros(FEATURE_DIM)
    x[0] = (state.seller_price - state.buyer_price) / max(state.seller_price, 1)
    x[1] = state.t / state.max_turns
    x[2] = state.price_rounds_used / state.d
    x[3] = len(state.bundle.active) / len(state.bundle.items)
    if last_customer_intent is not None:
        for atom in last_customer_intent.atoms:
            x[4 + _INTENT_ORDER.index(atom)] = 1.0
    return x


def legal_action_mask(state: DealState) -> np.ndarray:
    """Which actions the flow rules allow in this state."""
    mask = np.zeros(len(ACTIONS), dtype=bool)
    price_ok = state.price_rounds_used <= state.d
    can_concede = price_ok and state.seller_price > state.seller_min
    mask[0] = price_ok  # hold
    mask[1] = can_concede
    mask[2] = can_concede
    mask[3] = state.buyer_price >= state.seller_min  # accept only fair deals
    mask[4] = state.t > state.max_turns  # reject only past the deadline
    ops = _legal_bundle_ops(state.bundle)
    mask[5] = any(op.op == "add" for op in ops)
    mask[6] = any(op.op == "remove" for op in ops)
    if not mask.any():
        mask[0] = True  # holding is the last resort
    return mask


@dataclass
class PolicyParams:
    feature_dim: int = FEATURE_DIM
    actions: tuple[Action, ...] = ACTIONS
    weights: np.ndarray = field(
        default_factory=lambda: np.zeros((len(ACTIONS), FEATURE_DIM)))
    version: int = 0

    def distribution(self, features: np.ndarray, mask: np.ndarray) -> np.ndarray:
        if not mask.any():
            raise NoLegalAction("mask excludes every action")
        logits = self.weights @ features
        logits = np.where(mask, logits, -np.inf)
        logits = logits - logits[mask].max()
        p = np.exp(logits)
        return p / p.sum()

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({
                "feature_dim": self.feature_dim,
                "actions": [[a.intent.value, a.bucket] for a in self.actions],
                "weights": self.weights.tolist(),
                "version": self.version,
            }, f)

    @classmethod
    def load(cls, path: str) -> "PolicyParams":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        actions = tuple(Action(Intent(i), b) for i, b in raw["actions"])
        return cls(raw["feature_dim"], actions, np.array(raw["weights"]),
                   raw.get("version", 0))


def sample_action(policy: PolicyParams, features: np.ndarray,
                  mask: np.ndarray, rng: random.Random) -> tuple[int, float]:
    """Draw an action index from the masked softmax; returns (index, log-prob)."""
    p = policy.distribution(features, mask)
    u = rng.random()
    cum = 0.0
    for i, pi in enumerate(p):
        cum += pi
        if u <= cum:
            return i, float(np.log(p[i]))
    i = int(np.flatnonzero(mask)[-1])
    return i, float(np.log(p[i]))


@dataclass(frozen=True)
class Step:
    features: np.ndarray
    mask: np.ndarray
    action: int
    log_prob: float


@dataclass(frozen=True)
class Trajectory:
    steps: tuple[Step, ...]
    episode_return: float


@dataclass(frozen=True)
class PpoConfig:
    clip_epsilon: float = 0.2
    learning_rate: float = 0.01
    epochs: int = 17
    batch_episodes: int = 32
    seed: int = 10

    def __post_init__(self):
        if not 0 < self.clip_epsilon < 1:
            raise ValueError("clip epsilon must lie in (0, 1)")
        if self.epochs < 1:
            raise ValueError("epochs must be at least 1")


def clip_scalar(ratio: float, advantage: float, epsilon: float) -> float:
    """Per-step clipped surrogate: min(r*A, clip(r, 1-eps, 1+eps)*A)."""
    clipped = min(max(ratio, 1 - epsilon), 1 + epsilon)
    return min(ratio * advantage, clipped * advantage)


def clip_objective(weights: np.ndarray, batch: Sequence[Trajectory],
                   advantages: Sequence[float],
                   epsilon: float) -> tuple[float, np.ndarray]:
    """Value and analytic gradient of the clipped surrogate.

    Advantages are per-trajectory (normalized episode returns) and broadcast
    to that trajectory's steps.
    """
    total = 0.0
    grad = np.zeros_like(weights)
    n_steps = sum(len(t.steps) for t in batch)
    if n_steps == 0:
        raise DegenerateBatch("no steps in batch")
    for traj, adv in zip(batch, advantages):
        for step in traj.steps:
            logits = weights @ step.features
            logits = np.where(step.mask, logits, -np.inf)
            logits = logits - logits[step.mask].max()
            p = np.exp(logits)
            p = p / p.sum()
            log_new = float(np.log(p[step.action]))
            ratio = float(np.exp(log_new - step.log_prob))
            total += clip_scalar(ratio, adv, epsilon)
            # gradient flows only where the unclipped branch is active
            active = (adv >= 0 and ratio <= 1 + epsilon) or \
                     (adv < 0 and ratio >= 1 - epsilon)
            if active:
                coeff = ratio * adv
                indicator = np.zeros(len(p))
                indicator[step.action] = 1.0
                grad += coeff * np.outer(indicator - p, step.features)
    return total / n_steps, grad / n_steps


@dataclass
class PpoDiagnostics:
    mean_ratio: float
    clip_fraction: float
    objective_before: float
    objective_after: float


def ppo_update(policy: PolicyParams, batch: Sequence[Trajectory],
               cfg: PpoConfig) -> tuple[PolicyParams, PpoDiagnostics]:
    """One gradient-ascent step on the clipped surrogate over the batch."""
    if not batch:
        raise DegenerateBatch("empty batch")
    from .rewards import normalize_batch

    returns = [t.episode_return for t in batch]
    if len(returns) >= 2:
        advantages = normalize_batch(returns)
    else:
        advantages = [0.0] * len(returns)
    if all(a == 0.0 for a in advantages):
        raise DegenerateBatch("all advantages are zero")

    before, grad = clip_objective(policy.weights, batch, advantages,
                                  cfg.clip_epsilon)
    new_weights = policy.weights + cfg.learning_rate * grad
    after, _ = clip_objective(new_weights, batch, advantages, cfg.clip_epsilon)

    ratios = []
    clipped = 0
    for traj in batch:
        for step in traj.steps:
            p = PolicyParams(policy.feature_dim, policy.actions, new_weights) \
                .distribution(step.features, step.mask)
            r = float(np.exp(np.log(p[step.action]) - step.log_prob))
            ratios.append(r)
            if r < 1 - cfg.clip_epsilon or r > 1 + cfg.clip_epsilon:
                clipped += 1
    diag = PpoDiagnostics(
        mean_ratio=float(np.mean(ratios)),
        clip_fraction=clipped / len(ratios),
        objective_before=before,
        objective_after=after,
    )
    return PolicyParams(policy.feature_dim, policy.actions, new_weights,
                        policy.version + 1), diag


# ---------------------------------------------------------------------------
# Imitation initialization
# ---------------------------------------------------------------------------

def action_for_agent_turn(turn: SkeletonTurn) -> Optional[str]:
    """Map a rule-generated agent turn to an action name, if it is one of
    the policy's decision points."""
    ci = turn.intent
    if Intent.NEGOTIATE_PRICE_NOCHANGE in ci:
        return ACTIONS[0].name
    if Intent.NEGOTIATE_PRICE_INCREASE in ci:
        return ACTIONS[2].name  # the rule agent concedes by the full step
    if Intent.ACCEPT in ci:
        return ACTIONS[3].name
    return None


def imitation_init(decision_data: Sequence[tuple[np.ndarray, np.ndarray, int]],
                   *, epochs: int = 150, lr: float = 0.5,
                   holdout: float = 0.2, seed: int = 0
                   ) -> tuple[PolicyParams, float]:
    """Maximum-likelihood fit of the policy on (features, mask, action) data.

    Returns the fitted policy and held-out top-1 action accuracy.
    """
    if not decision_data:
        raise EmptyCorpus("no decision points to imitate")
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(decision_data))
    n_hold = int(len(decision_data) * holdout)
    hold = [decision_data[i] for i in order[:n_hold]]
    train = [decision_data[i] for i in order[n_hold:]] or list(decision_data)

    W = np.zeros((len(ACTIONS), FEATURE_DIM))
    X = np.stack([x for x, _, _ in train])
    masks = np.stack([m for _, m, _ in train])
    acts = np.array([a for _, _, a in train])
    onehot = np.eye(len(ACTIONS))[acts]
    for _ in range(epochs):
        logits = X @ W.T
        logits = np.where(masks, logits, -np.inf)
        logits = logits - logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p = p / p.sum(axis=1, keepdims=True)
        W -= lr * ((p - onehot).T @ X) / len(train)

    policy = PolicyParams(weights=W)
    correct = 0
    for x, m, a in hold or train:
        p = policy.distribution(x, m)
        correct += int(np.argmax(p)) == a
    accuracy = correct / len(hold or train)
    return policy, accuracy


def collect_imitation_data(bundle, config, n_episodes: int,
                           rng: random.Random) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """Decision-point extraction is environment-specific; the simulation
    harness provides the canonical implementation (see sim.imitation_dataset)."""
    from .sim import imitation_dataset

    return imitation_dataset(bundle, config, n_episodes, rng)


# ---------------------------------------------------------------------------
# Training loop
# ---------------------------------------------------------------------------

@dataclass
class TrainingLogRow:
    epoch: int
    mean_reward: float
    clip_fraction: float
    mean_ratio: float


def train(collect: Callable[[PolicyParams, random.Random, int], list[Trajectory]],
          init: PolicyParams, cfg: PpoConfig) -> tuple[PolicyParams, list[TrainingLogRow]]:
    """Iterate collect -> normalize -> update for cfg.epochs.

    ``collect`` runs ``n`` self-play episodes under the given policy and
    returns their trajectories. Deterministic under cfg.seed.
    """
    rng = random.Random(cfg.seed)
    policy = init
    log_rows: list[TrainingLogRow] = []
    for epoch in range(1, cfg.epochs + 1):
        batch = collect(policy, rng, cfg.batch_episodes)
        mean_reward = float(np.mean([t.episode_return for t in batch]))
        try:
            policy, diag = ppo_update(policy, batch, cfg)
            log_rows.append(TrainingLogRow(epoch, mean_reward,
                                           diag.clip_fraction, diag.mean_ratio))
        except DegenerateBatch:
            log_rows.append(TrainingLogRow(epoch, mean_reward, 0.0, 1.0))
    return policy, log_rows


def write_training_log(rows: Sequence[TrainingLogRow], path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["epoch", "mean_reward", "clip_fraction", "mean_ratio"])
        for row in rows:
            writer.writerow([row.epoch, f"{row.mean_reward:.6f}",
                             f"{row.clip_fraction:.4f}", f"{row.mean_ratio:.4f}"])
