"""Reward stack: intent classifier, the four reward components, batch tools.

The four components: intent-consistency (probability the realized text
matches its intent), price-gap (final over initial asking), negotiation
strategy (exponential in the surplus over the seller's reserve, signed by
the closing intent), and interactiveness (one minus mean bag-of-words
cosine against earlier same-intent utterances).
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .model import DealStatus, Dialogue, Intent, Speaker


class InsufficientData(ValueError):
    pass


class UnknownClass(KeyError):
    pass


class InvalidDialogue(ValueError):
    pass


_TOKEN_RE = re.compile(r"[a-z0-9]+")


def tokenize(text: str) -> list[str]:
    """Lowercase, split on non-alphanumerics, keep digit strings."""
    return _TOKEN_RE.findall(text.lower())


def bow_vector(text: str) -> dict[str, int]:
    counts: dict[str, int] = {}
    for tok in tokenize(text):
        counts[tok] = counts.get(tok, 0) + 1
    return counts


def bow_cosine(a: str, b: str) -> float:
    va, vb = bow_vector(a), bow_vector(b)
    if not va or not vb:
        return 0.0
    dot = sum(c * vb.get(t, 0) for t, c in va.items())
    # single sqrt keeps cosine(x, x) exactly 1.0
    denom = math.sqrt(sum(c * c for c in va.values())
                      * sum(c * c for c in vb.values()))
    return dot / denom


# ---------------------------------------------------------------------------
# Intent classifier (bag-of-words softmax; no bias so empty text is uniform)
# ---------------------------------------------------------------------------

@dataclass
class IntentClassifier:
    vocabulary: dict[str, int]
    classes: list[str]
    weights: np.ndarray  # classes x vocab
    holdout_accuracy: Optional[float] = None

    def _features(self, text: str) -> np.ndarray:
        x = np.zeros(len(self.vocabulary))
        for tok, count in bow_vector(text).items():
            idx = self.vocabulary.get(tok)
            if idx is not None:
                x[idx] = count
        return x

    def predict_proba(self, text: str) -> np.ndarray:
        logits = self.weights @ self._features(text)
        logits -= logits.max()
        p = np.exp(logits)
        return p / p.sum()

    def classify(self, text: str) -> tuple[str, float]:
        p = self.predict_proba(text)
        i = int(np.argmax(p))
        return self.classes[i], float(p[i])

    def probability_of(self, text: str, intent_name: str) -> float:
        if intent_name not in self.classes:
            raise UnknownClass(intent_name)
        return float(self.predict_proba(text)[self.classes.index(intent_name)])

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump({"vocabulary": self.vocabulary, "classes": self.classes,
                       "weights": self.weights.tolist()}, f)

    @classmethod
    def load(cls, path: str) -> "IntentClassifier":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return cls(raw["vocabulary"], raw["classes"], np.array(raw["weights"]))


def train_classifier(corpus: Sequence[tuple[str, str]], *,
                     min_per_class: int = 10,
                     holdout: float = 0.2,
                     epochs: int = 250,
                     lr: float = 0.5,
                     l2: float = 1e-4,
                     seed: int = 0) -> IntentClassifier:
    """Fit a softmax bag-of-words classifier by full-batch gradient descent.

    Deterministic under ``seed``; reports accuracy on a held-out split.
    """
    if not corpus:
        raise InsufficientData("empty corpus")
    classes = sorted({label for _, label in corpus})
    if len(classes) < 2:
        raise InsufficientData("need at least two intent classes")
    counts = {c: sum(1 for _, l in corpus if l == c) for c in classes}
    thin = [c for c, n in counts.items() if n < min_per_class]
    if thin:
        raise InsufficientData(f"classes below {min_per_class} examples: {thin}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(len(corpus))
    n_hold = int(len(corpus) * holdout)
    hold_idx = set(order[:n_hold].tolist())
    train = [corpus[i] for i in range(len(corpus)) if i not in hold_idx]
    held = [corpus[i] for i in sorted(hold_idx)]
    if not train:
        train = list(corpus)

    vocab: dict[str, int] = {}
    for text, _ in train:
        for tok in tokenize(text):
            vocab.setdefault(tok, len(vocab))

    X = np.zeros((len(train), len(vocab)))
    y = np.zeros(len(train), dtype=int)
    class_index = {c: i for i, c in enumerate(classes)}
    for row, (text, label) in enumerate(train):
        for tok, count in bow_vector(text).items():
            if tok in vocab:
                X[row, vocab[tok]] = count
        y[row] = class_index[label]

    W = np.zeros((len(classes), len(vocab)))
    onehot = np.eye(len(classes))[y]
    for _ in range(epochs):
        logits = X @ W.T
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        grad = (p - onehot).T @ X / len(train) + l2 * W
        W -= lr * grad

    clf = IntentClassifier(vocab, classes, W)
    if held:
        correct = sum(clf.classify(text)[0] == label for text, label in held)
        clf.holdout_accuracy = correct / len(held)
    return clf


# ---------------------------------------------------------------------------
# Reward components
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RewardWeights:
    g1: float = 0.2
    g2: float = 0.2
    g3: float = 0.3
    g4: float = 0.2
    renormalize: bool = False

    def __post_init__(self):
        if min(self.g1, self.g2, self.g3, self.g4) < 0:
            raise ValueError("reward weights must be non-negative")

    def as_array(self) -> np.ndarray:
        g = np.array([self.g1, self.g2, self.g3, self.g4], dtype=float)
        if self.renormalize and g.sum() > 0:
            g = g / g.sum()
        return g

    @classmethod
    def from_json(cls, path: str) -> "RewardWeights":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        g = raw["gamma"]
        return cls(g[0], g[1], g[2], g[3], renormalize=raw.get("renormalize", False))


@dataclass(frozen=True)
class RewardBreakdown:
    r1: float = 0.0
    r2: float = 0.0
    r3: float = 0.0
    r4: float = 0.0
    total: float = 0.0


def r1_intent_consistency(clf: IntentClassifier, text: str, target: str) -> float:
    """Probability the classifier assigns to the intended class."""
    return clf.probability_of(text, target)


def r2_price_gap(initial_price: int, final_price: int) -> float:
    """Final asking over initial asking; 1.0 means no concession at all."""
    if initial_price <= 0:
        raise ValueError("initial price must be positive")
    return final_price / initial_price


def r3_negotiation_strategy(buyer_price: int, seller_min: int,
                            final_intent: Intent) -> float:
    """e^x above the reserve, zero below it, sign flipped on rejection."""
    if seller_min <= 0:
        raise ValueError("seller minimum price must be positive")
    if final_intent not in (Intent.ACCEPT, Intent.REJECT):
        raise ValueError("final intent must be Accept or Reject")
    x = (buyer_price - seller_min) / seller_min
    f = 0.0 if x < 0 else float(np.exp(x))
    g = 1.0 if final_intent is Intent.ACCEPT else -1.0
    return f * g


def r4_interactiveness(current: str, prior_same_intent: Sequence[str]) -> float:
    """1 minus the mean cosine against earlier same-intent utterances."""
    if not prior_same_intent:
        return 1.0
    sims = [bow_cosine(current, prior) for prior in prior_same_intent]
    return 1.0 - sum(sims) / len(sims)


def combined(breakdown_components: Sequence[float], weights: RewardWeights) -> float:
    r = np.asarray(breakdown_components, dtype=float)
    if r.shape != (4,):
        raise ValueError("need exactly four reward components")
    return float(weights.as_array() @ r)


def normalize_batch(rewards: Sequence[float]) -> list[float]:
    """Zero-mean unit-variance (population std); constant batches map to zeros."""
    if len(rewards) < 2:
        raise ValueError("need at least two rewards to normalize")
    arr = np.asarray(rewards, dtype=float)
    std = arr.std()
    if std == 0:
        return [0.0] * len(arr)
    return ((arr - arr.mean()) / std).tolist()


# ---------------------------------------------------------------------------
# Dialogue scoring
# ---------------------------------------------------------------------------

@dataclass
class DialogueScore:
    per_turn: list[RewardBreakdown]
    episode_total: float


def score_dialogue(dialogue: Dialogue, clf: IntentClassifier,
                   weights: RewardWeights, seller_min: int) -> DialogueScore:
    """Score every agent turn; price-gap and strategy land on the last one.

    The final customer-side price is the agreed price for accepted deals and
    the customer's last offer for rejected ones.
    """
    agent_turns = [(i, t) for i, t in enumerate(dialogue.turns)
                   if t.speaker is Speaker.AGENT]
    if not agent_turns:
        raise InvalidDialogue("no agent turns to score")

    agent_prices = [t.price_offer for _, t in agent_turns if t.price_offer is not None]
    initial = agent_prices[0] if agent_prices else None

    if dialogue.outcome.status is DealStatus.ACCEPTED:
        final_intent = Intent.ACCEPT
        final_price = dialogue.outcome.final_price
        buyer_final = final_price
    else:
        final_intent = Intent.REJECT
        final_price = agent_prices[-1] if agent_prices else None
        customer_prices = [t.price_offer for t in dialogue.turns
                           if t.speaker is Speaker.CUSTOMER
                           and t.price_offer is not None]
        buyer_final = customer_prices[-1] if customer_prices else None

    per_turn: list[RewardBreakdown] = []
    seen_by_intent: dict[str, list[str]] = {}
    last_index = agent_turns[-1][0]
    for i, turn in agent_turns:
        name = turn.intent.render()
        r1 = clf.probability_of(turn.text, name) if name in clf.classes else 0.0
        r4 = r4_interactiveness(turn.text, seen_by_intent.get(name, []))
        seen_by_intent.setdefault(name, []).append(turn.text)
        r2 = r3 = 0.0
        if i == last_index:
            if initial is not None and final_price is not None:
                r2 = r2_price_gap(initial, final_price)
            if buyer_final is not None:
                r3 = r3_negotiation_strategy(buyer_final, seller_min, final_intent)
        total = combined((r1, r2, r3, r4), weights)
        per_turn.append(RewardBreakdown(r1, r2, r3, r4, total))

    episode = sum(b.total for b in per_turn) / len(per_turn)
    return DialogueScore(per_turn, episode)
