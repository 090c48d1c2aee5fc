"""Self-play experiment runner: episodes, k-sweeps, corpus statistics."""

from __future__ import annotations

import csv
import json
import math
import random
import statistics
from dataclasses import dataclass, replace
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import concession, flow, realize as realization
from .concession import Decision
from .flow import FlowContext, open_context, SkeletonTurn, _legal_bundle_ops
from .model import (
    Bundle,
    BundleOp,
    CompositeIntent,
    DealStatus,
    Dialogue,
    DialogueTurn,
    Intent,
    NegotiationConfig,
    Outcome,
    Speaker,
)
from .policy import (
    ACTIONS,
    Action,
    PolicyParams,
    Step,
    Trajectory,
    featurize_state,
    legal_action_mask,
    sample_action,
)
from .rewards import IntentClassifier, RewardWeights, score_dialogue


from .policy import EmptyCorpus  # noqa: E402  (shared error type)


@dataclass(frozen=True)
class EpisodeMetrics:
    accepted: bool
    final_price: Optional[int]
    turns: int
    buyer_utility: float
    seller_utility: float
    episode_reward: float = 0.0


@dataclass(frozen=True)
class SweepCell:
    k_buyer: float
    k_seller: float
    buyer_utility: float
    seller_utility: float
    accept_rate: float
    buyer_stderr: float
    seller_stderr: float
    episodes: int


@dataclass(frozen=True)
class SweepResult:
    cells: tuple[SweepCell, ...]


def surplus_utilities(seller_open: int, buyer_open: int,
                      final_price: Optional[int]) -> tuple[float, float]:
    """Normalized surplus split; both zero on a failed deal."""
    if final_price is None:
        return 0.0, 0.0
    gap = seller_open - buyer_open
    if gap <= 0:
        return 0.5, 0.5
    buyer = (seller_open - final_price) / gap
    seller = (final_price - buyer_open) / gap
    return buyer, seller


# ---------------------------------------------------------------------------
# Policy-driven episodes
# ---------------------------------------------------------------------------

AgentFn = Callable[["EpisodeState", random.Random], int]


@dataclass
class EpisodeState:
    """What the agent sees at a decision point."""

    ctx: FlowContext
    last_customer_intent: CompositeIntent

    @property
    def deal(self):
        return self.ctx.state


def rule_agent(ep: EpisodeState, rng: random.Random) -> int:
    """The flow-generator seller, expressed over the policy's action set."""
    state = ep.deal
    mask = legal_action_mask(state)
    if concession.seller_decision(state, state.buyer_price) is Decision.ACCEPT_DEAL \
            and mask[3]:
        return 3
    if not (mask[0] or mask[1] or mask[2]):  # price moves exhausted
        if mask[6]:
            return 6
        if mask[5]:
            return 5
    if mask[1] and mask[2]:
        if state.seller_price <= state.seller_min or rng.random() < flow.NOCHANGE_PROB:
            return 0 if mask[0] else 2
        return 2
    return int(np.flatnonzero(mask)[0])


def policy_agent(policy: PolicyParams) -> AgentFn:
    def choose(ep: EpisodeState, rng: random.Random) -> int:
        features = featurize_state(ep.deal, ep.last_customer_intent)
        mask = legal_action_mask(ep.deal)
        index, _ = sample_action(policy, features, mask, rng)
        return index
    return choose


@dataclass
class EpisodeResult:
    dialogue: Dialogue
    metrics: EpisodeMetrics
    trajectory: Trajectory
    skeleton_turns: tuple[SkeletonTurn, ...]


def run_episode(agent: Union[str, PolicyParams, AgentFn], bundle: Bundle,
                config: NegotiationConfig, rng: random.Random, *,
                clf: Optional[IntentClassifier] = None,
                weights: Optional[RewardWeights] = None,
                seller_min: Optional[int] = None,
                realize_text: bool = True,
                dialogue_id: str = "episode",
                record_steps: bool = False) -> EpisodeResult:
    """One complete negotiation between the simulated buyer and an agent.

    The buyer follows the concession engine: exponential counter-offers up
    to a hidden budget ceiling, acceptance of any affordable asking, and
    rejection once the deadline passes with a stalled seller.
    """
    if agent == "rule":
        agent_fn: AgentFn = rule_agent
        policy = None
    elif isinstance(agent, PolicyParams):
        policy = agent
        agent_fn = policy_agent(agent)
    else:
        policy = None
        agent_fn = agent

    ctx = open_context(bundle, config, rng, seller_min=seller_min)
    seller_open, buyer_open = ctx.state.seller_price, ctx.state.buyer_price
    reserve = ctx.state.seller_min
    anchors = [seller_open, buyer_open]  # rescaled on bundle changes

    turns: list[SkeletonTurn] = []
    steps: list[Step] = []
    outcome: Optional[Outcome] = None

    def slots(**extra):
        base = {
            "product_name": ctx.state.bundle.main.name,
            "item_names": ", ".join(p.name for p in ctx.state.bundle.active_items()),
        }
        base.update(extra)
        return base

    turns.append(SkeletonTurn(Speaker.CUSTOMER,
                              CompositeIntent.of(Intent.GREET, Intent.ASK),
                              info_slots=slots()))
    turns.append(SkeletonTurn(Speaker.AGENT,
                              CompositeIntent.of(Intent.GREET, Intent.INFORM),
                              price_offer=ctx.state.seller_price,
                              info_slots=slots(price=ctx.state.seller_price)))
    ctx.opened = True
    ctx.prev_asking = ctx.state.seller_price

    while outcome is None and len(turns) < flow.HARD_TURN_CAP:
        state = ctx.state
        # customer decision against the current asking
        decision = concession.buyer_decision(state, state.seller_price,
                                             ctx.ceiling, ctx.prev_asking)
        if decision is Decision.ACCEPT_DEAL:
            final = state.seller_price
            turns.append(SkeletonTurn(Speaker.CUSTOMER,
                                      CompositeIntent.of(Intent.ACCEPT),
                                      info_slots=slots(price=final)))
            turns.append(SkeletonTurn(Speaker.AGENT,
                                      CompositeIntent.of(Intent.ACKNOWLEDGE),
                                      info_slots=slots()))
            outcome = Outcome(DealStatus.ACCEPTED, final_price=final)
            break
        if decision is Decision.REJECT_DEAL:
            turns.append(SkeletonTurn(Speaker.CUSTOMER,
                                      CompositeIntent.of(Intent.REJECT),
                                      info_slots=slots()))
            outcome = Outcome(DealStatus.REJECTED)
            break

        # customer counter-offer
        stepped = replace(state, t=state.t + 1,
                          price_rounds_used=state.price_rounds_used + 1)
        offer = min(concession.buyer_counter(stepped), ctx.ceiling)
        offer = max(offer, state.buyer_price)
        ctx.state = replace(stepped, buyer_price=offer)
        customer_ci = CompositeIntent.of(Intent.NEGOTIATE_PRICE_DECREASE)
        turns.append(SkeletonTurn(Speaker.CUSTOMER, customer_ci,
                                  price_offer=offer,
                                  info_slots=slots(price=offer)))

        # agent decision
        ep = EpisodeState(ctx, customer_ci)
        features = featurize_state(ctx.state, customer_ci)
        mask = legal_action_mask(ctx.state)
        if policy is not None and record_steps:
            index, log_prob = sample_action(policy, features, mask, rng)
            steps.append(Step(features, mask, index, log_prob))
        else:
            index = agent_fn(ep, rng)
            if record_steps:
                steps.append(Step(features, mask, index, 0.0))
        action = ACTIONS[index]
        outcome = _apply_agent_action(ctx, action, turns, slots, rng, anchors)

    if outcome is None:  # hard cap: treat as abandoned
        turns.append(SkeletonTurn(Speaker.CUSTOMER,
                                  CompositeIntent.of(Intent.REJECT),
                                  info_slots=slots()))
        outcome = Outcome(DealStatus.REJECTED)

    texts = None
    if realize_text:
        texts = [realization.realize(t, rng=rng) for t in turns]
    dialogue = Dialogue(dialogue_id, ctx.state.bundle,
                        tuple(DialogueTurn(t.speaker, t.intent,
                                           texts[i] if texts else "",
                                           t.price_offer, t.bundle_ops)
                              for i, t in enumerate(turns)),
                        outcome)

    reward = 0.0
    if clf is not None and weights is not None and realize_text:
        reward = score_dialogue(dialogue, clf, weights, reserve).episode_total

    buyer_u, seller_u = surplus_utilities(anchors[0], anchors[1],
                                          outcome.final_price)
    metrics = EpisodeMetrics(
        accepted=outcome.status is DealStatus.ACCEPTED,
        final_price=outcome.final_price,
        turns=len(turns),
        buyer_utility=buyer_u,
        seller_utility=seller_u,
        episode_reward=reward,
    )
    trajectory = Trajectory(tuple(steps), reward)
    return EpisodeResult(dialogue, metrics, trajectory, tuple(turns))


def _apply_agent_action(ctx: FlowContext, action: Action,
                        turns: list[SkeletonTurn], slots, rng: random.Random,
                        anchors: list[int]) -> Optional[Outcome]:
    state = ctx.state

    if action.bucket == "accept":
        final = state.buyer_price
        turns.append(SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.ACCEPT),
                                  price_offer=final, info_slots=slots(price=final)))
        turns.append(SkeletonTurn(Speaker.CUSTOMER,
                                  CompositeIntent.of(Intent.ACKNOWLEDGE),
                                  info_slots=slots()))
        ctx.state = replace(state, status=DealStatus.ACCEPTED, seller_price=final)
        return Outcome(DealStatus.ACCEPTED, final_price=final)

    if action.bucket == "reject":
        turns.append(SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.REJECT),
                                  info_slots=slots()))
        ctx.state = replace(state, status=DealStatus.REJECTED)
        return Outcome(DealStatus.REJECTED)

    if action.bucket == "hold":
        ctx.prev_asking = state.seller_price
        main = state.bundle.main
        feature = main.features[0] if main.features else main.description or main.name
        turns.append(SkeletonTurn(
            Speaker.AGENT, CompositeIntent.of(Intent.NEGOTIATE_PRICE_NOCHANGE),
            price_offer=state.seller_price,
            info_slots=slots(price=state.seller_price, feature=feature)))
        return None

    if action.bucket in ("concede-small", "concede-eq1"):
        full = concession.seller_counter(state)
        if action.bucket == "concede-small":
            asking = concession.round_half_up((state.seller_price + full) / 2)
        else:
            asking = full
        ctx.prev_asking = state.seller_price
        ctx.state = replace(state, seller_price=asking)
        turns.append(SkeletonTurn(
            Speaker.AGENT, CompositeIntent.of(Intent.NEGOTIATE_PRICE_INCREASE),
            price_offer=asking, info_slots=slots(price=asking)))
        return None

    # bundle moves
    wanted = "add" if action.bucket == "add-item" else "remove"
    candidates = [op for op in _legal_bundle_ops(state.bundle) if op.op == wanted]
    op = rng.choice(candidates)
    item = state.bundle.item(op.product_id)
    old_total = ctx.state.seller_price
    ctx.reprice(op)
    factor = ctx.state.seller_price / old_total if old_total else 1.0
    anchors[0] = max(1, concession.round_half_up(anchors[0] * factor))
    anchors[1] = max(1, concession.round_half_up(anchors[1] * factor))
    intent = Intent.NEGOTIATE_ADD_X if wanted == "add" else Intent.NEGOTIATE_REMOVE_X
    turns.append(SkeletonTurn(
        Speaker.AGENT, CompositeIntent.of(intent),
        price_offer=ctx.state.seller_price, bundle_ops=(op,),
        info_slots=slots(item_name=item.name, price=ctx.state.seller_price)))
    return None


# ---------------------------------------------------------------------------
# Imitation data and trajectory collection
# ---------------------------------------------------------------------------

def imitation_dataset(bundle: Bundle, config: NegotiationConfig,
                      n_episodes: int, rng: random.Random
                      ) -> list[tuple[np.ndarray, np.ndarray, int]]:
    """(features, mask, action) pairs from rule-agent self-play."""
    data = []
    for i in range(n_episodes):
        collected: list[tuple[np.ndarray, np.ndarray, int]] = []

        def recording_rule(ep: EpisodeState, r: random.Random) -> int:
            features = featurize_state(ep.deal, ep.last_customer_intent)
            mask = legal_action_mask(ep.deal)
            index = rule_agent(ep, r)
            collected.append((features, mask, index))
            return index

        run_episode(recording_rule, bundle, config, rng,
                    realize_text=False, dialogue_id=f"imit-{i}")
        data.extend(collected)
    return data


def make_collector(bundle: Bundle, config: NegotiationConfig,
                   clf: IntentClassifier, weights: RewardWeights):
    """A trajectory collector suitable for policy.train()."""
    counter = [0]

    def collect(policy: PolicyParams, rng: random.Random,
                n: int) -> list[Trajectory]:
        out = []
        for _ in range(n):
            counter[0] += 1
            result = run_episode(policy, bundle, config, rng, clf=clf,
                                 weights=weights, record_steps=True,
                                 dialogue_id=f"train-{counter[0]}")
            out.append(result.trajectory)
        return out

    return collect


def evaluate_policy(agent, bundle: Bundle, config: NegotiationConfig,
                    clf: IntentClassifier, weights: RewardWeights,
                    n_episodes: int, seed: int) -> list[float]:
    """Per-episode rewards under a fixed seed schedule (pairable across agents)."""
    rewards = []
    for i in range(n_episodes):
        rng = random.Random(f"{seed}:{i}")
        result = run_episode(agent, bundle, config, rng, clf=clf,
                             weights=weights, dialogue_id=f"eval-{i}")
        rewards.append(result.metrics.episode_reward)
    return rewards


# ---------------------------------------------------------------------------
# k-sweep
# ---------------------------------------------------------------------------

def k_sweep(grid: Sequence[tuple[float, float]], episodes: int,
            base_config: NegotiationConfig, *, base_price: int = 100_000,
            seed: int = 0) -> SweepResult:
    """Mean surplus utilities per (k_buyer, k_seller) cell over pure price
    negotiations with randomized openings."""
    cells = []
    for k_buyer, k_seller in grid:
        cfg = replace(base_config, k_buyer=k_buyer, k_seller=k_seller)
        rng = random.Random(f"{seed}:{k_buyer}:{k_seller}")
        buyer_us, seller_us, accepted = [], [], 0
        for _ in range(episodes):
            seller_open = base_price
            lo, hi = flow.BUYER_OPEN_RANGE
            buyer_open = concession.round_half_up(seller_open * rng.uniform(lo, hi))
            ceiling = concession.round_half_up(buyer_open * flow.CEILING_FACTOR)
            seller_min = concession.round_half_up(
                seller_open * flow.SELLER_MIN_FRACTION)
            trace = concession.price_trace(cfg, seller_open, buyer_open,
                                           seller_min, ceiling)
            buyer_u, seller_u = surplus_utilities(seller_open, buyer_open,
                                                  trace.final_price)
            accepted += trace.final_price is not None
            buyer_us.append(buyer_u)
            seller_us.append(seller_u)
        cells.append(SweepCell(
            k_buyer=k_buyer, k_seller=k_seller,
            buyer_utility=statistics.mean(buyer_us),
            seller_utility=statistics.mean(seller_us),
            accept_rate=accepted / episodes,
            buyer_stderr=statistics.stdev(buyer_us) / math.sqrt(episodes)
            if episodes > 1 else 0.0,
            seller_stderr=statistics.stdev(seller_us) / math.sqrt(episodes)
            if episodes > 1 else 0.0,
            episodes=episodes,
        ))
    return SweepResult(tuple(cells))


def write_sweep_csv(result: SweepResult, path: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["k_buyer", "k_seller", "buyer_utility",
                         "seller_utility", "accept_rate", "stderr"])
        for c in result.cells:
            writer.writerow([c.k_buyer, c.k_seller, f"{c.buyer_utility:.4f}",
                             f"{c.seller_utility:.4f}", f"{c.accept_rate:.4f}",
                             f"{max(c.buyer_stderr, c.seller_stderr):.4f}"])


# ---------------------------------------------------------------------------
# Corpus statistics
# ---------------------------------------------------------------------------

def bleu1(candidate: str, reference: str) -> float:
    """Unigram BLEU with brevity penalty."""
    from .rewards import bow_vector, tokenize

    cand = tokenize(candidate)
    ref_counts = bow_vector(reference)
    if not cand or not ref_counts:
        return 0.0
    cand_counts = bow_vector(candidate)
    clipped = sum(min(c, ref_counts.get(tok, 0)) for tok, c in cand_counts.items())
    precision = clipped / len(cand)
    ref_len = sum(ref_counts.values())
    bp = 1.0 if len(cand) >= ref_len else math.exp(1 - ref_len / len(cand))
    return bp * precision


def corpus_stats(corpus: Sequence[Dialogue], *, pairs: int = 1000,
                 seed: int = 0) -> dict:
    """Table-1 style statistics plus a sampled self-BLEU-1 variability score."""
    from .rewards import tokenize

    if not corpus:
        raise EmptyCorpus("no dialogues")
    utterances = [t.text for d in corpus for t in d.turns if t.text]
    customer_words = [len(tokenize(t.text)) for d in corpus for t in d.turns
                      if t.speaker is Speaker.CUSTOMER and t.text]
    agent_words = [len(tokenize(t.text)) for d in corpus for t in d.turns
                   if t.speaker is Speaker.AGENT and t.text]
    unique_words = {tok for u in utterances for tok in tokenize(u)
                    if not tok.isdigit()}

    self_bleu = None
    if len(utterances) >= 2:
        rng = random.Random(seed)
        scores = []
        for _ in range(pairs):
            a, b = rng.sample(range(len(utterances)), 2)
            scores.append(bleu1(utterances[a], utterances[b]))
        self_bleu = sum(scores) / len(scores)

    return {
        "dialogues": len(corpus),
        "utterances": sum(len(d.turns) for d in corpus),
        "mean_turns": statistics.mean(len(d.turns) for d in corpus),
        "mean_customer_words": statistics.mean(customer_words)
        if customer_words else 0.0,
        "mean_agent_words": statistics.mean(agent_words) if agent_words else 0.0,
        "unique_words": len(unique_words),
        "self_bleu1": self_bleu,
        "accept_rate": sum(d.outcome.status is DealStatus.ACCEPTED
                           for d in corpus) / len(corpus),
    }


def write_stats_json(stats: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as f:
        json.dump(stats, f, indent=2)
