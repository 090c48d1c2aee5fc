"""Dialogue-flow generation: legal intent sequences with prices and bundle ops.

Skeletons are dialogues without surface text. The customer opens with a
greet, parties strictly alternate, price bargaining is limited to ``d``
consecutive rounds before a bundle-level move is forced, and every flow
terminates in Accept -> Acknowledge or Reject.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from . import concession
from .concession import Decision
from .model import (
    Bundle,
    BundleOp,
    CompositeIntent,
    DealState,
    DealStatus,
    Dialogue,
    DialogueTurn,
    Intent,
    InvalidState,
    NegotiationConfig,
    Outcome,
    Product,
    Speaker,
    apply_bundle_op,
    bundle_price,
)


class ClosedDeal(InvalidState):
    pass


class UnmappedIntent(Exception):
    """The agent has no response rule for a customer composite."""


class EmptyCatalog(ValueError):
    pass


@dataclass(frozen=True)
class SkeletonTurn:
    """A dialogue turn before text realization."""

    speaker: Speaker
    intent: CompositeIntent
    price_offer: Optional[int] = None
    bundle_ops: tuple[BundleOp, ...] = ()
    info_slots: dict = field(default_factory=dict, compare=False)


@dataclass(frozen=True)
class Skeleton:
    bundle: Bundle
    turns: tuple[SkeletonTurn, ...]
    outcome: Outcome
    initial_price: int
    seller_min: int


# Sampling knobs. The source process is "random under constraints": weights
# are uniform over legal moves except where noted.
CLARIFY_PROB = 0.2
NOCHANGE_PROB = 0.25
BUYER_OPEN_RANGE = (0.75, 0.90)
SELLER_MIN_FRACTION = 0.80
CEILING_FACTOR = 1.15
HARD_TURN_CAP = 36

#: customer intents that open a price round
_PRICE_INTENTS = (Intent.NEGOTIATE_PRICE_DECREASE,)
#: non-price smalltalk moves and their weights
_CHAT_MOVES = ((Intent.ASK, 1.0), (Intent.ASK_PRICE, 0.5))


@dataclass
class FlowContext:
    """Mutable negotiation bookkeeping threaded through one skeleton."""

    state: DealState
    ceiling: int
    prev_asking: Optional[int] = None
    opened: bool = False

    def reprice(self, op: BundleOp) -> None:
        """Apply a bundle op and rescale every price anchor proportionally."""
        old_total = bundle_price(self.state.bundle)
        bundle = apply_bundle_op(self.state.bundle, op)
        new_total = bundle_price(bundle)
        factor = new_total / old_total if old_total else 1.0
        scale = lambda x: max(1, concession.round_half_up(x * factor))
        self.state = replace(
            self.state,
            bundle=bundle,
            seller_price=scale(self.state.seller_price),
            buyer_price=scale(self.state.buyer_price),
            seller_min=min(scale(self.state.seller_min), scale(self.state.seller_price)),
            price_rounds_used=0,
        )
        self.ceiling = scale(self.ceiling)
        self.prev_asking = None


def open_context(bundle: Bundle, config: NegotiationConfig, rng: random.Random,
                 buyer_open: Optional[int] = None,
                 seller_min: Optional[int] = None,
                 ceiling: Optional[int] = None) -> FlowContext:
    price = bundle_price(bundle)
    if buyer_open is None:
        lo, hi = BUYER_OPEN_RANGE
        buyer_open = max(1, concession.round_half_up(price * rng.uniform(lo, hi)))
    if seller_min is None:
        seller_min = max(1, concession.round_half_up(price * SELLER_MIN_FRACTION))
    if ceiling is None:
        ceiling = concession.round_half_up(buyer_open * CEILING_FACTOR)
    state = DealState(
        bundle=bundle, seller_price=price, buyer_price=buyer_open,
        seller_min=min(seller_min, price), tol=config.tol,
        k_seller=config.k_seller, k_buyer=config.k_buyer,
        d=config.d, max_turns=config.max_turns,
    )
    return FlowContext(state=state, ceiling=max(ceiling, buyer_open))


def _legal_bundle_ops(bundle: Bundle) -> list[BundleOp]:
    ops = [BundleOp.remove(p.id) for p in bundle.active_items()
           if p is not bundle.main]
    ops += [BundleOp.add(p.id) for p in bundle.inactive_items()]
    return ops


def next_customer_intent(ctx: FlowContext, history: Sequence[SkeletonTurn],
                         rng: random.Random) -> CompositeIntent:
    """Sample the customer's next move under the flow constraints.

    Accept/Reject are decisions, not samples: they fire whenever the
    concession rules say so, and dominate everything else.
    """
    state = ctx.state
    if state.status is not DealStatus.OPEN:
        raise ClosedDeal(state.status.value)

    if not history:
        legal_ops = _legal_bundle_ops(state.bundle)
        openers = [Intent.ASK, Intent.ASK_CLARIFICATION, Intent.NEGOTIATE_PRICE_DECREASE]
        if any(op.op == "add" for op in legal_ops):
            openers.append(Intent.NEGOTIATE_ADD_X)
        if any(op.op == "remove" for op in legal_ops):
            openers.append(Intent.NEGOTIATE_REMOVE_X)
        return CompositeIntent.of(Intent.GREET, rng.choice(openers))

    decision = concession.buyer_decision(
        state, ctx.state.seller_price, ctx.ceiling, ctx.prev_asking)
    if ctx.opened and decision is Decision.ACCEPT_DEAL:
        return CompositeIntent.of(Intent.ACCEPT)
    if decision is Decision.REJECT_DEAL or len(history) >= HARD_TURN_CAP:
        return CompositeIntent.of(Intent.REJECT)

    legal_ops = _legal_bundle_ops(state.bundle)
    price_allowed = state.price_rounds_used < state.d or not legal_ops

    if rng.random() < CLARIFY_PROB:
        return CompositeIntent.of(Intent.ASK_CLARIFICATION)

    moves: list[tuple[Intent, float]] = []
    if price_allowed:
        moves.append((Intent.NEGOTIATE_PRICE_DECREASE, 3.0))
    if legal_ops:
        weight = 3.0 if not price_allowed else 0.8
        if any(op.op == "remove" for op in legal_ops):
            moves.append((Intent.NEGOTIATE_REMOVE_X, weight))
        if any(op.op == "add" for op in legal_ops):
            moves.append((Intent.NEGOTIATE_ADD_X, weight * 0.6))
    moves.extend(_CHAT_MOVES)
    intents, weights = zip(*moves)
    return CompositeIntent.of(rng.choices(intents, weights=weights, k=1)[0])


def next_agent_intent(ctx: FlowContext, customer: CompositeIntent,
                      rng: random.Random) -> CompositeIntent:
    """Deterministic response map with a stochastic no-change tie-break."""
    state = ctx.state
    if state.status is not DealStatus.OPEN and Intent.ACCEPT not in customer \
            and Intent.REJECT not in customer:
        raise ClosedDeal(state.status.value)

    if Intent.ACCEPT in customer:
        return CompositeIntent.of(Intent.ACKNOWLEDGE)
    if Intent.GREET in customer:
        return CompositeIntent.of(Intent.GREET, Intent.INFORM)
    if Intent.NEGOTIATE_PRICE_DECREASE in customer:
        if concession.seller_decision(state, state.buyer_price) is Decision.ACCEPT_DEAL:
            return CompositeIntent.of(Intent.ACCEPT)
        if state.seller_price <= state.seller_min or rng.random() < NOCHANGE_PROB:
            return CompositeIntent.of(Intent.NEGOTIATE_PRICE_NOCHANGE)
        return CompositeIntent.of(Intent.NEGOTIATE_PRICE_INCREASE)
    if Intent.NEGOTIATE_REMOVE_X in customer or Intent.NEGOTIATE_ADD_X in customer:
        return CompositeIntent.of(Intent.INFORM)
    if Intent.ASK_CLARIFICATION in customer:
        return CompositeIntent.of(Intent.PROVIDE_CLARIFICATION)
    if Intent.ASK_PRICE in customer:
        return CompositeIntent.of(Intent.TELL_PRICE)
    if Intent.ASK in customer:
        return CompositeIntent.of(Intent.INFORM)
    raise UnmappedIntent(customer.render())


def _slots_for(bundle: Bundle, **extra) -> dict:
    slots = {
        "product_name": bundle.main.name,
        "item_names": ", ".join(p.name for p in bundle.active_items()),
    }
    slots.update(extra)
    return slots


def generate_skeleton(bundle: Bundle, config: NegotiationConfig,
                      rng: random.Random,
                      buyer_open: Optional[int] = None,
                      seller_min: Optional[int] = None,
                      ceiling: Optional[int] = None) -> Skeleton:
    """Run one full customer/agent flow over a bundle."""
    ctx = open_context(bundle, config, rng, buyer_open, seller_min, ceiling)
    initial_price = ctx.state.seller_price
    turns: list[SkeletonTurn] = []
    outcome: Optional[Outcome] = None

    while outcome is None:
        customer_ci = next_customer_intent(ctx, turns, rng)
        turns.append(_customer_turn(ctx, customer_ci, rng))
        if Intent.REJECT in customer_ci:
            ctx.state = replace(ctx.state, status=DealStatus.REJECTED)
            outcome = Outcome(DealStatus.REJECTED)
            break

        agent_ci = next_agent_intent(ctx, customer_ci, rng)
        turns.append(_agent_turn(ctx, customer_ci, agent_ci, rng))
        if Intent.ACKNOWLEDGE in agent_ci:
            ctx.state = replace(ctx.state, status=DealStatus.ACCEPTED)
            outcome = Outcome(DealStatus.ACCEPTED, final_price=ctx.state.seller_price)
        elif Intent.ACCEPT in agent_ci:
            # Agent took the customer's offer; customer closes with thanks.
            final = ctx.state.buyer_price
            turns.append(SkeletonTurn(Speaker.CUSTOMER,
                                      CompositeIntent.of(Intent.ACKNOWLEDGE),
                                      info_slots={"price": final}))
            ctx.state = replace(ctx.state, status=DealStatus.ACCEPTED,
                                seller_price=final)
            outcome = Outcome(DealStatus.ACCEPTED, final_price=final)

    return Skeleton(bundle=ctx.state.bundle, turns=tuple(turns), outcome=outcome,
                    initial_price=initial_price, seller_min=ctx.state.seller_min)


def _customer_turn(ctx: FlowContext, ci: CompositeIntent,
                   rng: random.Random) -> SkeletonTurn:
    state = ctx.state
    bundle = state.bundle
    price: Optional[int] = None
    ops: tuple[BundleOp, ...] = ()
    slots = _slots_for(bundle)

    if Intent.NEGOTIATE_PRICE_DECREASE in ci:
        ctx.state = state = replace(state, t=state.t + 1,
                                    price_rounds_used=state.price_rounds_used + 1)
        if not ctx.opened:
            price = state.buyer_price  # opening offer
        else:
            price = min(concession.buyer_counter(state), ctx.ceiling)
            price = max(price, state.buyer_price)
            ctx.state = state = replace(state, buyer_price=price)
        slots["price"] = price
        ctx.opened = True
    elif Intent.NEGOTIATE_REMOVE_X in ci or Intent.NEGOTIATE_ADD_X in ci:
        wanted = "remove" if Intent.NEGOTIATE_REMOVE_X in ci else "add"
        candidates = [op for op in _legal_bundle_ops(bundle) if op.op == wanted]
        op = rng.choice(candidates)
        ops = (op,)
        slots["item_name"] = bundle.item(op.product_id).name
        ctx.reprice(op)
        ctx.opened = True
    elif Intent.ACCEPT in ci:
        slots["price"] = state.seller_price
    elif Intent.ASK_CLARIFICATION in ci:
        target = rng.choice(bundle.active_items())
        slots["item_name"] = target.name
        slots["feature"] = rng.choice(target.features) if target.features \
            else target.description or target.name
    return SkeletonTurn(Speaker.CUSTOMER, ci, price_offer=price,
                        bundle_ops=ops, info_slots=slots)


def _agent_turn(ctx: FlowContext, customer_ci: CompositeIntent,
                ci: CompositeIntent, rng: random.Random) -> SkeletonTurn:
    state = ctx.state
    price: Optional[int] = None
    slots = _slots_for(state.bundle)

    if Intent.GREET in ci or Intent.TELL_PRICE in ci:
        price = state.seller_price
        slots["price"] = price
        ctx.prev_asking = price
        ctx.opened = True
    elif Intent.NEGOTIATE_PRICE_INCREASE in ci:
        price = concession.seller_counter(state)
        ctx.prev_asking = state.seller_price
        ctx.state = replace(state, seller_price=price)
        slots["price"] = price
    elif Intent.NEGOTIATE_PRICE_NOCHANGE in ci:
        price = state.seller_price
        ctx.prev_asking = price
        slots["price"] = price
        main = state.bundle.main
        slots["feature"] = main.features[0] if main.features else main.description
    elif Intent.ACCEPT in ci:
        price = state.buyer_price
        slots["price"] = price
    elif Intent.INFORM in ci:
        price = state.seller_price
        slots["price"] = price
        repriced = (Intent.NEGOTIATE_REMOVE_X in customer_ci
                    or Intent.NEGOTIATE_ADD_X in customer_ci)
        ctx.prev_asking = None if repriced else price
        ctx.opened = True
    elif Intent.PROVIDE_CLARIFICATION in ci:
        target = rng.choice(state.bundle.active_items())
        slots["item_name"] = target.name
        slots["feature"] = rng.choice(target.features) if target.features \
            else target.description or target.name
    return SkeletonTurn(Speaker.AGENT, ci, price_offer=price, info_slots=slots)


def generate_corpus(bundles: Sequence[Bundle], n: int,
                    config: NegotiationConfig,
                    rng: random.Random) -> list[Skeleton]:
    """n independent skeletons over uniformly sampled bundles."""
    if n <= 0:
        raise ValueError("n must be positive")
    if not bundles:
        raise EmptyCatalog("no bundles to negotiate over")
    return [generate_skeleton(rng.choice(list(bundles)), config, rng)
            for _ in range(n)]


def skeleton_to_dialogue(skeleton: Skeleton, dialogue_id: str,
                         texts: Optional[Sequence[str]] = None) -> Dialogue:
    """Lift a skeleton into a Dialogue, optionally attaching realized text."""
    turns = tuple(
        DialogueTurn(
            speaker=t.speaker, intent=t.intent,
            text=texts[i] if texts else "",
            price_offer=t.price_offer, bundle_ops=t.bundle_ops,
        )
        for i, t in enumerate(skeleton.turns)
    )
    return Dialogue(dialogue_id, skeleton.bundle, turns, skeleton.outcome)
