"""Price dynamics: exponential counter-offers, tolerance accept, deadline reject.

Both parties move toward each other by a factor of e^{-k t} of the current
price gap per round; higher k concedes faster. The seller accepts any offer
within a tolerance fraction of their current asking, and never proposes
below their reserve price.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional

from .model import DealState, DealStatus, InvalidState, NegotiationConfig


class Decision(Enum):
    ACCEPT_DEAL = "accept"
    COUNTER = "counter"
    REJECT_DEAL = "reject"


class Terminal(Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"
    EXHAUSTED = "exhausted"


@dataclass(frozen=True)
class PriceRound:
    t: int
    seller_price: int
    buyer_price: int


@dataclass(frozen=True)
class PriceTrace:
    rounds: tuple[PriceRound, ...]
    terminal: Terminal
    final_price: Optional[int] = None


def round_half_up(x: float) -> int:
    """Bankers' rounding is wrong for prices; 0.5 always rounds up."""
    return math.floor(x + 0.5)


def _check_open_uncrossed(state: DealState):
    state.require_open()
    if state.seller_price < state.buyer_price:
        raise InvalidState("crossed prices: seller below buyer")


def seller_counter(state: DealState) -> int:
    """Seller's next asking price at round ``state.t``.

    Moves from the buyer's last offer up by the decayed gap, clamped to
    [max(buyer_price, seller_min), seller_price].
    """
    _check_open_uncrossed(state)
    if state.t < 1:
        raise InvalidState("no price round in progress")
    gap = state.seller_price - state.buyer_price
    raw = state.buyer_price + gap * math.exp(-state.k_seller * state.t)
    proposal = round_half_up(raw)
    floor = max(state.buyer_price, state.seller_min)
    return min(max(proposal, floor), state.seller_price)


def buyer_counter(state: DealState) -> int:
    """Buyer's next offer at round ``state.t``.

    Moves from the seller's last asking down by the decayed gap, clamped to
    [buyer_price, seller_price].
    """
    _check_open_uncrossed(state)
    if state.t < 1:
        raise InvalidState("no price round in progress")
    gap = state.seller_price - state.buyer_price
    raw = state.seller_price - gap * math.exp(-state.k_buyer * state.t)
    proposal = round_half_up(raw)
    return min(max(proposal, state.buyer_price), state.seller_price)


def seller_decision(state: DealState, offer: int) -> Decision:
    """Accept when the offer is within tolerance of the current asking."""
    state.require_open()
    if offer >= state.seller_price * (1 - state.tol):
        return Decision.ACCEPT_DEAL
    return Decision.COUNTER


def buyer_decision(state: DealState, asking: int, budget_ceiling: int,
                   previous_asking: Optional[int] = None) -> Decision:
    """Accept an affordable asking; reject past the deadline if the seller
    has stopped conceding; otherwise keep countering."""
    state.require_open()
    if asking <= budget_ceiling:
        return Decision.ACCEPT_DEAL
    stalled = previous_asking is not None and asking >= previous_asking
    if state.t > state.max_turns and stalled:
        return Decision.REJECT_DEAL
    return Decision.COUNTER


def default_ceiling(buyer_price: int) -> int:
    """Budget ceiling when the caller gives none: 15% above the opening offer."""
    return round_half_up(buyer_price * 1.15)


def price_trace(config: NegotiationConfig, seller_open: int, buyer_open: int,
                seller_min: int, ceiling: Optional[int] = None) -> PriceTrace:
    """Run a pure price negotiation to termination.

    Each round the buyer counters first; the seller either accepts or
    counters; the buyer then accepts, rejects, or lets the next round run.
    Deterministic: no sampling is involved.
    """
    if not (seller_open > buyer_open > 0):
        raise InvalidState("need seller_open > buyer_open > 0")
    if seller_min > seller_open:
        raise InvalidState("seller_min above opening price")
    if ceiling is None:
        ceiling = default_ceiling(buyer_open)
    ceiling = max(ceiling, buyer_open)  # opening offer is always affordable

    from .model import Bundle, Product, ProductKind

    # Price traces do not involve a real catalog; a placeholder bundle keeps
    # DealState simple.
    bundle = Bundle.of("trace", [Product("main", "item", unit_price=seller_open,
                                         kind=ProductKind.MAIN)])
    state = DealState(
        bundle=bundle, seller_price=seller_open, buyer_price=buyer_open,
        seller_min=seller_min, tol=config.tol, k_seller=config.k_seller,
        k_buyer=config.k_buyer, d=config.d, max_turns=config.max_turns,
    )

    rounds: list[PriceRound] = []
    prev_asking: Optional[int] = None
    for t in range(1, config.max_turns + 2):
        stepped = _replace(state, t=t)
        offer = buyer_counter(stepped)
        offer = min(offer, ceiling)  # a strict buyer never bids past budget
        if seller_decision(stepped, offer) is Decision.ACCEPT_DEAL:
            rounds.append(PriceRound(t, stepped.seller_price, offer))
            return PriceTrace(tuple(rounds), Terminal.ACCEPTED, offer)
        asking = seller_counter(_replace(stepped, buyer_price=max(offer, stepped.buyer_price)))
        rounds.append(PriceRound(t, asking, offer))
        decision = buyer_decision(stepped, asking, ceiling, prev_asking)
        if decision is Decision.ACCEPT_DEAL:
            return PriceTrace(tuple(rounds), Terminal.ACCEPTED, asking)
        if decision is Decision.REJECT_DEAL:
            return PriceTrace(tuple(rounds), Terminal.REJECTED)
        prev_asking = asking
        state = _replace(state, seller_price=asking, buyer_price=max(offer, state.buyer_price))
    return PriceTrace(tuple(rounds), Terminal.EXHAUSTED)


def _replace(state: DealState, **kw) -> DealState:
    from dataclasses import replace

    return replace(state, **kw)
