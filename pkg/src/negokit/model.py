"""Core domain types: products, bundles, intents, dialogues, deal state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Iterable, Optional


class NegotiationError(Exception):
    """Base class for domain errors."""


class UnknownItem(NegotiationError):
    pass


class MainNotRemovable(NegotiationError):
    pass


class RedundantOp(NegotiationError):
    """Adding an already-active item or removing an inactive one."""


class InvalidState(NegotiationError):
    """Operation on a closed deal or crossed prices."""


class ProductKind(Enum):
    MAIN = "main"
    ACCESSORY = "accessory"
    DELIVERY = "delivery"


class Speaker(Enum):
    CUSTOMER = "customer"
    AGENT = "agent"


class DealStatus(Enum):
    OPEN = "open"
    ACCEPTED = "accepted"
    REJECTED = "rejected"


class Intent(Enum):
    """Atomic dialogue acts.

    The first eleven form the core taxonomy; the last five are auxiliary
    acts observed in real transcripts and may be collapsed by classifiers.
    """

    GREET = "Greet"
    ASK = "Ask"
    INFORM = "Inform"
    ASK_CLARIFICATION = "Ask-Clarification"
    PROVIDE_CLARIFICATION = "Provide-Clarification"
    NEGOTIATE_PRICE_INCREASE = "Negotiate-Price-Increase"
    NEGOTIATE_PRICE_DECREASE = "Negotiate-Price-Decrease"
    NEGOTIATE_PRICE_NOCHANGE = "Negotiate-Price-NoChange"
    NEGOTIATE_ADD_X = "Negotiate-Add-X"
    NEGOTIATE_REMOVE_X = "Negotiate-Remove-X"
    ACCEPT = "Accept"
    REJECT = "Reject"
    # Auxiliary acts.
    ACKNOWLEDGE = "Acknowledge"
    ASK_PRICE = "Ask-Price"
    TELL_PRICE = "Tell-Price"
    AVOID_REJECTION = "Avoid-Rejection"


CORE_INTENTS = tuple(Intent)[:11]
AUXILIARY_INTENTS = tuple(Intent)[11:]

#: Atoms whose utterances carry a price proposal.
PRICE_BEARING = frozenset(
    {
        Intent.NEGOTIATE_PRICE_INCREASE,
        Intent.NEGOTIATE_PRICE_DECREASE,
        Intent.NEGOTIATE_PRICE_NOCHANGE,
        Intent.TELL_PRICE,
    }
)

_INTENT_BY_NAME = {i.value: i for i in Intent}


@dataclass(frozen=True)
class CompositeIntent:
    """An ordered combination of up to three distinct atoms, e.g. Greet-Ask."""

    atoms: tuple[Intent, ...]

    def __post_init__(self):
        if not self.atoms:
            raise ValueError("composite intent needs at least one atom")
        if len(self.atoms) > 3:
            raise ValueError("composite intent limited to 3 atoms")
        if len(set(self.atoms)) != len(self.atoms):
            raise ValueError("duplicate atoms in composite intent")

    @classmethod
    def of(cls, *atoms: Intent) -> "CompositeIntent":
        return cls(tuple(atoms))

    @classmethod
    def parse(cls, name: str) -> "CompositeIntent":
        """Inverse of :meth:`render`. Greedy longest-match over atom names."""
        parts = name.split("-")
        atoms: list[Intent] = []
        i = 0
        while i < len(parts):
            for j in range(len(parts), i, -1):
                candidate = "-".join(parts[i:j])
                if candidate in _INTENT_BY_NAME:
                    atoms.append(_INTENT_BY_NAME[candidate])
                    i = j
                    break
            else:
                raise ValueError(f"cannot parse intent name {name!r}")
        return cls(tuple(atoms))

    def render(self) -> str:
        return "-".join(a.value for a in self.atoms)

    def __contains__(self, atom: Intent) -> bool:
        return atom in self.atoms

    def has_price_atom(self) -> bool:
        return any(a in PRICE_BEARING for a in self.atoms)


@dataclass(frozen=True)
class Product:
    id: str
    name: str
    description: str = ""
    features: tuple[str, ...] = ()
    unit_price: int = 0  # minor currency units
    kind: ProductKind = ProductKind.ACCESSORY

    def __post_init__(self):
        if not self.id:
            raise ValueError("product id must be non-empty")
        if self.unit_price < 0:
            raise ValueError("unit_price must be non-negative")


@dataclass(frozen=True)
class Bundle:
    """A main product plus optional accessories; ``active`` is the live deal."""

    id: str
    items: tuple[Product, ...]
    active: frozenset[str]

    def __post_init__(self):
        ids = [p.id for p in self.items]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate product ids in bundle")
        if not self.active <= set(ids):
            raise ValueError("active set references unknown items")
        mains = [p for p in self.items if p.kind is ProductKind.MAIN]
        if len(mains) != 1:
            raise ValueError("bundle must contain exactly one main product")
        if mains[0].id not in self.active:
            raise ValueError("main product must be active")

    @classmethod
    def of(cls, bundle_id: str, items: Iterable[Product],
           active: Optional[Iterable[str]] = None) -> "Bundle":
        items = tuple(items)
        if active is None:
            active = [p.id for p in items]
        return cls(bundle_id, items, frozenset(active))

    @property
    def main(self) -> Product:
        return next(p for p in self.items if p.kind is ProductKind.MAIN)

    def item(self, product_id: str) -> Product:
        for p in self.items:
            if p.id == product_id:
                return p
        raise UnknownItem(product_id)

    def active_items(self) -> list[Product]:
        return [p for p in self.items if p.id in self.active]

    def inactive_items(self) -> list[Product]:
        return [p for p in self.items if p.id not in self.active]


@dataclass(frozen=True)
class BundleOp:
    """Add or remove a catalog item from the live deal."""

    op: str  # "add" | "remove"
    product_id: str

    def __post_init__(self):
        if self.op not in ("add", "remove"):
            raise ValueError(f"unknown bundle op {self.op!r}")

    @classmethod
    def add(cls, product_id: str) -> "BundleOp":
        return cls("add", product_id)

    @classmethod
    def remove(cls, product_id: str) -> "BundleOp":
        return cls("remove", product_id)


def bundle_price(bundle: Bundle) -> int:
    """Price of the live deal: sum of unit prices over active items."""
    return sum(p.unit_price for p in bundle.active_items())


def apply_bundle_op(bundle: Bundle, op: BundleOp) -> Bundle:
    """Return a new bundle with ``op`` applied.

    Raises UnknownItem, MainNotRemovable, or RedundantOp on illegal ops;
    the input bundle is never mutated.
    """
    target = bundle.item(op.product_id)  # raises UnknownItem
    if op.op == "remove":
        if target.kind is ProductKind.MAIN:
            raise MainNotRemovable(op.product_id)
        if op.product_id not in bundle.active:
            raise RedundantOp(f"{op.product_id} is not active")
        return replace(bundle, active=bundle.active - {op.product_id})
    if op.product_id in bundle.active:
        raise RedundantOp(f"{op.product_id} is already active")
    return replace(bundle, active=bundle.active | {op.product_id})


@dataclass(frozen=True)
class DialogueTurn:
    speaker: Speaker
    intent: CompositeIntent
    text: str = ""
    price_offer: Optional[int] = None
    bundle_ops: tuple[BundleOp, ...] = ()


@dataclass(frozen=True)
class Outcome:
    status: DealStatus  # ACCEPTED or REJECTED
    final_price: Optional[int] = None


@dataclass(frozen=True)
class Dialogue:
    id: str
    bundle: Bundle
    turns: tuple[DialogueTurn, ...]
    outcome: Outcome


@dataclass(frozen=True)
class NegotiationConfig:
    k_seller: float = 0.6
    k_buyer: float = 0.4
    tol: float = 0.05
    d: int = 2
    max_turns: int = 20
    rng_seed: int = 10

    def __post_init__(self):
        if self.k_seller <= 0 or self.k_buyer <= 0:
            raise ValueError("concession rates must be positive")
        if not 0 <= self.tol < 1:
            raise ValueError("tol must lie in [0, 1)")
        if self.d < 1:
            raise ValueError("d must be at least 1")
        if self.max_turns <= self.d:
            raise ValueError("max_turns must exceed d")


@dataclass(frozen=True)
class DealState:
    """The live negotiation over one bundle.

    ``t`` indexes price-proposal rounds (starts at 0, first proposal is
    round 1); clarification and bundle-op turns do not advance it.
    ``price_rounds_used`` counts consecutive price rounds since the last
    bundle modification and is capped by ``d``.
    """

    bundle: Bundle
    seller_price: int
    buyer_price: int
    seller_min: int
    tol: float = 0.05
    k_seller: float = 0.6
    k_buyer: float = 0.4
    t: int = 0
    price_rounds_used: int = 0
    d: int = 2
    max_turns: int = 20
    status: DealStatus = DealStatus.OPEN

    def __post_init__(self):
        if self.seller_min > self.seller_price:
            raise ValueError("seller_min must not exceed seller_price")
        if self.buyer_price <= 0:
            raise ValueError("buyer_price must be positive")
        if not 0 <= self.tol < 1:
            raise ValueError("tol must lie in [0, 1)")

    def require_open(self):
        if self.status is not DealStatus.OPEN:
            raise InvalidState(f"deal is {self.status.value}")


@dataclass(frozen=True)
class Violation:
    turn_index: Optional[int]
    rule: str

    def __str__(self):
        where = "outcome" if self.turn_index is None else f"turn {self.turn_index}"
        return f"{where}: {self.rule}"


def validate_dialogue(dialogue: Dialogue) -> list[Violation]:
    """Check the structural rules of a dialogue; returns violations, never raises."""
    out: list[Violation] = []
    turns = dialogue.turns
    if not turns:
        out.append(Violation(None, "dialogue has no turns"))
        return out

    if turns[0].speaker is not Speaker.CUSTOMER:
        out.append(Violation(0, "dialogue must open with the customer"))
    if Intent.GREET not in turns[0].intent:
        out.append(Violation(0, "opening turn must contain Greet"))

    for i in range(1, len(turns)):
        if turns[i].speaker is turns[i - 1].speaker:
            out.append(Violation(i, "speakers must alternate"))

    # A price is mandatory on price-bearing intents. It is additionally
    # allowed on Inform/Accept turns (quoting a re-priced deal or the agreed
    # figure) and on turns carrying bundle ops.
    for i, turn in enumerate(turns):
        has_price = turn.price_offer is not None
        requires_price = turn.intent.has_price_atom()
        allows_price = (
            requires_price
            or bool(turn.bundle_ops)
            or Intent.INFORM in turn.intent
            or Intent.ACCEPT in turn.intent
        )
        if has_price and not allows_price:
            out.append(Violation(i, "price offer on a non-price intent"))
        if requires_price and not has_price:
            out.append(Violation(i, "price-bearing intent without a price offer"))

    last = turns[-1]
    if dialogue.outcome.status is DealStatus.ACCEPTED:
        if Intent.ACKNOWLEDGE not in last.intent:
            out.append(Violation(len(turns) - 1, "accepted dialogue must end with Acknowledge"))
        if dialogue.outcome.final_price is None:
            out.append(Violation(None, "accepted outcome missing final_price"))
    elif dialogue.outcome.status is DealStatus.REJECTED:
        if Intent.REJECT not in last.intent:
            out.append(Violation(len(turns) - 1, "rejected dialogue must end with Reject"))
        if dialogue.outcome.final_price is not None:
            out.append(Violation(None, "rejected outcome must not carry final_price"))
    else:
        out.append(Violation(None, "outcome status must be accepted or rejected"))
    return out
