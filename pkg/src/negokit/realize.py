"""Surface realization: grounded templates, few-shot prompts, external endpoint.

Template rendering is the default path. Every price that appears in text is
substituted from the skeleton, so realized dialogues cannot hallucinate
numbers. An external text generator can be plugged in over HTTP; any
transport failure falls back to the templates.
"""

from __future__ import annotations

import logging
import random
import string
from dataclasses import dataclass, field
from typing import Optional

import requests

from .flow import SkeletonTurn
from .model import Bundle, CompositeIntent, DealState, Intent

log = logging.getLogger(__name__)

GENERATION_CUE = "<start>"
STOP_DELIMITER = "\n"
TOKEN_BUDGET_DEFAULT = 2048
MAX_SHOTS = 4


class MissingTemplate(KeyError):
    pass


class UnresolvedSlot(KeyError):
    pass


class NoShotsForIntent(KeyError):
    pass


def format_price(minor_units: int) -> str:
    return f"${minor_units}"


# Templates are keyed by the rendered composite name. Wording is kept
# deliberately distinct across intents so that downstream text classifiers
# have signal to work with. No first-person experiential language.
TEMPLATES: dict[str, list[str]] = {
    "Greet-Ask": [
        "Hello, I am interested in buying the {product_name} you have listed. How much can I get it for?",
        "Hi there! The {product_name} caught my eye. What is the asking price?",
        "Good day! Could you tell me how much the {product_name} costs?",
    ],
    "Greet-Ask-Clarification": [
        "Hello! Before anything else, could you explain more about the {item_name}?",
        "Hi, nice listing. One question first: what exactly does the {item_name} offer?",
        "Greetings! Could you clarify some details about the {item_name} in this deal?",
    ],
    "Greet-Negotiate-Price-Decrease": [
        "Hello, the bundle looks good but the price is steep. Would you take {price}?",
        "Hi! Interested in the {product_name}, though only if the price can come down to {price}.",
        "Good day. The {product_name} is tempting but over budget; how about {price}?",
    ],
    "Greet-Negotiate-Add-X": [
        "Hello! Would it be possible to include the {item_name} in the deal as well?",
        "Hi, the listing looks nice. Can the {item_name} be added to the bundle?",
        "Greetings. What would the deal look like with the {item_name} included?",
    ],
    "Greet-Negotiate-Remove-X": [
        "Hello, the bundle mostly suits my needs but the {item_name} does not. Can it go without it?",
        "Hi there. Is it possible to buy this deal without the {item_name}?",
        "Good day! The {item_name} is unnecessary for me; what is the deal without it?",
    ],
    "Greet-Inform": [
        "Hello! The {product_name} together with {item_names} is being sold for {price}.",
        "Welcome! This deal covers {item_names}, all for {price}.",
        "Greetings, thank you for the interest. The current bundle ({item_names}) is priced at {price}.",
    ],
    "Ask": [
        "Could you share more details about the {product_name}?",
        "What can you tell me about the condition and specs of the {product_name}?",
        "Before deciding, some more information on the {product_name} would help.",
    ],
    "Ask-Price": [
        "What would the price be for the current deal?",
        "And how much does that come to in total?",
        "Could you state the total price as it stands now?",
    ],
    "Ask-Clarification": [
        "Could you clarify what the {item_name} actually provides? Specifically the part about {feature}.",
        "One thing is unclear: regarding the {item_name}, what does \"{feature}\" mean in practice?",
        "Please explain the {item_name} a bit more, in particular {feature}.",
    ],
    "Provide-Clarification": [
        "Certainly. The {item_name} offers {feature}.",
        "Of course: regarding the {item_name}, {feature}.",
        "Happy to clarify. The key point about the {item_name} is this: {feature}.",
    ],
    "Negotiate-Price-Decrease": [
        "That is still more than the budget allows. Would you consider {price}?",
        "The deal is appealing but expensive. Can it be done for {price}?",
        "Unfortunately that price does not work. How about {price} instead?",
    ],
    "Negotiate-Price-Increase": [
        "That offer is too low for this bundle, but here is a better deal: {price}. Interested?",
        "Understood about the budget. The best that can be done right now is {price}.",
        "That price cannot be matched, however {price} would work. Shall we proceed at {price}?",
    ],
    "Negotiate-Price-NoChange": [
        "The price has to stay at {price}. The {product_name} is well worth it given {feature}.",
        "Apologies, {price} is already the best possible figure for this {product_name}; note that it offers {feature}.",
        "No further reduction is possible: {price} stands. With {feature}, the value is excellent.",
    ],
    "Negotiate-Add-X": [
        "What would the total be if the {item_name} were part of the deal too?",
        "Could the {item_name} be added to the bundle? What is the new price?",
        "Adding the {item_name} would make this perfect. What would that cost?",
    ],
    "Negotiate-Remove-X": [
        "The {item_name} is not needed. Is it possible to buy the deal without it, and at what price?",
        "Excuse me, could the {item_name} be dropped from the bundle? What would the price be then?",
        "Without the {item_name} this would suit better. What does the deal cost without it?",
    ],
    "Inform": [
        "Certainly, the updated deal covering {item_names} comes to {price}.",
        "That can be arranged. The bundle now includes {item_names} and the price is {price}.",
        "Done. With the current selection ({item_names}), the total stands at {price}.",
    ],
    "Tell-Price": [
        "For {item_names} the total would be {price}.",
        "The current deal ({item_names}) comes to {price}.",
        "As it stands, the price for {item_names} is {price}.",
    ],
    "Accept": [
        "This works. Let's go ahead with the purchase.",
        "Agreed, that is a fair deal. Ready to proceed with the transaction.",
        "Deal! Happy to proceed at that price.",
    ],
    "Reject": [
        "Sorry, the budget simply does not stretch that far. Thank you for your time.",
        "Unfortunately no agreement can be reached at that price. Goodbye.",
        "That is beyond what can be spent on this; the deal is off. Thanks anyway.",
    ],
    "Acknowledge": [
        "Great, the payment can be processed right away.",
        "Excellent, let's move forward with the checkout then.",
        "Wonderful. The order will be prepared for completion.",
    ],
}


def _slot_names(template: str) -> list[str]:
    return [name for _, name, _, _ in string.Formatter().parse(template) if name]


def _resolve_slots(turn: SkeletonTurn, state: Optional[DealState],
                   bundle: Optional[Bundle]) -> dict[str, str]:
    slots = dict(turn.info_slots)
    if turn.price_offer is not None:
        slots["price"] = turn.price_offer
    if bundle is not None:
        slots.setdefault("product_name", bundle.main.name)
        slots.setdefault("item_names", ", ".join(p.name for p in bundle.active_items()))
    if isinstance(slots.get("price"), int):
        slots["price"] = format_price(slots["price"])
    return {k: str(v) for k, v in slots.items()}


def realize(turn: SkeletonTurn, state: Optional[DealState] = None,
            bundle: Optional[Bundle] = None,
            rng: Optional[random.Random] = None) -> str:
    """Render one skeleton turn to text. Deterministic under a seeded rng."""
    rng = rng or random.Random(0)
    name = turn.intent.render()
    templates = TEMPLATES.get(name)
    if templates is None:
        raise MissingTemplate(name)
    template = rng.choice(templates)
    slots = _resolve_slots(turn, state, bundle)
    try:
        return template.format(**slots)
    except KeyError as exc:
        raise UnresolvedSlot(f"{name}: missing slot {exc}") from exc


def realize_skeleton(skeleton, rng: Optional[random.Random] = None) -> list[str]:
    """Texts for every turn of a skeleton, in order."""
    rng = rng or random.Random(0)
    return [realize(t, bundle=None, rng=rng) for t in skeleton.turns]


# ---------------------------------------------------------------------------
# Few-shot prompt assembly
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Shot:
    task_description: str
    info_summary: str
    example_utterance: str


@dataclass(frozen=True)
class PromptSpec:
    intent: CompositeIntent
    shots: tuple[Shot, ...]
    live_summary: str
    token_budget: int = TOKEN_BUDGET_DEFAULT

    def render(self) -> str:
        parts = []
        for shot in self.shots:
            parts.append(shot.task_description)
            parts.append(shot.info_summary)
            parts.append(f"{GENERATION_CUE} {shot.example_utterance}")
        parts.append(self.live_summary)
        parts.append(GENERATION_CUE)
        return "\n".join(parts)

    def token_estimate(self) -> int:
        # Whitespace tokens x 1.3 as a budget proxy; exact tokenizer parity
        # is a non-goal.
        return int(len(self.render().split()) * 1.3)


_TASK_DESCRIPTIONS: dict[str, str] = {
    "Negotiate-Price-NoChange": (
        "A seller is negotiating with a customer and is not willing to "
        "reduce the price. The seller endorses the product instead."),
    "Negotiate-Price-Increase": (
        "A seller received an offer below the acceptable price and counters "
        "with a smaller concession."),
    "Negotiate-Price-Decrease": (
        "A customer finds the deal too expensive and proposes a lower price."),
    "Negotiate-Remove-X": (
        "A customer is negotiating with a seller about a product bundle. The "
        "customer wants an item removed from the deal and asks for the new price."),
    "Negotiate-Add-X": (
        "A customer wants an extra item included in the bundle and asks what "
        "the deal would cost with it."),
    "Accept": "A customer agrees to the proposed deal.",
    "Acknowledge": (
        "A customer has agreed to purchase a product from a seller; the "
        "seller thanks the customer and proceeds with the transaction."),
}
_GENERIC_TASK = "A customer and a seller are negotiating over a product bundle."


def default_shot_bank() -> dict[str, list[Shot]]:
    """A shot bank seeded from the template library."""
    bank: dict[str, list[Shot]] = {}
    for name, templates in TEMPLATES.items():
        demo = {"product_name": "Dell X8 laptop", "item_name": "gaming mouse",
                "item_names": "Dell X8 laptop, gaming mouse", "price": "$770",
                "feature": "16 GB ram and an Intel i7 processor"}
        shots = []
        for tpl in templates:
            try:
                utterance = tpl.format(**demo)
            except KeyError:
                continue
            shots.append(Shot(
                task_description=_TASK_DESCRIPTIONS.get(name, _GENERIC_TASK),
                info_summary=("The deal is a Dell X8 laptop with a gaming "
                              "mouse priced at $770."),
                example_utterance=utterance,
            ))
        bank[name] = shots
    return bank


def build_prompt(turn: SkeletonTurn, state: Optional[DealState],
                 bundle: Optional[Bundle],
                 shot_bank: dict[str, list[Shot]],
                 token_budget: int = TOKEN_BUDGET_DEFAULT) -> PromptSpec:
    """Assemble up to four shots plus a live summary, within the budget.

    Shots are dropped from the end until the rendered prompt fits; at least
    one shot must survive.
    """
    name = turn.intent.render()
    shots = tuple(shot_bank.get(name) or ())
    if not shots:
        raise NoShotsForIntent(name)
    slots = _resolve_slots(turn, state, bundle)
    summary_bits = [f"The deal is about {slots.get('product_name', 'a product bundle')}."]
    if "item_names" in slots:
        summary_bits.append(f"The bundle currently contains {slots['item_names']}.")
    if "item_name" in slots:
        summary_bits.append(f"The item under discussion is the {slots['item_name']}.")
    if "price" in slots:
        summary_bits.append(f"The price on the table is {slots['price']}.")
    live_summary = " ".join(summary_bits)

    spec = PromptSpec(turn.intent, shots[:MAX_SHOTS], live_summary, token_budget)
    while spec.token_estimate() > token_budget and len(spec.shots) > 1:
        spec = PromptSpec(turn.intent, spec.shots[:-1], live_summary, token_budget)
    if spec.token_estimate() > token_budget:
        raise NoShotsForIntent(f"{name}: budget {token_budget} cannot fit one shot")
    return spec


@dataclass
class RealizedText:
    text: str
    source: str  # "endpoint" | "fallback" | "template"


def generate_external(prompt: PromptSpec, endpoint: str,
                      timeout: float = 30.0,
                      fallback: Optional[str] = None) -> RealizedText:
    """Call the external generator; never raises to the caller.

    On any transport failure or malformed response the template fallback
    text is returned, tagged so the corpus records the provenance.
    """
    try:
        resp = requests.post(
            endpoint,
            json={"prompt": prompt.render(), "max_tokens": 50},
            timeout=timeout,
        )
        resp.raise_for_status()
        text = resp.json()["text"]
        if not isinstance(text, str) or not text.strip():
            raise ValueError("empty completion")
        return RealizedText(text.split(STOP_DELIMITER)[0].strip(), "endpoint")
    except Exception as exc:  # fallback contract: failures are logged only
        log.warning("external generator failed (%s); using template fallback", exc)
        return RealizedText(fallback or "", "fallback")
