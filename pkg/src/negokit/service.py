"""Live negotiation sessions over HTTP: a client plays the customer.

JSON API: POST /sessions, POST /sessions/{id}/turns, GET /sessions/{id},
DELETE /sessions/{id}, and a server-sent-events stream at
GET /sessions/{id}/events. Error bodies are {"error": code, "detail": text}.
"""

from __future__ import annotations

import json
import random
import re
import threading
import time
import uuid
from dataclasses import dataclass, field, replace
from typing import Optional

from fastapi import FastAPI, Request
from fastapi.responses import JSONResponse, StreamingResponse

from . import concession, flow, realize as realization
from .concession import Decision
from .flow import FlowContext, SkeletonTurn
from .io import dialogue_to_record
from .model import (
    Bundle,
    BundleOp,
    CompositeIntent,
    DealStatus,
    Dialogue,
    DialogueTurn,
    Intent,
    NegotiationConfig,
    NegotiationError,
    Outcome,
    Speaker,
    apply_bundle_op,
)
from .policy import ACTIONS, PolicyParams, featurize_state, legal_action_mask, sample_action
from .rewards import IntentClassifier

CONFIDENCE_THRESHOLD = 0.4
SESSION_TTL_SECONDS = 30 * 60


class ApiError(Exception):
    status_code = 400
    code = "bad_request"

    def __init__(self, detail: str):
        super().__init__(detail)
        self.detail = detail


class UnknownBundle(ApiError):
    status_code = 404
    code = "unknown_bundle"


class UnknownSession(ApiError):
    status_code = 404
    code = "unknown_session"


class SessionClosed(ApiError):
    status_code = 409
    code = "session_closed"


class BadConfig(ApiError):
    status_code = 400
    code = "bad_config"


class IllegalIntent(ApiError):
    status_code = 400
    code = "illegal_intent"


class LowConfidence(ApiError):
    status_code = 422
    code = "low_confidence"


def _turn_record(turn: DialogueTurn) -> dict:
    return {
        "speaker": turn.speaker.value,
        "intents": [a.value for a in turn.intent.atoms],
        "text": turn.text,
        "price": turn.price_offer,
        "ops": [{"op": op.op, "id": op.product_id} for op in turn.bundle_ops],
    }


@dataclass
class Session:
    id: str
    ctx: FlowContext
    agent_kind: str
    rng: random.Random
    transcript: list[DialogueTurn] = field(default_factory=list)
    created_at: float = field(default_factory=time.time)
    last_active: float = field(default_factory=time.time)
    lock: threading.Lock = field(default_factory=threading.Lock)
    condition: threading.Condition = field(default_factory=threading.Condition)
    closed: bool = False
    final_dialogue: Optional[Dialogue] = None
    awaiting_close: bool = False  # agent accepted; customer acknowledgment pending

    def snapshot(self) -> dict:
        state = self.ctx.state
        return {
            "seller_price": state.seller_price,
            "buyer_price": state.buyer_price,
            "seller_min_visible": None,  # reserve stays hidden
            "active_items": [p.id for p in state.bundle.active_items()],
            "inactive_items": [p.id for p in state.bundle.inactive_items()],
            "status": state.status.value,
            "t": state.t,
            "price_rounds_used": state.price_rounds_used,
            "closed": self.closed,
        }

    def append(self, turn: DialogueTurn) -> None:
        self.transcript.append(turn)
        with self.condition:
            self.condition.notify_all()


def create_app(catalog: list[Bundle], *,
               classifier: Optional[IntentClassifier] = None,
               policy: Optional[PolicyParams] = None,
               base_config: Optional[NegotiationConfig] = None,
               persist_path: Optional[str] = None,
               session_ttl: float = SESSION_TTL_SECONDS,
               seed: int = 10) -> FastAPI:
    app = FastAPI(title="negotiation service")
    bundles = {b.id: b for b in catalog}
    sessions: dict[str, Session] = {}
    sessions_guard = threading.Lock()
    persist_lock = threading.Lock()
    base = base_config or NegotiationConfig()

    app.state.sessions = sessions

    def close_all_sessions():
        """Shutdown hook: abandon and persist every open session."""
        for session in list(sessions.values()):
            with session.lock:
                _close(session)

    app.state.close_all_sessions = close_all_sessions

    @app.exception_handler(ApiError)
    async def handle_api_error(request: Request, exc: ApiError):
        return JSONResponse(status_code=exc.status_code,
                            content={"error": exc.code, "detail": exc.detail})

    def persist(dialogue: Dialogue) -> None:
        if persist_path is None:
            return
        with persist_lock:
            with open(persist_path, "a", encoding="utf-8") as f:
                f.write(json.dumps(dialogue_to_record(dialogue)) + "\n")

    def get_session(session_id: str) -> Session:
        with sessions_guard:
            session = sessions.get(session_id)
        if session is None:
            raise UnknownSession(session_id)
        if not session.closed and \
                time.time() - session.last_active > session_ttl:
            with session.lock:
                _close(session)  # expired sessions abandon as rejected
        return session

    def _close(session: Session, outcome: Optional[Outcome] = None) -> Dialogue:
        """Idempotent close; abandonment maps to a rejected outcome."""
        if session.closed:
            return session.final_dialogue
        if outcome is None:
            if session.ctx.state.status is DealStatus.OPEN:
                session.transcript.append(DialogueTurn(
                    Speaker.CUSTOMER, CompositeIntent.of(Intent.REJECT),
                    "No deal this time, thanks anyway."))
                session.ctx.state = replace(session.ctx.state,
                                            status=DealStatus.REJECTED)
            outcome = Outcome(session.ctx.state.status,
                              session.ctx.state.seller_price
                              if session.ctx.state.status is DealStatus.ACCEPTED
                              else None)
        session.closed = True
        session.final_dialogue = Dialogue(
            session.id, session.ctx.state.bundle,
            tuple(session.transcript), outcome)
        persist(session.final_dialogue)
        with session.condition:
            session.condition.notify_all()
        return session.final_dialogue

    def realize_agent(turn: SkeletonTurn, session: Session) -> DialogueTurn:
        text = realization.realize(turn, rng=session.rng)
        return DialogueTurn(turn.speaker, turn.intent, text,
                            turn.price_offer, turn.bundle_ops)

    # ------------------------------------------------------------------
    # routes
    # ------------------------------------------------------------------

    @app.get("/health")
    def health():
        return {"status": "ok"}

    @app.post("/sessions", status_code=201)
    async def create_session(request: Request):
        body = await request.json()
        bundle_id = body.get("bundle_id")
        if bundle_id not in bundles:
            raise UnknownBundle(str(bundle_id))
        overrides = body.get("config", {})
        try:
            config = replace(base, **{k: v for k, v in overrides.items()
                                      if k in NegotiationConfig.__dataclass_fields__})
        except (TypeError, ValueError) as exc:
            raise BadConfig(str(exc))
        unknown = set(overrides) - set(NegotiationConfig.__dataclass_fields__)
        if unknown:
            raise BadConfig(f"unknown config fields: {sorted(unknown)}")
        agent_kind = body.get("agent_kind", "rule")
        if agent_kind not in ("rule", "policy"):
            raise BadConfig(f"unknown agent kind {agent_kind!r}")
        if agent_kind == "policy" and policy is None:
            raise BadConfig("no policy loaded")

        session_id = uuid.uuid4().hex
        rng = random.Random(f"{seed}:{session_id}")
        ctx = flow.open_context(bundles[bundle_id], config, rng)
        session = Session(session_id, ctx, agent_kind, rng)
        with sessions_guard:
            sessions[session_id] = session
        return {
            "session_id": session_id,
            "bundle": {
                "id": bundle_id,
                "items": [{"id": p.id, "name": p.name, "price": p.unit_price,
                           "kind": p.kind.value,
                           "features": list(p.features)}
                          for p in ctx.state.bundle.items],
                "active": sorted(ctx.state.bundle.active),
            },
            "seller_price": ctx.state.seller_price,
            "snapshot": session.snapshot(),
        }

    @app.get("/sessions/{session_id}")
    def read_session(session_id: str):
        session = get_session(session_id)
        with session.lock:
            return {
                "session_id": session.id,
                "transcript": [_turn_record(t) for t in session.transcript],
                "snapshot": session.snapshot(),
                "agent_kind": session.agent_kind,
            }

    @app.delete("/sessions/{session_id}")
    def close_session(session_id: str):
        session = get_session(session_id)
        with session.lock:
            dialogue = _close(session)
        return {
            "session_id": session.id,
            "dialogue": dialogue_to_record(dialogue),
        }

    @app.post("/sessions/{session_id}/turns")
    async def post_turn(session_id: str, request: Request):
        session = get_session(session_id)
        body = await request.json()
        with session.lock:
            if session.closed:
                raise SessionClosed(session_id)
            session.last_active = time.time()
            customer = _build_customer_turn(session, body, classifier)
            was_awaiting = session.awaiting_close
            saved = (session.ctx.state, session.ctx.ceiling,
                     session.ctx.prev_asking, session.ctx.opened,
                     len(session.transcript), session.awaiting_close)
            try:
                _apply_customer_turn(session, customer)
                session.append(customer)
                agent = None
                closing_ack = was_awaiting and not session.awaiting_close
                if not session.closed and not closing_ack:
                    agent = _agent_reply(session, customer, policy,
                                         realize_agent)
                    if agent is not None:
                        session.append(agent)
            except ApiError:
                (session.ctx.state, session.ctx.ceiling,
                 session.ctx.prev_asking, session.ctx.opened) = saved[:4]
                del session.transcript[saved[4]:]
                session.awaiting_close = saved[5]
                raise
            if session.ctx.state.status is not DealStatus.OPEN and \
                    not session.awaiting_close:
                _close(session, Outcome(
                    session.ctx.state.status,
                    session.ctx.state.seller_price
                    if session.ctx.state.status is DealStatus.ACCEPTED else None))
            return {
                "customer_turn": _turn_record(customer),
                "agent_turn": _turn_record(agent) if agent else None,
                "snapshot": session.snapshot(),
            }

    @app.get("/sessions/{session_id}/events")
    def events(session_id: str):
        session = get_session(session_id)

        def stream():
            sent = 0
            while True:
                with session.condition:
                    while sent >= len(session.transcript) and not session.closed:
                        session.condition.wait(timeout=0.5)
                    pending = session.transcript[sent:]
                    closed = session.closed
                for turn in pending:
                    yield "event: turn\ndata: " + \
                        json.dumps(_turn_record(turn)) + "\n\n"
                    sent += 1
                if closed and sent >= len(session.transcript):
                    yield "event: done\ndata: " + \
                        json.dumps(session.snapshot()) + "\n\n"
                    return

        return StreamingResponse(stream(), media_type="text/event-stream")

    return app


# ---------------------------------------------------------------------------
# turn mechanics
# ---------------------------------------------------------------------------

_PRICE_RE = re.compile(r"\d[\d,]*")


def _opening_intent(session: Session, intent: CompositeIntent) -> CompositeIntent:
    """Transcripts open with a greeting; fold one into the first turn."""
    if not session.transcript and Intent.GREET not in intent \
            and len(intent.atoms) < 3:
        return CompositeIntent((Intent.GREET,) + intent.atoms)
    return intent


def _build_customer_turn(session: Session, body: dict,
                         classifier: Optional[IntentClassifier]) -> DialogueTurn:
    structured = body.get("structured")
    text = body.get("text", "")
    if structured:
        try:
            intent = CompositeIntent(tuple(Intent(n)
                                           for n in structured["intents"]))
        except (KeyError, ValueError, TypeError) as exc:
            raise IllegalIntent(str(exc))
        price = structured.get("price_offer")
        ops = tuple(BundleOp(o["op"], o["id"])
                    for o in structured.get("ops", ()))
        return DialogueTurn(Speaker.CUSTOMER,
                            _opening_intent(session, intent), text, price, ops)
    if not text.strip():
        raise IllegalIntent("turn needs text or a structured intent")
    if classifier is None:
        raise LowConfidence("no classifier loaded; send a structured intent")
    name, confidence = classifier.classify(text)
    if confidence < CONFIDENCE_THRESHOLD:
        raise LowConfidence(
            f"intent confidence {confidence:.2f} below "
            f"{CONFIDENCE_THRESHOLD}; send a structured intent")
    intent = CompositeIntent.parse(name)
    price = None
    if intent.has_price_atom() or Intent.NEGOTIATE_PRICE_DECREASE in intent:
        match = _PRICE_RE.search(text)
        if match:
            price = int(match.group().replace(",", ""))
    return DialogueTurn(Speaker.CUSTOMER, _opening_intent(session, intent),
                        text, price, ())


def _apply_customer_turn(session: Session, turn: DialogueTurn) -> None:
    ctx = session.ctx
    state = ctx.state
    if state.status is not DealStatus.OPEN:
        raise SessionClosed(session.id)

    if session.awaiting_close and (Intent.ACKNOWLEDGE in turn.intent
                                   or Intent.ACCEPT in turn.intent):
        session.awaiting_close = False
        final = state.buyer_price
        ctx.state = replace(state, status=DealStatus.ACCEPTED,
                            seller_price=final)
        return

    for op in turn.bundle_ops:
        try:
            apply_bundle_op(state.bundle, op)  # raises on illegal ops
        except NegotiationError as exc:
            raise IllegalIntent(str(exc))
        ctx.reprice(op)
        state = ctx.state
        ctx.opened = True

    if Intent.ACCEPT in turn.intent:
        ctx.state = replace(state, status=DealStatus.ACCEPTED)
        return
    if Intent.REJECT in turn.intent:
        ctx.state = replace(state, status=DealStatus.REJECTED)
        return

    if Intent.NEGOTIATE_PRICE_DECREASE in turn.intent:
        if turn.price_offer is None:
            raise IllegalIntent("a price move needs a price_offer")
        if turn.price_offer <= 0:
            raise IllegalIntent("price_offer must be positive")
        ctx.state = replace(state, t=state.t + 1,
                            price_rounds_used=state.price_rounds_used + 1,
                            buyer_price=turn.price_offer)
        ctx.opened = True


def _agent_reply(session: Session, customer: DialogueTurn,
                 policy: Optional[PolicyParams],
                 realize_agent) -> Optional[DialogueTurn]:
    ctx = session.ctx
    state = ctx.state

    if state.status is DealStatus.ACCEPTED:
        turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.ACKNOWLEDGE),
                            info_slots=_slots(ctx))
        return realize_agent(turn, session)
    if state.status is DealStatus.REJECTED:
        return None

    use_policy = (session.agent_kind == "policy" and policy is not None
                  and Intent.NEGOTIATE_PRICE_DECREASE in customer.intent)
    if use_policy:
        features = featurize_state(state, customer.intent)
        mask = legal_action_mask(state)
        index, _ = sample_action(policy, features, mask, session.rng)
        return _policy_agent_turn(session, ACTIONS[index], realize_agent)

    # A greeting folded into a price offer still deserves a price response.
    effective = customer.intent
    if Intent.NEGOTIATE_PRICE_DECREASE in effective and Intent.GREET in effective:
        effective = CompositeIntent(tuple(a for a in effective.atoms
                                          if a is not Intent.GREET))
    try:
        agent_ci = flow.next_agent_intent(ctx, effective, session.rng)
    except flow.UnmappedIntent as exc:
        raise IllegalIntent(f"the agent has no response for {exc}")
    skeleton = flow._agent_turn(ctx, effective, agent_ci, session.rng)
    turn = realize_agent(skeleton, session)
    if Intent.ACCEPT in agent_ci:
        session.awaiting_close = True
    return turn


def _slots(ctx: FlowContext, **extra) -> dict:
    slots = {
        "product_name": ctx.state.bundle.main.name,
        "item_names": ", ".join(p.name for p in ctx.state.bundle.active_items()),
    }
    slots.update(extra)
    return slots


def _policy_agent_turn(session: Session, action, realize_agent) -> DialogueTurn:
    ctx = session.ctx
    state = ctx.state
    if action.bucket == "accept":
        session.awaiting_close = True
        turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.ACCEPT),
                            price_offer=state.buyer_price,
                            info_slots=_slots(ctx, price=state.buyer_price))
        return realize_agent(turn, session)
    if action.bucket == "reject":
        ctx.state = replace(state, status=DealStatus.REJECTED)
        turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.REJECT),
                            info_slots=_slots(ctx))
        return realize_agent(turn, session)
    if action.bucket == "hold":
        ctx.prev_asking = state.seller_price
        main = state.bundle.main
        feature = main.features[0] if main.features else main.description
        turn = SkeletonTurn(Speaker.AGENT,
                            CompositeIntent.of(Intent.NEGOTIATE_PRICE_NOCHANGE),
                            price_offer=state.seller_price,
                            info_slots=_slots(ctx, price=state.seller_price,
                                              feature=feature))
        return realize_agent(turn, session)
    if action.bucket in ("concede-small", "concede-eq1"):
        full = concession.seller_counter(state)
        asking = full if action.bucket == "concede-eq1" else \
            concession.round_half_up((state.seller_price + full) / 2)
        ctx.prev_asking = state.seller_price
        ctx.state = replace(state, seller_price=asking)
        turn = SkeletonTurn(Speaker.AGENT,
                            CompositeIntent.of(Intent.NEGOTIATE_PRICE_INCREASE),
                            price_offer=asking,
                            info_slots=_slots(ctx, price=asking))
        return realize_agent(turn, session)
    # bundle moves
    wanted = "add" if action.bucket == "add-item" else "remove"
    candidates = [op for op in flow._legal_bundle_ops(state.bundle)
                  if op.op == wanted]
    op = session.rng.choice(candidates)
    item = state.bundle.item(op.product_id)
    ctx.reprice(op)
    intent = Intent.NEGOTIATE_ADD_X if wanted == "add" else Intent.NEGOTIATE_REMOVE_X
    turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(intent),
                        price_offer=ctx.state.seller_price, bundle_ops=(op,),
                        info_slots=_slots(ctx, item_name=item.name,
                                          price=ctx.state.seller_price))
    return realize_agent(turn, session)
