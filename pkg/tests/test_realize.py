import json
import random
import re
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from negokit.flow import SkeletonTurn, generate_skeleton
from negokit.model import BundleOp, CompositeIntent, Intent, Speaker
from negokit.realize import (
    GENERATION_CUE,
    MissingTemplate,
    NoShotsForIntent,
    PromptSpec,
    TEMPLATES,
    build_prompt,
    default_shot_bank,
    generate_external,
    realize,
    realize_skeleton,
)


def remove_turn():
    return SkeletonTurn(
        Speaker.CUSTOMER, CompositeIntent.of(Intent.NEGOTIATE_REMOVE_X),
        bundle_ops=(BundleOp.remove("stylus"),),
        info_slots={"item_name": "stylus", "product_name": "tablet",
                    "item_names": "tablet, card"},
    )


def inform_turn(price=91100):
    return SkeletonTurn(
        Speaker.AGENT, CompositeIntent.of(Intent.INFORM), price_offer=price,
        info_slots={"item_names": "tablet, card", "product_name": "tablet"},
    )


class TestRealize:
    def test_remove_mentions_item_and_inform_mentions_price(self, rng):
        assert "stylus" in realize(remove_turn(), rng=rng)
        assert "91100" in realize(inform_turn(), rng=random.Random(1))

    def test_acknowledge_is_slotless_template(self):
        turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.ACKNOWLEDGE))
        assert realize(turn, rng=random.Random(2)) in TEMPLATES["Acknowledge"]

    def test_determinism(self):
        a = realize(remove_turn(), rng=random.Random(5))
        b = realize(remove_turn(), rng=random.Random(5))
        assert a == b

    def test_missing_template(self):
        turn = SkeletonTurn(Speaker.CUSTOMER,
                            CompositeIntent.of(Intent.AVOID_REJECTION))
        with pytest.raises(MissingTemplate):
            realize(turn, rng=random.Random(0))

    def test_no_placeholders_survive(self, tablet_bundle, config):
        rng = random.Random(8)
        for i in range(100):
            sk = generate_skeleton(tablet_bundle, config, rng)
            for text in realize_skeleton(sk, rng):
                assert "{" not in text and "}" not in text

    def test_template_diversity(self):
        texts = {realize(remove_turn(), rng=random.Random(seed))
                 for seed in range(100)}
        assert len(texts) >= 2

    def test_groundedness_prices_come_from_skeleton(self, tablet_bundle, config):
        rng = random.Random(13)
        for i in range(50):
            sk = generate_skeleton(tablet_bundle, config, rng)
            known = {str(t.price_offer) for t in sk.turns if t.price_offer is not None}
            for turn, text in zip(sk.turns, realize_skeleton(sk, rng)):
                for num in re.findall(r"\$(\d+)", text):
                    assert num in known


class TestBuildPrompt:
    def test_four_shots_and_cue(self):
        bank = default_shot_bank()
        turn = SkeletonTurn(
            Speaker.AGENT, CompositeIntent.of(Intent.NEGOTIATE_PRICE_NOCHANGE),
            price_offer=51300,
            info_slots={"product_name": "Nikon Z7 II", "feature": "a 45.7 MP sensor",
                        "item_names": "Nikon Z7 II"})
        spec = build_prompt(turn, None, None, bank)
        assert 1 <= len(spec.shots) <= 4
        rendered = spec.render()
        assert rendered.rstrip().endswith(GENERATION_CUE)
        assert "$51300" in rendered

    def test_budget_trims_shots(self):
        bank = default_shot_bank()
        turn = inform_turn()
        full = build_prompt(turn, None, None, bank, token_budget=2048)
        trimmed = build_prompt(turn, None, None, bank, token_budget=100)
        assert len(trimmed.shots) <= len(full.shots)
        assert len(trimmed.shots) >= 1
        assert trimmed.token_estimate() <= 100

    def test_remove_prompt_names_item(self):
        spec = build_prompt(remove_turn(), None, None, default_shot_bank())
        assert "stylus" in spec.live_summary

    def test_no_shots(self):
        turn = SkeletonTurn(Speaker.AGENT, CompositeIntent.of(Intent.AVOID_REJECTION))
        with pytest.raises(NoShotsForIntent):
            build_prompt(turn, None, None, {})

    def test_prompt_is_pure(self):
        bank = default_shot_bank()
        assert build_prompt(remove_turn(), None, None, bank) == \
            build_prompt(remove_turn(), None, None, bank)


class _StubHandler(BaseHTTPRequestHandler):
    def do_POST(self):
        length = int(self.headers["Content-Length"])
        body = json.loads(self.rfile.read(length))
        reply = {"text": "Sure, the deal works.\nExtra trailing line"}
        assert "prompt" in body and body["max_tokens"] == 50
        payload = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


@pytest.fixture
def stub_server():
    server = HTTPServer(("127.0.0.1", 0), _StubHandler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{server.server_port}/generate"
    server.shutdown()


class TestGenerateExternal:
    def spec(self):
        return PromptSpec(CompositeIntent.of(Intent.INFORM), (), "Deal summary.")

    def test_unreachable_endpoint_falls_back(self):
        out = generate_external(self.spec(), "http://127.0.0.1:1/generate",
                                timeout=0.3, fallback="template text")
        assert out.source == "fallback"
        assert out.text == "template text"

    def test_live_endpoint_trims_at_delimiter(self, stub_server):
        out = generate_external(self.spec(), stub_server, timeout=5)
        assert out.source == "endpoint"
        assert out.text == "Sure, the deal works."


def test_every_reachable_intent_has_three_templates(tablet_bundle, config):
    rng = random.Random(21)
    reachable = set()
    for _ in range(500):
        for turn in generate_skeleton(tablet_bundle, config, rng).turns:
            reachable.add(turn.intent.render())
    for name in reachable:
        assert len(TEMPLATES[name]) >= 3, name
