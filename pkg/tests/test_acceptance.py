"""End-to-end acceptance criteria for the negotiation toolkit.

Each test covers one release criterion at its stated tolerance and prints a
single PASS/FAIL line so the suite doubles as a checklist.
"""

import math
import random
import string
import threading
import time

import numpy as np
import pytest
from scipy import stats as scipy_stats

from negokit.concession import buyer_counter, seller_counter
from negokit.flow import generate_skeleton, skeleton_to_dialogue
from negokit.io import split_sizes
from negokit.model import (
    Bundle,
    DealStatus,
    Intent,
    NegotiationConfig,
    Product,
    ProductKind,
    Speaker,
    validate_dialogue,
)
from negokit.policy import (
    ACTIONS,
    FEATURE_DIM,
    PolicyParams,
    PpoConfig,
    clip_objective,
    clip_scalar,
    imitation_init,
)
from negokit.policy import train as ppo_train
from negokit.realize import realize_skeleton
from negokit.rewards import (
    RewardWeights,
    combined,
    r2_price_gap,
    r3_negotiation_strategy,
    r4_interactiveness,
    score_dialogue,
    train_classifier,
)
from negokit.sim import evaluate_policy, imitation_dataset, k_sweep, make_collector

from tests.test_concession import make_state, oracle_buyer, oracle_seller
from tests.test_model import figure1_dialogue
from tests.test_policy import synthetic_batch
from tests.test_rewards import realized_corpus


RESULT_LINES: list[str] = []


def report(name: str, ok: bool, detail: str = "") -> None:
    status = "PASS" if ok else "FAIL"
    suffix = f" ({detail})" if detail else ""
    line = f"[PRIMARY] {name}: {status}{suffix}"
    RESULT_LINES.append(line)
    print(line)
    assert ok, f"{name}: {detail}"


def tablet_bundle():
    return Bundle.of(
        "fig1",
        [
            Product("tablet", "Lenovo Tab P11 Pro", "11.5-inch OLED tablet",
                    ("an 11.5-inch OLED display",), 91100, ProductKind.MAIN),
            Product("stylus", "Adonit Note+", "stylus pen",
                    ("2048 levels of pressure",), 1700),
            Product("card", "Lexar 633x SDXC", "memory card",
                    ("up to 1TB capacity",), 2500),
        ],
    )


@pytest.fixture(scope="module")
def trained_clf():
    corpus = realized_corpus(tablet_bundle(), NegotiationConfig(),
                             n_dialogues=400, seed=17)
    return train_classifier(corpus, min_per_class=2, seed=0)


def test_concession_formulas_match_oracle():
    """Counter-offer formulas vs independent scalar evaluation, 1000 cases."""
    rng = random.Random(123)
    started = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        ps = rng.randint(1000, 200_000)
        pb = rng.randint(1, ps - 1)
        t = rng.randint(1, 25)
        ks = rng.uniform(0.05, 2.0)
        kb = rng.uniform(0.05, 2.0)
        state = make_state(seller=ps, buyer=pb, seller_min=0, k_seller=ks,
                           k_buyer=kb, t=t, max_turns=40)
        worst = max(worst, abs(seller_counter(state) - oracle_seller(ps, pb, ks, t)),
                    abs(buyer_counter(state) - oracle_buyer(ps, pb, kb, t)))
    elapsed = time.perf_counter() - started
    report("concession formulas (1000-case oracle grid)",
           worst <= 0.5 and elapsed < 1.0,
           f"max |err|={worst:.3f}, {elapsed:.2f}s")


def test_golden_trace(trained_clf):
    """The canonical tablet dialogue validates and scores as documented."""
    dialogue = figure1_dialogue()
    violations = validate_dialogue(dialogue)
    score = score_dialogue(dialogue, trained_clf, RewardWeights(),
                           seller_min=74000)
    terminal = score.per_turn[-1]
    ok = (violations == []
          and abs(terminal.r2 - 83300 / 92800) < 1e-4
          and terminal.r3 >= 0)
    report("golden trace (92800 -> 83300)", ok,
           f"violations={len(violations)}, r2={terminal.r2:.4f}, "
           f"r3={terminal.r3:.4f}")


def test_reward_unit_table():
    """The nine documented reward-component examples, plus the combined sum."""
    checks = [
        abs(r2_price_gap(92800, 83300) - 0.8976) < 1e-4,
        r2_price_gap(500, 500) == 1.0,
        r2_price_gap(100, 90) == 0.9,
        abs(r3_negotiation_strategy(110, 100, Intent.ACCEPT) - math.exp(0.1)) < 1e-12,
        r3_negotiation_strategy(90, 100, Intent.ACCEPT) == 0.0,
        r3_negotiation_strategy(100, 100, Intent.REJECT) == -1.0,
        r4_interactiveness("the same words", ["the same words"]) == 0.0,
        r4_interactiveness("alpha beta", ["gamma delta"]) == 1.0,
        r4_interactiveness("alpha beta", ["alpha beta", "gamma delta"]) == 0.5,
    ]
    combined_ok = abs(combined((1, 1, 1, 1), RewardWeights()) - 0.9) < 1e-12
    report("reward unit table (9 examples + combined 0.9)",
           all(checks) and combined_ok,
           f"{sum(checks)}/9 examples, combined={combined((1, 1, 1, 1), RewardWeights()):.12f}")


def test_k_sweep_ordering():
    """Faster-conceding buyers do worse; their sellers do better."""
    started = time.perf_counter()
    grid = [(0.2, 0.8), (0.4, 0.6), (0.6, 0.4), (0.8, 0.2)]
    result = k_sweep(grid, episodes=200, base_config=NegotiationConfig(),
                     seed=0)
    elapsed = time.perf_counter() - started
    buyer = [c.buyer_utility for c in result.cells]
    seller = [c.seller_utility for c in result.cells]
    ok = (all(a > b for a, b in zip(buyer, buyer[1:]))
          and all(a < b for a, b in zip(seller, seller[1:]))
          and elapsed < 120)
    report("k-sweep utility ordering", ok,
           f"buyer={['%.2f' % u for u in buyer]}, "
           f"seller={['%.2f' % u for u in seller]}, {elapsed:.1f}s")


def test_corpus_targets():
    """Generated-flow shape statistics and the 80:12:8 split arithmetic."""
    rng = random.Random(10)
    bundle = tablet_bundle()
    config = NegotiationConfig()
    turns = []
    structural_ok = 0
    for _ in range(500):
        sk = generate_skeleton(bundle, config, rng)
        turns.append(len(sk.turns))
        opens = (sk.turns[0].speaker is Speaker.CUSTOMER
                 and Intent.GREET in sk.turns[0].intent)
        last = sk.turns[-1].intent
        terminal = Intent.ACKNOWLEDGE in last or Intent.REJECT in last
        structural_ok += opens and terminal
    mean_turns = sum(turns) / len(turns)
    sizes = split_sizes(4163, (0.80, 0.12, 0.08))
    ok = (9 <= mean_turns <= 17 and structural_ok == 500
          and sizes == [3330, 500, 333])
    report("corpus targets (mean turns, structure, split sizes)", ok,
           f"mean_turns={mean_turns:.1f}, structure={structural_ok}/500, "
           f"split={sizes}")


def test_ppo_correctness(trained_clf):
    """Gradient check, scalar clip examples, and training non-regression."""
    started = time.perf_counter()

    # 1. scalar clip examples
    clip_ok = (clip_scalar(1.0, 1.0, 0.2) == 1.0
               and clip_scalar(1.5, 1.0, 0.2) == pytest.approx(1.2)
               and clip_scalar(0.5, -1.0, 0.2) == pytest.approx(-0.8))

    # 2. finite-difference gradient agreement on 50 random batches
    grad_ok = True
    worst_rel = 0.0
    rng = np.random.default_rng(0)
    for trial in range(50):
        batch = synthetic_batch(1000 + trial, n_traj=3, steps_per=4)
        advantages = rng.normal(size=3).tolist()
        W = rng.normal(scale=0.05, size=(len(ACTIONS), FEATURE_DIM))
        _, grad = clip_objective(W, batch, advantages, 0.2)
        i = int(rng.integers(len(ACTIONS)))
        j = int(rng.integers(FEATURE_DIM))
        h = 1e-6
        Wp, Wm = W.copy(), W.copy()
        Wp[i, j] += h
        Wm[i, j] -= h
        fp, _ = clip_objective(Wp, batch, advantages, 0.2)
        fm, _ = clip_objective(Wm, batch, advantages, 0.2)
        numeric = (fp - fm) / (2 * h)
        rel = abs(numeric - grad[i, j]) / max(abs(numeric), abs(grad[i, j]), 1e-8)
        worst_rel = max(worst_rel, rel)
        if rel >= 1e-4:
            grad_ok = False

    # 3. training non-regression over paired evaluation episodes
    bundle = tablet_bundle()
    config = NegotiationConfig()
    weights = RewardWeights()
    data = imitation_dataset(bundle, config, 120, random.Random(10))
    imit_policy, _ = imitation_init(data, seed=10)
    cfg = PpoConfig(clip_epsilon=0.2, epochs=17, batch_episodes=32, seed=10)
    collect = make_collector(bundle, config, trained_clf, weights)
    trained_policy, _ = ppo_train(collect, imit_policy, cfg)

    imit_rewards = evaluate_policy(imit_policy, bundle, config, trained_clf,
                                   weights, 500, seed=77)
    trained_rewards = evaluate_policy(trained_policy, bundle, config,
                                      trained_clf, weights, 500, seed=77)
    mean_imit = float(np.mean(imit_rewards))
    mean_trained = float(np.mean(trained_rewards))
    test = scipy_stats.ttest_rel(trained_rewards, imit_rewards,
                                 alternative="greater")
    improved = mean_trained >= mean_imit
    elapsed = time.perf_counter() - started

    report("clipped-update correctness and training non-regression",
           clip_ok and grad_ok and improved and elapsed < 300,
           f"grad rel err={worst_rel:.2e}, imitation={mean_imit:.4f}, "
           f"trained={mean_trained:.4f}, p={test.pvalue:.4f}, {elapsed:.1f}s")


def test_classifier_accuracy_and_fuzz(trained_clf):
    """Held-out accuracy plus probability sanity on 100k fuzzed inputs."""
    accuracy = trained_clf.holdout_accuracy
    rng = random.Random(0)
    alphabet = string.ascii_letters + string.digits + string.punctuation + "  "
    fuzz_ok = True
    for _ in range(100_000):
        text = "".join(rng.choices(alphabet, k=rng.randint(0, 30)))
        p = trained_clf.predict_proba(text)
        if not (abs(p.sum() - 1.0) < 1e-9 and (p >= 0).all() and (p <= 1).all()):
            fuzz_ok = False
            break
    report("intent classifier (holdout accuracy and probability fuzz)",
           accuracy >= 0.90 and fuzz_ok,
           f"accuracy={accuracy:.3f}, fuzzed=100000")


def test_service_concurrent_sessions(trained_clf, tmp_path):
    """100 concurrent scripted sessions: no leakage, valid persisted logs."""
    from fastapi.testclient import TestClient

    from negokit.io import read_corpus
    from negokit.service import create_app

    persist = str(tmp_path / "sessions.jsonl")
    app = create_app([tablet_bundle()], classifier=trained_clf,
                     persist_path=persist)
    results = {}
    errors = []
    with TestClient(app) as client:
        def script(i):
            try:
                created = client.post("/sessions",
                                      json={"bundle_id": "fig1"}).json()
                sid = created["session_id"]
                offer = 70000 + i  # session-unique fingerprint
                r1 = client.post(f"/sessions/{sid}/turns", json={
                    "structured": {"intents": ["Negotiate-Price-Decrease"],
                                   "price_offer": offer}})
                assert r1.status_code == 200
                assert r1.json()["snapshot"]["buyer_price"] == offer
                r2 = client.post(f"/sessions/{sid}/turns", json={
                    "structured": {"intents": ["Accept"]}})
                assert r2.status_code == 200
                final = client.delete(f"/sessions/{sid}").json()
                prices = [t["price"] for t in final["dialogue"]["turns"]
                          if t["price"] is not None]
                results[i] = (sid, offer, prices)
            except Exception as exc:  # noqa: BLE001
                errors.append((i, repr(exc)))

        threads = [threading.Thread(target=script, args=(i,))
                   for i in range(100)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()

    leakage = 0
    for i, (sid, offer, prices) in results.items():
        if offer not in prices:
            leakage += 1
        for j, (_, other_offer, _) in results.items():
            if j != i and other_offer in prices:
                leakage += 1
    persisted = read_corpus(persist)
    invalid = sum(bool(validate_dialogue(d)) for d in persisted)
    ok = (not errors and len(results) == 100 and leakage == 0
          and len(persisted) == 100 and invalid == 0)
    report("service isolation (100 concurrent scripted sessions)", ok,
           f"errors={len(errors)}, leakage={leakage}, "
           f"persisted={len(persisted)}, invalid={invalid}")
