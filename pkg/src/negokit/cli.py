"""Operator command line: generate, sweep, score, train, serve."""

from __future__ import annotations

import json
import os
import random
import sys

import click

from .model import NegotiationConfig, ProductKind
from .rewards import RewardWeights

EXIT_CONFIG = 1
EXIT_IO = 2


def _fail(code: int, message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


def _load_catalog_or_die(path: str):
    from .io import BadCatalog, IoFailure, load_catalog

    try:
        return load_catalog(path)
    except (BadCatalog, IoFailure) as exc:
        _fail(EXIT_CONFIG, f"catalog: {exc}")


def _parse_weights(text: str) -> RewardWeights:
    parts = [float(p) for p in text.split(",")]
    if len(parts) != 4:
        raise ValueError("need four comma-separated weights")
    return RewardWeights(*parts)


@click.group()
def main():
    """Negotiation dialogue toolkit."""


@main.command()
@click.option("--catalog", "catalog_path", required=True, type=str)
@click.option("--n", "n", required=True, type=int)
@click.option("--seed", default=10, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=str)
@click.option("--realize", "realize_mode", default="template",
              show_default=True,
              help="'template' or an HTTP endpoint URL for text generation.")
def generate(catalog_path, n, seed, out_dir, realize_mode):
    """Generate a dialogue corpus with train/test/valid splits."""
    from . import realize as realization
    from .flow import generate_corpus, skeleton_to_dialogue
    from .io import (IoFailure, build_manifest, catalog_checksum, split_corpus,
                     write_corpus)
    from .sim import corpus_stats

    if n <= 0:
        _fail(EXIT_CONFIG, "--n must be positive")
    bundles = _load_catalog_or_die(catalog_path)
    rng = random.Random(seed)
    skeletons = generate_corpus(bundles, n, NegotiationConfig(), rng)

    endpoint = None if realize_mode == "template" else realize_mode
    shot_bank = realization.default_shot_bank() if endpoint else None
    fallbacks = 0
    dialogues = []
    for i, sk in enumerate(skeletons):
        texts = []
        for turn in sk.turns:
            template_text = realization.realize(turn, rng=rng)
            if endpoint is None:
                texts.append(template_text)
                continue
            try:
                spec = realization.build_prompt(turn, None, None, shot_bank)
            except realization.NoShotsForIntent:
                texts.append(template_text)
                fallbacks += 1
                continue
            out = realization.generate_external(spec, endpoint, timeout=2.0,
                                                fallback=template_text)
            if out.source == "fallback":
                fallbacks += 1
            texts.append(out.text)
        dialogues.append(skeleton_to_dialogue(sk, f"gen-{seed}-{i}", texts))
    if fallbacks:
        click.echo(f"warning: endpoint unavailable for {fallbacks} turns; "
                   "used template fallback", err=True)

    splits = split_corpus(dialogues, seed=seed)
    try:
        os.makedirs(out_dir, exist_ok=True)
        for name, part in zip(("train", "test", "valid"), splits):
            write_corpus(part, os.path.join(out_dir, f"{name}.jsonl"))
        manifest = build_manifest(splits, (0.80, 0.12, 0.08), seed,
                                  catalog_checksum(catalog_path))
        manifest.save(os.path.join(out_dir, "manifest.json"))
    except (OSError, IoFailure) as exc:
        _fail(EXIT_IO, str(exc))

    stats = corpus_stats(dialogues, pairs=min(1000, max(2, n * 3)), seed=seed)
    for key, value in stats.items():
        if isinstance(value, float):
            click.echo(f"{key}: {value:.4f}")
        else:
            click.echo(f"{key}: {value}")


@main.command()
@click.option("--grid", default="0.2:0.8,0.4:0.6,0.6:0.4,0.8:0.2",
              show_default=True,
              help="comma-separated k_buyer:k_seller pairs")
@click.option("--episodes", default=500, show_default=True, type=int)
@click.option("--seed", default=10, show_default=True, type=int)
@click.option("--out", "out_path", default="sweep.csv", show_default=True)
def sweep(grid, episodes, seed, out_path):
    """Mean surplus utilities per concession-rate pair (price simulation)."""
    from .sim import k_sweep, write_sweep_csv

    if episodes <= 0:
        _fail(EXIT_CONFIG, "--episodes must be positive")
    try:
        pairs = [tuple(float(x) for x in cell.split(":"))
                 for cell in grid.split(",")]
        if any(len(p) != 2 for p in pairs):
            raise ValueError
    except ValueError:
        _fail(EXIT_CONFIG, f"cannot parse grid {grid!r}")
    try:
        result = k_sweep(pairs, episodes, NegotiationConfig(), seed=seed)
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    try:
        write_sweep_csv(result, out_path)
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    for cell in result.cells:
        click.echo(f"k_buyer={cell.k_buyer} k_seller={cell.k_seller} "
                   f"buyer={cell.buyer_utility:.4f} "
                   f"seller={cell.seller_utility:.4f} "
                   f"accept={cell.accept_rate:.3f}")


@main.command()
@click.option("--in", "in_path", required=True, type=str)
@click.option("--weights", default="0.2,0.2,0.3,0.2", show_default=True)
@click.option("--pmin", required=True, type=int)
@click.option("--classifier", "classifier_path", default=None, type=str,
              help="saved classifier JSON; trained on the corpus if omitted")
def score(in_path, weights, pmin, classifier_path):
    """Per-dialogue reward report over a corpus file."""
    from .io import IoFailure, SchemaViolation, read_corpus
    from .rewards import (InsufficientData, IntentClassifier, score_dialogue,
                          train_classifier)

    try:
        w = _parse_weights(weights)
    except ValueError as exc:
        _fail(EXIT_CONFIG, f"weights: {exc}")
    if pmin <= 0:
        _fail(EXIT_CONFIG, "--pmin must be positive")
    try:
        corpus = read_corpus(in_path)
    except IoFailure as exc:
        _fail(EXIT_CONFIG, str(exc))
    except SchemaViolation as exc:
        _fail(EXIT_IO, str(exc))
    if not corpus:
        _fail(EXIT_CONFIG, "corpus is empty")

    if classifier_path:
        try:
            clf = IntentClassifier.load(classifier_path)
        except (OSError, KeyError, ValueError) as exc:
            _fail(EXIT_CONFIG, f"classifier: {exc}")
    else:
        pairs = [(t.text, t.intent.render()) for d in corpus for t in d.turns
                 if t.text]
        try:
            clf = train_classifier(pairs, min_per_class=1, seed=0)
        except InsufficientData as exc:
            _fail(EXIT_CONFIG, str(exc))

    for d in corpus:
        s = score_dialogue(d, clf, w, pmin)
        terminal = s.per_turn[-1]
        click.echo(f"{d.id} episode={s.episode_total:.4f} "
                   f"r1={terminal.r1:.4f} r2={terminal.r2:.4f} "
                   f"r3={terminal.r3:.4f} r4={terminal.r4:.4f}")


@main.command()
@click.option("--catalog", "catalog_path", required=True, type=str)
@click.option("--epochs", default=17, show_default=True, type=int)
@click.option("--clip", default=0.2, show_default=True, type=float)
@click.option("--seed", default=10, show_default=True, type=int)
@click.option("--batch-episodes", default=8, show_default=True, type=int)
@click.option("--out", "out_dir", default=".", show_default=True)
def train(catalog_path, epochs, clip, seed, batch_episodes, out_dir):
    """Imitation-initialize the policy, then optimize it by clipped updates."""
    from .flow import generate_skeleton
    from .policy import PpoConfig, imitation_init
    from .policy import train as run_training
    from .policy import write_training_log
    from .realize import realize_skeleton
    from .rewards import train_classifier
    from .sim import imitation_dataset, make_collector

    bundles = _load_catalog_or_die(catalog_path)
    try:
        cfg = PpoConfig(clip_epsilon=clip, epochs=epochs,
                        batch_episodes=batch_episodes, seed=seed)
    except ValueError as exc:
        _fail(EXIT_CONFIG, str(exc))
    bundle = bundles[0]
    config = NegotiationConfig()
    rng = random.Random(seed)

    pairs = []
    for _ in range(150):
        sk = generate_skeleton(bundle, config, rng)
        pairs.extend((text, turn.intent.render())
                     for turn, text in zip(sk.turns, realize_skeleton(sk, rng)))
    clf = train_classifier(pairs, min_per_class=1, seed=seed)

    data = imitation_dataset(bundle, config, 80, rng)
    policy, accuracy = imitation_init(data, seed=seed)
    click.echo(f"imitation accuracy: {accuracy:.3f}")

    collect = make_collector(bundle, config, clf, RewardWeights())
    policy, rows = run_training(collect, policy, cfg)
    try:
        os.makedirs(out_dir, exist_ok=True)
        policy.save(os.path.join(out_dir, "policy.json"))
        write_training_log(rows, os.path.join(out_dir, "training_log.csv"))
    except OSError as exc:
        _fail(EXIT_IO, str(exc))
    click.echo(f"epochs: {len(rows)}")
    click.echo(f"final mean reward: {rows[-1].mean_reward:.4f}")


@main.command()
@click.option("--port", default=8000, show_default=True, type=int)
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--catalog", "catalog_path", required=True, type=str)
@click.option("--policy", "policy_path", default=None, type=str)
@click.option("--classifier", "classifier_path", default=None, type=str)
@click.option("--sessions-out", default="sessions.jsonl", show_default=True)
def serve(port, host, catalog_path, policy_path, classifier_path, sessions_out):
    """Host live negotiation sessions over HTTP."""
    import uvicorn

    from .policy import PolicyParams
    from .rewards import IntentClassifier
    from .service import create_app

    bundles = _load_catalog_or_die(catalog_path)
    policy = None
    if policy_path:
        try:
            policy = PolicyParams.load(policy_path)
        except (OSError, KeyError, ValueError) as exc:
            _fail(EXIT_CONFIG, f"policy: {exc}")
    clf = None
    if classifier_path:
        try:
            clf = IntentClassifier.load(classifier_path)
        except (OSError, KeyError, ValueError) as exc:
            _fail(EXIT_CONFIG, f"classifier: {exc}")

    app = create_app(bundles, classifier=clf, policy=policy,
                     persist_path=sessions_out)
    try:
        uvicorn.run(app, host=host, port=port)
    finally:
        # persist whatever sessions are still open when the server stops
        app.state.close_all_sessions()


if __name__ == "__main__":
    main()
