"""Persistence: dialogue corpus JSONL, deterministic splits, catalog loading."""

from __future__ import annotations

import hashlib
import json
import os
import threading
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from .model import (
    Bundle,
    BundleOp,
    CompositeIntent,
    DealStatus,
    Dialogue,
    DialogueTurn,
    Intent,
    Outcome,
    Product,
    ProductKind,
    Speaker,
)


class IoFailure(OSError):
    pass


class SchemaViolation(ValueError):
    def __init__(self, message: str, line: Optional[int] = None):
        self.line = line
        where = f"line {line}: " if line is not None else ""
        super().__init__(f"{where}{message}")


class BadRatios(ValueError):
    pass


class BadCatalog(ValueError):
    pass


SCHEMA_VERSION = "1"

_write_locks: dict[str, threading.Lock] = {}
_write_locks_guard = threading.Lock()


def _lock_for(path: str) -> threading.Lock:
    key = os.path.abspath(path)
    with _write_locks_guard:
        return _write_locks.setdefault(key, threading.Lock())


# ---------------------------------------------------------------------------
# Dialogue <-> JSON
# ---------------------------------------------------------------------------

def dialogue_to_record(dialogue: Dialogue) -> dict:
    return {
        "id": dialogue.id,
        "bundle": {
            "id": dialogue.bundle.id,
            "items": [
                {
                    "id": p.id, "name": p.name, "description": p.description,
                    "features": list(p.features), "price": p.unit_price,
                    "kind": p.kind.value,
                }
                for p in dialogue.bundle.items
            ],
            "active": sorted(dialogue.bundle.active),
        },
        "turns": [
            {
                "speaker": t.speaker.value,
                "intents": [a.value for a in t.intent.atoms],
                "text": t.text,
                "price": t.price_offer,
                "ops": [{"op": op.op, "id": op.product_id} for op in t.bundle_ops],
            }
            for t in dialogue.turns
        ],
        "outcome": {
            "status": dialogue.outcome.status.value,
            "final_price": dialogue.outcome.final_price,
        },
    }


def record_to_dialogue(record: dict, line: Optional[int] = None) -> Dialogue:
    try:
        items = tuple(
            Product(p["id"], p["name"], p.get("description", ""),
                    tuple(p.get("features", ())), p["price"],
                    ProductKind(p.get("kind", "accessory")))
            for p in record["bundle"]["items"]
        )
        bundle = Bundle(record["bundle"].get("id", record["id"]), items,
                        frozenset(record["bundle"]["active"]))
        turns = tuple(
            DialogueTurn(
                Speaker(t["speaker"]),
                CompositeIntent(tuple(Intent(n) for n in t["intents"])),
                t.get("text", ""),
                t.get("price"),
                tuple(BundleOp(op["op"], op["id"]) for op in t.get("ops", ())),
            )
            for t in record["turns"]
        )
        outcome = Outcome(DealStatus(record["outcome"]["status"]),
                          record["outcome"].get("final_price"))
        return Dialogue(record["id"], bundle, turns, outcome)
    except (KeyError, TypeError, ValueError) as exc:
        raise SchemaViolation(str(exc), line) from exc


# ---------------------------------------------------------------------------
# Corpus files
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorpusManifest:
    version: str
    seed: int
    split_ratios: tuple[float, float, float]
    counts: dict[str, int]
    catalog_checksum: str

    def save(self, path: str) -> None:
        with open(path, "w", encoding="utf-8") as f:
            json.dump(asdict(self), f, indent=2)

    @classmethod
    def load(cls, path: str) -> "CorpusManifest":
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
        return cls(raw["version"], raw["seed"], tuple(raw["split_ratios"]),
                   raw["counts"], raw["catalog_checksum"])


def corpus_checksum(corpus: Sequence[Dialogue]) -> str:
    h = hashlib.sha256()
    for d in corpus:
        h.update(json.dumps(dialogue_to_record(d), sort_keys=True).encode())
    return h.hexdigest()


def write_corpus(corpus: Sequence[Dialogue], path: str) -> None:
    """One dialogue per line; writers are serialized per target file."""
    try:
        with _lock_for(path):
            with open(path, "w", encoding="utf-8") as f:
                for d in corpus:
                    f.write(json.dumps(dialogue_to_record(d)) + "\n")
    except OSError as exc:
        raise IoFailure(str(exc)) from exc


def read_corpus(path: str) -> list[Dialogue]:
    try:
        with open(path, encoding="utf-8") as f:
            lines = f.readlines()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    out = []
    for i, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise SchemaViolation(f"bad JSON: {exc}", i) from exc
        out.append(record_to_dialogue(record, i))
    return out


# ---------------------------------------------------------------------------
# Splits
# ---------------------------------------------------------------------------

def split_sizes(n: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment of n into len(ratios) parts."""
    exact = [n * r for r in ratios]
    sizes = [int(e) for e in exact]
    remainders = sorted(range(len(ratios)), key=lambda i: exact[i] - sizes[i],
                        reverse=True)
    for i in range(n - sum(sizes)):
        sizes[remainders[i]] += 1
    return sizes


def split_corpus(corpus: Sequence[Dialogue],
                 ratios: tuple[float, float, float] = (0.80, 0.12, 0.08),
                 seed: int = 10) -> tuple[list[Dialogue], list[Dialogue],
                                          list[Dialogue]]:
    """Deterministic shuffle then contiguous train/test/valid partition."""
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise BadRatios(str(ratios))
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise BadRatios(f"ratios sum to {sum(ratios)}, expected 1")
    import random

    order = list(corpus)
    random.Random(seed).shuffle(order)
    a, b, _ = split_sizes(len(order), ratios)
    return order[:a], order[a:a + b], order[a + b:]


def build_manifest(splits: tuple[Sequence[Dialogue], Sequence[Dialogue],
                                 Sequence[Dialogue]],
                   ratios: tuple[float, float, float], seed: int,
                   catalog_checksum: str) -> CorpusManifest:
    train, test, valid = splits
    return CorpusManifest(
        version=SCHEMA_VERSION, seed=seed, split_ratios=tuple(ratios),
        counts={"train": len(train), "test": len(test), "valid": len(valid)},
        catalog_checksum=catalog_checksum,
    )


# ---------------------------------------------------------------------------
# Catalog
# ---------------------------------------------------------------------------

def load_catalog(path: str) -> list[Bundle]:
    """Catalog JSON -> one bundle per main product and its accessories.

    Format: {"products": [{"id", "name", "description", "features",
    "price", "kind", "accessories": [ids]}]}.
    """
    try:
        with open(path, encoding="utf-8") as f:
            raw = json.load(f)
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
    except json.JSONDecodeError as exc:
        raise BadCatalog(f"bad JSON: {exc}") from exc

    products_raw = raw.get("products")
    if not isinstance(products_raw, list) or not products_raw:
        raise BadCatalog("catalog needs a non-empty 'products' list")

    products: dict[str, Product] = {}
    accessories: dict[str, list[str]] = {}
    for p in products_raw:
        try:
            product = Product(p["id"], p["name"], p.get("description", ""),
                              tuple(p.get("features", ())), p["price"],
                              ProductKind(p.get("kind", "accessory")))
        except (KeyError, TypeError, ValueError) as exc:
            raise BadCatalog(str(exc)) from exc
        if product.id in products:
            raise BadCatalog(f"duplicate product id {product.id!r}")
        products[product.id] = product
        accessories[product.id] = list(p.get("accessories", ()))

    bundles = []
    for pid, product in products.items():
        if product.kind is not ProductKind.MAIN:
            continue
        items = [product]
        for aid in accessories[pid]:
            if aid not in products:
                raise BadCatalog(f"unknown accessory id {aid!r} on {pid!r}")
            items.append(products[aid])
        bundles.append(Bundle.of(pid, items))
    if not bundles:
        raise BadCatalog("catalog has no main products")
    return bundles


def catalog_checksum(path: str) -> str:
    try:
        with open(path, "rb") as f:
            return hashlib.sha256(f.read()).hexdigest()
    except OSError as exc:
        raise IoFailure(str(exc)) from exc
