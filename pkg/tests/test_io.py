import json
import random

import pytest
from hypothesis import given, settings, strategies as st

from negokit.flow import generate_skeleton, skeleton_to_dialogue
from negokit.io import (
    BadCatalog,
    BadRatios,
    CorpusManifest,
    IoFailure,
    SchemaViolation,
    build_manifest,
    catalog_checksum,
    corpus_checksum,
    dialogue_to_record,
    load_catalog,
    read_corpus,
    record_to_dialogue,
    split_corpus,
    split_sizes,
    write_corpus,
)
from negokit.model import validate_dialogue
from negokit.realize import realize_skeleton


def sample_corpus(bundle, config, n=100, seed=31):
    rng = random.Random(seed)
    out = []
    for i in range(n):
        sk = generate_skeleton(bundle, config, rng)
        out.append(skeleton_to_dialogue(sk, f"d{i}", realize_skeleton(sk, rng)))
    return out


class TestRoundTrip:
    def test_hundred_dialogues_field_for_field(self, tablet_bundle, config,
                                               tmp_path):
        corpus = sample_corpus(tablet_bundle, config, n=100)
        path = tmp_path / "corpus.jsonl"
        write_corpus(corpus, str(path))
        loaded = read_corpus(str(path))
        assert loaded == corpus

    def test_figure1_revalidates_after_round_trip(self, tmp_path):
        from tests.test_model import figure1_dialogue

        d = figure1_dialogue()
        path = tmp_path / "fig.jsonl"
        write_corpus([d], str(path))
        loaded = read_corpus(str(path))[0]
        assert loaded == d
        assert validate_dialogue(loaded) == []

    def test_record_shape_matches_wire_schema(self, tablet_bundle, config):
        d = sample_corpus(tablet_bundle, config, n=1)[0]
        record = dialogue_to_record(d)
        assert set(record) == {"id", "bundle", "turns", "outcome"}
        assert set(record["outcome"]) == {"status", "final_price"}
        for t in record["turns"]:
            assert set(t) == {"speaker", "intents", "text", "price", "ops"}
            assert isinstance(t["intents"], list)

    def test_truncated_line_reports_line_number(self, tablet_bundle, config,
                                                tmp_path):
        corpus = sample_corpus(tablet_bundle, config, n=3)
        path = tmp_path / "broken.jsonl"
        lines = [json.dumps(dialogue_to_record(d)) for d in corpus]
        lines[1] = lines[1][: len(lines[1]) // 2]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(SchemaViolation) as err:
            read_corpus(str(path))
        assert err.value.line == 2

    def test_missing_field_is_schema_violation(self, tmp_path):
        record = {"id": "x", "bundle": {"items": [], "active": []},
                  "outcome": {"status": "accepted"}}  # no turns
        path = tmp_path / "bad.jsonl"
        path.write_text(json.dumps(record) + "\n")
        with pytest.raises(SchemaViolation):
            read_corpus(str(path))

    def test_missing_file_is_io_failure(self, tmp_path):
        with pytest.raises(IoFailure):
            read_corpus(str(tmp_path / "nope.jsonl"))

    def test_blank_lines_skipped(self, tablet_bundle, config, tmp_path):
        corpus = sample_corpus(tablet_bundle, config, n=2)
        path = tmp_path / "gaps.jsonl"
        lines = [json.dumps(dialogue_to_record(d)) for d in corpus]
        path.write_text(lines[0] + "\n\n" + lines[1] + "\n")
        assert read_corpus(str(path)) == corpus


class TestSplit:
    def test_table_sizes_for_4163(self):
        assert split_sizes(4163, (0.80, 0.12, 0.08)) == [3330, 500, 333]

    def test_partition_disjoint_exhaustive(self, tablet_bundle, config):
        corpus = sample_corpus(tablet_bundle, config, n=57)
        train, test, valid = split_corpus(corpus, seed=4)
        assert len(train) + len(test) + len(valid) == 57
        ids = [d.id for part in (train, test, valid) for d in part]
        assert sorted(ids) == sorted(d.id for d in corpus)
        assert len(set(ids)) == len(ids)

    def test_everything_in_train(self, tablet_bundle, config):
        corpus = sample_corpus(tablet_bundle, config, n=9)
        train, test, valid = split_corpus(corpus, (1.0, 0.0, 0.0), seed=0)
        assert len(train) == 9 and not test and not valid

    def test_same_seed_same_partition(self, tablet_bundle, config):
        corpus = sample_corpus(tablet_bundle, config, n=30)
        a = split_corpus(corpus, seed=11)
        b = split_corpus(corpus, seed=11)
        assert [[d.id for d in part] for part in a] == \
            [[d.id for d in part] for part in b]

    def test_bad_ratios(self, tablet_bundle, config):
        corpus = sample_corpus(tablet_bundle, config, n=3)
        with pytest.raises(BadRatios):
            split_corpus(corpus, (0.5, 0.5, 0.5))
        with pytest.raises(BadRatios):
            split_corpus(corpus, (0.9, 0.2, -0.1))

    @settings(max_examples=60, deadline=None)
    @given(n=st.integers(0, 5000))
    def test_sizes_within_one_of_exact(self, n):
        ratios = (0.80, 0.12, 0.08)
        sizes = split_sizes(n, ratios)
        assert sum(sizes) == n
        for size, r in zip(sizes, ratios):
            assert abs(size - n * r) < 1


class TestManifest:
    def test_reproducible_checksum(self, tablet_bundle, config):
        corpus = sample_corpus(tablet_bundle, config, n=20)
        assert corpus_checksum(corpus) == corpus_checksum(list(corpus))

    def test_build_and_roundtrip(self, tablet_bundle, config, tmp_path):
        corpus = sample_corpus(tablet_bundle, config, n=25)
        splits = split_corpus(corpus, seed=10)
        manifest = build_manifest(splits, (0.80, 0.12, 0.08), 10, "cafe")
        assert sum(manifest.counts.values()) == 25
        path = tmp_path / "manifest.json"
        manifest.save(str(path))
        assert CorpusManifest.load(str(path)) == manifest


CATALOG = {
    "products": [
        {"id": "tablet", "name": "Lenovo Tab P11 Pro",
         "description": "11.5-inch OLED tablet",
         "features": ["an 11.5-inch OLED display"], "price": 91100,
         "kind": "main", "accessories": ["stylus", "card"]},
        {"id": "stylus", "name": "Adonit Note+", "price": 1700,
         "kind": "accessory"},
        {"id": "card", "name": "Lexar 633x SDXC", "price": 2500,
         "kind": "accessory"},
        {"id": "camera", "name": "Nikon Z7 II", "price": 249700,
         "kind": "main", "accessories": ["card"]},
    ]
}


class TestCatalog:
    def write(self, tmp_path, payload):
        path = tmp_path / "catalog.json"
        path.write_text(json.dumps(payload))
        return str(path)

    def test_one_bundle_per_main(self, tmp_path):
        bundles = load_catalog(self.write(tmp_path, CATALOG))
        assert sorted(b.id for b in bundles) == ["camera", "tablet"]
        tablet = next(b for b in bundles if b.id == "tablet")
        assert {p.id for p in tablet.items} == {"tablet", "stylus", "card"}
        assert tablet.main.unit_price == 91100

    def test_duplicate_ids_rejected(self, tmp_path):
        payload = {"products": CATALOG["products"] +
                   [{"id": "tablet", "name": "dup", "price": 1, "kind": "main"}]}
        with pytest.raises(BadCatalog):
            load_catalog(self.write(tmp_path, payload))

    def test_unknown_accessory_rejected(self, tmp_path):
        payload = {"products": [
            {"id": "m", "name": "M", "price": 10, "kind": "main",
             "accessories": ["ghost"]}]}
        with pytest.raises(BadCatalog):
            load_catalog(self.write(tmp_path, payload))

    def test_no_main_rejected(self, tmp_path):
        payload = {"products": [
            {"id": "a", "name": "A", "price": 10, "kind": "accessory"}]}
        with pytest.raises(BadCatalog):
            load_catalog(self.write(tmp_path, payload))

    def test_missing_file(self, tmp_path):
        with pytest.raises(IoFailure):
            load_catalog(str(tmp_path / "none.json"))
        with pytest.raises(IoFailure):
            catalog_checksum(str(tmp_path / "none.json"))

    def test_checksum_stable(self, tmp_path):
        path = self.write(tmp_path, CATALOG)
        assert catalog_checksum(path) == catalog_checksum(path)
