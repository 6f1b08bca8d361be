import json
import random

import pytest

from defgen import sample_definitions
from phenokit.canonical import (
    CanonicalError,
    content_hash,
    from_canonical,
    load_definition,
    to_canonical,
    to_canonical_json,
)
from phenokit.dsl import parse


def test_round_trip_over_sampled_definitions():
    for d in sample_definitions(9001, 100):
        doc = to_canonical(d)
        assert from_canonical(doc) == d
        # JSON text round-trips too
        again = from_canonical(json.loads(to_canonical_json(d)))
        assert again == d


def test_key_order_is_fixed(fixtures_dir):
    d = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
    doc = to_canonical(d)
    assert list(doc) == [
        "id", "version", "metadata", "concept_sets", "entry",
        "prior_observation_days", "demographics", "rules", "exit",
        "era_gap_days",
    ]
    assert list(doc["metadata"]) == ["intent", "literature_refs", "authors", "role_waivers"]


def test_equal_definitions_hash_equal():
    rng1, rng2 = random.Random(5), random.Random(5)
    from defgen import sample_definition
    a = sample_definition(rng1, 1)
    b = sample_definition(rng2, 1)
    assert a == b
    assert content_hash(a) == content_hash(b)
    assert to_canonical_json(a) == to_canonical_json(b)


def test_hash_sensitive_to_content(fixtures_dir):
    import dataclasses
    d = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
    d2 = dataclasses.replace(d, prior_observation_days=30)
    assert content_hash(d) != content_hash(d2)


def test_canonical_json_trailing_newline(fixtures_dir):
    d = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
    text = to_canonical_json(d)
    assert text.endswith("}\n")
    assert json.loads(text)["id"] == "new-user hypertension"


def test_from_canonical_error_paths():
    base = json.loads(to_canonical_json(parse(
        'phenotype "x" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 1001 }\n'
        '  entry first condition in a\n'
        '  exit offset 0\n'
        '}\n')))

    bad = json.loads(json.dumps(base))
    bad["version"] = "one"
    with pytest.raises(CanonicalError) as err:
        from_canonical(bad)
    assert "$.version" in str(err.value)

    bad = json.loads(json.dumps(base))
    bad["concept_sets"][0]["items"][0]["include_descendants"] = 1
    with pytest.raises(CanonicalError) as err:
        from_canonical(bad)
    assert "include_descendants" in str(err.value)

    bad = json.loads(json.dumps(base))
    del bad["entry"]["domain"]
    with pytest.raises(CanonicalError) as err:
        from_canonical(bad)
    assert "$.entry.domain" in str(err.value)

    bad = json.loads(json.dumps(base))
    bad["exit"] = {"kind": "sideways"}
    with pytest.raises(CanonicalError):
        from_canonical(bad)


def test_from_canonical_defaults():
    doc = {
        "id": "d", "version": 1,
        "metadata": {"intent": "i"},
        "concept_sets": [{"set_id": 1, "name": "a", "items": [{"concept_id": 1001}]}],
        "entry": {"domain": "condition", "concept_set_ref": 1},
        "exit": {"kind": "fixed_offset", "days": 0},
    }
    d = from_canonical(doc)
    assert d.entry.occurrence.kind == "any"
    assert d.prior_observation_days == 0
    assert d.demographics is None
    assert d.rules == ()
    assert d.era_gap_days == 0


def test_load_definition_from_path_and_text(fixtures_dir, tmp_path):
    d = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
    json_path = tmp_path / "def.json"
    json_path.write_text(to_canonical_json(d), encoding="utf-8")
    assert load_definition(json_path) == d
    assert load_definition(to_canonical_json(d)) == d
    with pytest.raises(CanonicalError, match="not valid JSON"):
        load_definition("{broken")
