import dataclasses
import json

import pytest

from phenokit.metrics import labels_from_csv
from phenokit.store import Store
from phenokit.synthgen import (
    DiseaseModule,
    RateSpec,
    SimulationConfig,
    SynthError,
    config_from_doc,
    generate,
    load_config,
    validate_config,
)

# chi-square 0.999 quantiles; a draw this skewed happens ~1/1000 runs
CHI2_999 = {1: 10.828, 4: 18.467}


def _config(**overrides):
    base = SimulationConfig(
        seed=5,
        n_persons=50,
        as_of="2020-12-31",
        demographics={
            "gender": (("F", 0.5), ("M", 0.5)),
            "race": (("A", 0.5), ("B", 0.5)),
            "ethnicity": (("NH", 1.0),),
        },
        age_range=(20, 60),
        observation_min_days=365,
        observation_max_days=3650,
        diseases=(
            DiseaseModule(
                name="thing",
                prevalence=RateSpec(0.4),
                diagnosis_concepts=(1001,),
                diagnosis_emission_prob=RateSpec(0.9),
            ),
        ),
    )
    return dataclasses.replace(base, **overrides)


def test_load_config_reads_fixture(fixtures_dir):
    config = load_config(fixtures_dir / "sim_small.json")
    assert config.seed == 42
    assert config.n_persons == 1000
    assert [d.name for d in config.diseases] == ["hypertension", "diabetes"]
    assert config.diseases[0].diagnosis_emission_prob.default == 0.9
    assert config.noise.condition_concepts == (8001, 8002, 8003)


def test_config_from_doc_requires_seed():
    with pytest.raises(SynthError, match="seed"):
        config_from_doc({"n_persons": 10})


def test_validation_rejects_bad_configs():
    cases = [
        ({"n_persons": 0}, "n_persons"),
        ({"age_range": (60, 20)}, "interval"),
        ({"observation_min_days": 0}, "observation day bounds"),
        ({"demographics": {"gender": (("F", 0.7), ("M", 0.7)),
                           "race": (("A", 1.0),),
                           "ethnicity": (("NH", 1.0),)}}, "sum"),
        ({"demographics": {"gender": (("F", 1.0),),
                           "race": (("A", 1.0),),
                           "shoe_size": (("L", 1.0),)}}, "axis"),
    ]
    for overrides, fragment in cases:
        with pytest.raises(SynthError, match=fragment):
            validate_config(_config(**overrides))
    from phenokit.synthgen import NoiseModel
    with pytest.raises(SynthError, match="contaminate"):
        validate_config(_config(noise=NoiseModel((1001,), 1, 2)))


def test_validation_rejects_bad_disease_modules():
    bad_prob = dataclasses.replace(
        _config().diseases[0], prevalence=RateSpec(1.5))
    with pytest.raises(SynthError, match="probability"):
        validate_config(_config(diseases=(bad_prob,)))
    dup = _config(diseases=(_config().diseases[0],) * 2)
    with pytest.raises(SynthError, match="duplicate"):
        validate_config(dup)


def test_rate_spec_override_lookup():
    spec = RateSpec(0.9, (("race", "B", 0.45),))
    assert spec.all_rates() == [0.9, 0.45]
    with pytest.raises(SynthError, match="unknown"):
        RateSpec.from_doc({"default": 0.5, "overrides": [
            {"axis": "hair", "value": "x", "rate": 0.1}]}, "p")


def test_generate_rejects_unknown_concepts(tmp_path, vocab):
    bad = dataclasses.replace(
        _config().diseases[0], diagnosis_concepts=(424242,))
    with pytest.raises(SynthError, match="absent from the vocabulary"):
        generate(_config(diseases=(bad,)), vocab, tmp_path / "out")


def test_generate_is_deterministic(tmp_path, vocab):
    config = _config()
    a, b = tmp_path / "a", tmp_path / "b"
    manifest_a = generate(config, vocab, a)
    manifest_b = generate(config, vocab, b)
    assert manifest_a == manifest_b
    for name in ("persons.csv", "observation_periods.csv", "events.csv",
                 "labels.csv", "manifest.json"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_rate_override_leaves_other_subgroups_untouched(tmp_path, vocab):
    base = _config(n_persons=400)
    lowered = dataclasses.replace(
        base.diseases[0],
        diagnosis_emission_prob=RateSpec(0.9, (("race", "B", 0.2),)))
    arm_a, arm_b = tmp_path / "base", tmp_path / "low"
    generate(base, vocab, arm_a)
    generate(dataclasses.replace(base, diseases=(lowered,)), vocab, arm_b)

    assert (arm_a / "persons.csv").read_bytes() == (arm_b / "persons.csv").read_bytes()
    assert (arm_a / "labels.csv").read_bytes() == (arm_b / "labels.csv").read_bytes()

    store_a, store_b = Store.load(arm_a), Store.load(arm_b)
    race = {p.person_id: p.race for p in store_a.persons.values()}
    for pid, value in race.items():
        events_a = [(e.concept_id, e.start_day) for e in store_a.person_events(pid)]
        events_b = [(e.concept_id, e.start_day) for e in store_b.person_events(pid)]
        if value == "A":
            assert events_a == events_b
    dx_b = lambda s: sum(  # noqa: E731
        1 for pid, r in race.items() if r == "B"
        and any(e.concept_id == 1001 for e in s.person_events(pid)))
    assert dx_b(store_b) < dx_b(store_a)


def test_manifest_agrees_with_outputs(sim_small_dir):
    manifest = json.loads((sim_small_dir / "manifest.json").read_text(encoding="utf-8"))
    labels = labels_from_csv((sim_small_dir / "labels.csv").read_text(encoding="utf-8"))
    store = Store.load(sim_small_dir)
    assert manifest["n_persons"] == len(store.persons) == 1000
    assert manifest["n_events"] == sum(
        len(store.person_events(pid)) for pid in store.persons)
    for disease in manifest["diseases"]:
        assert disease["n_positive"] == len(labels[disease["name"]].positives)
        assert disease["n_diagnosis_emitted"] <= disease["n_positive"]
    assert sum(manifest["demographics"]["gender"].values()) == 1000


def test_demographic_draws_match_weights(sim_small_dir):
    # Pearson chi-square against the configured weights
    manifest = json.loads((sim_small_dir / "manifest.json").read_text(encoding="utf-8"))
    n = manifest["n_persons"]
    for axis, weights in (("gender", {"F": 0.5, "M": 0.5}),
                          ("race", {k: 0.2 for k in "ABCDE"})):
        counts = manifest["demographics"][axis]
        stat = sum((counts.get(k, 0) - n * w) ** 2 / (n * w) for k, w in weights.items())
        assert stat < CHI2_999[len(weights) - 1], (axis, stat)


def test_events_stay_inside_observation(sim_small_store):
    for pid, periods in sim_small_store.periods.items():
        for event in sim_small_store.person_events(pid):
            assert any(start <= event.start_day <= end for start, end in periods)


def test_prevalence_tracks_rate(sim_small_labels):
    positives = len(sim_small_labels["hypertension"].positives)
    # 0.3 * 1000 with ~3.7 sigma slack
    assert abs(positives - 300) < 55
