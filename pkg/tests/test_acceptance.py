"""End-to-end acceptance checks, one per numbered criterion.

Each test wraps its body in `criterion(...)`, which times the work,
enforces the stated budget, and records a PASS/FAIL line that the
conftest terminal-summary hook prints after the run.
"""
import dataclasses
import json
import math
import random
import time
from contextlib import contextmanager
from pathlib import Path

import pytest

from defgen import sample_definitions
from phenokit.canonical import to_canonical
from phenokit.dates import format_day, parse_day
from phenokit.dsl import parse, print_definition
from phenokit.engine import compile, execute
from phenokit.metrics import (
    ConfusionMatrix,
    derive_metrics,
    evaluation_report,
    labels_from_csv,
    monitor,
    stratify,
)
from phenokit.model import checklist_lint
from phenokit.oracle import reference_evaluate
from phenokit.registry import Registry
from phenokit.store import Store
from phenokit.synthgen import DiseaseModule, RateSpec, SimulationConfig, generate, load_config

RESULTS: list[str] = []

# 99th-percentile two-sided normal quantile, for binomial intervals
Z99 = 2.576


@contextmanager
def criterion(number: int, label: str, budget_seconds: float | None):
    start = time.perf_counter()
    try:
        yield
    except Exception:
        RESULTS.append(f"C{number} FAIL {label}")
        raise
    elapsed = time.perf_counter() - start
    if budget_seconds is not None and elapsed > budget_seconds:
        RESULTS.append(
            f"C{number} FAIL {label} (took {elapsed:.2f}s, budget {budget_seconds:g}s)")
        pytest.fail(f"criterion {number} exceeded its {budget_seconds:g}s budget: {elapsed:.2f}s")
    RESULTS.append(f"C{number} PASS {label} ({elapsed:.2f}s)")


def _run_engine(definition, store):
    return execute(compile(definition, store.vocab), store)


# -- C1 ------------------------------------------------------------------------

def test_worked_example_three_person_store(fixtures_dir, small_store):
    with criterion(1, "worked example on the three-person store", 1.0):
        definition = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
        records, attrition = _run_engine(definition, small_store)
        oracle_records, oracle_attrition = reference_evaluate(definition, small_store)

        day0 = parse_day("2010-01-01")
        assert [(r.person_id, r.entry_day - day0, r.exit_day - day0)
                for r in records] == [(1, 200, 300)]

        stages = {s.name: s for s in attrition.stages}
        # person 3 has no qualifying entry event at all
        assert stages["entry_candidates"].remaining == 2
        assert stages["entry_candidates"].removed == 1
        # person 2 enters but lacks the prior diagnosis the rule demands
        assert stages["htn dx before index"].remaining == 1
        assert stages["htn dx before index"].removed == 1

        assert records == oracle_records
        assert attrition.to_doc() == oracle_attrition.to_doc()


# -- C2 ------------------------------------------------------------------------

def test_engine_matches_reference_on_generated_definitions(sim_small_store):
    with criterion(2, "fast path equals reference on 100 generated definitions", 300.0):
        nonempty = 0
        for definition in sample_definitions(seed=42, count=100):
            records, attrition = _run_engine(definition, sim_small_store)
            oracle_records, oracle_attrition = reference_evaluate(definition, sim_small_store)
            assert records == oracle_records, definition.definition_id
            assert attrition.to_doc() == oracle_attrition.to_doc(), definition.definition_id
            nonempty += bool(records)
        assert nonempty >= 20  # the comparison must exercise real cohorts


# -- C3 ------------------------------------------------------------------------

def _strata_config(seed: int, race_weights) -> SimulationConfig:
    return SimulationConfig(
        seed=seed, n_persons=10000, as_of="2020-12-31",
        demographics={"gender": (("F", 0.5), ("M", 0.5)),
                      "race": race_weights,
                      "ethnicity": (("NH", 1.0),)},
        age_range=(0, 99), observation_min_days=365, observation_max_days=3650,
        diseases=(DiseaseModule(name="marker", prevalence=RateSpec(0.2),
                                diagnosis_concepts=(1001,),
                                diagnosis_emission_prob=RateSpec(1.0)),))


def _stratified_report(config, vocab, out_dir):
    generate(config, vocab, out_dir)
    store = Store.load(out_dir)
    labels = labels_from_csv((out_dir / "labels.csv").read_text(encoding="utf-8"))["marker"]
    return stratify(labels.positives, labels, set(store.persons), store,
                    axes=("race", "gender", "age_group"))


def test_stratification_cell_sizes_and_suppression(tmp_path, vocab):
    with criterion(3, "small strata appear and are suppressed", 60.0):
        even = tuple((race, 0.2) for race in "ABCDE")
        report = _stratified_report(_strata_config(11, even), vocab, tmp_path / "even")
        sizes = [cell.n for cell in report.cells]
        assert len(sizes) == 100  # 5 races x 2 genders x 10 age bins
        assert sum(sizes) / len(sizes) == 100.0
        # each cell is Binomial(10000, 0.01); allow 5 sigma around the mean
        sigma = math.sqrt(10000 * 0.01 * 0.99)
        assert all(abs(n - 100) <= 5 * sigma for n in sizes)

        rare = tuple((race, 0.2) for race in "ABCD") + (("E", 0.1995), ("F", 0.0005))
        report = _stratified_report(_strata_config(11, rare), vocab, tmp_path / "rare")
        small = [cell for cell in report.cells if cell.suppressed]
        assert small and all(cell.n < 10 for cell in small)
        assert any(cell.axes[0] == "F" for cell in small)
        doc = report.to_doc()
        for cell_doc in doc["strata"]:
            if cell_doc["suppressed"]:
                assert cell_doc["metrics"] is None and cell_doc["confusion"] is None


# -- C4 ------------------------------------------------------------------------

DX_ONLY = """\
phenotype "dx-only" v1 {
  intent "diagnosis code presence"
  conceptset dx { 1001 +descendants }
  entry any condition in dx
  observation prior 0 days
  exit offset 0
}
"""


def _disparity_config(emission: RateSpec) -> SimulationConfig:
    return SimulationConfig(
        seed=13, n_persons=5000, as_of="2020-12-31",
        demographics={"gender": (("F", 0.5), ("M", 0.5)),
                      "race": (("A", 0.5), ("B", 0.5)),
                      "ethnicity": (("NH", 1.0),)},
        age_range=(18, 90), observation_min_days=730, observation_max_days=3650,
        diseases=(DiseaseModule(name="marker", prevalence=RateSpec(0.4),
                                diagnosis_concepts=(1001,),
                                diagnosis_emission_prob=emission),))


def test_sensitivity_tracks_documentation_rate(tmp_path, vocab):
    with criterion(4, "sensitivity follows the subgroup documentation rate", 120.0):
        definition = parse(DX_ONLY)
        arms = {}
        for name, emission in (("base", RateSpec(0.9)),
                               ("shifted", RateSpec(0.9, (("race", "B", 0.45),)))):
            out = tmp_path / name
            generate(_disparity_config(emission), vocab, out)
            store = Store.load(out)
            labels = labels_from_csv((out / "labels.csv").read_text(encoding="utf-8"))["marker"]
            records, _ = _run_engine(definition, store)
            report = evaluation_report({r.person_id for r in records}, labels, store,
                                       axes=("race",))
            arms[name] = report

        for name, rate in (("base", 0.9), ("shifted", 0.45)):
            cell = next(c for c in arms[name]["strata"] if c["axes"]["race"] == "B")
            cases = cell["confusion"]["tp"] + cell["confusion"]["fn"]
            assert cases > 900  # ~1000 true cases in the subgroup per arm
            half_width = Z99 * math.sqrt(rate * (1 - rate) / cases)
            assert abs(cell["metrics"]["sensitivity"] - rate) <= half_width

        cell_a = [next(c for c in arms[n]["strata"] if c["axes"]["race"] == "A")
                  for n in ("base", "shifted")]
        assert cell_a[0] == cell_a[1]  # the untouched subgroup is bit-identical
        assert (arms["shifted"]["overall"]["metrics"]["sensitivity"]
                < arms["base"]["overall"]["metrics"]["sensitivity"])


# -- C5 ------------------------------------------------------------------------

def test_metric_identities_and_pooling(sim_small_store, sim_small_labels):
    with criterion(5, "metric identities, null denominators, pooling law", 10.0):
        rng = random.Random(5)
        for _ in range(1000):
            tp, fp, fn, tn = (rng.randrange(0, 500) for _ in range(4))
            metrics = derive_metrics(ConfusionMatrix(tp, fp, fn, tn))
            assert metrics["sensitivity"] == (tp / (tp + fn) if tp + fn else None)
            assert metrics["specificity"] == (tn / (tn + fp) if tn + fp else None)
            assert metrics["ppv"] == (tp / (tp + fp) if tp + fp else None)
            assert metrics["npv"] == (tn / (tn + fn) if tn + fn else None)
            assert metrics["f1"] == (2 * tp / (2 * tp + fp + fn) if 2 * tp + fp + fn else None)

        empty = derive_metrics(ConfusionMatrix(0, 0, 0, 0))
        assert all(value is None for value in empty.values())
        assert derive_metrics(ConfusionMatrix(0, 3, 0, 7))["sensitivity"] is None

        labels = sim_small_labels["hypertension"]
        cohort = set(random.Random(6).sample(sorted(sim_small_store.persons), 400))
        for axes in (("race",), ("gender", "age_group"), ("race", "gender", "age_group")):
            report = stratify(cohort, labels, set(sim_small_store.persons),
                              sim_small_store, axes=axes)
            pooled = ConfusionMatrix(0, 0, 0, 0)
            for cell in report.cells:
                pooled = pooled + cell.matrix
            assert pooled == report.overall


# -- C6 ------------------------------------------------------------------------

def test_dsl_round_trip_and_golden_stability(fixtures_dir):
    with criterion(6, "text round-trip over 1000 definitions, stable fixtures", 30.0):
        for definition in sample_definitions(seed=99, count=1000):
            text = print_definition(definition)
            assert parse(text) == definition
            assert print_definition(parse(text)) == text

        for name in ("hypertension.phen", "preeclampsia.phen"):
            source = (fixtures_dir / name).read_text(encoding="utf-8")
            assert print_definition(parse(source)) == source, name


# -- C7 ------------------------------------------------------------------------

def test_checklist_ablations(fixtures_dir, vocab):
    with criterion(7, "each checklist item fails for exactly its own ablation", 5.0):
        complete = parse((fixtures_dir / "preeclampsia.phen").read_text(encoding="utf-8"))
        report = checklist_lint(complete, vocab)
        assert report.passed
        assert [item.name for item in report.items] == [
            "intent", "literature", "concept_sets", "constraints",
            "roles_considered", "vocabulary", "entry_exit"]

        def ablate(**changes):
            return dataclasses.replace(complete, **changes)

        meta = complete.metadata
        inclusion_only = tuple(r for r in complete.rules if r.role == "inclusion")
        damaged_sets = tuple(
            dataclasses.replace(
                cs,
                items=(dataclasses.replace(cs.items[0], concept_id=99999),))
            if cs.name == "proteinlab" else cs
            for cs in complete.concept_sets)
        ablations = {
            "intent": ablate(metadata=dataclasses.replace(meta, intent="")),
            "literature": ablate(metadata=dataclasses.replace(meta, literature_refs=())),
            "concept_sets": ablate(concept_sets=()),
            "constraints": ablate(rules=(), metadata=dataclasses.replace(
                meta, role_waivers=("disqualifier", "strengthener"))),
            "roles_considered": ablate(rules=inclusion_only),
            "vocabulary": ablate(concept_sets=damaged_sets),
            "entry_exit": ablate(exit=None),
        }
        for expected_failure, definition in ablations.items():
            report = checklist_lint(definition, vocab)
            failed = [item.name for item in report.items if not item.passed]
            assert failed == [expected_failure], (expected_failure, failed)


# -- C8 ------------------------------------------------------------------------

def test_scale_run_and_thread_determinism(tmp_path_factory, fixtures_dir, vocab):
    from phenokit.cli import main

    with criterion(8, "large store run under budget, thread-count invariant", None):
        base = tmp_path_factory.mktemp("scale")
        store_dir = base / "store"
        config = load_config(fixtures_dir / "sim_scale.json")
        manifest = generate(config, vocab, store_dir)
        assert manifest["n_persons"] == 100000
        assert manifest["n_events"] > 4_000_000

        definition = fixtures_dir / "hypertension.phen"
        single = base / "single.csv"
        started = time.perf_counter()
        assert main(["run", str(definition), "--store", str(store_dir),
                     "--out", str(single)]) == 0
        single_seconds = time.perf_counter() - started
        assert single_seconds < 60.0, f"single-threaded run took {single_seconds:.1f}s"

        threaded = base / "threaded.csv"
        assert main(["run", str(definition), "--store", str(store_dir),
                     "--out", str(threaded), "--threads", "4"]) == 0
        assert single.read_bytes() == threaded.read_bytes()
        assert (base / "single.attrition.json").read_bytes() == \
            (base / "threaded.attrition.json").read_bytes()
        assert len(single.read_text(encoding="utf-8").splitlines()) > 10000


# -- C9 ------------------------------------------------------------------------

def test_registry_revision_loop(tmp_path, fixtures_dir, sim_small_store, sim_small_labels):
    with criterion(9, "register, revise, diff, and monitor in order", None):
        registry = Registry(tmp_path / "registry")
        definition = parse((fixtures_dir / "hypertension.phen").read_text(encoding="utf-8"))
        assert registry.register(definition, author="ana", change_note="initial") == 1

        revised = dataclasses.replace(definition, prior_observation_days=365)
        assert registry.register(revised, author="ana", change_note="add washout") == 2

        assert registry.diff(definition.definition_id, 1, 2) == [
            {"path": "$.prior_observation_days", "kind": "changed", "from": 0, "to": 365}]

        labels = sim_small_labels["hypertension"]
        snapshots = [(sim_small_store, labels, ts) for ts in
                     ("2026-05-01T00:00:00+00:00",
                      "2026-03-01T00:00:00+00:00",
                      "2026-04-01T00:00:00+00:00")]
        records = monitor(registry, definition.definition_id, snapshots)
        for entry in records:
            registry.record_evaluation(
                definition.definition_id, entry["version"], "sim_small",
                {"overall": {"metrics": entry["metrics"]}}, timestamp=entry["timestamp"])

        series = registry.ppv_series(definition.definition_id)
        timestamps = [point["timestamp"] for point in series]
        assert len(series) == 3
        assert timestamps == sorted(timestamps)
        assert all(point["ppv"] is not None for point in series)
