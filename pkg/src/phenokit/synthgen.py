"""Deterministic synthetic patient generator.

Truth is drawn first and labels are written for every person regardless of
what gets documented; diagnosis, drug, and measurement events are then
emitted with per-subgroup probabilities. Dropping an emission rate for one
subgroup leaves its labels untouched while its recorded events thin out,
which is exactly the gap a code-based cohort then exhibits as lower
sensitivity in that subgroup.

All randomness comes from one stdlib generator per person seeded with
(config seed, person_id), so output is byte-stable across runs and
independent of generation order.

Config document (JSON) mirrors SimulationConfig:

    {
      "seed": 42, "n_persons": 1000, "as_of": "2020-12-31",
      "demographics": {"gender": {"F": 0.5, "M": 0.5},
                       "race": {"A": 0.2, "B": 0.2, ...}},
      "age_range": [0, 99],
      "observation": {"min_days": 730, "max_days": 7300},
      "noise": {"condition_concepts": [8001], "min_events": 0, "max_events": 4},
      "diseases": [ ... DiseaseModule docs ... ]
    }

Rates (prevalence, emission probabilities, order_prob) are either a bare
number or {"default": r, "overrides": [{"axis": "race", "value": "B",
"rate": r2}, ...]}; the first matching override wins.
"""
from __future__ import annotations

import json
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .dates import format_day, parse_day
from .metrics import GroundTruthLabels, labels_to_csv
from .store import ClinicalEvent, Person, Store
from .vocab import Vocabulary

DEMOGRAPHIC_AXES = ("gender", "race", "ethnicity")


class SynthError(ValueError):
    pass


@dataclass(frozen=True)
class RateSpec:
    default: float
    overrides: tuple[tuple[str, str, float], ...] = ()  # (axis, value, rate)

    def rate_for(self, person: Person) -> float:
        for axis, value, rate in self.overrides:
            if getattr(person, axis) == value:
                return rate
        return self.default

    @staticmethod
    def from_doc(doc, where: str) -> "RateSpec":
        if isinstance(doc, (int, float)) and not isinstance(doc, bool):
            return RateSpec(float(doc))
        if not isinstance(doc, dict):
            raise SynthError(f"{where}: rate must be a number or an object")
        overrides = tuple(
            (o["axis"], o["value"], float(o["rate"]))
            for o in doc.get("overrides", [])
        )
        for axis, _, _ in overrides:
            if axis not in DEMOGRAPHIC_AXES:
                raise SynthError(f"{where}: override axis {axis!r} unknown")
        return RateSpec(float(doc["default"]), overrides)

    def all_rates(self) -> list[float]:
        return [self.default] + [r for _, _, r in self.overrides]


@dataclass(frozen=True)
class MeasurementModel:
    concept_id: int
    unit_concept_id: Optional[int]
    diseased_mean: float
    diseased_sd: float
    healthy_mean: float
    healthy_sd: float
    order_prob: RateSpec


@dataclass(frozen=True)
class DrugModel:
    concepts: tuple[int, ...]
    start_delay_max: int = 30
    duration_days: int = 30
    max_refills: int = 5
    refill_gap_max: int = 15


@dataclass(frozen=True)
class DiseaseModule:
    name: str
    prevalence: RateSpec
    diagnosis_concepts: tuple[int, ...]
    diagnosis_emission_prob: RateSpec
    drug: Optional[DrugModel] = None
    drug_emission_prob: RateSpec = field(default_factory=lambda: RateSpec(0.0))
    measurement: Optional[MeasurementModel] = None


@dataclass(frozen=True)
class NoiseModel:
    condition_concepts: tuple[int, ...]
    min_events: int = 0
    max_events: int = 0


@dataclass(frozen=True)
class SimulationConfig:
    seed: int
    n_persons: int
    as_of: str
    demographics: dict[str, tuple[tuple[str, float], ...]]
    age_range: tuple[int, int]
    observation_min_days: int
    observation_max_days: int
    diseases: tuple[DiseaseModule, ...]
    noise: Optional[NoiseModel] = None


def _validate_prob(value: float, where: str) -> None:
    if not (0.0 <= value <= 1.0):
        raise SynthError(f"{where}: probability {value} outside [0, 1]")


def validate_config(config: SimulationConfig) -> None:
    if config.n_persons < 1:
        raise SynthError("n_persons must be >= 1")
    for axis, weights in config.demographics.items():
        if axis not in DEMOGRAPHIC_AXES:
            raise SynthError(f"unknown demographic axis {axis!r}")
        if not weights:
            raise SynthError(f"axis {axis!r} has no categories")
        total = 0.0
        for category, weight in weights:
            if weight <= 0:
                raise SynthError(f"axis {axis!r} category {category!r}: weight must be positive")
            total += weight
        if abs(total - 1.0) > 1e-6:
            raise SynthError(f"axis {axis!r} weights sum to {total}, expected 1")
    lo, hi = config.age_range
    if lo < 0 or lo > hi:
        raise SynthError(f"age_range [{lo}, {hi}] is not a valid interval")
    if config.observation_min_days < 1 or config.observation_min_days > config.observation_max_days:
        raise SynthError("observation day bounds must satisfy 1 <= min <= max")
    names = set()
    for disease in config.diseases:
        where = f"disease {disease.name!r}"
        if disease.name in names:
            raise SynthError(f"{where}: duplicate name")
        names.add(disease.name)
        for rate in disease.prevalence.all_rates() + disease.diagnosis_emission_prob.all_rates() \
                + disease.drug_emission_prob.all_rates():
            _validate_prob(rate, where)
        if not disease.diagnosis_concepts:
            raise SynthError(f"{where}: needs at least one diagnosis concept")
        if disease.measurement is not None:
            for rate in disease.measurement.order_prob.all_rates():
                _validate_prob(rate, where)
            if disease.measurement.diseased_sd < 0 or disease.measurement.healthy_sd < 0:
                raise SynthError(f"{where}: measurement spread must be non-negative")
        if disease.drug is not None and not disease.drug.concepts:
            raise SynthError(f"{where}: drug model needs at least one concept")
    if config.noise is not None:
        noise = config.noise
        if noise.min_events < 0 or noise.min_events > noise.max_events:
            raise SynthError("noise event bounds must satisfy 0 <= min <= max")
        if noise.max_events and not noise.condition_concepts:
            raise SynthError("noise events requested but no noise concepts given")
        disease_concepts = {c for d in config.diseases for c in d.diagnosis_concepts}
        clash = disease_concepts & set(noise.condition_concepts)
        if clash:
            raise SynthError(
                f"noise concepts overlap disease diagnosis concepts: {sorted(clash)} "
                "(would contaminate ground truth)")


def config_from_doc(doc: dict) -> SimulationConfig:
    def rate(value, where):
        return RateSpec.from_doc(value, where)

    for key in ("seed", "n_persons", "as_of"):
        if key not in doc:
            raise SynthError(f"config is missing required key {key!r}")

    diseases = []
    for d in doc.get("diseases", []):
        where = f"disease {d.get('name', '?')!r}"
        drug = None
        if "drug" in d and d["drug"] is not None:
            drug_doc = d["drug"]
            drug = DrugModel(
                concepts=tuple(drug_doc["concepts"]),
                start_delay_max=int(drug_doc.get("start_delay_max", 30)),
                duration_days=int(drug_doc.get("duration_days", 30)),
                max_refills=int(drug_doc.get("max_refills", 5)),
                refill_gap_max=int(drug_doc.get("refill_gap_max", 15)),
            )
        measurement = None
        if "measurement" in d and d["measurement"] is not None:
            m = d["measurement"]
            measurement = MeasurementModel(
                concept_id=int(m["concept_id"]),
                unit_concept_id=m.get("unit_concept_id"),
                diseased_mean=float(m["diseased_mean"]),
                diseased_sd=float(m["diseased_sd"]),
                healthy_mean=float(m["healthy_mean"]),
                healthy_sd=float(m["healthy_sd"]),
                order_prob=rate(m.get("order_prob", 0.0), where),
            )
        diseases.append(DiseaseModule(
            name=d["name"],
            prevalence=rate(d["prevalence"], where),
            diagnosis_concepts=tuple(d["diagnosis_concepts"]),
            diagnosis_emission_prob=rate(d.get("diagnosis_emission_prob", 1.0), where),
            drug=drug,
            drug_emission_prob=rate(d.get("drug_emission_prob", 0.0), where),
            measurement=measurement,
        ))

    noise = None
    if "noise" in doc and doc["noise"] is not None:
        n = doc["noise"]
        noise = NoiseModel(
            condition_concepts=tuple(n.get("condition_concepts", [])),
            min_events=int(n.get("min_events", 0)),
            max_events=int(n.get("max_events", 0)),
        )

    config = SimulationConfig(
        seed=int(doc["seed"]),
        n_persons=int(doc["n_persons"]),
        as_of=doc["as_of"],
        demographics={
            axis: tuple((category, float(weight)) for category, weight in weights.items())
            for axis, weights in doc.get("demographics", {}).items()
        },
        age_range=tuple(doc.get("age_range", [0, 99])),
        observation_min_days=int(doc.get("observation", {}).get("min_days", 365)),
        observation_max_days=int(doc.get("observation", {}).get("max_days", 3650)),
        diseases=tuple(diseases),
        noise=noise,
    )
    validate_config(config)
    return config


def load_config(path: str | Path) -> SimulationConfig:
    return config_from_doc(json.loads(Path(path).read_text(encoding="utf-8")))


def person_rng(seed: int, person_id: int) -> random.Random:
    return random.Random((seed << 32) | person_id)


def _draw_category(rng: random.Random, weights: tuple[tuple[str, float], ...]) -> str:
    roll = rng.random()
    cumulative = 0.0
    for category, weight in weights:
        cumulative += weight
        if roll < cumulative:
            return category
    return weights[-1][0]


class _Generated:
    def __init__(self):
        self.persons: list[Person] = []
        self.periods: list[tuple[int, int, int]] = []
        self.events: list[ClinicalEvent] = []
        self.positive: dict[str, set[int]] = {}
        self.dx_emitted: dict[str, set[int]] = {}


def _generate_person(config: SimulationConfig, person_id: int, as_of_day: int, out: _Generated,
                     next_event_id: int) -> int:
    rng = person_rng(config.seed, person_id)

    attrs = {axis: None for axis in DEMOGRAPHIC_AXES}
    for axis in DEMOGRAPHIC_AXES:
        weights = config.demographics.get(axis)
        if weights:
            attrs[axis] = _draw_category(rng, weights)

    age_lo, age_hi = config.age_range
    birth_day = as_of_day - rng.randrange(age_lo * 365, (age_hi + 1) * 365)
    person = Person(person_id, birth_day, attrs["gender"], attrs["race"], attrs["ethnicity"])
    out.persons.append(person)

    length = rng.randrange(config.observation_min_days, config.observation_max_days + 1)
    obs_start = max(birth_day, as_of_day - length)
    out.periods.append((person_id, obs_start, as_of_day))

    def emit(domain: str, concept_id: int, start: int, end: Optional[int] = None,
             value: Optional[float] = None, unit: Optional[int] = None) -> None:
        nonlocal next_event_id
        out.events.append(ClinicalEvent(
            event_id=next_event_id, person_id=person_id, domain=domain,
            concept_id=concept_id, start_day=start, end_day=end,
            value_as_number=value, unit_concept_id=unit))
        next_event_id += 1

    if config.noise is not None and config.noise.max_events:
        count = rng.randrange(config.noise.min_events, config.noise.max_events + 1)
        for _ in range(count):
            concept = rng.choice(config.noise.condition_concepts)
            emit("condition", concept, rng.randrange(obs_start, as_of_day + 1))

    for disease in config.diseases:
        is_case = rng.random() < disease.prevalence.rate_for(person)
        if is_case:
            out.positive.setdefault(disease.name, set()).add(person_id)
            onset = rng.randrange(obs_start, as_of_day + 1)
            if rng.random() < disease.diagnosis_emission_prob.rate_for(person):
                out.dx_emitted.setdefault(disease.name, set()).add(person_id)
                emit("condition", rng.choice(disease.diagnosis_concepts), onset)
            if disease.drug is not None and rng.random() < disease.drug_emission_prob.rate_for(person):
                drug = disease.drug
                start = onset + rng.randrange(0, drug.start_delay_max + 1)
                refills = rng.randrange(0, drug.max_refills + 1)
                for _ in range(refills + 1):
                    if start > as_of_day:
                        break  # supply chain ran past the capture window
                    end = start + drug.duration_days - 1
                    emit("drug", rng.choice(drug.concepts), start, end)
                    start = end + 1 + rng.randrange(0, drug.refill_gap_max + 1)
        if disease.measurement is not None:
            m = disease.measurement
            if rng.random() < m.order_prob.rate_for(person):
                day = rng.randrange(obs_start, as_of_day + 1)
                if is_case:
                    value = rng.gauss(m.diseased_mean, m.diseased_sd)
                else:
                    value = rng.gauss(m.healthy_mean, m.healthy_sd)
                emit("measurement", m.concept_id, day, value=round(value, 2), unit=m.unit_concept_id)

    return next_event_id


def generate(config: SimulationConfig, vocab: Vocabulary, out_dir: str | Path) -> dict:
    """Generate the store, labels.csv, and manifest.json into out_dir;
    returns the manifest. Deterministic for a given config."""
    validate_config(config)
    referenced = {c for d in config.diseases for c in d.diagnosis_concepts}
    for d in config.diseases:
        if d.drug is not None:
            referenced.update(d.drug.concepts)
        if d.measurement is not None:
            referenced.add(d.measurement.concept_id)
            if d.measurement.unit_concept_id is not None:
                referenced.add(d.measurement.unit_concept_id)
    if config.noise is not None:
        referenced.update(config.noise.condition_concepts)
    missing = sorted(c for c in referenced if c not in vocab)
    if missing:
        raise SynthError(f"config references concepts absent from the vocabulary: {missing}")

    as_of_day = parse_day(config.as_of)
    out = _Generated()
    next_event_id = 1
    for person_id in range(1, config.n_persons + 1):
        next_event_id = _generate_person(config, person_id, as_of_day, out, next_event_id)

    store = Store.build(out.persons, out.periods, out.events, vocab)
    out_path = Path(out_dir)
    store.save(out_path)

    label_sets = [
        GroundTruthLabels(
            condition=disease.name,
            labels={
                pid: pid in out.positive.get(disease.name, set())
                for pid in range(1, config.n_persons + 1)
            },
        )
        for disease in config.diseases
    ]
    (out_path / "labels.csv").write_text(labels_to_csv(label_sets), encoding="utf-8")

    demo_counts: dict[str, dict[str, int]] = {}
    for axis in config.demographics:
        counts: dict[str, int] = {}
        for person in out.persons:
            value = getattr(person, axis)
            counts[value] = counts.get(value, 0) + 1
        demo_counts[axis] = dict(sorted(counts.items()))

    manifest = {
        "seed": config.seed,
        "n_persons": config.n_persons,
        "n_events": len(out.events),
        "as_of": config.as_of,
        "demographics": demo_counts,
        "diseases": [
            {
                "name": disease.name,
                "n_positive": len(out.positive.get(disease.name, set())),
                "n_diagnosis_emitted": len(out.dx_emitted.get(disease.name, set())),
            }
            for disease in config.diseases
        ],
    }
    (out_path / "manifest.json").write_text(
        json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return manifest
