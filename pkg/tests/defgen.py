"""Seeded sampler of valid, canonically-shaped phenotype definitions.

Used by the round-trip and engine-vs-oracle suites. Only canonical ASTs come
out: concept set ids 1..n in declaration order, items sorted by concept id,
identifier-shaped set names, ordered windows. Every sample is checked against
validate_definition before being returned, so a sampler bug fails loudly
instead of skewing the tests.

Concept ids are drawn from the test vocabulary so that definitions run
against the synthetic stores actually match events.
"""
import random

from phenokit.model import (
    COMPARATORS,
    CriterionRule,
    Demographics,
    EventQuery,
    ExitStrategy,
    Metadata,
    Occurrence,
    PhenotypeDefinition,
    TemporalWindow,
    ValuePredicate,
    validate_definition,
)
from phenokit.vocab import ConceptSet, ConceptSetItem

DOMAIN_CONCEPTS = {
    "condition": (1001, 1002, 5001, 5101, 5201, 5301, 6001, 8001, 8002, 8003),
    "drug": (2001, 2002, 2003, 6101, 6102),
    "measurement": (3001, 3101, 3201),
    "procedure": (4001,),
}
UNIT_IDS = (9001, 9002, 9003)

# parents with descendants in the test vocabulary; +descendants on anything
# else is legal but inert
HIERARCHY_ROOTS = {1001, 2001, 6101}

WORDS = (
    "onset", "treated", "washout", "confirm", "baseline", "recent",
    "chronic", "acute", "screen", "followup",
)


def _sample_concept_set(rng: random.Random, set_id: int, name: str, domain: str) -> ConceptSet:
    pool = DOMAIN_CONCEPTS[domain]
    ids = sorted(rng.sample(pool, rng.randint(1, min(3, len(pool)))))
    items = []
    for cid in ids:
        items.append(ConceptSetItem(
            concept_id=cid,
            include_descendants=cid in HIERARCHY_ROOTS and rng.random() < 0.6,
            is_excluded=False,
        ))
    # occasionally carve a child back out of an expanded parent
    if any(i.include_descendants for i in items) and rng.random() < 0.3:
        parent = next(i for i in items if i.include_descendants)
        child = {1001: 1002, 2001: 2002, 6101: 6102}[parent.concept_id]
        if all(i.concept_id != child for i in items):
            items.append(ConceptSetItem(child, False, True))
            items.sort(key=lambda i: i.concept_id)
    return ConceptSet(set_id=set_id, name=name, items=tuple(items))


def _sample_occurrence(rng: random.Random) -> Occurrence:
    roll = rng.random()
    if roll < 0.45:
        return Occurrence.first_ever()
    if roll < 0.8:
        return Occurrence.any()
    return Occurrence.nth(rng.randint(1, 3))


def _sample_value_predicate(rng: random.Random) -> ValuePredicate:
    return ValuePredicate(
        comparator=rng.choice(COMPARATORS),
        threshold=round(rng.uniform(3.0, 200.0), 1),
        unit_concept_id=rng.choice(UNIT_IDS + (None,)),
    )


def _sample_query(rng: random.Random, sets: dict[int, str], require_any: bool = False,
                  allow_value: bool = True) -> EventQuery:
    set_id = rng.choice(sorted(sets))
    domain = sets[set_id]
    # sometimes query a set under the wrong domain: legal, matches nothing
    if rng.random() < 0.08:
        domain = rng.choice(tuple(DOMAIN_CONCEPTS))
    vp = None
    if allow_value and domain == "measurement" and rng.random() < 0.6:
        vp = _sample_value_predicate(rng)
    return EventQuery(
        domain=domain,
        concept_set_ref=set_id,
        occurrence=Occurrence.any() if require_any else _sample_occurrence(rng),
        value_predicate=vp,
    )


def _sample_window(rng: random.Random) -> TemporalWindow:
    start = rng.randint(-400, 100)
    end = start + rng.randint(0, 400)
    roll = rng.random()
    anchor = "index_date" if roll < 0.6 else ("entry_start" if roll < 0.8 else "entry_end")
    return TemporalWindow(start, end, anchor)


def _sample_rule(rng: random.Random, i: int, sets: dict[int, str]) -> CriterionRule:
    roll = rng.random()
    if roll < 0.4:
        role = "inclusion"
    elif roll < 0.65:
        role = "exclusion"
    elif roll < 0.85:
        role = "disqualifier"
    else:
        role = "strengthener"
    return CriterionRule(
        name=f"rule {i} {rng.choice(WORDS)}",
        query=_sample_query(rng, sets),
        window=_sample_window(rng),
        count_comparator=rng.choice(COMPARATORS) if rng.random() < 0.4 else ">=",
        count=rng.randint(0, 3),
        role=role,
    )


def _sample_exit(rng: random.Random, sets: dict[int, str]) -> ExitStrategy:
    roll = rng.random()
    if roll < 0.45:
        return ExitStrategy.fixed_offset(rng.randint(0, 365))
    if roll < 0.8:
        drug_sets = [sid for sid, domain in sets.items() if domain == "drug"]
        ref = rng.choice(drug_sets) if drug_sets else rng.choice(sorted(sets))
        return ExitStrategy.end_of_continuous_exposure(ref, rng.randint(0, 60))
    return ExitStrategy.event_based(_sample_query(rng, sets, require_any=True, allow_value=False))


def _sample_demographics(rng: random.Random) -> Demographics | None:
    if rng.random() < 0.5:
        return None
    age = None
    gender = None
    race = None
    if rng.random() < 0.6:
        lo = rng.randint(0, 60)
        age = (lo, lo + rng.randint(0, 60))
    if rng.random() < 0.5:
        gender = frozenset(rng.sample(("F", "M"), rng.randint(1, 2)))
    if rng.random() < 0.4:
        race = frozenset(rng.sample(("A", "B", "C", "D", "E"), rng.randint(1, 3)))
    if age is None and gender is None and race is None:
        gender = frozenset(("F",))
    return Demographics(age_at_index=age, gender=gender, race=race)


def sample_definition(rng: random.Random, tag: int) -> PhenotypeDefinition:
    n_sets = rng.randint(1, 4)
    domains = [rng.choice(("condition", "condition", "drug", "drug", "measurement", "procedure"))
               for _ in range(n_sets)]
    concept_sets = tuple(
        _sample_concept_set(rng, i + 1, f"set{i + 1}_{domains[i]}", domains[i])
        for i in range(n_sets)
    )
    set_domains = {cs.set_id: domains[i] for i, cs in enumerate(concept_sets)}

    rules = tuple(_sample_rule(rng, i + 1, set_domains) for i in range(rng.randint(0, 4)))

    metadata = Metadata(
        intent=f"sampled cohort {tag} over {rng.choice(WORDS)} events",
        literature_refs=tuple(f"note {j}" for j in range(rng.randint(0, 2))),
        authors=("generator",) if rng.random() < 0.5 else (),
        role_waivers=tuple(
            w for w in ("disqualifier", "strengthener") if rng.random() < 0.3),
    )

    definition = PhenotypeDefinition(
        definition_id=f"sampled definition {tag}",
        version=rng.randint(1, 3),
        metadata=metadata,
        concept_sets=concept_sets,
        entry=_sample_query(rng, set_domains),
        exit=_sample_exit(rng, set_domains),
        prior_observation_days=rng.choice((0, 0, 30, 180, 365)),
        demographics=_sample_demographics(rng),
        rules=rules,
        era_gap_days=rng.choice((0, 0, 7, 30)),
    )
    issues = validate_definition(definition)
    assert not issues, f"sampler produced an invalid definition: {issues}"
    return definition


def sample_definitions(seed: int, count: int) -> list[PhenotypeDefinition]:
    rng = random.Random(seed)
    return [sample_definition(rng, i + 1) for i in range(count)]
