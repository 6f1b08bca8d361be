"""Brute-force reference evaluator.

Deliberately naive: no execution plan, no indexes, no shared evaluation code
with the engine. Every check rescans the person's full event list and
re-derives concept membership from vocabulary expansion inline. This is the
drift detector the engine is tested against; keep it slow and obvious.
"""
from __future__ import annotations

import operator

from .dates import age_years_at
from .model import CriterionRule, EventQuery, PhenotypeDefinition
from .results import AttritionReport, CohortRecord, StrengthenerNote, build_stages
from .store import ClinicalEvent, Store

_CMP = {
    "<": operator.lt,
    "<=": operator.le,
    "=": operator.eq,
    ">=": operator.ge,
    ">": operator.gt,
}


def _resolve_sets(definition: PhenotypeDefinition, store: Store) -> dict[int, set[int]]:
    resolved: dict[int, set[int]] = {}
    for cs in definition.concept_sets:
        included: set[int] = set()
        excluded: set[int] = set()
        for item in cs.items:
            expanded = store.vocab.expand(item.concept_id, item.include_descendants)
            if item.is_excluded:
                excluded.update(expanded)
            else:
                included.update(expanded)
        resolved[cs.set_id] = included - excluded
    return resolved


def _event_matches(event: ClinicalEvent, query: EventQuery, resolved: dict[int, set[int]]) -> bool:
    if event.domain != query.domain:
        return False
    if event.concept_id not in resolved[query.concept_set_ref]:
        return False
    vp = query.value_predicate
    if vp is not None:
        if event.value_as_number is None:
            return False
        if not _CMP[vp.comparator](event.value_as_number, vp.threshold):
            return False
        if vp.unit_concept_id is not None and event.unit_concept_id != vp.unit_concept_id:
            return False
    return True


def _chronological(events: list[ClinicalEvent]) -> list[ClinicalEvent]:
    return sorted(events, key=lambda e: (e.start_day, e.event_id))


def _matching_events(store: Store, person_id: int, query: EventQuery,
                     resolved: dict[int, set[int]]) -> list[ClinicalEvent]:
    return _chronological([
        e for e in store.person_events(person_id) if _event_matches(e, query, resolved)
    ])


def _occurrence_slice(matching: list[ClinicalEvent], query: EventQuery) -> list[ClinicalEvent]:
    kind = query.occurrence.kind
    if kind == "first_ever":
        return matching[:1]
    if kind == "nth":
        n = query.occurrence.n
        return matching[n - 1:n] if len(matching) >= n else []
    return matching


def _entry_candidates(store: Store, person_id: int, entry: EventQuery,
                      resolved: dict[int, set[int]]) -> list[ClinicalEvent]:
    return _occurrence_slice(_matching_events(store, person_id, entry, resolved), entry)


def _covering_period(store: Store, person_id: int, day: int):
    for start, end in store.periods_for(person_id):
        if start <= day <= end:
            return (start, end)
    return None


def _passes_prior(store: Store, person_id: int, index_day: int, prior_days: int) -> bool:
    need_start = index_day - prior_days
    for start, end in store.periods_for(person_id):
        if start <= need_start and index_day <= end:
            return True
    return False


def _passes_demographics(store: Store, person_id: int, index_day: int,
                         definition: PhenotypeDefinition) -> bool:
    demo = definition.demographics
    if demo is None:
        return True
    person = store.person(person_id)
    if demo.age_at_index is not None:
        age = age_years_at(person.birth_day, index_day)
        lo, hi = demo.age_at_index
        if not (lo <= age <= hi):
            return False
    if demo.gender is not None and person.gender not in demo.gender:
        return False
    if demo.race is not None and person.race not in demo.race:
        return False
    return True


def _anchor_day(rule: CriterionRule, candidate: ClinicalEvent) -> int:
    anchor = rule.window.anchor
    if anchor == "entry_start":
        return candidate.start_day
    if anchor == "entry_end":
        return candidate.end_day if candidate.end_day is not None else candidate.start_day
    return candidate.start_day  # index date is the candidate's start


def _rule_satisfied(store: Store, person_id: int, rule: CriterionRule,
                    candidate: ClinicalEvent, resolved: dict[int, set[int]]) -> bool:
    anchor = _anchor_day(rule, candidate)
    lo = anchor + rule.window.start_offset_days
    hi = anchor + rule.window.end_offset_days
    # the occurrence qualifier picks eligible events first; the window then
    # filters those, so "first X within W" asks whether the first-ever X
    # falls inside W
    eligible = _occurrence_slice(_matching_events(store, person_id, rule.query, resolved), rule.query)
    count = sum(1 for event in eligible if lo <= event.start_day <= hi)
    return _CMP[rule.count_comparator](count, rule.count)


def _passes_rule(store: Store, person_id: int, rule: CriterionRule,
                 candidate: ClinicalEvent, resolved: dict[int, set[int]]) -> bool:
    if rule.role == "strengthener":
        return True
    satisfied = _rule_satisfied(store, person_id, rule, candidate, resolved)
    if rule.role == "inclusion":
        return satisfied
    # exclusion and disqualifier remove the person when the rule matches
    return not satisfied


def _collapse_eras(events: list[ClinicalEvent], gap_days: int) -> list[tuple[int, int]]:
    spans = sorted(
        (e.start_day, e.end_day if e.end_day is not None else e.start_day)
        for e in events
    )
    eras: list[list[int]] = []
    for start, end in spans:
        if eras and start - eras[-1][1] - 1 <= gap_days:
            if end > eras[-1][1]:
                eras[-1][1] = end
        else:
            eras.append([start, end])
    return [(s, e) for s, e in eras]


def _exit_day(store: Store, person_id: int, index_day: int,
              definition: PhenotypeDefinition, resolved: dict[int, set[int]]) -> int:
    period = _covering_period(store, person_id, index_day)
    obs_end = period[1] if period is not None else index_day
    ex = definition.exit
    if ex.kind == "fixed_offset":
        raw = index_day + ex.days
    elif ex.kind == "end_of_continuous_exposure":
        exposures = [
            e for e in store.person_events(person_id)
            if e.domain == "drug" and e.concept_id in resolved[ex.concept_set_ref]
        ]
        raw = index_day
        for start, end in _collapse_eras(exposures, ex.persistence_gap_days):
            if start <= index_day <= end:
                raw = end
                break
    else:  # event_based
        raw = obs_end
        for event in _matching_events(store, person_id, ex.query, resolved):
            if event.start_day >= index_day:
                raw = event.start_day
                break
    return max(index_day, min(raw, obs_end))


def reference_evaluate(definition: PhenotypeDefinition,
                       store: Store) -> tuple[list[CohortRecord], AttritionReport]:
    """Evaluate a definition by exhaustive per-person scanning. Contract
    matches compile+execute exactly; used in tests as the oracle."""
    resolved = _resolve_sets(definition, store)
    rules = definition.rules
    stage_names = ["entry_candidates", "prior_observation", "demographics"] + [r.name for r in rules]
    n_stages = len(stage_names)
    survivors_at = [0] * n_stages
    records: list[CohortRecord] = []
    winners: list[tuple[int, ClinicalEvent]] = []

    for person_id in store.person_ids:
        candidates = _entry_candidates(store, person_id, definition.entry, resolved)
        # depth reached by each candidate: how many stages it survives
        depths = []
        for cand in candidates:
            depth = 1
            index_day = cand.start_day
            if _passes_prior(store, person_id, index_day, definition.prior_observation_days):
                depth = 2
                if _passes_demographics(store, person_id, index_day, definition):
                    depth = 3
                    for rule in rules:
                        if _passes_rule(store, person_id, rule, cand, resolved):
                            depth += 1
                        else:
                            break
            depths.append(depth)
        best = max(depths, default=0)
        for stage in range(n_stages):
            if best >= stage + 1:
                survivors_at[stage] += 1
        if best == n_stages:
            # earliest candidate that survives everything
            for cand, depth in zip(candidates, depths):
                if depth == n_stages:
                    winners.append((person_id, cand))
                    exit_day = _exit_day(store, person_id, cand.start_day, definition, resolved)
                    records.append(CohortRecord(person_id, cand.start_day, exit_day))
                    break

    notes = []
    for rule in rules:
        if rule.role != "strengthener":
            continue
        count = sum(
            1 for person_id, cand in winners
            if _rule_satisfied(store, person_id, rule, cand, resolved)
        )
        fraction = count / len(winners) if winners else None
        notes.append(StrengthenerNote(rule.name, count, fraction))

    report = AttritionReport(
        stages=build_stages(stage_names, len(store.person_ids), survivors_at),
        strengtheners=tuple(notes),
    )
    records.sort(key=lambda r: r.person_id)
    return records, report
