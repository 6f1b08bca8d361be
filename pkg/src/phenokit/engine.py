"""Compile definitions to execution plans and evaluate them against a store.

The plan resolves every concept set to a flat frozen id set and normalizes
rules so the per-person loop touches only primitives. Evaluation walks each
person once: entry candidates come from the domain index, each rule's
eligible events are computed once per person, and window counts are bisect
lookups over pre-extracted start days. Results must match reference_evaluate
exactly; that equivalence is enforced by tests, never by shared code.
"""
from __future__ import annotations

from bisect import bisect_left, bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

from .dates import age_years_at
from .model import (
    EventQuery,
    PhenotypeDefinition,
    compare,
    validate_definition,
)
from .results import AttritionReport, CohortRecord, StrengthenerNote, build_stages
from .store import EV_END, EV_START, EV_UNIT, EV_VALUE, Store
from .vocab import Vocabulary, resolve_concept_set


class CompileError(ValueError):
    pass


@dataclass(frozen=True)
class PlanQuery:
    domain: str
    concepts: frozenset[int]
    occurrence_kind: str = "any"
    occurrence_n: Optional[int] = None
    vp_comparator: Optional[str] = None
    vp_threshold: float = 0.0
    vp_unit: Optional[int] = None


@dataclass(frozen=True)
class PlanRule:
    name: str
    role: str
    query: PlanQuery
    start_offset: int
    end_offset: int
    anchor: str
    count_comparator: str
    count: int


@dataclass(frozen=True)
class PlanExit:
    kind: str
    days: int = 0
    concepts: frozenset[int] = frozenset()
    persistence_gap_days: int = 0
    query: Optional[PlanQuery] = None


@dataclass(frozen=True)
class PlanDemographics:
    age_low: Optional[int]
    age_high: Optional[int]
    gender: Optional[frozenset[str]]
    race: Optional[frozenset[str]]


@dataclass(frozen=True)
class ExecutionPlan:
    definition_id: str
    version: int
    entry: PlanQuery
    prior_observation_days: int
    demographics: Optional[PlanDemographics]
    rules: tuple[PlanRule, ...]
    exit: PlanExit
    era_gap_days: int
    warnings: tuple[str, ...] = ()


def _plan_query(query: EventQuery, resolved: dict[int, frozenset[int]]) -> PlanQuery:
    vp = query.value_predicate
    return PlanQuery(
        domain=query.domain,
        concepts=resolved[query.concept_set_ref],
        occurrence_kind=query.occurrence.kind,
        occurrence_n=query.occurrence.n,
        vp_comparator=None if vp is None else vp.comparator,
        vp_threshold=0.0 if vp is None else vp.threshold,
        vp_unit=None if vp is None else vp.unit_concept_id,
    )


def compile(definition: PhenotypeDefinition, vocab: Vocabulary) -> ExecutionPlan:
    """Resolve names and normalize the definition into an executable plan.
    Deterministic: equal definitions compile to equal plans."""
    issues = validate_definition(definition)
    if issues:
        raise CompileError(
            "definition is structurally invalid: " + "; ".join(str(i) for i in issues))

    resolved: dict[int, frozenset[int]] = {}
    for cs in definition.concept_sets:
        resolved[cs.set_id] = frozenset(resolve_concept_set(cs, vocab))

    warnings: list[str] = []
    entry = _plan_query(definition.entry, resolved)
    if not entry.concepts:
        warnings.append("entry concept set resolves to no concepts; cohort will be empty")

    rules = tuple(
        PlanRule(
            name=rule.name,
            role=rule.role,
            query=_plan_query(rule.query, resolved),
            start_offset=rule.window.start_offset_days,
            end_offset=rule.window.end_offset_days,
            anchor=rule.window.anchor,
            count_comparator=rule.count_comparator,
            count=rule.count,
        )
        for rule in definition.rules
    )

    ex = definition.exit
    if ex.kind == "fixed_offset":
        plan_exit = PlanExit(kind="fixed_offset", days=ex.days)
    elif ex.kind == "end_of_continuous_exposure":
        plan_exit = PlanExit(
            kind="end_of_continuous_exposure",
            concepts=resolved[ex.concept_set_ref],
            persistence_gap_days=ex.persistence_gap_days,
        )
    else:
        plan_exit = PlanExit(kind="event_based", query=_plan_query(ex.query, resolved))

    demo = definition.demographics
    plan_demo = None
    if demo is not None:
        lo, hi = demo.age_at_index if demo.age_at_index is not None else (None, None)
        plan_demo = PlanDemographics(age_low=lo, age_high=hi, gender=demo.gender, race=demo.race)

    return ExecutionPlan(
        definition_id=definition.definition_id,
        version=definition.version,
        entry=entry,
        prior_observation_days=definition.prior_observation_days,
        demographics=plan_demo,
        rules=rules,
        exit=plan_exit,
        era_gap_days=definition.era_gap_days,
        warnings=tuple(warnings),
    )


def _filter_events(events: list[tuple], query: PlanQuery) -> list[tuple]:
    concepts = query.concepts
    comparator = query.vp_comparator
    if comparator is None:
        return [ev for ev in events if ev[2] in concepts]
    threshold = query.vp_threshold
    unit = query.vp_unit
    out = []
    for ev in events:
        if ev[2] not in concepts:
            continue
        value = ev[EV_VALUE]
        if value is None or not compare(comparator, value, threshold):
            continue
        if unit is not None and ev[EV_UNIT] != unit:
            continue
        out.append(ev)
    return out


def _apply_occurrence(matching: list[tuple], query: PlanQuery) -> list[tuple]:
    kind = query.occurrence_kind
    if kind == "first_ever":
        return matching[:1]
    if kind == "nth":
        n = query.occurrence_n
        return matching[n - 1:n] if len(matching) >= n else []
    return matching


def _collapse_eras(spans: list[tuple[int, int]], gap_days: int) -> list[tuple[int, int]]:
    eras: list[list[int]] = []
    for start, end in sorted(spans):
        if eras and start - eras[-1][1] - 1 <= gap_days:
            if end > eras[-1][1]:
                eras[-1][1] = end
        else:
            eras.append([start, end])
    return [(s, e) for s, e in eras]


class _PersonEvaluator:
    """Per-person evaluation against a fixed plan; one instance per run."""

    def __init__(self, plan: ExecutionPlan, store: Store):
        self.plan = plan
        self.store = store
        self.n_stages = 3 + len(plan.rules)

    def _eligible(self, person_id: int, query: PlanQuery) -> tuple[list[tuple], list[int]]:
        events = _apply_occurrence(
            _filter_events(self.store.domain_events(person_id, query.domain), query), query)
        return events, [ev[0] for ev in events]

    def _passes_demographics(self, person_id: int, index_day: int) -> bool:
        demo = self.plan.demographics
        if demo is None:
            return True
        person = self.store.person(person_id)
        if demo.age_low is not None:
            age = age_years_at(person.birth_day, index_day)
            if not (demo.age_low <= age <= demo.age_high):
                return False
        if demo.gender is not None and person.gender not in demo.gender:
            return False
        if demo.race is not None and person.race not in demo.race:
            return False
        return True

    def _passes_prior(self, periods: tuple, index_day: int) -> bool:
        lo = index_day - self.plan.prior_observation_days
        for start, end in periods:
            if start <= lo and index_day <= end:
                return True
        return False

    def _rule_count(self, rule: PlanRule, starts: list[int], candidate: tuple) -> int:
        if rule.anchor == "entry_end":
            anchor = candidate[EV_END] if candidate[EV_END] is not None else candidate[EV_START]
        else:
            anchor = candidate[EV_START]
        lo = anchor + rule.start_offset
        hi = anchor + rule.end_offset
        return bisect_right(starts, hi) - bisect_left(starts, lo)

    def _exit_day(self, person_id: int, index_day: int, periods: tuple) -> int:
        obs_end = index_day
        for start, end in periods:
            if start <= index_day <= end:
                obs_end = end
                break
        ex = self.plan.exit
        if ex.kind == "fixed_offset":
            raw = index_day + ex.days
        elif ex.kind == "end_of_continuous_exposure":
            concepts = ex.concepts
            spans = [
                (ev[0], ev[EV_END] if ev[EV_END] is not None else ev[0])
                for ev in self.store.domain_events(person_id, "drug")
                if ev[2] in concepts
            ]
            raw = index_day
            for start, end in _collapse_eras(spans, ex.persistence_gap_days):
                if start <= index_day <= end:
                    raw = end
                    break
        else:
            matching, starts = self._eligible(person_id, ex.query)
            pos = bisect_left(starts, index_day)
            raw = matching[pos][0] if pos < len(matching) else obs_end
        return max(index_day, min(raw, obs_end))

    def evaluate(self, person_id: int):
        """Returns (best stage depth, cohort record or None, strengthener flags)."""
        plan = self.plan
        candidates = _apply_occurrence(
            _filter_events(self.store.domain_events(person_id, plan.entry.domain), plan.entry),
            plan.entry)
        if not candidates:
            return 0, None, None

        periods = self.store.periods_for(person_id)
        rule_starts: dict[int, list[int]] = {}
        n_stages = self.n_stages
        best = 0
        winner = None

        for cand in candidates:
            index_day = cand[EV_START]
            depth = 1
            if self._passes_prior(periods, index_day):
                depth = 2
                if self._passes_demographics(person_id, index_day):
                    depth = 3
                    for i, rule in enumerate(plan.rules):
                        if rule.role != "strengthener":
                            starts = rule_starts.get(i)
                            if starts is None:
                                _, starts = self._eligible(person_id, rule.query)
                                rule_starts[i] = starts
                            satisfied = compare(
                                rule.count_comparator,
                                self._rule_count(rule, starts, cand),
                                rule.count,
                            )
                            keep = satisfied if rule.role == "inclusion" else not satisfied
                            if not keep:
                                break
                        depth += 1
            if depth > best:
                best = depth
            if depth == n_stages and winner is None:
                winner = cand
                break  # candidates are chronological; later ones cannot beat this

        if winner is None:
            # remaining candidates were not examined only if a winner was
            # found, so best is already the true maximum here
            return best, None, None

        # a winner short-circuits the loop; survivorship of later candidates
        # no longer matters because every stage count saturates at the person
        best = n_stages
        index_day = winner[EV_START]
        record = CohortRecord(person_id, index_day, self._exit_day(person_id, index_day, periods))

        flags = []
        for i, rule in enumerate(plan.rules):
            if rule.role != "strengthener":
                continue
            starts = rule_starts.get(i)
            if starts is None:
                _, starts = self._eligible(person_id, rule.query)
                rule_starts[i] = starts
            flags.append(compare(
                rule.count_comparator, self._rule_count(rule, starts, winner), rule.count))
        return best, record, tuple(flags)


def execute(plan: ExecutionPlan, store: Store,
            threads: int = 1) -> tuple[list[CohortRecord], AttritionReport]:
    """Evaluate a compiled plan over every person in the store. The threads
    argument partitions persons across worker threads; output is identical
    for any thread count because persons are independent and results are
    merged in person order."""
    evaluator = _PersonEvaluator(plan, store)
    person_ids = store.person_ids

    if threads <= 1 or len(person_ids) < 2:
        results = [evaluator.evaluate(pid) for pid in person_ids]
    else:
        chunk_size = (len(person_ids) + threads - 1) // threads
        chunks = [person_ids[i:i + chunk_size] for i in range(0, len(person_ids), chunk_size)]
        with ThreadPoolExecutor(max_workers=threads) as pool:
            chunk_results = pool.map(lambda ids: [evaluator.evaluate(pid) for pid in ids], chunks)
            results = [item for chunk in chunk_results for item in chunk]

    stage_names = ["entry_candidates", "prior_observation", "demographics"] + [
        r.name for r in plan.rules
    ]
    survivors = [0] * len(stage_names)
    records: list[CohortRecord] = []
    strengthener_rules = [r for r in plan.rules if r.role == "strengthener"]
    strengthener_counts = [0] * len(strengthener_rules)

    for best, record, flags in results:
        for stage in range(best):
            survivors[stage] += 1
        if record is not None:
            records.append(record)
            for i, flag in enumerate(flags):
                if flag:
                    strengthener_counts[i] += 1

    notes = tuple(
        StrengthenerNote(rule.name, count, count / len(records) if records else None)
        for rule, count in zip(strengthener_rules, strengthener_counts)
    )
    report = AttritionReport(
        stages=build_stages(stage_names, len(person_ids), survivors),
        strengtheners=notes,
    )
    records.sort(key=lambda r: r.person_id)
    return records, report
