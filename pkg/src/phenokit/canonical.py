"""Canonical JSON form of a phenotype definition.

The canonical form is the storage and transport format: key order is fixed,
optional clauses are explicit nulls, and collections are emitted in
definition order (concept set items sorted by concept id, demographic code
sets sorted) so that equal definitions serialize to identical bytes. The
content hash of that byte stream identifies a definition version.
"""
from __future__ import annotations

import hashlib
import json
from typing import Any, Optional

from .model import (
    CriterionRule,
    Demographics,
    EventQuery,
    ExitStrategy,
    Metadata,
    Occurrence,
    PhenotypeDefinition,
    TemporalWindow,
    ValuePredicate,
)
from .vocab import ConceptSet, ConceptSetItem


class CanonicalError(ValueError):
    """Malformed canonical document; message carries the JSON path."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _occurrence_doc(occ: Occurrence) -> dict:
    doc: dict[str, Any] = {"kind": occ.kind}
    if occ.kind == "nth":
        doc["n"] = occ.n
    return doc


def _query_doc(query: EventQuery) -> dict:
    vp = query.value_predicate
    return {
        "domain": query.domain,
        "concept_set_ref": query.concept_set_ref,
        "occurrence": _occurrence_doc(query.occurrence),
        "value_predicate": None if vp is None else {
            "comparator": vp.comparator,
            "threshold": vp.threshold,
            "unit_concept_id": vp.unit_concept_id,
        },
    }


def _window_doc(window: TemporalWindow) -> dict:
    return {
        "start_offset_days": window.start_offset_days,
        "end_offset_days": window.end_offset_days,
        "anchor": window.anchor,
    }


def _exit_doc(exit_strategy: ExitStrategy) -> dict:
    kind = exit_strategy.kind
    if kind == "fixed_offset":
        return {"kind": kind, "days": exit_strategy.days}
    if kind == "end_of_continuous_exposure":
        return {
            "kind": kind,
            "concept_set_ref": exit_strategy.concept_set_ref,
            "persistence_gap_days": exit_strategy.persistence_gap_days,
        }
    if kind == "event_based":
        return {"kind": kind, "query": _query_doc(exit_strategy.query)}
    raise ValueError(f"unknown exit kind {kind!r}")


def to_canonical(definition: PhenotypeDefinition) -> dict:
    d = definition
    demo = d.demographics
    return {
        "id": d.definition_id,
        "version": d.version,
        "metadata": {
            "intent": d.metadata.intent,
            "literature_refs": list(d.metadata.literature_refs),
            "authors": list(d.metadata.authors),
            "role_waivers": list(d.metadata.role_waivers),
        },
        "concept_sets": [
            {
                "set_id": cs.set_id,
                "name": cs.name,
                "items": [
                    {
                        "concept_id": item.concept_id,
                        "include_descendants": item.include_descendants,
                        "is_excluded": item.is_excluded,
                    }
                    for item in sorted(cs.items, key=lambda it: it.concept_id)
                ],
            }
            for cs in d.concept_sets
        ],
        "entry": None if d.entry is None else _query_doc(d.entry),
        "prior_observation_days": d.prior_observation_days,
        "demographics": None if demo is None else {
            "age_at_index": None if demo.age_at_index is None else list(demo.age_at_index),
            "gender": None if demo.gender is None else sorted(demo.gender),
            "race": None if demo.race is None else sorted(demo.race),
        },
        "rules": [
            {
                "name": rule.name,
                "role": rule.role,
                "query": _query_doc(rule.query),
                "window": _window_doc(rule.window),
                "count_comparator": rule.count_comparator,
                "count": rule.count,
            }
            for rule in d.rules
        ],
        "exit": None if d.exit is None else _exit_doc(d.exit),
        "era_gap_days": d.era_gap_days,
    }


def to_canonical_json(definition: PhenotypeDefinition) -> str:
    return json.dumps(to_canonical(definition), indent=2) + "\n"


def content_hash(definition: PhenotypeDefinition) -> str:
    return hashlib.sha256(to_canonical_json(definition).encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Reading

def _expect(doc: Any, path: str, kind: type, kind_name: str) -> Any:
    # bool is an int subclass; reject it where an int is demanded
    if kind is int and isinstance(doc, bool):
        raise CanonicalError(path, f"expected {kind_name}, got boolean")
    if not isinstance(doc, kind):
        raise CanonicalError(path, f"expected {kind_name}, got {type(doc).__name__}")
    return doc


def _get(doc: dict, path: str, key: str, kind: type, kind_name: str) -> Any:
    if key not in doc:
        raise CanonicalError(f"{path}.{key}", "missing required field")
    return _expect(doc[key], f"{path}.{key}", kind, kind_name)


def _get_int(doc: dict, path: str, key: str) -> int:
    return _get(doc, path, key, int, "integer")


def _get_str(doc: dict, path: str, key: str) -> str:
    return _get(doc, path, key, str, "string")


def _get_bool(doc: dict, path: str, key: str) -> bool:
    return _get(doc, path, key, bool, "boolean")


def _get_list(doc: dict, path: str, key: str) -> list:
    return _get(doc, path, key, list, "array")


def _get_number(doc: dict, path: str, key: str) -> float:
    if key not in doc:
        raise CanonicalError(f"{path}.{key}", "missing required field")
    value = doc[key]
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise CanonicalError(f"{path}.{key}", f"expected number, got {type(value).__name__}")
    return float(value)


def _str_items(raw: list, path: str) -> tuple[str, ...]:
    return tuple(_expect(v, f"{path}[{i}]", str, "string") for i, v in enumerate(raw))


def _occurrence_from(doc: Any, path: str) -> Occurrence:
    _expect(doc, path, dict, "object")
    kind = _get_str(doc, path, "kind")
    if kind == "nth":
        return Occurrence("nth", _get_int(doc, path, "n"))
    if "n" in doc and doc["n"] is not None:
        raise CanonicalError(f"{path}.n", f"occurrence kind {kind!r} takes no n")
    return Occurrence(kind)


def _query_from(doc: Any, path: str) -> EventQuery:
    _expect(doc, path, dict, "object")
    vp_doc = doc.get("value_predicate")
    vp: Optional[ValuePredicate] = None
    if vp_doc is not None:
        vp_path = f"{path}.value_predicate"
        _expect(vp_doc, vp_path, dict, "object")
        unit = vp_doc.get("unit_concept_id")
        if unit is not None:
            unit = _expect(unit, f"{vp_path}.unit_concept_id", int, "integer")
        vp = ValuePredicate(
            comparator=_get_str(vp_doc, vp_path, "comparator"),
            threshold=_get_number(vp_doc, vp_path, "threshold"),
            unit_concept_id=unit,
        )
    occ_doc = doc.get("occurrence")
    occurrence = Occurrence("any") if occ_doc is None else _occurrence_from(occ_doc, f"{path}.occurrence")
    return EventQuery(
        domain=_get_str(doc, path, "domain"),
        concept_set_ref=_get_int(doc, path, "concept_set_ref"),
        occurrence=occurrence,
        value_predicate=vp,
    )


def _window_from(doc: Any, path: str) -> TemporalWindow:
    _expect(doc, path, dict, "object")
    anchor = doc.get("anchor", "index_date")
    return TemporalWindow(
        start_offset_days=_get_int(doc, path, "start_offset_days"),
        end_offset_days=_get_int(doc, path, "end_offset_days"),
        anchor=_expect(anchor, f"{path}.anchor", str, "string"),
    )


def _exit_from(doc: Any, path: str) -> ExitStrategy:
    _expect(doc, path, dict, "object")
    kind = _get_str(doc, path, "kind")
    if kind == "fixed_offset":
        return ExitStrategy.fixed_offset(_get_int(doc, path, "days"))
    if kind == "end_of_continuous_exposure":
        return ExitStrategy.end_of_continuous_exposure(
            concept_set_ref=_get_int(doc, path, "concept_set_ref"),
            persistence_gap_days=_get_int(doc, path, "persistence_gap_days"),
        )
    if kind == "event_based":
        if "query" not in doc:
            raise CanonicalError(f"{path}.query", "missing required field")
        return ExitStrategy.event_based(_query_from(doc["query"], f"{path}.query"))
    raise CanonicalError(f"{path}.kind", f"unknown exit kind {kind!r}")


def _demographics_from(doc: Any, path: str) -> Demographics:
    _expect(doc, path, dict, "object")
    age = doc.get("age_at_index")
    age_tuple: Optional[tuple[int, int]] = None
    if age is not None:
        _expect(age, f"{path}.age_at_index", list, "array")
        if len(age) != 2:
            raise CanonicalError(f"{path}.age_at_index", "expected [low, high]")
        lo = _expect(age[0], f"{path}.age_at_index[0]", int, "integer")
        hi = _expect(age[1], f"{path}.age_at_index[1]", int, "integer")
        age_tuple = (lo, hi)
    gender = doc.get("gender")
    race = doc.get("race")
    return Demographics(
        age_at_index=age_tuple,
        gender=None if gender is None else frozenset(_str_items(_expect(gender, f"{path}.gender", list, "array"), f"{path}.gender")),
        race=None if race is None else frozenset(_str_items(_expect(race, f"{path}.race", list, "array"), f"{path}.race")),
    )


def _concept_set_from(doc: Any, path: str) -> ConceptSet:
    _expect(doc, path, dict, "object")
    items = []
    for j, item_doc in enumerate(_get_list(doc, path, "items")):
        item_path = f"{path}.items[{j}]"
        _expect(item_doc, item_path, dict, "object")
        items.append(ConceptSetItem(
            concept_id=_get_int(item_doc, item_path, "concept_id"),
            include_descendants=_expect(
                item_doc.get("include_descendants", False),
                f"{item_path}.include_descendants", bool, "boolean"),
            is_excluded=_expect(
                item_doc.get("is_excluded", False),
                f"{item_path}.is_excluded", bool, "boolean"),
        ))
    return ConceptSet(
        set_id=_get_int(doc, path, "set_id"),
        name=_get_str(doc, path, "name"),
        items=tuple(sorted(items, key=lambda it: it.concept_id)),
    )


def from_canonical(doc: Any) -> PhenotypeDefinition:
    """Build a definition from a canonical document, locating any defect by
    its JSON path. Structural validity beyond shape (reference integrity,
    interval sanity) stays with validate_definition."""
    _expect(doc, "$", dict, "object")
    path = "$"

    meta_doc = doc.get("metadata") or {}
    _expect(meta_doc, "$.metadata", dict, "object")
    metadata = Metadata(
        intent=_expect(meta_doc.get("intent", ""), "$.metadata.intent", str, "string"),
        literature_refs=_str_items(
            _expect(meta_doc.get("literature_refs", []), "$.metadata.literature_refs", list, "array"),
            "$.metadata.literature_refs"),
        authors=_str_items(
            _expect(meta_doc.get("authors", []), "$.metadata.authors", list, "array"),
            "$.metadata.authors"),
        role_waivers=_str_items(
            _expect(meta_doc.get("role_waivers", []), "$.metadata.role_waivers", list, "array"),
            "$.metadata.role_waivers"),
    )

    concept_sets = tuple(
        _concept_set_from(cs_doc, f"$.concept_sets[{i}]")
        for i, cs_doc in enumerate(_expect(
            doc.get("concept_sets", []), "$.concept_sets", list, "array"))
    )

    entry_doc = doc.get("entry")
    entry = None if entry_doc is None else _query_from(entry_doc, "$.entry")

    demo_doc = doc.get("demographics")
    demographics = None if demo_doc is None else _demographics_from(demo_doc, "$.demographics")

    rules = []
    for i, rule_doc in enumerate(_expect(doc.get("rules", []), "$.rules", list, "array")):
        rule_path = f"$.rules[{i}]"
        _expect(rule_doc, rule_path, dict, "object")
        if "query" not in rule_doc:
            raise CanonicalError(f"{rule_path}.query", "missing required field")
        if "window" not in rule_doc:
            raise CanonicalError(f"{rule_path}.window", "missing required field")
        rules.append(CriterionRule(
            name=_get_str(rule_doc, rule_path, "name"),
            role=_expect(rule_doc.get("role", "inclusion"), f"{rule_path}.role", str, "string"),
            query=_query_from(rule_doc["query"], f"{rule_path}.query"),
            window=_window_from(rule_doc["window"], f"{rule_path}.window"),
            count_comparator=_expect(rule_doc.get("count_comparator", ">="), f"{rule_path}.count_comparator", str, "string"),
            count=_expect(rule_doc.get("count", 1), f"{rule_path}.count", int, "integer"),
        ))

    exit_doc = doc.get("exit")
    exit_strategy = None if exit_doc is None else _exit_from(exit_doc, "$.exit")

    return PhenotypeDefinition(
        definition_id=_get_str(doc, path, "id"),
        version=_get_int(doc, path, "version"),
        metadata=metadata,
        concept_sets=concept_sets,
        entry=entry,
        exit=exit_strategy,
        prior_observation_days=_expect(doc.get("prior_observation_days", 0), "$.prior_observation_days", int, "integer"),
        demographics=demographics,
        rules=tuple(rules),
        era_gap_days=_expect(doc.get("era_gap_days", 0), "$.era_gap_days", int, "integer"),
    )


def load_definition(path_or_text) -> PhenotypeDefinition:
    """Read a canonical JSON document from a path or a JSON string."""
    from pathlib import Path

    if isinstance(path_or_text, (str, bytes)) and not str(path_or_text).lstrip().startswith("{"):
        text = Path(path_or_text).read_text(encoding="utf-8")
    elif isinstance(path_or_text, Path):
        text = path_or_text.read_text(encoding="utf-8")
    else:
        text = path_or_text
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise CanonicalError("$", f"not valid JSON: {exc}") from None
    return from_canonical(doc)
