"""Phenotype definition AST, structural validation, and the authoring checklist.

The AST is a tree of frozen dataclasses with value semantics; rule lists are
ordered (the order drives attrition reporting, never membership). Structural
issues are data, not exceptions: validate_definition returns a list and an
empty list means every invariant holds.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from .vocab import EVENT_DOMAINS, ConceptSet, Vocabulary

COMPARATORS = ("<", "<=", "=", ">=", ">")
OCCURRENCE_KINDS = ("first_ever", "any", "nth")
RULE_ROLES = ("inclusion", "exclusion", "strengthener", "disqualifier")
WINDOW_ANCHORS = ("index_date", "entry_start", "entry_end")
EXIT_KINDS = ("fixed_offset", "end_of_continuous_exposure", "event_based")
ROLE_WAIVERS = ("disqualifier", "strengthener")


def compare(comparator: str, left: float, right: float) -> bool:
    if comparator == "<":
        return left < right
    if comparator == "<=":
        return left <= right
    if comparator == "=":
        return left == right
    if comparator == ">=":
        return left >= right
    if comparator == ">":
        return left > right
    raise ValueError(f"unknown comparator {comparator!r}")


@dataclass(frozen=True)
class Occurrence:
    kind: str  # first_ever | any | nth
    n: Optional[int] = None

    @staticmethod
    def first_ever() -> "Occurrence":
        return Occurrence("first_ever")

    @staticmethod
    def any() -> "Occurrence":
        return Occurrence("any")

    @staticmethod
    def nth(n: int) -> "Occurrence":
        return Occurrence("nth", n)


@dataclass(frozen=True)
class ValuePredicate:
    comparator: str
    threshold: float
    unit_concept_id: Optional[int] = None


@dataclass(frozen=True)
class EventQuery:
    domain: str
    concept_set_ref: int
    occurrence: Occurrence = Occurrence("any")
    value_predicate: Optional[ValuePredicate] = None


@dataclass(frozen=True)
class TemporalWindow:
    start_offset_days: int
    end_offset_days: int
    anchor: str = "index_date"


@dataclass(frozen=True)
class CriterionRule:
    name: str
    query: EventQuery
    window: TemporalWindow
    count_comparator: str = ">="
    count: int = 1
    role: str = "inclusion"


@dataclass(frozen=True)
class ExitStrategy:
    kind: str
    days: Optional[int] = None
    concept_set_ref: Optional[int] = None
    persistence_gap_days: Optional[int] = None
    query: Optional[EventQuery] = None

    @staticmethod
    def fixed_offset(days: int) -> "ExitStrategy":
        return ExitStrategy("fixed_offset", days=days)

    @staticmethod
    def end_of_continuous_exposure(concept_set_ref: int, persistence_gap_days: int) -> "ExitStrategy":
        return ExitStrategy(
            "end_of_continuous_exposure",
            concept_set_ref=concept_set_ref,
            persistence_gap_days=persistence_gap_days,
        )

    @staticmethod
    def event_based(query: EventQuery) -> "ExitStrategy":
        return ExitStrategy("event_based", query=query)


@dataclass(frozen=True)
class Demographics:
    age_at_index: Optional[tuple[int, int]] = None
    gender: Optional[frozenset[str]] = None
    race: Optional[frozenset[str]] = None


@dataclass(frozen=True)
class Metadata:
    intent: str = ""
    literature_refs: tuple[str, ...] = ()
    authors: tuple[str, ...] = ()
    role_waivers: tuple[str, ...] = ()


@dataclass(frozen=True)
class PhenotypeDefinition:
    definition_id: str
    version: int
    metadata: Metadata
    concept_sets: tuple[ConceptSet, ...]
    entry: Optional[EventQuery]
    exit: Optional[ExitStrategy]
    prior_observation_days: int = 0
    demographics: Optional[Demographics] = None
    rules: tuple[CriterionRule, ...] = ()
    era_gap_days: int = 0


@dataclass(frozen=True)
class StructuralIssue:
    path: str
    message: str

    def __str__(self) -> str:
        return f"{self.path}: {self.message}"


def _check_query(query: EventQuery, path: str, declared: set[int], issues: list[StructuralIssue],
                 allow_occurrence: bool = True, allow_value: bool = True) -> None:
    if query.domain not in EVENT_DOMAINS:
        issues.append(StructuralIssue(f"{path}.domain", f"unknown domain {query.domain!r}"))
    if query.concept_set_ref not in declared:
        issues.append(StructuralIssue(
            f"{path}.concept_set_ref",
            f"references undeclared concept set {query.concept_set_ref}",
        ))
    occ = query.occurrence
    if occ.kind not in OCCURRENCE_KINDS:
        issues.append(StructuralIssue(f"{path}.occurrence", f"unknown occurrence kind {occ.kind!r}"))
    elif occ.kind == "nth":
        if occ.n is None or occ.n < 1:
            issues.append(StructuralIssue(f"{path}.occurrence", "nth occurrence requires n >= 1"))
    elif occ.n is not None:
        issues.append(StructuralIssue(f"{path}.occurrence", f"{occ.kind} occurrence takes no n"))
    if not allow_occurrence and occ.kind != "any":
        issues.append(StructuralIssue(f"{path}.occurrence", "only 'any' occurrence is supported here"))
    vp = query.value_predicate
    if vp is not None:
        if not allow_value:
            issues.append(StructuralIssue(f"{path}.value_predicate", "value predicate not supported here"))
        if query.domain != "measurement":
            issues.append(StructuralIssue(
                f"{path}.value_predicate",
                "value predicate requires domain 'measurement'",
            ))
        if vp.comparator not in COMPARATORS:
            issues.append(StructuralIssue(
                f"{path}.value_predicate.comparator",
                f"unknown comparator {vp.comparator!r}",
            ))


def validate_definition(definition: PhenotypeDefinition) -> list[StructuralIssue]:
    """Check every type invariant and reference; empty list means valid."""
    issues: list[StructuralIssue] = []
    d = definition

    if not d.definition_id:
        issues.append(StructuralIssue("id", "definition id must be non-empty"))
    if d.version < 1:
        issues.append(StructuralIssue("version", "version must be >= 1"))
    for waiver in d.metadata.role_waivers:
        if waiver not in ROLE_WAIVERS:
            issues.append(StructuralIssue(
                "metadata.role_waivers",
                f"unknown waiver {waiver!r}; allowed: {', '.join(ROLE_WAIVERS)}",
            ))

    declared: set[int] = set()
    seen_names: set[str] = set()
    for i, cs in enumerate(d.concept_sets):
        path = f"concept_sets[{i}]"
        if cs.set_id in declared:
            issues.append(StructuralIssue(path, f"duplicate set_id {cs.set_id}"))
        declared.add(cs.set_id)
        if cs.name in seen_names:
            issues.append(StructuralIssue(path, f"duplicate concept set name {cs.name!r}"))
        seen_names.add(cs.name)

    if d.entry is None:
        issues.append(StructuralIssue("entry", "entry query is required"))
    else:
        _check_query(d.entry, "entry", declared, issues)

    if d.prior_observation_days < 0:
        issues.append(StructuralIssue("prior_observation_days", "must be >= 0"))
    if d.era_gap_days < 0:
        issues.append(StructuralIssue("era_gap_days", "must be >= 0"))

    demo = d.demographics
    if demo is not None:
        if demo.age_at_index is not None:
            lo, hi = demo.age_at_index
            if lo > hi:
                issues.append(StructuralIssue("demographics.age_at_index", f"interval [{lo}, {hi}] is empty"))
            if lo < 0:
                issues.append(StructuralIssue("demographics.age_at_index", "ages must be >= 0"))
        if demo.gender is not None and not demo.gender:
            issues.append(StructuralIssue("demographics.gender", "code set is empty (matches nobody)"))
        if demo.race is not None and not demo.race:
            issues.append(StructuralIssue("demographics.race", "code set is empty (matches nobody)"))
        if demo.age_at_index is None and demo.gender is None and demo.race is None:
            issues.append(StructuralIssue("demographics", "demographic constraints present but empty"))

    rule_names: set[str] = set()
    for i, rule in enumerate(d.rules):
        path = f"rules[{i}]"
        if rule.name in rule_names:
            issues.append(StructuralIssue(path, f"duplicate rule name {rule.name!r}"))
        rule_names.add(rule.name)
        if rule.role not in RULE_ROLES:
            issues.append(StructuralIssue(f"{path}.role", f"unknown role {rule.role!r}; allowed: {', '.join(RULE_ROLES)}"))
        _check_query(rule.query, f"{path}.query", declared, issues)
        w = rule.window
        if w.anchor not in WINDOW_ANCHORS:
            issues.append(StructuralIssue(f"{path}.window.anchor", f"unknown anchor {w.anchor!r}"))
        if w.start_offset_days > w.end_offset_days:
            issues.append(StructuralIssue(
                f"{path}.window",
                f"start_offset {w.start_offset_days} after end_offset {w.end_offset_days}",
            ))
        if rule.count < 0:
            issues.append(StructuralIssue(f"{path}.count", "count must be >= 0"))
        if rule.count_comparator not in COMPARATORS:
            issues.append(StructuralIssue(f"{path}.count_comparator", f"unknown comparator {rule.count_comparator!r}"))

    ex = d.exit
    if ex is None:
        issues.append(StructuralIssue("exit", "exit strategy is required"))
    elif ex.kind not in EXIT_KINDS:
        issues.append(StructuralIssue("exit.kind", f"unknown exit kind {ex.kind!r}; allowed: {', '.join(EXIT_KINDS)}"))
    elif ex.kind == "fixed_offset":
        if ex.days is None or ex.days < 0:
            issues.append(StructuralIssue("exit.days", "fixed_offset requires days >= 0"))
    elif ex.kind == "end_of_continuous_exposure":
        if ex.concept_set_ref is None or ex.concept_set_ref not in declared:
            issues.append(StructuralIssue("exit.concept_set_ref", f"references undeclared concept set {ex.concept_set_ref}"))
        if ex.persistence_gap_days is None or ex.persistence_gap_days < 0:
            issues.append(StructuralIssue("exit.persistence_gap_days", "must be >= 0"))
    elif ex.kind == "event_based":
        if ex.query is None:
            issues.append(StructuralIssue("exit.query", "event_based exit requires a query"))
        else:
            # Exit queries take every matching event on/after index; occurrence
            # qualifiers and value predicates are not expressible here in v1.
            _check_query(ex.query, "exit.query", declared, issues,
                         allow_occurrence=False, allow_value=False)

    return issues


@dataclass(frozen=True)
class ChecklistItem:
    name: str
    passed: bool
    detail: str


@dataclass(frozen=True)
class ChecklistReport:
    items: tuple[ChecklistItem, ...]
    passed: bool = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "passed", all(item.passed for item in self.items))

    def to_doc(self) -> dict:
        return {
            "passed": self.passed,
            "items": [
                {"name": i.name, "passed": i.passed, "detail": i.detail}
                for i in self.items
            ],
        }


def referenced_concept_ids(definition: PhenotypeDefinition) -> set[int]:
    ids: set[int] = set()
    for cs in definition.concept_sets:
        for item in cs.items:
            ids.add(item.concept_id)
    return ids


def definition_mapping_fraction(definition: PhenotypeDefinition, vocab: Vocabulary) -> tuple[float, list[int]]:
    """Fraction of concept ids referenced by the definition that resolve in
    the vocabulary. Returns (fraction, unresolved ids); 1.0 when nothing is
    referenced (emptiness is the concept-set item's problem, not mapping's)."""
    ids = referenced_concept_ids(definition)
    if not ids:
        return 1.0, []
    missing = sorted(cid for cid in ids if cid not in vocab)
    return (len(ids) - len(missing)) / len(ids), missing


def checklist_lint(
    definition: PhenotypeDefinition,
    vocab: Vocabulary,
    sufficiency_threshold: float = 0.95,
) -> ChecklistReport:
    """Machine-checkable authoring checklist; one pass/fail line per item."""
    d = definition
    items: list[ChecklistItem] = []

    intent_ok = bool(d.metadata.intent.strip())
    items.append(ChecklistItem(
        "intent", intent_ok,
        "motivation recorded" if intent_ok else "intent is empty",
    ))

    refs_ok = len(d.metadata.literature_refs) >= 1
    items.append(ChecklistItem(
        "literature", refs_ok,
        f"{len(d.metadata.literature_refs)} reference(s)" if refs_ok else "no literature references",
    ))

    sets_ok = len(d.concept_sets) >= 1
    items.append(ChecklistItem(
        "concept_sets", sets_ok,
        f"{len(d.concept_sets)} concept set(s)" if sets_ok else "no concept sets declared",
    ))

    rules_ok = len(d.rules) >= 1
    items.append(ChecklistItem(
        "constraints", rules_ok,
        f"{len(d.rules)} criterion rule(s)" if rules_ok else "no constraint rules",
    ))

    roles_present = {r.role for r in d.rules}
    missing_roles = [
        role for role in ROLE_WAIVERS
        if role not in roles_present and role not in d.metadata.role_waivers
    ]
    items.append(ChecklistItem(
        "roles_considered", not missing_roles,
        "disqualifier and strengthener roles present or waived" if not missing_roles
        else f"unconsidered role(s): {', '.join(missing_roles)} (add a rule or waive in metadata)",
    ))

    fraction, missing_ids = definition_mapping_fraction(d, vocab)
    vocab_ok = fraction >= sufficiency_threshold
    detail = f"mapping sufficiency {fraction:.3f} (threshold {sufficiency_threshold:g})"
    if missing_ids:
        detail += f"; unresolved concept ids: {missing_ids}"
    items.append(ChecklistItem("vocabulary", vocab_ok, detail))

    entry_exit_ok = d.entry is not None and d.exit is not None
    items.append(ChecklistItem(
        "entry_exit", entry_exit_ok,
        "entry event and exit strategy defined" if entry_exit_ok
        else "entry and exit must both be defined",
    ))

    return ChecklistReport(items=tuple(items))
