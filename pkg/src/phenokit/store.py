"""Immutable OMOP-lite patient event store.

Ingestion reads the delimited schemas (persons.csv, observation_periods.csv,
events.csv plus a vocabulary bundle), enforces referential integrity, merges
overlapping observation periods, and freezes everything. After construction
the store is read-only and safe for concurrent readers.

Internally events live as plain tuples grouped by (person_id, domain) and
sorted by (start_day, event_id); the dataclass view is materialized only at
the public query surface. This keeps a multi-million-event store scannable
in pure Python.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

from .dates import DateError, format_day, parse_day
from .vocab import EVENT_DOMAINS, Vocabulary, load_vocabulary, save_vocabulary

# Internal event tuple layout (sort order is the (start, event_id) prefix).
EV_START, EV_ID, EV_CONCEPT, EV_END, EV_VALUE, EV_UNIT = range(6)


class StoreError(ValueError):
    """Bad query against an ingested store."""


class IngestError(ValueError):
    """Malformed or inconsistent input data; message names the offending row."""


@dataclass(frozen=True, slots=True)
class Person:
    person_id: int
    birth_day: int
    gender: Optional[str]
    race: Optional[str]
    ethnicity: Optional[str]


@dataclass(frozen=True, slots=True)
class ClinicalEvent:
    event_id: int
    person_id: int
    domain: str
    concept_id: int
    start_day: int
    end_day: Optional[int] = None
    value_as_number: Optional[float] = None
    unit_concept_id: Optional[int] = None


@dataclass(frozen=True)
class ColumnDescriptor:
    name: str
    semantic_type: str
    required: bool
    missingness: float


@dataclass(frozen=True)
class TableDictionary:
    row_count: int
    columns: tuple[ColumnDescriptor, ...]


@dataclass(frozen=True)
class DataDictionary:
    tables: dict[str, TableDictionary]

    def to_doc(self) -> dict:
        return {
            name: {
                "row_count": table.row_count,
                "columns": [
                    {
                        "name": col.name,
                        "semantic_type": col.semantic_type,
                        "required": col.required,
                        "missingness": col.missingness,
                    }
                    for col in table.columns
                ],
            }
            for name, table in self.tables.items()
        }


def merge_periods(periods: Iterable[tuple[int, int]]) -> tuple[tuple[int, int], ...]:
    """Union of closed day intervals; overlapping or touching intervals merge."""
    ordered = sorted(periods)
    merged: list[tuple[int, int]] = []
    for start, end in ordered:
        if merged and start <= merged[-1][1] + 1:
            merged[-1] = (merged[-1][0], max(merged[-1][1], end))
        else:
            merged.append((start, end))
    return tuple(merged)


class Store:
    """Read-only patient event repository; construct via ingest() or build()."""

    def __init__(
        self,
        persons: dict[int, Person],
        periods: dict[int, tuple[tuple[int, int], ...]],
        events: dict[tuple[int, str], list[tuple]],
        vocab: Vocabulary,
        n_events: int,
        null_counts: dict[str, int],
        demographic_nulls: dict[str, int],
    ):
        self.persons = persons
        self.periods = periods
        self._events = events
        self.vocab = vocab
        self.n_events = n_events
        self._null_counts = null_counts
        self._demographic_nulls = demographic_nulls
        self.person_ids: tuple[int, ...] = tuple(sorted(persons))
        for group in events.values():
            group.sort()

    # -- construction ------------------------------------------------------

    @classmethod
    def build(
        cls,
        persons: Sequence[Person],
        periods: Sequence[tuple[int, int, int]],
        events: Sequence[ClinicalEvent],
        vocab: Vocabulary,
    ) -> "Store":
        """Assemble and validate a store from in-memory rows."""
        person_map: dict[int, Person] = {}
        for p in persons:
            if p.person_id in person_map:
                raise IngestError(f"duplicate person_id {p.person_id}")
            person_map[p.person_id] = p
        raw_periods: dict[int, list[tuple[int, int]]] = {}
        for pid, start, end in periods:
            if pid not in person_map:
                raise IngestError(f"observation period references unknown person_id {pid}")
            if start > end:
                raise IngestError(f"observation period for person {pid} has start_date after end_date")
            raw_periods.setdefault(pid, []).append((start, end))
        grouped: dict[tuple[int, str], list[tuple]] = {}
        null_counts = {"end_date": 0, "value_as_number": 0, "unit_concept_id": 0}
        seen_event_ids: set[int] = set()
        for ev in events:
            _validate_event(ev, person_map, vocab, seen_event_ids, context=f"event {ev.event_id}")
            seen_event_ids.add(ev.event_id)
            if ev.end_day is None:
                null_counts["end_date"] += 1
            if ev.value_as_number is None:
                null_counts["value_as_number"] += 1
            if ev.unit_concept_id is None:
                null_counts["unit_concept_id"] += 1
            grouped.setdefault((ev.person_id, ev.domain), []).append(
                (ev.start_day, ev.event_id, ev.concept_id, ev.end_day, ev.value_as_number, ev.unit_concept_id)
            )
        demographic_nulls = {
            "gender": sum(1 for p in person_map.values() if p.gender is None),
            "race": sum(1 for p in person_map.values() if p.race is None),
            "ethnicity": sum(1 for p in person_map.values() if p.ethnicity is None),
        }
        return cls(
            persons=person_map,
            periods={pid: merge_periods(ps) for pid, ps in raw_periods.items()},
            events=grouped,
            vocab=vocab,
            n_events=len(events),
            null_counts=null_counts,
            demographic_nulls=demographic_nulls,
        )

    # -- queries -----------------------------------------------------------

    def person(self, person_id: int) -> Person:
        try:
            return self.persons[person_id]
        except KeyError:
            raise StoreError(f"unknown person_id {person_id}") from None

    def periods_for(self, person_id: int) -> tuple[tuple[int, int], ...]:
        if person_id not in self.persons:
            raise StoreError(f"unknown person_id {person_id}")
        return self.periods.get(person_id, ())

    def domain_events(self, person_id: int, domain: str) -> list[tuple]:
        """Raw event tuples for one person/domain, sorted by (start, event_id)."""
        return self._events.get((person_id, domain), [])

    def events_in_window(
        self,
        person_id: int,
        domain: str,
        concept_ids: frozenset[int] | set[int],
        window: tuple[int, int],
    ) -> list[ClinicalEvent]:
        """Events of that person/domain with start_date in the closed window
        and concept_id in the set, sorted by (start_date, event_id)."""
        lo, hi = window
        if lo > hi:
            raise StoreError(f"window start {lo} after end {hi}")
        if person_id not in self.persons:
            raise StoreError(f"unknown person_id {person_id}")
        out = []
        for ev in self._events.get((person_id, domain), []):
            if lo <= ev[EV_START] <= hi and ev[EV_CONCEPT] in concept_ids:
                out.append(self._materialize(person_id, domain, ev))
        return out

    def all_events(self) -> list[ClinicalEvent]:
        """Every event in the store, sorted by event_id. Test/oracle aid."""
        out = []
        for (pid, domain), group in self._events.items():
            for ev in group:
                out.append(self._materialize(pid, domain, ev))
        out.sort(key=lambda e: e.event_id)
        return out

    def person_events(self, person_id: int) -> list[ClinicalEvent]:
        """Every event for one person across all domains, sorted by event_id."""
        if person_id not in self.persons:
            raise StoreError(f"unknown person_id {person_id}")
        out = []
        for domain in EVENT_DOMAINS:
            for ev in self._events.get((person_id, domain), []):
                out.append(self._materialize(person_id, domain, ev))
        out.sort(key=lambda e: e.event_id)
        return out

    def latest_observation_end(self) -> Optional[int]:
        ends = [ps[-1][1] for ps in self.periods.values() if ps]
        return max(ends) if ends else None

    @staticmethod
    def _materialize(pid: int, domain: str, ev: tuple) -> ClinicalEvent:
        return ClinicalEvent(
            event_id=ev[EV_ID],
            person_id=pid,
            domain=domain,
            concept_id=ev[EV_CONCEPT],
            start_day=ev[EV_START],
            end_day=ev[EV_END],
            value_as_number=ev[EV_VALUE],
            unit_concept_id=ev[EV_UNIT],
        )

    # -- serialization -----------------------------------------------------

    def save(self, out_dir: str | Path) -> None:
        """Write the normalized store; identical stores serialize byte-identically."""
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "persons.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["person_id", "birth_date", "gender", "race", "ethnicity"])
            for pid in self.person_ids:
                p = self.persons[pid]
                writer.writerow([
                    p.person_id, format_day(p.birth_day),
                    p.gender or "", p.race or "", p.ethnicity or "",
                ])
        with open(out / "observation_periods.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["person_id", "start_date", "end_date"])
            for pid in self.person_ids:
                for start, end in self.periods.get(pid, ()):
                    writer.writerow([pid, format_day(start), format_day(end)])
        with open(out / "events.csv", "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow([
                "event_id", "person_id", "domain", "concept_id",
                "start_date", "end_date", "value_as_number", "unit_concept_id",
            ])
            for pid in self.person_ids:
                rows = []
                for domain in EVENT_DOMAINS:
                    for ev in self._events.get((pid, domain), []):
                        rows.append((ev[EV_START], ev[EV_ID], domain, ev))
                rows.sort(key=lambda r: (r[0], r[1]))
                for _, _, domain, ev in rows:
                    writer.writerow([
                        ev[EV_ID], pid, domain, ev[EV_CONCEPT],
                        format_day(ev[EV_START]),
                        format_day(ev[EV_END]) if ev[EV_END] is not None else "",
                        _format_value(ev[EV_VALUE]),
                        ev[EV_UNIT] if ev[EV_UNIT] is not None else "",
                    ])
        save_vocabulary(self.vocab, out)

    @classmethod
    def load(cls, store_dir: str | Path) -> "Store":
        """Load a store directory (the same schemas ingest() accepts)."""
        d = Path(store_dir)
        return ingest(
            d / "persons.csv",
            d / "observation_periods.csv",
            d / "events.csv",
            d,
        )


def _format_value(value: Optional[float]) -> str:
    if value is None:
        return ""
    return repr(value)


def _validate_event(
    ev: ClinicalEvent,
    persons: dict[int, Person],
    vocab: Vocabulary,
    seen_ids: set[int],
    context: str,
) -> None:
    if ev.event_id in seen_ids:
        raise IngestError(f"{context}: duplicate event_id {ev.event_id}")
    if ev.domain not in EVENT_DOMAINS:
        raise IngestError(f"{context}: unknown domain {ev.domain!r}")
    person = persons.get(ev.person_id)
    if person is None:
        raise IngestError(f"{context}: unknown person_id {ev.person_id}")
    if ev.concept_id not in vocab:
        raise IngestError(f"{context}: unknown concept_id {ev.concept_id}")
    if ev.start_day < person.birth_day:
        raise IngestError(f"{context}: event dated before person {ev.person_id}'s birth_date")
    if ev.end_day is not None and ev.end_day < ev.start_day:
        raise IngestError(f"{context}: end_date before start_date")
    if ev.value_as_number is not None and ev.domain != "measurement":
        raise IngestError(f"{context}: value_as_number present on non-measurement domain {ev.domain!r}")


def ingest(
    persons_file: str | Path,
    observation_file: str | Path,
    events_file: str | Path,
    vocab_bundle: str | Path,
) -> Store:
    """Read the delimited inputs and return an immutable, normalized store."""
    vocab = load_vocabulary(vocab_bundle)

    persons: dict[int, Person] = {}
    path = Path(persons_file)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            pid = _require_int(row, "person_id", where)
            if pid in persons:
                raise IngestError(f"{where}: duplicate person_id {pid}")
            persons[pid] = Person(
                person_id=pid,
                birth_day=_require_day(row, "birth_date", where),
                gender=row.get("gender") or None,
                race=row.get("race") or None,
                ethnicity=row.get("ethnicity") or None,
            )

    raw_periods: dict[int, list[tuple[int, int]]] = {}
    path = Path(observation_file)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            pid = _require_int(row, "person_id", where)
            if pid not in persons:
                raise IngestError(f"{where}: unknown person_id {pid}")
            start = _require_day(row, "start_date", where)
            end = _require_day(row, "end_date", where)
            if start > end:
                raise IngestError(f"{where}: column 'start_date': start_date after end_date")
            raw_periods.setdefault(pid, []).append((start, end))

    grouped: dict[tuple[int, str], list[tuple]] = {}
    null_counts = {"end_date": 0, "value_as_number": 0, "unit_concept_id": 0}
    seen_event_ids: set[int] = set()
    n_events = 0
    concept_domains = {cid: c.domain for cid, c in vocab.concepts.items()}
    path = Path(events_file)
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        expected = ["event_id", "person_id", "domain", "concept_id",
                    "start_date", "end_date", "value_as_number", "unit_concept_id"]
        if header != expected:
            raise IngestError(f"{path}:1: expected header {','.join(expected)}")
        for lineno, cells in enumerate(reader, start=2):
            where = f"{path}:{lineno}"
            if len(cells) != 8:
                raise IngestError(f"{where}: expected 8 columns, found {len(cells)}")
            eid_s, pid_s, domain, concept_s, start_s, end_s, value_s, unit_s = cells
            try:
                eid = int(eid_s)
            except ValueError:
                raise IngestError(f"{where}: column 'event_id': not an integer: {eid_s!r}") from None
            if eid in seen_event_ids:
                raise IngestError(f"{where}: duplicate event_id {eid}")
            seen_event_ids.add(eid)
            try:
                pid = int(pid_s)
            except ValueError:
                raise IngestError(f"{where}: column 'person_id': not an integer: {pid_s!r}") from None
            person = persons.get(pid)
            if person is None:
                raise IngestError(f"{where}: column 'person_id': unknown person_id {pid}")
            if domain not in EVENT_DOMAINS:
                raise IngestError(f"{where}: column 'domain': unknown domain {domain!r}")
            try:
                concept = int(concept_s)
            except ValueError:
                raise IngestError(f"{where}: column 'concept_id': not an integer: {concept_s!r}") from None
            if concept not in concept_domains:
                raise IngestError(f"{where}: column 'concept_id': unknown concept_id {concept}")
            try:
                start = parse_day(start_s)
            except DateError as exc:
                raise IngestError(f"{where}: column 'start_date': {exc}") from None
            if start < person.birth_day:
                raise IngestError(f"{where}: event dated before person {pid}'s birth_date")
            if end_s:
                try:
                    end = parse_day(end_s)
                except DateError as exc:
                    raise IngestError(f"{where}: column 'end_date': {exc}") from None
                if end < start:
                    raise IngestError(f"{where}: column 'end_date': end_date before start_date")
            else:
                end = None
                null_counts["end_date"] += 1
            if value_s:
                try:
                    value = float(value_s)
                except ValueError:
                    raise IngestError(f"{where}: column 'value_as_number': not a number: {value_s!r}") from None
                if domain != "measurement":
                    raise IngestError(f"{where}: column 'value_as_number': value on non-measurement domain {domain!r}")
            else:
                value = None
                null_counts["value_as_number"] += 1
            if unit_s:
                try:
                    unit = int(unit_s)
                except ValueError:
                    raise IngestError(f"{where}: column 'unit_concept_id': not an integer: {unit_s!r}") from None
                if unit not in concept_domains:
                    raise IngestError(f"{where}: column 'unit_concept_id': unknown concept_id {unit}")
            else:
                unit = None
                null_counts["unit_concept_id"] += 1
            grouped.setdefault((pid, domain), []).append((start, eid, concept, end, value, unit))
            n_events += 1

    demographic_nulls = {
        "gender": sum(1 for p in persons.values() if p.gender is None),
        "race": sum(1 for p in persons.values() if p.race is None),
        "ethnicity": sum(1 for p in persons.values() if p.ethnicity is None),
    }
    return Store(
        persons=persons,
        periods={pid: merge_periods(ps) for pid, ps in raw_periods.items()},
        events=grouped,
        vocab=vocab,
        n_events=n_events,
        null_counts=null_counts,
        demographic_nulls=demographic_nulls,
    )


def _require_int(row: dict, column: str, where: str) -> int:
    raw = row.get(column)
    if raw is None or raw == "":
        raise IngestError(f"{where}: column '{column}': missing required value")
    try:
        return int(raw)
    except ValueError:
        raise IngestError(f"{where}: column '{column}': not an integer: {raw!r}") from None


def _require_day(row: dict, column: str, where: str) -> int:
    raw = row.get(column)
    if raw is None or raw == "":
        raise IngestError(f"{where}: column '{column}': missing required value")
    try:
        return parse_day(raw)
    except DateError as exc:
        raise IngestError(f"{where}: column '{column}': {exc}") from None


def data_dictionary(store: Store) -> DataDictionary:
    """Per-table column descriptors with missingness = nulls / rows (0 when empty)."""
    n_persons = len(store.persons)
    n_periods = sum(len(ps) for ps in store.periods.values())
    n_events = store.n_events

    def frac(nulls: int, rows: int) -> float:
        return nulls / rows if rows else 0.0

    persons_cols = (
        ColumnDescriptor("person_id", "integer", True, 0.0),
        ColumnDescriptor("birth_date", "date", True, 0.0),
        ColumnDescriptor("gender", "code", False, frac(store._demographic_nulls["gender"], n_persons)),
        ColumnDescriptor("race", "code", False, frac(store._demographic_nulls["race"], n_persons)),
        ColumnDescriptor("ethnicity", "code", False, frac(store._demographic_nulls["ethnicity"], n_persons)),
    )
    period_cols = (
        ColumnDescriptor("person_id", "integer", True, 0.0),
        ColumnDescriptor("start_date", "date", True, 0.0),
        ColumnDescriptor("end_date", "date", True, 0.0),
    )
    event_cols = (
        ColumnDescriptor("event_id", "integer", True, 0.0),
        ColumnDescriptor("person_id", "integer", True, 0.0),
        ColumnDescriptor("domain", "code", True, 0.0),
        ColumnDescriptor("concept_id", "code", True, 0.0),
        ColumnDescriptor("start_date", "date", True, 0.0),
        ColumnDescriptor("end_date", "date", False, frac(store._null_counts["end_date"], n_events)),
        ColumnDescriptor("value_as_number", "decimal", False, frac(store._null_counts["value_as_number"], n_events)),
        ColumnDescriptor("unit_concept_id", "code", False, frac(store._null_counts["unit_concept_id"], n_events)),
    )
    return DataDictionary(tables={
        "persons": TableDictionary(n_persons, persons_cols),
        "observation_periods": TableDictionary(n_periods, period_cols),
        "events": TableDictionary(n_events, event_cols),
    })
