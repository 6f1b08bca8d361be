"""Evaluation result records shared by the engine and the reference
evaluator: cohort rows, the staged attrition funnel, and their file forms
(cohort.csv, attrition JSON). Only data lives here; both evaluators build
these from their own logic."""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional

from .dates import format_day, parse_day


@dataclass(frozen=True)
class CohortRecord:
    person_id: int
    entry_day: int
    exit_day: int

    def __post_init__(self):
        if self.entry_day > self.exit_day:
            raise ValueError(
                f"person {self.person_id}: entry day {self.entry_day} after exit day {self.exit_day}")


@dataclass(frozen=True)
class AttritionStage:
    name: str
    remaining: int
    removed: int


@dataclass(frozen=True)
class StrengthenerNote:
    name: str
    count: int
    fraction: Optional[float]  # null when the final cohort is empty


@dataclass(frozen=True)
class AttritionReport:
    stages: tuple[AttritionStage, ...]
    strengtheners: tuple[StrengthenerNote, ...] = ()

    def __post_init__(self):
        last = None
        for stage in self.stages:
            if last is not None and stage.remaining > last:
                raise ValueError(f"stage {stage.name!r}: remaining count increased")
            last = stage.remaining

    def to_doc(self) -> dict:
        return {
            "stages": [
                {"name": s.name, "remaining": s.remaining, "removed": s.removed}
                for s in self.stages
            ],
            "strengtheners": [
                {"name": s.name, "count": s.count, "fraction": s.fraction}
                for s in self.strengtheners
            ],
        }

    @staticmethod
    def from_doc(doc: dict) -> "AttritionReport":
        return AttritionReport(
            stages=tuple(
                AttritionStage(s["name"], s["remaining"], s["removed"])
                for s in doc["stages"]
            ),
            strengtheners=tuple(
                StrengthenerNote(s["name"], s["count"], s["fraction"])
                for s in doc.get("strengtheners", [])
            ),
        )


def build_stages(names: list[str], universe: int, remaining_counts: list[int]) -> tuple[AttritionStage, ...]:
    """Assemble the funnel from per-stage remaining counts; removed is the
    drop from the previous stage (the person universe before the first)."""
    if len(names) != len(remaining_counts):
        raise ValueError("stage names and counts differ in length")
    stages = []
    prev = universe
    for name, remaining in zip(names, remaining_counts):
        stages.append(AttritionStage(name, remaining, prev - remaining))
        prev = remaining
    return tuple(stages)


def cohort_to_csv(records: list[CohortRecord]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["person_id", "entry_date", "exit_date"])
    for rec in sorted(records, key=lambda r: r.person_id):
        writer.writerow([rec.person_id, format_day(rec.entry_day), format_day(rec.exit_day)])
    return out.getvalue()


def cohort_from_csv(text: str) -> list[CohortRecord]:
    reader = csv.DictReader(io.StringIO(text))
    records = []
    for row in reader:
        records.append(CohortRecord(
            person_id=int(row["person_id"]),
            entry_day=parse_day(row["entry_date"]),
            exit_day=parse_day(row["exit_date"]),
        ))
    return records
