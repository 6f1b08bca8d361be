"""Cohort validity analytics: confusion matrices against ground-truth
labels, the derived rate metrics, stratified breakdowns with small-cell
suppression, and re-evaluation of a registered definition across dataset
snapshots.

Undefined ratios are always null, never coerced to 0 or 1; suppressed
strata report their size but withhold both metrics and raw counts.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass
from typing import Optional, Sequence

from .dates import age_years_at
from .engine import compile, execute
from .store import Store

DEFAULT_AGE_BINS = (0, 10, 20, 30, 40, 50, 60, 70, 80, 90)
DEFAULT_MIN_CELL = 10
STRATA_AXES = ("race", "gender", "age_group")


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class GroundTruthLabels:
    condition: str
    labels: dict[int, bool]  # person_id -> has the condition

    @property
    def positives(self) -> set[int]:
        return {pid for pid, positive in self.labels.items() if positive}

    def check_against(self, store: Store) -> None:
        unknown = [pid for pid in self.labels if pid not in store.persons]
        if unknown:
            raise MetricsError(
                f"labels for condition {self.condition!r} name persons absent "
                f"from the store: {sorted(unknown)[:5]}")


def labels_to_csv(label_sets: Sequence[GroundTruthLabels]) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["person_id", "condition", "label"])
    for gt in sorted(label_sets, key=lambda g: g.condition):
        for pid in sorted(gt.labels):
            writer.writerow([pid, gt.condition, "positive" if gt.labels[pid] else "negative"])
    return out.getvalue()


def labels_from_csv(text: str) -> dict[str, GroundTruthLabels]:
    by_condition: dict[str, dict[int, bool]] = {}
    reader = csv.DictReader(io.StringIO(text))
    for i, row in enumerate(reader, start=2):
        label = row["label"]
        if label not in ("positive", "negative"):
            raise MetricsError(f"line {i}: label must be positive or negative, got {label!r}")
        by_condition.setdefault(row["condition"], {})[int(row["person_id"])] = label == "positive"
    return {cond: GroundTruthLabels(cond, labels) for cond, labels in by_condition.items()}


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    fp: int
    fn: int
    tn: int

    def __post_init__(self):
        if min(self.tp, self.fp, self.fn, self.tn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(
            self.tp + other.tp, self.fp + other.fp,
            self.fn + other.fn, self.tn + other.tn)

    def to_doc(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}


def confusion(cohort: set[int], labels: GroundTruthLabels, population: set[int]) -> ConfusionMatrix:
    """Count classification outcomes of cohort membership against labels
    over the given population."""
    stray = cohort - population
    if stray:
        raise MetricsError(f"cohort members outside the population: {sorted(stray)[:5]}")
    label_map = labels.labels
    tp = fp = fn = tn = 0
    for pid in population:
        positive = label_map.get(pid)
        if positive is None:
            raise MetricsError(
                f"person {pid} has no {labels.condition!r} label")
        if pid in cohort:
            if positive:
                tp += 1
            else:
                fp += 1
        elif positive:
            fn += 1
        else:
            tn += 1
    return ConfusionMatrix(tp, fp, fn, tn)


def _ratio(num: int, den: int) -> Optional[float]:
    return num / den if den else None


def derive_metrics(m: ConfusionMatrix) -> dict[str, Optional[float]]:
    return {
        "sensitivity": _ratio(m.tp, m.tp + m.fn),
        "specificity": _ratio(m.tn, m.tn + m.fp),
        "ppv": _ratio(m.tp, m.tp + m.fp),
        "npv": _ratio(m.tn, m.tn + m.fn),
        "f1": _ratio(2 * m.tp, 2 * m.tp + m.fp + m.fn),
    }


def age_group_label(age: int, bins: Sequence[int]) -> Optional[str]:
    """Band label for an age given ascending bin edges; the last edge is
    open-ended. Ages below the first edge have no band."""
    if age < bins[0]:
        return None
    if age >= bins[-1]:
        return f"{bins[-1]}+"
    for lo, hi in zip(bins, bins[1:]):
        if lo <= age < hi:
            return f"{lo}-{hi - 1}"
    raise AssertionError("unreachable for ascending bins")


@dataclass(frozen=True)
class StratumCell:
    axes: tuple[str, ...]  # values aligned with the report's axis names
    n: int
    matrix: ConfusionMatrix
    suppressed: bool

    @property
    def metrics(self) -> Optional[dict[str, Optional[float]]]:
        return None if self.suppressed else derive_metrics(self.matrix)


@dataclass(frozen=True)
class StratifiedReport:
    axes: tuple[str, ...]
    cells: tuple[StratumCell, ...]
    overall: ConfusionMatrix
    min_cell: int

    def to_doc(self) -> dict:
        return {
            "overall": {
                "n": self.overall.total,
                "confusion": self.overall.to_doc(),
                "metrics": derive_metrics(self.overall),
            },
            "strata": [
                {
                    "axes": dict(zip(self.axes, cell.axes)),
                    "n": cell.n,
                    "suppressed": cell.suppressed,
                    # raw counts are withheld along with metrics: publishing
                    # tp/fp for a tiny cell is the leak suppression exists for
                    "confusion": None if cell.suppressed else cell.matrix.to_doc(),
                    "metrics": cell.metrics,
                }
                for cell in self.cells
            ],
            "min_cell": self.min_cell,
        }


def stratify(
    cohort: set[int],
    labels: GroundTruthLabels,
    population: set[int],
    store: Store,
    axes: Sequence[str],
    age_bins: Sequence[int] = DEFAULT_AGE_BINS,
    min_cell: int = DEFAULT_MIN_CELL,
    as_of_day: Optional[int] = None,
) -> StratifiedReport:
    """Break the confusion matrix down by demographic strata. Persons with a
    missing value on any chosen axis fall out of the cells (they stay in the
    overall matrix); cells smaller than min_cell are suppressed."""
    if not axes:
        raise MetricsError("at least one axis required")
    for axis in axes:
        if axis not in STRATA_AXES:
            raise MetricsError(f"unknown axis {axis!r}; supported: {', '.join(STRATA_AXES)}")
    if len(set(axes)) != len(axes):
        raise MetricsError("duplicate axis")
    if list(age_bins) != sorted(set(age_bins)):
        raise MetricsError("age bins must be strictly ascending")

    if as_of_day is None:
        as_of_day = store.latest_observation_end()

    groups: dict[tuple[str, ...], set[int]] = {}
    for pid in population:
        person = store.person(pid)
        key: list[str] = []
        for axis in axes:
            if axis == "age_group":
                value = age_group_label(age_years_at(person.birth_day, as_of_day), age_bins)
            else:
                value = getattr(person, axis)
            if value is None:
                key = []
                break
            key.append(value)
        if key:
            groups.setdefault(tuple(key), set()).add(pid)

    cells = []
    for key in sorted(groups):
        members = groups[key]
        matrix = confusion(cohort & members, labels, members)
        cells.append(StratumCell(
            axes=key,
            n=len(members),
            matrix=matrix,
            suppressed=len(members) < min_cell,
        ))

    return StratifiedReport(
        axes=tuple(axes),
        cells=tuple(cells),
        overall=confusion(cohort, labels, population),
        min_cell=min_cell,
    )


def evaluation_report(
    cohort: set[int],
    labels: GroundTruthLabels,
    store: Store,
    axes: Sequence[str] = STRATA_AXES,
    age_bins: Sequence[int] = DEFAULT_AGE_BINS,
    min_cell: int = DEFAULT_MIN_CELL,
    as_of_day: Optional[int] = None,
) -> dict:
    """The evaluation document: overall metrics plus the stratified table."""
    labels.check_against(store)
    report = stratify(
        cohort, labels, set(store.person_ids), store, axes,
        age_bins=age_bins, min_cell=min_cell, as_of_day=as_of_day)
    doc = report.to_doc()
    doc["condition"] = labels.condition
    return doc


def monitor(registry, definition_id: str, snapshots: list, version: Optional[int] = None) -> list[dict]:
    """Re-run a registered definition against dataset snapshots and derive
    metrics for each; records come back in timestamp order. Each snapshot is
    a (store, labels, timestamp) triple."""
    if not snapshots:
        raise MetricsError("at least one snapshot required")
    definition = registry.get_definition(definition_id, version)
    records = []
    for snap_store, snap_labels, timestamp in snapshots:
        snap_labels.check_against(snap_store)
        plan = compile(definition, snap_store.vocab)
        cohort_records, _ = execute(plan, snap_store)
        cohort = {r.person_id for r in cohort_records}
        matrix = confusion(cohort, snap_labels, set(snap_store.person_ids))
        records.append({
            "timestamp": timestamp,
            "definition_id": definition.definition_id,
            "version": definition.version,
            "n_cohort": len(cohort),
            "confusion": matrix.to_doc(),
            "metrics": derive_metrics(matrix),
        })
    records.sort(key=lambda r: r["timestamp"])
    return records
