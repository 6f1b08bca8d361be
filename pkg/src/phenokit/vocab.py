"""Concept dictionary: hierarchy lookups, concept-set expansion, mapping coverage.

The ancestry relation ships pre-closed in the bundle (reflexive pairs may be
omitted and are implied); validity of the closure is checked once at load so
expansion stays a dictionary lookup.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

EVENT_DOMAINS = ("condition", "drug", "measurement", "procedure", "visit", "death")


class VocabError(ValueError):
    """Bad vocabulary bundle or unresolvable concept reference."""


@dataclass(frozen=True)
class Concept:
    concept_id: int
    source_code: str
    vocabulary_name: str
    display_name: str
    domain: str


@dataclass(frozen=True)
class ConceptSetItem:
    concept_id: int
    include_descendants: bool = False
    is_excluded: bool = False


@dataclass(frozen=True)
class ConceptSet:
    set_id: int
    name: str
    items: tuple[ConceptSetItem, ...]


@dataclass(frozen=True)
class SufficiencyReport:
    mapped_fraction: float
    unmapped: tuple[str, ...]


class Vocabulary:
    """Immutable concept dictionary with a transitively closed ancestry."""

    def __init__(self, concepts: dict[int, Concept], ancestry_pairs: set[tuple[int, int]]):
        self.concepts = dict(concepts)
        self.ancestry_pairs = set(ancestry_pairs)
        for cid in self.concepts:
            self.ancestry_pairs.add((cid, cid))
        self._validate_closure()
        descendants: dict[int, set[int]] = {cid: set() for cid in self.concepts}
        for anc, desc in self.ancestry_pairs:
            descendants[anc].add(desc)
        self.descendants = {cid: frozenset(ds) for cid, ds in descendants.items()}
        self.by_source_code = {c.source_code: c for c in self.concepts.values()}

    def _validate_closure(self) -> None:
        for anc, desc in self.ancestry_pairs:
            if anc not in self.concepts:
                raise VocabError(f"ancestry references unknown ancestor concept {anc}")
            if desc not in self.concepts:
                raise VocabError(f"ancestry references unknown descendant concept {desc}")
            if anc != desc and (desc, anc) in self.ancestry_pairs:
                raise VocabError(f"ancestry cycle between concepts {anc} and {desc}")
        children: dict[int, list[int]] = {}
        for anc, desc in self.ancestry_pairs:
            if anc != desc:
                children.setdefault(anc, []).append(desc)
        for a, kids in children.items():
            reach = set(kids)
            for b in kids:
                for c in children.get(b, ()):
                    if c not in reach:
                        raise VocabError(
                            f"ancestry is not transitively closed: ({a},{b}) and ({b},{c}) "
                            f"present but ({a},{c}) missing"
                        )

    def __contains__(self, concept_id: int) -> bool:
        return concept_id in self.concepts

    def expand(self, concept_id: int, include_descendants: bool) -> frozenset[int]:
        if concept_id not in self.concepts:
            raise VocabError(f"unknown concept_id {concept_id}")
        if include_descendants:
            return self.descendants[concept_id]
        return frozenset((concept_id,))


def load_vocabulary(bundle_dir: str | Path) -> Vocabulary:
    """Load concepts.csv + ancestry.csv from a bundle directory."""
    bundle = Path(bundle_dir)
    concepts: dict[int, Concept] = {}
    path = bundle / "concepts.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                cid = int(row["concept_id"])
                domain = row["domain"]
            except (KeyError, ValueError) as exc:
                raise VocabError(f"{path}:{lineno}: malformed concept row ({exc})") from None
            if domain not in EVENT_DOMAINS:
                raise VocabError(f"{path}:{lineno}: unknown domain {domain!r}")
            if cid in concepts:
                raise VocabError(f"{path}:{lineno}: duplicate concept_id {cid}")
            concepts[cid] = Concept(
                concept_id=cid,
                source_code=row["source_code"],
                vocabulary_name=row["vocabulary_name"],
                display_name=row["display_name"],
                domain=domain,
            )
    pairs: set[tuple[int, int]] = set()
    path = bundle / "ancestry.csv"
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        for lineno, row in enumerate(reader, start=2):
            try:
                pairs.add((int(row["ancestor_concept_id"]), int(row["descendant_concept_id"])))
            except (KeyError, ValueError) as exc:
                raise VocabError(f"{path}:{lineno}: malformed ancestry row ({exc})") from None
    return Vocabulary(concepts, pairs)


def save_vocabulary(vocab: Vocabulary, out_dir: str | Path) -> None:
    """Write the bundle back in normalized (sorted) form."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "concepts.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["concept_id", "source_code", "vocabulary_name", "display_name", "domain"])
        for cid in sorted(vocab.concepts):
            c = vocab.concepts[cid]
            writer.writerow([c.concept_id, c.source_code, c.vocabulary_name, c.display_name, c.domain])
    with open(out / "ancestry.csv", "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["ancestor_concept_id", "descendant_concept_id"])
        for anc, desc in sorted(vocab.ancestry_pairs):
            if anc != desc:  # reflexive pairs are implied
                writer.writerow([anc, desc])


def resolve_concept_set(concept_set: ConceptSet, vocab: Vocabulary) -> frozenset[int]:
    """Expand a concept set to flat concept ids; exclusion wins over inclusion."""
    included: set[int] = set()
    excluded: set[int] = set()
    for item in concept_set.items:
        ids = vocab.expand(item.concept_id, item.include_descendants)
        if item.is_excluded:
            excluded |= ids
        else:
            included |= ids
    return frozenset(included - excluded)


def mapping_sufficiency(source_codes: set[str], vocab: Vocabulary) -> SufficiencyReport:
    """Fraction of source codes with a matching concept; lists the misses."""
    if not source_codes:
        raise VocabError("mapping sufficiency of an empty code set is undefined")
    unmapped = sorted(code for code in source_codes if code not in vocab.by_source_code)
    fraction = (len(source_codes) - len(unmapped)) / len(source_codes)
    return SufficiencyReport(mapped_fraction=fraction, unmapped=tuple(unmapped))
