"""Textual language for phenotype definitions.

One construct per cohort concept: concept sets, an entry event with an
occurrence qualifier, a prior-observation requirement, demographic limits,
role-tagged criterion rules with explicit day-offset windows, and an exit
strategy. Parsing is pure; every error carries a source span. The printer
emits one canonical layout, so print(parse(text)) is a fixpoint after one
cycle and parse(print(ast)) returns the same AST.

Grammar (keywords lowercase, strings double-quoted, `#` comments):

    program    := "phenotype" STRING "v" INT "{" meta* conceptset*
                  entry prior? demographics? rule* exit era? "}"
    meta       := ("intent" | "ref" | "author" | "waive") STRING
    conceptset := "conceptset" NAME "{" [item ("," item)*] "}"
    item       := INT ("+descendants")? ("-exclude")?
    entry      := "entry" occurrence DOMAIN "in" NAME valuepred?
    occurrence := "first" | "any" | "nth" INT
    prior      := "observation" "prior" INT "days"
    demographics := "demographics" ("age" "[" INT "," INT "]")?
                    ("gender" "{" STRING ("," STRING)* "}")?
                    ("race" "{" STRING ("," STRING)* "}")?
    rule       := ROLE STRING ":" occurrence? DOMAIN "in" NAME valuepred?
                  "within" "[" INT "," INT "]" ("from" ANCHOR)?
                  ("count" CMP INT)?
    ROLE       := "include" | "exclude" | "strengthen" | "disqualify"
    ANCHOR     := "index" | "entry_start" | "entry_end"
    exit       := "exit" ("offset" INT
                          | "end_of_exposure" NAME "persistence" INT
                          | "event" DOMAIN "in" NAME)
    era        := "era_gap" INT
    valuepred  := CMP NUMBER ("unit" INT)?

Omitted occurrence in a rule means "any"; omitted anchor means the index
date; omitted count means "count >= 1". The unicode forms for minus and the
ordered comparators are accepted on input and never printed.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from .model import (
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
)
from .vocab import EVENT_DOMAINS, ConceptSet, ConceptSetItem

ROLE_WORDS = {
    "include": "inclusion",
    "exclude": "exclusion",
    "strengthen": "strengthener",
    "disqualify": "disqualifier",
}
WORD_FOR_ROLE = {v: k for k, v in ROLE_WORDS.items()}
ANCHOR_WORDS = {
    "index": "index_date",
    "entry_start": "entry_start",
    "entry_end": "entry_end",
}
WORD_FOR_ANCHOR = {v: k for k, v in ANCHOR_WORDS.items()}

RESERVED = frozenset({
    "phenotype", "intent", "ref", "author", "waive", "conceptset", "entry",
    "observation", "prior", "days", "demographics", "age", "gender", "race",
    "include", "exclude", "strengthen", "disqualify", "within", "count",
    "exit", "offset", "end_of_exposure", "persistence", "event", "era_gap",
    "in", "unit", "from", "first", "any", "nth", "descendants",
})

_UNICODE_ALIASES = {"\u2212": "-", "\u2264": "<=", "\u2265": ">="}


@dataclass(frozen=True)
class SourceSpan:
    line: int
    column: int
    start: int
    end: int

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError("span start after end")

    def __str__(self) -> str:
        return f"{self.line}:{self.column}"


class DslError(ValueError):
    """Parse failure, syntactic or semantic, located by a source span."""

    def __init__(self, span: SourceSpan, message: str):
        super().__init__(f"{span}: {message}")
        self.span = span
        self.reason = message


@dataclass(frozen=True)
class Token:
    type: str  # word | string | number | symbol | eof
    text: str
    value: object
    span: SourceSpan

    def describe(self) -> str:
        if self.type == "eof":
            return "end of input"
        return f"{self.type} {self.text!r}"


def _tokenize(text: str) -> list[Token]:
    tokens: list[Token] = []
    i, line, col = 0, 1, 1
    n = len(text)

    def span(start_i: int, start_line: int, start_col: int, end_i: int) -> SourceSpan:
        return SourceSpan(start_line, start_col, start_i, end_i)

    while i < n:
        ch = text[i]
        if ch == "\n":
            i, line, col = i + 1, line + 1, 1
            continue
        if ch in " \t\r":
            i, col = i + 1, col + 1
            continue
        if ch == "#":
            while i < n and text[i] != "\n":
                i += 1
            continue
        start_i, start_line, start_col = i, line, col
        if ch in _UNICODE_ALIASES:
            alias = _UNICODE_ALIASES[ch]
            tokens.append(Token("symbol", alias, alias, span(start_i, start_line, start_col, i + 1)))
            i, col = i + 1, col + 1
            continue
        if ch in "<>":
            if i + 1 < n and text[i + 1] == "=":
                tokens.append(Token("symbol", ch + "=", ch + "=", span(start_i, start_line, start_col, i + 2)))
                i, col = i + 2, col + 2
            else:
                tokens.append(Token("symbol", ch, ch, span(start_i, start_line, start_col, i + 1)))
                i, col = i + 1, col + 1
            continue
        if ch in "{}[],:+-=":
            tokens.append(Token("symbol", ch, ch, span(start_i, start_line, start_col, i + 1)))
            i, col = i + 1, col + 1
            continue
        if ch == '"':
            i, col = i + 1, col + 1
            parts: list[str] = []
            while True:
                if i >= n or text[i] == "\n":
                    raise DslError(span(start_i, start_line, start_col, i), "unterminated string")
                c = text[i]
                if c == '"':
                    i, col = i + 1, col + 1
                    break
                if c == "\\":
                    if i + 1 >= n:
                        raise DslError(span(start_i, start_line, start_col, i + 1), "unterminated escape")
                    esc = text[i + 1]
                    mapped = {"\\": "\\", '"': '"', "n": "\n", "t": "\t"}.get(esc)
                    if mapped is None:
                        raise DslError(span(i, line, col, i + 2), f"unknown escape \\{esc}")
                    parts.append(mapped)
                    i, col = i + 2, col + 2
                else:
                    parts.append(c)
                    i, col = i + 1, col + 1
            tokens.append(Token("string", text[start_i:i], "".join(parts), span(start_i, start_line, start_col, i)))
            continue
        if "0" <= ch <= "9":  # ASCII only; str.isdigit admits superscripts int() rejects
            j = i
            while j < n and "0" <= text[j] <= "9":
                j += 1
            is_float = False
            if j < n and text[j] == "." and j + 1 < n and "0" <= text[j + 1] <= "9":
                is_float = True
                j += 1
                while j < n and "0" <= text[j] <= "9":
                    j += 1
            raw = text[i:j]
            value: object = float(raw) if is_float else int(raw)
            tokens.append(Token("number", raw, value, span(start_i, start_line, start_col, j)))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < n and (text[j].isalnum() or text[j] == "_"):
                j += 1
            word = text[i:j]
            tokens.append(Token("word", word, word, span(start_i, start_line, start_col, j)))
            col += j - i
            i = j
            continue
        raise DslError(span(start_i, start_line, start_col, i + 1), f"unexpected character {ch!r}")

    tokens.append(Token("eof", "", None, SourceSpan(line, col, n, n)))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.pos = 0
        self.set_ids: dict[str, int] = {}

    # -- token plumbing ----------------------------------------------------
    def peek(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        tok = self.tokens[self.pos]
        if tok.type != "eof":
            self.pos += 1
        return tok

    def fail(self, expected: str) -> "DslError":
        tok = self.peek()
        return DslError(tok.span, f"expected {expected}, found {tok.describe()}")

    def expect_symbol(self, sym: str) -> Token:
        tok = self.peek()
        if tok.type != "symbol" or tok.text != sym:
            raise self.fail(f"{sym!r}")
        return self.advance()

    def expect_word(self, word: str) -> Token:
        tok = self.peek()
        if tok.type != "word" or tok.text != word:
            raise self.fail(f"keyword {word!r}")
        return self.advance()

    def at_word(self, *words: str) -> bool:
        tok = self.peek()
        return tok.type == "word" and tok.text in words

    def expect_string(self, what: str) -> Token:
        tok = self.peek()
        if tok.type != "string":
            raise self.fail(what)
        return self.advance()

    def expect_int(self, what: str) -> int:
        negative = False
        if self.peek().type == "symbol" and self.peek().text == "-":
            negative = True
            self.advance()
        tok = self.peek()
        if tok.type != "number" or not isinstance(tok.value, int):
            raise self.fail(what)
        self.advance()
        return -tok.value if negative else tok.value

    def expect_number(self, what: str) -> float:
        negative = False
        if self.peek().type == "symbol" and self.peek().text == "-":
            negative = True
            self.advance()
        tok = self.peek()
        if tok.type != "number":
            raise self.fail(what)
        self.advance()
        value = float(tok.value)
        return -value if negative else value

    def expect_name(self, what: str) -> Token:
        tok = self.peek()
        if tok.type != "word":
            raise self.fail(what)
        if tok.text in RESERVED:
            raise DslError(tok.span, f"{tok.text!r} is a reserved word and cannot name a {what}")
        return self.advance()

    def expect_comparator(self) -> str:
        tok = self.peek()
        if tok.type != "symbol" or tok.text not in COMPARATORS:
            raise self.fail("comparator (<, <=, =, >=, >)")
        self.advance()
        return tok.text

    # -- grammar -----------------------------------------------------------
    def program(self) -> PhenotypeDefinition:
        self.expect_word("phenotype")
        name = self.expect_string("phenotype name string").value
        version = self._version()
        self.expect_symbol("{")

        intent = ""
        refs: list[str] = []
        authors: list[str] = []
        waivers: list[str] = []
        while self.at_word("intent", "ref", "author", "waive"):
            kw = self.advance().text
            value = self.expect_string(f"string after {kw!r}").value
            if kw == "intent":
                intent = value
            elif kw == "ref":
                refs.append(value)
            elif kw == "author":
                authors.append(value)
            else:
                waivers.append(value)

        concept_sets: list[ConceptSet] = []
        while self.at_word("conceptset"):
            concept_sets.append(self._conceptset(len(concept_sets) + 1))

        self.expect_word("entry")
        entry = self._query(occurrence_required=True)

        prior = 0
        if self.at_word("observation"):
            self.advance()
            self.expect_word("prior")
            prior = self.expect_int("day count")
            self.expect_word("days")

        demographics = None
        if self.at_word("demographics"):
            demographics = self._demographics()

        rules: list[CriterionRule] = []
        while self.at_word(*ROLE_WORDS):
            rules.append(self._rule())

        self.expect_word("exit")
        exit_strategy = self._exit()

        era_gap = 0
        if self.at_word("era_gap"):
            self.advance()
            era_gap = self.expect_int("day count")

        self.expect_symbol("}")
        tok = self.peek()
        if tok.type != "eof":
            raise DslError(tok.span, f"unexpected {tok.describe()} after program end")

        return PhenotypeDefinition(
            definition_id=name,
            version=version,
            metadata=Metadata(
                intent=intent,
                literature_refs=tuple(refs),
                authors=tuple(authors),
                role_waivers=tuple(waivers),
            ),
            concept_sets=tuple(concept_sets),
            entry=entry,
            exit=exit_strategy,
            prior_observation_days=prior,
            demographics=demographics,
            rules=tuple(rules),
            era_gap_days=era_gap,
        )

    def _version(self) -> int:
        # accepts the glued form "v1" and the spaced form "v 1"
        tok = self.peek()
        if tok.type == "word" and tok.text == "v":
            self.advance()
            return self.expect_int("version number")
        if tok.type == "word" and tok.text.startswith("v") and tok.text[1:].isdigit():
            self.advance()
            return int(tok.text[1:])
        raise self.fail("version marker like 'v1'")

    def _conceptset(self, set_id: int) -> ConceptSet:
        self.expect_word("conceptset")
        name_tok = self.expect_name("concept set")
        if name_tok.text in self.set_ids:
            raise DslError(name_tok.span, f"concept set {name_tok.text!r} already declared")
        self.expect_symbol("{")
        items: list[ConceptSetItem] = []
        if not (self.peek().type == "symbol" and self.peek().text == "}"):
            while True:
                concept_id = self.expect_int("concept id")
                include_desc = False
                is_excluded = False
                if self.peek().type == "symbol" and self.peek().text == "+":
                    self.advance()
                    self.expect_word("descendants")
                    include_desc = True
                if self.peek().type == "symbol" and self.peek().text == "-":
                    self.advance()
                    self.expect_word("exclude")
                    is_excluded = True
                items.append(ConceptSetItem(concept_id, include_desc, is_excluded))
                if self.peek().type == "symbol" and self.peek().text == ",":
                    self.advance()
                    continue
                break
        self.expect_symbol("}")
        self.set_ids[name_tok.text] = set_id
        return ConceptSet(
            set_id=set_id,
            name=name_tok.text,
            items=tuple(sorted(items, key=lambda it: it.concept_id)),
        )

    def _occurrence(self, required: bool) -> Occurrence:
        if self.at_word("first"):
            self.advance()
            return Occurrence.first_ever()
        if self.at_word("any"):
            self.advance()
            return Occurrence.any()
        if self.at_word("nth"):
            self.advance()
            n = self.expect_int("occurrence index")
            return Occurrence.nth(n)
        if required:
            raise self.fail("occurrence qualifier (first, any, nth N)")
        return Occurrence.any()

    def _domain(self) -> str:
        tok = self.peek()
        if tok.type != "word" or tok.text not in EVENT_DOMAINS:
            raise self.fail(f"event domain ({', '.join(EVENT_DOMAINS)})")
        self.advance()
        return tok.text

    def _set_ref(self) -> int:
        tok = self.expect_name("concept set reference")
        set_id = self.set_ids.get(tok.text)
        if set_id is None:
            raise DslError(tok.span, f"undeclared concept set {tok.text!r}")
        return set_id

    def _value_predicate(self) -> Optional[ValuePredicate]:
        tok = self.peek()
        if tok.type != "symbol" or tok.text not in COMPARATORS:
            return None
        comparator = self.expect_comparator()
        threshold = self.expect_number("threshold value")
        unit = None
        if self.at_word("unit"):
            self.advance()
            unit = self.expect_int("unit concept id")
        return ValuePredicate(comparator, threshold, unit)

    def _query(self, occurrence_required: bool) -> EventQuery:
        occurrence = self._occurrence(required=occurrence_required)
        domain = self._domain()
        self.expect_word("in")
        ref = self._set_ref()
        return EventQuery(
            domain=domain,
            concept_set_ref=ref,
            occurrence=occurrence,
            value_predicate=self._value_predicate(),
        )

    def _demographics(self) -> Demographics:
        kw = self.expect_word("demographics")
        age = None
        gender = None
        race = None
        if self.at_word("age"):
            self.advance()
            self.expect_symbol("[")
            lo = self.expect_int("minimum age")
            self.expect_symbol(",")
            hi = self.expect_int("maximum age")
            self.expect_symbol("]")
            age = (lo, hi)
        if self.at_word("gender"):
            self.advance()
            gender = frozenset(self._code_list("gender code"))
        if self.at_word("race"):
            self.advance()
            race = frozenset(self._code_list("race code"))
        if age is None and gender is None and race is None:
            raise DslError(kw.span, "demographics clause needs age, gender, or race")
        return Demographics(age_at_index=age, gender=gender, race=race)

    def _code_list(self, what: str) -> list[str]:
        self.expect_symbol("{")
        codes = [self.expect_string(what).value]
        while self.peek().type == "symbol" and self.peek().text == ",":
            self.advance()
            codes.append(self.expect_string(what).value)
        self.expect_symbol("}")
        return codes

    def _rule(self) -> CriterionRule:
        role_tok = self.advance()
        role = ROLE_WORDS[role_tok.text]
        name = self.expect_string("rule name string").value
        self.expect_symbol(":")
        query = self._query(occurrence_required=False)
        self.expect_word("within")
        self.expect_symbol("[")
        start_tok = self.peek()
        start = self.expect_int("window start offset")
        self.expect_symbol(",")
        end = self.expect_int("window end offset")
        end_tok_span = self.tokens[self.pos - 1].span
        self.expect_symbol("]")
        if start > end:
            raise DslError(
                SourceSpan(start_tok.span.line, start_tok.span.column, start_tok.span.start, end_tok_span.end),
                f"window start {start} after end {end}",
            )
        anchor = "index_date"
        if self.at_word("from"):
            self.advance()
            tok = self.peek()
            if tok.type != "word" or tok.text not in ANCHOR_WORDS:
                raise self.fail("window anchor (index, entry_start, entry_end)")
            self.advance()
            anchor = ANCHOR_WORDS[tok.text]
        comparator, count = ">=", 1
        if self.at_word("count"):
            self.advance()
            comparator = self.expect_comparator()
            count = self.expect_int("event count")
        return CriterionRule(
            name=name,
            query=query,
            window=TemporalWindow(start, end, anchor),
            count_comparator=comparator,
            count=count,
            role=role,
        )

    def _exit(self) -> ExitStrategy:
        if self.at_word("offset"):
            self.advance()
            return ExitStrategy.fixed_offset(self.expect_int("day offset"))
        if self.at_word("end_of_exposure"):
            self.advance()
            ref = self._set_ref()
            self.expect_word("persistence")
            gap = self.expect_int("persistence gap in days")
            return ExitStrategy.end_of_continuous_exposure(ref, gap)
        if self.at_word("event"):
            self.advance()
            domain = self._domain()
            self.expect_word("in")
            ref = self._set_ref()
            return ExitStrategy.event_based(EventQuery(domain=domain, concept_set_ref=ref))
        raise self.fail("exit strategy (offset, end_of_exposure, event)")


def parse(text: str) -> PhenotypeDefinition:
    """Parse a phenotype program. Raises DslError with a source span on
    syntax errors and on in-scope semantic errors (undeclared concept set,
    inverted window)."""
    return _Parser(text).program()


# ---------------------------------------------------------------------------
# Printing

class PrintError(ValueError):
    pass


def _escape(text: str) -> str:
    out = text.replace("\\", "\\\\").replace('"', '\\"')
    return out.replace("\n", "\\n").replace("\t", "\\t")


def _check_name(name: str) -> str:
    ok = bool(name) and (name[0].isalpha() or name[0] == "_") \
        and all(c.isalnum() or c == "_" for c in name) and name not in RESERVED
    if not ok:
        raise PrintError(f"concept set name {name!r} is not identifier-shaped")
    return name


def _format_number(value: float) -> str:
    return repr(float(value))


def _print_value_predicate(vp: Optional[ValuePredicate]) -> str:
    if vp is None:
        return ""
    out = f" {vp.comparator} {_format_number(vp.threshold)}"
    if vp.unit_concept_id is not None:
        out += f" unit {vp.unit_concept_id}"
    return out


def _print_occurrence(occ: Occurrence, always: bool) -> str:
    if occ.kind == "first_ever":
        return "first "
    if occ.kind == "nth":
        return f"nth {occ.n} "
    return "any " if always else ""


def _print_query(query: EventQuery, names: dict[int, str], occurrence_always: bool) -> str:
    name = names.get(query.concept_set_ref)
    if name is None:
        raise PrintError(f"query references undeclared concept set {query.concept_set_ref}")
    return (
        _print_occurrence(query.occurrence, occurrence_always)
        + f"{query.domain} in {name}"
        + _print_value_predicate(query.value_predicate)
    )


def _print_item(item: ConceptSetItem) -> str:
    out = str(item.concept_id)
    if item.include_descendants:
        out += " +descendants"
    if item.is_excluded:
        out += " -exclude"
    return out


def _print_codes(codes: frozenset[str]) -> str:
    if not codes:
        raise PrintError("demographic code set is empty")
    return "{ " + ", ".join(f'"{_escape(c)}"' for c in sorted(codes)) + " }"


def print_definition(definition: PhenotypeDefinition) -> str:
    """Render a definition in the canonical layout. Requires entry and exit
    to be present and concept set names to lex as identifiers."""
    d = definition
    if d.entry is None or d.exit is None:
        raise PrintError("cannot print a definition without entry and exit")
    names = {cs.set_id: _check_name(cs.name) for cs in d.concept_sets}

    lines = [f'phenotype "{_escape(d.definition_id)}" v{d.version} {{']
    lines.append(f'  intent "{_escape(d.metadata.intent)}"')
    for ref in d.metadata.literature_refs:
        lines.append(f'  ref "{_escape(ref)}"')
    for author in d.metadata.authors:
        lines.append(f'  author "{_escape(author)}"')
    for waiver in d.metadata.role_waivers:
        lines.append(f'  waive "{_escape(waiver)}"')

    for cs in d.concept_sets:
        items = ", ".join(_print_item(it) for it in sorted(cs.items, key=lambda it: it.concept_id))
        body = f"{{ {items} }}" if items else "{ }"
        lines.append(f"  conceptset {names[cs.set_id]} {body}")

    lines.append(f"  entry {_print_query(d.entry, names, occurrence_always=True)}")
    lines.append(f"  observation prior {d.prior_observation_days} days")

    demo = d.demographics
    if demo is not None and (demo.age_at_index is not None
                             or demo.gender is not None or demo.race is not None):
        parts = ["demographics"]
        if demo.age_at_index is not None:
            parts.append(f"age [{demo.age_at_index[0]}, {demo.age_at_index[1]}]")
        if demo.gender is not None:
            parts.append(f"gender {_print_codes(demo.gender)}")
        if demo.race is not None:
            parts.append(f"race {_print_codes(demo.race)}")
        lines.append("  " + " ".join(parts))

    for rule in d.rules:
        word = WORD_FOR_ROLE.get(rule.role)
        if word is None:
            raise PrintError(f"rule {rule.name!r} has unknown role {rule.role!r}")
        clause = (
            f'  {word} "{_escape(rule.name)}": '
            + _print_query(rule.query, names, occurrence_always=False)
            + f" within [{rule.window.start_offset_days}, {rule.window.end_offset_days}]"
        )
        if rule.window.anchor != "index_date":
            clause += f" from {WORD_FOR_ANCHOR[rule.window.anchor]}"
        clause += f" count {rule.count_comparator} {rule.count}"
        lines.append(clause)

    ex = d.exit
    if ex.kind == "fixed_offset":
        lines.append(f"  exit offset {ex.days}")
    elif ex.kind == "end_of_continuous_exposure":
        name = names.get(ex.concept_set_ref)
        if name is None:
            raise PrintError(f"exit references undeclared concept set {ex.concept_set_ref}")
        lines.append(f"  exit end_of_exposure {name} persistence {ex.persistence_gap_days}")
    elif ex.kind == "event_based":
        lines.append(f"  exit event {_print_query(ex.query, names, occurrence_always=False)}")
    else:
        raise PrintError(f"unknown exit kind {ex.kind!r}")

    if d.era_gap_days:
        lines.append(f"  era_gap {d.era_gap_days}")

    lines.append("}")
    return "\n".join(lines) + "\n"
