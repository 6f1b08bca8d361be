import pytest
from hypothesis import given
from hypothesis import strategies as st

from defgen import sample_definitions
from phenokit.dsl import DslError, PrintError, parse, print_definition
from phenokit.model import Occurrence

MINIMAL = (
    'phenotype "t" v1 {\n'
    '  intent "i"\n'
    '  conceptset a { 1001 }\n'
    '  entry first condition in a\n'
    '  exit offset 0\n'
    '}\n'
)


def test_minimal_parses():
    d = parse(MINIMAL)
    assert d.definition_id == "t"
    assert d.version == 1
    assert d.entry.occurrence == Occurrence.first_ever()
    assert d.exit.kind == "fixed_offset" and d.exit.days == 0


def test_set_ids_follow_declaration_order():
    d = parse(
        'phenotype "t" v2 {\n'
        '  intent "i"\n'
        '  conceptset zz { 2001 }\n'
        '  conceptset aa { 1001 }\n'
        '  entry any drug in zz\n'
        '  exit offset 7\n'
        '}\n')
    assert [(cs.set_id, cs.name) for cs in d.concept_sets] == [(1, "zz"), (2, "aa")]
    assert d.entry.concept_set_ref == 1


def test_items_sorted_and_flags():
    d = parse(
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 2001 +descendants, 1001, 1002 -exclude }\n'
        '  entry any condition in a\n'
        '  exit offset 0\n'
        '}\n')
    items = d.concept_sets[0].items
    assert [i.concept_id for i in items] == [1001, 1002, 2001]
    assert items[2].include_descendants and not items[2].is_excluded
    assert items[1].is_excluded


def test_full_clause_coverage(fixtures_dir):
    d = parse((fixtures_dir / "preeclampsia.phen").read_text(encoding="utf-8"))
    assert d.prior_observation_days == 180
    assert d.demographics.age_at_index == (12, 55)
    assert d.demographics.gender == frozenset({"F"})
    assert [r.role for r in d.rules] == [
        "inclusion", "inclusion", "inclusion", "disqualifier", "strengthener"]
    vp = d.rules[-1].query.value_predicate
    assert vp.comparator == ">=" and vp.threshold == 300.0 and vp.unit_concept_id == 9003


def test_comments_and_whitespace_ignored():
    d = parse(
        '# leading comment\n'
        'phenotype "t" v1 {  # trailing\n'
        '  intent "i"\n\n'
        '  conceptset a { 1001 }\n'
        '  entry first condition in a  # entry comment\n'
        '  exit offset 0\n'
        '}\n')
    assert d.definition_id == "t"


def test_unicode_aliases_accepted_never_printed():
    text = (
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 3001 }\n'
        '  entry any measurement in a ≥ 140.0\n'
        '  include "low": measurement in a ≤ 90.0 within [−1, 1]\n'
        '  exit offset 0\n'
        '}\n')
    d = parse(text)
    assert d.entry.value_predicate.comparator == ">="
    assert d.rules[0].window.start_offset_days == -1
    printed = print_definition(d)
    assert "≥" not in printed and "≤" not in printed and "−" not in printed
    assert parse(printed) == d


def test_string_escapes_round_trip():
    text = (
        'phenotype "a \\"quoted\\" name\\\\path" v1 {\n'
        '  intent "line\\nbreak and tab\\t"\n'
        '  conceptset a { 1001 }\n'
        '  entry first condition in a\n'
        '  exit offset 0\n'
        '}\n')
    d = parse(text)
    assert d.definition_id == 'a "quoted" name\\path'
    assert d.metadata.intent == "line\nbreak and tab\t"
    assert parse(print_definition(d)) == d


def _error(text):
    with pytest.raises(DslError) as err:
        parse(text)
    return err.value


def test_error_carries_position():
    err = _error('phenotype broken')
    assert err.span.line == 1 and err.span.column == 11
    assert "phenotype name string" in err.reason


def test_undeclared_set_reference():
    err = _error(MINIMAL.replace("entry first condition in a", "entry first condition in b"))
    assert "undeclared concept set 'b'" in err.reason
    assert err.span.line == 4


def test_window_order_checked():
    err = _error(
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 1001 }\n'
        '  entry first condition in a\n'
        '  include "r": condition in a within [5, -5]\n'
        '  exit offset 0\n'
        '}\n')
    assert "window start 5 after end -5" in err.reason


def test_duplicate_conceptset_name():
    err = _error(
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 1001 }\n'
        '  conceptset a { 2001 }\n'
        '  entry first condition in a\n'
        '  exit offset 0\n'
        '}\n')
    assert "already declared" in err.reason


def test_trailing_tokens_rejected():
    assert "after program end" in _error(MINIMAL + "extra").reason


def test_unterminated_string():
    err = _error('phenotype "unterminated\n')
    assert "unterminated" in err.reason


def test_missing_exit_rejected():
    err = _error(
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset a { 1001 }\n'
        '  entry first condition in a\n'
        '}\n')
    assert "exit" in err.reason


def test_reserved_word_not_a_set_name():
    err = _error(
        'phenotype "t" v1 {\n'
        '  intent "i"\n'
        '  conceptset entry { 1001 }\n'
        '  entry first condition in entry\n'
        '  exit offset 0\n'
        '}\n')
    assert "reserved" in err.reason or "name" in err.reason


def test_print_parse_identity_on_samples():
    for d in sample_definitions(31337, 200):
        text = print_definition(d)
        assert parse(text) == d
        assert print_definition(parse(text)) == text


def test_print_requires_printable_names():
    d = parse(MINIMAL)
    import dataclasses
    from phenokit.vocab import ConceptSet, ConceptSetItem
    bad = dataclasses.replace(
        d, concept_sets=(ConceptSet(1, "not a word", (ConceptSetItem(1001),)),))
    with pytest.raises(PrintError):
        print_definition(bad)


def test_golden_fixtures_byte_stable(fixtures_dir):
    for name in ("hypertension.phen", "preeclampsia.phen"):
        text = (fixtures_dir / name).read_text(encoding="utf-8")
        assert print_definition(parse(text)) == text


@given(st.text(max_size=200))
def test_arbitrary_text_never_crashes_the_parser(text):
    try:
        parse(text)
    except DslError:
        pass


@given(st.integers(min_value=0, max_value=2**31), st.integers(min_value=0, max_value=400))
def test_numeric_fields_survive_round_trip(days, gap):
    text = (
        f'phenotype "t" v1 {{\n'
        f'  intent "i"\n'
        f'  conceptset a {{ 1001 }}\n'
        f'  entry first condition in a\n'
        f'  observation prior {days} days\n'
        f'  exit offset {gap}\n'
        f'}}\n')
    d = parse(text)
    assert d.prior_observation_days == days
    assert d.exit.days == gap
    assert parse(print_definition(d)) == d
