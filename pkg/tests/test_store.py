import pytest
from hypothesis import given
from hypothesis import strategies as st

from phenokit.dates import parse_day
from phenokit.store import (
    ClinicalEvent,
    IngestError,
    Person,
    Store,
    StoreError,
    data_dictionary,
    ingest,
    merge_periods,
)
from phenokit.vocab import Concept, Vocabulary

FIX_STORE = "fixtures/store_small"


def _vocab():
    concepts = {
        1: Concept(1, "C1", "T", "cond one", "condition"),
        2: Concept(2, "C2", "T", "cond two", "condition"),
        3: Concept(3, "M1", "T", "meas", "measurement"),
    }
    return Vocabulary(concepts, set())


def _store(events, periods=None, persons=None):
    persons = persons or [Person(1, 0, "F", "A", None)]
    periods = periods if periods is not None else [(1, 0, 10000)]
    return Store.build(persons, periods, events, _vocab())


def test_merge_periods_overlap_and_touch():
    assert merge_periods([(1, 10), (5, 20)]) == ((1, 20),)
    assert merge_periods([(1, 10), (11, 20)]) == ((1, 20),)
    assert merge_periods([(1, 10), (12, 20)]) == ((1, 10), (12, 20))
    assert merge_periods([]) == ()


@given(st.lists(st.tuples(st.integers(0, 400), st.integers(0, 100)), max_size=20))
def test_merge_periods_covers_exactly_the_inputs(raw):
    periods = [(s, s + length) for s, length in raw]
    merged = merge_periods(periods)
    # result is disjoint with true gaps, sorted
    for (s1, e1), (s2, e2) in zip(merged, merged[1:]):
        assert e1 + 1 < s2
    covered = set()
    for s, e in merged:
        covered.update(range(s, e + 1))
    expected = set()
    for s, e in periods:
        expected.update(range(s, e + 1))
    assert covered == expected


def test_fixture_counts(small_store):
    assert len(small_store.persons) == 3
    assert small_store.n_events == 5


def test_events_in_window(small_store):
    events = small_store.events_in_window(1, "condition", {1001, 1002}, (0, 100000))
    assert [e.concept_id for e in events] == [1002]
    assert events[0].start_day == parse_day("2010-04-11")
    # window filters by start date
    nothing = small_store.events_in_window(
        1, "condition", {1001, 1002}, (0, parse_day("2010-04-10")))
    assert nothing == []
    with pytest.raises(StoreError):
        small_store.events_in_window(1, "condition", {1001}, (10, 5))
    with pytest.raises(StoreError):
        small_store.events_in_window(99, "condition", {1001}, (0, 10))


def test_domain_events_sorted_by_start_then_id():
    events = [
        ClinicalEvent(5, 1, "condition", 1, 30),
        ClinicalEvent(2, 1, "condition", 2, 10),
        ClinicalEvent(9, 1, "condition", 1, 10),
    ]
    store = _store(events)
    raw = store.domain_events(1, "condition")
    assert [(e[0], e[1]) for e in raw] == [(10, 2), (10, 9), (30, 5)]


def test_person_events_spans_domains():
    events = [
        ClinicalEvent(1, 1, "condition", 1, 10),
        ClinicalEvent(2, 1, "measurement", 3, 5, value_as_number=1.5),
    ]
    store = _store(events)
    assert [e.event_id for e in store.person_events(1)] == [1, 2]
    assert store.person_events(1)[1].value_as_number == 1.5


def test_build_rejects_duplicate_event_id():
    events = [ClinicalEvent(1, 1, "condition", 1, 10), ClinicalEvent(1, 1, "condition", 2, 20)]
    with pytest.raises(IngestError, match="duplicate event_id"):
        _store(events)


def test_build_rejects_event_before_birth():
    with pytest.raises(IngestError, match="birth_date"):
        _store([ClinicalEvent(1, 1, "condition", 1, -5)])


def test_build_rejects_value_outside_measurement():
    with pytest.raises(IngestError, match="non-measurement"):
        _store([ClinicalEvent(1, 1, "condition", 1, 5, value_as_number=2.0)])


def test_save_load_round_trip(small_store, tmp_path):
    out = tmp_path / "copy"
    small_store.save(out)
    again = Store.load(out)
    assert again.persons == small_store.persons
    assert again.periods == small_store.periods
    assert again.all_events() == small_store.all_events()
    # normalized output is byte-stable
    out2 = tmp_path / "copy2"
    again.save(out2)
    for name in ("persons.csv", "observation_periods.csv", "events.csv"):
        assert (out / name).read_bytes() == (out2 / name).read_bytes()


def _write_store_files(tmp_path, events_rows):
    (tmp_path / "persons.csv").write_text(
        "person_id,birth_date,gender,race,ethnicity\n1,1980-01-01,F,A,NH\n")
    (tmp_path / "observation_periods.csv").write_text(
        "person_id,start_date,end_date\n1,2000-01-01,2020-12-31\n")
    header = "event_id,person_id,domain,concept_id,start_date,end_date,value_as_number,unit_concept_id\n"
    (tmp_path / "events.csv").write_text(header + "".join(events_rows))
    (tmp_path / "concepts.csv").write_text(
        "concept_id,source_code,vocabulary_name,display_name,domain\n"
        "1,C1,T,one,condition\n")
    (tmp_path / "ancestry.csv").write_text("ancestor_concept_id,descendant_concept_id\n")


def test_ingest_reports_file_line_and_column(tmp_path):
    _write_store_files(tmp_path, ["1,1,condition,1,2010-01-01,,,\n",
                                  "2,7,condition,1,2010-01-01,,,\n"])
    with pytest.raises(IngestError) as err:
        Store.load(tmp_path)
    message = str(err.value)
    assert "events.csv:3" in message
    assert "person_id" in message


def test_ingest_rejects_unknown_concept(tmp_path):
    _write_store_files(tmp_path, ["1,1,condition,999,2010-01-01,,,\n"])
    with pytest.raises(IngestError, match="unknown concept_id 999"):
        Store.load(tmp_path)


def test_ingest_rejects_end_before_start(tmp_path):
    _write_store_files(tmp_path, ["1,1,condition,1,2010-06-01,2010-05-01,,\n"])
    with pytest.raises(IngestError, match="end_date before start_date"):
        Store.load(tmp_path)


def test_ingest_merges_observation_periods(tmp_path):
    _write_store_files(tmp_path, [])
    (tmp_path / "observation_periods.csv").write_text(
        "person_id,start_date,end_date\n"
        "1,2000-01-01,2000-06-30\n"
        "1,2000-03-01,2000-12-31\n")
    store = Store.load(tmp_path)
    assert store.periods_for(1) == ((parse_day("2000-01-01"), parse_day("2000-12-31")),)


def test_ingest_is_separate_files(tmp_path, fixtures_dir):
    src = fixtures_dir / "store_small"
    store = ingest(
        src / "persons.csv",
        src / "observation_periods.csv",
        src / "events.csv",
        src,
    )
    assert len(store.persons) == 3


def test_data_dictionary_missingness(small_store):
    doc = data_dictionary(small_store).to_doc()
    assert doc["persons"]["row_count"] == 3
    assert doc["events"]["row_count"] == 5
    by_name = {c["name"]: c for c in doc["events"]["columns"]}
    # 2 of 5 events carry an end date, 1 of 5 a value
    assert by_name["end_date"]["missingness"] == pytest.approx(3 / 5)
    assert by_name["value_as_number"]["missingness"] == pytest.approx(4 / 5)
    assert by_name["start_date"]["missingness"] == 0.0
