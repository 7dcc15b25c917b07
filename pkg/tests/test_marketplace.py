import random
from decimal import Decimal

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowddss.errors import (
    DuplicateRegistrationError,
    FormatVersionMismatch,
    InvariantViolation,
    IoFailure,
    NotRegisteredError,
    ReferentialIntegrityError,
    TaskStillOpenError,
    UnknownTechnologyError,
)
from crowddss.marketplace import (
    Outcome,
    derive_outcome,
    final_scores,
    ingest_events,
    is_cancelled,
    label_counts,
    registration,
    review,
    submission,
    task_winners,
)
from crowddss.storage import load_log, log_from_dict, log_to_dict, persist_log, read_data_dir, write_data_dir

from conftest import day, task


def test_outcomes_of_tiny_log(tiny_log):
    assert derive_outcome(tiny_log, "alice", "t1") is Outcome.WINNER
    assert derive_outcome(tiny_log, "bob", "t1") is Outcome.SUBMITTER
    assert derive_outcome(tiny_log, "carol", "t1") is Outcome.QUITTER
    assert derive_outcome(tiny_log, "alice", "t2") is Outcome.QUITTER
    assert derive_outcome(tiny_log, "carol", "t2") is Outcome.WINNER


def test_open_task_and_unknown_pair(tiny_log):
    with pytest.raises(TaskStillOpenError):
        derive_outcome(tiny_log, "alice", "t3")
    with pytest.raises(NotRegisteredError):
        derive_outcome(tiny_log, "carol", "t3")


def test_horizon_and_completion(tiny_log):
    assert tiny_log.horizon == day(40)
    assert tiny_log.is_complete("t1") and tiny_log.is_complete("t2")
    assert not tiny_log.is_complete("t3")


def test_label_counts_skip_open_tasks(tiny_log):
    counts = label_counts(tiny_log)
    assert counts == {Outcome.WINNER: 2, Outcome.SUBMITTER: 1, Outcome.QUITTER: 2}


def test_winners_scores_and_cancellation(tiny_log):
    assert task_winners(tiny_log, "t1") == {"alice"}
    assert final_scores(tiny_log)[("bob", "t1")] == Decimal("70.25")
    assert not is_cancelled(tiny_log, "t1")
    assert not is_cancelled(tiny_log, "t3")


def test_latest_review_wins():
    tasks = [task("t1", 0, 5)]
    events = [
        registration("a", "t1", day(0)),
        submission("a", "t1", day(3)),
        review("a", "t1", day(6), "60.00", False),
        review("a", "t1", day(8), "80.00", True),
        registration("b", "t1", day(1)),
    ]
    log = ingest_events(tasks, events, [])
    assert derive_outcome(log, "a", "t1") is Outcome.WINNER
    assert final_scores(log)[("a", "t1")] == Decimal("80.00")


def test_task_with_no_rewarded_submission_is_cancelled():
    log = ingest_events(
        [task("t1", 0, 5), task("t2", 10, 20)],
        [registration("a", "t1", day(1)), submission("a", "t1", day(2)), review("a", "t1", day(6), "40", False)],
        [],
    )
    assert is_cancelled(log, "t1")


@pytest.mark.parametrize(
    "tasks, events, vocab, error",
    [
        ([task("t1", 5, 5)], [], [], InvariantViolation),
        ([task("t1", 0, 5, prize=-1)], [], [], InvariantViolation),
        ([task("t1", 0, 5, techs=["cobol"])], [], ["java"], UnknownTechnologyError),
        ([task("t1", 0, 5), task("t1", 0, 6)], [], [], InvariantViolation),
        ([task("t1", 0, 5)], [], ["java", "java"], InvariantViolation),
        ([task("t1", 0, 5)], [], [f"x{i}" for i in range(108)], InvariantViolation),
        ([task("t1", 0, 5)], [registration("a", "t9", day(1))], [], ReferentialIntegrityError),
        ([task("t1", 0, 5)], [registration("a", "t1", day(1)), registration("a", "t1", day(2))], [],
         DuplicateRegistrationError),
        ([task("t1", 2, 5)], [registration("a", "t1", day(1))], [], InvariantViolation),
        ([task("t1", 0, 5)], [registration("a", "t1", day(6))], [], InvariantViolation),
        ([task("t1", 0, 5)], [submission("a", "t1", day(2))], [], InvariantViolation),
        ([task("t1", 0, 5)], [registration("a", "t1", day(3)), submission("a", "t1", day(2))], [],
         InvariantViolation),
        ([task("t1", 0, 5)], [registration("a", "t1", day(1)), review("a", "t1", day(6), "50", False)], [],
         InvariantViolation),
        ([task("t1", 0, 5)],
         [registration("a", "t1", day(1)), submission("a", "t1", day(2)), review("a", "t1", day(6), "100.5", True)],
         [], InvariantViolation),
        ([task("t1", 0, 5)],
         [registration("a", "t1", day(1)), submission("a", "t1", day(2)), review("a", "t1", day(6), "80.125", True)],
         [], InvariantViolation),
    ],
)
def test_ingest_rejects_invalid_input(tasks, events, vocab, error):
    with pytest.raises(error):
        ingest_events(tasks, events, vocab)


def test_same_day_registration_and_submission_accepted():
    log = ingest_events([task("t1", 0, 5)], [submission("a", "t1", day(2)), registration("a", "t1", day(2))], [])
    assert log.pairs[("a", "t1")].submissions == (day(2),)


def test_ingest_is_permutation_invariant(small_log):
    events = list(small_log.events)
    tasks = list(small_log.tasks.values())
    rng = random.Random(5)
    rng.shuffle(events)
    rng.shuffle(tasks)
    again = ingest_events(tasks, events, small_log.vocabulary)
    assert again.events == small_log.events
    assert list(again.tasks) == list(small_log.tasks)


@settings(max_examples=25, deadline=None)
@given(st.permutations(range(14)))
def test_tiny_log_order_does_not_matter(tiny_log, order):
    events = [tiny_log.events[i] for i in order]
    again = ingest_events(list(tiny_log.tasks.values())[::-1], events, tiny_log.vocabulary)
    assert again.events == tiny_log.events
    assert again.pairs == tiny_log.pairs


def test_exchange_files_round_trip(small_log, tmp_path):
    write_data_dir(small_log, tmp_path)
    again = read_data_dir(tmp_path)
    assert again.events == small_log.events
    assert again.tasks == small_log.tasks
    assert again.vocabulary == small_log.vocabulary


def test_persisted_log_round_trip(tiny_log, tmp_path):
    path = tmp_path / "log.json"
    persist_log(tiny_log, path)
    first = path.read_bytes()
    again = load_log(path)
    assert again.events == tiny_log.events and again.tasks == tiny_log.tasks
    persist_log(again, path)
    assert path.read_bytes() == first


def test_wrong_format_version(tiny_log):
    doc = log_to_dict(tiny_log)
    doc["version"] = 99
    with pytest.raises(FormatVersionMismatch):
        log_from_dict(doc)


def test_unwritable_location_raises_io_failure(tiny_log, tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(IoFailure):
        persist_log(tiny_log, blocker / "log.json")
    with pytest.raises(IoFailure):
        load_log(tmp_path / "missing.json")
