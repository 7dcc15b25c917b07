import datetime as dt
from decimal import Decimal

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from crowddss.errors import (
    EmptyInputError,
    IncompleteCoverageError,
    LengthMismatchError,
    NoMonitoredTasksError,
    NotEnoughRankedError,
    NoWinnersError,
)
from crowddss.features import Experience
from crowddss.marketplace import Outcome, ingest_events, registration, review, submission
from crowddss.metrics import (
    auc_ovr,
    cancellation_metrics,
    cancellation_savings,
    confusion_metrics,
    effort_savings,
    f_measure,
    open_test_pairs,
    recall_at_k,
    score_gap,
    vargha_delaney,
)

from conftest import day, task

# brute-force references


def tally(pred, act):
    out = {}
    for c in range(3):
        tp = sum(1 for p, a in zip(pred, act) if p == c and a == c)
        fp = sum(1 for p, a in zip(pred, act) if p == c and a != c)
        fn = sum(1 for p, a in zip(pred, act) if p != c and a == c)
        prec = tp / (tp + fp) if tp + fp else 0.0
        rec = tp / (tp + fn) if tp + fn else 0.0
        out[c] = (prec, rec, 2 * prec * rec / (prec + rec) if prec + rec else 0.0)
    return out


def pair_auc(scores, positive):
    pos = [s for s, p in zip(scores, positive) if p]
    neg = [s for s, p in zip(scores, positive) if not p]
    wins = sum(1.0 if a > b else 0.5 if a == b else 0.0 for a in pos for b in neg)
    return wins / (len(pos) * len(neg))


def pair_a12(a, b):
    return sum(1.0 if x > y else 0.5 if x == y else 0.0 for x in a for y in b) / (len(a) * len(b))


# fixtures from the illustrative example

RANKINGS = {"30047945": ["GreatKevin", "suno1234"], "30048207": ["albertwang", "seriyvolk83", "mohamede1945"]}
WINNERS = {"30047945": {"GreatKevin", "suno1234"}, "30048207": {"mohamede1945", "seriyvolk83"}}
REVIEWS = {
    ("GreatKevin", "30047945"): Decimal("98.75"),
    ("suno1234", "30047945"): Decimal("95.63"),
    ("mohamede1945", "30048207"): Decimal("99.82"),
    ("seriyvolk83", "30048207"): Decimal("98.78"),
    ("albertwang", "30048207"): Decimal("95.01"),
}


def test_worked_example_score_gap():
    result = score_gap(RANKINGS, REVIEWS, WINNERS)
    assert result.per_task == {"30047945": Decimal("0.00"), "30048207": Decimal("2.40")}
    assert result.mean == Decimal("1.20")


def test_worked_example_recall():
    assert recall_at_k(RANKINGS, WINNERS, 1) == 0.5
    assert recall_at_k(RANKINGS, WINNERS, 2) == 1.0


@pytest.mark.parametrize("p, r, expected", [(0.85, 0.80, 0.8242), (0.87, 0.77, 0.8169)])
def test_f_measure_table_values(p, r, expected):
    assert abs(f_measure(p, r) - expected) <= 1e-4
    assert round(f_measure(p, r), 2) == round(expected, 2)


@pytest.mark.parametrize("tp, fp, fn", [(68, 12, 17), (6699, 1001, 2001)])
def test_confusion_f_from_counts(tp, fp, fn):
    # winners predicted correctly tp times; fp quitters called winners; fn winners called quitters
    act = [0] * tp + [1] * fp + [0] * fn
    pred = [0] * tp + [0] * fp + [1] * fn
    s = confusion_metrics(pred, act).per_class[Outcome.WINNER]
    assert s.precision == tp / (tp + fp) and s.recall == tp / (tp + fn)
    assert s.f_measure == pytest.approx(2 * tp / (2 * tp + fp + fn), abs=1e-15)


def test_perfect_predictions_and_absent_class():
    rep = confusion_metrics([0, 1, 1, 0], [0, 1, 1, 0])
    for c in (Outcome.WINNER, Outcome.QUITTER):
        assert rep.per_class[c].f_measure == 1.0
    assert rep.per_class[Outcome.SUBMITTER].f_measure == 0.0
    assert rep.total == 4


def test_confusion_errors():
    with pytest.raises(LengthMismatchError):
        confusion_metrics([0], [0, 1])
    with pytest.raises(EmptyInputError):
        confusion_metrics([], [])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 2), st.integers(0, 2)), min_size=1, max_size=50))
def test_confusion_matches_tally(pairs):
    pred, act = zip(*pairs)
    rep = confusion_metrics(pred, act)
    for c, (p, r, f) in tally(pred, act).items():
        got = rep.per_class[c]
        assert (got.precision, got.recall) == (p, r)
        assert abs(got.f_measure - f) <= 1e-12
        assert got.recall == (rep.matrix[c, c] / rep.matrix[c].sum() if rep.matrix[c].sum() else 0.0)
    assert rep.total == len(pairs)


def test_auc_trivial_cases():
    scores = np.array([[0.9, 0.1, 0.0], [0.8, 0.2, 0.0], [0.1, 0.9, 0.0], [0.2, 0.8, 0.0]])
    got = auc_ovr(scores, [0, 0, 1, 1])
    assert got[Outcome.WINNER] == 1.0 and got[Outcome.QUITTER] == 1.0
    assert got[Outcome.SUBMITTER] is None
    flat = auc_ovr(np.full((4, 3), 1 / 3), [0, 1, 0, 1])
    assert flat[Outcome.WINNER] == 0.5


def test_auc_six_samples():
    s = [0.9, 0.4, 0.4, 0.7, 0.1, 0.4]
    act = [0, 0, 1, 1, 2, 0]
    scores = np.column_stack([s, np.zeros(6), np.zeros(6)])
    assert auc_ovr(scores, act)[Outcome.WINNER] == pytest.approx(pair_auc(s, [a == 0 for a in act]), abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5), st.integers(0, 5), st.integers(0, 2)),
                min_size=2, max_size=30))
def test_auc_matches_pair_count(rows):
    scores = np.array([r[:3] for r in rows], dtype=float) / 5.0
    act = [r[3] for r in rows]
    got = auc_ovr(scores, act)
    for c in range(3):
        positive = [a == c for a in act]
        if all(positive) or not any(positive):
            assert got[c] is None
        else:
            assert abs(got[c] - pair_auc(scores[:, c].tolist(), positive)) <= 1e-12


def test_vargha_delaney_examples():
    assert vargha_delaney([1, 2], [0, 3]) == 0.5
    assert vargha_delaney([3, 1, 2], [3, 1, 2]) == 0.5
    assert vargha_delaney([5, 6], [1, 2, 3]) == 1.0
    with pytest.raises(EmptyInputError):
        vargha_delaney([], [1])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=15), st.lists(st.integers(0, 6), min_size=1, max_size=15))
def test_vargha_delaney_matches_pairs(a, b):
    assert abs(vargha_delaney(a, b) - pair_a12(a, b)) <= 1e-12
    assert abs(vargha_delaney(a, b) + vargha_delaney(b, a) - 1.0) <= 1e-12


def brute_recall(rankings, winners, k):
    tasks = [t for t in rankings if winners.get(t)]
    return sum(any(w in winners[t] for w in rankings[t][:k]) for t in tasks) / len(tasks)


@settings(max_examples=50, deadline=None)
@given(st.dictionaries(
    st.sampled_from([f"t{i}" for i in range(8)]),
    st.tuples(st.permutations([f"w{i}" for i in range(6)]), st.integers(0, 6), st.sets(st.sampled_from(
        [f"w{i}" for i in range(6)]), min_size=1)),
    min_size=1))
def test_recall_matches_brute_force_and_grows_with_k(raw):
    rankings = {t: list(perm[:n]) for t, (perm, n, _) in raw.items()}
    winners = {t: w for t, (_, _, w) in raw.items()}
    previous = 0.0
    for k in range(1, 8):
        got = recall_at_k(rankings, winners, k)
        assert abs(got - brute_recall(rankings, winners, k)) <= 1e-12
        assert got >= previous
        previous = got
    assert previous == sum(bool(set(rankings[t]) & winners[t]) for t in rankings) / len(rankings)


def test_recall_without_winners():
    with pytest.raises(NoWinnersError):
        recall_at_k({"t": ["a"]}, {"t": set()}, 1)
    assert recall_at_k({"t": ["a"], "u": ["b"]}, {"u": {"b"}}, 1) == 1.0


def test_score_gap_exclusions():
    reviews = dict(REVIEWS)
    del reviews[("albertwang", "30048207")]
    result = score_gap(RANKINGS, reviews, WINNERS)
    assert result.per_task == {"30047945": Decimal("0.00")}
    assert result.excluded_unscored == 1
    with pytest.raises(NotEnoughRankedError):
        score_gap({"30048207": ["albertwang"]}, REVIEWS, WINNERS)


@settings(max_examples=40, deadline=None)
@given(st.lists(st.integers(0, 10000), min_size=2, max_size=8, unique=True), st.integers(1, 2),
       st.randoms(use_true_random=False))
def test_score_gap_nonnegative_when_winners_are_top_scorers(cents, n_winners, rnd):
    # with three or more winners the top two alone can outscore the winners' mean
    workers = [f"w{i}" for i in range(len(cents))]
    reviews = {(w, "t"): Decimal(c) / 100 for w, c in zip(workers, cents)}
    ordered = sorted(workers, key=lambda w: reviews[(w, "t")], reverse=True)
    winners = {"t": set(ordered[:min(n_winners, len(ordered))])}
    ranking = list(workers)
    rnd.shuffle(ranking)
    assert score_gap({"t": ranking}, reviews, winners).mean >= 0


# effort savings


def _effort_log():
    tasks = [task("t1", 0, 10), task("t2", 0, 10, task_type="Assembly"), task("t3", 20, 30)]
    events = [
        registration("q", "t1", day(2)),
        registration("w", "t1", day(1)), submission("w", "t1", day(5)), review("w", "t1", day(11), "90", True),
        registration("a", "t2", day(3)),
    ]
    return ingest_events(tasks, events, [])


def _predictions(log, start, n, quitter_days):
    out = {}
    for i in range(n):
        d = start + dt.timedelta(days=i)
        out[d] = {k: Outcome.QUITTER if d in quitter_days else Outcome.WINNER for k in open_test_pairs(log, d)}
    return out


def test_effort_savings_counts_predicted_quit_days():
    log = _effort_log()
    preds = _predictions(log, day(0), 12, {day(3), day(4), day(6), day(9)})
    got = effort_savings(preds, log, day(0), 12)
    # q and a are quitters predicted on 4 days each; the winner w never counts
    assert got.per_pair[("q", "t1")] == (Experience.UNEXPERIENCED, 4)
    assert got.per_pair[("a", "t2")] == (Experience.UNEXPERIENCED, 4)
    assert ("w", "t1") not in got.per_pair
    assert got.total[Experience.UNEXPERIENCED] == 8 and got.pairs[Experience.UNEXPERIENCED] == 2
    assert got.mean(Experience.EXPERIENCED) == 0.0


def test_effort_savings_excludes_types():
    log = _effort_log()
    preds = _predictions(log, day(0), 12, {day(3), day(4), day(6), day(9)})
    got = effort_savings(preds, log, day(0), 12, exclude_types={"Assembly"})
    assert list(got.per_pair) == [("q", "t1")]
    assert got.pairs[Experience.UNEXPERIENCED] == 1


def test_effort_savings_bounded_by_period_and_span():
    log = _effort_log()
    preds = _predictions(log, day(4), 3, {day(4), day(5), day(6)})
    got = effort_savings(preds, log, day(4), 3)
    assert all(saved <= 3 for _, saved in got.per_pair.values())


def test_effort_savings_needs_full_coverage():
    log = _effort_log()
    preds = _predictions(log, day(0), 5, set())
    del preds[day(3)][("q", "t1")]
    with pytest.raises(IncompleteCoverageError):
        effort_savings(preds, log, day(0), 5)


# cancellation


def test_cancellation_savings_values():
    assert cancellation_savings(task("a", 0, 30), day(3)) == 90.0
    assert cancellation_savings(task("b", 0, 7), day(3)) == pytest.approx(400 / 7, abs=1e-12)
    assert round(cancellation_savings(task("b", 0, 7), day(3)), 2) == 57.14


def test_cancellation_metrics():
    tasks = {t: task(t, 0, 10) for t in "abcd"}
    preds = {"a": day(3), "b": day(5), "c": None, "d": None}
    actual = {"a": True, "b": False, "c": True, "d": False}
    got = cancellation_metrics(preds, actual, tasks)
    assert got.confusion == {"tp": 1, "fp": 1, "fn": 1, "tn": 1}
    assert (got.precision, got.recall) == (0.5, 0.5)
    assert abs(got.f_measure - f_measure(got.precision, got.recall)) <= 1e-12
    assert got.savings == {"a": 70.0}
    with pytest.raises(NoMonitoredTasksError):
        cancellation_metrics({}, {}, tasks)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(st.booleans(), st.booleans()), min_size=1, max_size=20))
def test_cancellation_f_identity(flags):
    tasks = {f"t{i}": task(f"t{i}", 0, 10) for i in range(len(flags))}
    preds = {f"t{i}": (day(4) if f else None) for i, (f, _) in enumerate(flags)}
    actual = {f"t{i}": a for i, (_, a) in enumerate(flags)}
    got = cancellation_metrics(preds, actual, tasks)
    p, r = got.precision, got.recall
    assert abs(got.f_measure - (2 * p * r / (p + r) if p + r else 0.0)) <= 1e-12
    assert sum(got.confusion.values()) == len(flags)

