import datetime as dt
from decimal import Decimal

import pytest

from crowddss.marketplace import TaskRecord, ingest_events, registration, review, submission
from crowddss.synth import GeneratorConfig, generate_marketplace

D0 = dt.date(2014, 7, 1)
ACCEPTANCE_LINES: list[str] = []


def day(n: int) -> dt.date:
    return D0 + dt.timedelta(days=n)


def task(task_id, open_day, deadline_day, prize=500, techs=(), task_type="Code"):
    return TaskRecord(task_id, task_type, day(open_day), day(deadline_day), Decimal(prize), frozenset(techs))


SMALL = GeneratorConfig(num_workers=150, num_tasks=90, horizon_days=80, max_duration=20, seed=3)


@pytest.fixture(scope="session")
def small_log():
    return generate_marketplace(SMALL)


@pytest.fixture(scope="session")
def tiny_log():
    """Two finished tasks and one open one, with every outcome represented."""
    tasks = [
        task("t1", 0, 10, 400, ["java"]),
        task("t2", 5, 15, 800, ["java", "css"], "Assembly"),
        task("t3", 20, 40, 300, ["css"]),
    ]
    events = [
        registration("alice", "t1", day(1)),
        registration("bob", "t1", day(2)),
        registration("carol", "t1", day(2)),
        submission("alice", "t1", day(8)),
        submission("bob", "t1", day(9)),
        review("alice", "t1", day(12), "91.50", True),
        review("bob", "t1", day(12), "70.25", False),
        registration("alice", "t2", day(6)),
        registration("carol", "t2", day(7)),
        submission("carol", "t2", day(14)),
        review("carol", "t2", day(16), "88.00", True),
        registration("alice", "t3", day(21)),
        registration("bob", "t3", day(22)),
        submission("alice", "t3", day(30)),
    ]
    return ingest_events(tasks, events, ["java", "css", "python"])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def append_future_events(log, cutoff, rng, n_new=30):
    """Return a new log with extra valid events, all dated on or after ``cutoff``.

    Adds a task opening on the cutoff with fresh registrations, plus late
    registrations, submissions and reviews on existing tasks.
    """
    tasks = list(log.tasks.values())
    events = list(log.events)
    workers = log.workers
    new_id = "zz-late"
    late = TaskRecord(new_id, "Code", cutoff, cutoff + dt.timedelta(days=8), Decimal(700),
                      frozenset(log.vocabulary[:2]))
    tasks.append(late)
    registered = {k: f.registered for k, f in log.pairs.items()}
    submitted = {k: f.submissions[0] for k, f in log.pairs.items() if f.submissions}
    for w in rng.sample(workers, min(n_new, len(workers))):
        events.append(registration(w, new_id, cutoff + dt.timedelta(days=rng.randrange(3))))
    open_tasks = [t for t in tasks[:-1] if t.submission_deadline >= cutoff]
    for _ in range(n_new):
        if not open_tasks:
            break
        t = rng.choice(open_tasks)
        w = rng.choice(workers)
        start = max(cutoff, t.registration_open)
        if (w, t.task_id) in registered or start > t.submission_deadline:
            continue
        reg_day = start + dt.timedelta(days=rng.randrange((t.submission_deadline - start).days + 1))
        registered[(w, t.task_id)] = reg_day
        events.append(registration(w, t.task_id, reg_day))
        if rng.random() < 0.5:
            events.append(submission(w, t.task_id, reg_day))
            submitted[(w, t.task_id)] = reg_day
    for w, t in rng.sample(sorted(submitted), min(n_new, len(submitted))):
        events.append(review(w, t, max(cutoff, submitted[(w, t)]) + dt.timedelta(days=rng.randrange(1, 5)),
                             f"{rng.uniform(0, 100):.2f}", rng.random() < 0.3))
    for w, t in rng.sample(sorted(registered), min(n_new, len(registered))):
        events.append(submission(w, t, max(cutoff, registered[(w, t)]) + dt.timedelta(days=rng.randrange(4))))
    return ingest_events(tasks, events, log.vocabulary)
