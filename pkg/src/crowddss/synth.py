"""Seeded synthetic marketplace with planted worker skill.

Each worker has an overall ability, a per-technology skill, a quit
propensity and an activity rate.  Tasks arrive over the horizon; workers
register more readily for tasks matching their skills and paying more,
submit with a probability that rises with skill and falls with quit
propensity and concurrent load, and score higher in review when skilled.
The one or two best passing submissions win.
"""
from __future__ import annotations

import configparser
import dataclasses
import datetime as dt
import json
from dataclasses import dataclass
from decimal import Decimal
from pathlib import Path

import numpy as np
from scipy.stats import beta as beta_dist

from .errors import InvalidConfigError
from .marketplace import (
    ASSEMBLY,
    CODE,
    UI_PROTOTYPE,
    EventLog,
    TaskRecord,
    ingest_events,
    registration,
    review,
    submission,
)

TECHNOLOGIES = [
    "java", "javascript", "css", "html5", "angularjs", "nodejs", "python", "csharp", "dotnet", "sql",
    "ios", "android", "swift", "php", "ruby", "rails", "spring", "hibernate", "jquery", "bootstrap",
    "photoshop", "illustrator", "mongodb", "mysql", "oracle", "aws", "docker", "rest", "xml", "json",
    "cpp", "c", "go", "scala", "hadoop", "spark", "salesforce", "apex", "sharepoint", "wordpress",
]
TASK_TYPES = (ASSEMBLY, CODE, UI_PROTOTYPE, "BugHunt", "TestSuites")
TASK_TYPE_WEIGHTS = (0.3, 0.35, 0.15, 0.1, 0.1)
MAX_REVIEW_LAG = 3
# submission chance rises along a logistic curve in skill match
SUBMIT_SLOPE = 12.0
SUBMIT_MIDPOINT = 0.4


@dataclass(frozen=True)
class GeneratorConfig:
    num_workers: int = 500
    num_tasks: int = 300
    horizon_days: int = 120
    start_date: dt.date = dt.date(2014, 7, 1)
    vocabulary_size: int = 30
    activity_rate: float = 0.6          # mean registrations per worker-week
    quit_propensity: float = 0.75       # population mean; roughly 80% of pairs end up quitters
    quit_concentration: float = 0.3     # Beta a+b; small values polarise workers
    skill_spread: float = 0.2           # per-technology deviation from ability
    min_duration: int = 4
    max_duration: int = 30
    mean_extra_duration: float = 6.8    # gamma-distributed days above min_duration
    min_prize: float = 100.0
    max_prize: float = 3000.0
    median_prize: float = 600.0
    passing_score: float = 75.0
    second_winner_rate: float = 0.5
    seed: int = 7

    def __post_init__(self):
        if self.num_workers <= 0 or self.num_tasks <= 0 or self.horizon_days <= 0:
            raise InvalidConfigError("num_workers, num_tasks and horizon_days must be positive")
        if not 1 <= self.vocabulary_size <= 107:
            raise InvalidConfigError("vocabulary_size must lie in [1, 107]")
        if not 1 <= self.min_duration <= self.max_duration:
            raise InvalidConfigError("need 1 <= min_duration <= max_duration")
        if self.horizon_days < self.max_duration + MAX_REVIEW_LAG + 1:
            raise InvalidConfigError("horizon_days must exceed max_duration plus the review lag")
        if not 0.0 <= self.quit_propensity <= 1.0:
            raise InvalidConfigError("quit_propensity must lie in [0, 1]")
        if self.activity_rate <= 0 or self.quit_concentration <= 0:
            raise InvalidConfigError("activity_rate and quit_concentration must be positive")
        if not 0 < self.min_prize <= self.median_prize <= self.max_prize:
            raise InvalidConfigError("need 0 < min_prize <= median_prize <= max_prize")
        if not 0.0 <= self.second_winner_rate <= 1.0:
            raise InvalidConfigError("second_winner_rate must lie in [0, 1]")

    @property
    def task_arrival_rate(self) -> float:
        """Mean tasks opened per day (arrivals are spread uniformly over the horizon)."""
        return self.num_tasks / (self.horizon_days - self.max_duration - MAX_REVIEW_LAG)

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["start_date"] = self.start_date.isoformat()
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "GeneratorConfig":
        fields = {f.name: f for f in dataclasses.fields(cls)}
        unknown = set(doc) - set(fields)
        if unknown:
            raise InvalidConfigError(f"unknown generator settings: {sorted(unknown)}")
        kwargs = {}
        for name, value in doc.items():
            default = fields[name].default
            try:
                if isinstance(default, dt.date):
                    kwargs[name] = value if isinstance(value, dt.date) else dt.date.fromisoformat(str(value))
                elif isinstance(default, bool):
                    kwargs[name] = value if isinstance(value, bool) else str(value).lower() == "true"
                else:
                    kwargs[name] = type(default)(value)
            except (TypeError, ValueError) as exc:
                raise InvalidConfigError(f"bad value for {name}: {value!r}") from exc
        return cls(**kwargs)

    @classmethod
    def from_file(cls, path) -> "GeneratorConfig":
        """Read JSON (``.json``) or INI with a ``[generator]`` section (anything else)."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise InvalidConfigError(f"cannot read {path}: {exc}") from exc
        if path.suffix == ".json":
            try:
                return cls.from_dict(json.loads(text))
            except json.JSONDecodeError as exc:
                raise InvalidConfigError(f"{path}: {exc}") from exc
        parser = configparser.ConfigParser()
        try:
            parser.read_string(text)
        except configparser.Error as exc:
            raise InvalidConfigError(f"{path}: {exc}") from exc
        if not parser.has_section("generator"):
            raise InvalidConfigError(f"{path} has no [generator] section")
        return cls.from_dict(dict(parser.items("generator")))


def vocabulary_names(size: int) -> list[str]:
    names = TECHNOLOGIES[:size]
    return names + [f"tech{i:03d}" for i in range(len(names), size)]


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def _quit_propensities(u: np.ndarray, mean: float, concentration: float) -> np.ndarray:
    # quantile transform keeps each worker's rank fixed as the mean moves
    if mean <= 0.0:
        return np.zeros_like(u)
    if mean >= 1.0:
        return np.ones_like(u)
    return beta_dist.ppf(u, mean * concentration, (1.0 - mean) * concentration)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


@dataclass
class Population:
    ability: np.ndarray         # (W,)
    skill: np.ndarray           # (W, V)
    quit: np.ndarray            # (W,)
    activity: np.ndarray        # (W,) registrations per week

    @property
    def worker_ids(self) -> list[str]:
        return [f"w{i:04d}" for i in range(len(self.ability))]


def make_population(config: GeneratorConfig) -> Population:
    W, V = config.num_workers, config.vocabulary_size
    ability = np.empty(W)
    skill = np.empty((W, V))
    quit_u = np.empty(W)
    activity = np.empty(W)
    for i in range(W):
        rng = _stream(config.seed, 1, i)
        ability[i] = rng.beta(2.0, 2.0)
        quit_u[i] = rng.random()
        activity[i] = config.activity_rate * rng.lognormal(-0.32, 0.8)
        skill[i] = np.clip(ability[i] + rng.normal(0.0, config.skill_spread, V), 0.0, 1.0)
    quit = _quit_propensities(quit_u, config.quit_propensity, config.quit_concentration)
    return Population(ability, skill, quit, activity)


def generate_marketplace(config: GeneratorConfig = GeneratorConfig()) -> EventLog:
    return generate_with_population(config)[0]


def generate_with_population(config: GeneratorConfig) -> tuple[EventLog, Population]:
    pop = make_population(config)
    workers = pop.worker_ids
    vocab = vocabulary_names(config.vocabulary_size)
    V = len(vocab)
    popularity = 1.0 / np.arange(1, V + 1) ** 0.7
    popularity /= popularity.sum()
    last_day = config.horizon_days - 1

    tasks = []
    for j in range(config.num_tasks):
        rng = _stream(config.seed, 2, j)
        duration = int(min(config.max_duration,
                           config.min_duration + round(rng.gamma(1.2, config.mean_extra_duration / 1.2))))
        open_day = int(rng.integers(0, last_day - MAX_REVIEW_LAG - duration + 1))
        n_tech = int(min(V, rng.integers(1, 5)))
        techs = np.sort(rng.choice(V, size=n_tech, replace=False, p=popularity))
        prize = float(np.clip(rng.lognormal(np.log(config.median_prize), 0.6), config.min_prize, config.max_prize))
        task_type = TASK_TYPES[int(rng.choice(len(TASK_TYPES), p=TASK_TYPE_WEIGHTS))]
        tasks.append((open_day, j, duration, techs, round(prize), task_type))
    tasks.sort()

    start = config.start_date
    tasks_per_week = config.task_arrival_rate * 7.0
    records, events = [], []
    open_regs: list[list[tuple[int, int]]] = [[] for _ in workers]   # (reg_day, deadline_day)
    for open_day, j, duration, techs, prize, task_type in tasks:
        task_id = str(30040000 + j)
        deadline_day = open_day + duration
        records.append(TaskRecord(
            task_id, task_type, start + dt.timedelta(days=open_day), start + dt.timedelta(days=deadline_day),
            Decimal(prize), frozenset(vocab[k] for k in techs),
        ))
        rng = _stream(config.seed, 3, j)
        u_reg = rng.random(len(workers))
        reg_offset = rng.integers(0, min(4, duration), size=len(workers))
        u_sub = rng.random(len(workers))
        sub_frac = rng.random(len(workers))
        noise = rng.normal(0.0, 4.0, size=len(workers))
        lag = int(rng.integers(1, MAX_REVIEW_LAG + 1))
        two_winners = rng.random() < config.second_winner_rate

        match = pop.skill[:, techs].mean(axis=1)
        appeal = np.exp(3.0 * (match - 0.5)) * (prize / config.median_prize) ** 0.25
        p_reg = np.minimum(0.95, pop.activity / tasks_per_week * appeal)
        registrants = np.flatnonzero(u_reg < p_reg)

        scored = []
        for w in registrants:
            reg_day = open_day + int(reg_offset[w])
            load = sum(1 for r, d in open_regs[w] if r <= reg_day <= d)
            open_regs[w].append((reg_day, deadline_day))
            events.append(registration(workers[w], task_id, start + dt.timedelta(days=reg_day)))
            p_sub = (1.0 - pop.quit[w]) * _sigmoid(SUBMIT_SLOPE * (match[w] - SUBMIT_MIDPOINT)) / (1.0 + 0.15 * load)
            if u_sub[w] >= p_sub:
                continue
            sub_day = reg_day + int(sub_frac[w] * (deadline_day - reg_day + 1))
            events.append(submission(workers[w], task_id, start + dt.timedelta(days=min(sub_day, deadline_day))))
            quality = 0.5 * match[w] + 0.5 * pop.ability[w]
            score = float(np.clip(50.0 + 48.0 * quality + noise[w], 0.0, 100.0))
            scored.append((Decimal(f"{score:.2f}"), workers[w]))

        scored.sort(key=lambda s: (-s[0], s[1]))
        passing = [s for s in scored if s[0] >= Decimal(str(config.passing_score))]
        winners = {w for _, w in passing[: 2 if two_winners else 1]}
        review_date = start + dt.timedelta(days=deadline_day + lag)
        for score, w in scored:
            events.append(review(w, task_id, review_date, score, w in winners))

    log = ingest_events(records, events, vocab)
    return log, pop
