"""Brute-force evasion search over bounded feature grids.

The attacker only sees ``pipeline.predict(raw_rows)``. Candidates are the
lexicographic Cartesian product of the group's grids (last grid varies
fastest) substituted into the raw sample; the first candidate predicted
human is the evasion.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConfigurationError, GridOverflowError

log = logging.getLogger(__name__)

GROUPS = ("user_meta", "tweet_meta", "temporal", "all")

# feature -> (group, low, high, default step); bounds in raw units
FEATURE_BOUNDS = {
    "followers_count": ("user_meta", 0.0, 1000.0, 50.0),
    "friends_count": ("user_meta", 0.0, 1000.0, 50.0),
    "mean_no_words": ("tweet_meta", 1.0, 55.0, 5.0),
    "mean_favourites_per_tweet": ("tweet_meta", 0.0, 1000.0, 50.0),
    "mean_retweets_per_tweet": ("tweet_meta", 0.0, 200.0, 10.0),
    "max_tweets_per_hour": ("temporal", 0.0, 100.0, 5.0),
    "max_tweets_per_day": ("temporal", 0.0, 200.0, 10.0),
}

DEFAULT_MAX_QUERIES = 10**6


@dataclass(frozen=True)
class FeatureGrid:
    feature_name: str
    values: tuple

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if not vals:
            raise ConfigurationError(f"grid for {self.feature_name!r} is empty")
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigurationError(f"grid for {self.feature_name!r} must be strictly ascending")
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError(f"grid for {self.feature_name!r} has non-finite values")
        bounds = FEATURE_BOUNDS.get(self.feature_name)
        if bounds is not None and (vals[0] < bounds[1] or vals[-1] > bounds[2]):
            raise ConfigurationError(
                f"grid for {self.feature_name!r} leaves bounds [{bounds[1]}, {bounds[2]}]"
            )
        object.__setattr__(self, "values", vals)


def stepped_grid(name, step=None, low=None, high=None) -> FeatureGrid:
    """Evenly stepped grid over ``[low, high]``; the upper bound is always included."""
    _, lo, hi, default_step = FEATURE_BOUNDS[name]
    lo = lo if low is None else float(low)
    hi = hi if high is None else float(high)
    step = default_step if step is None else float(step)
    if step <= 0:
        raise ConfigurationError(f"step for {name!r} must be positive")
    vals = list(np.arange(lo, hi + step * 1e-9, step))
    if hi - vals[-1] > 1e-9:
        vals.append(hi)
    return FeatureGrid(name, tuple(round(v, 9) for v in vals))


def default_grids(group, steps=None):
    steps = steps or {}
    if group not in GROUPS:
        raise ConfigurationError(f"group must be one of {GROUPS}", field="group")
    return [
        stepped_grid(name, steps.get(name))
        for name, (g, *_rest) in FEATURE_BOUNDS.items()
        if group == "all" or g == group
    ]


@dataclass(frozen=True)
class AttackSpec:
    group: str = "all"
    grids: tuple = ()
    max_queries_per_sample: int = DEFAULT_MAX_QUERIES
    seed: int = 0

    def __post_init__(self):
        if self.group not in GROUPS:
            raise ConfigurationError(f"group must be one of {GROUPS}", field="group")
        object.__setattr__(self, "grids", tuple(self.grids))
        names = [g.feature_name for g in self.grids]
        if len(set(names)) != len(names):
            raise ConfigurationError("each feature may appear in at most one grid")
        if int(self.max_queries_per_sample) < 1:
            raise ConfigurationError("max_queries_per_sample must be >= 1", field="max_queries_per_sample")

    @classmethod
    def default(cls, group="all", max_queries_per_sample=DEFAULT_MAX_QUERIES, seed=0, steps=None):
        return cls(group, tuple(default_grids(group, steps)), max_queries_per_sample, seed)

    def product_size(self):
        n = 1
        for g in self.grids:
            n *= len(g.values)
        return n

    def to_dict(self):
        return {
            "group": self.group,
            "grids": {g.feature_name: list(g.values) for g in self.grids},
            "max_queries_per_sample": int(self.max_queries_per_sample),
            "seed": int(self.seed),
        }


class CandidateSequence:
    """Lazy, ordered view of the perturbation candidates for one sample."""

    def __init__(self, spec: AttackSpec, schema, sample):
        self.sample = np.asarray(sample, dtype=np.float64)
        if self.sample.shape != (schema.total_width,):
            raise ConfigurationError("sample width does not match schema")
        for g in spec.grids:
            if schema.category_of(g.feature_name) == "embedding":
                raise ConfigurationError(f"{g.feature_name!r} is not perturbable")
        self.names = [g.feature_name for g in spec.grids]
        self.cols = np.array([schema.column_index(n) for n in self.names], dtype=np.int64)
        self.radices = np.array([len(g.values) for g in spec.grids], dtype=np.int64)
        self.values = (
            np.concatenate([np.asarray(g.values) for g in spec.grids]) if spec.grids else np.empty(0)
        )
        self.offsets = np.concatenate([[0], np.cumsum(self.radices)[:-1]]).astype(np.int64)
        self.total = spec.product_size() if spec.grids else 0
        if self.total > spec.max_queries_per_sample:
            raise GridOverflowError(
                f"{self.total} candidates exceed the per-sample budget of "
                f"{spec.max_queries_per_sample}; use coarser grids or raise the budget",
                field="max_queries_per_sample",
            )
        self.skip = self._original_index(spec)

    def _original_index(self, spec):
        if not spec.grids:
            return None
        idx = 0
        for g, col in zip(spec.grids, self.cols):
            hit = np.flatnonzero(np.asarray(g.values) == self.sample[col])
            if len(hit) == 0:
                return None
            idx = idx * len(g.values) + int(hit[0])
        return idx

    def __len__(self):
        return self.total - (self.skip is not None)

    def raw_chunk(self, start, count):
        """Rows for raw product indices ``start .. start+count-1`` (no dedup)."""
        return _backend.grid_candidates(
            self.sample, self.cols, self.values, self.offsets, self.radices, start, count
        )

    def __iter__(self):
        for i in range(self.total):
            if i != self.skip:
                yield self.raw_chunk(i, 1)[0]

    def __getitem__(self, pos):
        if not 0 <= pos < len(self):
            raise IndexError(pos)
        raw = pos + (self.skip is not None and pos >= self.skip)
        return self.raw_chunk(raw, 1)[0]

    def assignment(self, raw_index):
        """Feature -> value substituted at a raw product index."""
        out = {}
        for g in range(len(self.cols) - 1, -1, -1):
            digit = raw_index % self.radices[g]
            raw_index //= self.radices[g]
            out[self.names[g]] = float(self.values[self.offsets[g] + digit])
        return {n: out[n] for n in self.names}


def enumerate_perturbations(spec: AttackSpec, schema, sample) -> CandidateSequence:
    return CandidateSequence(spec, schema, sample)


class QueryAudit:
    """Black-box proxy: forwards ``predict`` and counts it; refuses anything else."""

    def __init__(self, pipeline):
        object.__setattr__(self, "_pipeline", pipeline)
        object.__setattr__(self, "predict_calls", 0)
        object.__setattr__(self, "rows_queried", 0)
        object.__setattr__(self, "denied", [])

    def predict(self, rows):
        rows = np.atleast_2d(rows)
        object.__setattr__(self, "predict_calls", self.predict_calls + 1)
        object.__setattr__(self, "rows_queried", self.rows_queried + len(rows))
        return np.asarray(self._pipeline.predict(rows))

    def __getattr__(self, name):
        self.denied.append(name)
        raise AttributeError(f"black-box attack may only call predict(), not {name!r}")

    def __setattr__(self, name, value):
        raise AttributeError("audit proxy is read-only")

    def summary(self):
        return {
            "predict_calls": int(self.predict_calls),
            "rows_queried": int(self.rows_queried),
            "other_access": len(self.denied),
        }


@dataclass
class AttackOutcome:
    sample_id: str
    status: str  # "success" | "failure" | "skipped"
    queries: int = 0
    candidate_index: int | None = None
    perturbation: dict = field(default_factory=dict)
    perturbed_row: np.ndarray | None = None
    verified: bool = False


def attack_sample(pipeline, sample, spec: AttackSpec, schema, sample_id="", max_chunk=65536):
    """Query candidates in order until one is predicted human (label 0)."""
    sample = np.asarray(sample, dtype=np.float64)
    if int(pipeline.predict(sample[None, :])[0]) != 1:
        return AttackOutcome(str(sample_id), "skipped")
    seq = enumerate_perturbations(spec, schema, sample)
    consumed, start, chunk = 0, 0, 64
    while start < seq.total:
        count = min(chunk, seq.total - start)
        rows = seq.raw_chunk(start, count)
        keep = np.ones(count, dtype=bool)
        if seq.skip is not None and start <= seq.skip < start + count:
            keep[seq.skip - start] = False
        rows_kept = rows[keep]
        raw_idx = np.arange(start, start + count)[keep]
        if len(rows_kept):
            labels = pipeline.predict(rows_kept)
            hits = np.flatnonzero(np.asarray(labels) == 0)
            if len(hits):
                h = int(hits[0])
                row = rows_kept[h]
                verified = int(pipeline.predict(row[None, :])[0]) == 0
                return AttackOutcome(
                    str(sample_id),
                    "success",
                    consumed + h + 1,
                    int(raw_idx[h]),
                    seq.assignment(int(raw_idx[h])),
                    row.copy(),
                    verified,
                )
            consumed += len(rows_kept)
        start += count
        chunk = min(chunk * 2, max_chunk)
    return AttackOutcome(str(sample_id), "failure", consumed)


@dataclass
class AttackReport:
    initial_samples: int
    attackable: int
    successes: int
    success_rate: float
    per_sample_queries: dict
    wall_clock_seconds: float
    records: list
    spec: dict
    audit: dict
    statuses: dict = field(default_factory=dict)

    def to_dict(self, normalized=False):
        return {
            "initial_samples": self.initial_samples,
            "attackable": self.attackable,
            "successes": self.successes,
            "success_rate": self.success_rate,
            "per_sample_queries": self.per_sample_queries,
            "statuses": self.statuses,
            "wall_clock_seconds": 0.0 if normalized else self.wall_clock_seconds,
            "records": self.records,
            "spec": self.spec,
            "audit": self.audit,
        }


def attack_campaign(pipeline, samples, spec: AttackSpec, schema, ids=None) -> AttackReport:
    """Attack every bot-predicted sample; the rate is over all initial samples."""
    samples = np.atleast_2d(np.asarray(samples, dtype=np.float64))
    ids = [str(i) for i in (ids if ids is not None else range(len(samples)))]
    audit = QueryAudit(pipeline)  # no isinstance: that would read __class__
    t0 = time.perf_counter()
    outcomes = [attack_sample(audit, row, spec, schema, sid) for sid, row in zip(ids, samples)]
    elapsed = time.perf_counter() - t0
    succ = [o for o in outcomes if o.status == "success"]
    records = [
        {
            "id": o.sample_id,
            "candidate_index": o.candidate_index,
            "queries": o.queries,
            "perturbation": o.perturbation,
            "perturbed_row": o.perturbed_row.tolist(),
            "verified_human": o.verified,
        }
        for o in succ
    ]
    n = len(samples)
    return AttackReport(
        initial_samples=n,
        attackable=sum(o.status != "skipped" for o in outcomes),
        successes=len(succ),
        success_rate=len(succ) / n if n else 0.0,
        per_sample_queries={o.sample_id: o.queries for o in outcomes},
        wall_clock_seconds=elapsed,
        records=records,
        spec=spec.to_dict(),
        audit=audit.summary(),
        statuses={o.sample_id: o.status for o in outcomes},
    )


def select_attack_samples(pipeline, rows, n_each=100, seed=0):
    """Indices of ``n_each`` bot-predicted and ``n_each`` human-predicted rows."""
    rows = np.atleast_2d(rows)
    pred = np.asarray(pipeline.predict(rows))
    rng = np.random.default_rng([seed, 0xA77])
    picked = []
    for cls in (1, 0):
        pool = np.flatnonzero(pred == cls)
        if len(pool) < n_each:
            raise ConfigurationError(
                f"only {len(pool)} rows predicted {'bot' if cls else 'human'}, need {n_each}"
            )
        picked.append(np.sort(rng.choice(pool, n_each, replace=False)))
    return np.concatenate(picked)
