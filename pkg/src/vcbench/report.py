"""Cross-session aggregation and plot-data emission.

Every analysis command writes a JSON document carrying the schema version,
optional session metadata and a flat ``metrics`` mapping.  Documents sharing
a session id are merged before grouping.
"""

from __future__ import annotations

import csv
import datetime as _dt
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import EmptySamples, KeyMismatch, SchemaMismatch

SCHEMA_VERSION = "vcbench/1"
TIMESTAMP_FIELD = "generated_at"
GROUP_FIELDS = {"platform": "platform", "n": "n", "scenario": "scenario", "session": "session_id"}


def stamp(doc: dict) -> dict:
    """Attach the schema version and a generation timestamp to an output document."""
    out = {"schema": SCHEMA_VERSION}
    out.update(doc)
    out[TIMESTAMP_FIELD] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    return out


def strip_timestamps(doc):
    if isinstance(doc, dict):
        return {k: strip_timestamps(v) for k, v in doc.items() if k != TIMESTAMP_FIELD}
    if isinstance(doc, list):
        return [strip_timestamps(v) for v in doc]
    return doc


def emit_cdf(samples: Iterable[float], path) -> list[tuple[float, float]]:
    """Write ``value,fraction`` rows, fraction i/n at the i-th smallest value."""
    values = sorted(float(s) for s in samples)
    if not values:
        raise EmptySamples("cannot emit a CDF of zero samples")
    n = len(values)
    rows = [(v, (i + 1) / n) for i, v in enumerate(values)]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["value", "fraction"])
        writer.writerows((repr(v), repr(f)) for v, f in rows)
    return rows


@dataclass(frozen=True)
class MetricAggregate:
    mean: float
    stddev: float
    count: int

    def to_dict(self):
        return {"mean": self.mean, "stddev": self.stddev, "count": self.count}


def mean_std(values: Sequence[float]) -> MetricAggregate:
    arr = np.asarray(sorted(values), dtype=np.float64)
    mean = float(np.mean(arr))
    return MetricAggregate(mean, float(np.sqrt(np.mean((arr - mean) ** 2))), len(arr))


@dataclass
class Report:
    group_by: tuple[str, ...]
    sessions: list[dict] = field(default_factory=list)
    aggregates: dict = field(default_factory=dict)
    lag_samples: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        groups = []
        for key in sorted(self.aggregates, key=lambda k: tuple(str(x) for x in k)):
            groups.append({
                "group": dict(zip(self.group_by, key)),
                "sessions": self.session_counts[key],
                "metrics": {m: a.to_dict() for m, a in sorted(self.aggregates[key].items())},
            })
        return {"group_by": list(self.group_by), "sessions": self.sessions, "groups": groups}

    @property
    def session_counts(self) -> dict:
        counts = {}
        for s in self.sessions:
            key = self.key_of(s)
            counts[key] = counts.get(key, 0) + 1
        return counts

    def key_of(self, session: dict) -> tuple:
        meta = session.get("session", {})
        return tuple(meta.get(GROUP_FIELDS[g]) for g in self.group_by)


def merge_sessions(results: Iterable[dict]) -> list[dict]:
    """Combine analysis documents that describe the same session id."""
    merged: dict = {}
    order = []
    for doc in results:
        if doc.get("schema") != SCHEMA_VERSION:
            raise SchemaMismatch(f"expected schema {SCHEMA_VERSION!r}, got {doc.get('schema')!r}")
        meta = dict(doc.get("session") or {})
        sid = meta.get("session_id")
        if sid is None:
            sid = f"_anon{len(order)}"
            meta["session_id"] = sid
        if sid not in merged:
            merged[sid] = {"session": meta, "metrics": {}, "lag_samples_ms": []}
            order.append(sid)
        entry = merged[sid]
        for k, v in meta.items():
            entry["session"].setdefault(k, v)
        for k, v in (doc.get("metrics") or {}).items():
            if v is not None:
                entry["metrics"][k] = float(v)
        if doc.get("kind") == "lag":
            entry["lag_samples_ms"].extend(doc.get("samples", []))
    return [merged[s] for s in order]


def aggregate(results: Iterable[dict], group_by: Sequence[str] = ("platform", "n")) -> Report:
    """Mean and population standard deviation of every metric per group."""
    for g in group_by:
        if g not in GROUP_FIELDS:
            raise ValueError(f"cannot group by {g!r}; choose from {sorted(GROUP_FIELDS)}")
    report = Report(tuple(group_by), merge_sessions(results))
    values: dict = {}
    for s in report.sessions:
        key = report.key_of(s)
        bucket = values.setdefault(key, {})
        for m, v in s["metrics"].items():
            bucket.setdefault(m, []).append(v)
        report.lag_samples.setdefault(key, []).extend(s["lag_samples_ms"])
    report.aggregates = {k: {m: mean_std(v) for m, v in ms.items()} for k, ms in values.items()}
    return report


def qoe_delta(low_motion: Report, high_motion: Report) -> dict:
    """Per-group, per-metric reduction of the mean from low- to high-motion sessions."""
    if set(low_motion.aggregates) != set(high_motion.aggregates):
        raise KeyMismatch(
            f"group keys differ: {sorted(map(str, low_motion.aggregates))} vs {sorted(map(str, high_motion.aggregates))}"
        )
    out = {}
    for key, low in low_motion.aggregates.items():
        high = high_motion.aggregates[key]
        out[key] = {m: low[m].mean - high[m].mean for m in sorted(set(low) & set(high))}
    return out


def finite_or_none(x):
    return x if x is not None and math.isfinite(x) else None
