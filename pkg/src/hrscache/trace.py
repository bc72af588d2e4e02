"""Request-log ingestion, negative-event synthesis and forward-chaining folds.

Input CSV schema: header ``video_id,user_id,time,province,city`` where
``time`` is epoch seconds or ISO-8601.  Times are rebased so the earliest
event is 0 and expressed in hours; video ids are densified to [0, C).
"""

from __future__ import annotations

import csv
import io
import json
import os
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

__all__ = [
    "RequestEvent",
    "NegativeEvent",
    "TraceDataset",
    "FoldSplit",
    "TraceError",
    "parse_trace",
    "generate_negatives",
    "split_forward_chaining",
    "serialize_dataset",
    "load_dataset",
]

DEFAULT_COLUMNS = {
    "video_id": "video_id",
    "user_id": "user_id",
    "time": "time",
    "province": "province",
    "city": "city",
}

COLD_PERIOD_HOURS = 12.0


class TraceError(ValueError):
    pass


@dataclass(frozen=True)
class RequestEvent:
    video_id: int
    user_id: str
    time: float  # hours since dataset epoch
    city: str = ""


@dataclass(frozen=True)
class NegativeEvent:
    video_id: int
    time: float


@dataclass
class TraceDataset:
    """Time-sorted events over the window (t_start, horizon]."""

    events: list[RequestEvent]
    negatives: list[NegativeEvent]
    catalog_size: int
    horizon: float
    epoch: float = 0.0  # epoch seconds corresponding to time 0
    t_start: float = 0.0
    id_map: dict = field(default_factory=dict)  # original id -> dense index

    def __post_init__(self):
        times = [e.time for e in self.events]
        if any(t2 < t1 for t1, t2 in zip(times, times[1:])):
            raise TraceError("events must be sorted by time")
        if times and (times[0] < 0 or not np.isfinite(times[0])):
            raise TraceError("event times must be finite and >= 0")
        if times and times[-1] > self.horizon + 1e-9:
            raise TraceError("event time beyond horizon")
        if self.events and self.catalog_size <= max(e.video_id for e in self.events):
            raise TraceError("catalog_size smaller than max video id + 1")
        ntimes = [n.time for n in self.negatives]
        if any(t2 < t1 for t1, t2 in zip(ntimes, ntimes[1:])):
            raise TraceError("negatives must be sorted by time")

    # -- array views -----------------------------------------------------

    def times(self) -> np.ndarray:
        return np.array([e.time for e in self.events], dtype=float)

    def video_ids(self) -> np.ndarray:
        return np.array([e.video_id for e in self.events], dtype=np.int64)

    def negative_times(self) -> np.ndarray:
        return np.array([n.time for n in self.negatives], dtype=float)

    def negative_video_ids(self) -> np.ndarray:
        return np.array([n.video_id for n in self.negatives], dtype=np.int64)

    @property
    def duration(self) -> float:
        return self.horizon - self.t_start

    def restrict(self, lo: float, hi: float, closed_right: bool = False) -> "TraceDataset":
        """Sub-dataset with events in [lo, hi) (or [lo, hi] if closed_right)."""
        def keep(t):
            return lo <= t < hi or (closed_right and t == hi)
        return TraceDataset(
            events=[e for e in self.events if keep(e.time)],
            negatives=[n for n in self.negatives if keep(n.time)],
            catalog_size=self.catalog_size,
            horizon=hi,
            epoch=self.epoch,
            t_start=lo,
            id_map=self.id_map,
        )


@dataclass
class FoldSplit:
    train: TraceDataset
    validation: TraceDataset
    test: TraceDataset
    fold_index: int


def _parse_time_seconds(raw: str) -> float:
    raw = raw.strip()
    try:
        return float(raw)
    except ValueError:
        pass
    try:
        dt = datetime.fromisoformat(raw)
    except ValueError as e:
        raise TraceError(f"unparseable time {raw!r}") from e
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.timestamp()


def parse_trace(source, schema: dict | None = None) -> TraceDataset:
    """Parse a request-log CSV (path, file object, or bytes).

    Raises TraceError naming the line number on malformed rows and
    "no events" on an empty file.
    """
    columns = dict(DEFAULT_COLUMNS)
    if schema:
        columns.update(schema)

    if isinstance(source, (str, os.PathLike)):
        fh = open(source, "r", newline="")
        close = True
    elif isinstance(source, bytes):
        fh = io.StringIO(source.decode("utf-8"))
        close = False
    else:
        fh = source
        close = False
    try:
        reader = csv.DictReader(fh)
        rows = []
        for lineno, row in enumerate(reader, start=2):
            try:
                vid = row[columns["video_id"]]
                uid = row.get(columns["user_id"], "") or ""
                secs = _parse_time_seconds(row[columns["time"]])
                city = row.get(columns["city"], "") or ""
            except (KeyError, TypeError) as e:
                raise TraceError(f"malformed row at line {lineno}: {e}") from e
            except TraceError as e:
                raise TraceError(f"malformed row at line {lineno}: {e}") from e
            rows.append((secs, vid, uid, city))
    finally:
        if close:
            fh.close()

    if not rows:
        raise TraceError("no events")

    epoch = min(r[0] for r in rows)
    rows.sort(key=lambda r: r[0])  # stable: preserves input order within ties
    id_map: dict = {}
    events = []
    for secs, vid, uid, city in rows:
        if vid not in id_map:
            id_map[vid] = len(id_map)
        events.append(RequestEvent(video_id=id_map[vid], user_id=uid,
                                   time=(secs - epoch) / 3600.0, city=city))
    horizon = events[-1].time
    return TraceDataset(events=events, negatives=[], catalog_size=len(id_map),
                        horizon=horizon, epoch=epoch, id_map=id_map)


def generate_negatives(ds: TraceDataset,
                       cold_period: float = COLD_PERIOD_HOURS) -> TraceDataset:
    """Mark one negative event per maximal cold gap.

    For each video and each gap between consecutive requests (and between
    the last request and the horizon) longer than ``cold_period``, one
    negative is placed at gap_start + cold_period.  Existing negatives are
    kept; duplicates are not re-added, so the operation is idempotent.
    """
    if cold_period <= 0:
        raise TraceError("cold_period must be positive")
    per_video: dict[int, list[float]] = {}
    for e in ds.events:
        per_video.setdefault(e.video_id, []).append(e.time)

    existing = {(n.video_id, n.time) for n in ds.negatives}
    fresh = []
    for vid, ts in per_video.items():
        bounds = ts + [ds.horizon]
        for a, b in zip(ts, bounds[1:]):
            if b - a > cold_period:
                key = (vid, a + cold_period)
                if key not in existing:
                    existing.add(key)
                    fresh.append(NegativeEvent(video_id=vid, time=key[1]))
    negatives = sorted(ds.negatives + fresh, key=lambda n: (n.time, n.video_id))
    return TraceDataset(events=ds.events, negatives=negatives,
                        catalog_size=ds.catalog_size, horizon=ds.horizon,
                        epoch=ds.epoch, t_start=ds.t_start, id_map=ds.id_map)


def split_forward_chaining(ds: TraceDataset, parts: int = 5,
                           fold: int = 1) -> FoldSplit:
    """Fold 1: train=part 1, val=part 2, test=part 3; fold 2 shifts one part
    with a cumulative training set; fold 3 likewise."""
    if fold not in (1, 2, 3):
        raise TraceError(f"fold must be 1..3, got {fold}")
    if parts < fold + 2:
        raise TraceError("not enough parts for the requested fold")
    length = (ds.horizon - ds.t_start) / parts
    edges = [ds.t_start + k * length for k in range(parts + 1)]
    edges[-1] = ds.horizon

    train = ds.restrict(edges[0], edges[fold])
    val = ds.restrict(edges[fold], edges[fold + 1])
    test = ds.restrict(edges[fold + 1], edges[fold + 2],
                       closed_right=(fold + 2 == parts))
    return FoldSplit(train=train, validation=val, test=test, fold_index=fold)


# --- on-disk format ---------------------------------------------------------

EVENTS_CSV = "events.csv"
NEGATIVES_CSV = "negatives.csv"
META_JSON = "meta.json"


def serialize_dataset(ds: TraceDataset, outdir: str) -> None:
    os.makedirs(outdir, exist_ok=True)
    with open(os.path.join(outdir, EVENTS_CSV), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["video_id", "user_id", "time", "province", "city"])
        for e in ds.events:
            w.writerow([e.video_id, e.user_id,
                        "%.17g" % (ds.epoch + e.time * 3600.0), "", e.city])
    with open(os.path.join(outdir, NEGATIVES_CSV), "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["video_id", "time_hours"])
        for n in ds.negatives:
            w.writerow([n.video_id, "%.17g" % n.time])
    meta = {
        "catalog_size": ds.catalog_size,
        "horizon": ds.horizon,
        "epoch": ds.epoch,
        "t_start": ds.t_start,
        "id_map": {str(k): v for k, v in ds.id_map.items()},
    }
    with open(os.path.join(outdir, META_JSON), "w") as f:
        json.dump(meta, f, indent=2, sort_keys=True)
        f.write("\n")


def load_dataset(indir: str) -> TraceDataset:
    with open(os.path.join(indir, META_JSON)) as f:
        meta = json.load(f)
    events = []
    with open(os.path.join(indir, EVENTS_CSV), newline="") as f:
        for row in csv.DictReader(f):
            events.append(RequestEvent(
                video_id=int(row["video_id"]), user_id=row["user_id"],
                time=(float(row["time"]) - meta["epoch"]) / 3600.0,
                city=row["city"]))
    events.sort(key=lambda e: e.time)
    negatives = []
    with open(os.path.join(indir, NEGATIVES_CSV), newline="") as f:
        for row in csv.DictReader(f):
            negatives.append(NegativeEvent(video_id=int(row["video_id"]),
                                           time=float(row["time_hours"])))
    negatives.sort(key=lambda n: (n.time, n.video_id))
    return TraceDataset(events=events, negatives=negatives,
                        catalog_size=meta["catalog_size"],
                        horizon=meta["horizon"], epoch=meta["epoch"],
                        t_start=meta.get("t_start", 0.0),
                        id_map=meta["id_map"])
