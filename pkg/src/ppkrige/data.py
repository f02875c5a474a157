"""Replicated multivariate point patterns, file ingestion and count functions.

File formats
------------
Event CSV
    Header ``replicate,site,time``. One row per event. A row with an empty
    ``time`` field declares a replicate (and site) without adding an event,
    so replicates with no events anywhere survive a round trip.
Site CSV
    Header ``site,x,y``.
Trip CSV
    Header ``station,start_time`` with ISO-8601 timestamps. Clock times are
    read off the wall clock (any UTC offset is ignored), so daylight-saving
    transitions never shift an event.
Calendar
    One ISO date per line; blank lines and ``#`` comments are ignored.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .basis import TimeDomain


class DataFormatError(ValueError):
    """Malformed or inconsistent input file."""


@dataclass(frozen=True, eq=False)
class SiteSet:
    """Spatial sites with identifiers and planar coordinates."""

    ids: tuple
    coords: np.ndarray
    region: Optional[tuple] = None

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        ids = tuple(str(i) for i in self.ids)
        if len(ids) != len(coords):
            raise ValueError("one identifier per site required")
        if len(set(ids)) != len(ids):
            raise ValueError("site identifiers must be unique")
        if len(coords) > 1 and self.spacing_of(coords) <= 0:
            raise ValueError("site coordinates must be distinct")
        if self.region is not None:
            x0, x1, y0, y1 = self.region
            inside = (coords[:, 0] >= x0) & (coords[:, 0] <= x1) & (coords[:, 1] >= y0) & (coords[:, 1] <= y1)
            if not np.all(inside):
                raise ValueError(f"site {ids[int(np.argmin(inside))]} lies outside region {self.region}")
            object.__setattr__(self, "region", tuple(float(v) for v in self.region))
        coords.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        object.__setattr__(self, "ids", ids)

    @staticmethod
    def spacing_of(coords) -> float:
        diff = coords[:, None, :] - coords[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        np.fill_diagonal(dist, np.inf)
        return float(dist.min())

    @property
    def d(self) -> int:
        return len(self.ids)

    @property
    def spacing(self) -> float:
        """Grid spacing ``min_{j != k} |s_j - s_k|``."""
        return self.spacing_of(self.coords) if self.d > 1 else np.inf

    def bounding_box(self) -> tuple:
        c = self.coords
        return (c[:, 0].min(), c[:, 0].max(), c[:, 1].min(), c[:, 1].max())

    def index(self, site_id: str) -> int:
        try:
            return self.ids.index(str(site_id))
        except ValueError:
            raise KeyError(f"unknown site id {site_id!r}") from None

    def subset(self, keep: Sequence[int]) -> "SiteSet":
        keep = list(keep)
        return SiteSet(tuple(self.ids[i] for i in keep), self.coords[keep], self.region)


@dataclass(frozen=True, eq=False)
class PointPattern:
    """``n`` replicates of event times at ``d`` sites on a common time domain.

    ``events[i][j]`` is the sorted array of event times of replicate ``i``
    at site ``j``. Ties are kept.
    """

    domain: TimeDomain
    sites: SiteSet
    events: tuple
    replicate_labels: Optional[tuple] = None

    def __post_init__(self):
        d = self.sites.d
        reps = []
        for i, row in enumerate(self.events):
            if len(row) != d:
                raise ValueError(f"replicate {i} has {len(row)} sites, expected {d}")
            clean = []
            for j, times in enumerate(row):
                t = np.sort(np.asarray(times, dtype=float).ravel())
                if t.size and not np.all(self.domain.contains(t)):
                    raise ValueError(
                        f"event time outside [{self.domain.a}, {self.domain.b}] "
                        f"in replicate {i}, site {self.sites.ids[j]}"
                    )
                t.setflags(write=False)
                clean.append(t)
            reps.append(tuple(clean))
        if len(reps) < 1:
            raise ValueError("a point pattern needs at least one replicate (n >= 1)")
        labels = self.replicate_labels
        if labels is None:
            labels = tuple(str(i + 1) for i in range(len(reps)))
        elif len(labels) != len(reps):
            raise ValueError("one label per replicate required")
        object.__setattr__(self, "events", tuple(reps))
        object.__setattr__(self, "replicate_labels", tuple(str(x) for x in labels))

    @property
    def n(self) -> int:
        return len(self.events)

    @property
    def d(self) -> int:
        return self.sites.d

    def counts(self) -> np.ndarray:
        """``(n, d)`` matrix of total event counts."""
        return np.array([[len(t) for t in row] for row in self.events], dtype=int)

    def flat(self):
        """``(replicate_index, site_index, time)`` arrays over all events."""
        cnt = self.counts().ravel()
        rep = np.repeat(np.arange(self.n), self.d)
        site = np.tile(np.arange(self.d), self.n)
        times = [t for row in self.events for t in row]
        t = np.concatenate(times) if times else np.empty(0)
        return np.repeat(rep, cnt), np.repeat(site, cnt), t

    def select_sites(self, keep: Sequence[int]) -> "PointPattern":
        keep = list(keep)
        ev = tuple(tuple(row[j] for j in keep) for row in self.events)
        return PointPattern(self.domain, self.sites.subset(keep), ev, self.replicate_labels)

    def select_replicates(self, keep: Sequence[int]) -> "PointPattern":
        keep = list(keep)
        return PointPattern(
            self.domain, self.sites, tuple(self.events[i] for i in keep),
            tuple(self.replicate_labels[i] for i in keep),
        )

    def equals(self, other: "PointPattern") -> bool:
        if (self.domain != other.domain or self.sites.ids != other.sites.ids
                or self.n != other.n or self.replicate_labels != other.replicate_labels):
            return False
        return all(
            np.array_equal(x, y)
            for r1, r2 in zip(self.events, other.events) for x, y in zip(r1, r2)
        )


@dataclass(frozen=True, eq=False)
class CountFunction:
    """Right-continuous step function ``N(t) = sum of weights of jumps at times <= t``.

    Observed counts have unit weights; kriging predictions carry real weights.
    """

    domain: TimeDomain
    times: np.ndarray = field(default_factory=lambda: np.empty(0))
    weights: Optional[np.ndarray] = None

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float).ravel()
        w = np.ones_like(t) if self.weights is None else np.asarray(self.weights, dtype=float).ravel()
        if w.shape != t.shape:
            raise ValueError("one weight per jump time required")
        order = np.argsort(t, kind="stable")
        object.__setattr__(self, "times", t[order])
        object.__setattr__(self, "weights", w[order])

    def __call__(self, t) -> np.ndarray:
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.times, np.asarray(t, dtype=float), side="right")
        return cum[idx]

    @property
    def total(self) -> float:
        return float(self.weights.sum())


def count_function(pattern: PointPattern, i: int, j: int) -> CountFunction:
    """Observed count function of replicate ``i`` at site ``j`` (0-based)."""
    if not (0 <= i < pattern.n and 0 <= j < pattern.d):
        raise IndexError(f"replicate/site index ({i}, {j}) out of range for n={pattern.n}, d={pattern.d}")
    return CountFunction(pattern.domain, pattern.events[i][j])


def read_sites(path, region: Optional[tuple] = None) -> SiteSet:
    """Read a Site CSV (``site,x,y``)."""
    path = Path(path)
    ids, coords = [], []
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["site", "x", "y"]:
            raise DataFormatError(f"{path}: expected header 'site,x,y'")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 3 or not row[1].strip() or not row[2].strip():
                raise DataFormatError(f"{path}:{line}: station {row[0] if row else ''!r} is missing coordinates")
            try:
                coords.append((float(row[1]), float(row[2])))
            except ValueError:
                raise DataFormatError(f"{path}:{line}: non-numeric coordinates {row[1:3]}") from None
            ids.append(row[0].strip())
    return SiteSet(tuple(ids), np.array(coords).reshape(-1, 2), region)


def write_sites(sites: SiteSet, path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["site", "x", "y"])
        for sid, (x, y) in zip(sites.ids, sites.coords):
            w.writerow([sid, repr(float(x)), repr(float(y))])


def ingest_events(path, domain: TimeDomain, sites: SiteSet) -> PointPattern:
    """Read an Event CSV into a :class:`PointPattern`.

    Replicates are indexed densely in order of first appearance.
    """
    path = Path(path)
    per_rep: dict = {}
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:3]] != ["replicate", "site", "time"]:
            raise DataFormatError(f"{path}: expected header 'replicate,site,time'")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise DataFormatError(f"{path}:{line}: expected 3 fields, got {len(row)}")
            rep, site, tstr = (c.strip() for c in row)
            if not rep:
                raise DataFormatError(f"{path}:{line}: empty replicate label")
            try:
                j = sites.index(site)
            except KeyError:
                raise DataFormatError(f"{path}:{line}: unknown site id {site!r}") from None
            bucket = per_rep.setdefault(rep, [[] for _ in range(sites.d)])
            if not tstr:
                continue
            try:
                t = float(tstr)
            except ValueError:
                raise DataFormatError(f"{path}:{line}: malformed time {tstr!r}") from None
            if not (domain.a <= t <= domain.b):
                raise DataFormatError(f"{path}:{line}: time {t} outside domain [{domain.a}, {domain.b}]")
            bucket[j].append(t)
    if not per_rep:
        raise DataFormatError(f"{path}: no replicates found (n >= 1 required)")
    events = tuple(tuple(np.array(v) for v in per_rep[r]) for r in per_rep)
    return PointPattern(domain, sites, events, tuple(per_rep))


def write_events(pattern: PointPattern, path) -> None:
    """Write a pattern as Event CSV; empty (replicate, site) cells become declaration rows."""
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["replicate", "site", "time"])
        for label, row in zip(pattern.replicate_labels, pattern.events):
            for sid, times in zip(pattern.sites.ids, row):
                if times.size == 0:
                    w.writerow([label, sid, ""])
                for t in times:
                    w.writerow([label, sid, repr(float(t))])


def read_calendar(path) -> list:
    path = Path(path)
    days = []
    for line, raw in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        text = raw.split("#", 1)[0].strip()
        if not text:
            continue
        try:
            days.append(dt.date.fromisoformat(text))
        except ValueError:
            raise DataFormatError(f"{path}:{line}: not an ISO date: {text!r}") from None
    return sorted(set(days))


def clock_hours(stamp: dt.datetime) -> float:
    """Wall-clock time of day in fractional hours."""
    return stamp.hour + stamp.minute / 60.0 + (stamp.second + stamp.microsecond / 1e6) / 3600.0


def ingest_trips(trip_file, site_file, calendar_file, region: Optional[tuple] = None) -> PointPattern:
    """Turn trip records into a daily replicated pattern of check-out times.

    Every calendar date becomes a replicate (dates without trips included);
    trips on other dates and at stations absent from the site file are
    dropped. Times are clock hours in ``[0, 24]``.
    """
    sites = read_sites(site_file, region)
    days = read_calendar(calendar_file)
    if not days:
        raise DataFormatError(f"{calendar_file}: calendar lists no dates (n >= 1 required)")
    day_index = {day: i for i, day in enumerate(days)}
    site_index = {sid: j for j, sid in enumerate(sites.ids)}
    buckets = [[[] for _ in range(sites.d)] for _ in days]
    trip_file = Path(trip_file)
    with trip_file.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header[:2]] != ["station", "start_time"]:
            raise DataFormatError(f"{trip_file}: expected header 'station,start_time'")
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) < 2:
                raise DataFormatError(f"{trip_file}:{line}: expected 2 fields")
            station, stamp = row[0].strip(), row[1].strip()
            try:
                when = dt.datetime.fromisoformat(stamp)
            except ValueError:
                raise DataFormatError(f"{trip_file}:{line}: cannot parse timestamp {stamp!r}") from None
            i = day_index.get(when.date())
            j = site_index.get(station)
            if i is None or j is None:
                continue
            buckets[i][j].append(clock_hours(when))
    events = tuple(tuple(np.array(v) for v in row) for row in buckets)
    return PointPattern(TimeDomain(0.0, 24.0), sites, events, tuple(d.isoformat() for d in days))
