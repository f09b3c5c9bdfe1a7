"""Aggregated origin-destination lookup tables.

Trip observations recorded during an iteration are averaged per (mode,
origin TAZ, destination TAZ, hour bin) when the iteration is finalized;
next-iteration planning reads the finalized table.  Ride-hail wait and
parking cost/walk skims are single-zone tables on the same cycle.
Tables export to long-format gzipped CSV and import back losslessly for
warm starts.
"""

from __future__ import annotations

import csv
import gzip
import math
from dataclasses import dataclass, replace

from . import outputs
from pathlib import Path

HOUR = 3600.0

DEFAULT_SPEED_MPS = {
    "WALK": 1.4,
    "BIKE": 4.0,
    "WALK_TRANSIT": 5.0,
    "BIKE_TRANSIT": 5.0,
    "DRIVE_TRANSIT": 6.0,
    "RIDE_HAIL_TRANSIT": 6.0,
}
FALLBACK_SPEED_MPS = 8.3  # car-family default


@dataclass
class TripObservation:
    mode: str
    origin_taz: str
    dest_taz: str
    depart_time: float
    time_s: float
    cost_usd: float = 0.0
    distance_m: float = 0.0
    transfers: int = 0


@dataclass
class ODSkimEntry:
    mode: str
    origin_taz: str
    dest_taz: str
    hour: int
    mean_time: float
    mean_cost: float
    mean_distance: float
    mean_transfers: float
    observations: int
    fallback: bool = False


@dataclass
class RideHailSkimEntry:
    origin_taz: str
    hour: int
    mean_wait: float
    cost_per_mile: float
    unmatched_fraction: float
    observations: int = 0
    fallback: bool = False


@dataclass
class ParkingSkimEntry:
    dest_taz: str
    hour: int
    mean_cost: float
    mean_walk_m: float
    observations: int = 0
    fallback: bool = False


class Skims:
    """Accumulate within an iteration, finalize into the read table."""

    def __init__(self, taz_centroids: dict[str, tuple[float, float]] | None = None,
                 carry_decay: float = 0.0,
                 default_wait_s: float = 300.0,
                 default_cost_per_mile: float = 2.0,
                 default_parking_cost: float = 0.0):
        self.taz_centroids = taz_centroids or {}
        self.carry_decay = carry_decay
        self.default_wait_s = default_wait_s
        self.default_cost_per_mile = default_cost_per_mile
        self.default_parking_cost = default_parking_cost
        # finalized tables
        self.od: dict[tuple, ODSkimEntry] = {}
        self.ridehail: dict[tuple, RideHailSkimEntry] = {}
        self.parking: dict[tuple, ParkingSkimEntry] = {}
        # running sums for the current iteration
        self._od_acc: dict[tuple, list[float]] = {}
        self._rh_acc: dict[tuple, list[float]] = {}
        self._pk_acc: dict[tuple, list[float]] = {}

    # -- recording ---------------------------------------------------------

    def record(self, obs: TripObservation) -> None:
        key = (obs.mode, obs.origin_taz, obs.dest_taz, int(obs.depart_time // HOUR))
        acc = self._od_acc.setdefault(key, [0.0, 0.0, 0.0, 0.0, 0])
        acc[0] += obs.time_s
        acc[1] += obs.cost_usd
        acc[2] += obs.distance_m
        acc[3] += obs.transfers
        acc[4] += 1

    def record_ridehail(self, origin_taz: str, request_time: float,
                        wait_s: float | None, cost_per_mile: float | None = None) -> None:
        """One ride-hail request; wait None means the request went unmatched."""
        key = (origin_taz, int(request_time // HOUR))
        acc = self._rh_acc.setdefault(key, [0.0, 0.0, 0, 0, 0])
        if wait_s is None:
            acc[2] += 1  # unmatched
        else:
            acc[0] += wait_s
            if cost_per_mile is not None:
                acc[1] += cost_per_mile
                acc[4] += 1
            acc[3] += 1  # matched

    def record_parking(self, dest_taz: str, arrive_time: float,
                       cost_usd: float, walk_m: float) -> None:
        key = (dest_taz, int(arrive_time // HOUR))
        acc = self._pk_acc.setdefault(key, [0.0, 0.0, 0])
        acc[0] += cost_usd
        acc[1] += walk_m
        acc[2] += 1

    # -- finalize ----------------------------------------------------------

    def finalize_iteration(self) -> None:
        """Replace observed cells with this iteration's means; carry the
        rest forward, decayed toward the distance fallback when a decay
        factor is set (0 keeps them unchanged)."""
        new_od = {}
        for key, entry in self.od.items():
            if key in self._od_acc:
                continue
            if self.carry_decay > 0:
                est = self._od_fallback(*key)
                d = self.carry_decay
                entry = replace(
                    entry,
                    mean_time=(1 - d) * entry.mean_time + d * est.mean_time,
                    mean_cost=(1 - d) * entry.mean_cost + d * est.mean_cost,
                )
            new_od[key] = entry
        for key, (t, c, dist, x, n) in self._od_acc.items():
            mode, o, dd, hour = key
            new_od[key] = ODSkimEntry(mode, o, dd, hour, t / n, c / n,
                                      dist / n, x / n, n)
        self.od = new_od
        self._od_acc = {}

        new_rh = dict(self.ridehail)
        for key, (wait, cpm, unmatched, matched, cpm_n) in self._rh_acc.items():
            total = matched + unmatched
            new_rh[key] = RideHailSkimEntry(
                key[0], key[1],
                wait / matched if matched else self.default_wait_s,
                cpm / cpm_n if cpm_n else self.default_cost_per_mile,
                unmatched / total if total else 0.0,
                observations=total)
        self.ridehail = new_rh
        self._rh_acc = {}

        new_pk = dict(self.parking)
        for key, (c, w, n) in self._pk_acc.items():
            new_pk[key] = ParkingSkimEntry(key[0], key[1], c / n, w / n, n)
        self.parking = new_pk
        self._pk_acc = {}

    # -- lookup ------------------------------------------------------------

    def _centroid_distance(self, o: str, d: str) -> float:
        if o == d:
            return 0.0
        co = self.taz_centroids.get(o)
        cd = self.taz_centroids.get(d)
        if co is None or cd is None:
            return 0.0
        return math.hypot(co[0] - cd[0], co[1] - cd[1])

    def _od_fallback(self, mode: str, o: str, d: str, hour: int) -> ODSkimEntry:
        dist = self._centroid_distance(o, d)
        speed = DEFAULT_SPEED_MPS.get(mode, FALLBACK_SPEED_MPS)
        time = max(dist / speed, 60.0 if o != d else 0.0)
        return ODSkimEntry(mode, o, d, hour, time, 0.0, dist, 0.0, 0, fallback=True)

    def lookup(self, mode: str, origin_taz: str, dest_taz: str, hour: int) -> ODSkimEntry:
        entry = self.od.get((mode, origin_taz, dest_taz, hour))
        if entry is not None:
            return entry
        # same cell, any hour: observation-weighted mean
        hits = [e for (m, o, d, _h), e in self.od.items()
                if (m, o, d) == (mode, origin_taz, dest_taz)]
        if hits:
            n = sum(e.observations for e in hits)
            return ODSkimEntry(
                mode, origin_taz, dest_taz, hour,
                sum(e.mean_time * e.observations for e in hits) / n,
                sum(e.mean_cost * e.observations for e in hits) / n,
                sum(e.mean_distance * e.observations for e in hits) / n,
                sum(e.mean_transfers * e.observations for e in hits) / n,
                0, fallback=True)
        return self._od_fallback(mode, origin_taz, dest_taz, hour)

    def lookup_ridehail(self, origin_taz: str, hour: int) -> RideHailSkimEntry:
        entry = self.ridehail.get((origin_taz, hour))
        if entry is not None:
            return entry
        hits = [e for (o, _h), e in self.ridehail.items() if o == origin_taz]
        if hits:
            n = max(1, sum(e.observations for e in hits))
            return RideHailSkimEntry(
                origin_taz, hour,
                sum(e.mean_wait * e.observations for e in hits) / n,
                sum(e.cost_per_mile * e.observations for e in hits) / n,
                sum(e.unmatched_fraction * e.observations for e in hits) / n,
                0, fallback=True)
        return RideHailSkimEntry(origin_taz, hour, self.default_wait_s,
                                 self.default_cost_per_mile, 0.0, 0, fallback=True)

    def lookup_parking(self, dest_taz: str, hour: int) -> ParkingSkimEntry:
        entry = self.parking.get((dest_taz, hour))
        if entry is not None:
            return entry
        hits = [e for (d, _h), e in self.parking.items() if d == dest_taz]
        if hits:
            n = max(1, sum(e.observations for e in hits))
            return ParkingSkimEntry(
                dest_taz, hour,
                sum(e.mean_cost * e.observations for e in hits) / n,
                sum(e.mean_walk_m * e.observations for e in hits) / n,
                0, fallback=True)
        return ParkingSkimEntry(dest_taz, hour, self.default_parking_cost,
                                0.0, 0, fallback=True)

    # -- warm start --------------------------------------------------------

    def export(self, dirpath: str | Path) -> None:
        dirpath = Path(dirpath)
        dirpath.mkdir(parents=True, exist_ok=True)
        with outputs.gzip_text_writer(dirpath / "skims_od.csv.gz") as fh:
            w = csv.writer(fh)
            w.writerow(["mode", "origin_taz", "dest_taz", "hour", "mean_time",
                        "mean_cost", "mean_distance", "mean_transfers", "observations"])
            for key in sorted(self.od):
                e = self.od[key]
                w.writerow([e.mode, e.origin_taz, e.dest_taz, e.hour,
                            repr(e.mean_time), repr(e.mean_cost),
                            repr(e.mean_distance), repr(e.mean_transfers),
                            e.observations])
        with outputs.gzip_text_writer(dirpath / "skims_ridehail.csv.gz") as fh:
            w = csv.writer(fh)
            w.writerow(["origin_taz", "hour", "mean_wait", "cost_per_mile",
                        "unmatched_fraction", "observations"])
            for key in sorted(self.ridehail):
                e = self.ridehail[key]
                w.writerow([e.origin_taz, e.hour, repr(e.mean_wait),
                            repr(e.cost_per_mile), repr(e.unmatched_fraction),
                            e.observations])
        with outputs.gzip_text_writer(dirpath / "skims_parking.csv.gz") as fh:
            w = csv.writer(fh)
            w.writerow(["dest_taz", "hour", "mean_cost", "mean_walk_m", "observations"])
            for key in sorted(self.parking):
                e = self.parking[key]
                w.writerow([e.dest_taz, e.hour, repr(e.mean_cost),
                            repr(e.mean_walk_m), e.observations])

    def import_tables(self, dirpath: str | Path) -> None:
        dirpath = Path(dirpath)
        with gzip.open(dirpath / "skims_od.csv.gz", "rt", newline="") as fh:
            self.od = {}
            for row in csv.DictReader(fh):
                e = ODSkimEntry(row["mode"], row["origin_taz"], row["dest_taz"],
                                int(row["hour"]), float(row["mean_time"]),
                                float(row["mean_cost"]), float(row["mean_distance"]),
                                float(row["mean_transfers"]), int(row["observations"]))
                self.od[(e.mode, e.origin_taz, e.dest_taz, e.hour)] = e
        path = dirpath / "skims_ridehail.csv.gz"
        if path.exists():
            with gzip.open(path, "rt", newline="") as fh:
                self.ridehail = {}
                for row in csv.DictReader(fh):
                    e = RideHailSkimEntry(row["origin_taz"], int(row["hour"]),
                                          float(row["mean_wait"]),
                                          float(row["cost_per_mile"]),
                                          float(row["unmatched_fraction"]),
                                          int(row["observations"]))
                    self.ridehail[(e.origin_taz, e.hour)] = e
        path = dirpath / "skims_parking.csv.gz"
        if path.exists():
            with gzip.open(path, "rt", newline="") as fh:
                self.parking = {}
                for row in csv.DictReader(fh):
                    e = ParkingSkimEntry(row["dest_taz"], int(row["hour"]),
                                         float(row["mean_cost"]),
                                         float(row["mean_walk_m"]),
                                         int(row["observations"]))
                    self.parking[(e.dest_taz, e.hour)] = e
