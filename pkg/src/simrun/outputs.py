"""Event log and analysis outputs.

Every state change in the simulation day is an event row; the summary
metrics, mode split series and VMT/PMT aggregates here are pure
functions of that log, so they can be recomputed offline from the
written files and must come out identical.
"""

from __future__ import annotations

import csv
import gzip
import io
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path

EVENT_TYPES = {
    "PathTraversal", "ModeChoice", "Replanning", "ReservesParking",
    "ChargingPlugIn", "ChargingPlugOut", "PersonEntersVehicle",
    "PersonLeavesVehicle", "ActivityStart", "ActivityEnd",
}

METERS_PER_MILE = 1609.34


@dataclass
class SimEvent:
    time: float
    type: str
    attributes: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.type not in EVENT_TYPES:
            raise ValueError(f"unknown event type {self.type!r}")
        if self.time < 0:
            raise ValueError("event before simulation start")


class EventLog:
    """Buffered collector; rows keep a sequence number so equal-time
    events replay in emission order."""

    def __init__(self):
        self.events: list[SimEvent] = []

    def emit(self, time: float, type: str, **attributes) -> SimEvent:
        ev = SimEvent(time, type, attributes)
        self.events.append(ev)
        return ev

    def sorted(self) -> list[SimEvent]:
        return [e for _, e in
                sorted(enumerate(self.events), key=lambda p: (p[1].time, p[0]))]


def gzip_text_writer(path):
    """Gzip text stream with a zeroed header timestamp, so identical
    content produces identical bytes across runs."""
    return io.TextIOWrapper(gzip.GzipFile(path, "wb", mtime=0), newline="")


def write_events(events: list[SimEvent], path: str | Path) -> None:
    """One CSV row per event, time-sorted, columns unioned over all
    attribute keys; gzipped when the filename ends in .gz."""
    path = Path(path)
    ordered = [e for _, e in sorted(enumerate(events), key=lambda p: (p[1].time, p[0]))]
    keys = sorted({k for e in ordered for k in e.attributes})
    opener = gzip_text_writer if path.suffix == ".gz" else lambda p: open(p, "w", newline="")
    with opener(path) as fh:
        w = csv.writer(fh)
        w.writerow(["time", "type"] + keys)
        for e in ordered:
            w.writerow([repr(e.time), e.type]
                       + [_cell(e.attributes.get(k)) for k in keys])


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value)
    return str(value)


def read_events(path: str | Path) -> list[SimEvent]:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    out = []
    with opener(path, "rt", newline="") as fh:
        for row in csv.DictReader(fh):
            attrs = {k: v for k, v in row.items()
                     if k not in ("time", "type") and v != ""}
            out.append(SimEvent(float(row["time"]), row["type"], attrs))
    return out


# --------------------------------------------------------------------------
# summary metrics


def _f(attrs: dict, key: str, default: float = 0.0) -> float:
    v = attrs.get(key)
    return float(v) if v not in (None, "") else default


def summarize(events: list[SimEvent], iteration: int) -> dict:
    """Per-iteration metric row computed from the event log alone."""
    rh_requests = rh_matched = rh_unmatched = 0
    rh_wait_sum = 0.0
    fuel_j: Counter = Counter()
    delay_s = 0.0
    crowded_s = 0.0
    stuck = 0
    # stable time sort so accumulation order (and hence float rounding)
    # matches a replay of the written, time-sorted log
    for e in sorted(events, key=lambda e: e.time):
        if e.type == "ModeChoice":
            if e.attributes.get("mode", "").startswith("RIDE_HAIL"):
                rh_requests += 1
        elif e.type == "Replanning":
            if e.attributes.get("reason") == "ride_hail_unmatched":
                rh_unmatched += 1
            if e.attributes.get("reason") == "stuck":
                stuck += 1
        elif e.type == "PersonEntersVehicle":
            wait = e.attributes.get("wait_s")
            if wait not in (None, "") and str(e.attributes.get("vehicle", "")).startswith("rh"):
                rh_matched += 1
                rh_wait_sum += float(wait)
        elif e.type == "PathTraversal":
            attrs = e.attributes
            fuel_type = attrs.get("fuel_type")
            if fuel_type:
                fuel_j[fuel_type] += _f(attrs, "fuel_j")
            mode = attrs.get("mode", "")
            if mode in ("CAR", "CAV", "RIDE_HAIL", "RIDE_HAIL_POOLED"):
                duration = _f(attrs, "end_time") - _f(attrs, "start_time")
                delay_s += max(0.0, duration - _f(attrs, "free_flow_s", duration))
            if mode == "TRANSIT":
                occupants = _f(attrs, "occupants")
                seats = _f(attrs, "seats", occupants)
                if occupants > seats:
                    duration = _f(attrs, "end_time") - _f(attrs, "start_time")
                    crowded_s += (occupants - seats) * duration
    return {
        "iteration": iteration,
        "ridehail_requests": rh_requests,
        "ridehail_unmatched_fraction":
            rh_unmatched / rh_requests if rh_requests else 0.0,
        "ridehail_no_requests": rh_requests == 0,
        "ridehail_mean_wait_min":
            rh_wait_sum / rh_matched / 60.0 if rh_matched else 0.0,
        "fuel_gj": {ft: j / 1e9 for ft, j in sorted(fuel_j.items())},
        "total_vehicle_delay_hours": delay_s / 3600.0,
        "crowded_transit_hours": crowded_s / 3600.0,
        "stuck_agents": stuck,
    }


def write_summary(rows: list[dict], path: str | Path) -> None:
    fuel_types = sorted({ft for row in rows for ft in row["fuel_gj"]})
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "ridehail_requests", "ridehail_unmatched_fraction",
                    "ridehail_mean_wait_min", "total_vehicle_delay_hours",
                    "crowded_transit_hours", "stuck_agents"]
                   + [f"fuel_gj_{ft}" for ft in fuel_types])
        for row in rows:
            w.writerow([row["iteration"], row["ridehail_requests"],
                        row["ridehail_unmatched_fraction"],
                        row["ridehail_mean_wait_min"],
                        row["total_vehicle_delay_hours"],
                        row["crowded_transit_hours"], row["stuck_agents"]]
                       + [row["fuel_gj"].get(ft, 0.0) for ft in fuel_types])


# --------------------------------------------------------------------------
# mode split


def mode_split(events: list[SimEvent]) -> Counter:
    """Completed-trip counts by chosen mode for one iteration's log."""
    return Counter(e.attributes["mode"] for e in events if e.type == "ModeChoice")


def write_mode_split_series(series: list[Counter], path: str | Path) -> None:
    """(iteration, mode, trips) long CSV over all iterations."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "mode", "trips"])
        for it, counts in enumerate(series):
            for mode in sorted(counts):
                w.writerow([it, mode, counts[mode]])


def plot_mode_split_series(series: list[Counter], path: str | Path) -> None:
    """Trips-by-mode-per-iteration line chart rendered to an image file."""
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    modes = sorted({m for counts in series for m in counts})
    fig, ax = plt.subplots(figsize=(8, 5))
    xs = range(len(series))
    for mode in modes:
        ax.plot(xs, [counts.get(mode, 0) for counts in series],
                marker="o", label=mode)
    ax.set_xlabel("iteration")
    ax.set_ylabel("completed trips")
    ax.set_title("Mode split by iteration")
    ax.legend(loc="best", fontsize="small")
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)


# --------------------------------------------------------------------------
# distance aggregates


def vmt_pmt(events: list[SimEvent], group_by: str = "mode") -> dict:
    """Vehicle and passenger miles traveled from PathTraversal events.

    group_by is an attribute name ('mode', 'vehicle_type', ...) or 'hour'.
    """
    out: dict = {}
    for e in events:
        if e.type != "PathTraversal":
            continue
        if group_by == "hour":
            key = int(_f(e.attributes, "start_time", e.time) // 3600)
        else:
            key = e.attributes.get(group_by, "?")
        miles = _f(e.attributes, "distance_m") / METERS_PER_MILE
        occupants = _f(e.attributes, "occupants")
        vmt, pmt = out.get(key, (0.0, 0.0))
        out[key] = (vmt + miles, pmt + miles * occupants)
    return out
