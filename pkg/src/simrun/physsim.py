"""Event-driven queue model of traffic flow.

Every link is a finite-capacity FIFO queue: a vehicle may leave the head
no earlier than its free-flow arrival at the link end, no closer than
1/flowCapacity behind the previous exit, and only when the next link has
storage room - which propagates spillback and can gridlock.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field


@dataclass
class CaccCurve:
    """Piecewise-linear capacity multiplier vs CACC penetration."""

    breakpoints: list[tuple[float, float]]  # (penetration, multiplier), sorted

    def __post_init__(self):
        self.breakpoints = sorted(self.breakpoints)
        if not self.breakpoints or self.breakpoints[0][0] != 0.0:
            raise ValueError("curve must start at penetration 0")
        if abs(self.breakpoints[0][1] - 1.0) > 1e-12:
            raise ValueError("multiplier at zero penetration must be 1")
        mults = [m for _, m in self.breakpoints]
        if any(b < a for a, b in zip(mults, mults[1:])):
            raise ValueError("multiplier must be non-decreasing")

    @classmethod
    def from_string(cls, text: str) -> "CaccCurve":
        pts = []
        for chunk in text.split(","):
            p, _, m = chunk.partition(":")
            pts.append((float(p), float(m)))
        return cls(pts)

    def multiplier(self, penetration: float) -> float:
        if not 0.0 <= penetration <= 1.0:
            raise ValueError("penetration must be in [0, 1]")
        pts = self.breakpoints
        if penetration >= pts[-1][0]:
            return pts[-1][1]
        for (p0, m0), (p1, m1) in zip(pts, pts[1:]):
            if p0 <= penetration <= p1:
                if p1 == p0:
                    return m1
                w = (penetration - p0) / (p1 - p0)
                return m0 + w * (m1 - m0)
        return pts[-1][1]


def cacc_multiplier(curve: CaccCurve, penetration: float) -> float:
    return curve.multiplier(penetration)


@dataclass
class RouteRequest:
    vehicle_id: str
    link_path: list[str]
    depart_time: float
    is_cacc: bool = False
    is_heavy: bool = False


@dataclass
class Traversal:
    vehicle_id: str
    link_id: str
    entry_time: float
    exit_time: float | None  # None when still on the link at end of simulation


@dataclass
class PhyssimResult:
    traversals: list[Traversal]
    teleported: list[str]  # vehicle ids still in the network at gridlock/end
    arrival_times: dict[str, float]  # vehicle id -> network exit time


class _Vehicle:
    __slots__ = ("id", "serial", "path", "depart_time", "ix", "earliest_exit",
                 "entry_time", "is_cacc", "is_heavy")

    def __init__(self, req: RouteRequest, serial: int):
        self.id = req.vehicle_id
        self.serial = serial  # one physical vehicle can make several trips
        self.path = req.link_path
        self.depart_time = req.depart_time
        self.ix = 0
        self.earliest_exit = 0.0
        self.entry_time = 0.0
        self.is_cacc = req.is_cacc
        self.is_heavy = req.is_heavy


class _LinkState:
    __slots__ = ("link", "storage", "flow_capacity", "queue", "last_exit",
                 "waiters", "scheduled_head")

    def __init__(self, link, effective_vehicle_length: float, capacity_multiplier: float):
        self.link = link
        self.storage = max(1.0, link.length_m * link.lanes / effective_vehicle_length)
        self.flow_capacity = link.capacity_vph / 3600.0 * capacity_multiplier
        self.queue: deque[_Vehicle] = deque()
        self.last_exit = -math.inf
        self.waiters: list[str] = []  # upstream link ids blocked on our storage
        self.scheduled_head: float | None = None

    @property
    def gap(self) -> float:
        return 1.0 / self.flow_capacity

    def free_flow_time(self) -> float:
        return self.link.length_m / self.link.free_speed_mps


def simulate(links: dict, routes: list[RouteRequest],
             effective_vehicle_length: float = 7.5,
             flow_capacity_factor: float = 1.0,
             cacc_curve: CaccCurve | None = None,
             end_time: float = 7 * 24 * 3600.0) -> PhyssimResult:
    """Run the queue model over executed routes.

    CACC capacity relief, when a curve is given, is applied per link from
    the day's share of traversing vehicles with CACC capability (known
    from the executed routes, so computable up front).
    """
    for req in routes:
        for lid in req.link_path:
            if lid not in links:
                raise KeyError(f"route for {req.vehicle_id} uses unknown link {lid}")

    multipliers = {lid: 1.0 for lid in links}
    if cacc_curve is not None:
        totals: dict[str, int] = {}
        cacc: dict[str, int] = {}
        for req in routes:
            for lid in req.link_path:
                totals[lid] = totals.get(lid, 0) + 1
                if req.is_cacc:
                    cacc[lid] = cacc.get(lid, 0) + 1
        for lid, n in totals.items():
            multipliers[lid] = cacc_curve.multiplier(cacc.get(lid, 0) / n)

    states = {
        lid: _LinkState(link, effective_vehicle_length,
                        flow_capacity_factor * multipliers[lid])
        for lid, link in links.items()
    }

    traversals: list[Traversal] = []
    open_traversal: dict[tuple[int, int], Traversal] = {}
    arrivals: dict[str, float] = {}
    events: list[tuple[float, int, str]] = []  # (time, seq, link_id) head-move attempts
    seq = 0

    def schedule(link_id: str, time: float):
        nonlocal seq
        st = states[link_id]
        if st.scheduled_head is not None and st.scheduled_head <= time + 1e-12:
            return
        st.scheduled_head = time
        heapq.heappush(events, (time, seq, link_id))
        seq += 1

    def enter(veh: _Vehicle, link_id: str, time: float):
        st = states[link_id]
        st.queue.append(veh)
        veh.entry_time = time
        veh.earliest_exit = time + st.free_flow_time()
        tr = Traversal(veh.id, link_id, time, None)
        traversals.append(tr)
        open_traversal[(veh.serial, veh.ix)] = tr
        if len(st.queue) == 1:
            schedule(link_id, max(veh.earliest_exit, st.last_exit + st.gap))

    # vehicles appear on their first link at their departure time
    entry_events = sorted(routes, key=lambda r: (r.depart_time, r.vehicle_id))
    pending = deque(_Vehicle(req, i) for i, req in enumerate(entry_events))

    def release_pending(up_to: float):
        while pending and pending[0].depart_time <= up_to + 1e-12:
            veh = pending.popleft()
            if not veh.path:
                arrivals[veh.id] = veh.depart_time
                continue
            enter(veh, veh.path[0], veh.depart_time)

    release_pending(-math.inf if not pending else pending[0].depart_time)
    while pending or events:
        if not events:
            release_pending(pending[0].depart_time)
            continue
        t, _, link_id = heapq.heappop(events)
        if pending and pending[0].depart_time <= t:
            heapq.heappush(events, (t, seq, link_id))
            seq += 1
            release_pending(pending[0].depart_time)
            continue
        if t > end_time:
            break
        st = states[link_id]
        st.scheduled_head = None
        if not st.queue:
            continue
        veh = st.queue[0]
        ready = max(veh.earliest_exit, st.last_exit + st.gap)
        if t + 1e-9 < ready:
            schedule(link_id, ready)
            continue
        last_link = veh.ix == len(veh.path) - 1
        if not last_link:
            nxt = states[veh.path[veh.ix + 1]]
            if len(nxt.queue) >= nxt.storage:
                if link_id not in nxt.waiters:
                    nxt.waiters.append(link_id)
                continue
        st.queue.popleft()
        st.last_exit = t
        open_traversal.pop((veh.serial, veh.ix)).exit_time = t
        if st.queue:
            head = st.queue[0]
            schedule(link_id, max(head.earliest_exit, t + st.gap))
        if st.waiters:
            for up in st.waiters:
                schedule(up, t)
            st.waiters.clear()
        if last_link:
            arrivals[veh.id] = t
        else:
            veh.ix += 1
            enter(veh, veh.path[veh.ix], t)

    teleported = sorted({tr.vehicle_id for tr in open_traversal.values()})
    return PhyssimResult(traversals=traversals, teleported=teleported,
                         arrival_times=arrivals)


# --------------------------------------------------------------------------
# linkstats and the relaxation gap


@dataclass
class Linkstats:
    period_length: float
    # (link_id, period_index) -> [travel_time, volume_light, volume_heavy]
    cells: dict[tuple[str, int], list[float]] = field(default_factory=dict)
    free_flow: dict[str, float] = field(default_factory=dict)

    def travel_time(self, link_id: str, period: int) -> float:
        cell = self.cells.get((link_id, period))
        if cell is not None:
            return cell[0]
        return self.free_flow[link_id]

    def volume(self, link_id: str, period: int) -> float:
        cell = self.cells.get((link_id, period))
        return cell[1] + cell[2] if cell else 0.0


def compute_linkstats(links: dict, result: PhyssimResult,
                      period_length: float = 3600.0,
                      heavy_vehicles: frozenset[str] | set[str] = frozenset()) -> Linkstats:
    """Per link and period: mean travel time of vehicles exiting in the
    period (free-flow when none) and exit volumes by duty class."""
    sums: dict[tuple[str, int], list[float]] = {}
    for tr in result.traversals:
        if tr.exit_time is None:
            continue
        period = int(tr.exit_time // period_length)
        cell = sums.setdefault((tr.link_id, period), [0.0, 0.0, 0.0, 0.0])
        cell[0] += tr.exit_time - tr.entry_time
        if tr.vehicle_id in heavy_vehicles:
            cell[2] += 1.0
        else:
            cell[1] += 1.0
        cell[3] += 1.0
    stats = Linkstats(period_length=period_length)
    stats.free_flow = {lid: l.length_m / l.free_speed_mps for lid, l in links.items()}
    for key, (tt_sum, ld, hd, n) in sums.items():
        stats.cells[key] = [tt_sum / n, ld, hd]
    return stats


def relaxation_gap(predicted: Linkstats, simulated: Linkstats) -> float:
    """Volume-weighted mean absolute relative difference between the
    travel times agents planned with and the times the queue model
    produced.  0 when the two tables agree everywhere traffic flowed."""
    num = 0.0
    den = 0.0
    for (lid, period), (tt, ld, hd) in simulated.cells.items():
        vol = ld + hd
        if vol <= 0:
            continue
        pred = predicted.travel_time(lid, period)
        if pred <= 0:
            continue
        num += vol * abs(tt - pred) / pred
        den += vol
    return num / den if den > 0 else 0.0
