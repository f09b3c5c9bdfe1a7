"""Multimodal routing over the link graph and the transit timetable.

Car paths are time-dependent shortest paths against per-period link
travel times (FIFO is restored by clamping so arrival never decreases in
departure time).  Transit journeys come from a round-based earliest
arrival search over scheduled trips with a bounded transfer count, and
one itinerary per mode classification is picked by a logit draw.
"""

from __future__ import annotations

import heapq
import math
import random
from dataclasses import dataclass, field

from . import choices


class Unreachable(Exception):
    pass


WALK_SPEED_MPS = 1.4
BIKE_SPEED_MPS = 4.0


# --------------------------------------------------------------------------
# per-period link travel times


@dataclass
class LinkTravelTimeTable:
    """Piecewise-constant travel times per link and period.

    ``travel_time`` and ``arrival`` clamp the raw cell values so that
    entering later never means arriving earlier, even when the next
    period's cell is much smaller.
    """

    period_length: float = 3600.0
    times: dict[str, list[float]] = field(default_factory=dict)
    free_flow: dict[str, float] = field(default_factory=dict)
    _clamped_starts: dict[str, list[float]] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        for lid, row in self.times.items():
            ff = self.free_flow.get(lid, 0.0)
            self.times[lid] = [max(tt, ff) for tt in row]

    def _cell(self, link_id: str, period: int) -> float:
        row = self.times.get(link_id)
        if not row:
            return self.free_flow[link_id]
        return row[min(max(period, 0), len(row) - 1)]

    def _floor_arrivals(self, link_id: str) -> list[float]:
        """Minimum permitted arrival when entering at each period start."""
        cached = self._clamped_starts.get(link_id)
        if cached is not None:
            return cached
        row = self.times.get(link_id) or [self.free_flow[link_id]]
        floors = [-math.inf]
        for p in range(1, len(row)):
            # limit of arrivals just before the boundary at p*period_length
            left = p * self.period_length + row[p - 1]
            floors.append(max(floors[p - 1], left))
        self._clamped_starts[link_id] = floors
        return floors

    def arrival(self, link_id: str, entry_time: float) -> float:
        period = max(0, int(entry_time // self.period_length))
        raw = entry_time + self._cell(link_id, period)
        floors = self._floor_arrivals(link_id)
        floor = floors[min(period, len(floors) - 1)]
        return max(raw, floor)

    def travel_time(self, link_id: str, entry_time: float) -> float:
        return self.arrival(link_id, entry_time) - entry_time

    @classmethod
    def free_flow_table(cls, links: dict, period_length: float = 3600.0) -> "LinkTravelTimeTable":
        ff = {lid: l.length_m / l.free_speed_mps for lid, l in links.items()}
        return cls(period_length=period_length, times={}, free_flow=ff)


def update_link_times(links: dict, linkstats, noise_sigma: float = 0.0,
                      rng: random.Random | None = None,
                      n_periods: int = 36) -> LinkTravelTimeTable:
    """Next iteration's routing table from the queue model's linkstats.

    With a positive sigma every cell is multiplied by exp(sigma * z),
    z ~ N(0, 1), which spreads routed traffic over near-equal paths.
    """
    free_flow = dict(linkstats.free_flow)
    times: dict[str, list[float]] = {}
    for lid, ff in free_flow.items():
        row = []
        for p in range(n_periods):
            tt = linkstats.travel_time(lid, p)
            if noise_sigma > 0:
                tt *= math.exp(noise_sigma * (rng or random).gauss(0.0, 1.0))
            row.append(max(ff, tt))
        times[lid] = row
    return LinkTravelTimeTable(period_length=linkstats.period_length,
                               times=times, free_flow=free_flow)


def blend_link_times(old: LinkTravelTimeTable | None,
                     new: LinkTravelTimeTable,
                     weight: float) -> LinkTravelTimeTable:
    """Successive-averages damping: weight of the new measurement against
    the table routed with last iteration.  Without it, synchronized
    rerouting makes congestion hop between corridors instead of settling.
    """
    if old is None or weight >= 1.0:
        return new
    times = {}
    for lid, new_row in new.times.items():
        old_row = old.times.get(lid)
        if old_row is None:
            times[lid] = list(new_row)
            continue
        times[lid] = [(1.0 - weight) * o + weight * n
                      for o, n in zip(old_row, new_row)]
    return LinkTravelTimeTable(period_length=new.period_length, times=times,
                               free_flow=dict(new.free_flow))


# --------------------------------------------------------------------------
# street routing


@dataclass
class Route:
    link_ids: list[str]
    depart_time: float
    arrival_time: float

    @property
    def travel_time(self) -> float:
        return self.arrival_time - self.depart_time


_STREET_MODE_OF = {"CAR": "car", "CAV": "car", "BIKE": "bike", "WALK": "walk"}


class StreetGraph:
    """Adjacency view of the links for one network mode."""

    def __init__(self, links: dict, mode: str,
                 walk_speed: float = WALK_SPEED_MPS,
                 bike_speed: float = BIKE_SPEED_MPS,
                 grade_multipliers: dict | None = None):
        self.links = links
        self.mode = _STREET_MODE_OF.get(mode, mode)
        self.walk_speed = walk_speed
        self.bike_speed = bike_speed
        self.grade_multipliers = grade_multipliers or {}
        self.out: dict[str, list] = {}
        for link in links.values():
            if self.mode in link.modes:
                self.out.setdefault(link.from_node, []).append(link)
        for lst in self.out.values():
            lst.sort(key=lambda l: l.id)

    def traversal_time(self, link, entry_time: float,
                       table: LinkTravelTimeTable | None) -> float:
        if self.mode == "car":
            if table is not None:
                return table.travel_time(link.id, entry_time)
            return link.length_m / link.free_speed_mps
        speed = self.walk_speed if self.mode == "walk" else self.bike_speed
        mult = self.grade_multipliers.get(round(link.grade_pct), 1.0)
        return link.length_m / (speed * mult)


def shortest_path(graph: StreetGraph, origin: str, dest: str, depart_time: float,
                  table: LinkTravelTimeTable | None = None,
                  tolls: dict[str, float] | None = None,
                  value_of_time: float = 0.0) -> Route:
    """Time-dependent least-generalized-cost path between two nodes.

    Cost is elapsed seconds plus tolls converted at the agent's value of
    time; with no tolls (the default) it reduces to earliest arrival.
    """
    if origin == dest:
        return Route([], depart_time, depart_time)
    toll_s = {}
    if tolls and value_of_time > 0:
        toll_s = {lid: usd / value_of_time * 3600.0 for lid, usd in tolls.items()}
    # (cost, arrival, node); parents keyed by node
    frontier = [(0.0, depart_time, origin)]
    best_cost: dict[str, float] = {}
    parent: dict[str, tuple[str, str]] = {}  # node -> (prev node, link id)
    while frontier:
        cost, now, node = heapq.heappop(frontier)
        if node == dest:
            path = []
            cur = node
            while cur != origin:
                prev, lid = parent[cur]
                path.append(lid)
                cur = prev
            path.reverse()
            return Route(path, depart_time, now)
        if cost > best_cost.get(node, math.inf):
            continue
        for link in graph.out.get(node, ()):
            tt = graph.traversal_time(link, now, table)
            c = cost + tt + toll_s.get(link.id, 0.0)
            if c < best_cost.get(link.to_node, math.inf):
                best_cost[link.to_node] = c
                parent[link.to_node] = (node, link.id)
                heapq.heappush(frontier, (c, now + tt, link.to_node))
    raise Unreachable(f"no {graph.mode} path from {origin} to {dest}")


def nearest_node(graph: StreetGraph, node_xy: dict, x: float, y: float) -> str:
    """Closest node that has an outgoing or incoming link of the mode."""
    nodes = set(graph.out)
    for lst in graph.out.values():
        nodes.update(l.to_node for l in lst)
    if not nodes:
        raise Unreachable(f"network has no {graph.mode} links")
    # tie-break on the node name: distance ties are common on symmetric
    # grids and set order is not stable across processes
    return min(nodes,
               key=lambda n: ((node_xy[n][0] - x) ** 2 + (node_xy[n][1] - y) ** 2, n))


# --------------------------------------------------------------------------
# itineraries


@dataclass
class ItineraryLeg:
    mode: str
    vehicle_id: str | None
    link_path: list[str]
    depart_time: float
    arrive_time: float
    cost: float = 0.0
    trip_id: str | None = None
    board_stop: str | None = None
    alight_stop: str | None = None


@dataclass
class Itinerary:
    legs: list[ItineraryLeg]
    total_cost: float
    total_time: float
    transfers: int
    classification: str

    @property
    def depart_time(self) -> float:
        return self.legs[0].depart_time

    @property
    def arrival_time(self) -> float:
        return self.legs[-1].arrive_time


def teleport_itinerary(classification: str, depart_time: float,
                       distance_m: float, speed: float, cost: float = 0.0,
                       vehicle_id: str | None = None) -> Itinerary:
    """Straight-line leg for modes not simulated on the link graph."""
    tt = distance_m / speed
    leg = ItineraryLeg(classification, vehicle_id, [], depart_time,
                       depart_time + tt, cost)
    return Itinerary([leg], cost, tt, 0, classification)


def street_itinerary(classification: str, route: Route, cost: float = 0.0,
                     vehicle_id: str | None = None) -> Itinerary:
    leg = ItineraryLeg(classification, vehicle_id, route.link_ids,
                       route.depart_time, route.arrival_time, cost)
    return Itinerary([leg], cost, route.travel_time, 0, classification)


def build_car_itinerary(route: Route, vehicle_id: str,
                        access_walk_m: float = 0.0,
                        egress_walk_m: float = 0.0,
                        parking_cost: float = 0.0,
                        toll_cost: float = 0.0,
                        walk_speed: float = WALK_SPEED_MPS) -> Itinerary:
    """Walk to the car, drive, walk in from the quoted stall.

    The access leg has zero length (and time) when the vehicle is parked
    where the agent stands, e.g. at home at the start of the day.
    """
    legs = []
    t = route.depart_time
    if access_walk_m > 0:
        ta = t + access_walk_m / walk_speed
        legs.append(ItineraryLeg("WALK", None, [], t, ta))
        t = ta
    drive_tt = route.travel_time
    legs.append(ItineraryLeg("CAR", vehicle_id, route.link_ids, t, t + drive_tt,
                             cost=toll_cost + parking_cost))
    t += drive_tt
    if egress_walk_m > 0:
        legs.append(ItineraryLeg("WALK", None, [], t, t + egress_walk_m / walk_speed))
        t += egress_walk_m / walk_speed
    total = toll_cost + parking_cost
    return Itinerary(legs, total, t - route.depart_time, 0, "CAR")


# --------------------------------------------------------------------------
# transit


@dataclass
class _Boarding:
    trip_id: str
    route_id: str
    board_stop: str
    board_time: float
    alight_stop: str
    alight_time: float
    fare: float
    prev: "_Boarding | None"


class TransitNetwork:
    """Stops and scheduled trips indexed for the earliest-arrival search."""

    def __init__(self, routes: dict, trips: dict):
        self.routes = routes
        self.trips = sorted(trips.values(), key=lambda t: t.id)
        self.stop_xy: dict[str, tuple[float, float]] = {}
        for trip in self.trips:
            for st in trip.stop_times:
                self.stop_xy.setdefault(st.stop_id, (st.x, st.y))

    def stops_near(self, x: float, y: float, radius_m: float) -> dict[str, float]:
        """stop id -> straight-line distance for stops within the radius."""
        out = {}
        for sid, (sx, sy) in self.stop_xy.items():
            d = math.hypot(sx - x, sy - y)
            if d <= radius_m:
                out[sid] = d
        return out

    def search(self, access: dict[str, float], egress_stops: set[str],
               max_transfers: int = 2) -> list[_Boarding]:
        """Best journey to any egress stop for each ride count 1..K+1.

        ``access`` maps boardable stops to the earliest time the traveler
        can stand there.  Transfers happen only at a shared stop.
        """
        best: dict[str, float] = dict(access)
        labels: dict[str, _Boarding | None] = {s: None for s in access}
        results: list[_Boarding] = []
        for _ in range(max_transfers + 1):
            improved: dict[str, tuple[float, _Boarding]] = {}
            for trip in self.trips:
                route_type = self.routes[trip.route_id].type
                on_board: _Boarding | None = None
                for st in trip.stop_times:
                    if on_board is not None and (
                            st.stop_id not in best or on_board.alight_time < best[st.stop_id]):
                        arr = _Boarding(trip.id, trip.route_id, on_board.board_stop,
                                        on_board.board_time, st.stop_id, st.arrival_s,
                                        on_board.fare, on_board.prev)
                        cur = improved.get(st.stop_id)
                        if cur is None or st.arrival_s < cur[0]:
                            improved[st.stop_id] = (st.arrival_s, arr)
                    ready = best.get(st.stop_id)
                    if ready is not None and ready <= st.departure_s:
                        if on_board is None or st.departure_s < on_board.board_time:
                            on_board = _Boarding(trip.id, trip.route_id, st.stop_id,
                                                 st.departure_s, st.stop_id, st.arrival_s,
                                                 st.fare_usd, labels[st.stop_id])
            if not improved:
                break
            round_best: _Boarding | None = None
            round_best_key = math.inf
            for sid, (arr, label) in improved.items():
                if arr < best.get(sid, math.inf):
                    best[sid] = arr
                    labels[sid] = label
                if sid in egress_stops and arr < round_best_key:
                    round_best, round_best_key = label, arr
            if round_best is not None:
                results.append(round_best)
        return results


def _journey_chain(label: _Boarding) -> list[_Boarding]:
    chain = []
    cur: _Boarding | None = label
    while cur is not None:
        chain.append(cur)
        cur = cur.prev
    chain.reverse()
    return chain


_ACCESS_SPEED = {
    "WALK_TRANSIT": WALK_SPEED_MPS,
    "BIKE_TRANSIT": BIKE_SPEED_MPS,
    "DRIVE_TRANSIT": 8.3,
    "RIDE_HAIL_TRANSIT": 8.3,
}

RAIL_TYPES = {"rail", "subway", "tram"}


def transit_itineraries(network: TransitNetwork, origin_xy, dest_xy,
                        depart_time: float, classifications: set[str],
                        rng: random.Random,
                        value_of_time: float = 10.0,
                        beta_transfer: float = 1.0,
                        epsilon: float = 1.0,
                        rail_bonus: float = 0.0,
                        stop_radius_m: float = 1500.0,
                        max_transfers: int = 2,
                        walk_speed: float = WALK_SPEED_MPS) -> list[Itinerary]:
    """At most one itinerary per requested classification.

    Candidates with different transfer counts compete in a logit draw on
    utility = -fare - VOT*hours - beta*transfers (+ bonus when any leg is
    on a rail-family route).  An empty list means no service.
    """
    ox, oy = origin_xy
    dx, dy = dest_xy
    egress_dist = network.stops_near(dx, dy, stop_radius_m)
    if not egress_dist:
        return []
    out = []
    for cls in sorted(classifications):
        speed = _ACCESS_SPEED.get(cls)
        if speed is None:
            continue
        access_dist = network.stops_near(ox, oy, stop_radius_m)
        access = {sid: depart_time + d / speed for sid, d in access_dist.items()}
        if not access:
            continue
        candidates = {}
        utilities = {}
        for label in network.search(access, set(egress_dist), max_transfers):
            chain = _journey_chain(label)
            legs = [ItineraryLeg(cls, None, [], depart_time,
                                 access[chain[0].board_stop])]
            fare = 0.0
            for b in chain:
                legs.append(ItineraryLeg("TRANSIT_RIDE", b.trip_id, [],
                                         b.board_time, b.alight_time, b.fare,
                                         trip_id=b.trip_id,
                                         board_stop=b.board_stop,
                                         alight_stop=b.alight_stop))
                fare += b.fare
            egress_t = egress_dist[chain[-1].alight_stop] / walk_speed
            legs.append(ItineraryLeg("WALK", None, [], chain[-1].alight_time,
                                     chain[-1].alight_time + egress_t))
            total_time = legs[-1].arrive_time - depart_time
            transfers = len(chain) - 1
            itin = Itinerary(legs, fare, total_time, transfers, cls)
            key = f"{cls}:{transfers}"
            candidates[key] = itin
            u = (-fare - value_of_time * total_time / 3600.0
                 - beta_transfer * transfers)
            if any(network.routes[b.route_id].type in RAIL_TYPES for b in chain):
                u += rail_bonus
            utilities[key] = u
        if candidates:
            pick = choices.mnl_choose(utilities, epsilon, rng)
            out.append(candidates[pick])
    return out
