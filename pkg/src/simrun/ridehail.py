"""On-demand fleet management: quotes, solo and pooled matching,
idle-vehicle repositioning, shift lifecycle and mileage accounting.

Matching runs in synchronous dispatch cycles.  Pooled requests are
matched first with a vehicle-centric greedy insertion; leftovers and
solo requests then get the nearest idle vehicle.  A factorial-search
oracle over tiny instances pins down what "feasible" means: every
passenger's wait stays within maxWaitingTimeInSec and nobody rides more
than (1 + maxExcessRideTime) times their direct time.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field


class Unavailable(Exception):
    pass


DEFAULT_SPEED_MPS = 8.3
METERS_PER_MILE = 1609.34


def euclidean_tt(a: tuple[float, float], b: tuple[float, float],
                 speed: float = DEFAULT_SPEED_MPS) -> float:
    return math.hypot(a[0] - b[0], a[1] - b[1]) / speed


@dataclass
class RideRequest:
    id: str
    person_id: str
    origin: tuple[float, float]
    destination: tuple[float, float]
    request_time: float
    kind: str = "reservation"  # inquiry | reservation
    pooled: bool = False

    def __post_init__(self):
        if self.origin == self.destination:
            raise ValueError(f"request {self.id}: origin equals destination")


@dataclass
class MatchingParams:
    max_wait_s: float = 600.0
    max_excess_ride_time: float = 0.5  # fraction of direct time
    max_requests_per_vehicle: int = 5

    def __post_init__(self):
        if self.max_wait_s <= 0 or self.max_excess_ride_time < 0 \
                or self.max_requests_per_vehicle < 1:
            raise ValueError("matching parameters must be positive")


@dataclass
class FleetVehicle:
    id: str
    x: float
    y: float
    seats: int = 4
    shift: tuple[float, float] = (0.0, 129600.0)
    status: str = "idle"  # idle|enroutePickup|occupied|repositioning|refueling|offShift
    geofence: tuple[float, float, float] | None = None
    occupants: list[str] = field(default_factory=list)
    autonomous: bool = False
    soc: float = 1.0

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)

    def on_shift(self, now: float) -> bool:
        if self.autonomous:
            return True
        return self.shift[0] <= now < self.shift[1]

    def in_geofence(self, point: tuple[float, float]) -> bool:
        if self.geofence is None:
            return True
        cx, cy, r = self.geofence
        return math.hypot(point[0] - cx, point[1] - cy) <= r


@dataclass
class Stop:
    kind: str  # pickup | dropoff
    request_id: str
    location: tuple[float, float]
    time: float = 0.0


@dataclass
class Assignment:
    vehicle_id: str
    schedule: list[Stop]

    @property
    def request_ids(self) -> list[str]:
        return sorted({s.request_id for s in self.schedule})


# --------------------------------------------------------------------------
# quotes


@dataclass
class FareParams:
    base: float = 2.0
    per_mile: float = 1.5
    pooled_per_mile: float = 1.0
    per_minute: float = 0.2


def quote(request: RideRequest, fleet: list[FleetVehicle], fares: FareParams,
          now: float, tt=euclidean_tt,
          skim_wait_s: float | None = None) -> tuple[float, float]:
    """(wait estimate, price).  The skim wait is used when provided;
    otherwise the nearest on-shift idle vehicle's travel time stands in."""
    eligible = [v for v in fleet
                if v.status == "idle" and v.on_shift(now)
                and v.in_geofence(request.origin)
                and v.in_geofence(request.destination)]
    if not eligible:
        raise Unavailable(f"no vehicle can serve request {request.id}")
    if skim_wait_s is not None:
        wait = skim_wait_s
    else:
        wait = min(tt(v.location, request.origin) for v in eligible)
    direct = tt(request.origin, request.destination)
    miles = math.hypot(request.origin[0] - request.destination[0],
                       request.origin[1] - request.destination[1]) / METERS_PER_MILE
    per_mile = fares.pooled_per_mile if request.pooled else fares.per_mile
    price = fares.base + per_mile * miles + fares.per_minute * direct / 60.0
    return wait, price


# --------------------------------------------------------------------------
# schedule feasibility (shared by greedy matching and the oracle)


def evaluate_schedule(vehicle: FleetVehicle, stops: list[Stop], now: float,
                      requests: dict[str, RideRequest], params: MatchingParams,
                      tt=euclidean_tt):
    """Timed copy of the stops, or None when any constraint fails.

    The vehicle departs its current location at ``now``; a pickup cannot
    happen before the request was made; waits and onboard times must
    respect the matching parameters; occupancy never exceeds seats.
    """
    t = now
    loc = vehicle.location
    onboard = len(vehicle.occupants)
    pickup_time: dict[str, float] = {}
    timed = []
    for stop in stops:
        t += tt(loc, stop.location)
        loc = stop.location
        req = requests[stop.request_id]
        if stop.kind == "pickup":
            t = max(t, req.request_time)
            if t - req.request_time > params.max_wait_s:
                return None
            onboard += 1
            if onboard > vehicle.seats:
                return None
            pickup_time[req.id] = t
        else:
            direct = tt(req.origin, req.destination)
            if t - pickup_time[req.id] > (1.0 + params.max_excess_ride_time) * direct:
                return None
            onboard -= 1
        timed.append(Stop(stop.kind, stop.request_id, stop.location, t))
    return timed


def _completion_time(timed: list[Stop], now: float) -> float:
    return timed[-1].time if timed else now


# --------------------------------------------------------------------------
# matching


def match_solo(reservations: list[RideRequest], fleet: list[FleetVehicle],
               params: MatchingParams, now: float,
               tt=euclidean_tt) -> tuple[list[Assignment], list[RideRequest]]:
    """Nearest idle vehicle per request, earlier request first."""
    assignments = []
    unmatched = []
    free = [v for v in fleet if v.status == "idle" and v.on_shift(now)]
    for req in sorted(reservations, key=lambda r: (r.request_time, r.id)):
        best, best_t = None, math.inf
        for v in free:
            if not (v.in_geofence(req.origin) and v.in_geofence(req.destination)):
                continue
            wait = tt(v.location, req.origin)
            pickup = max(now + wait, req.request_time)
            if pickup - req.request_time > params.max_wait_s:
                continue
            if wait < best_t or (wait == best_t and v.id < best.id):
                best, best_t = v, wait
        if best is None:
            unmatched.append(req)
            continue
        free.remove(best)
        stops = [Stop("pickup", req.id, req.origin),
                 Stop("dropoff", req.id, req.destination)]
        timed = evaluate_schedule(best, stops, now, {req.id: req}, params, tt)
        assert timed is not None
        assignments.append(Assignment(best.id, timed))
    return assignments, unmatched


def _best_insertion(vehicle, schedule, req, now, requests, params, tt):
    """Cheapest feasible pickup+dropoff insertion, or None."""
    best = None
    best_done = math.inf
    n = len(schedule)
    for i in range(n + 1):
        for j in range(i, n + 1):
            trial = list(schedule)
            trial.insert(i, Stop("pickup", req.id, req.origin))
            trial.insert(j + 1, Stop("dropoff", req.id, req.destination))
            timed = evaluate_schedule(vehicle, trial, now, requests, params, tt)
            if timed is None:
                continue
            done = _completion_time(timed, now)
            if done < best_done:
                best, best_done = trial, done
    return best


def match_pooled(reservations: list[RideRequest], fleet: list[FleetVehicle],
                 params: MatchingParams, now: float,
                 tt=euclidean_tt) -> tuple[list[Assignment], list[RideRequest]]:
    """Vehicle-centric greedy pooling.

    Vehicles in id order each look at their nearest still-open requests
    (at most maxRequestsPerVehicle) and keep every one that inserts
    feasibly into their growing schedule.
    """
    open_reqs = {r.id: r for r in reservations}
    assignments = []
    for vehicle in sorted(fleet, key=lambda v: v.id):
        if vehicle.status != "idle" or not vehicle.on_shift(now) or not open_reqs:
            continue
        candidates = sorted(
            (r for r in open_reqs.values()
             if vehicle.in_geofence(r.origin) and vehicle.in_geofence(r.destination)),
            key=lambda r: (tt(vehicle.location, r.origin), r.id),
        )[:params.max_requests_per_vehicle]
        schedule: list[Stop] = []
        taken = []
        requests: dict[str, RideRequest] = {}
        for req in candidates:
            requests[req.id] = req
            trial = _best_insertion(vehicle, schedule, req, now, requests, params, tt)
            if trial is None:
                del requests[req.id]
                continue
            schedule = trial
            taken.append(req.id)
        if taken:
            timed = evaluate_schedule(vehicle, schedule, now, requests, params, tt)
            assignments.append(Assignment(vehicle.id, timed))
            for rid in taken:
                del open_reqs[rid]
    leftovers = [open_reqs[rid] for rid in sorted(open_reqs)]
    return assignments, leftovers


def _stop_orders(req_ids: list[str]):
    """All pickup-before-dropoff interleavings for a request set."""
    tokens = [("pickup", r) for r in req_ids] + [("dropoff", r) for r in req_ids]

    def rec(remaining, picked, seq):
        if not remaining:
            yield seq
            return
        seen = set()
        for tok in remaining:
            kind, rid = tok
            if tok in seen:
                continue
            seen.add(tok)
            if kind == "dropoff" and rid not in picked:
                continue
            rest = list(remaining)
            rest.remove(tok)
            yield from rec(rest, picked | {rid} if kind == "pickup" else picked,
                           seq + [tok])

    yield from rec(tokens, frozenset(), [])


def exhaustive_match(reservations: list[RideRequest], fleet: list[FleetVehicle],
                     params: MatchingParams, now: float,
                     tt=euclidean_tt) -> tuple[list[Assignment], int]:
    """Optimal matched-request count by brute force (test oracle).

    Enumerates every request-to-vehicle assignment (including leaving
    requests unserved) and every stop order; maximizes matched count,
    then minimizes total pickup delay.
    """
    if len(reservations) > 6 or len(fleet) > 3:
        raise ValueError("oracle limited to 6 requests / 3 vehicles")
    requests = {r.id: r for r in reservations}
    vehicles = [v for v in sorted(fleet, key=lambda v: v.id)
                if v.status == "idle" and v.on_shift(now)]
    slots = list(range(len(vehicles))) + [None]
    best_plan: list[Assignment] = []
    best_key = (-1, math.inf)
    for combo in itertools.product(slots, repeat=len(reservations)):
        matched = sum(1 for c in combo if c is not None)
        if matched < best_key[0]:
            continue
        per_vehicle: dict[int, list[str]] = {}
        ok = True
        for req, c in zip(reservations, combo):
            if c is None:
                continue
            v = vehicles[c]
            if not (v.in_geofence(req.origin) and v.in_geofence(req.destination)):
                ok = False
                break
            per_vehicle.setdefault(c, []).append(req.id)
        if not ok:
            continue
        plan = []
        delay = 0.0
        for vi, rids in per_vehicle.items():
            vehicle = vehicles[vi]
            found = None
            for order in _stop_orders(rids):
                stops = [Stop(kind, rid, requests[rid].origin if kind == "pickup"
                              else requests[rid].destination)
                         for kind, rid in order]
                timed = evaluate_schedule(vehicle, stops, now, requests, params, tt)
                if timed is None:
                    continue
                d = sum(s.time - requests[s.request_id].request_time
                        for s in timed if s.kind == "pickup")
                if found is None or d < found[1]:
                    found = (timed, d)
            if found is None:
                ok = False
                break
            plan.append(Assignment(vehicle.id, found[0]))
            delay += found[1]
        if not ok:
            continue
        key = (matched, delay)
        if key[0] > best_key[0] or (key[0] == best_key[0] and key[1] < best_key[1]):
            best_key = key
            best_plan = plan
    return best_plan, max(best_key[0], 0)


# --------------------------------------------------------------------------
# repositioning


def reposition(strategy: str, idle_vehicles: list[FleetVehicle],
               demand_by_taz: dict[str, float],
               idle_by_taz: dict[str, float],
               taz_centroids: dict[str, tuple[float, float]],
               d_min_m: float = 100.0) -> list[tuple[str, str]]:
    """(vehicle id, target TAZ) move orders for idle vehicles."""
    if strategy == "DEFAULT":
        return []
    if strategy not in ("DEMAND_FOLLOWING", "INVERSE_SQUARE_DISTANCE"):
        raise ValueError(f"unknown repositioning strategy {strategy!r}")
    deficits = {z: demand_by_taz.get(z, 0.0) - idle_by_taz.get(z, 0.0)
                for z in taz_centroids}
    deficits = {z: d for z, d in deficits.items() if d > 0}
    if not deficits:
        return []
    moves = []
    if strategy == "DEMAND_FOLLOWING":
        pool = sorted(idle_vehicles, key=lambda v: v.id)
        for z in sorted(deficits, key=lambda z: (-deficits[z], z)):
            need = int(math.ceil(deficits[z]))
            cx, cy = taz_centroids[z]
            pool.sort(key=lambda v: (math.hypot(v.x - cx, v.y - cy), v.id))
            for _ in range(min(need, len(pool))):
                moves.append((pool.pop(0).id, z))
            if not pool:
                break
        return moves
    if strategy == "INVERSE_SQUARE_DISTANCE":
        scored = []
        for v in idle_vehicles:
            for z, deficit in deficits.items():
                cx, cy = taz_centroids[z]
                d = max(math.hypot(v.x - cx, v.y - cy), d_min_m)
                scored.append((deficit / d ** 2, v.id, z))
        scored.sort(key=lambda t: (-t[0], t[1], t[2]))
        used_vehicles = set()
        remaining = {z: int(math.ceil(d)) for z, d in deficits.items()}
        for score, vid, z in scored:
            if vid in used_vehicles or remaining[z] <= 0:
                continue
            used_vehicles.add(vid)
            remaining[z] -= 1
            moves.append((vid, z))
        return moves
    raise ValueError(f"unknown repositioning strategy {strategy!r}")


# --------------------------------------------------------------------------
# shifts and accounting


def manage_shift(vehicle: FleetVehicle, now: float) -> str:
    """Status transition at a clock tick; autonomous vehicles never clock
    out, human drivers finish onboard passengers first."""
    if vehicle.autonomous:
        return vehicle.status
    if now >= vehicle.shift[1] and not vehicle.occupants \
            and vehicle.status != "offShift":
        vehicle.status = "offShift"
    elif now < vehicle.shift[0] and vehicle.status == "idle":
        vehicle.status = "offShift"
    elif vehicle.shift[0] <= now < vehicle.shift[1] and vehicle.status == "offShift":
        vehicle.status = "idle"
    return vehicle.status


@dataclass
class FleetAccount:
    passenger_miles: float = 0.0
    deadhead_miles: float = 0.0
    requests: int = 0
    unmatched: int = 0
    total_wait_s: float = 0.0
    matched: int = 0
    stuck: int = 0

    @property
    def unmatched_fraction(self) -> float:
        return self.unmatched / self.requests if self.requests else 0.0

    @property
    def mean_wait_s(self) -> float:
        return self.total_wait_s / self.matched if self.matched else 0.0

    def record_traversal(self, distance_m: float, occupants: int) -> None:
        miles = distance_m / METERS_PER_MILE
        if occupants > 0:
            self.passenger_miles += miles
        else:
            self.deadhead_miles += miles

    def record_request(self, wait_s: float | None, stuck: bool = False) -> None:
        self.requests += 1
        if wait_s is None:
            self.unmatched += 1
            if stuck:
                self.stuck += 1
        else:
            self.matched += 1
            self.total_wait_s += wait_s
