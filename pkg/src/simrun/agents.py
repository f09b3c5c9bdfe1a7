"""Within-day execution: persons run their plans as state machines.

Each person is an actor on the deterministic scheduler.  Ending an
activity triggers mode choice (logit over the itineraries the router can
produce right now), then the trip plays out leg by leg: household cars
are reserved exclusively, transit boardings can be denied on capacity,
ride-hail requests go through periodic fleet dispatch cycles, and fuel
is drained per meter driven.  Everything observable is emitted to the
event log; executed car routes are collected for the traffic simulation.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

from . import choices, ridehail, router
from .outputs import EventLog
from .physsim import RouteRequest
from .scenario import Activity, Leg, infer_node_coordinates
from .scheduler import Scheduler, StuckSimulation
from .skims import TripObservation

WALK_SPEED_MPS = 1.4
BIKE_SPEED_MPS = 4.0
CAR_TELEPORT_SPEED_MPS = 8.3
CAV_AUTOMATION_THRESHOLD = 4
DAY_END_S = 36 * 3600.0


class Conflict(Exception):
    """Two household members grabbed the same vehicle."""


class Denied(Exception):
    """Transit vehicle at capacity."""


# --------------------------------------------------------------------------
# fuel


@dataclass
class FuelState:
    primary_j: float
    secondary_j: float | None = None


@dataclass
class ConsumeResult:
    primary_used_j: float
    secondary_used_j: float
    out_of_fuel: bool

    @property
    def total_j(self) -> float:
        return self.primary_used_j + self.secondary_used_j


def consume_fuel(fuel: FuelState, vehicle_type, meters: float) -> ConsumeResult:
    """Drain the primary tank first, then the secondary.

    Mid-leg depletion does not strand the vehicle; the caller sees
    ``out_of_fuel`` and emits a warning instead.
    """
    if meters < 0:
        raise ValueError("cannot drive a negative distance")
    p_rate = vehicle_type.primary_consumption_j_per_m
    primary_m = meters if p_rate <= 0 else min(meters, fuel.primary_j / p_rate)
    primary_used = primary_m * p_rate
    fuel.primary_j -= primary_used
    rest_m = meters - primary_m
    secondary_used = 0.0
    out = False
    if rest_m > 1e-9:
        s_rate = vehicle_type.secondary_consumption_j_per_m
        if fuel.secondary_j is not None and s_rate:
            secondary_used = min(rest_m * s_rate, fuel.secondary_j)
            fuel.secondary_j -= secondary_used
            out = secondary_used < rest_m * s_rate - 1e-9
        else:
            out = True
    return ConsumeResult(primary_used, secondary_used, out)


# --------------------------------------------------------------------------
# shared-resource managers


class HouseholdVehicleRegistry:
    """Exclusive holds on household vehicles, plus their current parking
    spot (vehicles start the day at the household's home)."""

    def __init__(self):
        self.holder: dict[str, str] = {}
        self.location: dict[str, tuple[float, float]] = {}

    def place(self, vehicle_id: str, xy: tuple[float, float]) -> None:
        self.location[vehicle_id] = xy

    def reserve(self, vehicle_id: str, person_id: str) -> None:
        cur = self.holder.get(vehicle_id)
        if cur is not None and cur != person_id:
            raise Conflict(f"vehicle {vehicle_id} already held by {cur}")
        self.holder[vehicle_id] = person_id

    def release(self, vehicle_id: str, person_id: str) -> None:
        if self.holder.get(vehicle_id) == person_id:
            del self.holder[vehicle_id]

    def available_at(self, vehicle_ids, xy: tuple[float, float],
                     tolerance_m: float = 1.0) -> list[str]:
        out = []
        for vid in vehicle_ids:
            if vid in self.holder:
                continue
            loc = self.location.get(vid)
            if loc is not None and math.hypot(loc[0] - xy[0], loc[1] - xy[1]) <= tolerance_m:
                out.append(vid)
        return sorted(out)


class TransitOccupancy:
    """Occupant counts per scheduled transit trip; boarding past
    seating + standing capacity is denied.

    Riders carry their scheduled alight time, so a boarding attempt first
    releases everyone who has already left the vehicle by then."""

    def __init__(self, capacity_by_trip: dict[str, int],
                 seats_by_trip: dict[str, int] | None = None):
        self.capacity = capacity_by_trip
        self.seats = seats_by_trip or {}
        self.occupants: dict[str, dict[str, float]] = {}  # trip -> person -> alight time
        self.peak: dict[str, int] = {}

    def board(self, trip_id: str, person_id: str, now: float = 0.0,
              alight_time: float = math.inf) -> None:
        aboard = self.occupants.setdefault(trip_id, {})
        for pid in [p for p, t in aboard.items() if t <= now]:
            del aboard[pid]
        if len(aboard) >= self.capacity.get(trip_id, 0):
            raise Denied(f"trip {trip_id} is at capacity")
        aboard[person_id] = alight_time
        self.peak[trip_id] = max(self.peak.get(trip_id, 0), len(aboard))

    def alight(self, trip_id: str, person_id: str) -> None:
        self.occupants.get(trip_id, {}).pop(person_id, None)


# --------------------------------------------------------------------------
# household CAV scheduling


@dataclass
class CavAssignment:
    vehicle_id: str
    person_id: str
    trip_index: int  # index into the person's legs
    depart_time: float
    reposition_from: str | None  # TAZ the CAV deadheads in from, if any


def schedule_household_cavs(member_plans: dict[str, "Plan"], cav_ids: list[str],
                            home_taz: str, travel_time) -> list[CavAssignment]:
    """Greedy CAV-to-trip assignment maximizing trips served.

    Member trips are processed in departure-time order; a CAV takes a
    trip iff it can reach the origin (deadheading if needed, per the
    ``travel_time(origin_taz, dest_taz, depart_s)`` skim) by the
    departure.  Unassigned trips fall back to normal mode choice.
    """
    trips = []
    for pid in sorted(member_plans):
        plan = member_plans[pid]
        acts = plan.activities()
        for i in range(len(acts) - 1):
            depart = acts[i].end_time
            if depart is None:
                continue
            trips.append((depart, pid, i, acts[i].taz, acts[i + 1].taz))
    trips.sort(key=lambda t: (t[0], t[1], t[2]))
    # vehicle -> (free time, current TAZ)
    state = {vid: (0.0, home_taz) for vid in sorted(cav_ids)}
    out = []
    for depart, pid, trip_idx, o_taz, d_taz in trips:
        for vid in sorted(state):
            free_t, loc = state[vid]
            ready = free_t if loc == o_taz else free_t + travel_time(loc, o_taz, free_t)
            if ready <= depart:
                arrive = depart + travel_time(o_taz, d_taz, depart)
                state[vid] = (arrive, d_taz)
                out.append(CavAssignment(vid, pid, trip_idx, depart,
                                         None if loc == o_taz else loc))
                break
    return out


# --------------------------------------------------------------------------
# the day executor


@dataclass
class DayContext:
    scenario: object
    mode_params: choices.ModeChoiceParams
    skims: object
    link_table: router.LinkTravelTimeTable | None = None
    transit: router.TransitNetwork | None = None
    parking: object | None = None
    rh_fleet: list = field(default_factory=list)
    rh_fares: ridehail.FareParams = field(default_factory=ridehail.FareParams)
    rh_matching: ridehail.MatchingParams = field(default_factory=ridehail.MatchingParams)
    parking_params: choices.ParkingChoiceParams = field(
        default_factory=choices.ParkingChoiceParams)
    default_vot: float = 10.0  # $/hour when the person carries none
    dispatch_period_s: float = 30.0
    day_end_s: float = DAY_END_S
    transit_classifications: tuple[str, ...] = ("WALK_TRANSIT",)
    cav_enabled: bool = True


@dataclass
class PersonDay:
    state: str = "PerformingActivity"
    trip_utilities: list[float] = field(default_factory=list)
    activity_durations: list[tuple[str, float]] = field(default_factory=list)
    modes: list[str] = field(default_factory=list)

    @property
    def stuck(self) -> bool:
        return self.state == "Stuck"


@dataclass
class DayResult:
    events: EventLog
    routes: list[RouteRequest]
    person_days: dict[str, PersonDay]

    @property
    def stuck_count(self) -> int:
        return sum(1 for d in self.person_days.values() if d.stuck)


_FLEET = "__fleet__"


class _PersonSim:
    """Mutable per-person execution state."""

    def __init__(self, person, home_xy):
        self.person = person
        self.elements = person.plan.elements
        self.idx = 0  # element index of the current activity
        self.xy = (self.elements[0].x, self.elements[0].y)
        self.day = PersonDay()
        self.vehicle_id: str | None = None  # reserved household car, if out
        self.vehicle_anchor: tuple[float, float] | None = None
        self.trip_index = -1
        self.arrived_at = 0.0
        self.itinerary: router.Itinerary | None = None
        self.ride_legs: list = []
        self.ride_pos = 0
        self.request: ridehail.RideRequest | None = None
        self.parking_reservation = None
        self.charging = None  # (charger_power_kw, plug_in_time)


class DayExecutor:
    def __init__(self, ctx: DayContext, iteration: int = 0):
        self.ctx = ctx
        self.iteration = iteration
        self.scn = ctx.scenario
        self.events = EventLog()
        self.routes: list[RouteRequest] = []
        self.registry = HouseholdVehicleRegistry()
        self.occupancy = self._build_occupancy()
        self.car_graph = router.StreetGraph(self.scn.links, "CAR")
        self.node_xy = infer_node_coordinates(self.scn.links, self.scn.tazs)
        self.persons: dict[str, _PersonSim] = {}
        self.pending_requests: dict[str, tuple[ridehail.RideRequest, str]] = {}
        self.fuel: dict[str, FuelState] = {}
        self.cav_by_trip: dict[tuple[str, int], CavAssignment] = {}
        self.scheduler = Scheduler()
        self._free_flow = {lid: l.length_m / l.free_speed_mps
                           for lid, l in self.scn.links.items()}

    # -- setup -------------------------------------------------------------

    def _build_occupancy(self) -> TransitOccupancy:
        cap, seats = {}, {}
        for trip in self.scn.transit_trips.values():
            vt = self.scn.vehicle_types[trip.vehicle_type_id]
            cap[trip.id] = vt.seating_capacity + vt.standing_capacity
            seats[trip.id] = vt.seating_capacity
        return TransitOccupancy(cap, seats)

    def _fuel_state(self, vehicle_id: str) -> FuelState:
        if vehicle_id not in self.fuel:
            veh = self.scn.vehicles[vehicle_id]
            vt = self.scn.vehicle_types[veh.type_id]
            secondary = None
            if vt.secondary_capacity_j:
                secondary = vt.secondary_capacity_j
            self.fuel[vehicle_id] = FuelState(
                veh.state_of_charge * vt.primary_capacity_j, secondary)
        return self.fuel[vehicle_id]

    def _schedule_cavs(self) -> None:
        if not self.ctx.cav_enabled:
            return
        def tt(o_taz, d_taz, depart):
            entry = self.ctx.skims.lookup("CAR", o_taz, d_taz, int(depart // 3600))
            return entry.mean_time
        for hh in self.scn.households.values():
            cavs = [vid for vid in hh.vehicle_ids
                    if self.scn.vehicle_types[self.scn.vehicles[vid].type_id]
                    .automation_level >= CAV_AUTOMATION_THRESHOLD]
            if not cavs:
                continue
            plans = {pid: self.scn.persons[pid].plan for pid in hh.member_ids}
            for a in schedule_household_cavs(plans, cavs, hh.home_taz, tt):
                self.cav_by_trip[(a.person_id, a.trip_index)] = a

    # -- main loop ---------------------------------------------------------

    def run(self) -> DayResult:
        self._schedule_cavs()
        for hh in self.scn.households.values():
            for vid in hh.vehicle_ids:
                self.registry.place(vid, (hh.x, hh.y))
        for pid in sorted(self.scn.persons):
            person = self.scn.persons[pid]
            if not person.plan.elements:
                continue
            hh = self.scn.households[person.household_id]
            sim = _PersonSim(person, (hh.x, hh.y))
            self.persons[pid] = sim
            first = sim.elements[0]
            end = first.end_time
            if end is None or end >= self.ctx.day_end_s:
                sim.day.state = "Finished"
                sim.day.activity_durations.append((first.type, self.ctx.day_end_s))
                continue
            self.scheduler.schedule(end, pid, ("end_activity",))
        if self.ctx.rh_fleet:
            self.scheduler.schedule(self.ctx.dispatch_period_s, _FLEET, ("dispatch",))
        try:
            self.scheduler.run(self._handle)
        except StuckSimulation:
            pass
        self._finish()
        return DayResult(self.events, self.routes, {
            pid: sim.day for pid, sim in self.persons.items()})

    def _finish(self) -> None:
        for pid, sim in self.persons.items():
            if sim.day.state not in ("Finished", "Stuck"):
                sim.day.state = "Stuck"
                self.events.emit(self.ctx.day_end_s, "Replanning",
                                 person=pid, reason="stuck")
        # vehicle-level transit traversals for the crowding metric
        for trip in sorted(self.scn.transit_trips.values(), key=lambda t: t.id):
            peak = self.occupancy.peak.get(trip.id, 0)
            if peak == 0 or not trip.stop_times:
                continue
            start = trip.stop_times[0].departure_s
            end = trip.stop_times[-1].arrival_s
            self.events.emit(start, "PathTraversal", vehicle=trip.id,
                             mode="TRANSIT", start_time=start, end_time=end,
                             occupants=peak, seats=self.occupancy.seats[trip.id])

    def _handle(self, trigger):
        if trigger.target == _FLEET:
            return self._handle_fleet(trigger.time, trigger.payload)
        sim = self.persons[trigger.target]
        kind = trigger.payload[0]
        if kind == "end_activity":
            return self._end_activity(sim, trigger.time)
        if kind == "arrive":
            return self._arrive(sim, trigger.time)
        if kind == "board":
            return self._board(sim, trigger.time, trigger.payload[1])
        if kind == "rh_pickup":
            return self._rh_pickup(sim, trigger.time, trigger.payload[1])
        if kind == "rh_dropoff":
            return self._rh_dropoff(sim, trigger.time, trigger.payload[1])
        raise ValueError(f"unknown trigger payload {trigger.payload!r}")

    # -- activity end and mode choice --------------------------------------

    def _end_activity(self, sim: _PersonSim, now: float):
        pid = sim.person.id
        act: Activity = sim.elements[sim.idx]
        self.events.emit(now, "ActivityEnd", person=pid, activity=act.type)
        sim.day.activity_durations.append((act.type, max(0.0, now - sim.arrived_at)))
        sim.trip_index += 1
        self._release_parking(sim, now)
        return self._choose_and_go(sim, now)

    def _vot(self, sim) -> float:
        vot = sim.person.value_of_time
        return vot if vot is not None else self.ctx.default_vot

    def _dest_activity(self, sim) -> Activity:
        return sim.elements[sim.idx + 2]

    def _candidates(self, sim: _PersonSim, now: float) -> dict[str, router.Itinerary]:
        """One itinerary per currently available mode."""
        dest = self._dest_activity(sim)
        o, d = sim.xy, (dest.x, dest.y)
        dist = math.hypot(o[0] - d[0], o[1] - d[1])
        cands: dict[str, router.Itinerary] = {}
        cands["WALK"] = router.teleport_itinerary("WALK", now, dist, WALK_SPEED_MPS)
        if sim.vehicle_id is not None:
            # a private car out on a tour must carry its driver onward
            cands = {"CAR": self._car_itinerary(sim, now, sim.vehicle_id)}
            return cands
        hh = self.scn.households[sim.person.household_id]
        free = self.registry.available_at(hh.vehicle_ids, o)
        cars = [v for v in free
                if self.scn.vehicle_types[self.scn.vehicles[v].type_id].category
                in ("Car", "LightDutyTruck")
                and self.scn.vehicle_types[self.scn.vehicles[v].type_id]
                .automation_level < CAV_AUTOMATION_THRESHOLD]
        bikes = [v for v in free
                 if self.scn.vehicle_types[self.scn.vehicles[v].type_id].category
                 == "Bike"]
        if cars:
            cands["CAR"] = self._car_itinerary(sim, now, cars[0])
        if bikes:
            cands["BIKE"] = router.teleport_itinerary(
                "BIKE", now, dist, BIKE_SPEED_MPS, vehicle_id=bikes[0])
        if self.ctx.rh_fleet and dist > 0:
            o_taz = self.scn.taz_of(*o)
            rh_skim = self.ctx.skims.lookup_ridehail(o_taz, int(now // 3600))
            for cls, pooled in (("RIDE_HAIL", False), ("RIDE_HAIL_POOLED", True)):
                miles = dist / ridehail.METERS_PER_MILE
                direct = dist / ridehail.DEFAULT_SPEED_MPS
                per_mile = (self.ctx.rh_fares.pooled_per_mile if pooled
                            else self.ctx.rh_fares.per_mile)
                price = (self.ctx.rh_fares.base + per_mile * miles
                         + self.ctx.rh_fares.per_minute * direct / 60.0)
                itin = router.teleport_itinerary(
                    cls, now, dist, ridehail.DEFAULT_SPEED_MPS, cost=price)
                itin.total_time += rh_skim.mean_wait
                cands[cls] = itin
        if self.ctx.transit is not None:
            rng = random.Random(f"transit:{sim.person.id}:{sim.trip_index}")
            for itin in router.transit_itineraries(
                    self.ctx.transit, o, d, now,
                    set(self.ctx.transit_classifications), rng,
                    value_of_time=self._vot(sim),
                    beta_transfer=self.ctx.mode_params.beta_transfer,
                    epsilon=self.ctx.mode_params.epsilon_trip):
                if itin.arrival_time <= self.ctx.day_end_s:
                    cands[itin.classification] = itin
        return cands

    def _car_itinerary(self, sim, now: float, vehicle_id: str) -> router.Itinerary:
        dest = self._dest_activity(sim)
        try:
            a = router.nearest_node(self.car_graph, self.node_xy, *sim.xy)
            b = router.nearest_node(self.car_graph, self.node_xy, dest.x, dest.y)
            route = router.shortest_path(self.car_graph, a, b, now,
                                         self.ctx.link_table)
        except router.Unreachable:
            dist = math.hypot(sim.xy[0] - dest.x, sim.xy[1] - dest.y)
            return router.teleport_itinerary("CAR", now, dist,
                                             CAR_TELEPORT_SPEED_MPS,
                                             vehicle_id=vehicle_id)
        parking_cost = 0.0
        if self.ctx.parking is not None:
            est = self.ctx.skims.lookup_parking(dest.taz, int(now // 3600))
            parking_cost = est.mean_cost
        return router.build_car_itinerary(route, vehicle_id,
                                          parking_cost=parking_cost)

    def _choose_and_go(self, sim: _PersonSim, now: float,
                       exclude: frozenset[str] = frozenset()):
        pid = sim.person.id
        if sim.idx + 2 >= len(sim.elements):
            return self._finish_person(sim, now)
        cands = {m: it for m, it in self._candidates(sim, now).items()
                 if m not in exclude}
        if not cands:  # walk is always available unless explicitly excluded
            dest = self._dest_activity(sim)
            dist = math.hypot(sim.xy[0] - dest.x, sim.xy[1] - dest.y)
            cands = {"WALK": router.teleport_itinerary("WALK", now, dist,
                                                       WALK_SPEED_MPS)}
        utilities = {m: choices.trip_utility(it, self._vot(sim),
                                             self.ctx.mode_params)
                     for m, it in cands.items()}
        leg: Leg = sim.elements[sim.idx + 1]
        cav = self.cav_by_trip.get((pid, sim.trip_index))
        if cav is not None and not exclude and sim.vehicle_id is None:
            itin = self._car_itinerary(sim, now, cav.vehicle_id)
            itin.classification = "CAV"
            cands["CAV"] = itin
            utilities["CAV"] = choices.trip_utility(itin, self._vot(sim),
                                                    self.ctx.mode_params)
            mode = "CAV"  # household CAV pre-assigned by the greedy scheduler
            mode_label = "CAV"
        elif leg.mode is not None and leg.mode in cands:
            mode = leg.mode  # fixed in the input plans: no sampling
            mode_label = mode
        else:
            rng = random.Random(f"mode:{pid}:{sim.trip_index}")
            mode = choices.mnl_choose(utilities, self.ctx.mode_params.epsilon_trip, rng)
            mode_label = mode
        itin = cands[mode]
        sim.day.trip_utilities.append(utilities[mode])
        sim.day.modes.append(mode_label)
        dest = self._dest_activity(sim)
        self.events.emit(now, "ModeChoice", person=pid, mode=mode_label,
                         trip_index=sim.trip_index,
                         origin_taz=self.scn.taz_of(*sim.xy),
                         dest_taz=dest.taz)
        leg.mode = mode
        sim.itinerary = itin
        sim.day.state = "Moving"
        return self._execute(sim, now, mode, itin)

    def _execute(self, sim: _PersonSim, now: float, mode: str,
                 itin: router.Itinerary):
        pid = sim.person.id
        if mode in ("RIDE_HAIL", "RIDE_HAIL_POOLED"):
            return self._request_ride(sim, now, mode)
        if mode.endswith("_TRANSIT"):
            sim.ride_legs = [l for l in itin.legs if l.mode == "TRANSIT_RIDE"]
            sim.ride_pos = 0
            sim.day.state = "WaitingToBoard"
            first = sim.ride_legs[0]
            return [(first.depart_time, pid, ("board", 0))]
        if mode == "CAR":
            return self._drive(sim, now, itin)
        if mode == "CAV":
            return self._drive(sim, now, itin, cav=True)
        # teleported walk/bike
        body = f"body_{pid}"
        leg = itin.legs[0]
        self.events.emit(now, "PersonEntersVehicle", person=pid,
                         vehicle=leg.vehicle_id or body)
        dist = (leg.arrive_time - leg.depart_time) * (
            WALK_SPEED_MPS if mode == "WALK" else BIKE_SPEED_MPS)
        self.events.emit(leg.arrive_time, "PathTraversal", person=pid,
                         vehicle=leg.vehicle_id or body, mode=mode,
                         start_time=now, end_time=leg.arrive_time,
                         distance_m=dist, occupants=1)
        self.events.emit(leg.arrive_time, "PersonLeavesVehicle", person=pid,
                         vehicle=leg.vehicle_id or body)
        if leg.vehicle_id:  # shared or household bike rides along
            self.registry.place(leg.vehicle_id, self._dest_activity(sim).location)
        return [(leg.arrive_time, pid, ("arrive",))]

    # -- car ---------------------------------------------------------------

    def _drive(self, sim: _PersonSim, now: float, itin: router.Itinerary,
               cav: bool = False):
        pid = sim.person.id
        drive = next(l for l in itin.legs if l.mode == "CAR")
        vid = drive.vehicle_id
        if not cav:
            try:
                self.registry.reserve(vid, pid)
            except Conflict:
                sim.day.trip_utilities.pop()
                sim.day.modes.pop()
                return self._choose_and_go(sim, now, exclude=frozenset({"CAR"}))
            if sim.vehicle_id is None:
                sim.vehicle_id = vid
                sim.vehicle_anchor = sim.xy
        self.events.emit(drive.depart_time, "PersonEntersVehicle",
                         person=pid, vehicle=vid)
        dist = sum(self.scn.links[l].length_m for l in drive.link_path)
        free_flow = sum(self._free_flow[l] for l in drive.link_path)
        if not drive.link_path:
            dist = math.hypot(sim.xy[0] - self._dest_activity(sim).x,
                              sim.xy[1] - self._dest_activity(sim).y)
            free_flow = drive.arrive_time - drive.depart_time
        veh = self.scn.vehicles[vid]
        vt = self.scn.vehicle_types[veh.type_id]
        result = consume_fuel(self._fuel_state(vid), vt, dist)
        cap = vt.primary_capacity_j
        if cap > 0:
            veh.state_of_charge = max(0.0, self.fuel[vid].primary_j / cap)
        self.events.emit(drive.arrive_time, "PathTraversal", person=pid,
                         vehicle=vid, vehicle_type=vt.id,
                         mode=sim.itinerary.classification,
                         start_time=drive.depart_time, end_time=drive.arrive_time,
                         distance_m=dist, occupants=1, free_flow_s=free_flow,
                         fuel_type=vt.primary_fuel_type, fuel_j=result.total_j,
                         out_of_fuel=result.out_of_fuel or "")
        if drive.link_path:
            self.routes.append(RouteRequest(vid, list(drive.link_path),
                                            drive.depart_time))
            sim.elements[sim.idx + 1].route = list(drive.link_path)
        self.events.emit(drive.arrive_time, "PersonLeavesVehicle",
                         person=pid, vehicle=vid)
        if not cav:  # a CAV drives itself away rather than parking here
            self.registry.place(vid, self._dest_activity(sim).location)
            self._park(sim, vid, drive.arrive_time)
        return [(itin.arrival_time, sim.person.id, ("arrive",))]

    def _park(self, sim: _PersonSim, vid: str, arrival: float) -> None:
        mgr = self.ctx.parking
        if mgr is None:
            return
        dest = self._dest_activity(sim)
        next_end = dest.end_time if dest.end_time is not None else self.ctx.day_end_s
        expected = max(0.0, next_end - arrival)
        veh = self.scn.vehicles[vid]
        vt = self.scn.vehicle_types[veh.type_id]
        quotes = mgr.inquire(dest.taz, vt.category, arrival, expected)
        if not quotes:
            return
        utilities = {i: choices.parking_utility(q.price, q.walk_distance_m,
                                                self.ctx.parking_params)
                     for i, q in enumerate(quotes)}
        rng = random.Random(f"park:{sim.person.id}:{sim.trip_index}")
        pick = choices.mnl_choose(utilities, self.ctx.parking_params.epsilon, rng)
        quote = quotes[pick]
        try:
            sim.parking_reservation = mgr.claim(quote, vid, arrival)
        except Exception:
            return
        self.events.emit(arrival, "ReservesParking", person=sim.person.id,
                         vehicle=vid, taz=dest.taz, price=quote.price,
                         walk_m=quote.walk_distance_m)
        self.ctx.skims.record_parking(dest.taz, arrival, quote.price,
                                      quote.walk_distance_m)
        if quote.charger_power_kw and vt.primary_fuel_type == "Electricity":
            sim.charging = (quote.charger_power_kw, arrival)
            self.events.emit(arrival, "ChargingPlugIn", person=sim.person.id,
                             vehicle=vid, power_kw=quote.charger_power_kw,
                             soc=veh.state_of_charge)

    def _release_parking(self, sim: _PersonSim, now: float) -> None:
        if sim.parking_reservation is None:
            return
        from .parking import charge_session
        res = sim.parking_reservation
        sim.parking_reservation = None
        vid = res.vehicle_id
        if sim.charging is not None:
            power_kw, plug_in = sim.charging
            sim.charging = None
            veh = self.scn.vehicles[vid]
            vt = self.scn.vehicle_types[veh.type_id]
            session = charge_session(veh, vt, power_kw, plug_in, now)
            self._fuel_state(vid).primary_j = veh.state_of_charge * vt.primary_capacity_j
            self.events.emit(now, "ChargingPlugOut", person=sim.person.id,
                             vehicle=vid, energy_j=session.energy_j,
                             soc=session.soc_final)
        self.ctx.parking.release(res, now)

    # -- transit -----------------------------------------------------------

    def _board(self, sim: _PersonSim, now: float, ride_pos: int):
        pid = sim.person.id
        leg = sim.ride_legs[ride_pos]
        try:
            self.occupancy.board(leg.trip_id, pid, now, leg.arrive_time)
        except Denied:
            self.events.emit(now, "Replanning", person=pid,
                             reason="transit_capacity_denied",
                             trip_id=leg.trip_id, stop=leg.board_stop)
            # give up on this itinerary and walk on from the stop
            stop_xy = self.ctx.transit.stop_xy[leg.board_stop]
            sim.xy = stop_xy
            dest = self._dest_activity(sim)
            dist = math.hypot(stop_xy[0] - dest.x, stop_xy[1] - dest.y)
            arrive = now + dist / WALK_SPEED_MPS
            body = f"body_{pid}"
            self.events.emit(arrive, "PathTraversal", person=pid, vehicle=body,
                             mode="WALK", start_time=now, end_time=arrive,
                             distance_m=dist, occupants=1)
            return [(arrive, pid, ("arrive",))]
        self.events.emit(now, "PersonEntersVehicle", person=pid,
                         vehicle=leg.trip_id, stop=leg.board_stop)
        sim.day.state = "Moving"
        # the alight event is emitted up front at its scheduled future
        # time; the seat itself frees via the recorded alight time
        self.events.emit(leg.arrive_time, "PersonLeavesVehicle", person=pid,
                         vehicle=leg.trip_id, stop=leg.alight_stop)
        if ride_pos + 1 < len(sim.ride_legs):
            nxt = sim.ride_legs[ride_pos + 1]
            return [(nxt.depart_time, pid, ("board", ride_pos + 1))]
        return [(sim.itinerary.arrival_time, pid, ("arrive",))]

    # -- ride-hail ---------------------------------------------------------

    def _request_ride(self, sim: _PersonSim, now: float, mode: str):
        pid = sim.person.id
        dest = self._dest_activity(sim)
        req = ridehail.RideRequest(f"req_{pid}_{sim.trip_index}", pid,
                                   sim.xy, (dest.x, dest.y), now,
                                   pooled=mode == "RIDE_HAIL_POOLED")
        sim.request = req
        sim.day.state = "WaitingForVehicle"
        self.pending_requests[req.id] = (req, pid)
        return []

    def _handle_fleet(self, now: float, payload):
        kind = payload[0]
        if kind == "vehicle_free":
            vid, x, y = payload[1]
            for v in self.ctx.rh_fleet:
                if v.id == vid:
                    v.status = "idle"
                    v.x, v.y = x, y
            return []
        follow = []
        solo = [r for r, _ in self.pending_requests.values() if not r.pooled]
        pooled = [r for r, _ in self.pending_requests.values() if r.pooled]
        assignments, _ = ridehail.match_solo(solo, self.ctx.rh_fleet,
                                             self.ctx.rh_matching, now)
        for a in assignments:
            self._claim_vehicle(a)
        pooled_assignments, _ = ridehail.match_pooled(pooled, self.ctx.rh_fleet,
                                                      self.ctx.rh_matching, now)
        for a in pooled_assignments:
            self._claim_vehicle(a)
        for a in assignments + pooled_assignments:
            last = a.schedule[-1]
            follow.append((last.time, _FLEET,
                           ("vehicle_free", (a.vehicle_id, *last.location))))
            for stop in a.schedule:
                req, pid = self.pending_requests[stop.request_id]
                if stop.kind == "pickup":
                    follow.append((stop.time, pid, ("rh_pickup",
                                                    (a.vehicle_id, stop.time))))
                else:
                    follow.append((stop.time, pid, ("rh_dropoff",
                                                    (a.vehicle_id, stop.time))))
            for rid in a.request_ids:
                del self.pending_requests[rid]
        # expire requests that waited too long
        for rid in sorted(self.pending_requests):
            req, pid = self.pending_requests[rid]
            if now - req.request_time >= self.ctx.rh_matching.max_wait_s:
                del self.pending_requests[rid]
                follow.extend(self._ride_unmatched(self.persons[pid], now))
        if now + self.ctx.dispatch_period_s <= self.ctx.day_end_s:
            follow.append((now + self.ctx.dispatch_period_s, _FLEET, ("dispatch",)))
        return follow

    def _claim_vehicle(self, assignment) -> None:
        for v in self.ctx.rh_fleet:
            if v.id == assignment.vehicle_id:
                v.status = "occupied"

    def _ride_unmatched(self, sim: _PersonSim, now: float):
        pid = sim.person.id
        req = sim.request
        sim.request = None
        o_taz = self.scn.taz_of(*req.origin)
        self.ctx.skims.record_ridehail(o_taz, req.request_time, None)
        self.events.emit(now, "Replanning", person=pid,
                         reason="ride_hail_unmatched", request=req.id)
        dest = self._dest_activity(sim)
        dist = math.hypot(sim.xy[0] - dest.x, sim.xy[1] - dest.y)
        arrive = now + dist / WALK_SPEED_MPS
        self.events.emit(arrive, "PathTraversal", person=pid,
                         vehicle=f"body_{pid}", mode="WALK", start_time=now,
                         end_time=arrive, distance_m=dist, occupants=1)
        return [(arrive, pid, ("arrive",))]

    def _rh_pickup(self, sim: _PersonSim, now: float, info):
        vid, _ = info
        pid = sim.person.id
        wait = now - sim.request.request_time
        o_taz = self.scn.taz_of(*sim.request.origin)
        self.ctx.skims.record_ridehail(
            o_taz, sim.request.request_time, wait,
            self.ctx.rh_fares.pooled_per_mile if sim.request.pooled
            else self.ctx.rh_fares.per_mile)
        self.events.emit(now, "PersonEntersVehicle", person=pid, vehicle=vid,
                         wait_s=wait)
        sim.day.state = "Moving"
        return []

    def _rh_dropoff(self, sim: _PersonSim, now: float, info):
        vid, _ = info
        pid = sim.person.id
        req = sim.request
        sim.request = None
        dist = math.hypot(req.origin[0] - req.destination[0],
                          req.origin[1] - req.destination[1])
        self.events.emit(now, "PathTraversal", person=pid, vehicle=vid,
                         mode="RIDE_HAIL_POOLED" if req.pooled else "RIDE_HAIL",
                         start_time=req.request_time, end_time=now,
                         distance_m=dist, occupants=1,
                         free_flow_s=dist / ridehail.DEFAULT_SPEED_MPS)
        self.events.emit(now, "PersonLeavesVehicle", person=pid, vehicle=vid)
        return [(now, pid, ("arrive",))]

    # -- arrival -----------------------------------------------------------

    def _arrive(self, sim: _PersonSim, now: float):
        pid = sim.person.id
        sim.idx += 2
        act: Activity = sim.elements[sim.idx]
        sim.xy = (act.x, act.y)
        sim.arrived_at = now
        itin = sim.itinerary
        if itin is not None:
            o_taz = self.scn.taz_of(*sim.elements[sim.idx - 2].location)
            self.ctx.skims.record(TripObservation(
                sim.day.modes[-1] if sim.day.modes else "WALK",
                o_taz, act.taz, itin.depart_time, now - itin.depart_time,
                cost_usd=itin.total_cost, transfers=itin.transfers))
        sim.itinerary = None
        # a private car back at its anchor is released to the household
        if sim.vehicle_id is not None and sim.vehicle_anchor is not None:
            ax, ay = sim.vehicle_anchor
            if math.hypot(sim.xy[0] - ax, sim.xy[1] - ay) <= 1.0:
                self._release_parking(sim, now)
                self.registry.release(sim.vehicle_id, pid)
                sim.vehicle_id = None
                sim.vehicle_anchor = None
        self.events.emit(now, "ActivityStart", person=pid, activity=act.type)
        end = act.end_time
        if end is None or sim.idx + 2 >= len(sim.elements) or end >= self.ctx.day_end_s:
            return self._finish_person(sim, now)
        sim.day.state = "PerformingActivity"
        return [(max(now, end), pid, ("end_activity",))]

    def _finish_person(self, sim: _PersonSim, now: float):
        act = sim.elements[sim.idx]
        sim.day.activity_durations.append(
            (act.type, max(0.0, self.ctx.day_end_s - sim.arrived_at)))
        sim.day.state = "Finished"
        return []


def simulate_day(ctx: DayContext, iteration: int = 0) -> DayResult:
    return DayExecutor(ctx, iteration).run()
