import pytest

from simrun import agents, ridehail
from simrun.agents import (Conflict, Denied, DayContext, FuelState,
                           HouseholdVehicleRegistry, TransitOccupancy,
                           consume_fuel, schedule_household_cavs, simulate_day)
from simrun.choices import ModeChoiceParams
from simrun.router import TransitNetwork
from simrun.scenario import (Activity, Household, Leg, Person, Plan, Link,
                             Scenario, TransitRoute, TransitStopTime,
                             TransitTrip, TAZ, Vehicle, VehicleType)
from simrun.skims import Skims


def vtype(id="car_ice", **kw):
    base = dict(seating_capacity=4, standing_capacity=0, length_meters=4.5,
                primary_fuel_type="Gasoline",
                primary_consumption_j_per_m=2000.0, primary_capacity_j=3e9)
    base.update(kw)
    return VehicleType(id, **base)


class TestConsumeFuel:
    def test_primary_only(self):
        fuel = FuelState(1000.0)
        res = consume_fuel(fuel, vtype(primary_consumption_j_per_m=1.0), 600.0)
        assert fuel.primary_j == pytest.approx(400.0)
        assert res.secondary_used_j == 0.0
        assert not res.out_of_fuel

    def test_phev_split_at_depletion(self):
        fuel = FuelState(1000.0, secondary_j=5000.0)
        vt = vtype(primary_fuel_type="Electricity",
                   primary_consumption_j_per_m=1.0,
                   secondary_fuel_type="Gasoline",
                   secondary_consumption_j_per_m=2.0,
                   secondary_capacity_j=5000.0)
        res = consume_fuel(fuel, vt, 1500.0)
        assert fuel.primary_j == pytest.approx(0.0)
        assert fuel.secondary_j == pytest.approx(4000.0)
        assert res.primary_used_j == pytest.approx(1000.0)
        assert res.secondary_used_j == pytest.approx(1000.0)
        assert not res.out_of_fuel

    def test_zero_distance_identity(self):
        fuel = FuelState(1234.0, 5678.0)
        res = consume_fuel(fuel, vtype(primary_consumption_j_per_m=1.0), 0.0)
        assert (fuel.primary_j, fuel.secondary_j) == (1234.0, 5678.0)
        assert res.total_j == 0.0

    def test_out_of_fuel_flag(self):
        fuel = FuelState(100.0)
        res = consume_fuel(fuel, vtype(primary_consumption_j_per_m=1.0), 500.0)
        assert res.out_of_fuel
        assert fuel.primary_j == pytest.approx(0.0)

    def test_negative_distance_rejected(self):
        with pytest.raises(ValueError):
            consume_fuel(FuelState(1.0), vtype(), -1.0)


class TestRegistry:
    def test_conflict_on_double_reserve(self):
        reg = HouseholdVehicleRegistry()
        reg.reserve("v1", "p1")
        with pytest.raises(Conflict):
            reg.reserve("v1", "p2")

    def test_same_holder_is_idempotent(self):
        reg = HouseholdVehicleRegistry()
        reg.reserve("v1", "p1")
        reg.reserve("v1", "p1")

    def test_release_frees(self):
        reg = HouseholdVehicleRegistry()
        reg.reserve("v1", "p1")
        reg.release("v1", "p1")
        reg.reserve("v1", "p2")

    def test_available_at_filters_location_and_holds(self):
        reg = HouseholdVehicleRegistry()
        reg.place("v1", (0.0, 0.0))
        reg.place("v2", (500.0, 0.0))
        reg.place("v3", (0.0, 0.0))
        reg.reserve("v3", "p9")
        assert reg.available_at(["v1", "v2", "v3"], (0.0, 0.0)) == ["v1"]


class TestTransitOccupancy:
    def test_board_under_capacity(self):
        occ = TransitOccupancy({"t1": 2})
        occ.board("t1", "p1")

    def test_denied_at_capacity(self):
        occ = TransitOccupancy({"t1": 1})
        occ.board("t1", "p1")
        with pytest.raises(Denied):
            occ.board("t1", "p2")

    def test_alight_frees_a_seat(self):
        occ = TransitOccupancy({"t1": 1})
        occ.board("t1", "p1")
        occ.alight("t1", "p1")
        occ.board("t1", "p2")
        assert occ.peak["t1"] == 1


def plan_with_trip(depart_h, o_taz="t1", d_taz="t2", back_h=None):
    elements = [Activity("home", 0, 0, o_taz, depart_h * 3600.0), Leg(),
                Activity("work", 1000, 0, d_taz,
                         back_h * 3600.0 if back_h else None)]
    if back_h:
        elements += [Leg(), Activity("home", 0, 0, o_taz)]
    return Plan(elements=elements)


class TestCavScheduling:
    def tt(self, o, d, depart):
        return 0.0 if o == d else 600.0

    def test_two_sequential_trips_one_cav(self):
        plans = {"p1": plan_with_trip(8), "p2": plan_with_trip(10)}
        out = schedule_household_cavs(plans, ["cav1"], "t1", self.tt)
        assert len(out) == 2
        # second pickup needs a deadhead back from t2
        assert out[1].reposition_from == "t2"

    def test_simultaneous_trips_one_cav(self):
        plans = {"p1": plan_with_trip(8), "p2": plan_with_trip(8)}
        out = schedule_household_cavs(plans, ["cav1"], "t1", self.tt)
        assert len(out) == 1
        assert out[0].person_id == "p1"

    def test_zero_cavs(self):
        assert schedule_household_cavs({"p1": plan_with_trip(8)}, [],
                                       "t1", self.tt) == []

    def test_infeasible_deadhead_skipped(self):
        def slow(o, d, depart):
            return 0.0 if o == d else 4 * 3600.0
        plans = {"p1": plan_with_trip(8), "p2": plan_with_trip(9)}
        out = schedule_household_cavs(plans, ["cav1"], "t1", slow)
        assert [a.person_id for a in out] == ["p1"]


# --------------------------------------------------------------------------
# day execution


def two_node_scenario(n_persons=1, n_cars=1, fixed_mode="CAR"):
    links = {
        "l_ab": Link("l_ab", "n_0_0", "n_1_0", 1000.0, 10.0, 1800.0, 1.0,
                     {"car"}, from_xy=(0.0, 0.0), to_xy=(1000.0, 0.0)),
        "l_ba": Link("l_ba", "n_1_0", "n_0_0", 1000.0, 10.0, 1800.0, 1.0,
                     {"car"}, from_xy=(1000.0, 0.0), to_xy=(0.0, 0.0)),
    }
    tazs = {"t1": TAZ("t1", 0.0, 0.0), "t2": TAZ("t2", 1000.0, 0.0)}
    persons, households, vehicles = {}, {}, {}
    vts = {"car_ice": vtype()}
    hh_vehicles = [f"v{i}" for i in range(n_cars)]
    for vid in hh_vehicles:
        vehicles[vid] = Vehicle(vid, "car_ice", "h1")
    members = []
    for i in range(n_persons):
        pid = f"p{i}"
        members.append(pid)
        plan = Plan(elements=[
            Activity("home", 0.0, 0.0, "t1", 8 * 3600.0),
            Leg(mode=fixed_mode),
            Activity("work", 1000.0, 0.0, "t2", 16 * 3600.0),
            Leg(mode=fixed_mode),
            Activity("home", 0.0, 0.0, "t1"),
        ])
        persons[pid] = Person(pid, "h1", value_of_time=10.0, plan=plan)
    households["h1"] = Household("h1", 50000.0, "t1", 0.0, 0.0,
                                 members, hh_vehicles)
    return Scenario(persons, households, vts, vehicles, links, {}, {}, [],
                    [], tazs, {}, {})


def make_ctx(scn, **kw):
    skims = Skims(taz_centroids={t.id: t.centroid for t in scn.tazs.values()})
    return DayContext(scenario=scn, mode_params=ModeChoiceParams(),
                      skims=skims, **kw)


def by_type(events, type):
    return [e for e in events.events if e.type == type]


class TestDayExecutor:
    def test_single_driver_finishes(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        day = result.person_days["p0"]
        assert day.state == "Finished"
        assert day.modes == ["CAR", "CAR"]
        assert len(result.routes) == 2
        assert result.routes[0].link_path == ["l_ab"]
        assert result.stuck_count == 0

    def test_event_alternation_per_vehicle(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        seen = {}
        ordered = result.events.sorted()
        for e in ordered:
            if e.type in ("PersonEntersVehicle", "PersonLeavesVehicle"):
                key = (e.attributes["person"], e.attributes["vehicle"])
                expected = "PersonEntersVehicle" if seen.get(key, 0) % 2 == 0 \
                    else "PersonLeavesVehicle"
                assert e.type == expected
                seen[key] = seen.get(key, 0) + 1
        assert all(n % 2 == 0 for n in seen.values())

    def test_activity_durations_cover_the_day(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        day = result.person_days["p0"]
        types = [t for t, _ in day.activity_durations]
        assert types == ["home", "work", "home"]
        assert day.activity_durations[0][1] == pytest.approx(8 * 3600.0)

    def test_free_flow_drive_time(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        pts = [e for e in by_type(result.events, "PathTraversal")
               if e.attributes["mode"] == "CAR"]
        tt = pts[0].attributes["end_time"] - pts[0].attributes["start_time"]
        assert tt == pytest.approx(100.0)  # 1000 m at 10 m/s
        assert pts[0].attributes["free_flow_s"] == pytest.approx(100.0)

    def test_fuel_drained_per_meter(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        pts = [e for e in by_type(result.events, "PathTraversal")
               if e.attributes["mode"] == "CAR"]
        assert pts[0].attributes["fuel_j"] == pytest.approx(2000.0 * 1000.0)

    def test_vehicle_conflict_second_member_walks(self):
        scn = two_node_scenario(n_persons=2, n_cars=1)
        result = simulate_day(make_ctx(scn))
        modes_p0 = result.person_days["p0"].modes
        modes_p1 = result.person_days["p1"].modes
        assert modes_p0[0] == "CAR"
        assert modes_p1[0] == "WALK"  # car already held at 08:00
        assert result.stuck_count == 0

    def test_walk_only_when_no_cars(self):
        scn = two_node_scenario(n_cars=0, fixed_mode=None)
        result = simulate_day(make_ctx(scn))
        assert result.person_days["p0"].modes == ["WALK", "WALK"]

    def test_mode_choice_events_emitted(self):
        scn = two_node_scenario()
        result = simulate_day(make_ctx(scn))
        mcs = by_type(result.events, "ModeChoice")
        assert len(mcs) == 2
        assert mcs[0].attributes["origin_taz"] == "t1"
        assert mcs[0].attributes["dest_taz"] == "t2"

    def test_skims_observe_trips(self):
        scn = two_node_scenario()
        ctx = make_ctx(scn)
        simulate_day(ctx)
        ctx.skims.finalize_iteration()
        entry = ctx.skims.lookup("CAR", "t1", "t2", 8)
        assert not entry.fallback
        assert entry.mean_time == pytest.approx(100.0)

    def test_ubiquitous_parking_reserved(self):
        from simrun.parking import ParkingManager
        scn = two_node_scenario()
        ctx = make_ctx(scn, parking=ParkingManager([], ubiquitous=True))
        result = simulate_day(ctx)
        assert len(by_type(result.events, "ReservesParking")) == 2


def transit_scenario(n_persons=2, seats=1):
    scn = two_node_scenario(n_persons=n_persons, n_cars=0,
                            fixed_mode="WALK_TRANSIT")
    for p in scn.persons.values():
        work = p.plan.activities()[1]
        work.x, work.y = 2000.0, 0.0
        work.taz = "t2"
    scn.tazs["t2"] = TAZ("t2", 2000.0, 0.0)
    scn.vehicle_types["bus"] = vtype("bus", seating_capacity=seats,
                                     standing_capacity=0, category="Bus",
                                     primary_fuel_type="Diesel")
    scn.transit_routes["r1"] = TransitRoute("r1", "bus")
    h = 8 * 3600.0
    for k, (dep, arr) in enumerate([(h + 300, h + 900), (h + 3900, h + 4500)]):
        scn.transit_trips[f"trip{k}"] = TransitTrip(f"trip{k}", "r1", "bus", [
            TransitStopTime(0, "s1", 0.0, 0.0, dep, dep, 2.0),
            TransitStopTime(1, "s2", 2000.0, 0.0, arr, arr, 0.0),
        ])
    return scn


class TestTransitDay:
    def test_boarding_and_arrival(self):
        scn = transit_scenario(n_persons=1, seats=2)
        net = TransitNetwork(scn.transit_routes, scn.transit_trips)
        result = simulate_day(make_ctx(scn, transit=net))
        day = result.person_days["p0"]
        assert day.state == "Finished"
        assert day.modes[0] == "WALK_TRANSIT"
        enters = by_type(result.events, "PersonEntersVehicle")
        assert any(e.attributes["vehicle"] == "trip0" for e in enters)

    def test_capacity_one_denies_second_boarder(self):
        scn = transit_scenario(n_persons=2, seats=1)
        net = TransitNetwork(scn.transit_routes, scn.transit_trips)
        result = simulate_day(make_ctx(scn, transit=net))
        boards = [e for e in by_type(result.events, "PersonEntersVehicle")
                  if str(e.attributes["vehicle"]).startswith("trip")]
        denials = [e for e in by_type(result.events, "Replanning")
                   if e.attributes["reason"] == "transit_capacity_denied"]
        assert len(boards) == 1
        assert len(denials) == 1
        assert result.stuck_count == 0
        # the denied rider still gets to work on foot
        assert all(d.state == "Finished" for d in result.person_days.values())

    def test_transit_vehicle_traversal_reports_peak(self):
        scn = transit_scenario(n_persons=1, seats=2)
        net = TransitNetwork(scn.transit_routes, scn.transit_trips)
        result = simulate_day(make_ctx(scn, transit=net))
        pts = [e for e in by_type(result.events, "PathTraversal")
               if e.attributes["mode"] == "TRANSIT"]
        assert len(pts) == 1
        assert pts[0].attributes["occupants"] == 1


class TestRideHailDay:
    def test_matched_ride(self):
        scn = two_node_scenario(n_cars=0, fixed_mode="RIDE_HAIL")
        fleet = [ridehail.FleetVehicle("rh_1", 0.0, 0.0)]
        result = simulate_day(make_ctx(scn, rh_fleet=fleet))
        day = result.person_days["p0"]
        assert day.state == "Finished"
        enters = [e for e in by_type(result.events, "PersonEntersVehicle")
                  if e.attributes["vehicle"] == "rh_1"]
        assert len(enters) == 2
        assert enters[0].attributes["wait_s"] >= 0.0

    def test_unmatched_falls_back_to_walk(self):
        scn = two_node_scenario(n_cars=0, fixed_mode="RIDE_HAIL")
        fleet = [ridehail.FleetVehicle("rh_1", 0.0, 0.0,
                                       geofence=(99000.0, 99000.0, 10.0))]
        ctx = make_ctx(scn, rh_fleet=fleet,
                       rh_matching=ridehail.MatchingParams(max_wait_s=60.0))
        result = simulate_day(ctx)
        reasons = [e.attributes["reason"]
                   for e in by_type(result.events, "Replanning")]
        assert reasons.count("ride_hail_unmatched") == 2
        assert result.person_days["p0"].state == "Finished"

    def test_wait_recorded_in_skims(self):
        scn = two_node_scenario(n_cars=0, fixed_mode="RIDE_HAIL")
        fleet = [ridehail.FleetVehicle("rh_1", 0.0, 0.0)]
        ctx = make_ctx(scn, rh_fleet=fleet)
        simulate_day(ctx)
        ctx.skims.finalize_iteration()
        entry = ctx.skims.lookup_ridehail("t1", 8)
        assert not entry.fallback
        assert entry.unmatched_fraction == 0.0
