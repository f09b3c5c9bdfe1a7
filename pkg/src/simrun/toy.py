"""Reference toy scenario: a 10x10 street grid, a synthetic commuting
population, one bus line, and a small ride-hail fleet.

Everything is generated from a single seed so two calls with the same
arguments produce byte-identical input files.
"""

from __future__ import annotations

import random
from pathlib import Path

from .scenario import (Activity, Household, Leg, Person, Plan, Link,
                       ParkingStallDescriptor, RideHailVehicleSpec, Scenario,
                       TransitRoute, TransitStopTime, TransitTrip, TAZ,
                       Vehicle, VehicleType, write_scenario)

GRID_SPACING_M = 500.0

TOY_CONFIG = """\
# reference toy scenario
seed = 42
lastIteration = 9

modeChoice.asc.CAR = 0.0
modeChoice.asc.WALK = 0.0
modeChoice.asc.BIKE = -0.5
modeChoice.asc.RIDE_HAIL = -1.0
modeChoice.asc.RIDE_HAIL_POOLED = -1.0
modeChoice.asc.WALK_TRANSIT = -0.5

discretionary.enabled = true
discretionary.seedInitialPlans = true
discretionary.beta0.shopping = -1.0
discretionary.beta0.leisure = -1.5
discretionary.betaTime.shopping = 6.0
discretionary.betaTime.leisure = 5.0
discretionary.destinationSampleCount = 5
discretionary.destinationMaxRadiusMeters = 3000.0

agents.rideHail.maxWaitingTimeInSec = 600
parking.ubiquitous = true

# congestion strong enough that iterative route learning has something to
# correct, and replanning churn low enough that it settles within 10
# iterations
physsim.flowCapacityFactor = 0.07
replanning.pKeepBest = 0.9
replanning.pClearRoutes = 0.04
replanning.pClearModes = 0.03
replanning.pClearDiscretionary = 0.03
"""


def _node(x: int, y: int) -> str:
    return f"n_{x}_{y}"


def make_network(grid: int = 10, spacing: float = GRID_SPACING_M,
                 capacity_vph: float = 600.0,
                 free_speed_mps: float = 12.5) -> dict[str, Link]:
    links: dict[str, Link] = {}
    modes = {"car", "walk", "bike"}
    for i in range(grid):
        for j in range(grid):
            x, y = int(i * spacing), int(j * spacing)
            for di, dj in ((1, 0), (0, 1)):
                ni, nj = i + di, j + dj
                if ni >= grid or nj >= grid:
                    continue
                nx, ny = int(ni * spacing), int(nj * spacing)
                for (fx, fy), (tx, ty) in (((x, y), (nx, ny)), ((nx, ny), (x, y))):
                    lid = f"l_{fx}_{fy}__{tx}_{ty}"
                    links[lid] = Link(lid, _node(fx, fy), _node(tx, ty),
                                      spacing, free_speed_mps, capacity_vph,
                                      1.0, set(modes),
                                      from_xy=(float(fx), float(fy)),
                                      to_xy=(float(tx), float(ty)))
    return links


def _taz_of(x: float, y: float) -> str:
    return f"t_{int(x // 1000)}_{int(y // 1000)}"


def make_bus_line(grid: int, spacing: float, fare: float = 2.0):
    """One east-west line across the middle row, 15-minute headways."""
    routes = {"bus_ew": TransitRoute("bus_ew", "bus")}
    trips = {}
    row_y = (grid // 2) * spacing
    stops_east = [(int(i * spacing), int(row_y)) for i in range(grid)]
    k = 0
    for depart in range(6 * 3600, 22 * 3600, 900):
        for direction, stops in (("e", stops_east), ("w", stops_east[::-1])):
            tid = f"bus_{direction}_{k:03d}"
            stop_times = []
            t = float(depart)
            for seq, (x, y) in enumerate(stops):
                is_last = seq == len(stops) - 1
                stop_times.append(TransitStopTime(
                    seq, f"s_{x}_{y}", float(x), float(y), t, t,
                    0.0 if is_last else fare))
                t += 90.0
            trips[tid] = TransitTrip(tid, "bus_ew", "bus", stop_times)
        k += 1
    return routes, trips


def make_vehicle_types() -> dict[str, VehicleType]:
    return {
        "car_ice": VehicleType("car_ice", 4, 0, 4.5, "Gasoline", 2500.0,
                               3.2e9, category="Car"),
        "car_ev": VehicleType("car_ev", 4, 0, 4.5, "Electricity", 600.0,
                              2.7e8, category="Car"),
        "bike": VehicleType("bike", 1, 0, 1.8, "Food", 50.0, 1e7,
                            category="Bike"),
        "bus": VehicleType("bus", 40, 20, 12.0, "Diesel", 25000.0, 1e10,
                           category="MediumDutyPassenger"),
    }


def make_toy(out_dir: str | Path, n_agents: int = 1000, grid: int = 10,
             seed: int = 42, rh_vehicles: int = 20,
             transit_fare: float = 2.0, write: bool = True) -> Scenario:
    rng = random.Random(f"toy:{seed}")
    spacing = GRID_SPACING_M
    links = make_network(grid, spacing)
    nodes = sorted({(int(l.from_xy[0]), int(l.from_xy[1])) for l in links.values()})

    vehicle_types = make_vehicle_types()
    persons: dict[str, Person] = {}
    households: dict[str, Household] = {}
    vehicles: dict[str, Vehicle] = {}

    # workplaces cluster in the central business district so morning flows
    # share corridors; without that the grid never congests and iterative
    # route learning has nothing to correct
    lo, hi = grid * 3 // 8, max(grid * 3 // 8 + 1, grid * 5 // 8)
    work_nodes = [(x, y) for x, y in nodes
                  if lo * spacing <= x < hi * spacing
                  and lo * spacing <= y < hi * spacing]

    n_households = max(1, n_agents // 2)
    pid_counter = 0
    for h in range(n_households):
        hid = f"h{h:04d}"
        home = rng.choice(nodes)
        hh_vehicle_ids = []
        if rng.random() < 0.8:
            vid = f"v_{hid}_car"
            vt = "car_ev" if rng.random() < 0.2 else "car_ice"
            vehicles[vid] = Vehicle(vid, vt, hid)
            hh_vehicle_ids.append(vid)
        if rng.random() < 0.3:
            vid = f"v_{hid}_bike"
            vehicles[vid] = Vehicle(vid, "bike", hid)
            hh_vehicle_ids.append(vid)
        members = []
        for _ in range(2):
            if pid_counter >= n_agents:
                break
            pid = f"p{pid_counter:04d}"
            pid_counter += 1
            members.append(pid)
            candidates = [n for n in work_nodes if n != home] or nodes
            work = rng.choice(candidates)
            while work == home:
                work = rng.choice(candidates)
            depart = 6.5 * 3600 + rng.randrange(0, 150) * 60.0
            work_end = depart + 8 * 3600 + rng.randrange(-4, 5) * 900.0
            plan = Plan(elements=[
                Activity("home", float(home[0]), float(home[1]),
                         _taz_of(*home), depart),
                Leg(),
                Activity("work", float(work[0]), float(work[1]),
                         _taz_of(*work), work_end),
                Leg(),
                Activity("home", float(home[0]), float(home[1]), _taz_of(*home)),
            ])
            persons[pid] = Person(pid, hid, age=rng.randrange(18, 80),
                                  value_of_time=round(rng.uniform(5.0, 25.0), 2),
                                  plan=plan)
        households[hid] = Household(hid, round(rng.uniform(2e4, 1.5e5), 2),
                                    _taz_of(*home), float(home[0]),
                                    float(home[1]), members, hh_vehicle_ids)
        if pid_counter >= n_agents:
            break

    routes, trips = make_bus_line(grid, spacing, fare=transit_fare)

    taz_sums: dict[str, list[float]] = {}
    for x, y in nodes:
        s = taz_sums.setdefault(_taz_of(x, y), [0.0, 0.0, 0.0])
        s[0] += x
        s[1] += y
        s[2] += 1
    tazs = {tid: TAZ(tid, sx / n, sy / n)
            for tid, (sx, sy, n) in sorted(taz_sums.items())}

    fleet = []
    for i in range(rh_vehicles):
        x, y = rng.choice(nodes)
        fleet.append(RideHailVehicleSpec(f"rh_{i:03d}", "car_ice",
                                         float(x), float(y)))

    parking = [ParkingStallDescriptor(tid, "public", "hourly", 1.0, 300)
               for tid in sorted(tazs)]
    parking += [ParkingStallDescriptor(tid, "public", "hourly", 1.5, 20,
                                       charger_power_kw=50.0)
                for tid in sorted(tazs)[::5]]

    intercepts = {
        "shopping": [0.0] * 9 + [1.0, 2.0, 2.0, 2.0, 1.0, 1.0, 1.0, 2.0,
                                 2.0, 1.0] + [0.0] * 5,
        "leisure": [0.0] * 16 + [1.0, 2.0, 3.0, 3.0, 2.0, 1.0] + [0.0] * 2,
    }
    activity_params = {
        "home": (21600.0, 1.0),
        "work": (28800.0, 3.0),
        "shopping": (3600.0, 8.0),
        "leisure": (5400.0, 6.0),
    }

    scenario = Scenario(persons, households, vehicle_types, vehicles, links,
                        routes, trips, parking, fleet, tazs, intercepts,
                        activity_params)
    if write:
        out_dir = Path(out_dir)
        write_scenario(scenario, out_dir)
        (out_dir / "config.conf").write_text(TOY_CONFIG)
    return scenario
