"""Scenario inputs: population, plans, vehicles, network, transit, parking
and on-demand fleets, loaded from CSV into one cross-referenced Scenario.

All files are UTF-8 comma-separated CSV with lower_snake_case headers and
"." decimals.  Coordinates are planar x/y in meters.
"""

from __future__ import annotations

import csv
import math
import random
from dataclasses import dataclass, field
from pathlib import Path


MANDATORY_ACTIVITY_TYPES = {"work", "school"}

FUEL_TYPES = {"Gasoline", "Diesel", "Electricity", "Biodiesel", "Food", "Undefined"}
VEHICLE_CATEGORIES = {
    "Body", "Bike", "Car", "MediumDutyPassenger", "LightDutyTruck", "HeavyDutyTruck",
}

MODES = {
    "WALK", "BIKE", "CAR", "CAV", "RIDE_HAIL", "RIDE_HAIL_POOLED",
    "WALK_TRANSIT", "BIKE_TRANSIT", "DRIVE_TRANSIT", "RIDE_HAIL_TRANSIT",
    "SHARED_BIKE", "SHARED_CAR",
}


class ScenarioError(Exception):
    pass


class MissingFile(ScenarioError):
    pass


class SchemaError(ScenarioError):
    pass


class DanglingReference(ScenarioError):
    pass


class BadProbability(ScenarioError):
    pass


# --------------------------------------------------------------------------
# domain types


@dataclass
class Activity:
    type: str
    x: float
    y: float
    taz: str
    end_time: float | None = None  # seconds from midnight; None for the last activity
    tour_id: str | None = None

    @property
    def mandatory(self) -> bool:
        return self.type in MANDATORY_ACTIVITY_TYPES

    @property
    def location(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass
class Leg:
    mode: str | None = None  # fixes the first-iteration choice when present
    tour_id: str | None = None
    route: list[str] | None = None  # link path kept from the last execution


@dataclass
class Plan:
    elements: list = field(default_factory=list)  # Activity | Leg, strictly alternating
    score: float | None = None
    selected: bool = True

    def activities(self) -> list[Activity]:
        return [e for e in self.elements if isinstance(e, Activity)]

    def legs(self) -> list[Leg]:
        return [e for e in self.elements if isinstance(e, Leg)]

    def validate(self, owner: str = "?") -> None:
        if not self.elements:
            raise SchemaError(f"plan for {owner} is empty")
        if not isinstance(self.elements[0], Activity) or not isinstance(self.elements[-1], Activity):
            raise SchemaError(f"plan for {owner} must start and end with an activity")
        for a, b in zip(self.elements, self.elements[1:]):
            if isinstance(a, Activity) == isinstance(b, Activity):
                raise SchemaError(f"plan for {owner} does not alternate activity/leg")
        ends = [a.end_time for a in self.activities() if a.end_time is not None]
        if any(t2 < t1 for t1, t2 in zip(ends, ends[1:])):
            raise SchemaError(f"plan for {owner} has decreasing activity end times")


@dataclass
class Person:
    id: str
    household_id: str
    age: int | None = None
    value_of_time: float | None = None  # dollars/hour
    plan: Plan = field(default_factory=Plan)


@dataclass
class Household:
    id: str
    income: float
    home_taz: str
    x: float
    y: float
    member_ids: list[str] = field(default_factory=list)
    vehicle_ids: list[str] = field(default_factory=list)


@dataclass
class VehicleType:
    id: str
    seating_capacity: int
    standing_capacity: int
    length_meters: float
    primary_fuel_type: str
    primary_consumption_j_per_m: float
    primary_capacity_j: float
    secondary_fuel_type: str | None = None
    secondary_consumption_j_per_m: float | None = None
    secondary_capacity_j: float | None = None
    automation_level: int = 1
    category: str = "Car"
    sample_probability_string: str | None = None
    charging_capability: str | None = None

    def validate(self) -> None:
        if self.primary_fuel_type not in FUEL_TYPES:
            raise SchemaError(f"vehicle type {self.id}: unknown fuel {self.primary_fuel_type!r}")
        if self.category not in VEHICLE_CATEGORIES:
            raise SchemaError(f"vehicle type {self.id}: unknown category {self.category!r}")
        if self.category != "Body" and self.primary_consumption_j_per_m <= 0:
            raise SchemaError(f"vehicle type {self.id}: consumption must be > 0")
        if self.primary_fuel_type != "Undefined" and self.primary_capacity_j <= 0:
            raise SchemaError(f"vehicle type {self.id}: capacity must be > 0")
        if not 1 <= self.automation_level <= 5:
            raise SchemaError(f"vehicle type {self.id}: automation level out of range")


@dataclass
class Vehicle:
    id: str
    type_id: str
    household_id: str | None = None
    state_of_charge: float = 1.0

    def validate(self) -> None:
        if not 0.0 <= self.state_of_charge <= 1.0:
            raise SchemaError(f"vehicle {self.id}: state of charge outside [0, 1]")


@dataclass
class Link:
    id: str
    from_node: str
    to_node: str
    length_m: float
    free_speed_mps: float
    capacity_vph: float
    lanes: float
    modes: set[str]
    grade_pct: float = 0.0
    taz: str | None = None
    from_xy: tuple[float, float] | None = None
    to_xy: tuple[float, float] | None = None

    def validate(self) -> None:
        if self.length_m <= 0 or self.free_speed_mps <= 0 or self.capacity_vph <= 0:
            raise SchemaError(f"link {self.id}: length, speed and capacity must be > 0")


@dataclass
class TransitRoute:
    id: str
    type: str  # bus | rail | subway | ferry ...


@dataclass
class TransitStopTime:
    stop_seq: int
    stop_id: str
    x: float
    y: float
    arrival_s: float
    departure_s: float
    fare_usd: float


@dataclass
class TransitTrip:
    id: str
    route_id: str
    vehicle_type_id: str
    stop_times: list[TransitStopTime] = field(default_factory=list)


@dataclass
class ParkingStallDescriptor:
    zone: str
    stall_type: str  # residential | workplace | public
    pricing: str  # hourly | fixed
    cost: float
    count: int
    charger_power_kw: float | None = None
    x: float | None = None
    y: float | None = None
    manager_type: str = "taz"
    manager_id: str = "default"
    restricted_category: str | None = None
    restriction_window: tuple[float, float] | None = None  # seconds from midnight

    def validate(self) -> None:
        if self.cost < 0:
            raise SchemaError(f"parking in zone {self.zone}: negative cost")
        if self.restriction_window is not None:
            lo, hi = self.restriction_window
            if not (0 <= lo <= hi <= 24 * 3600):
                raise SchemaError(f"parking in zone {self.zone}: bad restriction window")


@dataclass
class RideHailVehicleSpec:
    vehicle_id: str
    vehicle_type_id: str
    x: float
    y: float
    soc: float = 1.0
    shift_start_s: float = 0.0
    shift_end_s: float = 129600.0
    geofence: tuple[float, float, float] | None = None  # (cx, cy, radius_m)
    autonomous: bool = False


@dataclass
class TAZ:
    id: str
    centroid_x: float
    centroid_y: float
    link_ids: list[str] = field(default_factory=list)

    @property
    def centroid(self) -> tuple[float, float]:
        return (self.centroid_x, self.centroid_y)


@dataclass
class Scenario:
    persons: dict[str, Person]
    households: dict[str, Household]
    vehicle_types: dict[str, VehicleType]
    vehicles: dict[str, Vehicle]
    links: dict[str, Link]
    transit_routes: dict[str, TransitRoute]
    transit_trips: dict[str, TransitTrip]
    parking: list[ParkingStallDescriptor]
    ridehail_fleet: list[RideHailVehicleSpec]
    tazs: dict[str, TAZ]
    activity_intercepts: dict[str, list[float]]  # activity type -> 24 hourly weights
    activity_params: dict[str, tuple[float, float]]  # type -> (mean_dur_s, vot_usd_per_hr)

    def household_vehicles(self, household_id: str) -> list[Vehicle]:
        hh = self.households[household_id]
        return [self.vehicles[v] for v in hh.vehicle_ids]

    def taz_of(self, x: float, y: float) -> str:
        best, best_d = None, math.inf
        for taz in self.tazs.values():
            d = (taz.centroid_x - x) ** 2 + (taz.centroid_y - y) ** 2
            if d < best_d:
                best, best_d = taz.id, d
        if best is None:
            raise ScenarioError("scenario has no TAZs")
        return best


# --------------------------------------------------------------------------
# CSV plumbing


def _read_rows(path: Path, required: list[str]) -> list[dict]:
    if not path.exists():
        raise MissingFile(f"required input file missing: {path}")
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in required:
            if col not in header:
                raise SchemaError(f"{path.name}: missing column {col!r}")
        return [row for row in reader]


def _opt_float(value: str | None) -> float | None:
    if value is None or value.strip() == "":
        return None
    return float(value)


def _opt_str(value: str | None) -> str | None:
    if value is None or value.strip() == "":
        return None
    return value.strip()


def _parse_hhmm(text: str) -> float:
    hh, mm = text.split(":")
    return int(hh) * 3600.0 + int(mm) * 60.0


def parse_sample_probability_string(text: str) -> dict:
    """Parse a vehicle-type sampling clause string.

    Accepted shapes are ``ridehail all:P``, ``income X-Y:Q`` and the
    two-clause combination ``ridehail all:P; income X-Y:Q``.  Anything
    else is rejected.
    """
    out: dict = {"ridehail_all": None, "income_bands": []}
    for clause in text.split(";"):
        clause = clause.strip()
        if not clause:
            continue
        head, _, weight = clause.rpartition(":")
        head = head.strip()
        try:
            w = float(weight)
        except ValueError:
            raise BadProbability(f"bad weight in clause {clause!r}")
        if w < 0:
            raise BadProbability(f"negative weight in clause {clause!r}")
        if head == "ridehail all":
            out["ridehail_all"] = w
        elif head.startswith("income "):
            band = head[len("income "):]
            try:
                lo, hi = band.split("-")
                out["income_bands"].append((float(lo), float(hi), w))
            except ValueError:
                raise BadProbability(f"bad income band in clause {clause!r}")
        else:
            raise BadProbability(f"unrecognized clause {clause!r}")
    return out


# --------------------------------------------------------------------------
# loaders


def load_vehicle_types(path: Path) -> dict[str, VehicleType]:
    rows = _read_rows(path, [
        "vehicle_type_id", "seating_capacity", "standing_capacity", "length_meters",
        "primary_fuel_type", "primary_fuel_consumption_j_per_m", "primary_fuel_capacity_j",
        "automation_level", "vehicle_category",
    ])
    out = {}
    for row in rows:
        vt = VehicleType(
            id=row["vehicle_type_id"],
            seating_capacity=int(row["seating_capacity"]),
            standing_capacity=int(row["standing_capacity"]),
            length_meters=float(row["length_meters"]),
            primary_fuel_type=row["primary_fuel_type"],
            primary_consumption_j_per_m=float(row["primary_fuel_consumption_j_per_m"]),
            primary_capacity_j=float(row["primary_fuel_capacity_j"]),
            secondary_fuel_type=_opt_str(row.get("secondary_fuel_type")),
            secondary_consumption_j_per_m=_opt_float(row.get("secondary_fuel_consumption_j_per_m")),
            secondary_capacity_j=_opt_float(row.get("secondary_fuel_capacity_j")),
            automation_level=int(row["automation_level"]),
            category=row["vehicle_category"],
            sample_probability_string=_opt_str(row.get("sample_probability_string")),
            charging_capability=_opt_str(row.get("charging_capability")),
        )
        vt.validate()
        if vt.sample_probability_string:
            parse_sample_probability_string(vt.sample_probability_string)
        out[vt.id] = vt
    if not out:
        raise SchemaError(f"{path.name}: no vehicle types defined")
    return out


def load_network(path: Path) -> dict[str, Link]:
    rows = _read_rows(path, [
        "link_id", "from_node", "to_node", "length_m", "free_speed_mps",
        "capacity_vph", "lanes", "modes",
    ])
    out = {}
    for row in rows:
        link = Link(
            id=row["link_id"],
            from_node=row["from_node"],
            to_node=row["to_node"],
            length_m=float(row["length_m"]),
            free_speed_mps=float(row["free_speed_mps"]),
            capacity_vph=float(row["capacity_vph"]),
            lanes=float(row["lanes"]),
            modes=set(m for m in row["modes"].split("|") if m),
            grade_pct=float(row.get("grade_pct") or 0.0),
        )
        if _opt_float(row.get("from_x")) is not None:
            link.from_xy = (float(row["from_x"]), float(row["from_y"]))
            link.to_xy = (float(row["to_x"]), float(row["to_y"]))
        link.validate()
        out[link.id] = link
    if not out:
        raise SchemaError(f"{path.name}: empty network")
    return out


def load_population(dirpath: Path) -> tuple[dict[str, Person], dict[str, Household]]:
    hh_rows = _read_rows(dirpath / "households.csv", ["id", "income", "home_taz", "x", "y"])
    households = {}
    for row in hh_rows:
        income = float(row["income"])
        if income < 0:
            raise SchemaError(f"household {row['id']}: negative income")
        households[row["id"]] = Household(
            id=row["id"], income=income, home_taz=row["home_taz"],
            x=float(row["x"]), y=float(row["y"]),
        )

    p_rows = _read_rows(dirpath / "persons.csv", ["id", "household_id"])
    persons = {}
    for row in p_rows:
        hh_id = row["household_id"]
        if hh_id not in households:
            raise DanglingReference(f"person {row['id']} references unknown household {hh_id}")
        person = Person(
            id=row["id"], household_id=hh_id,
            age=int(row["age"]) if _opt_str(row.get("age")) else None,
            value_of_time=_opt_float(row.get("value_of_time")),
        )
        persons[person.id] = person
        households[hh_id].member_ids.append(person.id)

    plan_rows = _read_rows(dirpath / "plans.csv", ["person_id", "elem_index", "elem_type"])
    by_person: dict[str, list[dict]] = {}
    for row in plan_rows:
        pid = row["person_id"]
        if pid not in persons:
            raise DanglingReference(f"plans.csv references unknown person {pid}")
        by_person.setdefault(pid, []).append(row)
    for pid, rows in by_person.items():
        rows.sort(key=lambda r: int(r["elem_index"]))
        plan = Plan()
        for row in rows:
            if row["elem_type"] == "activity":
                plan.elements.append(Activity(
                    type=row["activity_type"],
                    x=float(row["x"]), y=float(row["y"]), taz=row["taz"],
                    end_time=_opt_float(row.get("end_time")),
                    tour_id=_opt_str(row.get("tour_id")),
                ))
            elif row["elem_type"] == "leg":
                mode = _opt_str(row.get("mode"))
                if mode is not None and mode not in MODES:
                    raise SchemaError(f"plans.csv: unknown mode {mode!r} for person {pid}")
                plan.elements.append(Leg(mode=mode, tour_id=_opt_str(row.get("tour_id"))))
            else:
                raise SchemaError(f"plans.csv: bad elem_type {row['elem_type']!r}")
        plan.validate(owner=pid)
        persons[pid].plan = plan
    return persons, households


def load_vehicles(path: Path, vehicle_types: dict, households: dict) -> dict[str, Vehicle]:
    rows = _read_rows(path, ["vehicle_id", "vehicle_type_id"])
    out = {}
    for row in rows:
        type_id = row["vehicle_type_id"]
        if type_id not in vehicle_types:
            raise DanglingReference(f"vehicle {row['vehicle_id']} references unknown type {type_id}")
        hh_id = _opt_str(row.get("household_id"))
        if hh_id is not None and hh_id not in households:
            raise DanglingReference(f"vehicle {row['vehicle_id']} references unknown household {hh_id}")
        veh = Vehicle(
            id=row["vehicle_id"], type_id=type_id, household_id=hh_id,
            state_of_charge=_opt_float(row.get("state_of_charge")) or 1.0,
        )
        veh.validate()
        out[veh.id] = veh
        if hh_id is not None:
            households[hh_id].vehicle_ids.append(veh.id)
    return out


def load_transit(dirpath: Path, vehicle_types: dict) -> tuple[dict, dict]:
    routes_path = dirpath / "routes.csv"
    if not routes_path.exists():
        return {}, {}
    routes = {
        r["route_id"]: TransitRoute(id=r["route_id"], type=r["type"])
        for r in _read_rows(routes_path, ["route_id", "type"])
    }
    trips = {}
    for row in _read_rows(dirpath / "trips.csv", ["trip_id", "route_id", "vehicle_type_id"]):
        if row["route_id"] not in routes:
            raise DanglingReference(f"trip {row['trip_id']} references unknown route {row['route_id']}")
        if row["vehicle_type_id"] not in vehicle_types:
            raise DanglingReference(
                f"trip {row['trip_id']} references unknown vehicle type {row['vehicle_type_id']}")
        trips[row["trip_id"]] = TransitTrip(
            id=row["trip_id"], route_id=row["route_id"],
            vehicle_type_id=row["vehicle_type_id"],
        )
    for row in _read_rows(dirpath / "stop_times.csv",
                          ["trip_id", "stop_seq", "stop_id", "x", "y",
                           "arrival_s", "departure_s", "fare_usd"]):
        if row["trip_id"] not in trips:
            raise DanglingReference(f"stop_times.csv references unknown trip {row['trip_id']}")
        trips[row["trip_id"]].stop_times.append(TransitStopTime(
            stop_seq=int(row["stop_seq"]), stop_id=row["stop_id"],
            x=float(row["x"]), y=float(row["y"]),
            arrival_s=float(row["arrival_s"]), departure_s=float(row["departure_s"]),
            fare_usd=float(row["fare_usd"]),
        ))
    for trip in trips.values():
        trip.stop_times.sort(key=lambda st: st.stop_seq)
        times = [st.arrival_s for st in trip.stop_times]
        if any(b < a for a, b in zip(times, times[1:])):
            raise SchemaError(f"trip {trip.id}: stop arrival times not non-decreasing")
    return routes, trips


def load_parking(path: Path) -> list[ParkingStallDescriptor]:
    if not path.exists():
        return []
    rows = _read_rows(path, ["zone", "stall_type", "pricing", "cost_usd", "count"])
    out = []
    for row in rows:
        manager = _opt_str(row.get("manager")) or "taz(default)"
        if "(" in manager and manager.endswith(")"):
            mtype, mid = manager[:-1].split("(", 1)
        else:
            mtype, mid = manager, "default"
        restricted_category = None
        restriction_window = None
        restriction = _opt_str(row.get("time_restriction"))
        if restriction:
            cat, _, window = restriction.partition("|")
            lo, _, hi = window.partition("-")
            restricted_category = cat
            restriction_window = (_parse_hhmm(lo), _parse_hhmm(hi))
        desc = ParkingStallDescriptor(
            zone=row["zone"], stall_type=row["stall_type"], pricing=row["pricing"],
            cost=float(row["cost_usd"]), count=int(row["count"]),
            charger_power_kw=_opt_float(row.get("charger_power_kw")),
            x=_opt_float(row.get("x")), y=_opt_float(row.get("y")),
            manager_type=mtype, manager_id=mid,
            restricted_category=restricted_category,
            restriction_window=restriction_window,
        )
        desc.validate()
        out.append(desc)
    return out


def load_ridehail_fleet(path: Path, vehicle_types: dict) -> list[RideHailVehicleSpec]:
    if not path.exists():
        return []
    rows = _read_rows(path, ["vehicle_id", "vehicle_type_id", "x", "y"])
    out = []
    for row in rows:
        if row["vehicle_type_id"] not in vehicle_types:
            raise DanglingReference(
                f"ride-hail vehicle {row['vehicle_id']} references unknown type {row['vehicle_type_id']}")
        geofence = None
        if _opt_float(row.get("geofence_radius_m")) is not None:
            geofence = (
                float(row["geofence_x"]), float(row["geofence_y"]),
                float(row["geofence_radius_m"]),
            )
        out.append(RideHailVehicleSpec(
            vehicle_id=row["vehicle_id"], vehicle_type_id=row["vehicle_type_id"],
            x=float(row["x"]), y=float(row["y"]),
            soc=_opt_float(row.get("soc")) or 1.0,
            shift_start_s=_opt_float(row.get("shift_start_s")) or 0.0,
            shift_end_s=_opt_float(row.get("shift_end_s")) or 129600.0,
            geofence=geofence,
            autonomous=(_opt_str(row.get("autonomous")) or "").lower() in ("1", "true", "yes"),
        ))
    return out


def load_activity_tables(dirpath: Path) -> tuple[dict, dict]:
    intercepts: dict[str, list[float]] = {}
    path = dirpath / "activity_intercepts.csv"
    if path.exists():
        hour_cols = [f"hour_{h}" for h in range(24)]
        for row in _read_rows(path, ["activity_type"] + hour_cols):
            intercepts[row["activity_type"]] = [float(row[c]) for c in hour_cols]
    params: dict[str, tuple[float, float]] = {}
    path = dirpath / "activity_params.csv"
    if path.exists():
        for row in _read_rows(path, ["activity_type", "mean_duration_s", "value_of_time_usd_per_hr"]):
            params[row["activity_type"]] = (
                float(row["mean_duration_s"]), float(row["value_of_time_usd_per_hr"]))
    return intercepts, params


def _build_tazs(dirpath: Path, links: dict, households: dict, persons: dict) -> dict[str, TAZ]:
    tazs: dict[str, TAZ] = {}
    path = dirpath / "taz.csv"
    if path.exists():
        for row in _read_rows(path, ["taz_id", "centroid_x", "centroid_y"]):
            tazs[row["taz_id"]] = TAZ(row["taz_id"], float(row["centroid_x"]), float(row["centroid_y"]))
    else:
        # Derive centroids from coordinates labeled with each TAZ id.
        sums: dict[str, list[float]] = {}
        for hh in households.values():
            s = sums.setdefault(hh.home_taz, [0.0, 0.0, 0.0])
            s[0] += hh.x
            s[1] += hh.y
            s[2] += 1
        for person in persons.values():
            for act in person.plan.activities():
                s = sums.setdefault(act.taz, [0.0, 0.0, 0.0])
                s[0] += act.x
                s[1] += act.y
                s[2] += 1
        for taz_id, (sx, sy, n) in sums.items():
            tazs[taz_id] = TAZ(taz_id, sx / n, sy / n)
    if not tazs:
        raise SchemaError("no TAZs could be derived (provide taz.csv)")
    # Assign every link to the nearest TAZ centroid (by arbitrary-but-fixed
    # midpoint proxy: links carry no coordinates, so use from-node hash order
    # only when no geometry is available).
    node_xy = infer_node_coordinates(links, tazs)
    for link in links.values():
        fx, fy = node_xy.get(link.from_node, (0.0, 0.0))
        tx, ty = node_xy.get(link.to_node, (0.0, 0.0))
        mx, my = (fx + tx) / 2.0, (fy + ty) / 2.0
        best, best_d = None, math.inf
        for taz in tazs.values():
            d = (taz.centroid_x - mx) ** 2 + (taz.centroid_y - my) ** 2
            if d < best_d:
                best, best_d = taz, d
        best.link_ids.append(link.id)
        link.taz = best.id
    return tazs


def infer_node_coordinates(links: dict, tazs: dict | None = None) -> dict[str, tuple[float, float]]:
    """Node coordinates from the optional from_x/.. columns, falling back to
    the ``n_X_Y`` node-name convention, then to the scenario centroid."""
    out: dict[str, tuple[float, float]] = {}
    for link in links.values():
        if link.from_xy is not None:
            out.setdefault(link.from_node, link.from_xy)
        if link.to_xy is not None:
            out.setdefault(link.to_node, link.to_xy)
    if tazs:
        cx = sum(t.centroid_x for t in tazs.values()) / len(tazs)
        cy = sum(t.centroid_y for t in tazs.values()) / len(tazs)
    else:
        cx = cy = 0.0
    for link in links.values():
        for node in (link.from_node, link.to_node):
            if node in out:
                continue
            parts = node.split("_")
            if len(parts) == 3 and parts[0] == "n":
                try:
                    out[node] = (float(parts[1]), float(parts[2]))
                    continue
                except ValueError:
                    pass
            out[node] = (cx, cy)
    return out


# --------------------------------------------------------------------------
# generation helpers


def assign_vehicle_types(households: dict, vehicle_types: dict, rng: random.Random,
                         vehicle_probability: float = 1.0,
                         mean_starting_soc: float = 1.0) -> dict[str, Vehicle]:
    """Create household vehicles with probabilistically sampled types.

    Income-band clauses in each type's sample probability string restrict
    that type's weight to matching households; types without clauses get
    uniform weight.  SOC is sampled uniform on [max(0, 2m-1), 1] so its
    mean is ``mean_starting_soc``.
    """
    car_types = [vt for vt in vehicle_types.values() if vt.category == "Car"]
    if not car_types:
        raise SchemaError("no Car-category vehicle types to assign")
    out: dict[str, Vehicle] = {}
    soc_lo = max(0.0, 2.0 * mean_starting_soc - 1.0)
    for hh in sorted(households.values(), key=lambda h: h.id):
        if rng.random() >= vehicle_probability:
            continue
        weights = []
        for vt in car_types:
            w = 1.0
            if vt.sample_probability_string:
                parsed = parse_sample_probability_string(vt.sample_probability_string)
                bands = parsed["income_bands"]
                if bands:
                    w = 0.0
                    for lo, hi, q in bands:
                        if lo <= hh.income <= hi:
                            w = q
                            break
            weights.append(w)
        total = sum(weights)
        if total <= 0:
            raise BadProbability(f"household {hh.id}: no vehicle type has positive weight")
        vt = rng.choices(car_types, weights=weights)[0]
        veh = Vehicle(
            id=f"veh_{hh.id}", type_id=vt.id, household_id=hh.id,
            state_of_charge=rng.uniform(soc_lo, 1.0),
        )
        out[veh.id] = veh
        hh.vehicle_ids.append(veh.id)
    return out


def init_ondemand_fleet(ratio: float, household_vehicle_count: int,
                        vehicle_types: dict, tazs: dict,
                        taz_demand_weights: dict[str, float],
                        rng: random.Random,
                        default_type_id: str | None = None) -> list[RideHailVehicleSpec]:
    """Procedural on-demand fleet: size = round(ratio * household vehicles),
    placed into TAZs with probability proportional to home+work activity
    counts, typed per the ``ridehail all`` sampling clauses."""
    if ratio <= 0:
        raise BadProbability("procedural fleet ratio must be > 0")
    n = round(ratio * household_vehicle_count)
    candidates = []
    weights = []
    for vt in vehicle_types.values():
        if vt.category != "Car":
            continue
        w = None
        if vt.sample_probability_string:
            w = parse_sample_probability_string(vt.sample_probability_string)["ridehail_all"]
        if w is None and default_type_id is not None:
            w = 1.0 if vt.id == default_type_id else 0.0
        elif w is None:
            w = 1.0
        candidates.append(vt)
        weights.append(w)
    if not candidates or sum(weights) <= 0:
        raise BadProbability("no ride-hail eligible vehicle type with positive weight")
    taz_ids = sorted(tazs)
    taz_w = [max(0.0, taz_demand_weights.get(t, 0.0)) for t in taz_ids]
    if sum(taz_w) <= 0:
        taz_w = [1.0] * len(taz_ids)
    fleet = []
    for i in range(n):
        vt = rng.choices(candidates, weights=weights)[0]
        taz = tazs[rng.choices(taz_ids, weights=taz_w)[0]]
        fleet.append(RideHailVehicleSpec(
            vehicle_id=f"rh_{i}", vehicle_type_id=vt.id,
            x=taz.centroid_x, y=taz.centroid_y,
        ))
    return fleet


def taz_activity_weights(persons: dict) -> dict[str, float]:
    """Home+work activity counts per TAZ (ride-hail placement weights)."""
    weights: dict[str, float] = {}
    for person in persons.values():
        for act in person.plan.activities():
            if act.type in ("home", "work"):
                weights[act.taz] = weights.get(act.taz, 0.0) + 1.0
    return weights


# --------------------------------------------------------------------------
# top-level load / write / validate


def load_scenario(dirpath: str | Path, config) -> Scenario:
    dirpath = Path(dirpath)
    vehicle_types = load_vehicle_types(dirpath / "vehicletypes.csv")
    links = load_network(dirpath / "network.csv")
    persons, households = load_population(dirpath)

    vehicles_path = dirpath / "vehicles.csv"
    if vehicles_path.exists():
        vehicles = load_vehicles(vehicles_path, vehicle_types, households)
    else:
        rng = random.Random(f"vehgen:{config.get_int('seed')}")
        vehicles = assign_vehicle_types(
            households, vehicle_types, rng,
            vehicle_probability=config.get_float("agents.vehicles.householdVehicleProbability", 1.0),
            mean_starting_soc=config.get_float("agents.vehicles.meanPrivateVehicleStartingSOC"),
        )

    routes, trips = load_transit(dirpath / "transit", vehicle_types)
    parking = load_parking(dirpath / "parking.csv")
    tazs = _build_tazs(dirpath, links, households, persons)

    fleet = load_ridehail_fleet(dirpath / "ridehail_fleet.csv", vehicle_types)
    ratio = config.get_float("agents.rideHail.fleetSizeRatio", 0.0)
    if not fleet and ratio > 0:
        rng = random.Random(f"rhgen:{config.get_int('seed')}")
        hh_veh_count = sum(len(h.vehicle_ids) for h in households.values())
        fleet = init_ondemand_fleet(
            ratio, hh_veh_count, vehicle_types, tazs,
            taz_activity_weights(persons), rng,
        )

    intercepts, params = load_activity_tables(dirpath)
    scenario = Scenario(
        persons=persons, households=households, vehicle_types=vehicle_types,
        vehicles=vehicles, links=links, transit_routes=routes, transit_trips=trips,
        parking=parking, ridehail_fleet=fleet, tazs=tazs,
        activity_intercepts=intercepts, activity_params=params,
    )
    return scenario


def write_scenario(scenario: Scenario, dirpath: str | Path) -> None:
    """Write a Scenario back to a directory in canonical column order."""
    dirpath = Path(dirpath)
    dirpath.mkdir(parents=True, exist_ok=True)

    def dump(name, header, rows):
        with open(dirpath / name, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(header)
            w.writerows(rows)

    dump("households.csv", ["id", "income", "home_taz", "x", "y"],
         [[h.id, h.income, h.home_taz, h.x, h.y]
          for h in sorted(scenario.households.values(), key=lambda h: h.id)])
    dump("persons.csv", ["id", "household_id", "age", "value_of_time"],
         [[p.id, p.household_id, p.age if p.age is not None else "",
           p.value_of_time if p.value_of_time is not None else ""]
          for p in sorted(scenario.persons.values(), key=lambda p: p.id)])
    plan_rows = []
    for p in sorted(scenario.persons.values(), key=lambda p: p.id):
        for i, elem in enumerate(p.plan.elements):
            if isinstance(elem, Activity):
                plan_rows.append([p.id, i, "activity", elem.type, elem.x, elem.y, elem.taz,
                                  elem.end_time if elem.end_time is not None else "",
                                  "", elem.tour_id or ""])
            else:
                plan_rows.append([p.id, i, "leg", "", "", "", "", "",
                                  elem.mode or "", elem.tour_id or ""])
    dump("plans.csv",
         ["person_id", "elem_index", "elem_type", "activity_type", "x", "y", "taz",
          "end_time", "mode", "tour_id"], plan_rows)
    dump("vehicletypes.csv",
         ["vehicle_type_id", "seating_capacity", "standing_capacity", "length_meters",
          "primary_fuel_type", "primary_fuel_consumption_j_per_m", "primary_fuel_capacity_j",
          "secondary_fuel_type", "secondary_fuel_consumption_j_per_m", "secondary_fuel_capacity_j",
          "automation_level", "vehicle_category", "sample_probability_string", "charging_capability"],
         [[vt.id, vt.seating_capacity, vt.standing_capacity, vt.length_meters,
           vt.primary_fuel_type, vt.primary_consumption_j_per_m, vt.primary_capacity_j,
           vt.secondary_fuel_type or "", vt.secondary_consumption_j_per_m or "",
           vt.secondary_capacity_j or "", vt.automation_level, vt.category,
           vt.sample_probability_string or "", vt.charging_capability or ""]
          for vt in sorted(scenario.vehicle_types.values(), key=lambda v: v.id)])
    dump("vehicles.csv", ["vehicle_id", "vehicle_type_id", "household_id", "state_of_charge"],
         [[v.id, v.type_id, v.household_id or "", v.state_of_charge]
          for v in sorted(scenario.vehicles.values(), key=lambda v: v.id)])
    dump("network.csv",
         ["link_id", "from_node", "to_node", "length_m", "free_speed_mps",
          "capacity_vph", "lanes", "modes", "grade_pct"],
         [[l.id, l.from_node, l.to_node, l.length_m, l.free_speed_mps, l.capacity_vph,
           l.lanes, "|".join(sorted(l.modes)), l.grade_pct]
          for l in sorted(scenario.links.values(), key=lambda l: l.id)])
    if scenario.transit_routes:
        tdir = dirpath / "transit"
        tdir.mkdir(exist_ok=True)
        with open(tdir / "routes.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["route_id", "type"])
            for r in sorted(scenario.transit_routes.values(), key=lambda r: r.id):
                w.writerow([r.id, r.type])
        with open(tdir / "trips.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trip_id", "route_id", "vehicle_type_id"])
            for t in sorted(scenario.transit_trips.values(), key=lambda t: t.id):
                w.writerow([t.id, t.route_id, t.vehicle_type_id])
        with open(tdir / "stop_times.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["trip_id", "stop_seq", "stop_id", "x", "y",
                        "arrival_s", "departure_s", "fare_usd"])
            for t in sorted(scenario.transit_trips.values(), key=lambda t: t.id):
                for st in t.stop_times:
                    w.writerow([t.id, st.stop_seq, st.stop_id, st.x, st.y,
                                st.arrival_s, st.departure_s, st.fare_usd])
    if scenario.parking:
        rows = []
        for d in scenario.parking:
            restriction = ""
            if d.restricted_category:
                lo, hi = d.restriction_window
                restriction = (f"{d.restricted_category}|"
                               f"{int(lo // 3600):02d}:{int(lo % 3600 // 60):02d}-"
                               f"{int(hi // 3600):02d}:{int(hi % 3600 // 60):02d}")
            rows.append([d.zone, d.stall_type, d.pricing, d.cost, d.count,
                         d.charger_power_kw or "", d.x if d.x is not None else "",
                         d.y if d.y is not None else "",
                         f"{d.manager_type}({d.manager_id})", restriction])
        dump("parking.csv",
             ["zone", "stall_type", "pricing", "cost_usd", "count", "charger_power_kw",
              "x", "y", "manager", "time_restriction"], rows)
    if scenario.ridehail_fleet:
        rows = []
        for v in scenario.ridehail_fleet:
            gx, gy, gr = v.geofence if v.geofence else ("", "", "")
            rows.append([v.vehicle_id, v.vehicle_type_id, v.x, v.y, v.soc,
                         v.shift_start_s, v.shift_end_s, gx, gy, gr,
                         "true" if v.autonomous else ""])
        dump("ridehail_fleet.csv",
             ["vehicle_id", "vehicle_type_id", "x", "y", "soc", "shift_start_s",
              "shift_end_s", "geofence_x", "geofence_y", "geofence_radius_m",
              "autonomous"], rows)
    if scenario.activity_intercepts:
        dump("activity_intercepts.csv",
             ["activity_type"] + [f"hour_{h}" for h in range(24)],
             [[a] + list(ws) for a, ws in sorted(scenario.activity_intercepts.items())])
    if scenario.activity_params:
        dump("activity_params.csv",
             ["activity_type", "mean_duration_s", "value_of_time_usd_per_hr"],
             [[a, m, v] for a, (m, v) in sorted(scenario.activity_params.items())])


def validate_scenario(scenario: Scenario) -> list[str]:
    """Cross-checks beyond schema validation; empty list means runnable."""
    report: list[str] = []
    car_nodes = {l.from_node for l in scenario.links.values() if "car" in l.modes}
    car_nodes |= {l.to_node for l in scenario.links.values() if "car" in l.modes}
    for person in scenario.persons.values():
        prev_end = None
        for elem in person.plan.elements:
            if isinstance(elem, Activity):
                if elem.end_time is not None and prev_end is not None and elem.end_time == prev_end:
                    report.append(f"warning: person {person.id} has zero-duration activity {elem.type}")
                prev_end = elem.end_time
                if elem.taz not in scenario.tazs:
                    report.append(f"error: person {person.id} activity in unknown TAZ {elem.taz}")
    for veh in scenario.vehicles.values():
        if veh.type_id not in scenario.vehicle_types:
            report.append(f"error: vehicle {veh.id} has unknown type {veh.type_id}")
    if not car_nodes:
        report.append("warning: network has no car links")
    return report
