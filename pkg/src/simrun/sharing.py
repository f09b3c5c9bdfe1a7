"""Free-floating shared vehicle fleets (cars, bikes, scooters).

Three availability strategies: a fixed fleet seeded per TAZ, a fixed
fleet scattered proportionally to home-location density, and a virtual
inexhaustible fleet that materializes a vehicle wherever one is asked
for.  Availability in the non-reserving strategies is first come, first
served at the vehicle, not at mode choice.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

STRATEGY_BY_TAZ = "fixed-non-reserving-fleet-by-TAZ"
STRATEGY_FIXED = "fixed-non-reserving"
STRATEGY_INEXHAUSTIBLE = "inexhaustible-reserving"

STRATEGIES = {STRATEGY_BY_TAZ, STRATEGY_FIXED, STRATEGY_INEXHAUSTIBLE}


class DockFull(Exception):
    pass


@dataclass
class Dock:
    id: str
    x: float
    y: float
    capacity: int
    occupied: int = 0

    @property
    def has_space(self) -> bool:
        return self.occupied < self.capacity


@dataclass
class SharedVehicle:
    id: str
    fleet_id: str
    x: float
    y: float
    available: bool = True
    dock_id: str | None = None


@dataclass
class SharedFleetConfig:
    id: str
    vehicle_type_id: str
    strategy: str
    size: int = 0
    taz_counts: dict[str, int] = field(default_factory=dict)
    docks: list[Dock] = field(default_factory=list)
    search_radius_m: float = 500.0
    round_trip_only: bool = False

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown sharing strategy {self.strategy!r}")


class SharedFleet:
    """One manager serializes every take and return for its fleet."""

    def __init__(self, config: SharedFleetConfig):
        self.config = config
        self.vehicles: dict[str, SharedVehicle] = {}
        self.docks = {d.id: d for d in config.docks}
        self._virtual_seq = 0
        self._pickup_point: dict[str, tuple[float, float]] = {}

    @property
    def id(self) -> str:
        return self.config.id

    # -- placement ---------------------------------------------------------

    def init_fleet(self, taz_centroids: dict[str, tuple[float, float]],
                   home_locations: list[tuple[float, float]],
                   rng: random.Random) -> None:
        cfg = self.config
        if cfg.strategy == STRATEGY_INEXHAUSTIBLE:
            return  # virtual supply, nothing to place
        seq = 0
        if cfg.strategy == STRATEGY_BY_TAZ:
            for taz_id in sorted(cfg.taz_counts):
                cx, cy = taz_centroids[taz_id]
                for _ in range(cfg.taz_counts[taz_id]):
                    vid = f"{cfg.id}_{seq}"
                    self.vehicles[vid] = SharedVehicle(vid, cfg.id, cx, cy)
                    seq += 1
            return
        if not home_locations:
            raise ValueError(f"fleet {cfg.id}: no home locations to sample")
        for _ in range(cfg.size):
            x, y = rng.choice(home_locations)
            vid = f"{cfg.id}_{seq}"
            self.vehicles[vid] = SharedVehicle(vid, cfg.id, x, y)
            seq += 1

    # -- take / return -----------------------------------------------------

    def find_vehicle(self, x: float, y: float, now: float) -> SharedVehicle | None:
        """Take the nearest available vehicle within the search radius, or
        conjure one on the spot for the inexhaustible strategy."""
        cfg = self.config
        if cfg.strategy == STRATEGY_INEXHAUSTIBLE:
            vid = f"{cfg.id}_virtual_{self._virtual_seq}"
            self._virtual_seq += 1
            veh = SharedVehicle(vid, cfg.id, x, y, available=False)
            self.vehicles[vid] = veh
            self._pickup_point[vid] = (x, y)
            return veh
        best, best_d = None, cfg.search_radius_m
        for veh in sorted(self.vehicles.values(), key=lambda v: v.id):
            if not veh.available:
                continue
            d = math.hypot(veh.x - x, veh.y - y)
            if d <= best_d and (best is None or d < best_d):
                best, best_d = veh, d
        if best is None:
            return None
        best.available = False
        if best.dock_id is not None:
            self.docks[best.dock_id].occupied -= 1
            best.dock_id = None
        self._pickup_point[best.id] = (best.x, best.y)
        return best

    def return_vehicle(self, vehicle: SharedVehicle, x: float, y: float) -> float:
        """Park the vehicle; returns the extra walk distance to the final
        spot (0 for dockless fleets)."""
        cfg = self.config
        if cfg.round_trip_only:
            px, py = self._pickup_point[vehicle.id]
            if math.hypot(px - x, py - y) > 1.0:
                raise ValueError(
                    f"round-trip fleet {cfg.id}: vehicle must return to pickup point")
        if cfg.strategy == STRATEGY_INEXHAUSTIBLE:
            vehicle.x, vehicle.y = x, y
            vehicle.available = False  # virtual vehicles evaporate
            del self.vehicles[vehicle.id]
            return 0.0
        if self.docks:
            options = sorted((d for d in self.docks.values() if d.has_space),
                             key=lambda d: (math.hypot(d.x - x, d.y - y), d.id))
            if not options:
                raise DockFull(f"fleet {cfg.id}: no dock has free capacity")
            dock = options[0]
            dock.occupied += 1
            vehicle.x, vehicle.y = dock.x, dock.y
            vehicle.dock_id = dock.id
            vehicle.available = True
            return math.hypot(dock.x - x, dock.y - y)
        vehicle.x, vehicle.y = x, y
        vehicle.available = True
        return 0.0

    # -- bookkeeping -------------------------------------------------------

    def available_count(self) -> int:
        return sum(1 for v in self.vehicles.values() if v.available)
