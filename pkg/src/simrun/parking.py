"""Parking stall and charging plug allocation.

One manager serializes all claims for its zones, so availability can
never be double-spent.  TAZ-level pools are counters; the walk distance
quoted for a pool grows linearly as it fills: D_max * (1 - available /
capacity).  A ubiquitous manager quotes free parking at the destination
and never runs out.
"""

from __future__ import annotations

from dataclasses import dataclass


class NoParking(Exception):
    pass


class RaceLost(Exception):
    """Pool emptied between inquiry and claim; re-inquire."""


class NotChargeable(Exception):
    pass


@dataclass
class StallPool:
    descriptor: object  # ParkingStallDescriptor
    available: int

    @property
    def claimed(self) -> int:
        return self.descriptor.count - self.available


@dataclass
class StallQuote:
    zone: str
    pool_index: int | None  # None for the ubiquitous quote
    walk_distance_m: float
    price: float
    charger_power_kw: float | None = None
    pricing: str = "fixed"
    rate: float = 0.0  # hourly rate backing the estimate


@dataclass
class Reservation:
    quote: StallQuote
    vehicle_id: str
    arrival_time: float


@dataclass
class ChargeResult:
    energy_j: float
    soc_initial: float
    soc_final: float
    plug_in_time: float
    plug_out_time: float


UBIQUITOUS_QUOTE_ZONE = "*"


class ParkingManager:
    def __init__(self, descriptors, ubiquitous: bool = False, d_max_m: float = 800.0):
        self.ubiquitous = ubiquitous
        self.d_max_m = d_max_m
        self.pools: list[StallPool] = [
            StallPool(d, d.count) for d in descriptors
        ]
        self._by_zone: dict[str, list[int]] = {}
        for i, pool in enumerate(self.pools):
            self._by_zone.setdefault(pool.descriptor.zone, []).append(i)

    # -- inquiry -----------------------------------------------------------

    def _eligible(self, pool: StallPool, vehicle_category: str, arrival_time: float) -> bool:
        d = pool.descriptor
        if d.restricted_category is not None:
            if vehicle_category != d.restricted_category:
                return False
            lo, hi = d.restriction_window
            tod = arrival_time % 86400.0
            if not lo <= tod <= hi:
                return False
        return True

    def _price(self, pool: StallPool, expected_duration_s: float) -> tuple[float, str, float]:
        d = pool.descriptor
        if d.pricing == "hourly":
            return d.cost * expected_duration_s / 3600.0, "hourly", d.cost
        return d.cost, "fixed", 0.0

    def inquire(self, zone: str, vehicle_category: str, arrival_time: float,
                expected_duration_s: float,
                stall_types: set[str] | None = None) -> list[StallQuote]:
        """One quote per eligible pool in the zone; the ubiquitous manager
        answers with a single free, zero-walk stall."""
        if self.ubiquitous:
            return [StallQuote(UBIQUITOUS_QUOTE_ZONE, None, 0.0, 0.0)]
        quotes = []
        for i in self._by_zone.get(zone, ()):
            pool = self.pools[i]
            d = pool.descriptor
            if stall_types is not None and d.stall_type not in stall_types:
                continue
            if pool.available <= 0:
                continue
            if not self._eligible(pool, vehicle_category, arrival_time):
                continue
            walk = self.d_max_m * (1.0 - pool.available / d.count)
            walk = min(max(walk, 0.0), self.d_max_m)
            price, pricing, rate = self._price(pool, expected_duration_s)
            quotes.append(StallQuote(zone, i, walk, price,
                                     charger_power_kw=d.charger_power_kw,
                                     pricing=pricing, rate=rate))
        if not quotes:
            raise NoParking(f"no stall available in zone {zone}")
        return quotes

    # -- claim / release ---------------------------------------------------

    def claim(self, quote: StallQuote, vehicle_id: str, arrival_time: float) -> Reservation:
        if quote.pool_index is None:
            return Reservation(quote, vehicle_id, arrival_time)
        pool = self.pools[quote.pool_index]
        if pool.available <= 0:
            raise RaceLost(f"pool {quote.pool_index} in {quote.zone} is full")
        pool.available -= 1
        return Reservation(quote, vehicle_id, arrival_time)

    def release(self, reservation: Reservation, depart_time: float) -> float:
        """Free the stall; returns the final price (hourly rates prorated
        per second against the actual stay)."""
        quote = reservation.quote
        if quote.pool_index is not None:
            pool = self.pools[quote.pool_index]
            pool.available = min(pool.available + 1, pool.descriptor.count)
        if quote.pricing == "hourly":
            return quote.rate * max(0.0, depart_time - reservation.arrival_time) / 3600.0
        return quote.price


# --------------------------------------------------------------------------
# charging


def charge_session(vehicle, vehicle_type, charger_power_kw: float,
                   plug_in_time: float, plug_out_time: float) -> ChargeResult:
    """Constant-power charge capped at the battery headroom.

    Mutates the vehicle's state of charge; the caller emits the plug
    events with the initial/final SOC this returns.
    """
    if vehicle_type.primary_fuel_type != "Electricity":
        raise NotChargeable(f"vehicle {vehicle.id} is not electric")
    if charger_power_kw is None or charger_power_kw <= 0:
        raise NotChargeable("stall has no charger")
    if plug_out_time < plug_in_time:
        raise ValueError("plug-out before plug-in")
    soc0 = vehicle.state_of_charge
    capacity = vehicle_type.primary_capacity_j
    headroom = capacity * (1.0 - soc0)
    delivered = min(charger_power_kw * 1000.0 * (plug_out_time - plug_in_time), headroom)
    soc1 = min(1.0, soc0 + delivered / capacity)
    vehicle.state_of_charge = soc1
    return ChargeResult(delivered, soc0, soc1, plug_in_time, plug_out_time)
