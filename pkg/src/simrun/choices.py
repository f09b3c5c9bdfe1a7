"""Utility computation and stochastic choice.

Utilities are denominated in dollars (the cost coefficient is fixed at
magnitude 1, so one unit of utility is one dollar).  Cost, time and
transfer terms enter as disutilities: parameters are supplied as
non-negative magnitudes and subtracted.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field


class EmptyChoiceSet(Exception):
    pass


class InfeasibleTourMode(Exception):
    pass


class WindowTooNarrow(Exception):
    """Discretionary window has no whole hour bin; the subtour is skipped."""


class NoCandidates(Exception):
    pass


@dataclass
class ModeChoiceParams:
    asc_by_mode: dict[str, float] = field(default_factory=dict)  # dollars
    beta_transfer: float = 1.0  # dollars per transfer
    epsilon_trip: float = 1.0  # logit scale (dollars)
    epsilon_tour: float = 1.0
    vot_multiplier_by_mode: dict[str, float] = field(default_factory=dict)

    @classmethod
    def from_config(cls, config) -> "ModeChoiceParams":
        asc = {k[len("asc."):]: float(v) for k, v in config.with_prefix("modeChoice").items()
               if k.startswith("asc.")}
        votm = {k[len("votMultiplier."):]: float(v)
                for k, v in config.with_prefix("modeChoice").items()
                if k.startswith("votMultiplier.")}
        return cls(
            asc_by_mode=asc,
            beta_transfer=config.get_float("modeChoice.betaTransfer"),
            epsilon_trip=config.get_float("modeChoice.epsilon"),
            epsilon_tour=config.get_float("modeChoice.epsilonTour"),
            vot_multiplier_by_mode=votm,
        )


@dataclass
class DiscretionaryParams:
    beta0_by_activity: dict[str, float] = field(default_factory=dict)
    beta_time_by_activity: dict[str, float] = field(default_factory=dict)  # $/hour
    lambda_dest: float = 1.0
    lambda_mode: float = 1.0
    dest_sample_count: int = 5
    dest_max_radius: float = 10000.0
    beta_cost: float = 1.0
    beta_time_by_mode: dict[str, float] = field(default_factory=dict)  # $/hour
    beta_transfer: float = 1.0
    beta_by_mode: dict[str, float] = field(default_factory=dict)  # mode constants
    late_penalty: float = -50.0
    dest_logsum_multiplier: float = 1.0
    epsilon: float = 1.0  # scale of the participation binary logit


@dataclass
class ParkingChoiceParams:
    beta_cost: float = 1.0
    beta_walk_per_meter: float = 0.005
    beta_range_anxiety: float = 1.0
    beta_home_preference: float = 0.5
    beta_enroute_detour_per_meter: float = 0.005
    epsilon: float = 1.0

    @classmethod
    def from_config(cls, config) -> "ParkingChoiceParams":
        return cls(
            beta_cost=config.get_float("parking.betaCost"),
            beta_walk_per_meter=config.get_float("parking.betaWalkPerMeter"),
            beta_range_anxiety=config.get_float("parking.betaRangeAnxiety"),
            beta_home_preference=config.get_float("parking.betaHomePreference"),
            beta_enroute_detour_per_meter=config.get_float("parking.betaEnrouteDetour"),
            epsilon=config.get_float("parking.epsilon"),
        )


# --------------------------------------------------------------------------
# core logit machinery


def logsum(utilities, scale: float) -> float:
    """Expected maximum utility: scale * log(sum(exp(U/scale)))."""
    values = list(utilities)
    if not values:
        raise EmptyChoiceSet("logsum over empty set")
    m = max(values)
    return m + scale * math.log(sum(math.exp((u - m) / scale) for u in values))


def mnl_probabilities(utilities: dict, epsilon: float) -> dict:
    """Softmax with scale epsilon, computed with a max shift."""
    if not utilities:
        raise EmptyChoiceSet("no alternatives")
    m = max(utilities.values())
    exps = {k: math.exp((u - m) / epsilon) for k, u in utilities.items()}
    total = sum(exps.values())
    return {k: v / total for k, v in exps.items()}


def mnl_choose(utilities: dict, epsilon: float, rng: random.Random):
    """Sample one alternative per the softmax over utilities.

    Iteration is in sorted key order so the draw is reproducible
    regardless of dict construction order.
    """
    probs = mnl_probabilities(utilities, epsilon)
    r = rng.random()
    acc = 0.0
    keys = sorted(probs, key=str)
    for k in keys:
        acc += probs[k]
        if r < acc:
            return k
    return keys[-1]


def binary_logit(utility: float, scale: float, rng: random.Random) -> bool:
    """True with probability P = 1 / (1 + exp(-utility/scale))."""
    z = -utility / scale
    p = 0.0 if z > 700 else 1.0 / (1.0 + math.exp(z))
    return rng.random() < p


# --------------------------------------------------------------------------
# trip and tour utilities


def trip_utility(itinerary, agent_vot: float, params: ModeChoiceParams) -> float:
    """Dollar utility of one itinerary for one agent.

    U = ASC_mode - cost - VOT * hours - beta_transfer * transfers, where
    VOT is the agent's value of time ($/hr) scaled by the per-mode
    multiplier.
    """
    mode = itinerary.classification
    asc = params.asc_by_mode.get(mode, 0.0)
    vot = agent_vot * params.vot_multiplier_by_mode.get(mode, 1.0)
    hours = itinerary.total_time / 3600.0
    return (asc - itinerary.total_cost - vot * hours
            - params.beta_transfer * itinerary.transfers)


def tour_utility(trip_mode_utilities: list[dict[str, float]], epsilon_tour: float) -> float:
    """Tour-mode expected utility: sum over trips of the logsum of the
    trip utilities available under that tour mode."""
    total = 0.0
    for j, utilities in enumerate(trip_mode_utilities):
        if not utilities:
            raise InfeasibleTourMode(f"trip {j} has no available mode")
        total += logsum(utilities.values(), epsilon_tour)
    return total


TOUR_MODES = ("CAR_BASED", "BIKE_BASED", "WALK_BASED")


def trip_modes_for_tour_mode(tour_mode: str, trip_index: int, n_trips: int,
                             shared_fleets: bool = False) -> set[str]:
    """Trip modes admissible under a tour mode.  Private-vehicle transit
    access is restricted to the first and last trips of the tour."""
    if tour_mode == "CAR_BASED":
        return {"CAR"}
    if tour_mode == "BIKE_BASED":
        return {"BIKE"}
    modes = {"WALK", "RIDE_HAIL", "RIDE_HAIL_POOLED", "WALK_TRANSIT", "RIDE_HAIL_TRANSIT"}
    if trip_index in (0, n_trips - 1):
        modes |= {"DRIVE_TRANSIT", "BIKE_TRANSIT"}
    if shared_fleets:
        modes |= {"SHARED_CAR", "SHARED_BIKE"}
    return modes


# --------------------------------------------------------------------------
# discretionary activity choice


def discretionary_skeleton(mandatory_start_h: float, mandatory_end_h: float,
                           intercepts: dict[str, list[float]],
                           rng: random.Random) -> tuple[str, int]:
    """Pick (activity type, start hour) for a blank subtour.

    The usable hour bins pad the mandatory window by 30 minutes on either
    end: startInd = ceil(start + 0.5), endInd = floor(end - 0.5), bins
    startInd..endInd inclusive.  The joint draw is proportional to the
    intercept weights over those bins.
    """
    start_ind = math.ceil(mandatory_start_h + 0.5)
    end_ind = math.floor(mandatory_end_h - 0.5)
    if end_ind < start_ind:
        raise WindowTooNarrow(
            f"no whole hour bin between {mandatory_start_h} and {mandatory_end_h}")
    cells = []
    weights = []
    for act in sorted(intercepts):
        row = intercepts[act]
        for hour in range(start_ind, end_ind + 1):
            if 0 <= hour < len(row):
                cells.append((act, hour))
                weights.append(max(0.0, row[hour]))
    if not cells or sum(weights) <= 0:
        raise WindowTooNarrow("no positive intercept weight in the window")
    return rng.choices(cells, weights=weights)[0]


def sample_start_second(start_hour: int, rng: random.Random) -> float:
    """Precise start time, uniform within the chosen hour bin."""
    return (start_hour + rng.random()) * 3600.0


def sample_duration(mean_duration_s: float, rng: random.Random) -> float:
    if mean_duration_s <= 0:
        raise ValueError("mean duration must be > 0")
    return rng.expovariate(1.0 / mean_duration_s)


def sample_destinations(origin_taz: str, tazs: dict, radius_m: float, n: int,
                        agent_seed: str) -> list[str]:
    """Uniform sample (without replacement) of TAZs within radius of the
    origin TAZ centroid.  Seeded by the caller-provided agent seed so the
    choice set is stable across iterations for a given agent/subtour."""
    if n < 1:
        raise ValueError("destination sample count must be >= 1")
    origin = tazs[origin_taz]
    in_radius = sorted(
        t.id for t in tazs.values()
        if math.hypot(t.centroid_x - origin.centroid_x,
                      t.centroid_y - origin.centroid_y) <= radius_m
    )
    if not in_radius:
        raise NoCandidates(f"no TAZ within {radius_m} m of {origin_taz}")
    rng = random.Random(f"dest:{agent_seed}")
    if len(in_radius) <= n:
        return in_radius
    return rng.sample(in_radius, n)


def destination_mode_utility(round_trip_cost: float, round_trip_hours: float,
                             round_trip_transfers: float, mode: str,
                             params: DiscretionaryParams) -> float:
    """Round-trip utility of reaching a destination by one mode; cost,
    time and transfers sum the outbound and return skim legs."""
    beta_m = params.beta_by_mode.get(mode, 0.0)
    beta_t = params.beta_time_by_mode.get(mode, 1.0)
    return (beta_m - params.beta_cost * round_trip_cost
            - beta_t * round_trip_hours
            - params.beta_transfer * round_trip_transfers)


def destination_logsum(mode_utilities: dict[str, float], params: DiscretionaryParams) -> float:
    return logsum(mode_utilities.values(), params.lambda_mode)


def participation_utility(activity_type: str, duration_s: float,
                          travel_logsum: float, params: DiscretionaryParams,
                          late: bool = False) -> float:
    beta0 = params.beta0_by_activity.get(activity_type, 0.0)
    beta_t = params.beta_time_by_activity.get(activity_type, 0.0)
    u = beta0 + beta_t * (duration_s / 3600.0) + travel_logsum
    if late:
        u += params.late_penalty
    return u


def participation_choice(activity_type: str, duration_s: float,
                         travel_logsum: float, params: DiscretionaryParams,
                         rng: random.Random, late: bool = False) -> bool:
    """Binary logit of taking the subtour against the zero utility of
    staying put."""
    u = participation_utility(activity_type, duration_s, travel_logsum, params, late=late)
    return binary_logit(u, params.epsilon, rng)


# --------------------------------------------------------------------------
# parking choice


def parking_utility(price: float, walk_distance_m: float, params: ParkingChoiceParams,
                    is_residential_at_home: bool = False,
                    enroute_detour_m: float = 0.0,
                    ev_soc: float | None = None,
                    ev_range_m: float | None = None,
                    remaining_daily_distance_m: float = 0.0,
                    has_charger: bool = False) -> float:
    """Utility of one parking stall alternative.

    The range-anxiety term is the linear shortfall ratio
    max(0, 1 - soc*range/remaining_distance) for EVs, zeroed when the
    stall has a charger; non-EVs contribute nothing.
    """
    anxiety = 0.0
    if ev_soc is not None and ev_range_m and remaining_daily_distance_m > 0 and not has_charger:
        anxiety = max(0.0, 1.0 - (ev_soc * ev_range_m) / remaining_daily_distance_m)
    u = (-params.beta_cost * price
         - params.beta_walk_per_meter * walk_distance_m
         - params.beta_range_anxiety * anxiety
         - params.beta_enroute_detour_per_meter * enroute_detour_m)
    if is_residential_at_home:
        u += params.beta_home_preference
    return u
