"""Between-iteration co-evolution of agent plans.

After each simulated day, executed plans are scored from experienced
outcomes, stored in a bounded per-person memory, and mutated: keep a
well-performing plan, drop stored routes, drop mode choices, or wipe
discretionary activities and regrow them from the nested choice model.
Mandatory activities are never moved, retyped, or retimed.
"""

from __future__ import annotations

import copy
import math
import random
from dataclasses import dataclass, field

from . import choices
from .scenario import Activity, Leg, Plan

STRATEGIES = ("KeepBest", "ClearRoutes", "ClearModes", "ClearDiscretionary")

# anchor windows (hours) for homebound agents with no mandatory activities
HOME_BLANK_WINDOWS = ((4.0, 12.0), (10.0, 16.0), (14.0, 21.0))


@dataclass
class ReplanningWeights:
    keep_best: float = 0.7
    clear_routes: float = 0.1
    clear_modes: float = 0.1
    clear_discretionary: float = 0.1

    def __post_init__(self):
        ws = (self.keep_best, self.clear_routes, self.clear_modes,
              self.clear_discretionary)
        if any(w < 0 for w in ws):
            raise ValueError("replanning weights must be non-negative")
        if abs(sum(ws) - 1.0) > 1e-9:
            raise ValueError("replanning weights must sum to 1")

    @classmethod
    def from_config(cls, config) -> "ReplanningWeights":
        return cls(config.get_float("replanning.pKeepBest"),
                   config.get_float("replanning.pClearRoutes"),
                   config.get_float("replanning.pClearModes"),
                   config.get_float("replanning.pClearDiscretionary"))


def select_strategy(weights: ReplanningWeights, rng: random.Random) -> str:
    r = rng.random()
    acc = 0.0
    for name, w in zip(STRATEGIES, (weights.keep_best, weights.clear_routes,
                                    weights.clear_modes,
                                    weights.clear_discretionary)):
        acc += w
        if r < acc:
            return name
    return STRATEGIES[0]


# --------------------------------------------------------------------------
# scoring and plan memory


def score_plan(trip_utilities, activity_durations, beta_by_activity,
               stuck: bool = False, stuck_score: float = -1000.0,
               penalty: float = 0.0) -> float:
    """Dollars-equivalent day score from experienced outcomes.

    activity_durations is (activity type, realized seconds) pairs; each
    contributes beta_t[type] dollars per hour.
    """
    if stuck:
        return stuck_score
    score = sum(trip_utilities)
    for act_type, duration_s in activity_durations:
        score += beta_by_activity.get(act_type, 0.0) * duration_s / 3600.0
    return score - penalty


class PlanMemory:
    """Bounded plan store; the worst scorer is evicted, never the only
    copy of the current selection."""

    def __init__(self, max_size: int = 5):
        if max_size < 1:
            raise ValueError("plan memory needs room for at least one plan")
        self.max_size = max_size
        self.plans: list[Plan] = []

    @property
    def selected(self) -> Plan:
        for plan in self.plans:
            if plan.selected:
                return plan
        raise LookupError("no plan selected")

    def best_score(self) -> float:
        return max(p.score for p in self.plans if p.score is not None)

    def add(self, plan: Plan) -> None:
        for p in self.plans:
            p.selected = False
        plan.selected = True
        self.plans.append(plan)
        while len(self.plans) > self.max_size:
            worst = min((p for p in self.plans if not p.selected),
                        key=lambda p: p.score if p.score is not None else -math.inf)
            self.plans.remove(worst)

    def select(self, rng: random.Random, scale: float = 1.0) -> Plan:
        """Logit draw over memory scores; unscored plans count as 0."""
        utilities = {i: (p.score if p.score is not None else 0.0)
                     for i, p in enumerate(self.plans)}
        pick = choices.mnl_choose(utilities, scale, rng)
        for i, p in enumerate(self.plans):
            p.selected = i == pick
        return self.plans[pick]


# --------------------------------------------------------------------------
# plan mutation


def clear_routes(plan: Plan) -> Plan:
    out = copy.deepcopy(plan)
    for leg in out.legs():
        leg.route = None
    return out


def clear_modes(plan: Plan) -> Plan:
    """Erase mode choices; routes go too, since a new mode invalidates
    any stored path."""
    out = copy.deepcopy(plan)
    for leg in out.legs():
        leg.mode = None
        leg.route = None
    return out


@dataclass
class BlankSubtour:
    anchor_index: int  # element index of the anchor activity
    window_lo_h: float
    window_hi_h: float


def clear_discretionary(plan: Plan) -> Plan:
    """Strip non-mandatory activity content down to the home/mandatory
    skeleton and mark where blank subtours should regrow.

    Each mandatory activity gets one blank subtour anchored on it; a plan
    with no mandatory activities gets three home-anchored blanks (morning,
    mid-day, afternoon).
    """
    out = Plan(score=plan.score, selected=plan.selected)
    kept: list[Activity] = []
    for act in plan.activities():
        if act.mandatory or act.type == "home":
            kept.append(copy.deepcopy(act))
    # collapse consecutive home stints left behind by removed subtours
    collapsed: list[Activity] = []
    for act in kept:
        if collapsed and collapsed[-1].type == "home" and act.type == "home":
            collapsed[-1].end_time = act.end_time
            continue
        collapsed.append(act)
    for i, act in enumerate(collapsed):
        if i > 0:
            out.elements.append(Leg())
        out.elements.append(act)
    blanks: list[BlankSubtour] = []
    mandatory_indices = [i for i, e in enumerate(out.elements)
                         if isinstance(e, Activity) and e.mandatory]
    if mandatory_indices:
        for idx in mandatory_indices:
            act = out.elements[idx]
            prev_acts = [e for e in out.elements[:idx] if isinstance(e, Activity)]
            lo = (prev_acts[-1].end_time / 3600.0) if prev_acts and \
                prev_acts[-1].end_time is not None else 4.0
            hi = act.end_time / 3600.0 if act.end_time is not None else 24.0
            blanks.append(BlankSubtour(idx, lo, hi))
    else:
        home_idx = next(i for i, e in enumerate(out.elements)
                        if isinstance(e, Activity))
        for lo, hi in HOME_BLANK_WINDOWS:
            blanks.append(BlankSubtour(home_idx, lo, hi))
    out.blank_subtours = blanks
    return out


@dataclass
class DiscretionaryContext:
    """Everything fill_discretionary needs from the wider simulation."""
    skims: object
    tazs: dict
    intercepts: dict[str, list[float]]
    activity_params: dict[str, tuple[float, float]]
    params: choices.DiscretionaryParams
    modes: tuple[str, ...] = ("CAR", "WALK", "BIKE")


def _subtour_destination(ctx: DiscretionaryContext, origin_taz: str,
                         start_s: float, agent_seed: str,
                         rng: random.Random):
    """(chosen TAZ, travel logsum) over the sampled destination set."""
    dests = choices.sample_destinations(origin_taz, ctx.tazs,
                                        ctx.params.dest_max_radius,
                                        ctx.params.dest_sample_count, agent_seed)
    hour = int(start_s // 3600)
    dest_utils = {}
    for taz in dests:
        mode_utils = {}
        for mode in ctx.modes:
            out = ctx.skims.lookup(mode, origin_taz, taz, hour)
            back = ctx.skims.lookup(mode, taz, origin_taz, hour)
            mode_utils[mode] = choices.destination_mode_utility(
                out.mean_cost + back.mean_cost,
                (out.mean_time + back.mean_time) / 3600.0,
                out.mean_transfers + back.mean_transfers, mode, ctx.params)
        dest_utils[taz] = choices.destination_logsum(mode_utils, ctx.params) \
            * ctx.params.dest_logsum_multiplier
    logsum_over_dests = choices.logsum(dest_utils.values(), ctx.params.lambda_dest)
    chosen = choices.mnl_choose(dest_utils, ctx.params.lambda_dest, rng)
    return chosen, logsum_over_dests


def fill_discretionary(plan: Plan, ctx: DiscretionaryContext,
                       agent_seed: str, rng: random.Random) -> Plan:
    """Grow each blank subtour into concrete elements, or drop it.

    Steps per blank: hour-bin skeleton from the intercept weights,
    exponential duration, seeded destination sample, participation logit
    against staying put.  Modes on the new legs stay blank for the
    within-day mode choice.
    """
    out = copy.deepcopy(plan)
    blanks = sorted(getattr(out, "blank_subtours", []),
                    key=lambda b: b.anchor_index, reverse=True)
    for bi, blank in enumerate(blanks):
        anchor = out.elements[blank.anchor_index]
        # earlier fills may already have shortened this anchor stint
        hi = blank.window_hi_h
        if anchor.end_time is not None:
            hi = min(hi, anchor.end_time / 3600.0)
        try:
            act_type, start_hour = choices.discretionary_skeleton(
                blank.window_lo_h, hi, ctx.intercepts, rng)
        except choices.WindowTooNarrow:
            continue
        start_s = choices.sample_start_second(start_hour, rng)
        mean_dur, _vot = ctx.activity_params.get(act_type, (3600.0, 0.0))
        duration = choices.sample_duration(mean_dur, rng)
        # clamp in seconds against the anchor's own end time; converting
        # through hours and back can round above the boundary
        window_end_s = blank.window_hi_h * 3600.0
        if anchor.end_time is not None:
            window_end_s = min(window_end_s, anchor.end_time)
        end_s = min(start_s + duration, window_end_s)
        duration = end_s - start_s
        if duration <= 0:
            continue
        try:
            dest_taz, travel_logsum = _subtour_destination(
                ctx, anchor.taz, start_s, f"{agent_seed}:{bi}", rng)
        except (choices.NoCandidates, choices.EmptyChoiceSet):
            continue
        if not choices.participation_choice(act_type, duration, travel_logsum,
                                            ctx.params, rng):
            continue
        taz = ctx.tazs[dest_taz]
        disc = Activity(type=act_type, x=taz.centroid_x, y=taz.centroid_y,
                        taz=dest_taz, end_time=end_s,
                        tour_id=f"disc_{agent_seed}_{bi}")
        back = copy.deepcopy(anchor)
        anchor.end_time = start_s
        insert_at = blank.anchor_index + 1
        out.elements[insert_at:insert_at] = [
            Leg(tour_id=disc.tour_id), disc, Leg(tour_id=disc.tour_id), back,
        ]
    if hasattr(out, "blank_subtours"):
        out.blank_subtours = []
    out.validate()
    return out
