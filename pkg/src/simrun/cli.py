"""Command-line entry point.

``simrun run`` drives the co-evolutionary loop: fill discretionary
activities, execute the day, resolve congested link times from the
executed routes, refresh skims, score, replan — for the configured
number of iterations — and writes per-iteration event logs plus
run-level summary tables, a mode-split chart, and exported skims.
"""

from __future__ import annotations

import argparse
import copy
import csv
import gzip
import random
import sys
from pathlib import Path

from . import choices, outputs, physsim, replanning, ridehail, router
from .agents import DayContext, simulate_day
from .config import Config, ConfigError
from .parking import ParkingManager
from .scenario import (MissingFile, ScenarioError, load_scenario,
                       validate_scenario)
from .skims import Skims
from .toy import make_toy

EXIT_OK = 0
EXIT_RUN_FAILED = 1
EXIT_BAD_INPUT = 2


def _fleet_from_specs(specs) -> list[ridehail.FleetVehicle]:
    return [ridehail.FleetVehicle(
        s.vehicle_id, s.x, s.y,
        shift=(s.shift_start_s, s.shift_end_s),
        geofence=s.geofence, autonomous=s.autonomous, soc=s.soc)
        for s in specs]


def _discretionary_params(config: Config) -> choices.DiscretionaryParams:
    sub = config.with_prefix("discretionary")
    return choices.DiscretionaryParams(
        beta0_by_activity={k[len("beta0."):]: float(v)
                           for k, v in sub.items() if k.startswith("beta0.")},
        beta_time_by_activity={k[len("betaTime."):]: float(v)
                               for k, v in sub.items()
                               if k.startswith("betaTime.")},
        lambda_dest=config.get_float("discretionary.lambdaDest"),
        lambda_mode=config.get_float("discretionary.lambdaMode"),
        dest_sample_count=config.get_int("discretionary.destinationSampleCount"),
        dest_max_radius=config.get_float("discretionary.destinationMaxRadiusMeters"),
        beta_cost=config.get_float("discretionary.betaCost"),
        beta_transfer=config.get_float("discretionary.betaTransfer"),
        late_penalty=config.get_float("discretionary.latePenalty"),
        dest_logsum_multiplier=config.get_float("discretionary.destLogsumMultiplier"),
    )


def _linkstats_from_table(table: router.LinkTravelTimeTable | None,
                          links: dict) -> physsim.Linkstats:
    """The travel-time table agents planned with, as a Linkstats view for
    the relaxation-gap comparison (free flow when no table yet)."""
    free_flow = {lid: l.length_m / l.free_speed_mps for lid, l in links.items()}
    stats = physsim.Linkstats(period_length=3600.0, free_flow=free_flow)
    if table is not None:
        stats.period_length = table.period_length
        for lid, cells in table.times.items():
            for period, tt in enumerate(cells):
                stats.cells[(lid, period)] = [tt, 0.0, 0.0]
    return stats


def _write_linkstats(stats: physsim.Linkstats, path: Path) -> None:
    with outputs.gzip_text_writer(path) as fh:
        w = csv.writer(fh)
        w.writerow(["link_id", "period", "travel_time_s", "volume_light",
                    "volume_heavy"])
        for (lid, period) in sorted(stats.cells):
            tt, ld, hd = stats.cells[(lid, period)]
            w.writerow([lid, period, repr(tt), repr(ld), repr(hd)])


def run(scenario_dir: str | Path, config: Config,
        out_dir: str | Path, iterations: int | None = None) -> int:
    scenario_dir = Path(scenario_dir)
    out_dir = Path(out_dir)
    try:
        scenario = load_scenario(scenario_dir, config)
    except MissingFile as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    problems = [p for p in validate_scenario(scenario) if p.startswith("error")]
    if problems:
        for p in problems:
            print(p, file=sys.stderr)
        return EXIT_BAD_INPUT

    n_iterations = iterations if iterations is not None \
        else config.get_int("lastIteration") + 1
    seed = config.get_int("seed")
    iters_dir = out_dir / "ITERS"
    iters_dir.mkdir(parents=True, exist_ok=True)

    mode_params = choices.ModeChoiceParams.from_config(config)
    weights = replanning.ReplanningWeights.from_config(config)
    memory_size = config.get_int("replanning.planMemorySize")
    selection_scale = config.get_float("replanning.selectionScale")
    stuck_score = config.get_float("replanning.stuckScore")
    day_end = config.get_float("sim.endOfDaySec")
    fares = ridehail.FareParams(
        base=config.get_float("agents.rideHail.defaultBaseFare"),
        per_mile=config.get_float("agents.rideHail.defaultCostPerMile"),
        pooled_per_mile=config.get_float("agents.rideHail.pooledCostPerMile"),
        per_minute=config.get_float("agents.rideHail.defaultCostPerMinute"))
    matching = ridehail.MatchingParams(
        max_wait_s=config.get_float("agents.rideHail.maxWaitingTimeInSec"),
        max_excess_ride_time=config.get_float("agents.rideHail.maxExcessRideTime"),
        max_requests_per_vehicle=config.get_int("agents.rideHail.maxRequestsPerVehicle"))
    parking_params = choices.ParkingChoiceParams.from_config(config)

    skims = Skims(taz_centroids={t.id: t.centroid
                                 for t in scenario.tazs.values()},
                  carry_decay=config.get_float("skims.carryForwardDecay"),
                  default_cost_per_mile=config.get_float("agents.rideHail.defaultCostPerMile"))
    transit = None
    if scenario.transit_trips:
        transit = router.TransitNetwork(scenario.transit_routes,
                                        scenario.transit_trips)
    disc_enabled = config.get_bool("discretionary.enabled") \
        and bool(scenario.activity_intercepts)
    disc_ctx = replanning.DiscretionaryContext(
        skims=skims, tazs=scenario.tazs,
        intercepts=scenario.activity_intercepts,
        activity_params=scenario.activity_params,
        params=_discretionary_params(config))
    beta_by_activity = {a: vot for a, (_, vot) in scenario.activity_params.items()}
    default_beta = config.get_float("replanning.betaActivityDefault")
    cacc_curve = None
    if config.get_bool("physsim.caccEnabled"):
        cacc_curve = physsim.CaccCurve.from_string(config.get_str("physsim.caccCurve"))

    if disc_enabled and config.get_bool("discretionary.seedInitialPlans"):
        # grow discretionary tours on every plan before the first day, so
        # demand is stationary from iteration 0 instead of ramping up as
        # replanning reaches each agent
        for pid in sorted(scenario.persons):
            person = scenario.persons[pid]
            person.plan = replanning.clear_discretionary(person.plan)

    memories = {pid: replanning.PlanMemory(memory_size)
                for pid in scenario.persons}
    initial_soc = {vid: v.state_of_charge for vid, v in scenario.vehicles.items()}
    link_table: router.LinkTravelTimeTable | None = None
    gaps: list[float] = []
    summaries: list[dict] = []
    splits: list = []
    stuck_total = 0

    for it in range(n_iterations):
        # pre-day: grow blank discretionary subtours on replanned plans
        if disc_enabled:
            for pid in sorted(scenario.persons):
                person = scenario.persons[pid]
                if getattr(person.plan, "blank_subtours", None):
                    rng = random.Random(f"disc:{seed}:{it}:{pid}")
                    person.plan = replanning.fill_discretionary(
                        person.plan, disc_ctx, f"{pid}", rng)
        for vid, soc in initial_soc.items():
            scenario.vehicles[vid].state_of_charge = soc

        parking_mgr = ParkingManager(
            scenario.parking,
            ubiquitous=config.get_bool("parking.ubiquitous") or not scenario.parking,
            d_max_m=config.get_float("parking.dMaxMeters"))
        ctx = DayContext(
            scenario=scenario, mode_params=mode_params, skims=skims,
            link_table=link_table, transit=transit, parking=parking_mgr,
            rh_fleet=_fleet_from_specs(scenario.ridehail_fleet),
            rh_fares=fares, rh_matching=matching,
            parking_params=parking_params,
            default_vot=config.get_float("modeChoice.defaultValueOfTime"),
            dispatch_period_s=config.get_float("agents.rideHail.dispatchCycleSec"),
            day_end_s=day_end,
            cav_enabled=config.get_bool("agents.vehicles.householdCavSchedulingEnabled"))
        result = simulate_day(ctx, it)
        stuck_total += result.stuck_count

        phys = physsim.simulate(
            scenario.links, result.routes,
            effective_vehicle_length=config.get_float("physsim.effectiveVehicleLengthMeters"),
            flow_capacity_factor=config.get_float("physsim.flowCapacityFactor"),
            cacc_curve=cacc_curve, end_time=day_end * 2)
        sim_stats = physsim.compute_linkstats(scenario.links, phys)
        gaps.append(physsim.relaxation_gap(
            _linkstats_from_table(link_table, scenario.links), sim_stats))
        noise = config.get_float("router.noiseSigma")
        measured = router.update_link_times(
            scenario.links, sim_stats, noise_sigma=noise,
            rng=random.Random(f"noise:{seed}:{it}") if noise > 0 else None)
        msa_floor = config.get_float("router.msaWeightFloor")
        link_table = router.blend_link_times(
            link_table, measured, max(1.0 / (it + 1), msa_floor))
        skims.finalize_iteration()

        # write this iteration's artifacts
        it_dir = iters_dir / f"it.{it}"
        it_dir.mkdir(exist_ok=True)
        events = result.events.sorted()
        suffix = ".csv.gz" if config.get_bool("outputs.gzipEvents") else ".csv"
        outputs.write_events(events, it_dir / f"events{suffix}")
        _write_linkstats(sim_stats, it_dir / "linkstats.csv.gz")
        summary = outputs.summarize(events, it)
        summary["relaxation_gap"] = gaps[-1]
        summaries.append(summary)
        splits.append(outputs.mode_split(events))

        # score the executed day and pick next plans
        for pid in sorted(scenario.persons):
            person = scenario.persons[pid]
            day = result.person_days.get(pid)
            if day is None:
                continue
            plan = person.plan
            plan.score = replanning.score_plan(
                day.trip_utilities, day.activity_durations,
                beta_by_activity if beta_by_activity else
                {t: default_beta for t, _ in day.activity_durations},
                stuck=day.stuck, stuck_score=stuck_score)
            mem = memories[pid]
            mem.add(copy.deepcopy(plan))
            if it == n_iterations - 1:
                continue
            rng = random.Random(f"replan:{seed}:{it}:{pid}")
            strategy = replanning.select_strategy(weights, rng)
            if strategy == "KeepBest":
                person.plan = copy.deepcopy(mem.select(rng, selection_scale))
            elif strategy == "ClearRoutes":
                person.plan = replanning.clear_routes(mem.selected)
            elif strategy == "ClearModes":
                person.plan = replanning.clear_modes(mem.selected)
            else:
                if disc_enabled:
                    person.plan = replanning.clear_discretionary(mem.selected)
                else:
                    person.plan = copy.deepcopy(mem.selected)

    outputs.write_summary(summaries, out_dir / "summaryStats.csv")
    with open(out_dir / "relaxationGap.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "relaxation_gap"])
        for i, g in enumerate(gaps):
            w.writerow([i, repr(g)])
    outputs.write_mode_split_series(splits, out_dir / "modeChoice.csv")
    if config.get_bool("outputs.figures"):
        outputs.plot_mode_split_series(splits, out_dir / "modeChoice.png")
    skims_dir = out_dir / "skims"
    skims_dir.mkdir(exist_ok=True)
    skims.export(skims_dir)
    print(f"final relaxation gap: {gaps[-1]:.6f}" if gaps
          else "no iterations run")
    if stuck_total:
        print(f"error: {stuck_total} stuck person-days", file=sys.stderr)
        return EXIT_RUN_FAILED
    return EXIT_OK


def validate(scenario_dir: str | Path, config: Config) -> int:
    try:
        scenario = load_scenario(Path(scenario_dir), config)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    report = validate_scenario(scenario)
    for line in report:
        print(line)
    n_errors = sum(1 for line in report if line.startswith("error"))
    print(f"{len(scenario.persons)} persons, {len(scenario.links)} links, "
          f"{len(scenario.transit_trips)} transit trips; "
          f"{n_errors} errors")
    return EXIT_BAD_INPUT if n_errors else EXIT_OK


def _parse_overrides(pairs: list[str]) -> dict[str, str]:
    out = {}
    for pair in pairs:
        key, sep, value = pair.partition("=")
        if not sep:
            raise ConfigError(f"--set expects key=value, got {pair!r}")
        out[key.strip()] = value.strip()
    return out


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="simrun",
        description="agent-based multimodal transport simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run the iterative simulation")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--iterations", type=int, default=None)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE")
    p_run.add_argument("--workers", type=int, default=1,
                       help="reserved; only the deterministic single-worker "
                            "mode is implemented")
    p_run.add_argument("--output", default=None)

    p_val = sub.add_parser("validate", help="check scenario inputs")
    p_val.add_argument("--config", required=True)
    p_val.add_argument("--set", action="append", default=[], dest="overrides",
                       metavar="KEY=VALUE")

    p_toy = sub.add_parser("make-toy", help="generate the reference toy scenario")
    p_toy.add_argument("out_dir")
    p_toy.add_argument("--size", type=int, default=1000,
                       help="number of agents")
    p_toy.add_argument("--grid", type=int, default=10)
    p_toy.add_argument("--seed", type=int, default=42)
    p_toy.add_argument("--ridehail-vehicles", type=int, default=20)

    args = parser.parse_args(argv)
    if args.command == "make-toy":
        make_toy(args.out_dir, n_agents=args.size, grid=args.grid,
                 seed=args.seed, rh_vehicles=args.ridehail_vehicles)
        print(f"wrote toy scenario to {args.out_dir}")
        return EXIT_OK

    try:
        config = Config.from_file(args.config, _parse_overrides(args.overrides))
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT
    scenario_dir = Path(args.config).parent
    if args.command == "validate":
        return validate(scenario_dir, config)

    if args.seed is not None:
        config.set("seed", args.seed)
    out_dir = Path(args.output) if args.output else scenario_dir / "output"
    try:
        return run(scenario_dir, config, out_dir, iterations=args.iterations)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_BAD_INPUT


if __name__ == "__main__":
    sys.exit(main())
