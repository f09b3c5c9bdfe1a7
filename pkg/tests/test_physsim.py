import random

import pytest

from simrun import physsim
from simrun.physsim import CaccCurve, RouteRequest
from simrun.scenario import Link


def make_link(lid, frm, to, length=1000.0, speed=20.0, cap_vph=1800.0, lanes=1.0):
    return Link(id=lid, from_node=frm, to_node=to, length_m=length,
                free_speed_mps=speed, capacity_vph=cap_vph, lanes=lanes,
                modes={"car"})


class TestFreeFlow:
    def test_single_vehicle_exact(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0)}
        res = physsim.simulate(links, [RouteRequest("v1", ["a"], 100.0)])
        assert res.arrival_times["v1"] == pytest.approx(150.0, abs=0.0)

    def test_multilink_sum_of_free_flow(self):
        links = {
            "a": make_link("a", "n1", "n2", 1000.0, 20.0),
            "b": make_link("b", "n2", "n3", 600.0, 10.0),
        }
        res = physsim.simulate(links, [RouteRequest("v1", ["a", "b"], 0.0)])
        assert res.arrival_times["v1"] == pytest.approx(50.0 + 60.0, abs=0.0)


class TestBottleneck:
    def test_exit_spacing_from_flow_capacity(self):
        # flowCapacity 0.5 veh/s -> exits 2 s apart
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=1800.0, lanes=10.0)}
        routes = [RouteRequest(f"v{i}", ["a"], 0.0) for i in range(10)]
        res = physsim.simulate(links, routes)
        exits = sorted(res.arrival_times.values())
        assert exits[0] == pytest.approx(50.0)
        for e0, e1 in zip(exits, exits[1:]):
            assert e1 - e0 == pytest.approx(2.0)

    def test_fifo_exit_order(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=360.0, lanes=10.0)}
        routes = [RouteRequest(f"v{i}", ["a"], float(i)) for i in range(8)]
        res = physsim.simulate(links, routes)
        order = sorted(res.arrival_times, key=res.arrival_times.get)
        assert order == [f"v{i}" for i in range(8)]

    def test_capacity_bound_per_period(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=720.0, lanes=10.0)}
        routes = [RouteRequest(f"v{i}", ["a"], 0.0) for i in range(30)]
        res = physsim.simulate(links, routes)
        stats = physsim.compute_linkstats(links, res, period_length=60.0)
        flow_cap = 720.0 / 3600.0
        for (lid, period), cell in stats.cells.items():
            assert cell[1] + cell[2] <= flow_cap * 60.0 + 1.0

    def test_added_demand_never_speeds_anyone_up(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=360.0, lanes=20.0)}
        base = [RouteRequest(f"v{i}", ["a"], float(i)) for i in range(10)]
        extra = base + [RouteRequest(f"w{i}", ["a"], 5.0 + i) for i in range(10)]
        res0 = physsim.simulate(links, base)
        res1 = physsim.simulate(links, extra)
        for vid in res0.arrival_times:
            assert res1.arrival_times[vid] >= res0.arrival_times[vid] - 1e-9


class TestSpillback:
    def _network(self):
        return {
            "a": make_link("a", "n0", "n1", 100.0, 10.0, cap_vph=3600.0, lanes=1.0),
            # b and c hold exactly one vehicle each (7.5 m, 1 lane)
            "b": make_link("b", "n1", "n2", 7.5, 7.5, cap_vph=3600.0, lanes=1.0),
            "c": make_link("c", "n2", "n3", 7.5, 7.5, cap_vph=36.0, lanes=1.0),
        }

    def test_blocked_upstream_vehicle_waits(self):
        links = self._network()
        routes = [
            RouteRequest("v0", ["b", "c"], 0.0),
            RouteRequest("v1", ["b", "c"], 0.0),
            RouteRequest("v2", ["a", "b", "c"], 0.0),
            RouteRequest("v3", ["a", "b", "c"], 0.0),
        ]
        res = physsim.simulate(links, routes)
        # c drains at 1 vehicle per 100 s after the first free exit, so the
        # storage-1 queue backs up onto a: v3 leaves a only once v2 frees b.
        a_exits = {tr.vehicle_id: tr.exit_time for tr in res.traversals if tr.link_id == "a"}
        b_exits = {tr.vehicle_id: tr.exit_time for tr in res.traversals if tr.link_id == "b"}
        assert a_exits["v2"] == pytest.approx(10.0)  # free flow, b was empty
        assert b_exits["v2"] > 100.0  # held on b until c drains
        assert a_exits["v3"] == pytest.approx(b_exits["v2"])  # spillback onto a

    def test_conservation_with_spillback(self):
        links = self._network()
        routes = [RouteRequest(f"v{i}", ["a", "b", "c"], float(i)) for i in range(5)]
        res = physsim.simulate(links, routes)
        entries = len(res.traversals)
        exits = sum(1 for tr in res.traversals if tr.exit_time is not None)
        assert entries == exits + 0
        assert res.teleported == []


class TestConservationRandomNetworks:
    def test_entries_equal_exits_plus_occupants(self):
        rng = random.Random(42)
        for trial in range(50):
            n_nodes = rng.randint(3, 8)
            links = {}
            for i in range(rng.randint(n_nodes, 2 * n_nodes)):
                a, b = rng.sample(range(n_nodes), 2)
                links[f"l{i}"] = make_link(
                    f"l{i}", f"n{a}", f"n{b}",
                    length=rng.uniform(50.0, 500.0),
                    speed=rng.uniform(5.0, 25.0),
                    cap_vph=rng.choice([180.0, 600.0, 1800.0]),
                    lanes=rng.choice([1.0, 2.0]),
                )
            out_by_node = {}
            for l in links.values():
                out_by_node.setdefault(l.from_node, []).append(l)
            routes = []
            for v in range(rng.randint(1, 25)):
                start = rng.choice(list(links.values()))
                path = [start.id]
                cur = start
                for _ in range(rng.randint(0, 4)):
                    nxt = out_by_node.get(cur.to_node)
                    if not nxt:
                        break
                    cur = rng.choice(nxt)
                    path.append(cur.id)
                routes.append(RouteRequest(f"v{v}", path, rng.uniform(0.0, 600.0)))
            res = physsim.simulate(links, routes, end_time=4 * 3600.0)
            entries = len(res.traversals)
            exits = sum(1 for tr in res.traversals if tr.exit_time is not None)
            occupants = sum(1 for tr in res.traversals if tr.exit_time is None)
            assert entries == exits + occupants, f"trial {trial}"
            # FIFO per link
            by_link = {}
            for tr in res.traversals:
                if tr.exit_time is not None:
                    by_link.setdefault(tr.link_id, []).append(tr)
            for trs in by_link.values():
                trs.sort(key=lambda tr: tr.entry_time)
                exit_times = [tr.exit_time for tr in trs]
                assert all(a <= b + 1e-9 for a, b in zip(exit_times, exit_times[1:]))


class TestCacc:
    def test_zero_penetration_identity(self):
        curve = CaccCurve([(0.0, 1.0), (0.5, 1.3), (1.0, 2.0)])
        assert curve.multiplier(0.0) == 1.0

    def test_endpoint(self):
        curve = CaccCurve([(0.0, 1.0), (1.0, 2.0)])
        assert curve.multiplier(1.0) == 2.0

    def test_midpoint_linear(self):
        curve = CaccCurve([(0.0, 1.0), (1.0, 2.0)])
        assert curve.multiplier(0.5) == pytest.approx(1.5)

    def test_from_string(self):
        curve = CaccCurve.from_string("0:1.0,0.5:1.3,1.0:2.0")
        assert curve.multiplier(0.25) == pytest.approx(1.15)

    def test_bad_curves_rejected(self):
        with pytest.raises(ValueError):
            CaccCurve([(0.0, 1.1)])
        with pytest.raises(ValueError):
            CaccCurve([(0.0, 1.0), (0.5, 0.9)])

    def test_full_cacc_fleet_doubles_throughput(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=1800.0, lanes=10.0)}
        curve = CaccCurve([(0.0, 1.0), (1.0, 2.0)])
        routes = [RouteRequest(f"v{i}", ["a"], 0.0, is_cacc=True) for i in range(5)]
        res = physsim.simulate(links, routes, cacc_curve=curve)
        exits = sorted(res.arrival_times.values())
        for e0, e1 in zip(exits, exits[1:]):
            assert e1 - e0 == pytest.approx(1.0)  # gap halves from 2 s to 1 s


class TestLinkstatsAndGap:
    def test_mean_travel_time_per_period(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, cap_vph=1800.0, lanes=10.0)}
        routes = [RouteRequest(f"v{i}", ["a"], 0.0) for i in range(3)]
        res = physsim.simulate(links, routes)
        stats = physsim.compute_linkstats(links, res, period_length=3600.0)
        tts = [tr.exit_time - tr.entry_time for tr in res.traversals]
        assert stats.travel_time("a", 0) == pytest.approx(sum(tts) / len(tts))
        assert stats.volume("a", 0) == 3.0

    def test_unobserved_cell_falls_back_to_free_flow(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0)}
        stats = physsim.compute_linkstats(links, physsim.PhyssimResult([], [], {}))
        assert stats.travel_time("a", 5) == pytest.approx(50.0)

    def test_gap_zero_when_tables_agree(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0)}
        res = physsim.simulate(links, [RouteRequest("v1", ["a"], 0.0)])
        stats = physsim.compute_linkstats(links, res)
        assert physsim.relaxation_gap(stats, stats) == 0.0

    def test_gap_relative_difference(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0)}
        res = physsim.simulate(links, [RouteRequest("v1", ["a"], 0.0)])
        sim = physsim.compute_linkstats(links, res)
        predicted = physsim.Linkstats(period_length=3600.0, free_flow={"a": 100.0})
        # simulated 50 s vs predicted 100 s -> |50-100|/100 = 0.5
        assert physsim.relaxation_gap(predicted, sim) == pytest.approx(0.5)

    def test_heavy_light_split(self):
        links = {"a": make_link("a", "n1", "n2", 1000.0, 20.0, lanes=5.0)}
        routes = [RouteRequest("car1", ["a"], 0.0), RouteRequest("truck1", ["a"], 0.0)]
        res = physsim.simulate(links, routes)
        stats = physsim.compute_linkstats(links, res, heavy_vehicles={"truck1"})
        cell = stats.cells[("a", 0)]
        assert cell[1] == 1.0 and cell[2] == 1.0
