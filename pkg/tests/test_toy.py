import pytest

from simrun.scenario import load_scenario, validate_scenario
from simrun.config import Config
from simrun.toy import TOY_CONFIG, make_network, make_toy


class TestNetwork:
    def test_link_count(self):
        # bidirectional links along both axes of a g x g grid
        links = make_network(grid=6)
        assert len(links) == 2 * 2 * 6 * 5

    def test_links_are_paired(self):
        links = make_network(grid=4)
        for link in links.values():
            reverse = [l for l in links.values()
                       if l.from_node == link.to_node
                       and l.to_node == link.from_node]
            assert len(reverse) == 1

    def test_node_names_encode_coordinates(self):
        links = make_network(grid=3)
        for link in links.values():
            _, x, y = link.from_node.split("_")
            assert (float(x), float(y)) == link.from_xy


@pytest.fixture(scope="module")
def scenario():
    return make_toy("unused", n_agents=60, grid=6, write=False)


class TestToyScenario:
    def test_agent_count(self, scenario):
        assert len(scenario.persons) == 60

    def test_validates_clean(self, scenario):
        errors = [p for p in validate_scenario(scenario)
                  if p.startswith("error")]
        assert errors == []

    def test_plans_are_home_work_home(self, scenario):
        for person in scenario.persons.values():
            acts = person.plan.activities()
            assert [a.type for a in acts] == ["home", "work", "home"]
            assert acts[0].end_time < acts[1].end_time
            person.plan.validate(person.id)

    def test_household_vehicles_have_known_types(self, scenario):
        for vehicle in scenario.vehicles.values():
            assert vehicle.type_id in scenario.vehicle_types

    def test_bus_trips_have_increasing_stop_times(self, scenario):
        assert scenario.transit_trips
        for trip in scenario.transit_trips.values():
            times = [st.departure_s for st in trip.stop_times]
            assert times == sorted(times)

    def test_ridehail_fleet_present(self, scenario):
        assert len(scenario.ridehail_fleet) == 20

    def test_deterministic(self):
        a = make_toy("unused", n_agents=40, grid=5, write=False)
        b = make_toy("unused", n_agents=40, grid=5, write=False)
        assert sorted(a.persons) == sorted(b.persons)
        for pid in a.persons:
            pa, pb = a.persons[pid], b.persons[pid]
            assert pa.value_of_time == pb.value_of_time
            assert [x.end_time for x in pa.plan.activities()] == \
                [x.end_time for x in pb.plan.activities()]
        assert {v.vehicle_id for v in a.ridehail_fleet} == \
            {v.vehicle_id for v in b.ridehail_fleet}


class TestWrittenToy:
    def test_roundtrip_through_files(self, tmp_path):
        make_toy(tmp_path, n_agents=30, grid=5)
        assert (tmp_path / "config.conf").exists()
        config = Config.from_file(tmp_path / "config.conf")
        scenario = load_scenario(tmp_path, config)
        assert len(scenario.persons) == 30
        errors = [p for p in validate_scenario(scenario)
                  if p.startswith("error")]
        assert errors == []

    def test_config_text_is_fixed(self, tmp_path):
        make_toy(tmp_path, n_agents=10, grid=4)
        assert (tmp_path / "config.conf").read_text() == TOY_CONFIG
