"""Shared micro-map fixtures for simulator, trainer, and acceptance tests."""

import numpy as np
import pytest

from swarmtactics import topo_map
from swarmtactics.scenarios import BuildingSpec, ScenarioConfig, validate_scenario


def micro_grid() -> topo_map.OccupancyGrid:
    """80 x 60 m map: one crossing, two driveways, two building sites."""
    w, h = 40, 30
    cells = np.full((h, w), topo_map.OBSTACLE, dtype=np.int8)
    cells[13:16, 2:38] = topo_map.ROAD     # horizontal street
    cells[3:27, 18:21] = topo_map.ROAD     # vertical street
    cells[16:20, 30:33] = topo_map.ROAD    # driveway toward the east building
    cells[20:27, 26:37] = topo_map.BUILDING
    cells[16:20, 8:11] = topo_map.ROAD     # driveway toward the west building
    cells[20:27, 4:15] = topo_map.BUILDING
    return topo_map.OccupancyGrid(w, h, 2.0, cells)


MICRO_BUILDING = BuildingSpec(0, (52.0, 40.0, 22.0, 14.0), (63.0, 39.0))
MICRO_BUILDING_WEST = BuildingSpec(1, (8.0, 40.0, 22.0, 14.0), (19.0, 39.0))


@pytest.fixture(scope="session")
def micro_map_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("maps") / "micro.grid"
    path.write_text(topo_map.dump_grid(micro_grid()))
    return path


@pytest.fixture
def micro_scenario(micro_map_path):
    def make(seed=5, robot_counts=(3, 3, 2), t_f_minutes=10.0,
             buildings=(MICRO_BUILDING,), true_target=0, **overrides):
        cfg = ScenarioConfig(
            map_file=str(micro_map_path),
            buildings=buildings,
            true_target=true_target,
            robot_counts=robot_counts,
            spawn_rect=(24.0, 27.0, 12.0, 4.0),
            t_f_minutes=t_f_minutes,
            seed=seed,
            **overrides,
        )
        validate_scenario(cfg)
        return cfg

    return make


@pytest.fixture
def micro_scenario_two(micro_scenario):
    """Two candidate buildings; routing to the true one first pays off."""

    def make(seed=5, robot_counts=(4, 0, 0), true_target=0, **overrides):
        return micro_scenario(
            seed=seed,
            robot_counts=robot_counts,
            buildings=(MICRO_BUILDING, MICRO_BUILDING_WEST),
            true_target=true_target,
            **overrides,
        )

    return make


def all_to_slot_zero(obs):
    """Constant policy pushing every squad to Pareto slot 0, uniform sizes."""
    return np.full(27, -1.0)
