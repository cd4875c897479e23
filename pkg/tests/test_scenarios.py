"""Scenario schema, validation, and pool generator tests."""

import json

import numpy as np
import pytest

from swarmtactics import scenarios
from swarmtactics.scenarios import (
    ScenarioError,
    bundled_map_path,
    generate_pool,
    load_map,
    load_scenario,
    make_scenario,
    save_scenario,
    scenario_from_dict,
)


def minimal_doc(map_file):
    return {
        "map": str(map_file),
        "t_f_minutes": 40,
        "seed": 7,
        "robots": {"ugv": 6, "uav_a": 6, "uav_b": 6, "spawn": [10, 28, 20, 4]},
        "buildings": [
            {"id": 0, "rect": [52, 40, 22, 14], "entrance": [63, 39]},
        ],
        "true_target": 0,
    }


class TestSchema:
    def test_minimal_roundtrip(self, micro_map_path, tmp_path):
        cfg = scenario_from_dict(minimal_doc(micro_map_path))
        assert cfg.robot_counts == (6, 6, 6)
        assert cfg.t_f == 2400.0
        p = tmp_path / "sc.json"
        save_scenario(cfg, p)
        again = load_scenario(p)
        assert again.robot_counts == cfg.robot_counts
        assert again.buildings == cfg.buildings
        assert again.seed == cfg.seed

    def test_extreme_counts_roundtrip(self, micro_map_path, tmp_path):
        doc = minimal_doc(micro_map_path)
        doc["robots"].update(ugv=24, uav_a=18, uav_b=18)  # 36 UAVs, 24 UGVs
        cfg = scenario_from_dict(doc)
        p = tmp_path / "sc.json"
        save_scenario(cfg, p)
        assert load_scenario(p).robot_counts == (24, 18, 18)

    def test_true_target_must_be_candidate(self, micro_map_path):
        doc = minimal_doc(micro_map_path)
        doc["true_target"] = 9
        with pytest.raises(ScenarioError, match="true_target"):
            scenario_from_dict(doc)

    def test_missing_field_named(self, micro_map_path):
        doc = minimal_doc(micro_map_path)
        del doc["robots"]["ugv"]
        with pytest.raises(ScenarioError, match="ugv"):
            scenario_from_dict(doc)

    def test_out_of_bounds_geometry_rejected(self, micro_map_path):
        doc = minimal_doc(micro_map_path)
        doc["static_adversaries"] = [{"x": 500.0, "y": 10.0, "kill_radius": 5.0}]
        with pytest.raises(ScenarioError, match="static_adversaries"):
            scenario_from_dict(doc)

    def test_negative_counts_rejected(self, micro_map_path):
        doc = minimal_doc(micro_map_path)
        doc["robots"]["ugv"] = -1
        with pytest.raises(ScenarioError, match="counts"):
            scenario_from_dict(doc)

    def test_json_syntax_error_reports_line(self, tmp_path):
        p = tmp_path / "bad.json"
        p.write_text('{\n  "map": oops\n}\n')
        with pytest.raises(ScenarioError, match="line 2"):
            load_scenario(p)


class TestBundledMap:
    def test_map_loads_and_is_connected(self):
        grid, graph = load_map(str(bundled_map_path()))
        assert grid.size_meters() == (300.0, 150.0)
        assert len(graph.nodes) >= 60
        from swarmtactics import topo_map

        dist = topo_map.dijkstra(graph, 0)
        assert np.isfinite(dist).all()

    def test_sites_clear_of_roads(self):
        grid, _ = load_map(str(bundled_map_path()))
        from swarmtactics import topo_map

        for site in scenarios.BUILDING_SITES:
            x, y, w, h = site.rect
            c0, r0 = int(x / 2), int(y / 2)
            c1, r1 = int((x + w) / 2), int((y + h) / 2)
            block = grid.cells[r0:r1, c0:c1]
            assert (block == topo_map.BUILDING).all()


class TestGenerators:
    def test_pool_is_valid_and_deterministic(self, tmp_path):
        a = generate_pool(tmp_path / "a", 5, seed=3, **scenarios.contested_ranges())
        b = generate_pool(tmp_path / "b", 5, seed=3, **scenarios.contested_ranges())
        for pa, pb in zip(a, b):
            assert pa.read_text() == pb.read_text()
        cfgs = scenarios.load_scenario_dir(tmp_path / "a")
        assert len(cfgs) == 5

    def test_ranges_respected(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            cfg = make_scenario(rng, **scenarios.contested_ranges())
            n_ugv = cfg.robot_counts[0]
            n_uav = cfg.robot_counts[1] + cfg.robot_counts[2]
            assert 6 <= n_ugv <= 24
            assert 12 <= n_uav <= 36
            assert 0 <= len(cfg.static_adversaries) <= 6
            assert 0 <= len(cfg.dynamic_adversaries) <= 14
            assert all(s.radius <= 10.0 for s in cfg.smokes)
            assert len(cfg.candidates) == 3

    def test_training_pool_adversary_free(self, tmp_path):
        generate_pool(tmp_path / "t", 4, seed=1, **scenarios.training_ranges())
        for cfg in scenarios.load_scenario_dir(tmp_path / "t"):
            assert len(cfg.dynamic_adversaries) == 0
            assert len(cfg.static_adversaries) == 2

    def test_empty_dir_rejected(self, tmp_path):
        with pytest.raises(ScenarioError):
            scenarios.load_scenario_dir(tmp_path)
