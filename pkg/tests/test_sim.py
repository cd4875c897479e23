"""Simulator tests: formation, allocation, tick pipeline, full episodes."""

import math

import numpy as np
import pytest

from conftest import all_to_slot_zero
from swarmtactics import sim
from swarmtactics.episode import EpisodeError, Mission, run_episode
from swarmtactics.scenarios import DynamicAdversarySpec, SmokeSpec, StaticAdversarySpec, load_map
from swarmtactics.sim import (
    FormationParams,
    RobotTypeParams,
    RuntimeConfig,
    allocate_tasks,
    build_world,
    engagement_tick,
    formation_velocity,
    search_tick,
    step,
)


def make_world(scenario, rtc=None, counts=None):
    rtc = rtc or RuntimeConfig()
    grid, base = load_map(str(scenario.resolved_map_path()))
    return build_world(scenario, grid, base, rtc, counts), rtc


class TestFormationVelocity:
    def test_inside_region_no_neighbors(self):
        params = FormationParams(region_center=(0.0, 0.0), region_radius=5.0)
        v = formation_velocity((1.0, 0.0), [], params, (0.5, 0.0), max_speed=2.0)
        assert v == pytest.approx([0.5, 0.0])

    def test_outside_region_points_inward(self):
        params = FormationParams(region_center=(0.0, 0.0), region_radius=5.0)
        v = formation_velocity((9.0, 0.0), [], params, (0.0, 0.0), max_speed=10.0)
        assert v[0] == pytest.approx(-4.0)
        assert v[1] == pytest.approx(0.0)

    def test_pair_repulsion_magnitude(self):
        params = FormationParams(alpha=1.0, beta=0.0, d_min=1.0)
        va = formation_velocity((0.0, 0.0), [(0.5, 0.0)], params, (0.0, 0.0), 10.0)
        vb = formation_velocity((0.5, 0.0), [(0.0, 0.0)], params, (0.0, 0.0), 10.0)
        assert np.linalg.norm(va) == pytest.approx(0.5)
        assert np.linalg.norm(vb) == pytest.approx(0.5)
        assert va == pytest.approx(-vb)

    def test_speed_clamp(self):
        params = FormationParams(region_center=(100.0, 0.0), region_radius=1.0)
        v = formation_velocity((0.0, 0.0), [], params, (0.0, 0.0), max_speed=3.0)
        assert np.linalg.norm(v) == pytest.approx(3.0)

    def test_coincident_requires_rng(self):
        params = FormationParams()
        with pytest.raises(ValueError):
            formation_velocity((0.0, 0.0), [(0.0, 0.0)], params, (0.0, 0.0), 1.0)
        rng = np.random.default_rng(0)
        v = formation_velocity((0.0, 0.0), [(0.0, 0.0)], params, (0.0, 0.0), 1.0, rng)
        assert np.linalg.norm(v) > 0.0


class TestBatchMatchesScalar:
    def test_travelling_squad(self, micro_scenario):
        # one tick of the vectorized motion equals per-robot formation rule
        world, rtc = make_world(micro_scenario(robot_counts=(5, 0, 0)))
        rng = np.random.default_rng(3)
        world.pos[:] = rng.uniform(10, 50, size=(5, 2))
        world.squad[:] = 0
        world.assigned[:] = True
        world.reached[:] = False
        dest = np.array([70.0, 30.0])
        world.dest_pos[:] = dest
        world.target[:] = dest
        world.path_len[:] = 1
        world.path_id[:] = 0
        world._paths.append(dest[None, :])

        before = world.pos.copy()
        expected = np.empty_like(before)
        for i in range(5):
            neighbors = [before[j] for j in range(5) if j != i]
            params = FormationParams(
                alpha=rtc.alpha, beta=rtc.beta, d_min=rtc.d_min,
                region_center=tuple(dest), region_radius=rtc.region_radius,
            )
            delta = dest - before[i]
            path_v = delta / np.linalg.norm(delta) * world.speed[i]
            v = formation_velocity(before[i], neighbors, params, path_v,
                                   world.speed[i])
            expected[i] = before[i] + v * rtc.dt
        sim._tick_motion(world, rtc)
        assert np.allclose(world.pos, expected, atol=1e-9)


class TestAllocateTasks:
    def make(self, micro_scenario, counts=(6, 0, 0)):
        world, rtc = make_world(micro_scenario(robot_counts=counts))
        dests = [world.pos.mean(axis=0)] * 9
        return world, dests

    def test_exact_allocation(self, micro_scenario):
        world, dests = self.make(micro_scenario)
        out = allocate_tasks(world, [3, 2, 1, 0, 0, 0, 0, 0, 0], dests)
        assert [len(out[j]) for j in range(3)] == [3, 2, 1]
        assigned = [i for j in range(9) for i in out[j]]
        assert len(set(assigned)) == 6

    def test_over_request_scales_down(self, micro_scenario):
        world, dests = self.make(micro_scenario)
        out = allocate_tasks(world, [5, 4, 3, 0, 0, 0, 0, 0, 0], dests)
        assert sum(len(out[j]) for j in range(3)) == 6
        assert [len(out[j]) for j in range(3)] == [3, 2, 1]

    def test_zero_size_squad_empty(self, micro_scenario):
        world, dests = self.make(micro_scenario)
        out = allocate_tasks(world, [6, 0, 0, 0, 0, 0, 0, 0, 0], dests)
        assert len(out[0]) == 6
        assert all(len(out[j]) == 0 for j in range(1, 9))

    def test_nearest_first(self, micro_scenario):
        world, dests = self.make(micro_scenario, counts=(4, 0, 0))
        world.pos[:, 0] = [10.0, 20.0, 30.0, 40.0]
        world.pos[:, 1] = 30.0
        dests = [np.array([0.0, 30.0])] * 9
        out = allocate_tasks(world, [2, 2, 0, 0, 0, 0, 0, 0, 0], dests)
        assert sorted(out[0]) == [0, 1]  # the two robots nearest x=0
        assert sorted(out[1]) == [2, 3]

    def test_non_idle_untouched(self, micro_scenario):
        world, dests = self.make(micro_scenario)
        world.assigned[0] = True
        world.reached[0] = False  # robot 0 is mid-mission
        out = allocate_tasks(world, [9, 0, 0, 0, 0, 0, 0, 0, 0], dests)
        assert 0 not in out[0]
        assert len(out[0]) == 5


class TestStep:
    def test_straight_advance(self, micro_scenario):
        rtc = RuntimeConfig(dt=1.0)
        world, _ = make_world(micro_scenario(robot_counts=(1, 0, 0)), rtc)
        world.pos[0] = (10.0, 30.0)
        world.assigned[0] = True
        world.squad[0] = 0
        world.dest_pos[0] = (20.0, 30.0)
        world.target[0] = (20.0, 30.0)
        world.path_id[0] = 0
        world.path_len[0] = 1
        world._paths.append(np.array([[20.0, 30.0]]))
        step(world, rtc)
        assert world.pos[0] == pytest.approx([11.0, 30.0])  # 1 m/s UGV

    def test_smoke_halves_speed(self, micro_scenario):
        rtc = RuntimeConfig(dt=1.0, smoke_slowdown=0.5)
        sc = micro_scenario(robot_counts=(1, 0, 0),
                            smokes=(SmokeSpec(10.0, 30.0, 8.0),))
        world, _ = make_world(sc, rtc)
        world.pos[0] = (10.0, 30.0)
        world.assigned[0] = True
        world.squad[0] = 0
        world.dest_pos[0] = (20.0, 30.0)
        world.target[0] = (20.0, 30.0)
        world.path_id[0] = 0
        world.path_len[0] = 1
        world._paths.append(np.array([[20.0, 30.0]]))
        step(world, rtc)
        assert world.pos[0] == pytest.approx([10.5, 30.0])

    def test_static_adversary_disables(self, micro_scenario):
        rtc = RuntimeConfig(dt=1.0)
        sc = micro_scenario(robot_counts=(1, 0, 0),
                            static_adversaries=(StaticAdversarySpec(10.0, 30.0, 5.0),))
        world, _ = make_world(sc, rtc)
        world.pos[0] = (10.0, 30.0)
        step(world, rtc)
        assert not world.active[0]
        before = world.pos[0].copy()
        step(world, rtc)
        assert world.pos[0] == pytest.approx(before)  # disabled robots never move

    def test_robot_conservation_and_speed_bound(self, micro_scenario):
        sc = micro_scenario(robot_counts=(3, 3, 2), seed=11)
        world, rtc = make_world(sc)
        world.assigned[:] = True
        world.squad[:] = np.arange(world.n) % 9
        world.dest_pos[:] = (70.0, 30.0)
        world.target[:] = (70.0, 30.0)
        world.path_id[:] = 0
        world.path_len[:] = 1
        world._paths.append(np.array([[70.0, 30.0]]))
        for _ in range(200):
            before = world.pos.copy()
            step(world, rtc)
            moved = np.linalg.norm(world.pos - before, axis=1)
            assert np.all(moved <= world.speed * rtc.dt + 1e-9)
            assert int(world.active.sum()) + int((~world.active).sum()) == world.n


class TestEngagement:
    def combat_world(self, micro_scenario, n_robots=2, adv_size=10**6):
        rtc = RuntimeConfig(dt=1.0, engage_radius=15.0, engage_risk=0.1,
                            robot_types=(
                                RobotTypeParams("ugv", 1.0, 30.0, 0.0, True, 4.0),
                                RobotTypeParams("uav_a", 5.0, 50.0, 0.0, False, 40.0),
                                RobotTypeParams("uav_b", 5.0, 60.0, 0.0, False, 40.0),
                            ))
        sc = micro_scenario(
            robot_counts=(n_robots, 0, 0),
            dynamic_adversaries=(
                DynamicAdversarySpec(((30.0, 30.0),), adv_size, 1.0),
            ),
        )
        world, _ = make_world(sc, rtc)
        world.pos[:] = (30.0, 30.0)
        return world, rtc

    def test_no_engagement_no_change(self, micro_scenario):
        world, rtc = self.combat_world(micro_scenario)
        world.pos[:] = (10.0, 55.0)  # far from the adversary at (30, 30)
        active_before = world.active.copy()
        size_before = world.adversaries[0].size
        engagement_tick(world, rtc)
        assert np.array_equal(world.active, active_before)
        assert world.adversaries[0].size == size_before

    def test_disable_probability_monte_carlo(self, micro_scenario):
        # p_adv=0.1, n=2 engaged -> per-robot disable probability 0.05
        world, rtc = self.combat_world(micro_scenario, n_robots=2)
        trials = 10_000
        disabled = 0
        for _ in range(trials):
            world.active[:] = True
            engagement_tick(world, rtc)
            disabled += int((~world.active).sum())
        p = 0.05
        n_draws = 2 * trials
        sigma = math.sqrt(n_draws * p * (1 - p))
        assert abs(disabled - n_draws * p) < 3 * sigma

    def test_squad_removed_at_zero(self, micro_scenario):
        world, rtc = self.combat_world(micro_scenario, n_robots=2, adv_size=1)
        world.rng = np.random.default_rng(1)
        world.neutralize[:] = 1.0  # guaranteed kill per engaged robot
        world.adversaries[0].observed = True
        engagement_tick(world, rtc)
        assert world.adversaries[0].size == 0
        assert not world.adversaries[0].observed
        assert world.observed_adversary_positions == []


class TestSearchTick:
    def indoor_world(self, micro_scenario, rate=1.0, dt=10.0):
        rtc = RuntimeConfig(dt=dt, robot_types=(
            RobotTypeParams("ugv", 1.0, 30.0, 0.15, True, rate),
            RobotTypeParams("uav_a", 5.0, 50.0, 0.05, False, 40.0),
            RobotTypeParams("uav_b", 5.0, 60.0, 0.05, False, 40.0),
        ))
        sc = micro_scenario(robot_counts=(1, 0, 0))
        world, _ = make_world(sc, rtc)
        world.pos[0] = world.buildings[0].center
        world.entered[0] = 0
        return world, rtc

    def test_indoor_rate(self, micro_scenario):
        world, rtc = self.indoor_world(micro_scenario)
        area = world.buildings[0].area
        search_tick(world, rtc)
        assert world.buildings[0].psi_in == pytest.approx(10.0 * 1.0 / area)

    def test_psi_capped_at_one(self, micro_scenario):
        world, rtc = self.indoor_world(micro_scenario, rate=10.0, dt=1000.0)
        search_tick(world, rtc)
        search_tick(world, rtc)
        assert world.buildings[0].psi_in == 1.0

    def test_threshold_event_confirms_true_target(self, micro_scenario):
        world, rtc = self.indoor_world(micro_scenario, rate=100.0, dt=10.0)
        events = search_tick(world, rtc)
        assert events == [("confirmed_true", 0)]
        assert search_tick(world, rtc) == []  # resolved once


class TestRunEpisode:
    def test_scripted_policy_succeeds(self, micro_scenario):
        result = run_episode(micro_scenario(), all_to_slot_zero)
        assert result.success
        assert result.rescue_time < micro_scenario().t_f
        assert result.survival_rate == 1.0  # no adversaries, no smoke

    def test_noop_policy_fails_short_mission(self, micro_scenario):
        # 1-minute limit: UGVs at 1 m/s cannot reach and clear the target
        sc = micro_scenario(t_f_minutes=1.0)
        result = run_episode(sc, all_to_slot_zero)
        assert not result.success
        assert result.rescue_time == sc.t_f
        assert result.survival_rate == 1.0

    def test_same_seed_identical_hash(self, micro_scenario):
        sc = micro_scenario(seed=21)
        a = run_episode(sc, all_to_slot_zero)
        b = run_episode(sc, all_to_slot_zero)
        assert a.trace_hash == b.trace_hash
        assert a.decisions == b.decisions

    def test_malformed_policy_width_rejected(self, micro_scenario):
        with pytest.raises(EpisodeError, match="refusing to start"):
            run_episode(micro_scenario(), lambda obs: np.zeros(5))

    def test_encoding_mode_obs_widths(self, micro_scenario):
        sc = micro_scenario()
        assert Mission(sc, encoding_mode="both").obs_dim == 148
        raw_dim = Mission(sc, encoding_mode="output").obs_dim
        assert raw_dim == 4 + 9 * RuntimeConfig().n_max_per_type
        assert Mission(sc, encoding_mode="none").obs_dim == raw_dim

    def test_raw_output_mode_runs(self, micro_scenario):
        sc = micro_scenario()
        result = run_episode(sc, all_to_slot_zero, encoding_mode="input")
        assert result.rescue_time <= sc.t_f

    def test_psi_monotone_in_time(self, micro_scenario):
        sc = micro_scenario(seed=3)
        mission = Mission(sc)
        obs = mission.observe()
        prev = (0.0, 0.0)
        for _ in range(8):
            mission.act(all_to_slot_zero(obs))
            done = mission.advance()
            b = mission.world.buildings[0]
            assert b.psi_in >= prev[0] - 1e-12
            assert b.psi_out >= prev[1] - 1e-12
            prev = (b.psi_in, b.psi_out)
            if done:
                break
            obs = mission.observe()


class TestFormationSettling:
    def test_twenty_robots_settle(self, micro_scenario):
        rtc = RuntimeConfig(region_radius=10.0, d_min=1.0)
        world, _ = make_world(micro_scenario(robot_counts=(0, 20, 0)), rtc)
        center = np.array([40.0, 30.0])
        rng = np.random.default_rng(8)
        world.pos[:] = center + rng.uniform(-2.0, 2.0, size=(20, 2))
        world.squad[:] = 3
        world.assigned[:] = True
        world.reached[:] = True
        world.dest_pos[:] = center
        world.target[:] = center
        for _ in range(600):  # 60 sim-seconds
            step(world, rtc)
        d_center = np.linalg.norm(world.pos - center, axis=1)
        assert np.all(d_center <= rtc.region_radius + 1e-3)
        diff = world.pos[:, None, :] - world.pos[None, :, :]
        dist = np.linalg.norm(diff, axis=2)
        np.fill_diagonal(dist, np.inf)
        assert dist.min() >= rtc.d_min * (1 - 1e-6)
        before = world.pos.copy()
        step(world, rtc)
        assert np.linalg.norm(world.pos - before, axis=1).max() < 1e-3
