"""Episode driver: the tactical decision loop over the kinematic simulator.

A policy is any callable mapping an observation vector to 27 raw outputs
in [-1, 1].  Decisions happen on a fixed cadence and immediately after any
target-belief change; between decisions the world advances in fixed-step
ticks.  The per-decision trace is logged and hashed (FNV-1a 64) so two
runs of the same (scenario, policy, seed) can be compared exactly.
"""

from __future__ import annotations

import math

import numpy as np

from . import encoding, topo_map
from .encoding import ACT_DIM, EncodingConfig
from .scenarios import ScenarioConfig, load_map
from .sim import EpisodeResult, RuntimeConfig, apply_tactics, build_world, step

ENCODING_MODES = ("both", "input", "output", "none")

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3


class EpisodeError(ValueError):
    """Bad policy wiring or malformed episode configuration."""


def fnv1a64(text: str) -> int:
    h = _FNV_OFFSET
    for byte in text.encode("utf-8"):
        h ^= byte
        h = (h * _FNV_PRIME) & 0xFFFFFFFFFFFFFFFF
    return h


class Mission:
    """One scenario instance stepped at decision granularity."""

    def __init__(self, scenario: ScenarioConfig, rtc: RuntimeConfig | None = None,
                 encoding_mode: str = "both", robot_counts=None):
        if encoding_mode not in ENCODING_MODES:
            raise EpisodeError(f"unknown encoding mode {encoding_mode!r}")
        self.rtc = rtc if rtc is not None else RuntimeConfig()
        self.mode = encoding_mode
        self.input_encoded = encoding_mode in ("both", "input")
        self.output_encoded = encoding_mode in ("both", "output")
        self.scenario = scenario
        grid, base_graph = load_map(str(scenario.resolved_map_path()))
        self.world = build_world(scenario, grid, base_graph, self.rtc, robot_counts)
        w_m, h_m = grid.size_meters()
        self.enc = EncodingConfig(
            t_f=scenario.t_f,
            v_max=self.rtc.v_max,
            map_width=w_m,
            map_height=h_m,
            n_max_per_type=self.rtc.n_max_per_type,
        )
        if not self.input_encoded:
            if max(self.world.initial_counts) > self.enc.n_max_per_type:
                raise EpisodeError(
                    "robot count exceeds raw-encoding slots "
                    f"({self.enc.n_max_per_type} per type)"
                )
        self._pareto = None
        self._next_decide = 0.0
        self.decisions: list[str] = []

    @property
    def obs_dim(self) -> int:
        return encoding.OBS_DIM if self.input_encoded else encoding.raw_obs_dim(self.enc)

    def observe(self) -> np.ndarray:
        w = self.world
        w.set_plain_weights()
        if self.input_encoded or self.output_encoded:
            self._pareto = encoding.pareto_nodes(
                w.graph, w.belief, w.goal_nodes, self.enc,
                smokes=w.smokes_for_weights(),
                observed_adversaries=w.observed_for_caution(),
                c_s=self.rtc.c_s, c_a=self.rtc.c_a, r_a=self.rtc.r_a,
            )
        if self.input_encoded:
            clusters = encoding.cluster_robots(
                w.positions_by_type(), seed=self.scenario.seed,
                map_center=(w.map_width / 2.0, w.map_height / 2.0),
            )
            return encoding.encode_state(w, w.belief, clusters, self._pareto, self.enc)
        return encoding.encode_state_raw(w, w.belief, self.enc)

    def act(self, raw) -> None:
        raw = np.asarray(raw, dtype=float).ravel()
        if raw.shape != (ACT_DIM,):
            raise EpisodeError(
                f"policy produced {raw.shape[0] if raw.ndim else 0} outputs, "
                f"expected {ACT_DIM}"
            )
        w = self.world
        idle = w.idle_counts()
        if self.output_encoded:
            action = encoding.decode_action(raw, idle)
            dest_nodes = [self._pareto.slots[cmd.node_index] for cmd in action.squads]
        else:
            action = encoding.decode_action_raw(raw, idle, n_nodes=len(w.graph.nodes))
            dest_nodes = [cmd.node_index for cmd in action.squads]
        apply_tactics(w, self.rtc, action, dest_nodes)
        self._log(raw)
        self._next_decide = w.t + self.rtc.decide_period
        w.belief_changed = False

    def advance(self) -> bool:
        """Step until the next decision instant; True when the episode ended."""
        w = self.world
        while w.t < w.t_f - 1e-9:
            if not w.active.any():
                w.t = w.t_f  # nothing left that can alter the outcome
                return True
            step(w, self.rtc)
            if w.success:
                return True
            if w.belief_changed or w.t >= self._next_decide - 1e-9:
                return False
        return True

    def _log(self, raw: np.ndarray) -> None:
        w = self.world
        action_txt = ",".join(f"{v:.4f}" for v in raw)
        belief_txt = ",".join(f"{p:.6f}" for p in w.belief.probabilities)
        alive = ",".join(str(c) for c in w.alive_counts)
        self.decisions.append(
            f"t={w.t:.1f} action=[{action_txt}] belief=[{belief_txt}] alive=[{alive}]"
        )

    def result(self) -> EpisodeResult:
        w = self.world
        survivors = tuple(
            int(np.sum(w.active & (w.type_idx == t))) for t in range(3)
        )
        survival = (sum(survivors) / w.n) if w.n else 0.0
        rescue = w.rescue_time if w.success else w.t_f
        psi = tuple(
            (w.buildings[i].psi_in, w.buildings[i].psi_out) for i in w.candidates
        )
        trace = "\n".join(self.decisions)
        return EpisodeResult(
            success=w.success,
            rescue_time=float(rescue),
            t_f=w.t_f,
            survival_rate=float(survival),
            survivors_per_type=survivors,
            psi=psi,
            trace_hash=fnv1a64(trace),
            decisions=tuple(self.decisions),
        )


def run_episode(scenario: ScenarioConfig, policy, rtc: RuntimeConfig | None = None,
                encoding_mode: str = "both", robot_counts=None) -> EpisodeResult:
    """Run one full mission under `policy`; deterministic given the seed."""
    mission = Mission(scenario, rtc, encoding_mode, robot_counts)
    obs = mission.observe()
    raw = np.asarray(policy(obs), dtype=float).ravel()
    if raw.shape != (ACT_DIM,):
        raise EpisodeError(
            f"policy outputs {raw.shape[0] if raw.ndim else 0} values, "
            f"expected {ACT_DIM}; refusing to start"
        )
    while True:
        mission.act(raw)
        if mission.advance():
            break
        obs = mission.observe()
        raw = policy(obs)
    return mission.result()
