"""Mission scenario configuration: JSON schema, validation, scenario pools.

A scenario is one mission instance: a grid map reference, candidate target
buildings, per-type robot counts and spawn area, adversaries, smoke, the
mission time limit, and the episode seed.  Scenario files are plain JSON so
pools can be diffed and hand-edited.
"""

from __future__ import annotations

import functools
import json
import math
from dataclasses import asdict, dataclass, field
from importlib import resources
from pathlib import Path

from . import topo_map

ROBOT_TYPES = ("ugv", "uav_a", "uav_b")

BUNDLED_MAP = "urban_300x150.grid"


class ScenarioError(ValueError):
    """Scenario file violates the schema or references bad geometry."""


@dataclass(frozen=True)
class BuildingSpec:
    id: int
    rect: tuple[float, float, float, float]  # x, y, width, height (m)
    entrance: tuple[float, float]
    candidate: bool = True

    @property
    def area(self) -> float:
        return self.rect[2] * self.rect[3]

    @property
    def center(self) -> tuple[float, float]:
        x, y, w, h = self.rect
        return (x + w / 2.0, y + h / 2.0)


@dataclass(frozen=True)
class StaticAdversarySpec:
    x: float
    y: float
    kill_radius: float


@dataclass(frozen=True)
class DynamicAdversarySpec:
    waypoints: tuple[tuple[float, float], ...]
    size: int
    speed: float


@dataclass(frozen=True)
class SmokeSpec:
    x: float
    y: float
    radius: float


@dataclass(frozen=True)
class ScenarioConfig:
    map_file: str
    buildings: tuple[BuildingSpec, ...]
    true_target: int
    robot_counts: tuple[int, int, int]          # ugv, uav_a, uav_b
    spawn_rect: tuple[float, float, float, float]
    static_adversaries: tuple[StaticAdversarySpec, ...] = ()
    dynamic_adversaries: tuple[DynamicAdversarySpec, ...] = ()
    smokes: tuple[SmokeSpec, ...] = ()
    t_f_minutes: float = 40.0
    seed: int = 0
    base_dir: str = "."

    @property
    def t_f(self) -> float:
        return self.t_f_minutes * 60.0

    @property
    def candidates(self) -> tuple[BuildingSpec, ...]:
        return tuple(b for b in self.buildings if b.candidate)

    def resolved_map_path(self) -> Path:
        p = Path(self.map_file)
        if p.is_absolute() and p.exists():
            return p
        local = Path(self.base_dir) / p
        if local.exists():
            return local
        bundled = bundled_data_dir() / p.name
        if bundled.exists():
            return bundled
        raise ScenarioError(f"map: file {self.map_file!r} not found")


def bundled_data_dir() -> Path:
    return Path(resources.files("swarmtactics") / "data")


def bundled_map_path() -> Path:
    return bundled_data_dir() / BUNDLED_MAP


@functools.lru_cache(maxsize=16)
def load_map(path_str: str):
    """Load a grid and build its base road graph once per map file."""
    grid = topo_map.load_grid(path_str)
    graph = topo_map.build_graph(topo_map.skeletonize(grid), grid.resolution)
    return grid, graph


def _need(obj: dict, key: str, kind, where: str):
    if key not in obj:
        raise ScenarioError(f"{where}: missing field {key!r}")
    value = obj[key]
    if kind is float:
        if not isinstance(value, (int, float)) or isinstance(value, bool):
            raise ScenarioError(f"{where}.{key}: expected a number, got {value!r}")
        return float(value)
    if kind is int:
        if not isinstance(value, int) or isinstance(value, bool):
            raise ScenarioError(f"{where}.{key}: expected an integer, got {value!r}")
        return value
    if not isinstance(value, kind):
        raise ScenarioError(f"{where}.{key}: expected {kind.__name__}, got {value!r}")
    return value


def _pair(value, where: str) -> tuple[float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 2:
        raise ScenarioError(f"{where}: expected [x, y]")
    return (float(value[0]), float(value[1]))


def _rect(value, where: str) -> tuple[float, float, float, float]:
    if not isinstance(value, (list, tuple)) or len(value) != 4:
        raise ScenarioError(f"{where}: expected [x, y, w, h]")
    x, y, w, h = (float(v) for v in value)
    if w <= 0 or h <= 0:
        raise ScenarioError(f"{where}: width/height must be positive")
    return (x, y, w, h)


def scenario_from_dict(doc: dict, base_dir: str = ".") -> ScenarioConfig:
    map_file = _need(doc, "map", str, "scenario")
    robots = _need(doc, "robots", dict, "scenario")
    counts = tuple(_need(robots, name, int, "robots") for name in ROBOT_TYPES)
    spawn = _rect(_need(robots, "spawn", list, "robots"), "robots.spawn")

    buildings = []
    for i, b in enumerate(_need(doc, "buildings", list, "scenario")):
        where = f"buildings[{i}]"
        buildings.append(
            BuildingSpec(
                id=_need(b, "id", int, where),
                rect=_rect(_need(b, "rect", list, where), f"{where}.rect"),
                entrance=_pair(_need(b, "entrance", list, where), f"{where}.entrance"),
                candidate=bool(b.get("candidate", True)),
            )
        )
    ids = [b.id for b in buildings]
    if len(set(ids)) != len(ids):
        raise ScenarioError("buildings: duplicate building ids")

    statics = tuple(
        StaticAdversarySpec(
            _need(a, "x", float, f"static_adversaries[{i}]"),
            _need(a, "y", float, f"static_adversaries[{i}]"),
            _need(a, "kill_radius", float, f"static_adversaries[{i}]"),
        )
        for i, a in enumerate(doc.get("static_adversaries", []))
    )
    dynamics = tuple(
        DynamicAdversarySpec(
            waypoints=tuple(
                _pair(w, f"dynamic_adversaries[{i}].waypoints[{j}]")
                for j, w in enumerate(_need(a, "waypoints", list, f"dynamic_adversaries[{i}]"))
            ),
            size=_need(a, "size", int, f"dynamic_adversaries[{i}]"),
            speed=_need(a, "speed", float, f"dynamic_adversaries[{i}]"),
        )
        for i, a in enumerate(doc.get("dynamic_adversaries", []))
    )
    smokes = tuple(
        SmokeSpec(
            _need(s, "x", float, f"smokes[{i}]"),
            _need(s, "y", float, f"smokes[{i}]"),
            _need(s, "radius", float, f"smokes[{i}]"),
        )
        for i, s in enumerate(doc.get("smokes", []))
    )

    cfg = ScenarioConfig(
        map_file=map_file,
        buildings=tuple(buildings),
        true_target=_need(doc, "true_target", int, "scenario"),
        robot_counts=counts,
        spawn_rect=spawn,
        static_adversaries=statics,
        dynamic_adversaries=dynamics,
        smokes=smokes,
        t_f_minutes=_need(doc, "t_f_minutes", float, "scenario"),
        seed=_need(doc, "seed", int, "scenario"),
        base_dir=base_dir,
    )
    validate_scenario(cfg)
    return cfg


def validate_scenario(cfg: ScenarioConfig) -> None:
    candidate_ids = {b.id for b in cfg.candidates}
    if not candidate_ids:
        raise ScenarioError("buildings: at least one candidate building required")
    if len(candidate_ids) > 3:
        raise ScenarioError("buildings: at most 3 candidate buildings supported")
    if cfg.true_target not in candidate_ids:
        raise ScenarioError(
            f"true_target: building {cfg.true_target} is not a candidate"
        )
    if any(c < 0 for c in cfg.robot_counts):
        raise ScenarioError("robots: counts must be >= 0")
    if cfg.t_f_minutes <= 0:
        raise ScenarioError("t_f_minutes: must be positive")

    grid, _ = load_map(str(cfg.resolved_map_path()))
    w_m, h_m = grid.size_meters()

    def inside(x, y, where):
        if not (0.0 <= x <= w_m and 0.0 <= y <= h_m):
            raise ScenarioError(f"{where}: ({x}, {y}) outside map bounds "
                                f"({w_m} x {h_m} m)")

    for b in cfg.buildings:
        x, y, w, h = b.rect
        inside(x, y, f"buildings[{b.id}].rect")
        inside(x + w, y + h, f"buildings[{b.id}].rect")
        inside(*b.entrance, f"buildings[{b.id}].entrance")
    sx, sy, sw, sh = cfg.spawn_rect
    inside(sx, sy, "robots.spawn")
    inside(sx + sw, sy + sh, "robots.spawn")
    for i, a in enumerate(cfg.static_adversaries):
        inside(a.x, a.y, f"static_adversaries[{i}]")
    for i, a in enumerate(cfg.dynamic_adversaries):
        if not a.waypoints:
            raise ScenarioError(f"dynamic_adversaries[{i}]: needs >= 1 waypoint")
        if a.size < 1:
            raise ScenarioError(f"dynamic_adversaries[{i}]: size must be >= 1")
        if a.speed <= 0:
            raise ScenarioError(f"dynamic_adversaries[{i}]: speed must be positive")
        for j, (x, y) in enumerate(a.waypoints):
            inside(x, y, f"dynamic_adversaries[{i}].waypoints[{j}]")
    for i, s in enumerate(cfg.smokes):
        inside(s.x, s.y, f"smokes[{i}]")
        if s.radius <= 0:
            raise ScenarioError(f"smokes[{i}].radius: must be positive")


def scenario_to_dict(cfg: ScenarioConfig) -> dict:
    return {
        "map": cfg.map_file,
        "t_f_minutes": cfg.t_f_minutes,
        "seed": cfg.seed,
        "robots": {
            "ugv": cfg.robot_counts[0],
            "uav_a": cfg.robot_counts[1],
            "uav_b": cfg.robot_counts[2],
            "spawn": list(cfg.spawn_rect),
        },
        "buildings": [
            {
                "id": b.id,
                "rect": list(b.rect),
                "entrance": list(b.entrance),
                "candidate": b.candidate,
            }
            for b in cfg.buildings
        ],
        "true_target": cfg.true_target,
        "static_adversaries": [asdict(a) for a in cfg.static_adversaries],
        "dynamic_adversaries": [
            {"waypoints": [list(w) for w in a.waypoints], "size": a.size,
             "speed": a.speed}
            for a in cfg.dynamic_adversaries
        ],
        "smokes": [asdict(s) for s in cfg.smokes],
    }


def load_scenario(path) -> ScenarioConfig:
    path = Path(path)
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as err:
        raise ScenarioError(f"{path}: line {err.lineno}: {err.msg}") from err
    if not isinstance(doc, dict):
        raise ScenarioError(f"{path}: top level must be a JSON object")
    return scenario_from_dict(doc, base_dir=str(path.parent))


def save_scenario(cfg: ScenarioConfig, path) -> None:
    Path(path).write_text(
        json.dumps(scenario_to_dict(cfg), indent=2) + "\n", encoding="utf-8"
    )


def load_scenario_dir(path) -> list[ScenarioConfig]:
    files = sorted(Path(path).glob("*.json"))
    if not files:
        raise ScenarioError(f"{path}: no scenario files found")
    return [load_scenario(f) for f in files]


# ---------------------------------------------------------------------------
# Bundled map site table and scenario pool generators.
#
# The bundled 300 m x 150 m map carries six building sites; a scenario picks
# three of them as candidates.  Site rects/entrances match the B blocks in
# the grid file.

BUILDING_SITES = (
    BuildingSpec(0, (16.0, 14.0, 38.0, 22.0), (35.0, 37.0)),
    BuildingSpec(1, (162.0, 14.0, 28.0, 22.0), (175.0, 37.0)),
    BuildingSpec(2, (244.0, 54.0, 40.0, 26.0), (243.0, 67.0)),
    BuildingSpec(3, (22.0, 106.0, 38.0, 26.0), (41.0, 105.0)),
    BuildingSpec(4, (168.0, 106.0, 40.0, 26.0), (187.0, 105.0)),
    BuildingSpec(5, (120.0, 56.0, 34.0, 26.0), (137.0, 55.0)),
)

SPAWN_RECTS = (
    (6.0, 4.0, 40.0, 6.0),
    (240.0, 4.0, 50.0, 6.0),
    (6.0, 140.0, 40.0, 6.0),
    (230.0, 140.0, 60.0, 6.0),
)

PATROL_ROUTES = (
    ((67.0, 10.0), (67.0, 90.0)),
    ((159.0, 10.0), (159.0, 140.0)),
    ((10.0, 47.0), (280.0, 47.0)),
    ((229.0, 10.0), (229.0, 140.0)),
    ((10.0, 95.0), (140.0, 95.0)),
    ((150.0, 95.0), (290.0, 95.0)),
)


def _pick_mission_layout(rng):
    site_ids = sorted(rng.choice(len(BUILDING_SITES), size=3, replace=False).tolist())
    buildings = tuple(BUILDING_SITES[i] for i in site_ids)
    true_target = int(buildings[rng.integers(3)].id)
    spawn = SPAWN_RECTS[rng.integers(len(SPAWN_RECTS))]
    return buildings, true_target, spawn


def make_scenario(rng, *, ugv_range=(6, 24), uav_range=(12, 36),
                  n_static=(0, 6), n_dynamic=(0, 14), smoke_radius=(0.0, 10.0),
                  t_f_minutes=40.0) -> ScenarioConfig:
    """Draw one scenario from the published parameter ranges."""
    buildings, true_target, spawn = _pick_mission_layout(rng)
    n_ugv = int(rng.integers(ugv_range[0], ugv_range[1] + 1))
    n_uav = int(rng.integers(uav_range[0], uav_range[1] + 1))
    n_uav_a = n_uav // 2
    n_uav_b = n_uav - n_uav_a

    statics = []
    for _ in range(int(rng.integers(n_static[0], n_static[1] + 1))):
        x = float(rng.uniform(20.0, 280.0))
        y = float(rng.uniform(20.0, 130.0))
        statics.append(StaticAdversarySpec(x, y, float(rng.uniform(4.0, 8.0))))

    dynamics = []
    for _ in range(int(rng.integers(n_dynamic[0], n_dynamic[1] + 1))):
        route = PATROL_ROUTES[rng.integers(len(PATROL_ROUTES))]
        dynamics.append(
            DynamicAdversarySpec(
                waypoints=route,
                size=int(rng.integers(2, 7)),
                speed=float(rng.uniform(0.8, 2.0)),
            )
        )

    smokes = []
    max_r = float(rng.uniform(*smoke_radius))
    if max_r >= 1.0:
        for _ in range(int(rng.integers(0, 4))):
            smokes.append(
                SmokeSpec(
                    float(rng.uniform(20.0, 280.0)),
                    float(rng.uniform(20.0, 130.0)),
                    max(1.0, float(rng.uniform(1.0, max_r))),
                )
            )

    return ScenarioConfig(
        map_file=BUNDLED_MAP,
        buildings=buildings,
        true_target=true_target,
        robot_counts=(n_ugv, n_uav_a, n_uav_b),
        spawn_rect=spawn,
        static_adversaries=tuple(statics),
        dynamic_adversaries=tuple(dynamics),
        smokes=tuple(smokes),
        t_f_minutes=t_f_minutes,
        seed=int(rng.integers(0, 2**31 - 1)),
    )


def generate_pool(out_dir, n_scenarios: int, seed: int, prefix: str = "scenario",
                  **ranges) -> list[Path]:
    """Write a scenario pool; file order defines scenario order for eval."""
    import numpy as np

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    paths = []
    for i in range(n_scenarios):
        cfg = make_scenario(rng, **ranges)
        validate_scenario(cfg)
        p = out / f"{prefix}_{i:03d}.json"
        save_scenario(cfg, p)
        paths.append(p)
    return paths


def training_ranges() -> dict:
    """Adversary-light ranges used for convergence-style training runs."""
    return {"ugv_range": (6, 10), "uav_range": (12, 16),
            "n_static": (2, 2), "n_dynamic": (0, 0),
            "smoke_radius": (0.0, 10.0)}


def contested_ranges() -> dict:
    """Full ranges with static and dynamic adversaries and smoke."""
    return {"ugv_range": (6, 24), "uav_range": (12, 36),
            "n_static": (0, 6), "n_dynamic": (0, 14),
            "smoke_radius": (0.0, 10.0)}
