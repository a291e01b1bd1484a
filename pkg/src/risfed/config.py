"""Experiment configuration: YAML file <-> :class:`SimConfig`.

The file has one mapping per section (``map``, ``fleet``, ``channel``,
``ris``, ``power``, ``energy``, ``reward``, ``training``, ``federation``,
``run``). Every key is optional; unknown keys are rejected with the dotted
field path and source line.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .channel import ChannelModelConfig, RisConfig
from .dqn import TrainConfig
from .env import GridMap
from .errors import ConfigError, DomainError
from .federated import FederationConfig
from .mdp import FeatureNorm, RewardConfig
from .noma import EnergyModel, PowerConfig, dbm_to_w

ALGORITHMS = ("fdrl", "central", "oma-fdrl", "qoe-fdrl")
CLI_ALGOS = {"fdrl": "fdrl", "central": "central", "oma": "oma-fdrl", "qoe": "qoe-fdrl"}


@dataclass
class MapSection:
    x_min: float = 0.0
    x_max: float = 30.0
    y_min: float = 0.0
    y_max: float = 30.0
    cell_size: float = 0.5
    walls: list = field(default_factory=lambda: [[10.0, 12.0, 10.0, 30.0], [20.0, 0.0, 20.0, 18.0]])
    ap_position: list = field(default_factory=lambda: [15.0, 30.0, 2.0])
    ris_position: list = field(default_factory=lambda: [30.0, 7.5, 2.0])


@dataclass
class FleetSection:
    num_robots: int = 3
    starts: list | None = None
    destinations: list | None = None
    speed: float = 0.5
    t_max: int = 200
    # Arrived robots leave the NOMA user set for the rest of the episode.
    remove_arrived: bool = True


@dataclass
class RisSection:
    elements_per_side: int = 30
    num_subsurfaces: int = 1
    resolution_bits: int = 2


@dataclass
class PowerSection:
    p_max_dbm: float = 20.0
    num_levels: int = 6
    rho_min_w: float | None = None


@dataclass
class EnergySection:
    e1: float = 7.4
    e2: float = 0.29


@dataclass
class RewardSection:
    tau1: float = 0.1
    phi: float = 0.05
    psi: float = 2.0
    r_time: float = -1.0
    r_goal: float = 100.0
    qoe_c1: float = 10.0
    qoe_c2: float = 0.0
    qoe_floor: float = -10.0
    feature_floor_db: float = -120.0
    feature_ceil_db: float = -40.0


_TRAIN_KEYS = {f.name for f in dataclasses.fields(TrainConfig)}


@dataclass
class TrainingSection:
    common: dict = field(default_factory=dict)
    global_agent: dict = field(default_factory=dict)
    local_agent: dict = field(default_factory=dict)
    central_agent: dict = field(default_factory=dict)


@dataclass
class FederationSection:
    sync_period: int = 25


@dataclass
class RunSection:
    episodes: int = 300
    seed: int = 0
    algorithm: str = "fdrl"
    out_dir: str = "runs/default"
    eval_episodes: int = 20
    action_space_cap: int = 1_000_000


SECTIONS = {
    "map": MapSection,
    "fleet": FleetSection,
    "channel": ChannelModelConfig,
    "ris": RisSection,
    "power": PowerSection,
    "energy": EnergySection,
    "reward": RewardSection,
    "training": TrainingSection,
    "federation": FederationSection,
    "run": RunSection,
}


@dataclass
class SimConfig:
    map: MapSection = field(default_factory=MapSection)
    fleet: FleetSection = field(default_factory=FleetSection)
    channel: ChannelModelConfig = field(default_factory=ChannelModelConfig)
    ris: RisSection = field(default_factory=RisSection)
    power: PowerSection = field(default_factory=PowerSection)
    energy: EnergySection = field(default_factory=EnergySection)
    reward: RewardSection = field(default_factory=RewardSection)
    training: TrainingSection = field(default_factory=TrainingSection)
    federation: FederationSection = field(default_factory=FederationSection)
    run: RunSection = field(default_factory=RunSection)

    # -- derived component configurations ---------------------------------

    def grid(self) -> GridMap:
        m = self.map
        return GridMap(
            m.x_min,
            m.x_max,
            m.y_min,
            m.y_max,
            m.cell_size,
            tuple(tuple(w) for w in m.walls),
            tuple(m.ap_position),
            tuple(m.ris_position),
        )

    def ris_config(self) -> RisConfig:
        r = self.ris
        return RisConfig(r.elements_per_side, r.num_subsurfaces, r.resolution_bits)

    @property
    def rho_min(self) -> float:
        """SIC gap threshold in Watts; defaults to the noise power."""
        if self.power.rho_min_w is None:
            return self.channel.noise_power_w
        return self.power.rho_min_w

    def power_config(self) -> PowerConfig:
        return PowerConfig(dbm_to_w(self.power.p_max_dbm), self.power.num_levels, self.rho_min)

    def energy_model(self) -> EnergyModel:
        return EnergyModel(self.energy.e1, self.energy.e2, self.fleet.speed)

    def reward_config(self) -> RewardConfig:
        r = self.reward
        return RewardConfig(r.tau1, r.phi, r.psi, r.r_time, r.r_goal, r.qoe_c1, r.qoe_c2, r.qoe_floor)

    def feature_norm(self) -> FeatureNorm:
        return FeatureNorm(self.reward.feature_floor_db, self.reward.feature_ceil_db)

    def train_config(self, agent: str) -> TrainConfig:
        """Training hyperparameters for ``agent`` in {"global", "local", "central"}."""
        t = self.training
        overrides = {"global": t.global_agent, "local": t.local_agent, "central": t.central_agent}[agent]
        return TrainConfig(**{**t.common, **overrides})

    def federation_config(self) -> FederationConfig:
        return FederationConfig(self.federation.sync_period, self.fleet.num_robots)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        t = d.pop("training")
        d["training"] = {**t["common"], "global": t["global_agent"], "local": t["local_agent"], "central": t["central_agent"]}
        for k in ("global", "local", "central"):
            if not d["training"][k]:
                del d["training"][k]
        return d

    def dump(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)

    def copy(self, **section_updates) -> "SimConfig":
        """Deep copy with ``section={"key": value}`` updates applied."""
        raw = self.to_dict()
        for section, updates in section_updates.items():
            raw.setdefault(section, {}).update(updates)
        return from_dict(raw)


# -- parsing ---------------------------------------------------------------


def _plain(node, path, lines):
    """Convert a composed YAML node to Python objects, recording source lines."""
    lines[path] = node.start_mark.line + 1
    if isinstance(node, yaml.MappingNode):
        out = {}
        for key_node, value_node in node.value:
            key = key_node.value
            if key in out:
                raise ConfigError("duplicate key", _join(path, key), key_node.start_mark.line + 1)
            out[key] = _plain(value_node, _join(path, key), lines)
        return out
    if isinstance(node, yaml.SequenceNode):
        return [_plain(v, f"{path}[{i}]", lines) for i, v in enumerate(node.value)]
    return yaml.SafeLoader.construct_object(_SCALAR_LOADER, node)


class _ScalarLoader(yaml.SafeLoader):
    def __init__(self):
        super().__init__("")


_SCALAR_LOADER = _ScalarLoader()


def _join(path, key):
    return f"{path}.{key}" if path else str(key)


def _coerce(value, default, path, lines):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigError("expected a boolean", path, lines.get(path))
        return value
    if isinstance(default, int) and not isinstance(default, bool):
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError("expected an integer", path, lines.get(path))
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError("expected a number", path, lines.get(path))
        return float(value)
    if isinstance(default, str):
        if not isinstance(value, str):
            raise ConfigError("expected a string", path, lines.get(path))
        return value
    if isinstance(default, (list, tuple)):
        if not isinstance(value, list):
            raise ConfigError("expected a list", path, lines.get(path))
        return value
    return value


def _build_section(cls, raw, path, lines):
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", path, lines.get(path))
    fields = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in raw.items():
        if key not in fields:
            raise ConfigError(f"unknown key {key!r}", _join(path, key), lines.get(_join(path, key)))
        f = fields[key]
        if f.default is not dataclasses.MISSING:
            default = f.default
        elif f.default_factory is not dataclasses.MISSING:
            default = f.default_factory()
        else:
            default = None
        kwargs[key] = _coerce(value, default, _join(path, key), lines)
    try:
        return cls(**kwargs)
    except (DomainError, TypeError, ValueError) as exc:
        raise ConfigError(str(exc), path, lines.get(path)) from None


def _build_training(raw, lines):
    path = "training"
    if raw is None:
        return TrainingSection()
    if not isinstance(raw, dict):
        raise ConfigError("expected a mapping", path, lines.get(path))
    section = TrainingSection()
    sub = {"global": "global_agent", "local": "local_agent", "central": "central_agent"}
    for key, value in raw.items():
        p = _join(path, key)
        if key in sub:
            if not isinstance(value, dict):
                raise ConfigError("expected a mapping", p, lines.get(p))
            for k2 in value:
                if k2 not in _TRAIN_KEYS:
                    raise ConfigError(f"unknown key {k2!r}", _join(p, k2), lines.get(_join(p, k2)))
            getattr(section, sub[key]).update(value)
        elif key in _TRAIN_KEYS:
            section.common[key] = value
        else:
            raise ConfigError(f"unknown key {key!r}", p, lines.get(p))
    for agent in ("global", "local", "central"):
        overrides = getattr(section, sub[agent])
        try:
            TrainConfig(**{**section.common, **overrides})
        except (DomainError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc), path if not overrides else _join(path, agent), lines.get(path)) from None
    return section


def from_dict(raw: dict, lines: dict | None = None) -> SimConfig:
    lines = lines or {}
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a mapping", None, 1)
    for key in raw:
        if key not in SECTIONS:
            raise ConfigError(f"unknown section {key!r}", key, lines.get(key))
    parts = {}
    for name, cls in SECTIONS.items():
        if name == "training":
            parts[name] = _build_training(raw.get(name), lines)
        else:
            parts[name] = _build_section(cls, raw.get(name), name, lines)
    cfg = SimConfig(**parts)
    validate(cfg, lines)
    return cfg


def validate(cfg: SimConfig, lines: dict | None = None) -> None:
    """Cross-section invariants; raises :class:`ConfigError`."""
    lines = lines or {}

    def fail(msg, path):
        raise ConfigError(msg, path, lines.get(path))

    try:
        grid = cfg.grid()
    except DomainError as exc:
        fail(str(exc), "map")
    try:
        cfg.ris_config()
    except DomainError as exc:
        fail(str(exc), "ris")
    for name, build in (("power", cfg.power_config), ("energy", cfg.energy_model), ("reward", cfg.reward_config)):
        try:
            build()
        except DomainError as exc:
            fail(str(exc), name)
    try:
        cfg.feature_norm()
    except DomainError as exc:
        fail(str(exc), "reward")
    k = cfg.fleet.num_robots
    if k < 1:
        fail("num_robots must be >= 1", "fleet.num_robots")
    if cfg.power.num_levels < k:
        fail(f"num_levels ({cfg.power.num_levels}) must be >= num_robots ({k})", "power.num_levels")
    if cfg.fleet.t_max < 1:
        fail("t_max must be >= 1", "fleet.t_max")
    if cfg.fleet.speed <= 0:
        fail("speed must be positive", "fleet.speed")
    for key in ("starts", "destinations"):
        pts = getattr(cfg.fleet, key)
        if pts is None:
            continue
        if len(pts) != k:
            fail(f"need exactly {k} entries", f"fleet.{key}")
        for i, p in enumerate(pts):
            if not (isinstance(p, (list, tuple)) and len(p) == 2):
                fail("expected an [x, y] pair", f"fleet.{key}[{i}]")
            if not grid.contains(p):
                fail("point outside the map", f"fleet.{key}[{i}]")
            c = grid.cell_center(*grid.cell_index(p))
            if not np.allclose(c, p, atol=1e-9):
                fail(f"point is not a cell centre (nearest {c})", f"fleet.{key}[{i}]")
    if (cfg.fleet.starts is None) != (cfg.fleet.destinations is None):
        fail("give both starts and destinations, or neither", "fleet")
    if cfg.federation.sync_period < 1:
        fail("sync_period must be >= 1", "federation.sync_period")
    if cfg.run.algorithm not in ALGORITHMS:
        fail(f"algorithm must be one of {ALGORITHMS}", "run.algorithm")
    if cfg.run.episodes < 1:
        fail("episodes must be >= 1", "run.episodes")
    if cfg.run.eval_episodes < 0:
        fail("eval_episodes must be >= 0", "run.eval_episodes")
    if cfg.run.seed < 0 or cfg.run.seed >= 2**64:
        fail("seed must be an unsigned 64-bit integer", "run.seed")


def load_config(path) -> SimConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return loads_config(text)


def loads_config(text: str) -> SimConfig:
    try:
        node = yaml.compose(text, Loader=yaml.SafeLoader)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        raise ConfigError(f"YAML parse error: {getattr(exc, 'problem', exc)}", None,
                          mark.line + 1 if mark else None) from None
    if node is None:
        return from_dict({})
    lines: dict[str, int] = {}
    raw = _plain(node, "", lines)
    return from_dict(raw, lines)


def config_digest(cfg: SimConfig) -> str:
    return json.dumps(cfg.to_dict(), sort_keys=True)


def resolved_summary(cfg: SimConfig) -> dict[str, Any]:
    """Defaulted quantities echoed into run summaries."""
    return {
        "noise_power_w": cfg.channel.noise_power_w,
        "rho_min_w": cfg.rho_min,
        "rho_min_defaulted": cfg.power.rho_min_w is None,
        "p_max_w": dbm_to_w(cfg.power.p_max_dbm),
    }
