"""Run configuration: typed experiment presets loaded from YAML files.

Every physical constant and tuning value lives in a preset file under
``descentlab/configs/``; code never hard-codes them.  A preset may name a
parent with ``extends:`` and override a subset of keys (one level of
inheritance, merged recursively by key).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .dynamics import EngineConfig


@dataclass
class RewardConfig:
    """Shaping and terminal-reward parameters.

    alpha weights velocity-tracking error, beta the normalized thrust
    magnitude, gamma_const is the per-step constant, eta the landing bonus.
    gs_lim is in degrees; None disables the glideslope requirement.
    The velocity field targets hold_altitude above the site with vertical
    offset vz_above until r_z <= hold_altitude, then vz_below (piecewise
    fields only).  v_o = None means "episode initial speed".
    """

    alpha: float = -0.01
    beta: float = -0.05
    gamma_const: float = 0.01
    eta: float = 10.0
    tau1: float = 20.0
    tau2: float = 100.0
    v_o: float | None = None
    r_lim: float = 5.0
    v_lim: float = 2.0
    gs_lim: float | None = 79.0
    piecewise: bool = True
    hold_altitude: float = 15.0
    vz_above: float = -2.0
    vz_below: float = -1.0
    t_go_cap: float = 1.0e6
    eps_v: float = 1.0e-8
    eps_r: float = 1.0e-8

    def __post_init__(self):
        if self.tau1 <= 0 or (self.piecewise and self.tau2 <= 0):
            raise ValueError("tau1, tau2 must be positive")
        if self.r_lim <= 0 or self.v_lim <= 0:
            raise ValueError("r_lim, v_lim must be positive")


@dataclass
class FailureConfig:
    """Engine-failure randomization (Mars thruster-degradation runs)."""

    p_fail: float = 0.0
    horizontal_factor: float = 2.0
    vertical_factor: float = 1.5


@dataclass
class ObservationConfig:
    """Which observation generator the environment uses.

    kind: truth | bias | radar | lidar.  bias_magnitude bounds the uniform
    per-episode proportional state bias.  Radar options select beam pointing
    and whether closing velocities accompany the ranges.
    """

    kind: str = "truth"
    bias_magnitude: float = 0.1
    radar_mode: str = "velocity_averaged_down"
    radar_layout: str = "ranges_doppler"
    dtm_seed: int = 19
    mesh_seed: int = 7

    def __post_init__(self):
        if self.kind not in ("truth", "bias", "radar", "lidar"):
            raise ValueError(f"unknown observation kind {self.kind!r}")
        if self.radar_mode not in ("velocity_averaged_down", "target_pointing"):
            raise ValueError(f"unknown radar mode {self.radar_mode!r}")
        if self.radar_layout not in ("ranges", "ranges_doppler"):
            raise ValueError(f"unknown radar layout {self.radar_layout!r}")


@dataclass
class MarsEnvConfig:
    """Mars powered-descent environment parameters.

    Initial-condition bounds are (low, high) pairs per component in the
    target-centered frame.
    """

    downrange: tuple = (0.0, 2000.0)
    crossrange: tuple = (-1000.0, 1000.0)
    elevation: tuple = (2300.0, 2400.0)
    v_downrange: tuple = (-70.0, -10.0)
    v_crossrange: tuple = (-30.0, 30.0)
    v_elevation: tuple = (-90.0, -70.0)
    initial_mass: tuple = (1800.0, 2200.0)
    gravity: tuple = (0.0, 0.0, -3.7114)
    disturbance_max: float = 0.2
    isp: float = 225.0
    g_ref: float = 9.8
    thrust_min: float = 2000.0
    thrust_max: float = 15000.0
    dry_mass: float = 200.0
    dt: float = 0.05
    nav_period: float = 0.2
    t_max: float = 400.0
    xy_abs_max: float = 5000.0
    z_max: float = 3000.0

    def engine(self, per_axis_caps=None) -> EngineConfig:
        caps = np.ones(3) if per_axis_caps is None else per_axis_caps
        return EngineConfig(
            isp=self.isp,
            g_ref=self.g_ref,
            thrust_min=self.thrust_min,
            thrust_max=self.thrust_max,
            per_axis_caps=caps,
        )

    @property
    def substeps(self) -> int:
        return max(1, round(self.nav_period / self.dt))


@dataclass
class AsteroidEnvConfig:
    """Asteroid landing environment parameters.

    Spawn geometry is spherical about the target: distance, polar angle
    from the outward surface normal, azimuth.  omega_max / srp_max bound the
    uniform per-episode body-parameter draws; body_mass is the (low, high)
    asteroid-mass range in kg.
    """

    distance: tuple = (900.0, 1100.0)
    polar_deg: tuple = (0.0, 45.0)
    azimuth_deg: tuple = (-180.0, 180.0)
    heading_error_deg: tuple = (-45.0, 45.0)
    speed: tuple = (0.05, 0.10)
    initial_mass: tuple = (450.0, 500.0)
    omega_max: float = 1.0e-3
    srp_max: float = 1.0e-6
    body_mass: tuple = (2.0e10, 2.0e11)
    grav_constant: float = 6.674e-11
    target_radius: float = 250.0
    isp: float = 225.0
    g_ref: float = 9.8
    axis_thrust: float = 2.0
    dry_mass: float = 300.0
    dt: float = 2.0
    nav_period: float = 6.0
    t_max: float = 4000.0
    max_distance: float = 5000.0

    def engine(self) -> EngineConfig:
        # thrust_min 0: pulsed per-axis thrusters have no norm floor
        return EngineConfig(
            isp=self.isp,
            g_ref=self.g_ref,
            thrust_min=0.0,
            thrust_max=self.axis_thrust,
        )

    @property
    def substeps(self) -> int:
        return max(1, round(self.nav_period / self.dt))


@dataclass
class DrDvConfig:
    """Classical-guidance parameters: nominal gravity for the time-to-go
    solve, the time-penalty weight on the energy cost, and the t_go floor."""

    g_nominal: tuple = (0.0, 0.0, -3.7114)
    gamma_weight: float = 0.0
    t_go_min: float = 0.5

    def __post_init__(self):
        if self.gamma_weight < 0:
            raise ValueError("gamma_weight must be >= 0")
        if self.t_go_min <= 0:
            raise ValueError("t_go_min must be positive")


@dataclass
class TrainConfig:
    """PPO hyperparameters."""

    discount: float = 0.995
    kl_target: float = 0.001
    clip_init: float = 0.1
    episodes_per_batch: int = 30
    epochs_per_update: int = 20
    unroll: int = 20
    recurrent: bool = True
    lr_policy: float = 3.0e-4
    lr_value: float = 1.0e-3
    iterations: int = 100
    log_std_init: float = -0.7

    def __post_init__(self):
        if not (0.0 < self.discount <= 1.0):
            raise ValueError("discount must be in (0, 1]")
        if not (0.0 < self.clip_init < 1.0):
            raise ValueError("clip_init must be in (0, 1)")
        if self.unroll < 1:
            raise ValueError("unroll must be >= 1")


@dataclass
class ExperimentSpec:
    """One fully resolved experiment configuration."""

    name: str
    body: str  # mars | asteroid
    env: MarsEnvConfig | AsteroidEnvConfig
    reward: RewardConfig
    observation: ObservationConfig
    failure: FailureConfig
    drdv: DrDvConfig
    train: TrainConfig
    eval_episodes: int = 1000

    def __post_init__(self):
        if self.body not in ("mars", "asteroid"):
            raise ValueError(f"unknown body {self.body!r}")


def _merge(base, override):
    """Recursive dict merge; override wins, sub-dicts merge by key."""
    out = dict(base)
    for k, v in override.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


def _coerce(cls, data: dict):
    """Build a dataclass, converting lists to tuples for tuple fields."""
    names = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in names:
            raise ValueError(f"unknown key {key!r} for {cls.__name__}")
        if isinstance(value, list):
            value = tuple(value)
        kwargs[key] = value
    return cls(**kwargs)


def spec_from_dict(raw: dict) -> ExperimentSpec:
    body = raw.get("body", "mars")
    env_cls = MarsEnvConfig if body == "mars" else AsteroidEnvConfig
    return ExperimentSpec(
        name=raw.get("name", "unnamed"),
        body=body,
        env=_coerce(env_cls, raw.get("env", {})),
        reward=_coerce(RewardConfig, raw.get("reward", {})),
        observation=_coerce(ObservationConfig, raw.get("observation", {})),
        failure=_coerce(FailureConfig, raw.get("failure", {})),
        drdv=_coerce(DrDvConfig, raw.get("drdv", {})),
        train=_coerce(TrainConfig, raw.get("train", {})),
        eval_episodes=raw.get("eval_episodes", 1000),
    )


def _config_dir():
    return resources.files("descentlab") / "configs"


def preset_names() -> list:
    names = []
    for entry in _config_dir().iterdir():
        if entry.name.endswith(".yaml"):
            names.append(entry.name[: -len(".yaml")])
    return sorted(names)


def _read_preset_dict(name: str) -> dict:
    path = _config_dir() / f"{name}.yaml"
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise KeyError(f"no preset named {name!r}; known: {', '.join(preset_names())}")
    return yaml.safe_load(text) or {}

def _resolve(raw: dict, depth: int = 0) -> dict:
    if "extends" in raw:
        if depth > 4:
            raise ValueError("extends chain too deep")
        parent = _resolve(_read_preset_dict(raw["extends"]), depth + 1)
        child = {k: v for k, v in raw.items() if k != "extends"}
        return _merge(parent, child)
    return raw


def load_preset(name: str) -> ExperimentSpec:
    """Load a packaged preset by name (e.g. 'nominal-mars')."""
    raw = _resolve(_read_preset_dict(name))
    raw.setdefault("name", name)
    return spec_from_dict(raw)


def load_config_file(path) -> ExperimentSpec:
    """Load an experiment config from an arbitrary YAML file path."""
    raw = yaml.safe_load(Path(path).read_text()) or {}
    raw = _resolve(raw)
    raw.setdefault("name", Path(path).stem)
    return spec_from_dict(raw)
