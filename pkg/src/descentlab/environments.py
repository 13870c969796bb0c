"""Episode lifecycle for the landing environments.

Covers initial-condition sampling, per-episode randomization (disturbances,
body parameters, engine failures, state-estimate bias), thrust-command
conditioning, the velocity-field shaping reward

    v_targ = -v_o * (r_hat/||r_hat||) * (1 - exp(-t_go/tau)),   t_go = ||r_hat||/||v_hat||

with the piecewise branch (Mars) switching at a hold altitude, the reward

    r = alpha*||v - v_targ|| + beta*(||T||/thrust_max) + gamma + eta*[success],

observation construction for every experiment variant, and termination.

Episodes run on a fixed navigation period; the commanded thrust is held
constant while the state advances through several integrator substeps.  The
touchdown state is interpolated inside the crossing substep so terminal
metrics do not depend on step phase.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    AsteroidEnvForces,
    EngineConfig,
    LanderState,
    MarsEnvForces,
    asteroid_accel_fn,
    mars_accel_fn,
    rk4_step,
)

FAILURE_NONE = "none"
FAILURE_DOWNRANGE = "downrange_capped"
FAILURE_CROSSRANGE = "crossrange_capped"


@dataclass
class EpisodeParams:
    """Everything randomized once per episode."""

    forces: object  # MarsEnvForces | AsteroidEnvForces
    engine: EngineConfig
    failure_mode: str = FAILURE_NONE
    bias_pos: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_mass: float = 2000.0
    v_o: float = 0.5


@dataclass
class StepResult:
    observation: np.ndarray
    reward: float
    done: bool
    info: dict


def glideslope(v) -> float:
    """Angle of the velocity vector from the horizontal plane, degrees.

    Zero velocity is defined as 90 (straight down is the limiting case of
    interest at touchdown).
    """
    v = np.asarray(v, dtype=float)
    horiz = math.hypot(v[0], v[1])
    if horiz == 0.0 and v[2] == 0.0:
        return 90.0
    return math.degrees(math.atan2(abs(v[2]), horiz))


def _field_branch(r, v, cfg):
    """Select (r_hat, v_hat, tau) for the velocity field."""
    if cfg.piecewise:
        if r[2] > cfg.hold_altitude:
            r_hat = r - np.array([0.0, 0.0, cfg.hold_altitude])
            v_hat = v - np.array([0.0, 0.0, cfg.vz_above])
            return r_hat, v_hat, cfg.tau1
        r_hat = np.array([0.0, 0.0, r[2]])
        v_hat = v - np.array([0.0, 0.0, cfg.vz_below])
        return r_hat, v_hat, cfg.tau2
    return np.asarray(r, dtype=float), np.asarray(v, dtype=float), cfg.tau1


def _field_eval(r_hat, v_hat, tau, v_o, cfg):
    norm_r = float(np.linalg.norm(r_hat))
    norm_v = float(np.linalg.norm(v_hat))
    if norm_v < cfg.eps_v:
        t_go = cfg.t_go_cap
    else:
        t_go = min(norm_r / norm_v, cfg.t_go_cap)
    if norm_r < cfg.eps_r:
        return np.zeros(3), t_go
    v_targ = -v_o * (r_hat / norm_r) * (1.0 - math.exp(-t_go / tau))
    return v_targ, t_go


def target_velocity_mars(r, v, cfg, v_o=None):
    """Piecewise velocity field for powered descent; returns (v_targ, t_go).

    v_o defaults to cfg.v_o; pass the per-episode initial speed when the
    config leaves it unset.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    v_o = cfg.v_o if cfg.v_o is not None else v_o
    if v_o is None:
        raise ValueError("v_o unset: pass the episode initial speed")
    r_hat, v_hat, tau = _field_branch(r, v, cfg)
    return _field_eval(r_hat, v_hat, tau, v_o, cfg)


def target_velocity_asteroid(r, v, cfg):
    """Single-branch velocity field (no piecewise hold)."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    if cfg.v_o is None:
        raise ValueError("asteroid field requires a fixed v_o")
    return _field_eval(r, v, cfg.tau1, cfg.v_o, cfg)


def condition_thrust(cmd, params: EpisodeParams):
    """Apply engine limits to a commanded thrust vector.

    Per-axis pulsed thrusters (asteroid): clamp each component to the axis
    capability.  Single throttled engine (Mars): when an engine failure is
    active, cap the achievable per-axis components first; then clamp the
    norm into [thrust_min, thrust_max].  An exactly-zero command stays zero.
    """
    cmd = np.asarray(cmd, dtype=float)
    if not np.all(np.isfinite(cmd)):
        raise ValueError("thrust command must be finite")
    eng = params.engine
    if isinstance(params.forces, AsteroidEnvForces):
        return np.clip(cmd, -eng.thrust_max, eng.thrust_max)
    out = cmd
    if np.any(eng.per_axis_caps < 1.0):
        # A degraded engine pair caps the achievable component along each
        # axis; the healthy budget per axis is thrust_max/sqrt(3).
        axis_caps = eng.per_axis_caps * (eng.thrust_max / np.sqrt(3.0))
        out = np.clip(cmd, -axis_caps, axis_caps)
    norm = float(np.linalg.norm(out))
    if norm > eng.thrust_max:
        out = out * (eng.thrust_max / norm)
    elif 0.0 < norm < eng.thrust_min:
        out = out * (eng.thrust_min / norm)
    return out


def failure_caps(mode, failure_cfg):
    """Per-axis multiplicative caps for an engine-failure mode."""
    caps = np.ones(3)
    if mode == FAILURE_DOWNRANGE:
        caps[0] = 1.0 / failure_cfg.horizontal_factor
        caps[2] = 1.0 / failure_cfg.vertical_factor
    elif mode == FAILURE_CROSSRANGE:
        caps[1] = 1.0 / failure_cfg.horizontal_factor
        caps[2] = 1.0 / failure_cfg.vertical_factor
    elif mode != FAILURE_NONE:
        raise ValueError(f"unknown failure mode {mode!r}")
    return caps


def step_reward(state, thrust, v_targ, terminal_info, cfg, thrust_max):
    """Per-step reward; terminal_info is the (done, success) pair."""
    done, success = terminal_info
    tracking = float(np.linalg.norm(np.asarray(state.v) - v_targ))
    effort = float(np.linalg.norm(thrust)) / thrust_max
    r = cfg.alpha * tracking + cfg.beta * effort + cfg.gamma_const
    if done and success:
        r += cfg.eta
    return r


def landing_success(state, cfg):
    """Touchdown quality predicate (crossing already established)."""
    ok = (
        float(np.linalg.norm(state.r)) < cfg.r_lim
        and float(np.linalg.norm(state.v)) < cfg.v_lim
    )
    if ok and cfg.gs_lim is not None:
        ok = glideslope(state.v) > cfg.gs_lim
    return ok


def terminate_mars(state, reward_cfg, env_cfg):
    """(done, success, reason) for the Mars environment."""
    r = state.r
    if r[2] <= 0.0:
        return True, landing_success(state, reward_cfg), "touchdown"
    if state.t > env_cfg.t_max:
        return True, False, "timeout"
    if abs(r[0]) > env_cfg.xy_abs_max or abs(r[1]) > env_cfg.xy_abs_max or r[2] > env_cfg.z_max:
        return True, False, "out_of_bounds"
    return False, False, ""


def terminate_asteroid(state, reward_cfg, env_cfg):
    """(done, success, reason); done on landing-plane crossing or timeout.

    The landing plane passes through the target with the outward surface
    normal, which is +z in the target-centered frame.
    """
    if state.r[2] <= 0.0:
        return True, landing_success(state, reward_cfg), "touchdown"
    if state.t > env_cfg.t_max:
        return True, False, "timeout"
    if float(np.linalg.norm(state.r)) > env_cfg.max_distance:
        return True, False, "out_of_bounds"
    return False, False, ""


def biased_state(state, params):
    """Estimator output under per-episode proportional bias.

    o_r = r + p_r.|r|, o_v = v + p_v.|v|, absolute values element-wise.
    """
    o_r = state.r + params.bias_pos * np.abs(state.r)
    o_v = state.v + params.bias_vel * np.abs(state.v)
    return o_r, o_v


def observe(state, params, reward_cfg, obs_cfg, body, sensors=None):
    """Build the policy observation for the configured variant.

    truth:  Mars [v_error, r_z, t_go] (5); asteroid [v_error, t_go] (4).
    bias:   as truth, but computed from the biased state estimate.
    radar:  altimeter returns only (see module sensors).
    lidar:  ranges + Doppler closing velocities (see module sensors).
    """
    kind = obs_cfg.kind
    if kind in ("truth", "bias"):
        if kind == "bias":
            r, v = biased_state(state, params)
        else:
            r, v = state.r, state.v
        if body == "mars":
            v_targ, t_go = target_velocity_mars(r, v, reward_cfg, params.v_o)
            v_err = v - v_targ
            return np.concatenate([v_err, [r[2], t_go]])
        v_targ, t_go = target_velocity_asteroid(r, v, reward_cfg)
        v_err = v - v_targ
        return np.concatenate([v_err, [t_go]])
    if sensors is None:
        raise ValueError(f"observation kind {kind!r} requires a sensor suite")
    if kind == "radar":
        return sensors.radar(state, obs_cfg.radar_mode, obs_cfg.radar_layout)
    if kind == "lidar":
        return sensors.lidar(state, params.forces)
    raise ValueError(f"unknown observation kind {kind!r}")


def observation_dim(spec) -> int:
    kind = spec.observation.kind
    if kind in ("truth", "bias"):
        return 5 if spec.body == "mars" else 4
    if kind == "radar":
        return 8 if spec.observation.radar_layout == "ranges_doppler" else 4
    return 10  # lidar: 5 ranges + 5 closing velocities


def reset_mars(spec, rng, sensors=None):
    """Sample a Mars episode.  Draw order: position (downrange, crossrange,
    elevation), velocity (same order), wet mass, disturbance acceleration
    (x, y, z), failure draws, bias draws."""
    env = spec.env
    r = np.array(
        [
            rng.uniform(*env.downrange),
            rng.uniform(*env.crossrange),
            rng.uniform(*env.elevation),
        ]
    )
    v = np.array(
        [
            rng.uniform(*env.v_downrange),
            rng.uniform(*env.v_crossrange),
            rng.uniform(*env.v_elevation),
        ]
    )
    mass = rng.uniform(*env.initial_mass)
    a_env = np.array(
        [rng.uniform(-env.disturbance_max, env.disturbance_max) for _ in range(3)]
    )
    forces = MarsEnvForces(a_env=a_env, g=np.array(env.gravity))

    mode = FAILURE_NONE
    if spec.failure.p_fail > 0.0:
        if rng.uniform(0.0, 1.0) < spec.failure.p_fail:
            mode = FAILURE_DOWNRANGE if rng.uniform(0.0, 1.0) < 0.5 else FAILURE_CROSSRANGE
    caps = failure_caps(mode, spec.failure)

    bias_pos = np.zeros(3)
    bias_vel = np.zeros(3)
    if spec.observation.kind == "bias":
        m = spec.observation.bias_magnitude
        bias_pos = np.array([rng.uniform(-m, m) for _ in range(3)])
        bias_vel = np.array([rng.uniform(-m, m) for _ in range(3)])

    params = EpisodeParams(
        forces=forces,
        engine=env.engine(per_axis_caps=caps),
        failure_mode=mode,
        bias_pos=bias_pos,
        bias_vel=bias_vel,
        initial_mass=mass,
        v_o=float(np.linalg.norm(v)),
    )
    state = LanderState(r, v, mass, 0.0)
    obs = observe(state, params, spec.reward, spec.observation, "mars", sensors)
    return state, params, obs


def _perp_basis(u):
    # deterministic orthonormal pair perpendicular to unit vector u
    ref = np.array([0.0, 0.0, 1.0])
    if abs(float(np.dot(u, ref))) > 0.99:
        ref = np.array([1.0, 0.0, 0.0])
    e1 = np.cross(u, ref)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(u, e1)
    return e1, e2


def reset_asteroid(spec, rng, sensors=None):
    """Sample an asteroid episode.  Draw order: distance, polar angle,
    azimuth, heading error, heading orientation, speed, wet mass, body
    rotation (x, y, z), SRP (x, y, z), body mass."""
    env = spec.env
    dist = rng.uniform(*env.distance)
    polar = math.radians(rng.uniform(*env.polar_deg))
    azim = math.radians(rng.uniform(*env.azimuth_deg))
    head_err = math.radians(rng.uniform(*env.heading_error_deg))
    orient = rng.uniform(0.0, 2.0 * math.pi)
    speed = rng.uniform(*env.speed)
    mass = rng.uniform(*env.initial_mass)

    r = dist * np.array(
        [
            math.sin(polar) * math.cos(azim),
            math.sin(polar) * math.sin(azim),
            math.cos(polar),
        ]
    )
    los = -r / dist  # line of sight to the target
    e1, e2 = _perp_basis(los)
    v_dir = math.cos(head_err) * los + math.sin(head_err) * (
        math.cos(orient) * e1 + math.sin(orient) * e2
    )
    v = speed * v_dir

    omega = np.array([rng.uniform(-env.omega_max, env.omega_max) for _ in range(3)])
    a_srp = np.array([rng.uniform(-env.srp_max, env.srp_max) for _ in range(3)])
    body_mass = rng.uniform(*env.body_mass)
    forces = AsteroidEnvForces(
        omega=omega,
        M=body_mass,
        a_srp=a_srp,
        G=env.grav_constant,
        r_offset=np.array([0.0, 0.0, env.target_radius]),
    )
    params = EpisodeParams(
        forces=forces,
        engine=env.engine(),
        initial_mass=mass,
        v_o=spec.reward.v_o,
    )
    state = LanderState(r, v, mass, 0.0)
    obs = observe(state, params, spec.reward, spec.observation, "asteroid", sensors)
    return state, params, obs


def _touchdown_state(pre, thrust, accel_fn, dt, engine, dry_mass):
    """Interpolate the plane-crossing state inside one substep.

    Secant iteration on the crossing altitude of a fractional integrator
    step; the pre-state is strictly above the plane and the full step at or
    below it.
    """
    z0 = pre.r[2]
    full = rk4_step(pre, thrust, accel_fn, dt, engine, dry_mass)
    z1 = full.r[2]
    if z1 > 0.0:
        raise ValueError("full step does not cross the landing plane")
    f_lo, g_lo = 0.0, z0
    f_hi, g_hi = 1.0, z1
    cand = full
    for _ in range(12):
        f = f_lo - g_lo * (f_hi - f_lo) / (g_hi - g_lo)
        f = min(max(f, 1e-12), 1.0)
        cand = rk4_step(pre, thrust, accel_fn, f * dt, engine, dry_mass)
        g = cand.r[2]
        if abs(g) < 1e-9:
            break
        if g > 0.0:
            f_lo, g_lo = f, g
        else:
            f_hi, g_hi = f, g
    if cand.r[2] > 0.0:
        cand.r[2] = 0.0
    return cand


def make_env(spec):
    """Construct a LandingEnv, building the sensor suite when the
    observation variant needs one."""
    suite = None
    if spec.observation.kind in ("radar", "lidar"):
        from . import sensors

        suite = sensors.SensorSuite(spec.body, spec.observation)
    return LandingEnv(spec, sensors=suite)


class LandingEnv:
    """Stateful episode wrapper over the pure operations.

    One instance owns one episode at a time; instances are independent.
    Actions are in normalized units and scaled to newtons by action_scale
    before conditioning.
    """

    def __init__(self, spec, sensors=None):
        self.spec = spec
        self.body = spec.body
        self.sensors = sensors
        if spec.observation.kind in ("radar", "lidar") and sensors is None:
            raise ValueError("sensor observation variants require a sensor suite")
        self.state = None
        self.params = None
        self._accel_fn = None
        self._done = True

    @property
    def action_scale(self) -> float:
        if self.body == "mars":
            return self.spec.env.thrust_max
        return self.spec.env.axis_thrust

    @property
    def obs_dim(self) -> int:
        return observation_dim(self.spec)

    def reset(self, rng):
        if self.sensors is not None:
            self.sensors.start_episode()
        if self.body == "mars":
            self.state, self.params, obs = reset_mars(self.spec, rng, self.sensors)
            self._accel_fn = mars_accel_fn(self.params.forces)
        else:
            self.state, self.params, obs = reset_asteroid(self.spec, rng, self.sensors)
            self._accel_fn = asteroid_accel_fn(self.params.forces)
        self._done = False
        self._wet_mass = self.params.initial_mass
        return obs

    def _target_velocity(self, r, v):
        if self.body == "mars":
            return target_velocity_mars(r, v, self.spec.reward, self.params.v_o)
        return target_velocity_asteroid(r, v, self.spec.reward)

    def _terminate(self, state):
        if self.body == "mars":
            return terminate_mars(state, self.spec.reward, self.spec.env)
        return terminate_asteroid(state, self.spec.reward, self.spec.env)

    def guidance_view(self):
        """State estimate exposed to classical guidance: biased position and
        velocity when the episode carries an estimator bias, plus the wet
        mass (the baseline is granted ground-truth mass at episode start,
        not the continuously depleting mass)."""
        if self.spec.observation.kind == "bias":
            r, v = biased_state(self.state, self.params)
        else:
            r, v = self.state.r.copy(), self.state.v.copy()
        return {
            "r": r,
            "v": v,
            "mass": self.params.initial_mass,
            "t": self.state.t,
        }

    def step(self, action) -> StepResult:
        if self._done:
            raise RuntimeError("step() after episode end; call reset()")
        env = self.spec.env
        cmd = np.asarray(action, dtype=float) * self.action_scale
        thrust = condition_thrust(cmd, self.params)

        state = self.state
        touched = False
        for _ in range(env.substeps):
            nxt = rk4_step(state, thrust, self._accel_fn, env.dt, self.params.engine, env.dry_mass)
            if nxt.r[2] <= 0.0 < state.r[2]:
                state = _touchdown_state(
                    state, thrust, self._accel_fn, env.dt, self.params.engine, env.dry_mass
                )
                touched = True
                break
            state = nxt
        self.state = state

        done, success, reason = self._terminate(state)
        if touched and not done:
            done, reason = True, "touchdown"
        v_targ, t_go = self._target_velocity(state.r, state.v)
        thrust_scale = env.thrust_max if self.body == "mars" else env.axis_thrust
        reward = step_reward(
            state, thrust, v_targ, (done, success), self.spec.reward, thrust_scale
        )
        self._done = done
        obs = observe(
            state, self.params, self.spec.reward, self.spec.observation, self.body, self.sensors
        )
        info = {
            "state": state.copy(),
            "thrust": thrust,
            "fuel_used": self._wet_mass - state.mass,
            "success": success,
            "reason": reason,
            "v_targ": v_targ,
            "t_go": t_go,
        }
        return StepResult(observation=obs, reward=reward, done=done, info=info)
