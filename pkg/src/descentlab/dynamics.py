"""3-DOF translational dynamics for powered descent.

Two force models share the same state (position, velocity, mass, clock),
both expressed in a target-centered frame:

Mars (constant gravity plus a per-episode disturbance):

    r_dot = v
    v_dot = T/m + a_env + g
    m_dot = -||T|| / (Isp * g_ref)

Asteroid (rotating frame fixed to the body; inverse-square gravity,
solar radiation pressure, Coriolis and centrifugal terms):

    r_dot = v
    v_dot = T/m + a_srp - M*G*r_a/||r_a||^3 + 2*(v x omega) + (omega x r_a) x omega
    m_dot = -||T|| / (Isp * g_ref)

where r_a = r + r_offset is the position in the asteroid-centered frame
(r_offset points from the asteroid center to the target).

Propagation is fixed-step 4th-order Runge-Kutta with thrust held constant
over the step (zero-order hold).  All functions are pure; trajectories may
be propagated concurrently without shared state.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class InvalidStateError(ValueError):
    """Raised when a state violates a physical precondition (e.g. mass <= 0)."""


class SingularityError(ValueError):
    """Raised when a force model is evaluated at a singular point."""


def _vec3(x) -> np.ndarray:
    v = np.asarray(x, dtype=float)
    if v.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {v.shape}")
    return v


@dataclass
class LanderState:
    """Ground-truth translational state in the target-centered frame.

    r : position, m.  v : velocity, m/s.  mass : kg.  t : episode clock, s.
    """

    r: np.ndarray
    v: np.ndarray
    mass: float
    t: float = 0.0

    def __post_init__(self):
        self.r = _vec3(self.r)
        self.v = _vec3(self.v)
        self.mass = float(self.mass)
        self.t = float(self.t)

    def copy(self) -> "LanderState":
        return LanderState(self.r.copy(), self.v.copy(), self.mass, self.t)


@dataclass
class MarsEnvForces:
    """Per-episode Mars force parameters.

    a_env : constant disturbance acceleration, m/s^2, each component in
            [-0.2, 0.2] at sampling time.
    g     : planetary gravity, m/s^2 (default [0, 0, -3.7114]).
    """

    a_env: np.ndarray = field(default_factory=lambda: np.zeros(3))
    g: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, -3.7114]))

    def __post_init__(self):
        self.a_env = _vec3(self.a_env)
        self.g = _vec3(self.g)


#: Gravitational constant, m^3 / (kg s^2).
GRAV_CONSTANT = 6.674e-11


@dataclass
class AsteroidEnvForces:
    """Per-episode asteroid force parameters (asteroid-centered rotating frame).

    omega    : body rotational velocity, rad/s.
    M        : asteroid mass, kg.
    a_srp    : solar-radiation-pressure acceleration, m/s^2.
    G        : gravitational constant, m^3/(kg s^2).
    r_offset : vector from asteroid center to the target, m (magnitude 250
               for the pole target).
    """

    omega: np.ndarray = field(default_factory=lambda: np.zeros(3))
    M: float = 1.1e11
    a_srp: np.ndarray = field(default_factory=lambda: np.zeros(3))
    G: float = GRAV_CONSTANT
    r_offset: np.ndarray = field(default_factory=lambda: np.array([0.0, 0.0, 250.0]))

    def __post_init__(self):
        self.omega = _vec3(self.omega)
        self.a_srp = _vec3(self.a_srp)
        self.r_offset = _vec3(self.r_offset)
        self.M = float(self.M)
        self.G = float(self.G)


@dataclass
class EngineConfig:
    """Thrust limits and propellant model.

    thrust_min/thrust_max bound the thrust norm (Mars) or define the scale
    for per-axis pulsed thrusters (asteroid).  per_axis_caps are the
    multiplicative engine-failure caps, 1.0 on healthy axes.
    """

    isp: float = 225.0
    g_ref: float = 9.8
    thrust_min: float = 0.0
    thrust_max: float = 15000.0
    per_axis_caps: np.ndarray = field(default_factory=lambda: np.ones(3))

    def __post_init__(self):
        self.per_axis_caps = _vec3(self.per_axis_caps)
        if not (0.0 <= self.thrust_min <= self.thrust_max):
            raise ValueError("require 0 <= thrust_min <= thrust_max")
        if np.any(self.per_axis_caps <= 0.0) or np.any(self.per_axis_caps > 1.0):
            raise ValueError("per_axis_caps must lie in (0, 1]")


def mars_accel(state: LanderState, thrust, forces: MarsEnvForces) -> np.ndarray:
    """Translational acceleration in the Mars environment: T/m + a_env + g."""
    if state.mass <= 0.0:
        raise InvalidStateError(f"non-positive mass {state.mass}")
    return _vec3(thrust) / state.mass + forces.a_env + forces.g


def target_to_asteroid_frame(r, forces: AsteroidEnvForces) -> np.ndarray:
    """Translate a target-centered position to the asteroid-centered frame."""
    return _vec3(r) + forces.r_offset


def asteroid_accel(state: LanderState, thrust, forces: AsteroidEnvForces) -> np.ndarray:
    """Acceleration in the asteroid-centered rotating frame.

    T/m + a_srp - M*G*r_a/||r_a||^3 + 2*(v x omega) + (omega x r_a) x omega,
    with r_a the asteroid-centered position.  The Coriolis term uses the
    rotating-frame velocity v = r_a_dot.
    """
    if state.mass <= 0.0:
        raise InvalidStateError(f"non-positive mass {state.mass}")
    r_a = target_to_asteroid_frame(state.r, forces)
    dist = np.linalg.norm(r_a)
    if dist == 0.0:
        raise SingularityError("asteroid-centered position has zero norm")
    gravity = -forces.M * forces.G * r_a / dist**3
    coriolis = 2.0 * np.cross(state.v, forces.omega)
    centrifugal = np.cross(np.cross(forces.omega, r_a), forces.omega)
    return _vec3(thrust) / state.mass + forces.a_srp + gravity + coriolis + centrifugal


def mass_flow(thrust, engine: EngineConfig) -> float:
    """Propellant consumption rate ||T||/(Isp*g_ref), kg/s (non-negative)."""
    return float(np.linalg.norm(thrust)) / (engine.isp * engine.g_ref)


def rk4_step(
    state: LanderState,
    thrust,
    accel_fn,
    dt: float,
    engine: EngineConfig,
    dry_mass: float = 0.0,
) -> LanderState:
    """Advance the state one fixed RK4 step under constant thrust.

    accel_fn(r, v, mass, thrust) must return the total acceleration.  Mass
    is integrated alongside position and velocity; when the dry-mass floor
    is reached the propellant is exhausted and thrust is forced to zero for
    the step.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    thrust = _vec3(thrust)
    if state.mass <= dry_mass + 1e-12:
        thrust = np.zeros(3)

    mdot = -mass_flow(thrust, engine)

    def deriv(r, v, m):
        return v, accel_fn(r, v, m, thrust), mdot

    r0, v0, m0 = state.r, state.v, state.mass
    k1r, k1v, k1m = deriv(r0, v0, m0)
    k2r, k2v, k2m = deriv(r0 + 0.5 * dt * k1r, v0 + 0.5 * dt * k1v, m0 + 0.5 * dt * k1m)
    k3r, k3v, k3m = deriv(r0 + 0.5 * dt * k2r, v0 + 0.5 * dt * k2v, m0 + 0.5 * dt * k2m)
    k4r, k4v, k4m = deriv(r0 + dt * k3r, v0 + dt * k3v, m0 + dt * k3m)

    r1 = r0 + (dt / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r)
    v1 = v0 + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    m1 = m0 + (dt / 6.0) * (k1m + 2.0 * k2m + 2.0 * k3m + k4m)
    if m1 < dry_mass:
        m1 = dry_mass
    return LanderState(r1, v1, m1, state.t + dt)


def mars_accel_fn(forces: MarsEnvForces):
    """Bind Mars forces into the accel_fn signature used by rk4_step."""

    def fn(r, v, mass, thrust):
        if mass <= 0.0:
            raise InvalidStateError(f"non-positive mass {mass}")
        return thrust / mass + forces.a_env + forces.g

    return fn


def asteroid_accel_fn(forces: AsteroidEnvForces):
    """Bind asteroid forces into the accel_fn signature used by rk4_step."""

    def fn(r, v, mass, thrust):
        if mass <= 0.0:
            raise InvalidStateError(f"non-positive mass {mass}")
        r_a = r + forces.r_offset
        dist = np.linalg.norm(r_a)
        if dist == 0.0:
            raise SingularityError("asteroid-centered position has zero norm")
        gravity = -forces.M * forces.G * r_a / dist**3
        coriolis = 2.0 * np.cross(v, forces.omega)
        centrifugal = np.cross(np.cross(forces.omega, r_a), forces.omega)
        return thrust / mass + forces.a_srp + gravity + coriolis + centrifugal

    return fn
