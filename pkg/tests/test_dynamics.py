"""Point-mass dynamics: forces, mass flow, frames, and the RK4 stepper."""

import math

import numpy as np
import pytest

from descentlab.dynamics import (
    AsteroidEnvForces,
    EngineConfig,
    InvalidStateError,
    LanderState,
    MarsEnvForces,
    SingularityError,
    asteroid_accel,
    asteroid_accel_fn,
    mars_accel,
    mars_accel_fn,
    mass_flow,
    rk4_step,
    target_to_asteroid_frame,
)

MARS_G = np.array([0.0, 0.0, -3.7114])


def hover_engine():
    return EngineConfig(thrust_min=2000.0, thrust_max=15000.0)


def state_at(r, v, mass, t=0.0):
    return LanderState(r=np.asarray(r, float), v=np.asarray(v, float), mass=mass, t=t)


class TestMarsAccel:
    def test_hover_thrust_cancels_gravity(self):
        forces = MarsEnvForces(a_env=np.zeros(3))
        s = state_at([0, 0, 100], [0, 0, 0], 2000.0)
        a = mars_accel(s, np.array([0.0, 0.0, 7422.8]), forces)
        assert np.allclose(a, 0.0, atol=1e-12)

    def test_thrust_env_and_gravity_superpose(self):
        forces = MarsEnvForces(a_env=np.array([0.1, 0.0, 0.0]))
        s = state_at([0, 0, 100], [0, 0, 0], 1000.0)
        a = mars_accel(s, np.array([2000.0, 0.0, 0.0]), forces)
        assert np.allclose(a, [2.1, 0.0, -3.7114], atol=1e-12)

    def test_nonpositive_mass_rejected(self):
        forces = MarsEnvForces(a_env=np.zeros(3))
        with pytest.raises(InvalidStateError):
            mars_accel(state_at([0, 0, 0], [0, 0, 0], 0.0), np.zeros(3), forces)
        with pytest.raises(InvalidStateError):
            mars_accel(state_at([0, 0, 0], [0, 0, 0], -1.0), np.zeros(3), forces)


class TestAsteroidAccel:
    def test_centrifugal_term(self):
        # omega along z, asteroid-centered position on the x axis, no
        # motion: only the centrifugal term -(omega x r_a) x omega survives
        # alongside gravity; zero gravity with M=0.
        forces = AsteroidEnvForces(
            omega=np.array([0.0, 0.0, 1e-3]),
            M=0.0,
            a_srp=np.zeros(3),
            r_offset=np.zeros(3),
        )
        s = state_at([1000, 0, 0], [0, 0, 0], 1000.0)
        a = asteroid_accel(s, np.zeros(3), forces)
        assert np.allclose(a, [1e-3, 0.0, 0.0], atol=1e-15)

    def test_coriolis_term_adds(self):
        forces = AsteroidEnvForces(
            omega=np.array([0.0, 0.0, 1e-3]),
            M=0.0,
            a_srp=np.zeros(3),
            r_offset=np.zeros(3),
        )
        s = state_at([1000, 0, 0], [0, 0.1, 0], 1000.0)
        a = asteroid_accel(s, np.zeros(3), forces)
        assert np.allclose(a, [1.2e-3, 0.0, 0.0], atol=1e-15)

    def test_gravity_term(self):
        forces = AsteroidEnvForces(
            omega=np.zeros(3), M=2e10, a_srp=np.zeros(3), r_offset=np.zeros(3)
        )
        s = state_at([1000, 0, 0], [0, 0, 0], 1000.0)
        a = asteroid_accel(s, np.zeros(3), forces)
        # MG/r^2 = 6.674e-11 * 2e10 / 1e6, evaluated by hand.
        expected = -forces.G * 2e10 / 1000.0**2
        assert np.allclose(a, [expected, 0.0, 0.0], rtol=1e-12)
        assert abs(a[0] - (-1.3348e-6)) < 1e-10

    def test_target_offset_enters_gravity(self):
        # With the default 250 m pole offset, a lander at the target sits
        # 250 m from the body center, not at the singularity.
        forces = AsteroidEnvForces(
            omega=np.zeros(3), M=2e10, a_srp=np.zeros(3)
        )
        s = state_at([0, 0, 0], [0, 0, 0], 1000.0)
        a = asteroid_accel(s, np.zeros(3), forces)
        expected = -forces.G * 2e10 / 250.0**2
        assert np.allclose(a, [0.0, 0.0, expected], rtol=1e-12)

    def test_singularity_at_body_center(self):
        forces = AsteroidEnvForces(
            omega=np.zeros(3), M=2e10, a_srp=np.zeros(3), r_offset=np.zeros(3)
        )
        with pytest.raises(SingularityError):
            asteroid_accel(state_at([0, 0, 0], [0, 0, 0], 1000.0), np.zeros(3), forces)


class TestMassFlow:
    def test_full_thrust_rate(self):
        assert mass_flow(15000.0, EngineConfig()) == pytest.approx(
            15000.0 / (225.0 * 9.8), rel=1e-12
        )
        assert mass_flow(15000.0, EngineConfig()) == pytest.approx(6.8027, abs=5e-5)

    def test_low_isp_rate(self):
        eng = EngineConfig(isp=37.5, thrust_max=6.0)
        assert mass_flow(2000.0, eng) == pytest.approx(5.4422, abs=5e-5)

    def test_vector_thrust_uses_norm(self):
        eng = EngineConfig()
        assert mass_flow(np.array([3000.0, 0.0, 4000.0]), eng) == pytest.approx(
            5000.0 / (225.0 * 9.8), rel=1e-12
        )

    def test_zero_thrust_zero_flow(self):
        assert mass_flow(0.0, EngineConfig()) == 0.0


class TestFrameTransform:
    def test_target_frame_offset(self):
        forces = AsteroidEnvForces(r_offset=np.array([0.0, 0.0, 250.0]))
        r_t = np.array([10.0, -20.0, 30.0])
        assert np.allclose(
            target_to_asteroid_frame(r_t, forces), [10.0, -20.0, 280.0]
        )

    def test_round_trip(self):
        rng = np.random.default_rng(3)
        forces = AsteroidEnvForces(r_offset=rng.normal(size=3))
        r = rng.normal(size=3)
        r_a = target_to_asteroid_frame(r, forces)
        assert np.allclose(r_a - forces.r_offset, r, atol=1e-15)


class TestEngineConfig:
    def test_limit_ordering_enforced(self):
        with pytest.raises(ValueError):
            EngineConfig(thrust_min=200.0, thrust_max=100.0)

    def test_caps_domain_enforced(self):
        with pytest.raises(ValueError):
            EngineConfig(per_axis_caps=np.array([1.0, 0.0, 1.0]))
        with pytest.raises(ValueError):
            EngineConfig(per_axis_caps=np.array([1.0, 1.5, 1.0]))


class TestRK4:
    def test_ballistic_matches_closed_form(self):
        # Zero thrust under constant gravity integrates exactly (the
        # quadratic truth lives inside RK4's order): 100 steps of dt=0.05.
        forces = MarsEnvForces(a_env=np.zeros(3))
        accel_fn = mars_accel_fn(forces)
        eng = hover_engine()
        state = state_at([1500, -400, 2000], [-40, 10, -75], 2000.0)
        r0, v0 = state.r.copy(), state.v.copy()
        dt = 0.05
        for _ in range(100):
            state = rk4_step(state, np.zeros(3), accel_fn, dt, eng, dry_mass=300.0)
        t = 100 * dt
        r_exact = r0 + v0 * t + 0.5 * MARS_G * t**2
        v_exact = v0 + MARS_G * t
        assert np.linalg.norm(state.r - r_exact) <= 1e-9 * np.linalg.norm(r_exact)
        assert np.linalg.norm(state.v - v_exact) <= 1e-9 * np.linalg.norm(v_exact)
        assert state.mass == 2000.0
        assert state.t == pytest.approx(t, rel=1e-12)

    def test_rotating_frame_matches_inertial_propagation(self):
        # Propagate the same trajectory once in the rotating frame and once
        # in an inertial frame (gravity only), then rotate the inertial
        # answer back.  Uniform rotation about z, body gravity only.
        omega_z = 1e-3
        omega = np.array([0.0, 0.0, omega_z])
        M = 2e10
        forces = AsteroidEnvForces(
            omega=omega, M=M, a_srp=np.zeros(3), r_offset=np.zeros(3)
        )
        accel_rot = asteroid_accel_fn(forces)
        G = forces.G

        def accel_inertial(r, v, mass, thrust):
            d = np.linalg.norm(r)
            return thrust / mass - G * M * r / d**3

        eng = EngineConfig(thrust_min=0.0, thrust_max=20.0)
        r0 = np.array([800.0, 200.0, 100.0])
        v_rot0 = np.array([0.1, -0.2, 0.05])
        # v_inertial = v_rot + omega x r at t=0 (frames coincide then).
        v_in0 = v_rot0 + np.cross(omega, r0)

        dt = 0.5
        n = 200  # 100 s
        s_rot = state_at(r0, v_rot0, 500.0)
        s_in = state_at(r0, v_in0, 500.0)
        for _ in range(n):
            s_rot = rk4_step(s_rot, np.zeros(3), accel_rot, dt, eng, dry_mass=300.0)
            s_in = rk4_step(s_in, np.zeros(3), accel_inertial, dt, eng, dry_mass=300.0)
        t = n * dt
        c, s = math.cos(omega_z * t), math.sin(omega_z * t)
        # Rotating-frame coordinates of the inertial answer: rotate by -omega*t.
        rot_back = np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])
        r_expected = rot_back @ s_in.r
        assert np.linalg.norm(s_rot.r - r_expected) <= 1e-5

    def test_orbital_energy_drift(self):
        # Circular orbit in a non-rotating body frame: specific energy
        # v^2/2 - GM/r must hold to 1e-6 relative over 1000 steps.
        M = 2e10
        forces = AsteroidEnvForces(
            omega=np.zeros(3), M=M, a_srp=np.zeros(3), r_offset=np.zeros(3)
        )
        accel_fn = asteroid_accel_fn(forces)
        G = forces.G
        radius = 1000.0
        v_circ = math.sqrt(G * M / radius)
        state = state_at([radius, 0, 0], [0, v_circ, 0], 500.0)
        eng = EngineConfig(thrust_min=0.0, thrust_max=20.0)

        def energy(s):
            return 0.5 * float(s.v @ s.v) - G * M / np.linalg.norm(s.r)

        e0 = energy(state)
        for _ in range(1000):
            state = rk4_step(state, np.zeros(3), accel_fn, 2.0, eng, dry_mass=300.0)
        assert abs(energy(state) - e0) < 1e-6 * abs(e0)

    def test_mass_decreases_under_thrust(self):
        forces = MarsEnvForces(a_env=np.zeros(3))
        accel_fn = mars_accel_fn(forces)
        eng = hover_engine()
        state = state_at([0, 0, 1000], [0, 0, 0], 2000.0)
        thrust = np.array([0.0, 0.0, 7000.0])
        nxt = rk4_step(state, thrust, accel_fn, 0.05, eng, dry_mass=300.0)
        expected = 2000.0 - mass_flow(7000.0, eng) * 0.05
        assert nxt.mass == pytest.approx(expected, rel=1e-12)
        assert nxt.mass < state.mass

    def test_mass_floor_cuts_thrust(self):
        # At the dry-mass floor the engine has nothing left to burn: mass
        # stays put and the step is ballistic.
        forces = MarsEnvForces(a_env=np.zeros(3))
        accel_fn = mars_accel_fn(forces)
        eng = hover_engine()
        state = state_at([0, 0, 1000], [0, 0, 0], 300.0)
        nxt = rk4_step(
            state, np.array([0.0, 0.0, 15000.0]), accel_fn, 0.05, eng, dry_mass=300.0
        )
        assert nxt.mass == 300.0
        ballistic = rk4_step(state, np.zeros(3), accel_fn, 0.05, eng, dry_mass=300.0)
        assert np.allclose(nxt.r, ballistic.r, atol=1e-12)
        assert np.allclose(nxt.v, ballistic.v, atol=1e-12)

    def test_positive_dt_required(self):
        forces = MarsEnvForces(a_env=np.zeros(3))
        accel_fn = mars_accel_fn(forces)
        state = state_at([0, 0, 1000], [0, 0, 0], 2000.0)
        with pytest.raises(ValueError):
            rk4_step(state, np.zeros(3), accel_fn, 0.0, hover_engine())

    def test_state_copy_is_independent(self):
        state = state_at([0, 0, 0], [0, 0, 0], 2000.0)
        dup = state.copy()
        dup.r[0] = 5.0
        assert state.r[0] == 0.0
