"""Energy-optimal closed-loop guidance baseline with a free-final-time solve.

For a double integrator with constant gravity g, minimizing the control
energy 0.5*integral(||u||^2) subject to r(T) = v(T) = 0 gives a thrust
acceleration linear in time, u(s) = c1 + c2*s.  Substituting into the
boundary conditions

    v + c1*T + c2*T^2/2 + g*T               = 0
    r + v*T + c1*T^2/2 + c2*T^3/6 + g*T^2/2 = 0

and solving yields

    c1 = -4*v/T - 6*r/T^2 - g
    c2 =  6*v/T^2 + 12*r/T^3

so the commanded acceleration at the current state is a = c1.  The
time-to-go is chosen by minimizing the accumulated control energy plus a
time penalty,

    J(T) = Gamma*T + 0.5*(||c1||^2*T + (c1.c2)*T^2 + ||c2||^2*T^3/3),

over a bracketed interval.  The guidance loop recomputes T and a at every
navigation step from the current state estimate; thrust is conditioned by
the same limits as every other policy.

All functions are pure and safe for concurrent evaluation.
"""

from __future__ import annotations

import math

import numpy as np

from .environments import condition_thrust

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
_EPS_SPEED = 1e-6


def boundary_coeffs(r, v, g, t_go):
    """(c1, c2) of the linear-in-time optimal control for time-to-go t_go."""
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    g = np.asarray(g, dtype=float)
    c1 = -4.0 * v / t_go - 6.0 * r / t_go**2 - g
    c2 = 6.0 * v / t_go**2 + 12.0 * r / t_go**3
    return c1, c2


def drdv_accel(r, v, g, t_go, t_go_min=1e-3):
    """Commanded thrust acceleration a = -(4/t_go)v - (6/t_go^2)r - g.

    t_go below the floor is clamped to the floor.
    """
    t_go = max(float(t_go), t_go_min)
    c1, _ = boundary_coeffs(r, v, g, t_go)
    return c1


def cost_to_go(r, v, g, t_go, gamma_weight=0.0):
    """Control energy of the closed-form solution plus the time penalty."""
    c1, c2 = boundary_coeffs(r, v, g, t_go)
    c11 = float(c1 @ c1)
    c12 = float(c1 @ c2)
    c22 = float(c2 @ c2)
    return gamma_weight * t_go + 0.5 * (c11 * t_go + c12 * t_go**2 + c22 * t_go**3 / 3.0)


def solve_tgo(r, v, cfg):
    """Free-final-time solve: minimize J(t) over [t_go_min, 10*||r||/||v||].

    Coarse log-spaced grid then golden-section refinement between the
    neighbors of the grid minimum.  An empty bracket returns the floor.
    """
    r = np.asarray(r, dtype=float)
    v = np.asarray(v, dtype=float)
    g = np.asarray(cfg.g_nominal, dtype=float)
    lo = cfg.t_go_min
    speed = max(float(np.linalg.norm(v)), _EPS_SPEED)
    hi = 10.0 * float(np.linalg.norm(r)) / speed
    if hi <= lo:
        return lo

    def J(t):
        return cost_to_go(r, v, g, t, cfg.gamma_weight)

    ts = np.geomspace(lo, hi, 64)
    costs = [J(t) for t in ts]
    k = int(np.argmin(costs))
    a = ts[max(k - 1, 0)]
    b = ts[min(k + 1, len(ts) - 1)]
    if a == b:
        return float(a)

    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    f1, f2 = J(x1), J(x2)
    for _ in range(60):
        if b - a < 1e-10 * b:
            break
        if f1 < f2:
            b, x2, f2 = x2, x1, f1
            x1 = b - _GOLDEN * (b - a)
            f1 = J(x1)
        else:
            a, x1, f1 = x1, x2, f2
            x2 = a + _GOLDEN * (b - a)
            f2 = J(x2)
    return float(0.5 * (a + b))


def drdv_thrust(state, params, cfg):
    """Thrust command for the current ground-truth state, conditioned by the
    episode's engine limits exactly like the learned policies."""
    t_go = solve_tgo(state.r, state.v, cfg)
    accel = drdv_accel(state.r, state.v, np.asarray(cfg.g_nominal, dtype=float), t_go, cfg.t_go_min)
    return condition_thrust(state.mass * accel, params)


class DrDvPolicy:
    """Policy adapter: consumes the guidance view (estimated position and
    velocity, true mass) and emits a normalized action for the environment.

    Time-to-go is a countdown: re-solving between steps may shorten the
    remaining time but never extend it.  Without the countdown the closed
    loop settles into a hover millimeters above the landing plane (commanded
    time keeps stalling at the floor) and the episode never terminates;
    committing to the planned arrival instead drives the gains up through
    the final approach so the lander crosses the plane with a small residual
    velocity, the way the classical law behaves with a real clock.

    The environment re-applies the same thrust conditioning; the mapping is
    idempotent so the realized thrust matches drdv_thrust exactly.
    """

    kind = "drdv"

    def __init__(self, cfg, action_scale, nav_period, commit_from_start=False):
        self.cfg = cfg
        self.g_nominal = np.asarray(cfg.g_nominal, dtype=float)
        self.action_scale = float(action_scale)
        self.nav_period = float(nav_period)
        # Below this solved time-to-go the policy stops re-solving and
        # commits to running the clock down to touchdown.  When g_nominal
        # is deliberately inflated relative to the true field (small-body
        # tuning), re-solving never converges to touchdown, so the clock
        # must commit to the very first solve instead.
        self.commit_window = 5.0 * self.nav_period
        self.commit_from_start = bool(commit_from_start)
        self._t_go = None
        self._committed = False

    def reset(self):
        self._t_go = None
        self._committed = False

    # Gain-time floor once the endgame clock has expired.  The feedback
    # gains grow as 1/t_go^2, so letting the clock keep counting down past
    # the solver floor drives the lander through the plane instead of
    # letting it hover just above it.
    terminal_t_go = 1e-3

    def act(self, obs, view, rng=None, deterministic=True):
        if self._committed:
            # Run the committed clock out.  Re-solving all the way down
            # lets the loop settle into a stable hover just above the
            # plane and never cross it.
            t_go = max(self._t_go - self.nav_period, self.terminal_t_go)
        else:
            t_go = solve_tgo(view["r"], view["v"], self.cfg)
            if self.commit_from_start or t_go <= self.commit_window:
                self._committed = True
        self._t_go = t_go
        accel = drdv_accel(view["r"], view["v"], self.g_nominal, t_go, self.terminal_t_go)
        return view["mass"] * accel / self.action_scale
