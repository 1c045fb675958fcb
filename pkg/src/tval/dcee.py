"""One-step-lookahead exploration/exploitation torque selection.

The rear axle is driven toward the believed maximum tyre force (the
quantity being learned) while the front axle reacts to preserve the
driver's total force demand.  Candidate torque increments are scored by
the expected absolute gap between the one-step-predicted rear force and
the believed maximum; the expectation runs over the particle set and over
sampled predicted observations.

Candidate evaluation consumes noise from per-candidate substreams keyed by
(run seed, tick, candidate index), so the selection is reproducible and
independent of evaluation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .belief import Belief, expectation
from .plant import VehicleParams
from .tyre import magic_formula, slip_ratio_clamped


@dataclass(frozen=True)
class ActionSet:
    """Discrete torque increments (axle N m); must contain 0, symmetric."""

    increments: tuple[float, ...] = (0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0)

    def __post_init__(self):
        vals = set(self.increments)
        if 0.0 not in vals:
            raise ValueError("action set must contain 0")
        if any(-tau not in vals for tau in vals):
            raise ValueError("action set must be symmetric about 0")

    def ordered(self) -> tuple[float, ...]:
        """Canonical evaluation order: growing magnitude, negative first."""
        return tuple(sorted(self.increments, key=lambda t: (abs(t), t)))

    @property
    def max_increment(self) -> float:
        return max(abs(t) for t in self.increments)


@dataclass(frozen=True)
class ControlCommand:
    """Per-axle torques chosen by the optimizer."""

    u_front: float   # axle N m, reactive
    u_rear: float    # axle N m, equals previous rear + tau_chosen
    tau_chosen: float
    cost: float      # expected |F - F*| in N (per wheel)


def candidate_rng(noise_key: tuple[int, int], index: int) -> np.random.Generator:
    """Fixed substream for one candidate evaluation at one tick."""
    seed, tick = noise_key
    return np.random.Generator(np.random.PCG64(
        np.random.SeedSequence((int(seed), int(tick), int(index)))))


def candidate_cost(belief: Belief, u_rear_axle: float, a_ref: float,
                   fz_rear_wheel: float, params: VehicleParams, dt: float,
                   rng: np.random.Generator,
                   noise_cov: tuple[float, float, float],
                   n_obs_samples: int = 1,
                   explore_sign: float = 1.0) -> float:
    """Expected |F_pred - F*| for one candidate rear axle torque.

    The outer expectation runs over the particle set; the inner one over
    sampled predicted observations, each of which reweights the particles
    by its likelihood before the force gap is averaged.
    """
    u_wheel = u_rear_axle / 2.0
    kr, _ = slip_ratio_clamped(belief.wr, params.R, belief.v)
    mu_now = magic_formula(kr, belief.B, belief.C, belief.D, belief.E)
    f_now = mu_now * fz_rear_wheel

    # under the reactive-front constraint the net body force tracks the
    # driver demand, so the body speed prediction is common to particles
    v_pred = np.maximum(belief.v + dt * a_ref, 0.0)
    wr_pred = np.maximum(belief.wr + (dt / params.iw) * (u_wheel - f_now * params.R), 0.0)

    k_pred, _ = slip_ratio_clamped(wr_pred, params.R, v_pred)
    f_pred = magic_formula(k_pred, belief.B, belief.C, belief.D, belief.E) \
        * fz_rear_wheel
    gap = np.abs(f_pred - explore_sign * belief.D * fz_rear_wheel)

    w = belief.weights
    v_mean = float(np.dot(w, v_pred))
    wr_mean = float(np.dot(w, wr_pred))
    var_v, _, var_w = noise_cov
    cost = 0.0
    for _ in range(n_obs_samples):
        y_v = v_mean + np.sqrt(var_v) * rng.standard_normal()
        y_w = wr_mean + np.sqrt(var_w) * rng.standard_normal()
        loglik = -0.5 * ((y_v - v_pred) ** 2 / var_v
                         + (y_w - wr_pred) ** 2 / var_w)
        w_post = w * np.exp(loglik - np.max(loglik))
        total = float(np.sum(w_post))
        if total <= 0.0 or not np.isfinite(total):
            cost += float(np.dot(w, gap))
        else:
            cost += float(np.dot(w_post / total, gap))
    return cost / n_obs_samples


def predicted_rear_force(belief: Belief, u_rear_axle: float, a_ref: float,
                         fz_rear_wheel: float, params: VehicleParams,
                         dt: float) -> float:
    """Noise-free one-step predicted rear axle force (both wheels)."""
    u_wheel = u_rear_axle / 2.0
    kr, _ = slip_ratio_clamped(belief.wr, params.R, belief.v)
    mu_now = magic_formula(kr, belief.B, belief.C, belief.D, belief.E)
    f_now = mu_now * fz_rear_wheel
    v_pred = np.maximum(belief.v + dt * a_ref, 0.0)
    wr_pred = np.maximum(belief.wr + (dt / params.iw) * (u_wheel - f_now * params.R), 0.0)
    k_pred, _ = slip_ratio_clamped(wr_pred, params.R, v_pred)
    mu_pred = magic_formula(k_pred, belief.B, belief.C, belief.D, belief.E)
    return 2.0 * float(np.dot(belief.weights, mu_pred * fz_rear_wheel))


def reactive_front(f_ref_total: float, f_rear_pred: float, fz_front: float,
                   belief: Belief, params: VehicleParams) -> tuple[float, bool]:
    """Front axle torque covering the driver demand left by the rear.

    All forces and loads are axle totals.  The demanded front force is
    clamped to the believed availability bound |F_f| <= D_hat * Fz_front;
    the returned flag reports a clamp (infeasible demand).
    """
    if fz_front <= 0.0:
        raise ValueError("front axle load must be positive")
    d_hat = expectation(belief).theta.D
    f_front = f_ref_total - f_rear_pred
    bound = d_hat * fz_front
    clamped = abs(f_front) > bound
    if clamped:
        f_front = np.sign(f_front) * bound
    return params.R * f_front, bool(clamped)


def select_action(belief: Belief, u_prev_rear: float, a_ref: float,
                  loads: tuple[float, float], actions: ActionSet,
                  params: VehicleParams, dt: float,
                  noise_key: tuple[int, int],
                  noise_cov: tuple[float, float, float] = (0.2, 0.5, 0.5),
                  n_obs_samples: int = 1,
                  explore_sign: float = 1.0,
                  slip_limit: float = 0.35,
                  blend_weight: float = 1.0) -> ControlCommand:
    """Pick the torque increment minimizing the expected force gap.

    loads are per-axle vertical loads (front, rear); explore_sign selects
    which force peak (driving or braking) the rear axle is driven toward.
    Ties break toward the smaller |tau|, then the smaller tau.

    Two overrides bracket the expected-cost argmin.  Past the peak the
    cost surface goes flat and cannot pull a spinning wheel back, so once
    the smoothed measured slip exceeds slip_limit the candidate set is
    restricted to increments that unload the wheel.  Conversely, while
    the rear slip is still below its observability floor nothing can be
    learned, and holding a sub-observable force believed to be the peak
    would freeze a wrong estimate forever; candidates are then restricted
    to increments that load the wheel toward observable slip.
    """
    if not actions.increments:
        raise ValueError("empty action set")
    fz_front, fz_rear = loads
    fz_rear_wheel = fz_rear / 2.0

    # upper-confidence torque cap: commanding beyond what the believed
    # peak force could hold only spins the wheel, so the cap tightens as
    # the belief converges
    w = belief.weights
    d_mean = float(np.dot(w, belief.D))
    d_sd = float(np.sqrt(max(np.dot(w, belief.D ** 2) - d_mean ** 2, 0.0)))
    u_cap = 1.2 * params.R * (d_mean + d_sd) * fz_rear

    spinning = float(belief.kappa_ema[1]) * explore_sign > slip_limit
    # the probe only helps once the command actually reaches the wheels
    probing = (not spinning and not belief.gate_open()[1]
               and blend_weight >= 1.0)
    best = None
    for idx, tau in enumerate(actions.ordered()):
        if spinning and tau * explore_sign >= 0.0 and tau != 0.0:
            continue
        if probing and tau * explore_sign <= 0.0 and tau != 0.0:
            continue
        u_d = u_prev_rear + tau
        if abs(u_d) > u_cap and abs(u_d) >= abs(u_prev_rear):
            continue
        rng = candidate_rng(noise_key, idx)
        cost = candidate_cost(belief, u_d, a_ref, fz_rear_wheel, params, dt,
                              rng, noise_cov, n_obs_samples, explore_sign)
        key = (cost, abs(tau), tau)
        if spinning or probing:
            # move as fast as the rate limit allows
            key = (-abs(tau), tau * explore_sign)
        if best is None or key < best[0]:
            best = (key, tau, u_d, cost)
    if best is None:
        # everything filtered out (stale torque beyond a shrunken cap
        # while the probe wants to push): fall back to holding
        rng = candidate_rng(noise_key, actions.ordered().index(0.0))
        cost = candidate_cost(belief, u_prev_rear, a_ref, fz_rear_wheel,
                              params, dt, rng, noise_cov, n_obs_samples,
                              explore_sign)
        best = ((cost, 0.0, 0.0), 0.0, u_prev_rear, cost)

    _, tau_star, u_rear, cost_star = best
    f_rear_pred = predicted_rear_force(belief, u_rear, a_ref, fz_rear_wheel,
                                       params, dt)
    f_ref_total = params.m * a_ref
    u_front, _ = reactive_front(f_ref_total, f_rear_pred, fz_front,
                                belief, params)
    return ControlCommand(u_front=float(u_front), u_rear=float(u_rear),
                          tau_chosen=float(tau_star), cost=float(cost_star))
