"""Active-learning regulation: when is torque-vectoring exploration allowed.

Three gates feed a request counter that linearly blends the exploring
controller with the driver:

* energy gate: a hysteresis switch on the gap between estimated and
  predicted maximum-force uncertainty (explore only while it pays),
* stability gate: the understeer gradient the vehicle would have under
  full exploration must keep the critical speed clear of the predicted
  body speed,
* availability gate: the front axle must be able to cover the driver's
  demand while the rear axle holds the believed maximum force.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .plant import VehicleParams, static_loads


@dataclass(frozen=True)
class HysteresisSwitch:
    """Two-threshold switch; On at e >= k_s2, Off at e <= k_s1."""

    k_s1: float  # N^2, reset (switch-off) threshold
    k_s2: float  # N^2, set (switch-on) threshold
    on: bool = False

    def __post_init__(self):
        if not self.k_s1 < self.k_s2:
            raise ValueError("hysteresis needs k_s1 < k_s2")


@dataclass(frozen=True)
class ActivationState:
    """Bounded request counter f and the blend weight w1 = f / delta_p."""

    delta_p: int          # ticks of a full transition
    f: int = 0
    tau_p: bool = False
    tau_s: bool = False
    tau_a: bool = False
    tau_r: bool = False

    def __post_init__(self):
        if self.delta_p <= 0:
            raise ValueError("delta_p must be positive")
        if not 0 <= self.f <= self.delta_p:
            raise ValueError("request counter out of bounds")

    @property
    def w1(self) -> float:
        return self.f / self.delta_p


def energy_gate(s2_est: float, s2_pred: float,
                switch: HysteresisSwitch) -> tuple[bool, HysteresisSwitch]:
    """Hysteresis on e = S2_est - S2_pred; returns (tau_p, new switch)."""
    if s2_est < 0.0 or s2_pred < 0.0:
        raise ValueError("variances must be non-negative")
    e = s2_est - s2_pred
    if e >= switch.k_s2:
        on = True
    elif e <= switch.k_s1:
        on = False
    else:
        on = switch.on
    return on, replace(switch, on=on)


def understeer_gradient(fzf0: float, fzr0: float,
                        c_alpha_f: float, c_alpha_r: float) -> float:
    """K_us from static axle loads and cornering stiffnesses.

    Negative values mean oversteer (a finite critical speed exists).
    """
    if c_alpha_f <= 0.0 or c_alpha_r <= 0.0:
        raise ValueError("cornering stiffnesses must be positive")
    return fzf0 / c_alpha_f - fzr0 / c_alpha_r


def cornering_stiffness(mu: float, fz: float, fx: float, c1: float,
                        c2: float, fz0: float, n: float) -> float:
    """Cornering stiffness reduced by longitudinal force utilisation.

    A fully saturated tyre (|fx| >= mu * fz) has no lateral stiffness
    left; the result is floored at zero.
    """
    if not 2.0 <= n <= 8.0:
        raise ValueError("exponent n must lie in [2, 8]")
    cap = mu * fz
    if cap <= 0.0:
        return 0.0
    ratio = abs(fx) / cap
    if ratio >= 1.0:
        return 0.0
    phi = (1.0 - ratio ** n) ** (1.0 / n)
    c_load = c1 * c2 * fz0 * math.sin(2.0 * math.atan(fz / (c2 * fz0)))
    return max(phi * (c_load - 0.5 * cap) + 0.5 * (cap - abs(fx)), 0.0)


def critical_speed(k_us: float, params: VehicleParams) -> float:
    """Oversteer critical speed; infinite for K_us >= 0."""
    if k_us >= 0.0:
        return math.inf
    return math.sqrt(params.g * params.wheelbase / abs(k_us))


def stability_gate(v_pred: float, k_us: float, params: VehicleParams,
                   safety: float = 1.0) -> tuple[bool, float]:
    """tau_s = predicted speed below (safety * critical speed)."""
    v_crit = critical_speed(k_us, params)
    return v_pred < safety * v_crit, v_crit


def availability_gate(a_ref: float, d_hat: float,
                      loads: tuple[float, float], params: VehicleParams,
                      margin: float = 0.05, explore_sign: float = 1.0,
                      rule: str = "prose") -> bool:
    """Can the front cover the driver demand while the rear explores?

    "prose" implements the feasibility reading: the driver's total force
    demand minus the rear exploration force must fit inside the front
    availability with a safety margin.  "literal" keeps the printed
    inequality (m/2 * a_ref >= F*_f + F*_r) for comparison runs.
    """
    fzf, fzr = loads
    if fzf <= 0.0 or fzr <= 0.0:
        raise ValueError("axle loads must be positive")
    if rule == "literal":
        return 0.5 * params.m * a_ref >= d_hat * fzf + d_hat * fzr
    if rule != "prose":
        raise ValueError(f"unknown availability rule: {rule}")
    demand_front = abs(params.m * a_ref - explore_sign * d_hat * fzr)
    return demand_front <= d_hat * fzf * (1.0 - margin)


def blend(u_tval: tuple[float, float], u_driver: tuple[float, float],
          act: ActivationState) -> tuple[float, float]:
    """Linear per-axle mix: w1 * TVAL + (1 - w1) * driver."""
    w1 = act.w1
    return (w1 * u_tval[0] + (1.0 - w1) * u_driver[0],
            w1 * u_tval[1] + (1.0 - w1) * u_driver[1])


def update_request(act: ActivationState, tau_r: bool) -> ActivationState:
    """Step the bounded request counter toward tau_r."""
    f = act.f + (1 if tau_r else -1)
    f = min(max(f, 0), act.delta_p)
    return replace(act, f=f, tau_r=tau_r)


@dataclass(frozen=True)
class RegulationConfig:
    k_s1: float
    k_s2: float
    delta_p: int = 100            # ticks (1 s at 100 Hz)
    availability_margin: float = 0.05
    availability_rule: str = "prose"
    explore_sign: float = 1.0
    brake_explore_below: float = -0.5  # m/s^2; prefer the braking peak here
    stability_safety: float = 0.85
    saturation_cap: float = 0.04  # stiffness evaluated at (1 - cap) * peak
    c1: float = 8.0
    c2: float = 1.33
    n_exp: float = 4.0


@dataclass(frozen=True)
class GateDecision:
    tau_p: bool
    tau_s: bool
    tau_a: bool
    tau_r: bool
    w1: float
    k_us: float
    v_crit: float
    explore_sign: float


class Regulator:
    """Per-tick regulation state machine (hysteresis + request counter)."""

    def __init__(self, cfg: RegulationConfig, params: VehicleParams):
        self.cfg = cfg
        self.params = params
        self.switch = HysteresisSwitch(k_s1=cfg.k_s1, k_s2=cfg.k_s2)
        self.act = ActivationState(delta_p=cfg.delta_p)
        self.explore_sign = cfg.explore_sign
        self.a_ref_ema = 0.0  # gates act on the demand trend, not tick noise
        self.s2_est_ema = 0.0
        self.s2_pred_ema = 0.0
        fzf0, fzr0 = static_loads(params)
        self._fzf0 = fzf0
        self._fzr0 = fzr0

    def engaged_understeer(self, d_hat: float, a_ref: float,
                           loads: tuple[float, float], sign: float) -> float:
        """K_us the vehicle would have under full exploration.

        The rear runs at (1 - cap) of its believed peak; the front carries
        the remaining demand, capped likewise so the stiffness stays
        defined at saturation.
        """
        cfg = self.cfg
        fzf, fzr = loads
        cap = 1.0 - cfg.saturation_cap
        fx_rear = cap * d_hat * fzr
        fx_front = min(abs(self.params.m * a_ref - sign * d_hat * fzr),
                       cap * d_hat * fzf)
        c_ar = cornering_stiffness(d_hat, fzr, fx_rear, cfg.c1, cfg.c2,
                                   self._fzr0, cfg.n_exp)
        c_af = cornering_stiffness(d_hat, fzf, fx_front, cfg.c1, cfg.c2,
                                   self._fzf0, cfg.n_exp)
        if c_ar <= 0.0 or c_af <= 0.0:
            return -math.inf  # degenerate: treat as unstable
        return understeer_gradient(self._fzf0, self._fzr0, c_af, c_ar)

    def _availability(self, a_ref: float, d_hat: float,
                      loads: tuple[float, float], sign: float) -> bool:
        return availability_gate(a_ref, d_hat, loads, self.params,
                                 margin=self.cfg.availability_margin,
                                 explore_sign=sign,
                                 rule=self.cfg.availability_rule)

    def step(self, s2_est: float, s2_pred: float, v_pred: float,
             d_hat: float, a_ref: float,
             loads: tuple[float, float]) -> GateDecision:
        """Advance the gates one tick.

        The exploration direction is latched per engagement episode:
        while disengaged either force peak may satisfy availability (the
        one matching the driver's demand is preferred); once the request
        counter is live the latched direction must stay feasible.
        """
        cfg = self.cfg
        # the raw tick-level variance signals are spiky; the switch sees
        # a short moving average so single-tick dips cannot abort an
        # engagement that is still learning
        self.s2_est_ema += 0.1 * (s2_est - self.s2_est_ema)
        self.s2_pred_ema += 0.1 * (s2_pred - self.s2_pred_ema)
        tau_p, self.switch = energy_gate(self.s2_est_ema, self.s2_pred_ema,
                                         self.switch)
        self.a_ref_ema += 0.05 * (a_ref - self.a_ref_ema)
        a_trend = self.a_ref_ema

        if self.act.f == 0:
            preferred = (cfg.explore_sign if a_trend >= cfg.brake_explore_below
                         else -cfg.explore_sign)
            if self._availability(a_trend, d_hat, loads, preferred):
                tau_a = True
                self.explore_sign = preferred
            elif self._availability(a_trend, d_hat, loads, -preferred):
                tau_a = True
                self.explore_sign = -preferred
            else:
                tau_a = False
                self.explore_sign = preferred
        else:
            tau_a = self._availability(a_trend, d_hat, loads, self.explore_sign)

        k_us = self.engaged_understeer(d_hat, a_trend, loads, self.explore_sign)
        tau_s, v_crit = stability_gate(v_pred, k_us, self.params,
                                       safety=cfg.stability_safety)
        tau_r = tau_p and tau_s and tau_a
        self.act = update_request(
            replace(self.act, tau_p=tau_p, tau_s=tau_s, tau_a=tau_a), tau_r)
        return GateDecision(tau_p=tau_p, tau_s=tau_s, tau_a=tau_a,
                            tau_r=tau_r, w1=self.act.w1, k_us=k_us,
                            v_crit=v_crit, explore_sign=self.explore_sign)
