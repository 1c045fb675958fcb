"""Ground-truth longitudinal vehicle plant.

Half-car with left/right symmetry: body surge, heave and pitch plus four
wheel-spin states.  Suspension is linear spring/damper per axle and the
per-wheel vertical loads follow quasi-statically from the suspension
deviation forces plus the static share, so the load sum always balances
weight plus the inertial heave contribution.

Sign conventions: x forward, z up, pitch positive nose-up.  Heave z and
the suspension forces are measured as deviations from static equilibrium,
so the all-zero pose is an exact fixed point of the dynamics.

Wheel spin is integrated semi-implicitly in the tyre force (the force
slope is treated implicitly): a plain explicit Euler update of the spin
states is unstable at dt = 1 ms below roughly 3 m/s on high-friction
surfaces, while the stabilised update stays within the fixed-step
contract and is deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .tyre import (
    U_MIN,
    TyreParams,
    magic_formula,
    magic_formula_slope,
    slip_ratio_clamped,
)

# wheel index order used throughout
FL, FR, RL, RR = 0, 1, 2, 3

DT_MAX = 0.002  # s, upper bound of the supported plant step


class SimulationDiverged(RuntimeError):
    """Plant state left its plausible envelope (NaN or runaway value)."""


@dataclass(frozen=True)
class VehicleParams:
    """Vehicle constants; a and b are the COG-to-axle distances (a + b = l)."""

    m: float = 1600.0      # kg, total mass
    a: float = 1.344       # m, COG to front axle
    b: float = 1.456       # m, COG to rear axle
    iyy: float = 2500.0    # kg m^2, pitch inertia
    iw: float = 1.2        # kg m^2, wheel spin inertia (per wheel)
    R: float = 0.31        # m, wheel radius
    kf: float = 32000.0    # N/m, front axle suspension stiffness
    kr: float = 30000.0    # N/m, rear axle suspension stiffness
    cf: float = 4500.0     # N s/m, front axle damping
    cr: float = 4200.0     # N s/m, rear axle damping
    xg: float = 0.0        # m, longitudinal COG offset from the a/b datum
    zg: float = 0.20       # m, COG height above the wheel-centre plane
    g: float = 9.81        # m/s^2
    drag_cda: float = 0.0  # m^2, aerodynamic drag area (0 disables drag)
    rho_air: float = 1.2   # kg/m^3

    def __post_init__(self):
        positive = (self.m, self.a, self.b, self.iyy, self.iw, self.R,
                    self.kf, self.kr, self.cf, self.cr, self.g)
        if any(p <= 0.0 for p in positive):
            raise ValueError("vehicle masses, lengths, inertias, stiffnesses "
                             "and damping must be strictly positive")

    @property
    def wheelbase(self) -> float:
        return self.a + self.b

    @property
    def cog_height(self) -> float:
        """Moment arm of the longitudinal tyre forces about the COG."""
        return self.zg + self.R


@dataclass
class PlantState:
    """Full plant state; omega and Fz are per wheel [FL, FR, RL, RR]."""

    U: float                 # m/s, longitudinal body speed
    W: float = 0.0           # m/s, heave rate (up positive)
    q: float = 0.0           # rad/s, pitch rate (nose-up positive)
    phi: float = 0.0         # rad, pitch angle
    z: float = 0.0           # m, heave from static equilibrium
    omega: np.ndarray = field(default_factory=lambda: np.zeros(4))
    Fz: np.ndarray = field(default_factory=lambda: np.zeros(4))

    def copy(self) -> "PlantState":
        return replace(self, omega=self.omega.copy(), Fz=self.Fz.copy())


def static_loads(params: VehicleParams) -> tuple[float, float]:
    """Static per-axle vertical loads (front, rear); per wheel is half."""
    l = params.wheelbase
    return (params.m * params.g * params.b / l,
            params.m * params.g * params.a / l)


def initial_state(params: VehicleParams, U0: float) -> PlantState:
    """Free-rolling state at speed U0 with static loads."""
    fzf, fzr = static_loads(params)
    omega = np.full(4, U0 / params.R)
    fz = np.array([fzf / 2.0, fzf / 2.0, fzr / 2.0, fzr / 2.0])
    return PlantState(U=U0, omega=omega, Fz=fz)


def _suspension(state: PlantState, params: VehicleParams) -> tuple[float, float]:
    """Per-axle suspension deviation forces on the body, positive up."""
    zf = state.z + params.a * state.phi
    zr = state.z - params.b * state.phi
    zf_dot = state.W + params.a * state.q
    zr_dot = state.W - params.b * state.q
    sf = -params.kf * zf - params.cf * zf_dot
    sr = -params.kr * zr - params.cr * zr_dot
    return sf, sr


def wheel_loads(state: PlantState, params: VehicleParams) -> np.ndarray:
    """Quasi-static per-wheel vertical loads (never negative)."""
    fzf0, fzr0 = static_loads(params)
    sf, sr = _suspension(state, params)
    fzf = max(fzf0 + sf, 0.0) / 2.0
    fzr = max(fzr0 + sr, 0.0) / 2.0
    return np.array([fzf, fzf, fzr, fzr])


def plant_step(state: PlantState, torques, params: VehicleParams,
               surface: TyreParams, dt: float) -> PlantState:
    """Advance the plant one fixed step of dt seconds.

    torques: per-wheel applied torque [FL, FR, RL, RR] in N m.
    Raises SimulationDiverged when the state leaves its plausible envelope.
    """
    if not 0.0 < dt <= DT_MAX:
        raise ValueError(f"plant step must be in (0, {DT_MAX}] s, got {dt}")
    torques = np.asarray(torques, dtype=float)

    fz = wheel_loads(state, params)
    sf, sr = _suspension(state, params)

    kappa, informative = slip_ratio_clamped(state.omega, params.R, state.U)
    mu = magic_formula(kappa, *surface.as_tuple())
    fx = mu * fz

    # semi-implicit spin update: tyre-force slope taken implicitly where
    # it is stabilising (positive), explicit past the friction peak
    slope = np.where(informative,
                     magic_formula_slope(kappa, *surface.as_tuple()), 0.0)
    u_eff = max(state.U, U_MIN)
    gain = dt * params.R ** 2 * fz * np.maximum(slope, 0.0) / (params.iw * u_eff)
    omega_new = state.omega + dt * (torques - params.R * fx) / (params.iw * (1.0 + gain))
    # a braked wheel locks at zero spin rather than reversing
    omega_new = np.maximum(omega_new, 0.0)

    total_fx = float(np.sum(fx))
    drag = -0.5 * params.rho_air * params.drag_cda * state.U * abs(state.U)

    u_new = state.U + dt * (total_fx + drag) / params.m
    w_new = state.W + dt * (sf + sr) / params.m
    q_new = state.q + dt * (params.cog_height * total_fx
                            + params.a * sf - params.b * sr) / params.iyy
    z_new = state.z + dt * state.W
    phi_new = state.phi + dt * state.q

    new = PlantState(U=u_new, W=w_new, q=q_new, phi=phi_new, z=z_new,
                     omega=omega_new, Fz=fz)
    _check_envelope(new)
    return new


def _check_envelope(state: PlantState) -> None:
    values = np.array([state.U, state.W, state.q, state.phi, state.z])
    if not (np.all(np.isfinite(values)) and np.all(np.isfinite(state.omega))):
        raise SimulationDiverged(f"non-finite plant state: {state}")
    if abs(state.U) > 150.0 or np.max(np.abs(state.omega)) > 2000.0 \
            or abs(state.z) > 1.0 or abs(state.phi) > 0.5:
        raise SimulationDiverged(
            f"plant state outside envelope: U={state.U:.2f} m/s, "
            f"max|omega|={np.max(np.abs(state.omega)):.1f} rad/s, "
            f"z={state.z:.3f} m, phi={state.phi:.3f} rad")
