"""Driver PI model and the scripted environment.

The driver tracks a drive-cycle speed reference with a PI law on the
measured body speed, producing an acceleration demand and an even
front/rear split of equivalent axle torques.  The environment is a
time-ordered schedule of road surfaces with a surface-sensor reading that
changes exactly when the surface does.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .plant import VehicleParams
from .tyre import TyreParams


class ScenarioEndError(IndexError):
    """Lookup past the end of the scripted scenario."""


@dataclass(frozen=True)
class DriveCycle:
    """Piecewise-linear speed reference (t in s, v in m/s)."""

    t: np.ndarray
    v: np.ndarray
    offset_v: float = 2.0  # m/s floor: the vehicle never idles at rest

    def __post_init__(self):
        if self.t.size != self.v.size or self.t.size < 2:
            raise ValueError("drive cycle needs matching t/v samples")
        if np.any(np.diff(self.t) <= 0.0):
            raise ValueError("drive cycle times must be strictly increasing")
        if np.any(self.v < 0.0):
            raise ValueError("drive cycle speeds must be non-negative")

    @property
    def duration(self) -> float:
        return float(self.t[-1])

    def reference(self, t: float) -> float:
        return max(float(np.interp(t, self.t, self.v)), self.offset_v)

    @classmethod
    def from_file(cls, path: str | Path, offset_v: float = 2.0) -> "DriveCycle":
        data = np.loadtxt(path, skiprows=1, ndmin=2)
        if data.shape[1] != 2:
            raise ValueError(f"expected two columns (t, v_ref) in {path}")
        return cls(t=data[:, 0].copy(), v=data[:, 1].copy(), offset_v=offset_v)


@dataclass(frozen=True)
class SurfaceSegment:
    t_start: float
    label: str
    theta: TyreParams
    rho: str  # surface-sensor reading, compared by equality only


@dataclass(frozen=True)
class SurfaceSchedule:
    segments: tuple[SurfaceSegment, ...]
    duration: float

    def __post_init__(self):
        if not self.segments or self.duration <= 0.0:
            raise ValueError("schedule needs segments and a positive duration")
        starts = [s.t_start for s in self.segments]
        if starts[0] != 0.0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError("segments must start at 0 and be strictly ordered")
        for prev, cur in zip(self.segments, self.segments[1:]):
            if prev.label == cur.label:
                raise ValueError("adjacent segments must change surface")
            if prev.rho == cur.rho:
                raise ValueError("sensor reading must change with the surface")

    @property
    def n_changes(self) -> int:
        return len(self.segments) - 1


def segment_at(t: float, schedule: SurfaceSchedule) -> SurfaceSegment:
    """Active segment at time t; segments are left-closed at boundaries."""
    if t < 0.0 or t >= schedule.duration:
        raise ScenarioEndError(f"t={t} outside the scripted scenario")
    starts = [s.t_start for s in schedule.segments]
    idx = int(np.searchsorted(starts, t, side="right")) - 1
    return schedule.segments[idx]


def environment_at(t: float, schedule: SurfaceSchedule) -> tuple[TyreParams, str]:
    """Active (ground-truth tyre parameters, sensor reading) at time t."""
    seg = segment_at(t, schedule)
    return seg.theta, seg.rho


@dataclass(frozen=True)
class DriverState:
    integral: float = 0.0  # m, integrated speed error


def driver_demand(v_ref: float, v_meas: float, pi_state: DriverState,
                  dt: float, params: VehicleParams, kp: float = 0.01,
                  ki: float = 15.0, a_limit: float = 9.81,
                  t_leak: float = 0.25,
                  ) -> tuple[float, tuple[float, float], DriverState]:
    """PI acceleration demand and even-split axle torques.

    The integrator leaks with time constant t_leak: a pure PI on the
    speed loop is undamped at these gains, while a slightly forgetful
    driver damps it without touching the gains (ramp tracking error stays
    below ramp_rate / (ki * t_leak)).  Anti-windup freezes the integrator
    while the demand is clamped at the surface-limit acceleration and the
    error would push it further.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    err = v_ref - v_meas
    integral = pi_state.integral + (err - pi_state.integral / t_leak) * dt
    a_raw = kp * err + ki * integral
    a_ref = min(max(a_raw, -a_limit), a_limit)
    if a_raw != a_ref and (a_raw > 0.0) == (err > 0.0):
        integral = pi_state.integral  # clamped and winding further: hold
    torque_axle = params.R * params.m * a_ref / 2.0
    return a_ref, (torque_axle, torque_axle), replace(pi_state, integral=integral)
