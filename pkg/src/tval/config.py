"""Scenario configuration: schema, defaults, YAML loading and validation.

A scenario file is a human-readable YAML mapping; every physical constant,
prior range, threshold and schedule lives here rather than in code.  The
bundled default reproduces the 400 s extra-urban drive-cycle experiment
with nine road-surface changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np
import yaml

from .belief import FilterConfig
from .dcee import ActionSet
from .driver_env import DriveCycle, SurfaceSchedule, SurfaceSegment
from .plant import VehicleParams
from .regulation import RegulationConfig
from .tyre import TyreParams

MODES = ("tval", "passive", "driver-only", "tv-always")


class ConfigError(ValueError):
    """Scenario file failed validation."""


@dataclass(frozen=True)
class ScenarioConfig:
    name: str
    seed: int
    mode: str
    duration: float
    initial_speed: float
    dt_plant: float
    dt_control: float
    vehicle: VehicleParams
    particles: int
    noise_cov: tuple[float, float, float]
    filter: FilterConfig
    actions: ActionSet
    regulation: RegulationConfig
    driver_kp: float
    driver_ki: float
    driver_t_leak: float
    a_limit_frac: float
    dcee_obs_samples: int
    drive_cycle: DriveCycle
    schedule: SurfaceSchedule

    @property
    def substeps(self) -> int:
        return round(self.dt_control / self.dt_plant)

    @property
    def n_ticks(self) -> int:
        return round(self.duration / self.dt_control)


def auto_hysteresis_thresholds(noise_cov, dt_control: float,
                               vehicle: VehicleParams) -> tuple[float, float]:
    """Default switch thresholds scaled to the measurement noise floor.

    The sensor-equivalent force noise is the rear-force uncertainty implied
    by wheel-speed noise through the spin dynamics over one controller tick,
    averaged over ~10 ticks; the set point is four times its variance.  The
    reset point sits at 3.5% of the set point: it must only be reachable by a
    fully converged belief, not by partial learning during the blend ramp,
    or the handover to full exploration never completes.
    """
    sigma_w = math.sqrt(noise_cov[2])
    sigma_f = vehicle.iw * math.sqrt(2.0) * sigma_w / (dt_control * vehicle.R)
    var_eff = sigma_f ** 2 / 10.0
    k_s2 = 4.0 * var_eff
    return 0.035 * k_s2, k_s2


def default_scenario_dict() -> dict:
    """The bundled 400 s drive-cycle scenario as plain data."""
    return {
        "name": "eudc-default",
        "seed": 1,
        "mode": "tval",
        "duration": 400.0,
        "initial_speed": 2.0,
        "dt_plant": 0.001,
        "dt_control": 0.01,
        "vehicle": {
            "m": 1600.0, "a": 1.344, "b": 1.456, "iyy": 2500.0, "iw": 1.2,
            "R": 0.31, "kf": 32000.0, "kr": 30000.0, "cf": 4500.0,
            "cr": 4200.0, "xg": 0.0, "zg": 0.20, "g": 9.81,
            "drag_cda": 0.0, "rho_air": 1.2,
        },
        "filter": {
            "particles": 10000,
            "noise_cov": [0.2, 0.5, 0.5],
            "prior": {
                "v": [0.5, 4.5], "omega_f": [2.0, 9.0], "omega_r": [2.0, 9.0],
                "B": [4.0, 21.0], "C": [1.3, 1.7], "D": [0.2, 1.6],
                "E": [-12.0, 0.99],
            },
            "box_widen": 0.10,
            "theta_jitter": 0.0003,
            "ess_fraction": 0.5,
            "kernel_scale": 0.5,
        },
        "actions": [0.0, 1.0, -1.0, 10.0, -10.0, 100.0, -100.0],
        "dcee_obs_samples": 1,
        "regulation": {
            "k_s1": "auto", "k_s2": "auto",
            "delta_p_seconds": 1.0,
            "availability_margin": 0.05,
            "availability_rule": "prose",
            "stability_safety": 0.85,
            "saturation_cap": 0.04,
            "c1": 8.0, "c2": 1.33, "n_exp": 4.0,
        },
        "driver": {"kp": 0.01, "ki": 15.0, "t_leak": 0.25,
                   "a_limit_frac": 0.95},
        "drive_cycle": "builtin:eudc",
        "offset_v": 2.0,
        # representative dry/wet/snow Magic Formula quadruples; shapes stay
        # inside the estimator's prior box so the peak is identifiable
        "surfaces": [
            {"t": 0.0, "label": "dry", "theta": [10.0, 1.65, 1.0, 0.9]},
            {"t": 40.0, "label": "wet", "theta": [12.0, 1.6, 0.6, 0.7]},
            {"t": 70.0, "label": "snow", "theta": [11.0, 1.5, 0.3, 0.6]},
            {"t": 100.0, "label": "dry", "theta": [10.0, 1.65, 1.0, 0.9]},
            {"t": 130.0, "label": "snow", "theta": [11.0, 1.5, 0.3, 0.6]},
            {"t": 165.0, "label": "dry", "theta": [10.0, 1.65, 1.0, 0.9]},
            {"t": 210.0, "label": "wet", "theta": [12.0, 1.6, 0.6, 0.7]},
            {"t": 245.0, "label": "snow", "theta": [11.0, 1.5, 0.3, 0.6]},
            {"t": 290.0, "label": "wet", "theta": [12.0, 1.6, 0.6, 0.7]},
            {"t": 355.0, "label": "dry", "theta": [10.0, 1.65, 1.0, 0.9]},
        ],
    }


def _resolve_drive_cycle(spec: str, base_dir: Path, offset_v: float) -> DriveCycle:
    if spec == "builtin:eudc":
        with resources.as_file(resources.files("tval").joinpath("data/eudc.csv")) as p:
            return DriveCycle.from_file(p, offset_v=offset_v)
    path = Path(spec)
    if not path.is_absolute():
        path = base_dir / path
    if not path.exists():
        raise ConfigError(f"drive cycle file not found: {path}")
    return DriveCycle.from_file(path, offset_v=offset_v)


def build_config(data: dict, base_dir: Path | None = None,
                 overrides: dict | None = None) -> ScenarioConfig:
    """Construct and validate a ScenarioConfig from plain data."""
    base_dir = base_dir or Path.cwd()
    data = dict(data)
    for key, value in (overrides or {}).items():
        if value is not None:
            data[key] = value

    mode = data.get("mode", "tval")
    if mode not in MODES:
        raise ConfigError(f"unrecognized mode {mode!r}; expected one of {MODES}")
    duration = float(data.get("duration", 400.0))
    if duration <= 0.0:
        raise ConfigError("duration must be positive")
    dt_plant = float(data.get("dt_plant", 0.001))
    dt_control = float(data.get("dt_control", 0.01))
    ratio = dt_control / dt_plant
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ConfigError("dt_control must be an integer multiple of dt_plant")

    try:
        vehicle = VehicleParams(**data.get("vehicle", {}))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad vehicle parameters: {exc}") from None

    fdata = dict(data.get("filter", {}))
    particles = int(fdata.pop("particles", 10000))
    noise_cov = tuple(float(x) for x in fdata.pop("noise_cov", (0.2, 0.5, 0.5)))
    if len(noise_cov) != 3 or any(c <= 0 for c in noise_cov):
        raise ConfigError("noise_cov must be three positive variances")
    prior = fdata.pop("prior", {})
    prior_kw = {}
    for yaml_key, field in (("v", "prior_v"), ("omega_f", "prior_wf"),
                            ("omega_r", "prior_wr"), ("B", "prior_B"),
                            ("C", "prior_C"), ("D", "prior_D"),
                            ("E", "prior_E")):
        if yaml_key in prior:
            lo, hi = prior[yaml_key]
            prior_kw[field] = (float(lo), float(hi))
    filter_cfg = FilterConfig(m=vehicle.m, iw=vehicle.iw, R=vehicle.R,
                              meas_sigma_w=math.sqrt(noise_cov[2]),
                              meas_sigma_v=math.sqrt(noise_cov[0]),
                              **prior_kw, **{k: float(v) for k, v in fdata.items()})

    actions = ActionSet(tuple(float(t) for t in
                              data.get("actions", ActionSet().increments)))

    rdata = dict(data.get("regulation", {}))
    auto_s1, auto_s2 = auto_hysteresis_thresholds(noise_cov, dt_control, vehicle)
    k_s1 = rdata.pop("k_s1", "auto")
    k_s2 = rdata.pop("k_s2", "auto")
    delta_p_seconds = float(rdata.pop("delta_p_seconds", 1.0))
    regulation = RegulationConfig(
        k_s1=auto_s1 if k_s1 == "auto" else float(k_s1),
        k_s2=auto_s2 if k_s2 == "auto" else float(k_s2),
        delta_p=max(round(delta_p_seconds / dt_control), 1),
        availability_margin=float(rdata.pop("availability_margin", 0.05)),
        availability_rule=str(rdata.pop("availability_rule", "prose")),
        explore_sign=float(rdata.pop("explore_sign", 1.0)),
        stability_safety=float(rdata.pop("stability_safety", 0.85)),
        saturation_cap=float(rdata.pop("saturation_cap", 0.04)),
        c1=float(rdata.pop("c1", 8.0)),
        c2=float(rdata.pop("c2", 1.33)),
        n_exp=float(rdata.pop("n_exp", 4.0)),
    )
    if rdata:
        raise ConfigError(f"unknown regulation keys: {sorted(rdata)}")

    ddata = data.get("driver", {})
    offset_v = float(data.get("offset_v", 2.0))
    cycle = _resolve_drive_cycle(str(data.get("drive_cycle", "builtin:eudc")),
                                 base_dir, offset_v)
    if cycle.duration < duration:
        raise ConfigError(f"drive cycle covers {cycle.duration} s "
                          f"but the scenario lasts {duration} s")

    segs = []
    for entry in data.get("surfaces", []):
        theta = TyreParams(*[float(x) for x in entry["theta"]])
        segs.append(SurfaceSegment(t_start=float(entry["t"]),
                                   label=str(entry["label"]), theta=theta,
                                   rho=str(entry.get("rho", entry["label"]))))
    try:
        schedule = SurfaceSchedule(segments=tuple(segs), duration=duration)
    except ValueError as exc:
        raise ConfigError(f"bad surface schedule: {exc}") from None

    return ScenarioConfig(
        name=str(data.get("name", "scenario")),
        seed=int(data.get("seed", 1)),
        mode=mode,
        duration=duration,
        initial_speed=float(data.get("initial_speed", 2.0)),
        dt_plant=dt_plant,
        dt_control=dt_control,
        vehicle=vehicle,
        particles=particles,
        noise_cov=noise_cov,  # type: ignore[arg-type]
        filter=filter_cfg,
        actions=actions,
        regulation=regulation,
        driver_kp=float(ddata.get("kp", 0.01)),
        driver_ki=float(ddata.get("ki", 15.0)),
        driver_t_leak=float(ddata.get("t_leak", 0.25)),
        a_limit_frac=float(ddata.get("a_limit_frac", 0.95)),
        dcee_obs_samples=int(data.get("dcee_obs_samples", 1)),
        drive_cycle=cycle,
        schedule=schedule,
    )


def load_scenario(path: str | Path | None = None,
                  overrides: dict | None = None) -> ScenarioConfig:
    """Load a scenario file; None or "default" loads the bundled default."""
    if path is None or str(path) == "default":
        return build_config(default_scenario_dict(), overrides=overrides)
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"scenario file not found: {path}")
    with open(path) as fh:
        data = yaml.safe_load(fh)
    if not isinstance(data, dict):
        raise ConfigError(f"scenario file {path} is not a mapping")
    return build_config(data, base_dir=path.parent, overrides=overrides)


def dump_default_scenario(path: str | Path) -> None:
    """Write the bundled default scenario to a YAML file."""
    with open(path, "w") as fh:
        yaml.safe_dump(default_scenario_dict(), fh, sort_keys=False)


def eudc_breakpoints() -> np.ndarray:
    """Simplified standard extra-urban cycle as (t s, v m/s) breakpoints."""
    kmh = [(0, 0), (20, 0), (61, 70), (111, 70), (119, 50), (188, 50),
           (201, 70), (251, 70), (286, 100), (316, 100), (336, 120),
           (346, 120), (380, 0), (400, 0)]
    return np.array([(t, v / 3.6) for t, v in kmh])
