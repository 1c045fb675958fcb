"""Closed-loop scenario runner.

One controller tick (default 10 ms) runs: environment lookup, noisy
measurement, belief predict/update/retrogressive-resample, uncertainty
query, regulation gates, torque selection (when requested), blending and
a fixed number of plant substeps (default 10 at 1 ms).  Every tick emits
one telemetry record; a run ends with a summary of estimation errors per
surface segment, energy totals and the constraint-denial log.

Random streams: the belief owns `seed`, the sensor noise uses the
substream (seed, 101) and each torque-candidate evaluation at tick k uses
(seed, k, candidate).  Identical config and seed reproduce the telemetry
byte for byte.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import belief as bel
from .belief import Measurement
from .config import ScenarioConfig
from .dcee import select_action
from .driver_env import DriverState, driver_demand, segment_at
from .plant import (FL, FR, RL, RR, SimulationDiverged, initial_state,
                    plant_step, static_loads)
from .regulation import GateDecision, Regulator
from .tyre import magic_formula, slip_ratio_clamped

V_CRIT_CAP = 999.0  # telemetry stand-in for an unbounded critical speed

TELEMETRY_COLUMNS = [
    "t", "v_ref", "v_true", "v_meas", "wf_true", "wf_meas", "wr_true",
    "wr_meas", "kappa_f", "kappa_r", "mu_f_true", "mu_r_true", "mu_f_est",
    "mu_r_est", "B_est", "C_est", "D_est", "E_est", "B_std", "C_std",
    "D_std", "E_std", "D_true", "s2_est", "s2_pred", "tau_p", "tau_s",
    "tau_a", "tau_r", "w1", "u_f_driver", "u_r_driver", "u_f_tval",
    "u_r_tval", "u_f_cmd", "u_r_cmd", "fz_fl", "fz_fr", "fz_rl", "fz_rr",
    "fx_fl", "fx_fr", "fx_rl", "fx_rr", "a_ref", "v_pred", "v_crit",
    "surface", "power_w", "power_regen_w", "energy_j", "energy_regen_j",
]


class EnergyMeter:
    """Per-wheel power accounting with optional regenerative credit.

    Positive wheel power always costs; negative wheel power is credited
    at efficiency eta in the regenerative tally and discarded otherwise.
    """

    def __init__(self, eta_regen: float = 0.7):
        if not 0.0 <= eta_regen <= 1.0:
            raise ValueError("regeneration efficiency must be in [0, 1]")
        self.eta = eta_regen
        self.energy = 0.0
        self.energy_regen = 0.0

    def add(self, wheel_power: np.ndarray, dt: float) -> None:
        pos = float(np.sum(np.maximum(wheel_power, 0.0)))
        neg = float(np.sum(np.minimum(wheel_power, 0.0)))
        self.energy += pos * dt
        self.energy_regen += (pos + self.eta * neg) * dt


def wheel_power(torques_wheel: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """Instantaneous per-wheel power T_j * omega_j."""
    return np.asarray(torques_wheel) * np.asarray(omega)


@dataclass
class RunResult:
    config: ScenarioConfig
    telemetry: dict[str, np.ndarray]
    summary: dict
    diverged: bool = False
    error: str | None = None
    dcee_calls: int = 0
    telemetry_path: Path | None = None
    summary_path: Path | None = None


_INACTIVE_GATES = GateDecision(tau_p=False, tau_s=False, tau_a=False,
                               tau_r=False, w1=0.0, k_us=0.0,
                               v_crit=math.inf, explore_sign=1.0)


def run_scenario(cfg: ScenarioConfig, out_dir: str | Path | None = None,
                 write_telemetry: bool = True,
                 eta_regen: float = 0.7) -> RunResult:
    """Execute the closed loop and return telemetry plus summary."""
    params = cfg.vehicle
    state = initial_state(params, cfg.initial_speed)
    belief = bel.init_prior(cfg.seed, cfg.particles, cfg.filter)
    sensor_rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 101)))
    regulator = Regulator(cfg.regulation, params) if cfg.mode == "tval" else None
    pi_state = DriverState()

    dt_c = cfg.dt_control
    dt_p = cfg.dt_plant
    substeps = cfg.substeps
    sigma = np.sqrt(np.array(cfg.noise_cov))
    meter = EnergyMeter(eta_regen)

    u_applied = (0.0, 0.0)      # blended axle torques from the last tick
    u_tval_rear = 0.0           # optimizer's rear-axle torque memory
    loads_wheel_prev = (state.Fz[FL], state.Fz[RL])
    loads_static = static_loads(params)
    rho_prev = segment_at(0.0, cfg.schedule).rho

    rows: list[list] = []
    dcee_calls = 0
    diverged = False
    error = None

    for k in range(cfg.n_ticks):
        t = k * dt_c
        segment = segment_at(t, cfg.schedule)
        theta_true, rho = segment.theta, segment.rho

        wf_true = 0.5 * (state.omega[FL] + state.omega[FR])
        wr_true = 0.5 * (state.omega[RL] + state.omega[RR])
        noise = sigma * sensor_rng.standard_normal(3)
        meas = Measurement(y_v=state.U + noise[0], y_wf=wf_true + noise[1],
                           y_wr=wr_true + noise[2], noise_cov=cfg.noise_cov)

        if k > 0:
            belief = bel.predict(belief,
                                 (u_applied[0] / 2.0, u_applied[1] / 2.0),
                                 loads_wheel_prev, dt_c)
        belief = bel.update(belief, meas)
        belief = bel.retrogressive_resample(belief, rho, rho_prev)

        est = bel.expectation(belief)
        stds = bel.theta_std(belief)
        mu_f_est, mu_r_est = bel.current_mu(belief)
        fzf_axle = float(state.Fz[FL] + state.Fz[FR])
        fzr_axle = float(state.Fz[RL] + state.Fz[RR])
        s2_est, s2_pred = bel.uncertainty(belief, fzr_axle / 2.0,
                                          u_applied[1] / 2.0, dt_c)

        # the driver tracks the speedometer (body speed), not the noisy
        # GNSS feed that drives the estimator
        v_ref = cfg.drive_cycle.reference(t)
        a_limit = cfg.a_limit_frac * theta_true.D * params.g
        a_ref, u_driver, pi_state = driver_demand(
            v_ref, state.U, pi_state, dt_c, params,
            kp=cfg.driver_kp, ki=cfg.driver_ki, a_limit=a_limit,
            t_leak=cfg.driver_t_leak)

        v_pred = est.v + dt_c * a_ref
        if regulator is not None:
            # the gates act on the static load split: feeding them the
            # pitching transient loads only makes them flutter
            gates = regulator.step(s2_est, s2_pred, v_pred, est.theta.D,
                                   a_ref, loads_static)
            if regulator.act.f > 0:
                cmd = select_action(belief, u_tval_rear, a_ref,
                                    (fzf_axle, fzr_axle), cfg.actions,
                                    params, dt_c, noise_key=(cfg.seed, k),
                                    noise_cov=cfg.noise_cov,
                                    n_obs_samples=cfg.dcee_obs_samples,
                                    explore_sign=gates.explore_sign,
                                    blend_weight=gates.w1)
                u_tval = (cmd.u_front, cmd.u_rear)
                u_tval_rear = cmd.u_rear
                dcee_calls += 1
            else:
                u_tval = u_driver       # bumpless: track the driver while off
                u_tval_rear = u_driver[1]
            w1 = gates.w1
            u_cmd = (w1 * u_tval[0] + (1.0 - w1) * u_driver[0],
                     w1 * u_tval[1] + (1.0 - w1) * u_driver[1])
        else:
            gates = _INACTIVE_GATES
            u_tval = u_driver
            u_tval_rear = u_driver[1]
            u_cmd = u_driver

        torques_wheel = np.array([u_cmd[0] / 2.0, u_cmd[0] / 2.0,
                                  u_cmd[1] / 2.0, u_cmd[1] / 2.0])
        e_before = meter.energy
        er_before = meter.energy_regen
        try:
            for _ in range(substeps):
                state = plant_step(state, torques_wheel, params,
                                   theta_true, dt_p)
                if cfg.mode == "tv-always":
                    bound = params.R * theta_true.D * state.Fz
                    meter.add(wheel_power(bound, np.abs(state.omega)), dt_p)
                else:
                    meter.add(wheel_power(torques_wheel, state.omega), dt_p)
        except SimulationDiverged as exc:
            diverged = True
            error = str(exc)

        kappa, _ = slip_ratio_clamped(state.omega, params.R, state.U)
        mu_true = magic_formula(kappa, *theta_true.as_tuple())
        fx = mu_true * state.Fz
        power = (meter.energy - e_before) / dt_c
        power_regen = (meter.energy_regen - er_before) / dt_c

        rows.append([
            t, v_ref, state.U, meas.y_v, wf_true, meas.y_wf, wr_true,
            meas.y_wr, 0.5 * (kappa[FL] + kappa[FR]),
            0.5 * (kappa[RL] + kappa[RR]),
            0.5 * (mu_true[FL] + mu_true[FR]),
            0.5 * (mu_true[RL] + mu_true[RR]), mu_f_est, mu_r_est,
            est.theta.B, est.theta.C, est.theta.D, est.theta.E,
            stds["B"], stds["C"], stds["D"], stds["E"], theta_true.D,
            s2_est, s2_pred, int(gates.tau_p), int(gates.tau_s),
            int(gates.tau_a), int(gates.tau_r), gates.w1, u_driver[0],
            u_driver[1], u_tval[0], u_tval[1], u_cmd[0], u_cmd[1],
            state.Fz[FL], state.Fz[FR], state.Fz[RL], state.Fz[RR],
            fx[FL], fx[FR], fx[RL], fx[RR], a_ref, v_pred,
            min(gates.v_crit, V_CRIT_CAP), segment.label, power,
            power_regen, meter.energy, meter.energy_regen,
        ])

        if diverged:
            break
        u_applied = u_cmd
        loads_wheel_prev = (float(state.Fz[FL]), float(state.Fz[RL]))
        rho_prev = rho

    telemetry = _columns_from_rows(rows)
    _validate_telemetry(telemetry)
    summary = build_summary(cfg, telemetry, meter, dcee_calls,
                            diverged, error)
    result = RunResult(config=cfg, telemetry=telemetry, summary=summary,
                       diverged=diverged, error=error, dcee_calls=dcee_calls)
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if write_telemetry:
            result.telemetry_path = out / "telemetry.csv"
            write_telemetry_csv(result.telemetry_path, telemetry)
        result.summary_path = out / "summary.txt"
        write_summary(result.summary_path, summary)
    return result


def _columns_from_rows(rows: list[list]) -> dict[str, np.ndarray]:
    cols: dict[str, np.ndarray] = {}
    for j, name in enumerate(TELEMETRY_COLUMNS):
        values = [row[j] for row in rows]
        if name == "surface":
            cols[name] = np.array(values, dtype=object)
        else:
            cols[name] = np.array(values, dtype=float)
    return cols


def _validate_telemetry(telemetry: dict[str, np.ndarray]) -> None:
    for name, col in telemetry.items():
        if name == "surface":
            continue
        if not np.all(np.isfinite(col)):
            raise AssertionError(f"non-finite telemetry in column {name}")


def write_telemetry_csv(path: Path, telemetry: dict[str, np.ndarray]) -> None:
    n = telemetry["t"].size
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(TELEMETRY_COLUMNS)
        columns = [telemetry[c] for c in TELEMETRY_COLUMNS]
        for i in range(n):
            writer.writerow([col[i] if isinstance(col[i], str)
                             else repr(float(col[i])) for col in columns])


def load_telemetry_csv(path: str | Path) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        raw = list(zip(*reader))
    cols: dict[str, np.ndarray] = {}
    for name, values in zip(header, raw):
        if name == "surface":
            cols[name] = np.array(values, dtype=object)
        else:
            cols[name] = np.array(values, dtype=float)
    return cols


def engagement_episodes(telemetry: dict[str, np.ndarray],
                        dt: float) -> list[dict]:
    """Spans where the blend weight is above zero, with full-on timing."""
    w1 = telemetry["w1"]
    t = telemetry["t"]
    episodes = []
    active = w1 > 0.0
    i = 0
    n = w1.size
    while i < n:
        if not active[i]:
            i += 1
            continue
        j = i
        while j < n and active[j]:
            j += 1
        span = slice(i, j)
        full = np.nonzero(w1[span] >= 1.0)[0]
        episodes.append({
            "t_start": float(t[i]),
            "t_end": float(t[j - 1] + dt),
            "t_full": float(t[i + full[0]]) if full.size else None,
            "d_err_end": float(abs(telemetry["D_est"][j - 1]
                                   - telemetry["D_true"][j - 1])),
        })
        i = j
    return episodes


def build_summary(cfg: ScenarioConfig, telemetry: dict[str, np.ndarray],
                  meter: EnergyMeter, dcee_calls: int, diverged: bool,
                  error: str | None) -> dict:
    t = telemetry["t"]
    n = t.size
    duration = n * cfg.dt_control
    summary: dict = {
        "name": cfg.name, "mode": cfg.mode, "seed": cfg.seed,
        "ticks": n, "duration_s": duration,
        "diverged": diverged, "error": error or "",
        "dcee_calls": dcee_calls,
        "energy_j": meter.energy, "energy_regen_j": meter.energy_regen,
        "mean_power_w": meter.energy / duration if duration else 0.0,
        "mean_power_regen_w": (meter.energy_regen / duration
                               if duration else 0.0),
        "speed_rmse": float(np.sqrt(np.mean(
            (telemetry["v_true"] - telemetry["v_ref"]) ** 2))) if n else 0.0,
    }

    segments = []
    for seg in cfg.schedule.segments:
        mask = (t >= seg.t_start)
        nxt = [s.t_start for s in cfg.schedule.segments if s.t_start > seg.t_start]
        t_end = min(nxt) if nxt else cfg.duration
        mask &= (t < t_end)
        if not np.any(mask):
            continue
        idx = np.nonzero(mask)[0]
        last = idx[-1]
        fully = bool(np.any(telemetry["w1"][idx] >= 1.0))
        segments.append({
            "label": seg.label, "t_start": seg.t_start, "t_end": t_end,
            "d_true": seg.theta.D,
            "d_est_end": float(telemetry["D_est"][last]),
            "d_abs_err_end": float(abs(telemetry["D_est"][last] - seg.theta.D)),
            "fully_engaged": fully,
        })
    summary["segments"] = segments
    summary["episodes"] = engagement_episodes(telemetry, cfg.dt_control)

    denials = []
    blocked = (telemetry["tau_p"] > 0) & (telemetry["tau_r"] == 0)
    i = 0
    while i < n:
        if not blocked[i]:
            i += 1
            continue
        j = i
        while j < n and blocked[j]:
            j += 1
        gate = []
        if np.any(telemetry["tau_s"][i:j] == 0):
            gate.append("stability")
        if np.any(telemetry["tau_a"][i:j] == 0):
            gate.append("availability")
        denials.append({"t_start": float(t[i]), "t_end": float(t[j - 1]),
                        "gates": "+".join(gate) or "none"})
        i = j
    summary["denials"] = denials
    return summary


def write_summary(path: Path, summary: dict) -> None:
    with open(path, "w") as fh:
        for key in ("name", "mode", "seed", "ticks", "duration_s",
                    "diverged", "error", "dcee_calls", "energy_j",
                    "energy_regen_j", "mean_power_w", "mean_power_regen_w",
                    "speed_rmse"):
            fh.write(f"{key} = {summary[key]}\n")
        for i, seg in enumerate(summary["segments"]):
            fh.write(f"segment[{i}] = label={seg['label']} "
                     f"t=[{seg['t_start']:.1f},{seg['t_end']:.1f}) "
                     f"D_true={seg['d_true']:.3f} "
                     f"D_est_end={seg['d_est_end']:.4f} "
                     f"abs_err={seg['d_abs_err_end']:.4f} "
                     f"fully_engaged={seg['fully_engaged']}\n")
        for i, ep in enumerate(summary["episodes"]):
            t_full = "never" if ep["t_full"] is None else f"{ep['t_full']:.2f}"
            fh.write(f"episode[{i}] = t=[{ep['t_start']:.2f},{ep['t_end']:.2f}] "
                     f"t_full={t_full} d_err_end={ep['d_err_end']:.4f}\n")
        for i, d in enumerate(summary["denials"]):
            fh.write(f"denial[{i}] = t=[{d['t_start']:.2f},{d['t_end']:.2f}] "
                     f"gates={d['gates']}\n")
