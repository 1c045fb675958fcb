"""Regularized particle filter over the augmented vehicle state.

The augmented state per particle is (v, omega_f, omega_r, B, C, D, E):
the 3-DOF longitudinal states plus the Magic Formula parameters, which are
modelled as a (jittered) random walk.  Wheel quantities follow the
axle-symmetric convention: one representative wheel per axle, so torques
and vertical loads passed in here are per wheel and the body update counts
each axle force twice.

All randomness flows through the generator owned by the Belief, with a
fixed draw order inside every operation, so a given seed and input stream
reproduces the belief trajectory exactly.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .tyre import TyreParams, magic_formula, slip_ratio_clamped

THETA_COORDS = ("B", "C", "D", "E")

# Particle curves need E strictly below 1 for the friction peak to be
# reachable at finite slip; the prior upper edge is capped accordingly.
E_CAP = 0.99


@dataclass(frozen=True)
class FilterConfig:
    """Prior ranges, vehicle constants and filter tuning."""

    prior_v: tuple[float, float] = (0.5, 4.5)
    prior_wf: tuple[float, float] = (2.0, 9.0)
    prior_wr: tuple[float, float] = (2.0, 9.0)
    prior_B: tuple[float, float] = (4.0, 21.0)
    prior_C: tuple[float, float] = (1.3, 1.7)
    prior_D: tuple[float, float] = (0.2, 1.6)
    prior_E: tuple[float, float] = (-12.0, E_CAP)

    m: float = 1600.0   # kg
    iw: float = 1.2     # kg m^2
    R: float = 0.31     # m

    box_widen: float = 0.10        # clamp box margin, fraction of prior range
    theta_jitter: float = 0.0003   # random-walk step, fraction of prior range
    ess_fraction: float = 0.5      # resample when ESS drops below this * n
    kernel_scale: float = 0.5      # Silverman multiplier, parameter block
    kernel_scale_state: float = 0.05  # Silverman multiplier, state block
    prior_mix: float = 0.01        # fraction reseeded from the prior per
                                   # resample, so support never dies
    prior_mix_weight: float = 0.01  # initial weight of reseeded particles
                                   # relative to uniform

    # per-step state process noise: the 3-DOF prediction is not exact
    # (discretisation, load transfer, stale torques), and pretending it is
    # makes the slip-to-force association overconfident; informative
    # (gate-open) axles carry the full noise, quiet ones just enough to
    # keep tracking smooth
    process_noise_v: float = 0.01        # m/s per predict, gate open
    process_noise_w: float = 0.10        # rad/s per predict, gate open
    process_noise_v_quiet: float = 0.003
    process_noise_w_quiet: float = 0.02

    # the filter's assumed measurement covariance is inflated by this
    # factor: at 100 Hz consecutive residuals share model error, and
    # treating them as independent overcounts information and churns the
    # resampler (the simulated sensors keep the nominal covariance)
    likelihood_temper: float = 4.0

    # slip observability gate: an axle only attributes per-particle tyre
    # forces when its (smoothed) mean slip exceeds what measurement noise
    # can fake at the current speed; below that the sample is
    # uninformative and the axle is taken as torque-balanced free rolling
    meas_sigma_w: float = 0.5 ** 0.5   # rad/s, wheel-speed noise std
    meas_sigma_v: float = 0.2 ** 0.5   # m/s, body-speed noise std
    slip_gate_scale: float = 1.4
    slip_floor_min: float = 0.055      # slip below this is never informative
    gate_ema_alpha: float = 0.3        # smoothing of the gate slip signal
    gate_persistence: int = 3          # ticks above floor before opening
    v_gate_min: float = 9.0            # m/s, no slip information below this
    kappa_engage_ref: float = 0.15     # typical peak-region slip magnitude

    def slip_floor(self, v_mean: float) -> float:
        noise = math.hypot(self.R * self.meas_sigma_w, self.meas_sigma_v)
        rel = self.slip_gate_scale * noise / max(v_mean, 0.5)
        return max(rel, self.slip_floor_min)

    def slip_observable(self, v_mean: float) -> bool:
        """Could peak-region slip be told apart from noise at this speed?"""
        return (v_mean > self.v_gate_min
                and self.slip_floor(v_mean) < self.kappa_engage_ref)

    def theta_ranges(self) -> dict[str, tuple[float, float]]:
        return {"B": self.prior_B, "C": self.prior_C,
                "D": self.prior_D, "E": self.prior_E}

    def theta_box(self) -> dict[str, tuple[float, float]]:
        """Prior ranges widened so live particles are not clipped at the edge."""
        box = {}
        for name, (lo, hi) in self.theta_ranges().items():
            margin = self.box_widen * (hi - lo)
            box[name] = (lo - margin, hi + margin)
        b = box["B"]
        box["B"] = (max(b[0], 1e-3), b[1])
        e = box["E"]
        box["E"] = (e[0], min(e[1], E_CAP))
        return box


@dataclass(frozen=True)
class Measurement:
    """Noisy (GNSS speed, per-axle wheel speed) observation."""

    y_v: float
    y_wf: float
    y_wr: float
    noise_cov: tuple[float, float, float] = (0.2, 0.5, 0.5)

    def __post_init__(self):
        if any(c <= 0.0 for c in self.noise_cov):
            raise ValueError("measurement covariance entries must be positive")


@dataclass(frozen=True)
class AugmentedState:
    v: float
    omega_f: float
    omega_r: float
    theta: TyreParams


@dataclass
class Belief:
    """Weighted particle set plus its own random stream."""

    v: np.ndarray
    wf: np.ndarray
    wr: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray
    E: np.ndarray
    weights: np.ndarray
    config: FilterConfig
    rng: np.random.Generator
    kappa_ema: np.ndarray = field(default_factory=lambda: np.zeros(2))
    gate_count: np.ndarray = field(
        default_factory=lambda: np.zeros(2, dtype=int))
    clamped_last_predict: int = 0
    recovery_resamples: int = 0

    @property
    def n(self) -> int:
        return self.v.size

    def theta_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        return self.B, self.C, self.D, self.E

    def ess(self) -> float:
        return 1.0 / float(np.sum(self.weights ** 2))

    def gate_open(self) -> tuple[bool, bool]:
        """Per-axle slip informativeness (front, rear)."""
        p = self.config.gate_persistence
        return bool(self.gate_count[0] >= p), bool(self.gate_count[1] >= p)


def _uniform(rng, lo, hi, n):
    return lo + (hi - lo) * rng.random(n)


def init_prior(seed: int, n: int, config: FilterConfig | None = None) -> Belief:
    """Draw n particles uniformly from the prior ranges, uniform weights."""
    if n < 100:
        raise ValueError(f"particle count {n} too small for a usable filter")
    cfg = config or FilterConfig()
    rng = np.random.default_rng(seed)
    v = _uniform(rng, *cfg.prior_v, n)
    wf = _uniform(rng, *cfg.prior_wf, n)
    wr = _uniform(rng, *cfg.prior_wr, n)
    b = _uniform(rng, *cfg.prior_B, n)
    c = _uniform(rng, *cfg.prior_C, n)
    d = _uniform(rng, *cfg.prior_D, n)
    e = _uniform(rng, cfg.prior_E[0], min(cfg.prior_E[1], E_CAP), n)
    weights = np.full(n, 1.0 / n)
    return Belief(v=v, wf=wf, wr=wr, B=b, C=c, D=d, E=e,
                  weights=weights, config=cfg, rng=rng)


def mean_slip(belief: Belief) -> tuple[float, float, float]:
    """(front slip, rear slip, body speed) of the weighted-mean state."""
    w = belief.weights
    v = float(np.dot(w, belief.v))
    wf = float(np.dot(w, belief.wf))
    wr = float(np.dot(w, belief.wr))
    kf, _ = slip_ratio_clamped(wf, belief.config.R, v)
    kr, _ = slip_ratio_clamped(wr, belief.config.R, v)
    return float(kf), float(kr), v


def particle_forces(belief: Belief, torques: tuple[float, float],
                    loads: tuple[float, float]):
    """Per-particle per-wheel tyre forces and per-axle informativeness.

    Per-particle slip only carries information once the smoothed measured
    slip of an axle has cleared the observability floor for a few ticks;
    an uninformative axle is modelled as torque-balanced free rolling
    (F = u / R, identical across particles) so noise-born slip cannot
    masquerade as a friction measurement.  Returns (F_front, F_rear,
    front_informative, rear_informative); forces are per wheel.
    """
    cfg = belief.config
    fzf, fzr = loads
    uf, ur = torques
    open_f, open_r = belief.gate_open()
    if open_f:
        kf, _ = slip_ratio_clamped(belief.wf, cfg.R, belief.v)
        ff = magic_formula(kf, belief.B, belief.C, belief.D, belief.E) * fzf
    else:
        ff = np.full(belief.n, uf / cfg.R)
    if open_r:
        kr, _ = slip_ratio_clamped(belief.wr, cfg.R, belief.v)
        fr = magic_formula(kr, belief.B, belief.C, belief.D, belief.E) * fzr
    else:
        fr = np.full(belief.n, ur / cfg.R)
    return ff, fr, open_f, open_r


def predict(belief: Belief, torques: tuple[float, float],
            loads: tuple[float, float], dt: float) -> Belief:
    """Forward-Euler prediction through the 3-DOF model.

    torques/loads are per-wheel (representative wheel of each axle).
    Parameters follow a clamped random walk with small jitter; particles
    pushed outside the widened box are clamped and counted.
    """
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    cfg = belief.config
    uf, ur = torques
    ff, fr, open_f, open_r = particle_forces(belief, torques, loads)

    dv = (2.0 * dt / cfg.m) * (ff + fr)
    sig_v = cfg.process_noise_v if (open_f or open_r) else cfg.process_noise_v_quiet
    v_new = belief.v + dv + sig_v * belief.rng.standard_normal(belief.n)
    v_new = np.maximum(v_new, 0.0)
    # an uninformative axle free-rolls: its wheel speed follows the body
    if open_f:
        wf_new = belief.wf + (dt / cfg.iw) * (uf - ff * cfg.R)
    else:
        wf_new = belief.wf + dv / cfg.R
    if open_r:
        wr_new = belief.wr + (dt / cfg.iw) * (ur - fr * cfg.R)
    else:
        wr_new = belief.wr + dv / cfg.R
    noise_w = belief.rng.standard_normal((2, belief.n))
    sig_f = cfg.process_noise_w if open_f else cfg.process_noise_w_quiet
    sig_r = cfg.process_noise_w if open_r else cfg.process_noise_w_quiet
    wf_new = np.maximum(wf_new + sig_f * noise_w[0], 0.0)
    wr_new = np.maximum(wr_new + sig_r * noise_w[1], 0.0)

    box = cfg.theta_box()
    ranges = cfg.theta_ranges()
    theta_new = {}
    clamped = 0
    for name, arr in zip(THETA_COORDS, belief.theta_arrays()):
        lo, hi = ranges[name]
        step = cfg.theta_jitter * (hi - lo)
        jittered = arr + step * belief.rng.standard_normal(arr.size)
        blo, bhi = box[name]
        clipped = np.clip(jittered, blo, bhi)
        clamped += int(np.count_nonzero(clipped != jittered))
        theta_new[name] = clipped

    return replace(belief, v=v_new, wf=wf_new, wr=wr_new,
                   B=theta_new["B"], C=theta_new["C"],
                   D=theta_new["D"], E=theta_new["E"],
                   weights=belief.weights.copy(),
                   kappa_ema=belief.kappa_ema.copy(),
                   gate_count=belief.gate_count.copy(),
                   clamped_last_predict=clamped)


def _systematic_resample(weights: np.ndarray, rng) -> np.ndarray:
    n = weights.size
    positions = (np.arange(n) + rng.random()) / n
    cumulative = np.cumsum(weights)
    cumulative[-1] = 1.0
    return np.searchsorted(cumulative, positions)


_COORD_ORDER = ("v", "wf", "wr") + THETA_COORDS


def _regularize(belief: Belief, arrays: dict[str, np.ndarray],
                cov: np.ndarray,
                means: dict[str, float]) -> dict[str, np.ndarray]:
    """Variance-preserving kernel jitter shaped by the sample covariance.

    The kernel must diffuse along the posterior's own correlation
    structure: the identifiable combinations of the tyre parameters form
    a curved ridge, and an axis-aligned kernel steps off it and gets
    selected away, silently destroying parameter diversity.  Particles
    are shrunk toward the mean by exactly the factor the jitter would
    inflate them, so repeated resampling neither erodes nor inflates the
    marginals.  The parameter block uses the full Silverman bandwidth;
    the state block a much smaller one, since states are re-anchored by
    every measurement and a large state kernel only feeds churn.
    """
    n = belief.n
    d = len(_COORD_ORDER)
    h_opt = (4.0 / (n * (d + 2.0))) ** (1.0 / (d + 4.0))
    open_f, open_r = belief.gate_open()
    cfg = belief.config
    scales = np.array([
        cfg.kernel_scale if (open_f or open_r) else cfg.kernel_scale_state,
        cfg.kernel_scale if open_f else cfg.kernel_scale_state,
        cfg.kernel_scale if open_r else cfg.kernel_scale_state,
        cfg.kernel_scale, cfg.kernel_scale, cfg.kernel_scale,
        cfg.kernel_scale,
    ]) * h_opt
    try:
        root = np.linalg.cholesky(cov + 1e-12 * np.eye(d))
    except np.linalg.LinAlgError:
        root = np.diag(np.sqrt(np.maximum(np.diag(cov), 0.0)))
    step = (scales[:, None] * root) @ belief.rng.standard_normal((d, n))
    # while nothing is informative the marginals must be statistically
    # invariant under resampling (shrink exactly what the jitter adds);
    # during learning the tails carry the information, so no shrinkage
    if open_f or open_r:
        shrink = np.ones(d)
    else:
        shrink = np.sqrt(1.0 - np.minimum(scales ** 2, 1.0))
    out = {}
    for i, name in enumerate(_COORD_ORDER):
        m = means[name]
        out[name] = m + shrink[i] * (arrays[name] - m) + step[i]
    return out


def _weighted_cov(arrays: dict[str, np.ndarray], w: np.ndarray) -> np.ndarray:
    stack = np.stack([arrays[name] for name in _COORD_ORDER])
    mean = stack @ w
    centered = stack - mean[:, None]
    return (centered * w) @ centered.T


def _reset_theta_to_prior(belief: Belief) -> dict[str, np.ndarray]:
    cfg = belief.config
    draws = {}
    for name in THETA_COORDS:
        lo, hi = cfg.theta_ranges()[name]
        draws[name] = _uniform(belief.rng, lo, hi, belief.n)
    return draws


def _gate_signals(belief: Belief,
                  meas: Measurement) -> tuple[np.ndarray, np.ndarray]:
    """Smoothed measured slip per axle plus its above-floor streak."""
    cfg = belief.config
    kf, _ = slip_ratio_clamped(meas.y_wf, cfg.R, max(meas.y_v, 0.0))
    kr, _ = slip_ratio_clamped(meas.y_wr, cfg.R, max(meas.y_v, 0.0))
    alpha = cfg.gate_ema_alpha
    ema = ((1.0 - alpha) * belief.kappa_ema
           + alpha * np.array([float(kf), float(kr)]))
    _, _, v_mean = mean_slip(belief)
    if v_mean <= cfg.v_gate_min:
        floor = math.inf
    else:
        floor = cfg.slip_floor(v_mean)
    above = np.abs(ema) > floor
    count = np.where(above, belief.gate_count + 1, 0)
    return ema, count


def update(belief: Belief, meas: Measurement) -> Belief:
    """Gaussian-likelihood reweighting, with systematic resampling and a
    regularization kernel when the effective sample size collapses.

    A total likelihood underflow (no particle anywhere near the data)
    triggers a recovery redraw of the parameter block from the prior
    instead of a crash.
    """
    temper = belief.config.likelihood_temper
    var_v, var_wf, var_wr = (c * temper for c in meas.noise_cov)
    loglik = -0.5 * ((meas.y_v - belief.v) ** 2 / var_v
                     + (meas.y_wf - belief.wf) ** 2 / var_wf
                     + (meas.y_wr - belief.wr) ** 2 / var_wr)
    best = float(np.max(loglik))
    recovered = belief.recovery_resamples
    ema, gate_count = _gate_signals(belief, meas)

    if not np.isfinite(best):
        draws = _reset_theta_to_prior(belief)
        return replace(belief, B=draws["B"], C=draws["C"], D=draws["D"],
                       E=draws["E"],
                       weights=np.full(belief.n, 1.0 / belief.n),
                       kappa_ema=ema, gate_count=gate_count,
                       recovery_resamples=recovered + 1)

    if best < -50.0:
        # even the best particle is implausible: the state block has lost
        # the (directly observed) states, so re-seat it around the
        # measurement; the parameter block and the weights carrying its
        # knowledge stay untouched
        n = belief.n
        v = np.maximum(meas.y_v + 2.0 * math.sqrt(var_v)
                       * belief.rng.standard_normal(n), 0.0)
        wf = np.maximum(meas.y_wf + 2.0 * math.sqrt(var_wf)
                        * belief.rng.standard_normal(n), 0.0)
        wr = np.maximum(meas.y_wr + 2.0 * math.sqrt(var_wr)
                        * belief.rng.standard_normal(n), 0.0)
        return replace(belief, v=v, wf=wf, wr=wr,
                       weights=belief.weights.copy(),
                       kappa_ema=ema, gate_count=gate_count,
                       recovery_resamples=recovered + 1)

    w = belief.weights * np.exp(loglik - best)
    total = float(np.sum(w))
    if total <= 0.0 or not np.isfinite(total):
        draws = _reset_theta_to_prior(belief)
        return replace(belief, B=draws["B"], C=draws["C"], D=draws["D"],
                       E=draws["E"],
                       weights=np.full(belief.n, 1.0 / belief.n),
                       kappa_ema=ema, gate_count=gate_count,
                       recovery_resamples=recovered + 1)
    w /= total

    ess = 1.0 / float(np.sum(w ** 2))
    if ess >= belief.config.ess_fraction * belief.n:
        return replace(belief, weights=w, kappa_ema=ema,
                       gate_count=gate_count)

    arrays = {"v": belief.v, "wf": belief.wf, "wr": belief.wr,
              "B": belief.B, "C": belief.C, "D": belief.D, "E": belief.E}
    idx = _systematic_resample(w, belief.rng)
    open_f, open_r = belief.gate_open()
    if not (open_f or open_r):
        # with both axles uninformative the parameters are independent of
        # the states, so the blocks are resampled with independent index
        # draws: the parameter marginal cannot erode by hitchhiking on
        # state selection, while low-weight reseeded particles still die
        # out in proportion to their weight instead of being promoted
        cfg = belief.config
        sigma = {name: _weighted_std(arrays[name], w)
                 for name in ("v", "wf", "wr")}
        h = (4.0 / (belief.n * 9.0)) ** (1.0 / 11.0) * cfg.kernel_scale_state
        out = {}
        for name in ("v", "wf", "wr"):
            jit = h * sigma[name] * belief.rng.standard_normal(belief.n)
            out[name] = np.maximum(arrays[name][idx] + jit, 0.0)
        idx_theta = _systematic_resample(w, belief.rng)
        return replace(belief, v=out["v"], wf=out["wf"], wr=out["wr"],
                       B=belief.B[idx_theta], C=belief.C[idx_theta],
                       D=belief.D[idx_theta], E=belief.E[idx_theta],
                       weights=np.full(belief.n, 1.0 / belief.n),
                       kappa_ema=ema, gate_count=gate_count)

    cov = _weighted_cov(arrays, w)
    means = {name: float(np.dot(w, arr)) for name, arr in arrays.items()}
    resampled = {name: arr[idx] for name, arr in arrays.items()}
    jittered = _regularize(belief, resampled, cov, means)

    box = belief.config.theta_box()
    for name in THETA_COORDS:
        lo, hi = box[name]
        jittered[name] = np.clip(jittered[name], lo, hi)
    for name in ("v", "wf", "wr"):
        jittered[name] = np.maximum(jittered[name], 0.0)

    # keep a sliver of global support alive: a few children take fresh
    # prior parameters (states inherited) at a reduced starting weight,
    # so data arriving after a premature concentration can still be
    # explained by some particle without polluting the posterior spread
    new_w = np.full(belief.n, 1.0 / belief.n)
    n_mix = int(round(belief.config.prior_mix * belief.n))
    if n_mix > 0:
        ranges = belief.config.theta_ranges()
        for name in THETA_COORDS:
            lo, hi = ranges[name]
            jittered[name][-n_mix:] = _uniform(belief.rng, lo, hi, n_mix)
        new_w[-n_mix:] *= belief.config.prior_mix_weight
        new_w /= new_w.sum()

    return replace(belief, v=jittered["v"], wf=jittered["wf"],
                   wr=jittered["wr"], B=jittered["B"], C=jittered["C"],
                   D=jittered["D"], E=jittered["E"], weights=new_w,
                   kappa_ema=ema, gate_count=gate_count)


def retrogressive_resample(belief: Belief, rho_now, rho_prev) -> Belief:
    """Reset the parameter block to the prior when the surface sensor
    reading changes; the state block and everything else is untouched."""
    if rho_now == rho_prev:
        return belief
    draws = _reset_theta_to_prior(belief)
    return replace(belief,
                   v=belief.v.copy(), wf=belief.wf.copy(), wr=belief.wr.copy(),
                   B=draws["B"], C=draws["C"], D=draws["D"], E=draws["E"],
                   weights=np.full(belief.n, 1.0 / belief.n))


def _weighted_mean(arr: np.ndarray, w: np.ndarray) -> float:
    return float(np.dot(w, arr))


def _weighted_std(arr: np.ndarray, w: np.ndarray) -> float:
    mean = np.dot(w, arr)
    return float(np.sqrt(max(np.dot(w, arr * arr) - mean * mean, 0.0)))


def expectation(belief: Belief) -> AugmentedState:
    """Weighted mean of the particle set, per coordinate."""
    w = belief.weights
    theta = TyreParams(B=_weighted_mean(belief.B, w),
                       C=_weighted_mean(belief.C, w),
                       D=_weighted_mean(belief.D, w),
                       E=_weighted_mean(belief.E, w))
    return AugmentedState(v=_weighted_mean(belief.v, w),
                          omega_f=_weighted_mean(belief.wf, w),
                          omega_r=_weighted_mean(belief.wr, w),
                          theta=theta)


def theta_std(belief: Belief) -> dict[str, float]:
    w = belief.weights
    return {name: _weighted_std(arr, w)
            for name, arr in zip(THETA_COORDS, belief.theta_arrays())}


def current_mu(belief: Belief) -> tuple[float, float]:
    """Weighted-mean friction coefficient at the current per-axle slip."""
    kf, _ = slip_ratio_clamped(belief.wf, belief.config.R, belief.v)
    kr, _ = slip_ratio_clamped(belief.wr, belief.config.R, belief.v)
    mu_f = magic_formula(kf, belief.B, belief.C, belief.D, belief.E)
    mu_r = magic_formula(kr, belief.B, belief.C, belief.D, belief.E)
    w = belief.weights
    return _weighted_mean(mu_f, w), _weighted_mean(mu_r, w)


def uncertainty(belief: Belief, fz_rear: float, u_rear: float,
                dt: float) -> tuple[float, float]:
    """Variances of the rear maximum-force estimate and its prediction.

    Returns (S2_est, S2_pred): S2_est is the weighted variance of the
    estimated maximum rear tyre force D_i * Fz.  S2_pred is the smaller
    of two one-step predictions of that variance: the parameter spread of
    the predicted force at the mean operating point, and the variance of
    D_i * Fz left after reweighting by the mean predicted wheel-speed
    observation.  The gap S2_est - S2_pred is the learnable part of the
    maximum-force uncertainty: large while anything about the peak can
    still be learned, collapsing only on genuine convergence.

    fz_rear and u_rear are per wheel.
    """
    w = belief.weights
    cfg = belief.config
    s2_est = _weighted_std(belief.D * fz_rear, w) ** 2

    _, _, v_mean = mean_slip(belief)
    if not cfg.slip_observable(v_mean):
        # exploration could not be told apart from noise here, so the
        # prediction cannot improve on the estimate
        return s2_est, s2_est

    # operating-point spread: below the observability floor the slip is
    # taken as zero so noise cannot masquerade as excitation
    kr_now = float(belief.kappa_ema[1]) if belief.gate_open()[1] else 0.0
    mu_now = magic_formula(kr_now, belief.B, belief.C, belief.D, belief.E)
    f_now = float(np.dot(w, mu_now)) * fz_rear
    k_next = kr_now + (dt / cfg.iw) * (u_rear - f_now * cfg.R) * cfg.R / v_mean
    mu_next = magic_formula(k_next, belief.B, belief.C, belief.D, belief.E)
    s2_point = _weighted_std(mu_next * fz_rear, w) ** 2

    # predicted-observation reduction: per-particle wheel-speed forecasts
    # reweighted against their own mean
    if belief.gate_open()[1]:
        kr_i, _ = slip_ratio_clamped(belief.wr, cfg.R, belief.v)
        mu_i = magic_formula(kr_i, belief.B, belief.C, belief.D, belief.E)
        wr_pred = np.maximum(
            belief.wr + (dt / cfg.iw) * (u_rear - mu_i * fz_rear * cfg.R), 0.0)
        y_bar = float(np.dot(w, wr_pred))
        loglik = -0.5 * (y_bar - wr_pred) ** 2 / cfg.meas_sigma_w ** 2
        w_post = w * np.exp(loglik - np.max(loglik))
        total = float(np.sum(w_post))
        if total > 0.0 and np.isfinite(total):
            s2_obs = _weighted_std(belief.D * fz_rear, w_post / total) ** 2
        else:
            s2_obs = s2_est
    else:
        s2_obs = s2_est

    return s2_est, min(s2_point, s2_obs)
