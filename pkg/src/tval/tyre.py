"""Magic Formula friction curve, longitudinal slip ratio and tyre force.

Everything here is a pure function of its arguments and accepts scalars or
numpy arrays (normal broadcasting rules).  The peak factor D equals the
maximum friction coefficient the surface can provide, which is what the
estimator ultimately has to pin down.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# Body speed below which the slip ratio denominator is unusable.  The
# default scenarios never drop under 2 m/s, so this floor is rarely hit.
U_MIN = 0.5


class SlipUndefinedError(ValueError):
    """Raised when the body speed is too low for a defined slip ratio."""


@dataclass(frozen=True)
class TyreParams:
    """Magic Formula factors: stiffness B, shape C, peak D, curvature E.

    Valid box: B > 0, C in [1, 2], D in (0, 2], E <= 1.
    """

    B: float
    C: float
    D: float
    E: float

    def __post_init__(self):
        ok = (
            self.B > 0.0
            and 1.0 <= self.C <= 2.0
            and 0.0 < self.D <= 2.0
            and self.E <= 1.0
        )
        if not ok:
            raise ValueError(f"tyre parameters outside the valid box: {self}")

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.B, self.C, self.D, self.E)


def slip_ratio(omega, R, U):
    """Longitudinal slip ratio (omega*R - U) / U.

    Positive when driving, negative when braking, 0 at free rolling.
    Raises SlipUndefinedError for U <= U_MIN; callers substitute kappa = 0
    and treat the sample as uninformative.
    """
    if U <= U_MIN:
        raise SlipUndefinedError(f"slip undefined at body speed {U} m/s")
    return (omega * R - U) / U


def slip_ratio_clamped(omega, R, U):
    """Vector-friendly slip: kappa where defined, else 0.

    Returns (kappa, informative) where informative marks samples with a
    usable denominator.
    """
    U = np.asarray(U, dtype=float)
    informative = U > U_MIN
    denom = np.where(informative, U, 1.0)
    kappa = np.where(informative, (np.asarray(omega) * R - U) / denom, 0.0)
    return kappa, informative


def magic_formula(kappa, B, C, D, E):
    """mu = D sin(C arctan(B k - E (B k - arctan(B k)))); odd in kappa."""
    bk = np.multiply(B, kappa)
    g = bk - E * (bk - np.arctan(bk))
    return D * np.sin(C * np.arctan(g))


def magic_formula_slope(kappa, B, C, D, E):
    """d mu / d kappa, used for the stiff wheel-spin update."""
    bk = np.multiply(B, kappa)
    g = bk - E * (bk - np.arctan(bk))
    dg = B * (1.0 - E + E / (1.0 + bk * bk))
    return D * np.cos(C * np.arctan(g)) * C / (1.0 + g * g) * dg


def friction(kappa, theta: TyreParams):
    """Friction coefficient at slip kappa for the given tyre parameters."""
    return magic_formula(kappa, theta.B, theta.C, theta.D, theta.E)


def tyre_force(mu, Fz):
    """Longitudinal tyre force mu * Fz; Fz must be non-negative."""
    if np.any(np.asarray(Fz) < 0.0):
        raise ValueError("negative vertical load")
    return mu * Fz
