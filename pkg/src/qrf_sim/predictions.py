"""Closed-form predictions for the frame rotations, used as cross-checks
against the exact channels.

All of these are leading-order large-l expressions; the exact channels in
:mod:`qrf_sim.channels` are the authority and the tests quantify how fast
each formula converges to them.  Arctangents are evaluated in two-argument
form throughout: the quotients become branch-ambiguous near theta -> pi
with strong source polarization.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .spin import as_spin, build_spin_operators


@dataclass(frozen=True)
class RotationPrediction:
    """A predicted frame rotation: signed angle, unit axis and which map it
    belongs to ('average', 'plus_outcome', 'minus_outcome' or 'unitary')."""

    omega: float
    axis: np.ndarray
    validity: str

    def __post_init__(self):
        axis = np.asarray(self.axis, dtype=float)
        n = np.linalg.norm(axis)
        if not np.isfinite(self.omega):
            raise ValueError("rotation angle must be finite")
        if abs(n - 1.0) > 1e-12:
            raise ValueError(f"axis must be a unit vector, |axis| = {n!r}")
        object.__setattr__(self, "axis", axis)


def average_drift_angle(l, r: float, z: float, theta: float) -> float:
    """Mean per-measurement rotation of the frame toward the source axis,
    -(r z / 2l) sin(theta)."""
    spin = as_spin(l)
    return -(r * z / (2.0 * spin.l)) * np.sin(theta)


def _check_polarized(r: float):
    if r == 0.0:
        raise ValueError("inclination is undefined for an unpolarized frame (r = 0)")


def _branch_angle(num: float, den: float) -> float:
    # a vanishing numerator means no rotation whatever the denominator sign;
    # atan2's branch cut sits exactly on (0, negative) and would report +-pi
    if num == 0.0:
        return 0.0
    return float(np.arctan2(num, den))


def selective_angles_partially_coherent(l, r: float, z: float, theta: float) -> tuple[float, float]:
    """Outcome-conditioned rotation angles for states with Dicke-like
    second moments (the closed form in the frame's inclination alone)."""
    _check_polarized(r)
    lv = as_spin(l).l
    K = lv * (1.0 - r * r) + 1.0
    s, c = np.sin(theta), np.cos(theta)
    omega_plus = -_branch_angle(z * s * (r * r + K), 2.0 * r * lv * (1.0 + z * r * c))
    omega_minus = -_branch_angle(z * s * (r * r - K), 2.0 * r * lv * (1.0 - z * r * c))
    return omega_plus, omega_minus


def selective_angles_large_l(r: float, z: float, theta: float) -> tuple[float, float]:
    """The l -> infinity limit of the selective angles; nonzero for r < 1."""
    _check_polarized(r)
    s, c = np.sin(theta), np.cos(theta)
    omega_plus = _branch_angle(z * (r * r - 1.0) * s, 2.0 * r * (1.0 + z * r * c))
    omega_minus = -_branch_angle(z * (r * r - 1.0) * s, 2.0 * r * (1.0 - z * r * c))
    return omega_plus, omega_minus


def selective_angles_general(frame, l, z: float) -> tuple[float, float]:
    """Selective angles from a state's actual rotated quadratic moments.

    ``frame`` is a FrameSummary (or anything exposing r, theta and the
    rotated moment matrix ``quad``).  Substituting the moments of a tilted
    |l,k> projector reproduces selective_angles_partially_coherent exactly.
    """
    r = frame.r
    theta = frame.theta
    _check_polarized(r)
    lv = as_spin(l).l
    mxx = frame.quad[0, 0]
    mxz = frame.quad[0, 2]
    mzz = frame.quad[2, 2]
    s, c = np.sin(theta), np.cos(theta)
    drift = -(z * r / (2.0 * lv)) * s
    fluct_num = (z / (r * lv * lv)) * (c * mxz - s * mxx)
    fluct_den = (z / (r * lv * lv)) * (c * mzz - s * mxz)
    omega_plus = _branch_angle(drift + fluct_num, 1.0 + fluct_den)
    omega_minus = _branch_angle(drift - fluct_num, 1.0 - fluct_den)
    return omega_plus, omega_minus


def implicit_omega_residual(omega: float, l, r: float, z: float, theta: float,
                            moments: tuple[float, float], outcome: int = +1) -> float:
    """Residual of the implicit relation that determines a selective angle.

    ``moments`` are the background-frame (unrotated) expectations
    ``(<Lz^2>, <{Lz, Lx}>)`` of the pre-measurement state; ``outcome`` is the
    branch sign.  The residual vanishes exactly at the angle returned by
    selective_angles_general for the same state:

        sin(w)/sin(w+t) + (zr/2l) sin(t) cos(w)/sin(w+t)
            +- (z/2rl^2) [2<Lz^2> - cot(w+t) <{Lz,Lx}>] = 0
    """
    _check_polarized(r)
    lv = as_spin(l).l
    lz2, lzlx = moments
    sgn = 1.0 if outcome >= 0 else -1.0
    denom = np.sin(omega + theta)
    if abs(denom) < 1e-14:
        raise ValueError("sin(omega + theta) vanishes; residual is singular here")
    return (
        np.sin(omega) / denom
        + (z * r / (2.0 * lv)) * np.sin(theta) * np.cos(omega) / denom
        + sgn * (z / (2.0 * r * lv * lv))
        * (2.0 * lz2 * denom - lzlx * np.cos(omega + theta)) / denom
    )


# ---------------------------------------------------------------------------
# quartic trace identity
# ---------------------------------------------------------------------------

_AXES = {"x": 0, "y": 1, "z": 2}


def quartic_trace_coefficients_printed(l) -> tuple[float, float]:
    """The published closed forms for the anticommutator trace coefficients."""
    lv = as_spin(l).l
    alpha = lv * (lv + 1) * (2 * lv + 1) * (1 + 2 * lv * (lv + 1)) / 15.0
    beta = lv * (lv + 1) * (4 * lv * lv - 1) * (2 * lv + 3) / 15.0
    return alpha, beta


@lru_cache(maxsize=None)
def quartic_trace_coefficients_bruteforce(twice_l: int) -> tuple[float, float]:
    """alpha and beta measured directly from matrix traces.

    alpha = Tr[{Lz,Lz}{Lx,Lx}] and beta = Tr[{Lx,Ly}{Lx,Ly}] isolate the two
    coefficients; these are the values all downstream formulas consume.
    """
    ops = build_spin_operators(as_spin(twice_l / 2.0))

    def anti(A, B):
        return A @ B + B @ A

    alpha = np.trace(anti(ops.Lz, ops.Lz) @ anti(ops.Lx, ops.Lx)).real
    beta = np.trace(anti(ops.Lx, ops.Ly) @ anti(ops.Lx, ops.Ly)).real
    return float(alpha), float(beta)


def su2_quartic_trace(l, i: str, j: str, k: str, m: str, *, use_printed: bool = True) -> float:
    """Tr[{Li,Lj}{Lk,Lm}] from the delta decomposition.

    By default uses the published alpha/beta closed forms; with
    use_printed=False the coefficients come from the brute-force matrix
    oracle instead (the two disagree, see the comparison tests).
    """
    for idx in (i, j, k, m):
        if idx not in _AXES:
            raise ValueError(f"index must be one of x, y, z; got {idx!r}")
    if use_printed:
        alpha, beta = quartic_trace_coefficients_printed(l)
    else:
        alpha, beta = quartic_trace_coefficients_bruteforce(as_spin(l).twice_l)
    d_ij = i == j
    d_km = k == m
    d_ik = i == k
    d_jm = j == m
    d_im = i == m
    d_jk = j == k
    return alpha * d_ij * d_km + beta * (d_ik * d_jm + d_im * d_jk)


def su2_quartic_trace_bruteforce(l, i: str, j: str, k: str, m: str) -> float:
    """Tr[{Li,Lj}{Lk,Lm}] evaluated directly on the operator matrices."""
    ops = build_spin_operators(l)
    mats = (ops.Lx, ops.Ly, ops.Lz)
    A = mats[_AXES[i]] @ mats[_AXES[j]] + mats[_AXES[j]] @ mats[_AXES[i]]
    B = mats[_AXES[k]] @ mats[_AXES[m]] + mats[_AXES[m]] @ mats[_AXES[k]]
    return float(np.trace(A @ B).real)


def selective_angles_quadratic_bloch(l, r: float, z: float, theta: float,
                                     T: np.ndarray, *,
                                     use_printed_coefficients: bool = False) -> tuple[float, float]:
    """Selective angles for quadratic Bloch states from the in-plane tensor
    components T_xx, T_zz, T_xz.

    The anisotropy coefficient is built from the brute-force quartic trace
    by default; poorly convergent at small l (leading-order formula only).
    """
    _check_polarized(r)
    spin = as_spin(l)
    lv = spin.l
    d = spin.d
    T = np.asarray(T, dtype=float)
    s, c = np.sin(theta), np.cos(theta)
    t1 = (T[0, 0] * c * np.sin(2 * theta)
          - T[2, 2] * s * np.cos(2 * theta)
          + T[0, 2] * np.cos(3 * theta))
    t2 = (T[0, 0] * s * np.sin(2 * theta)
          + T[2, 2] * c * np.cos(2 * theta)
          + T[0, 2] * np.sin(3 * theta))
    if use_printed_coefficients:
        coeff = z * (lv + 1.0) * (d * d - 4.0)
    else:
        _, beta = quartic_trace_coefficients_bruteforce(spin.twice_l)
        coeff = z * 15.0 * beta / (d * lv)
    omega_plus = -_branch_angle(15.0 * z * r * r * s + coeff * t1, 30.0 * r * lv + coeff * t2)
    omega_minus = -_branch_angle(15.0 * z * r * r * s - coeff * t1, 30.0 * r * lv - coeff * t2)
    return omega_plus, omega_minus


# ---------------------------------------------------------------------------
# unitary interaction
# ---------------------------------------------------------------------------

def unitary_rotation_prediction(l, r: float, z: float, theta: float, gamma: float) -> RotationPrediction:
    """Axis and angle of the polarization rotation induced by one invariant
    unitary interaction.

    The axis direction is (0, r sin(theta) sin(gamma/2), cos(gamma/2));
    at gamma = pi it is exactly the Y axis.  The returned omega is the
    positive magnitude for z > 0; the physical motion of the polarization
    vector is by -omega about this axis (toward alignment with the source).
    """
    _check_polarized(r)
    lv = as_spin(l).l
    if not np.isfinite(gamma):
        raise ValueError(f"gamma must be finite, got {gamma!r}")
    half = gamma / 2.0
    s = np.sin(theta)
    axis = np.array([0.0, r * s * np.sin(half), np.cos(half)])
    n = np.linalg.norm(axis)
    if n < 1e-14:
        raise ValueError("rotation axis is degenerate (r sin(theta) sin(gamma/2) "
                         "and cos(gamma/2) both vanish)")
    omega = (z / lv) * np.sin(half) * np.sqrt(
        r * r * s * s * np.sin(half) ** 2 + np.cos(half) ** 2
    )
    return RotationPrediction(float(omega), axis / n, "unitary")


def outcome_probability(l, r: float, z: float, theta: float) -> tuple[float, float]:
    """Large-l outcome probabilities (1 +- z r cos(theta))/2; the exact
    finite-l values live in channels.outcome_probabilities."""
    p_plus = 0.5 * (1.0 + z * r * np.cos(theta))
    return p_plus, 1.0 - p_plus
