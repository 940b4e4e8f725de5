"""Second-level lifted dual functional for the asymmetric binary perceptron.

The zero-temperature functional evaluated here is

    psi(p1, p2, q1s, q2s, c2, nu) =
          (1 - p1) q1s / 2 + (p1 q1s - p2 q2s) c2 / 2 + nu * delta_bar
        - (1/c2) E_3 log E_2 f_zc^c2
        - alpha (1/c2) E_3 log E_2 f_zu^c2

with ``f_zc = 2 cosh(|sqrt(q1s - q2s) h2 + sqrt(q2s) h3| + |nu|)`` and
``f_zu = erfc((sqrt(p1 - p2) u2 + sqrt(p2) u3 + kappa) / sqrt(2 (1 - p1))) / 2``.
``E_2`` integrates the inner Gaussians (h2, u2), ``E_3`` the outer ones
(h3, u3).  The local entropy is ``S_l = -psi`` at the stationary point.

Both inner expectations are evaluated with Gauss-Legendre segments split at
the non-smooth point of the integrand (the kink of ``|.|`` for ``f_zc``,
the erfc transition for ``f_zu``).  The outer ``h3`` expectation is split at
zero, where the log of the inner expectation has nearby complex
singularities; the outer ``u3`` expectation uses the Gauss-Hermite grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import erfc, logsumexp

from .numerics import (
    LOG_2,
    QuadratureGrid,
    log_erfc,
    log_erfc_slope,
    logcosh,
    normal_segment_rule,
)

_LOG_HALF = -LOG_2
_SQRT2 = math.sqrt(2.0)

# Half-widths of the truncated integration ranges (in standard deviations).
_INNER_HALF_WIDTH = 10.0
_OUTER_HALF_WIDTH = 11.0
# Right-hand extent of the erfc transition segment, in units of its width.
_TRANSITION_SPAN = 10.0
# Left-hand extent, where erfc(x)^c2 departs from 1 (x in [-6, 0]).
_LEFT_SPAN = 6.0


@dataclass(frozen=True)
class ModelParams:
    """Problem instance: constraint density, threshold, target overlap."""

    alpha: float
    kappa: float = 0.0
    delta_bar: float = 0.99

    def __post_init__(self):
        if not (math.isfinite(self.alpha) and self.alpha >= 0):
            raise ValueError(f"alpha must be finite and >= 0, got {self.alpha!r}")
        if not math.isfinite(self.kappa):
            raise ValueError(f"kappa must be finite, got {self.kappa!r}")
        if not 0.0 < self.delta_bar < 1.0:
            raise ValueError(f"delta_bar must lie in (0, 1), got {self.delta_bar!r}")


@dataclass(frozen=True)
class LiftingParams:
    """Variational state of the r=2 functional.

    ``q1s``/``q2s`` are the temperature-scaled overlaps (q * beta^2).
    ``gamma_sq`` is kept for completeness; the functional is evaluated in its
    ``gamma_sq -> 0`` limit and the field must stay 0.
    """

    p1: float
    p2: float
    q1s: float
    q2s: float
    c2: float
    nu: float
    gamma_sq: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.p2 <= self.p1 < 1.0:
            raise ValueError(f"need 0 <= p2 <= p1 < 1, got p1={self.p1!r}, p2={self.p2!r}")
        if not 0.0 <= self.q2s <= self.q1s:
            raise ValueError(f"need 0 <= q2s <= q1s, got q1s={self.q1s!r}, q2s={self.q2s!r}")
        if not self.c2 > 0.0:
            raise ValueError(f"c2 must be positive, got {self.c2!r}")
        if not self.nu >= 0.0:
            raise ValueError(f"nu must be >= 0, got {self.nu!r}")
        if self.gamma_sq != 0.0:
            raise ValueError("gamma_sq is fixed to its 0 limit")

    @classmethod
    def from_vector(cls, x) -> "LiftingParams":
        p1, p2, q1s, q2s, c2, nu = (float(v) for v in x)
        return cls(p1, p2, q1s, q2s, c2, nu)

    def as_vector(self) -> np.ndarray:
        """Order ``(p1, p2, q1s, q2s, c2, nu)``, as used by :func:`residuals`."""
        return np.array([self.p1, self.p2, self.q1s, self.q2s, self.c2, self.nu])

    def b(self) -> tuple[float, float, float]:
        """Coefficients sqrt(p_{k-1} - p_k), k = 1..3, with p0 = 1, p3 = 0."""
        return (math.sqrt(1 - self.p1), math.sqrt(self.p1 - self.p2), math.sqrt(self.p2))

    def c(self) -> tuple[float, float]:
        """Scaled coefficients sqrt(q_{k-1} - q_k), k = 2..3."""
        return (math.sqrt(self.q1s - self.q2s), math.sqrt(self.q2s))


PARAM_NAMES = ("p1", "p2", "q1s", "q2s", "c2", "nu")


# --------------------------------------------------------------------------
# pointwise kernels


def f_zc(q1s, q2s, nu, h2, h3):
    """2 cosh(|sqrt(q1s - q2s) h2 + sqrt(q2s) h3| + |nu|).

    This is the maximum of ``2 cosh(z + nu * xbar)`` over ``xbar = +-1``.
    """
    if q1s < q2s or q2s < 0:
        raise ValueError(f"need 0 <= q2s <= q1s, got q1s={q1s!r}, q2s={q2s!r}")
    z = math.sqrt(q1s - q2s) * np.asarray(h2, float) + math.sqrt(q2s) * np.asarray(h3, float)
    out = 2.0 * np.cosh(np.abs(z) + abs(nu))
    return float(out) if out.ndim == 0 else out


def log_f_zu(p1, p2, kappa, u2, u3):
    """log of erfc((sqrt(p1-p2) u2 + sqrt(p2) u3 + kappa) / (sqrt(2) sqrt(1-p1))) / 2."""
    if p1 >= 1.0:
        raise ValueError(f"p1 must be < 1, got {p1!r}")
    if not 0.0 <= p2 <= p1:
        raise ValueError(f"need 0 <= p2 <= p1, got p1={p1!r}, p2={p2!r}")
    arg = (math.sqrt(p1 - p2) * np.asarray(u2, float) + math.sqrt(p2) * np.asarray(u3, float)
           + kappa) / (_SQRT2 * math.sqrt(1.0 - p1))
    out = _LOG_HALF + log_erfc(arg)
    return float(out) if np.ndim(out) == 0 else out


def f_z_beta(beta, q1, q2, nu, xbar1, h2, h3):
    """Finite-beta kernel E_{h1} exp(beta |sqrt(1-q1) h1 + m|).

    ``m = sqrt(q1-q2) h2 + sqrt(q2) h3 + nu * xbar1``; closed form as a sum of
    two erfc terms.
    """
    if not beta > 0:
        raise ValueError(f"beta must be positive, got {beta!r}")
    if q1 >= 1.0:
        raise ValueError(f"q1 must be < 1, got {q1!r}")
    if not 0.0 <= q2 <= q1:
        raise ValueError(f"need 0 <= q2 <= q1, got q1={q1!r}, q2={q2!r}")
    sig = math.sqrt(1.0 - q1)
    m = math.sqrt(q1 - q2) * np.asarray(h2, float) + math.sqrt(q2) * np.asarray(h3, float) + nu * xbar1
    pre = 0.5 * math.exp(0.5 * (1.0 - q1) * beta * beta)
    out = pre * (np.exp(-beta * m) * erfc(-(beta * sig - m / sig) / _SQRT2)
                 + np.exp(beta * m) * erfc(-(beta * sig + m / sig) / _SQRT2))
    return float(out) if out.ndim == 0 else out


def f_zd_beta(p1, p2, kappa, c2, gamma_sq, u2, u3):
    """Finite-gamma_sq kernel; vanishes like sqrt(gamma_sq) as gamma_sq -> 0.

    Together with ``exp(log_f_zu)`` it equals
    ``E_{u1} exp(-B max(C + sqrt(1-p1) u1, 0)^2)`` with ``B = c2/(4 gamma_sq)``
    and ``C = sqrt(p1-p2) u2 + sqrt(p2) u3 + kappa``.
    """
    if not gamma_sq > 0:
        raise ValueError(f"gamma_sq must be positive, got {gamma_sq!r}")
    if not 0.0 <= p2 <= p1 < 1.0:
        raise ValueError(f"need 0 <= p2 <= p1 < 1, got p1={p1!r}, p2={p2!r}")
    big_b = c2 / (4.0 * gamma_sq)
    big_c = math.sqrt(p1 - p2) * np.asarray(u2, float) + math.sqrt(p2) * np.asarray(u3, float) + kappa
    h_bar = -big_c / math.sqrt(1.0 - p1)
    k = 2.0 * (1.0 - p1) * big_b + 1.0
    out = np.exp(-big_b * big_c ** 2 / k) / (2.0 * math.sqrt(k)) * erfc(h_bar / math.sqrt(2.0 * k))
    return float(out) if out.ndim == 0 else out


# --------------------------------------------------------------------------
# nested expectations


def _safe_inv(x: float) -> float:
    # 1/x with the 0 -> 0 convention for boundary-degenerate coefficients
    return 1.0 / x if x > 0 else 0.0


def _bin_block(q1s, q2s, nu, c2, order, grad):
    """(1/c2) E_3 log E_2 f_zc^c2 and, optionally, its partial derivatives."""
    a = math.sqrt(q1s - q2s)
    b = math.sqrt(q2s)
    h3, lw3 = normal_segment_rule(np.array([-_OUTER_HALF_WIDTH, 0.0, _OUTER_HALF_WIDTH]), order)
    w3 = np.exp(lw3)
    reach = _INNER_HALF_WIDTH + c2 * a
    kink = np.clip(-b * h3 * _safe_inv(a), -reach, reach) if a > 0 else np.zeros_like(h3)
    breaks = np.stack([np.full_like(h3, -reach), kink, np.full_like(h3, reach)], axis=1)
    h2, lw2 = normal_segment_rule(breaks, order)
    col3 = h3[:, None]
    z = a * h2 + b * col3
    az = np.abs(z) + abs(nu)
    lf = LOG_2 + logcosh(az)
    tilt = c2 * lf + lw2
    norm = logsumexp(tilt, axis=1, keepdims=True)
    value = float(w3 @ norm[:, 0]) / c2
    if not grad:
        return value, None
    pi = np.exp(tilt - norm)

    def avg(g):
        return float(w3 @ np.sum(pi * g, axis=1))

    th = np.tanh(az)
    sg = np.sign(z)
    ia, ib = _safe_inv(a), _safe_inv(b)
    d_q1 = avg(sg * (0.5 * ia) * h2 * th)
    d_q2 = avg(sg * (-0.5 * ia * h2 + 0.5 * ib * col3) * th)
    d_nu = avg(th) if nu > 0 else 0.0
    mean_log = avg(lf)
    # derivative of (1/c2) E3 log E2 f^c2 with respect to c2
    d_c2 = (mean_log - value) / c2
    return value, (d_q1, d_q2, d_c2, d_nu)


def _sph_block(p1, p2, kappa, c2, grid, order, grad):
    """(1/c2) E_3 log E_2 f_zu^c2 and, optionally, its partial derivatives."""
    s = math.sqrt(p1 - p2)
    sp2 = math.sqrt(p2)
    width = _SQRT2 * math.sqrt(1.0 - p1)
    u3 = grid.nodes
    shift = sp2 * u3 + kappa
    lim = _INNER_HALF_WIDTH
    if s > 0:
        step = -shift / s
        span = _TRANSITION_SPAN * width / (s * math.sqrt(c2))
        lo = np.minimum(-lim, step - 1.0)
        # erfc(x)^c2 leaves 1 over x in [-6, 0]: resolve it separately
        left = np.maximum(step - _LEFT_SPAN * width / s, lo)
        mid = np.maximum(step, lo)
        top = mid + span
        hi = np.maximum(lim, top)
    else:
        lo = np.full_like(u3, -lim)
        left = np.full_like(u3, -lim / 2)
        mid = np.full_like(u3, 0.0)
        top = np.full_like(u3, lim / 2)
        hi = np.full_like(u3, lim)
    u2, lw2 = normal_segment_rule(np.stack([lo, left, mid, top, hi], axis=1), order)
    col3 = u3[:, None]
    big_c = s * u2 + sp2 * col3 + kappa
    x = big_c / width
    le = log_erfc(x)
    lf = _LOG_HALF + le
    tilt = c2 * lf + lw2
    norm = logsumexp(tilt, axis=1, keepdims=True)
    value = float(grid.weights @ norm[:, 0]) / c2
    if not grad:
        return value, None
    pi = np.exp(tilt - norm)

    def avg(g):
        return float(grid.weights @ np.sum(pi * g, axis=1))

    slope = log_erfc_slope(x, le)
    i_s, i_p2 = _safe_inv(s), _safe_inv(sp2)
    dx_p1 = 0.5 * i_s * u2 / width + big_c / (2.0 * _SQRT2 * (1.0 - p1) ** 1.5)
    dx_p2 = (-0.5 * i_s * u2 + 0.5 * i_p2 * col3) / width
    d_p1 = avg(slope * dx_p1)
    d_p2 = avg(slope * dx_p2)
    d_c2 = (avg(lf) - value) / c2
    return value, (d_p1, d_p2, d_c2)


def evaluate(lp: LiftingParams, mp: ModelParams, grid: QuadratureGrid, grad: bool = True):
    """Return ``(psi, residual_vector or None)`` sharing one pass of quadrature.

    The residual vector is the gradient of ``psi`` in the order
    ``(p1, p2, q1s, q2s, c2, nu)``.
    """
    order = grid.order
    p1, p2, q1s, q2s, c2, nu = lp.p1, lp.p2, lp.q1s, lp.q2s, lp.c2, lp.nu
    alpha, delta = mp.alpha, mp.delta_bar
    bin_v, bin_d = _bin_block(q1s, q2s, nu, c2, order, grad)
    if alpha > 0:
        sph_v, sph_d = _sph_block(p1, p2, mp.kappa, c2, grid, order, grad)
    else:
        sph_v, sph_d = 0.0, (0.0, 0.0, 0.0)
    psi = ((1.0 - p1) * q1s / 2.0 + 0.5 * (p1 * q1s - p2 * q2s) * c2 + nu * delta
           - bin_v - alpha * sph_v)
    if not grad:
        return psi, None
    res = np.array([
        0.5 * (c2 - 1.0) * q1s - alpha * sph_d[0],
        -0.5 * c2 * q2s - alpha * sph_d[1],
        0.5 * (1.0 - p1) + 0.5 * p1 * c2 - bin_d[0],
        -0.5 * p2 * c2 - bin_d[1],
        0.5 * (p1 * q1s - p2 * q2s) - bin_d[2] - alpha * sph_d[2],
        delta - bin_d[3],
    ])
    return psi, res


def psi_rd(lp: LiftingParams, mp: ModelParams, grid: QuadratureGrid) -> float:
    """Value of the dual functional; the local entropy is its negative."""
    return evaluate(lp, mp, grid, grad=False)[0]


def residuals(lp: LiftingParams, mp: ModelParams, grid: QuadratureGrid) -> np.ndarray:
    """Analytic gradient of :func:`psi_rd` in ``(p1, p2, q1s, q2s, c2, nu)`` order.

    At ``nu = 0`` the kernel depends on ``|nu|`` and the one-sided derivative
    is replaced by the ``sign(0) = 0`` convention, giving ``delta_bar``.
    """
    return evaluate(lp, mp, grid, grad=True)[1]
