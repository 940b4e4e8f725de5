"""Damped Newton solver for the six stationarity conditions, plus continuation.

Newton runs in unconstrained coordinates ``theta``; a smooth bijection maps
them into the feasible box

    p1  = (1 - eps) * logistic(t0)        p2  = p1 * logistic(t1)
    q2s = softplus(t2)                    q1s = q2s + softplus(t3)
    c2  = softplus(t4)                    nu  = softplus(t5)

Two boundary cases are handled as fixed (inactive) coordinates rather than
limits of the map:

* ``nu = 0``: the overlap coupling collapses (local-entropy breakdown);
  the remaining five equations are solved with ``nu`` pinned at 0.
* ``alpha = 0``: the p-equations then read ``(c2 - 1) q1s / 2 = 0`` and
  ``-c2 q2s / 2 = 0`` and the q-block has no interior root, so ``q1s = q2s = 0``
  and only the ``nu`` equation remains (p1, p2, c2 drop out of psi).
"""
from __future__ import annotations

import enum
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.special import expit, logit

from .kernels import LiftingParams, ModelParams, evaluate
from .numerics import gauss_hermite_grid

log = logging.getLogger(__name__)

P1_MARGIN = 1e-6
DEFAULT_INIT = LiftingParams(p1=0.98, p2=0.65, q1s=0.8, q2s=0.2, c2=4.5, nu=0.2)

_NU_PROBE = np.geomspace(1e-4, 5.0, 40)
# largest accepted Newton move per theta coordinate
_MAX_STEP = 1.0
# iterations spent below nu_floor / 10 before a positive-nu attempt is abandoned
_COLLAPSE_PATIENCE = 8


class Branch(str, enum.Enum):
    POSITIVE_NU = "positive-nu"
    COLLAPSED_NU = "collapsed-nu"


@dataclass(frozen=True)
class SolverOptions:
    tolerance: float = 1e-8
    max_iterations: int = 100
    damping: float = 1.0
    quadrature_order: int = 64
    nu_floor: float = 1e-4
    fd_step: float = 1e-6
    nu_starts: tuple[float, ...] = (0.1, 0.3, 0.5)

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if not 0 < self.damping <= 1:
            raise ValueError("damping must lie in (0, 1]")
        if self.quadrature_order < 2:
            raise ValueError("quadrature_order must be >= 2")
        if self.nu_floor < 0:
            raise ValueError("nu_floor must be >= 0")


@dataclass(frozen=True)
class SaddleSolution:
    params: LiftingParams
    model: ModelParams
    s_l: float
    residual_norm: float
    converged: bool
    iterations: int
    branch_tag: Branch
    diagnostics: dict = field(default_factory=dict, compare=False)

    @property
    def psi(self) -> float:
        return -self.s_l


# --------------------------------------------------------------------------
# parameter maps


def _softplus(t):
    return np.logaddexp(0.0, t)


def _softplus_inv(y):
    y = max(float(y), 1e-300)
    return y + math.log(-math.expm1(-y)) if y < 30 else y


def _clamp_gap(v, lo=1e-12):
    return max(v, lo)


class _Layout:
    """Which of the six coordinates move and how theta maps onto them."""

    def __init__(self, fix_q: bool, fix_nu: bool, fixed: LiftingParams):
        self.fix_q = fix_q
        self.fix_nu = fix_nu
        self.fixed = fixed
        if fix_q:
            # only nu (p1, p2, c2 do not enter psi)
            self.free = [5] if not fix_nu else []
        else:
            self.free = [0, 1, 2, 3, 4] + ([] if fix_nu else [5])

    def to_theta(self, lp: LiftingParams) -> np.ndarray:
        full = np.empty(6)
        full[0] = logit(min(max(lp.p1 / (1 - P1_MARGIN), 1e-12), 1 - 1e-12))
        full[1] = logit(min(max(lp.p2 / lp.p1 if lp.p1 > 0 else 0.5, 1e-12), 1 - 1e-12))
        full[2] = _softplus_inv(_clamp_gap(lp.q2s))
        full[3] = _softplus_inv(_clamp_gap(lp.q1s - lp.q2s))
        full[4] = _softplus_inv(lp.c2)
        full[5] = _softplus_inv(_clamp_gap(lp.nu))
        return full[self.free]

    def to_params(self, theta: np.ndarray) -> LiftingParams:
        base = self.fixed
        full = dict(p1=base.p1, p2=base.p2, q1s=base.q1s, q2s=base.q2s, c2=base.c2, nu=base.nu)
        t = dict(zip(self.free, theta))
        if not self.fix_q:
            p1 = (1 - P1_MARGIN) * float(expit(t[0]))
            full["p1"] = p1
            full["p2"] = p1 * float(expit(t[1]))
            q2s = float(_softplus(t[2]))
            full["q2s"] = q2s
            full["q1s"] = q2s + float(_softplus(t[3]))
            full["c2"] = float(_softplus(t[4]))
        else:
            full["q1s"] = full["q2s"] = 0.0
        if self.fix_nu:
            full["nu"] = 0.0
        elif 5 in t:
            full["nu"] = float(_softplus(t[5]))
        return LiftingParams(**full)


# --------------------------------------------------------------------------
# Newton core


def _newton(mp, lp0, layout: _Layout, opts: SolverOptions, grid):
    diag = {"gradient_fallbacks": 0, "line_search_failures": 0}
    watch_nu = 5 in layout.free
    collapse_level = 0.1 * opts.nu_floor if opts.nu_floor > 0 else 1e-10
    low_nu_run = 0

    def resid(theta):
        lp = layout.to_params(theta)
        psi, r = evaluate(lp, mp, grid)
        return lp, psi, r

    theta = layout.to_theta(lp0)
    lp, psi, r_full = resid(theta)
    if not layout.free:
        return lp, psi, r_full, 0.0, True, 0, diag
    r = r_full[layout.free]
    norm = float(np.max(np.abs(r)))
    it = 0
    while norm > opts.tolerance and it < opts.max_iterations:
        it += 1
        k = len(theta)
        jac = np.empty((k, k))
        for j in range(k):
            th = theta.copy()
            th[j] += opts.fd_step
            jac[:, j] = (resid(th)[2][layout.free] - r) / opts.fd_step
        directions = []
        newton_failed = True
        if np.linalg.cond(jac) < 1e12:
            d = np.linalg.solve(jac, -r)
            big = float(np.max(np.abs(d)))
            directions.append(d if big <= _MAX_STEP else d * (_MAX_STEP / big))
            newton_failed = False
        gd = -jac.T @ r
        gd_norm = np.linalg.norm(gd)
        if gd_norm > 0:
            directions.append(gd / gd_norm * min(1.0, np.linalg.norm(r)))
        accepted = False
        merit = float(r @ r)
        for n_dir, d in enumerate(directions):
            step = opts.damping
            for _ in range(21):
                trial = theta + step * d
                try:
                    lp_t, psi_t, r_t_full = resid(trial)
                except (ValueError, FloatingPointError):
                    step *= 0.5
                    continue
                r_t = r_t_full[layout.free]
                m_t = float(r_t @ r_t)
                if np.isfinite(m_t) and m_t < (1.0 - 1e-4 * step) * merit:
                    theta, lp, psi, r_full, r = trial, lp_t, psi_t, r_t_full, r_t
                    norm = float(np.max(np.abs(r)))
                    accepted = True
                    break
                step *= 0.5
            if accepted:
                if n_dir > 0 or newton_failed:
                    diag["gradient_fallbacks"] += 1
                break
        if not accepted:
            diag["line_search_failures"] += 1
            break
        # a positive-nu attempt sliding onto nu = 0 cannot be accepted; stop early
        low_nu_run = low_nu_run + 1 if watch_nu and lp.nu < collapse_level else 0
        if low_nu_run >= _COLLAPSE_PATIENCE:
            diag["nu_collapse"] = True
            break
    return lp, psi, r_full, norm, norm <= opts.tolerance, it, diag


def _package(mp, lp, psi, r_full, norm, conv, it, diag, branch, layout):
    diag = dict(diag)
    diag["residuals"] = tuple(float(v) for v in r_full)
    diag["active"] = tuple(layout.free)
    return SaddleSolution(params=lp, model=mp, s_l=-psi, residual_norm=norm, converged=conv,
                          iterations=it, branch_tag=branch, diagnostics=diag)


def _nu_residual_scan(mp, lp, grid):
    """nu-equation residual on a log grid of nu, other parameters held."""
    vals = []
    for nu in _NU_PROBE:
        _, r = evaluate(replace(lp, nu=float(nu)), mp, grid)
        vals.append(r[5])
    return np.array(vals)


def _solve_positive(mp, init, opts, grid):
    layout = _Layout(fix_q=mp.alpha == 0, fix_nu=False, fixed=init)
    out = _newton(mp, init, layout, opts, grid)
    return _package(mp, *out, Branch.POSITIVE_NU, layout)


def _solve_collapsed(mp, init, opts, grid):
    start = replace(init, nu=0.0)
    layout = _Layout(fix_q=mp.alpha == 0, fix_nu=True, fixed=start)
    out = _newton(mp, start, layout, opts, grid)
    return _package(mp, *out, Branch.COLLAPSED_NU, layout)


def _find_positive(mp, init, opts, grid):
    candidates = []
    primary = _solve_positive(mp, init, opts, grid)
    if primary.converged and primary.params.nu >= opts.nu_floor:
        candidates.append(primary)
    else:
        # multi-start probe over nu, only when the given start fails
        for nu0 in opts.nu_starts:
            sol = _solve_positive(mp, replace(init, nu=float(nu0)), opts, grid)
            if sol.converged and sol.params.nu >= opts.nu_floor:
                candidates.append(sol)
    if not candidates:
        return None
    # nu is maximised over: keep the stationary point with the largest psi
    best = max(candidates, key=lambda s: s.psi)
    best.diagnostics["candidates"] = [(c.params.nu, c.psi) for c in candidates]
    return best


def find_positive(mp: ModelParams, init: LiftingParams | None = None,
                  opts: SolverOptions | None = None) -> SaddleSolution | None:
    """Converged stationary point with ``nu >= opts.nu_floor``, or None.

    Same search as the first stage of :func:`solve` (the given start, then
    the ``opts.nu_starts`` restarts) without the collapsed fallback.
    """
    opts = opts or SolverOptions()
    return _find_positive(mp, init or DEFAULT_INIT, opts, gauss_hermite_grid(opts.quadrature_order))


def solve(mp: ModelParams, init: LiftingParams | None = None,
          opts: SolverOptions | None = None) -> SaddleSolution:
    """Locate a stationary point of psi for fixed ``(alpha, kappa, delta_bar)``.

    The full six-equation system is tried first.  If it does not converge to
    ``nu >= opts.nu_floor``, the five-equation system at ``nu = 0`` is solved
    and the nu-residual is scanned over ``nu in [1e-4, 5]``: a sign change
    seeds one more full solve, otherwise the collapsed solution is returned
    with ``branch_tag = collapsed-nu``.  Non-convergence is reported through
    ``converged=False``, never raised.
    """
    opts = opts or SolverOptions()
    init = init or DEFAULT_INIT
    grid = gauss_hermite_grid(opts.quadrature_order)

    best = _find_positive(mp, init, opts, grid)
    if best is not None:
        return best

    collapsed = _solve_collapsed(mp, init, opts, grid)
    scan = _nu_residual_scan(mp, collapsed.params, grid)
    flips = np.nonzero(np.diff(np.sign(scan)) != 0)[0]
    collapsed.diagnostics["nu_scan_sign_changes"] = len(flips)
    for idx in flips:
        nu0 = float(np.sqrt(_NU_PROBE[idx] * _NU_PROBE[idx + 1]))
        sol = _solve_positive(mp, replace(collapsed.params, nu=nu0), opts, grid)
        if sol.converged and sol.params.nu >= opts.nu_floor:
            return sol
    return collapsed


def continuation_sweep(mp_base: ModelParams, delta_start: float, delta_end: float, step: float,
                       init: LiftingParams | None = None,
                       opts: SolverOptions | None = None) -> list[SaddleSolution]:
    """Solve along ``delta_bar`` from ``delta_start`` to ``delta_end``, warm-starting.

    Raises ``RuntimeError`` if the first point does not converge.  Later
    failures are kept in the output (``converged=False``) and the next point
    restarts from the last converged solution.
    """
    for d in (delta_start, delta_end):
        if not 0 < d < 1:
            raise ValueError(f"delta bounds must lie in (0, 1), got {d!r}")
    if step == 0 or (delta_end - delta_start) * step < 0:
        raise ValueError("step must be non-zero and point from delta_start to delta_end")
    opts = opts or SolverOptions()
    n_steps = int(math.floor(abs(delta_end - delta_start) / abs(step) + 1e-9))
    deltas = [delta_start + i * step for i in range(n_steps + 1)]
    if abs(deltas[-1] - delta_end) > 1e-12:
        deltas.append(delta_end)

    out: list[SaddleSolution] = []
    warm = init or DEFAULT_INIT
    for i, d in enumerate(deltas):
        mp = replace(mp_base, delta_bar=round(d, 12))
        sol = solve(mp, warm, opts)
        if i == 0 and not sol.converged:
            raise RuntimeError(
                f"first continuation point delta_bar={d} did not converge "
                f"(residual {sol.residual_norm:.3e})")
        if sol.converged:
            # a collapsed point keeps the last positive-nu nu as seed
            warm = sol.params if sol.branch_tag is Branch.POSITIVE_NU else replace(
                sol.params, nu=max(warm.nu, 1e-3))
        else:
            log.warning("continuation point delta_bar=%g unconverged (residual %.3e)",
                        d, sol.residual_norm)
        out.append(sol)
    return out
