"""Local-entropy curves, the counting upper bound, and breakdown detection."""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

from scipy.special import xlogy

from .kernels import ModelParams
from .saddle import (
    DEFAULT_INIT,
    P1_MARGIN,
    Branch,
    SaddleSolution,
    SolverOptions,
    continuation_sweep,
    find_positive,
    solve,
)

ANCHOR_DELTA = 0.99
# p1 this close to 1 means the erfc kernel is numerically saturated
_P1_SATURATION = 1e-4


def s_max(delta_bar: float) -> float:
    """Binary entropy (nats) of the Hamming fraction ``(1 - delta_bar) / 2``."""
    if not 0.0 <= delta_bar <= 1.0:
        raise ValueError(f"delta_bar must lie in [0, 1], got {delta_bar!r}")
    d = 0.5 * (1.0 - delta_bar)
    # + 0.0 turns the -0.0 at delta_bar = 1 into 0.0
    return float(-xlogy(d, d) - xlogy(1.0 - d, 1.0 - d)) + 0.0


@dataclass(frozen=True)
class CurvePoint:
    delta_bar: float
    s_l: float
    s_max: float
    nu: float
    p1: float
    p2: float
    q1s: float
    q2s: float
    c2: float
    residual_norm: float
    converged: bool
    breakdown: bool

    @classmethod
    def from_solution(cls, sol: SaddleSolution) -> "CurvePoint":
        p = sol.params
        d = sol.model.delta_bar
        return cls(delta_bar=d, s_l=sol.s_l, s_max=s_max(d), nu=p.nu, p1=p.p1, p2=p.p2,
                   q1s=p.q1s, q2s=p.q2s, c2=p.c2, residual_norm=sol.residual_norm,
                   converged=sol.converged,
                   breakdown=sol.branch_tag is Branch.COLLAPSED_NU or sol.s_l <= 0)


@dataclass
class Curve:
    model: ModelParams
    points: list[CurvePoint]
    breakdown_delta: float | None = None
    refined_breakdown_delta: float | None = None
    # return of a positive nu past the breakdown, and whether p1 was saturated there
    reemergence_delta: float | None = None
    reemergence_reliable: bool | None = None
    reemergence_solution: SaddleSolution | None = field(default=None, repr=False)
    solutions: list[SaddleSolution] = field(default_factory=list, repr=False)


def detect_breakdown(curve: Curve, nu_floor: float) -> float | None:
    """Smallest ``delta_bar`` whose point has ``nu < nu_floor`` or ``s_l <= 0``."""
    hits = [p.delta_bar for p in curve.points if p.nu < nu_floor or p.s_l <= 0]
    return min(hits) if hits else None


def delta_grid(lo: float, hi: float, step: float) -> list[float]:
    """``lo, lo + step, ...`` up to ``hi`` (appended if the step overshoots)."""
    n = int(math.floor((hi - lo) / step + 1e-9))
    pts = [round(lo + i * step, 12) for i in range(n + 1)]
    if hi - pts[-1] > 1e-12:
        pts.append(round(hi, 12))
    return pts


def build_curve(mp: ModelParams, delta_range: tuple[float, float], step: float,
                opts: SolverOptions | None = None, init=None, refine: bool = False,
                probe: bool = True, anchor: float = ANCHOR_DELTA) -> Curve:
    """Solve on the grid ``delta_range[0], +step, ..., delta_range[1]``.

    Continuation starts at the grid point nearest ``anchor`` (where the
    default initial guess is reliable) and runs outward in both directions.
    With ``refine=True`` the breakdown is bisected to 1e-4 between the last
    healthy and first broken grid point; ``probe`` enables the search for a
    positive-nu root beyond the breakdown.
    """
    opts = opts or SolverOptions()
    lo, hi = delta_range
    if not (0 < lo < hi < 1) or step <= 0:
        raise ValueError("need 0 < delta_min < delta_max < 1 and step > 0")
    grid = delta_grid(lo, hi, step)
    k = min(range(len(grid)), key=lambda i: abs(grid[i] - anchor))
    up = continuation_sweep(mp, grid[k], grid[-1], step, init, opts) if k < len(grid) - 1 else []
    if up:
        seed = up[0].params
    else:
        first = solve(replace(mp, delta_bar=grid[k]), init, opts)
        if not first.converged:
            raise RuntimeError(f"anchor point delta_bar={grid[k]} did not converge")
        up, seed = [first], first.params
    down = continuation_sweep(mp, grid[k], grid[0], -step, seed, opts)[1:] if k > 0 else []
    sols = sorted(down + up, key=lambda s: s.model.delta_bar)
    curve = Curve(model=mp, points=[CurvePoint.from_solution(s) for s in sols], solutions=sols)
    curve.breakdown_delta = detect_breakdown(curve, opts.nu_floor)
    if curve.breakdown_delta is not None:
        if probe:
            _probe_reemergence(curve, opts)
        if refine:
            curve.refined_breakdown_delta = refine_breakdown(curve, opts)
    return curve


def refine_breakdown(curve: Curve, opts: SolverOptions, tol: float = 1e-4) -> float | None:
    """Bisect between the last healthy and first broken point of ``curve``."""
    if curve.breakdown_delta is None:
        return None
    idx = next(i for i, p in enumerate(curve.points) if p.delta_bar == curve.breakdown_delta)
    if idx == 0:
        return curve.breakdown_delta
    good = curve.solutions[idx - 1]
    lo, hi = good.model.delta_bar, curve.breakdown_delta
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        sol = solve(replace(curve.model, delta_bar=mid), good.params, opts)
        broken = sol.branch_tag is Branch.COLLAPSED_NU or sol.params.nu < opts.nu_floor or sol.s_l <= 0
        if broken:
            hi = mid
        else:
            lo, good = mid, sol
    return hi


def _probe_reemergence(curve: Curve, opts: SolverOptions) -> None:
    """Look for a positive-nu root past the breakdown, cold-starting each point.

    Continuation from a collapsed point stays collapsed, so the curve points
    themselves cannot show a return of ``nu > 0``; the probe restarts from
    the default initial guess instead.  The first hit is recorded, flagged
    unreliable when ``p1`` sits on its numerical ceiling.
    """
    for p in curve.points:
        if p.delta_bar <= curve.breakdown_delta:
            continue
        sol = find_positive(replace(curve.model, delta_bar=p.delta_bar), DEFAULT_INIT, opts)
        if sol is not None and sol.s_l > 0:
            curve.reemergence_delta = p.delta_bar
            curve.reemergence_reliable = sol.params.p1 < 1.0 - P1_MARGIN - _P1_SATURATION
            curve.reemergence_solution = sol
            return


def _build_one(args):
    mp, delta_range, step, opts = args
    return build_curve(mp, delta_range, step, opts)


def build_curves(models: list[ModelParams], delta_range, step, opts=None,
                 max_workers: int | None = None) -> list[Curve]:
    """Build independent curves (e.g. several alpha values) in worker processes."""
    opts = opts or SolverOptions()
    jobs = [(mp, delta_range, step, opts) for mp in models]
    with ProcessPoolExecutor(max_workers=max_workers) as pool:
        return list(pool.map(_build_one, jobs))
