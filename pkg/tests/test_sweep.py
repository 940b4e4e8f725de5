import math

import pytest

from abple.kernels import ModelParams
from abple.saddle import Branch, SolverOptions
from abple.sweep import (
    Curve,
    CurvePoint,
    delta_grid,
    detect_breakdown,
    refine_breakdown,
    s_max,
)

pytestmark = pytest.mark.filterwarnings("ignore::RuntimeWarning")


def _point(delta, nu, s_l=0.01):
    return CurvePoint(delta_bar=delta, s_l=s_l, s_max=s_max(delta), nu=nu, p1=0.9, p2=0.5,
                      q1s=0.5, q2s=0.2, c2=4.0, residual_norm=1e-10, converged=True,
                      breakdown=nu == 0 or s_l <= 0)


def _curve(nus, s_ls=None):
    deltas = [round(0.9 + 0.01 * i, 12) for i in range(len(nus))]
    s_ls = s_ls or [0.01] * len(nus)
    return Curve(model=ModelParams(alpha=0.78),
                 points=[_point(d, n, s) for d, n, s in zip(deltas, nus, s_ls)])


class TestSMax:
    def test_values(self):
        assert s_max(0.0) == pytest.approx(math.log(2.0), rel=1e-15)
        assert s_max(1.0) == 0.0
        d = 0.005
        assert s_max(0.99) == pytest.approx(-d * math.log(d) - (1 - d) * math.log(1 - d),
                                            rel=1e-14)

    @pytest.mark.parametrize("bad", [-0.1, 1.1])
    def test_range(self, bad):
        with pytest.raises(ValueError):
            s_max(bad)

    def test_decreasing(self):
        vals = [s_max(d) for d in delta_grid(0.0, 1.0, 0.05)]
        assert all(a > b for a, b in zip(vals, vals[1:]))


class TestGrid:
    def test_acceptance_grid(self):
        g = delta_grid(0.90, 0.999, 0.002)
        assert g[0] == 0.9 and g[-1] == 0.999 and g[-2] == 0.998
        assert len(g) == 51

    def test_exact_end(self):
        assert delta_grid(0.1, 0.5, 0.1) == [0.1, 0.2, 0.3, 0.4, 0.5]


class TestDetectBreakdown:
    def test_none(self):
        assert detect_breakdown(_curve([0.3] * 6), 1e-4) is None

    def test_nu_hits_zero(self):
        assert detect_breakdown(_curve([0.3, 0.2, 0.1, 0.0, 0.0]), 1e-4) == 0.93

    def test_non_positive_entropy(self):
        assert detect_breakdown(_curve([0.3] * 4, [0.02, 0.01, -1e-6, 0.01]), 1e-4) == 0.92

    def test_smallest_delta_reported(self):
        assert detect_breakdown(_curve([0.3, 0.0, 0.3, 0.0]), 1e-4) == 0.91

    def test_monotone_in_floor(self):
        curve = _curve([0.3, 0.2, 0.05, 0.01, 1e-3, 1e-5, 0.0])
        floors = [0.0, 1e-6, 1e-4, 2e-3, 0.02, 0.1, 0.25, 0.5]
        found = [detect_breakdown(curve, f) for f in floors]
        found = [math.inf if x is None else x for x in found]
        assert all(a >= b for a, b in zip(found, found[1:]))


def test_point_from_collapsed_solution_is_breakdown():
    from abple.saddle import solve
    sol = solve(ModelParams(alpha=0.78, delta_bar=0.996))
    pt = CurvePoint.from_solution(sol)
    assert sol.branch_tag is Branch.COLLAPSED_NU
    assert pt.breakdown and pt.nu == 0.0
    assert pt.s_max == s_max(0.996)


class TestRealCurves:
    def test_077_has_no_breakdown(self, curve_077):
        curve, _ = curve_077
        assert curve.breakdown_delta is None
        assert all(p.converged and not p.breakdown for p in curve.points)

    def test_078_breakdown(self, curve_078):
        curve, _ = curve_078
        assert curve.breakdown_delta is not None
        assert abs(curve.breakdown_delta - 0.993) <= 0.003
        healthy = [p for p in curve.points if p.delta_bar < curve.breakdown_delta]
        assert all(p.nu >= 1e-4 for p in healthy)

    @pytest.mark.parametrize("which", ["curve_077", "curve_078"])
    def test_counting_bound(self, which, request):
        curve, _ = request.getfixturevalue(which)
        for p in curve.points:
            if p.converged:
                assert p.s_l <= p.s_max + 1e-3

    def test_entropy_decreases_before_breakdown(self, curve_078):
        curve, _ = curve_078
        healthy = [p.s_l for p in curve.points if not p.breakdown]
        assert all(a > b for a, b in zip(healthy, healthy[1:]))

    def test_refined_breakdown(self, curve_078):
        curve, _ = curve_078
        refined = refine_breakdown(curve, SolverOptions())
        step_before = max(p.delta_bar for p in curve.points if p.delta_bar < curve.breakdown_delta)
        assert step_before < refined <= curve.breakdown_delta
        assert abs(refined - 0.993) <= 0.003

    def test_reemergence_is_flagged(self, curve_078):
        curve, _ = curve_078
        if curve.reemergence_delta is not None:
            assert curve.reemergence_delta > curve.breakdown_delta
            assert isinstance(curve.reemergence_reliable, bool)


def test_build_curves_in_parallel_matches_serial():
    from abple.sweep import build_curve, build_curves
    models = [ModelParams(alpha=0.77), ModelParams(alpha=0.0)]
    par = build_curves(models, (0.98, 0.99), 0.005, max_workers=2)
    for mp, curve in zip(models, par):
        serial = build_curve(mp, (0.98, 0.99), 0.005)
        assert curve.points == serial.points
