import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2duct.errors import InsufficientSpan, ParallelLines, RankDeficient
from g2duct.observables import ForceRecord
from g2duct.params import FluidParams
from g2duct.stokes import SolverConfig
from g2duct.sweep import (PI8, SweepGrid, find_crossing, find_symmetry_axis, fit_lines,
                          fit_polynomial, identifiable_range_report, run_sweep,
                          write_fits_csv, write_series)


def record(U, alpha, theta, f, nu=1.0):
    p = FluidParams.polar(alpha, theta, nu=nu, U=U)
    return ForceRecord(U, nu, p.alpha1, p.alpha2, alpha, theta, f * U, f, 3, True)


class TestFits:
    def test_exact_line(self):
        x = np.array([2.0 ** -6, 2.0 ** -7, 2.0 ** -8])
        r = fit_polynomial(x, -11 + 3 * x, 1)
        assert r.max_residual < 1e-13
        assert np.allclose(r.coefficients, [-11, 3], atol=1e-10)

    @settings(max_examples=30, deadline=None)
    @given(st.lists(st.floats(-5, 5), min_size=4, max_size=4))
    def test_cubic_recovered(self, c):
        x = np.linspace(0.01, 0.1, 9)
        f = np.polynomial.polynomial.polyval(x, c)
        r = fit_polynomial(x, f, 3)
        assert np.allclose(r(x), f, atol=1e-10)
        assert np.allclose(r.coefficients[:2], c[:2], atol=1e-8)

    def test_residuals_decrease_with_degree(self):
        x = np.linspace(0.01, 0.1, 8)
        f = np.exp(3 * x)
        res = [fit_polynomial(x, f, d).max_residual for d in (1, 2, 3)]
        assert res[2] < res[1] < res[0]

    def test_rank_deficient(self):
        with pytest.raises(RankDeficient):
            fit_polynomial([1.0, 1.0, 2.0], [0.0, 1.0, 2.0], 2)
        with pytest.raises(ValueError):
            fit_polynomial([1.0, 2.0], [1.0], 1)


class TestCrossing:
    def test_symmetric_lines(self):
        t = np.linspace(-1, 1, 5)
        tc, fc = find_crossing(t, t, -t)
        assert tc == pytest.approx(0.0, abs=1e-15) and fc == pytest.approx(0.0, abs=1e-15)

    @settings(max_examples=40, deadline=None)
    @given(st.floats(-2.6, -2.4), st.floats(0.1, 3.0), st.floats(-3.0, -0.1))
    def test_recovers_intersection(self, t0, s1, s2):
        t = np.array([-2.65, -2.5]) * PI8
        tc_true = t0 * PI8
        tc, _ = find_crossing(t, s1 * (t - tc_true), s2 * (t - tc_true))
        assert tc == pytest.approx(tc_true, abs=1e-12)

    def test_parallel(self):
        t = np.array([0.0, 1.0])
        with pytest.raises(ParallelLines):
            find_crossing(t, t, t + 1)

    def test_too_few(self):
        with pytest.raises(InsufficientSpan):
            find_crossing([0.0], [1.0], [2.0])


class TestSymmetry:
    def test_even_function(self):
        axis = 3 * math.pi / 16
        t = np.arange(-2, 9) * PI8
        ts, score = find_symmetry_axis(t, np.exp(-((t - axis) ** 2)))
        assert ts == pytest.approx(axis, abs=1e-3) and score < 1e-2

    def test_grid_axis_is_exact(self):
        t = np.linspace(-1, 1, 11)
        ts, score = find_symmetry_axis(t, (t - 0.2) ** 2)
        assert ts == pytest.approx(0.2, abs=1e-6) and score < 1e-10

    def test_monotone_has_large_score(self):
        t = np.linspace(0, 1, 11)
        _, score = find_symmetry_axis(t, t)
        assert score > 0.05

    def test_insufficient(self):
        with pytest.raises(InsufficientSpan):
            find_symmetry_axis([0, 1, 2], [0, 1, 0])


class TestReport:
    def test_unidentifiable(self):
        recs = [record(2.0 ** -6, a, j * PI8, -11.0 + 0.1 * j) for a in (0.01, 0.2)
                for j in range(5)]
        rep = identifiable_range_report(recs)
        assert not rep.alpha_identifiable and rep.interval is None
        assert "unidentifiable" in rep.text

    def test_crossing_and_axis(self):
        axis = 3 * math.pi / 16
        th = np.arange(-4, 9) * PI8
        f = lambda a, t: -11 + a * (1 - (t - axis) ** 2) - 0.3 * a
        recs = [record(2.0 ** -6, a, t, f(a, t)) for a in (0.01, 0.2) for t in th]
        rep = identifiable_range_report(recs)
        assert rep.alpha_identifiable
        assert rep.symmetry_axis == pytest.approx(axis, abs=2e-3)
        # curves meet where (t - axis)^2 = 0.7; the secant root is off by at most
        # h^2 max|d''| / (8 min|d'|) over the bracket
        root = axis - math.sqrt(0.7)
        h = PI8
        bound = h * h * 2 / (8 * 2 * (math.sqrt(0.7) - h))
        assert abs(rep.crossing - root) <= bound
        assert rep.interval == (rep.crossing, rep.symmetry_axis)

    def test_monotone_full_range(self):
        th = np.arange(0, 6) * PI8
        recs = [record(2.0 ** -6, a, t, -11 + a * (1 + t)) for a in (0.01, 0.2) for t in th]
        rep = identifiable_range_report(recs)
        assert rep.crossing is None and rep.symmetry_axis is None
        assert rep.interval == pytest.approx((0.0, 5 * PI8))

    def test_one_alpha(self):
        with pytest.raises(InsufficientSpan):
            identifiable_range_report([record(1.0, 0.1, 0.0, 1.0)])


class TestGrid:
    def test_order(self):
        g = SweepGrid(U=[1.0, 0.5], alpha=[0.1], theta=[0.0, 1.0])
        pts = list(g.points())
        assert len(pts) == len(g) == 4
        assert [p.U for p in pts] == [1.0, 0.5, 1.0, 0.5]
        assert [p.argument for p in pts] == [0.0, 0.0, 1.0, 1.0]
        with pytest.raises(ValueError):
            SweepGrid(U=[0.0])

    def test_empty(self, geom, coarse_mesh):
        assert run_sweep(SweepGrid(U=[]), geom, None, None, coarse_mesh) == []

    def test_small_sweep(self, geom, coarse_mesh, tmp_path):
        grid = SweepGrid(U=[2.0 ** -4, 2.0 ** -5], alpha=[0.1], theta=[math.pi / 4])
        cfg = SolverConfig(tol_outer=1e-8)
        a = run_sweep(grid, geom, cfg, None, coarse_mesh, workers=1)
        b = run_sweep(grid, geom, cfg, None, coarse_mesh, workers=1, warm_start=True)
        assert [r.U for r in a] == grid.U and all(r.converged for r in a)
        assert [r.F for r in a] == [r.F for r in run_sweep(grid, geom, cfg, None, coarse_mesh, 1)]
        assert np.allclose([r.F for r in a], [r.F for r in b], rtol=1e-6)
        fits = fit_lines(a, (1,))
        assert len(fits) == 1 and 1 in fits[0][1]
        write_fits_csv(fits, tmp_path / "fits.csv")
        assert (tmp_path / "fits.csv").read_text().startswith("nu,alpha,theta,degree")
        paths = write_series(a, tmp_path / "series")
        assert len(paths) == 3  # one U series, one theta series per U
