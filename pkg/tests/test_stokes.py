import numpy as np
import pytest

from g2duct import fem
from g2duct.analytic import channel_boundary_data, duct_boundary_data
from g2duct.errors import ConfigError, IncompatibleBoundaryData, NonConvergence
from g2duct.mesh import CROSSED, WALL_CONTRACTION, build_rectangle_mesh, refine_uniform
from g2duct.observables import field_difference, force_integral, pressure_drop
from g2duct.params import FluidParams
from g2duct.stokes import (EARLY_EXIT, BoundaryData, PenaltyOperator, SolverConfig,
                           pressure_space, recover_pressure, solve_navier_stokes,
                           solve_stokes_ipm, velocity_space)
from g2duct.verify import poiseuille_check


@pytest.fixture(scope="module")
def channel():
    return build_rectangle_mesh(0.0, 1.0, -1.0, 1.0, 2, CROSSED, wall_tag=WALL_CONTRACTION)


def zero_data():
    z = lambda x, y: np.zeros(np.shape(x) + (2,))
    return BoundaryData({"inlet": z, "outlet": z}, {}, {}, "custom")


class TestConfig:
    @pytest.mark.parametrize("kw", [dict(rho=0), dict(tol_outer=-1), dict(early_exit_ratio=1.0),
                                    dict(ipm_max=0), dict(degree=5), dict(outer_norm="Linf")])
    def test_rejects(self, kw):
        with pytest.raises(ConfigError):
            SolverConfig(**kw)

    def test_defaults(self):
        c = SolverConfig()
        assert (c.rho, c.tol_div, c.degree, c.outer_norm) == (1e4, 1e-10, 4, "L2")


class TestIPM:
    def test_zero_data(self, channel):
        st = solve_stokes_ipm(channel, None, None, zero_data())
        assert st.ipm_iterations == 1
        assert np.all(st.u.coefficients == 0) and np.all(st.pi.coefficients == 0)

    @pytest.mark.parametrize("nu,U,L", [(1.0, 1.0, 1.0), (0.5, 3.0, 2.0)])
    def test_poiseuille_exact(self, nu, U, L):
        err, ferr, st = poiseuille_check(n=2, nu=nu, U=U, length=L)
        assert err < 1e-9
        assert abs(ferr) < 1e-8
        assert st.div_norm <= 1e-10

    def test_poiseuille_pressure(self, channel):
        st = solve_stokes_ipm(channel, None, None, channel_boundary_data(FluidParams()))
        node = st.pi.space.node_coords
        # pi = -2x up to a constant
        ref = -2 * node[:, 0]
        assert np.ptp(st.pi.coefficients - ref) < 1e-8

    def test_invariant_under_refinement(self, channel):
        data = channel_boundary_data(FluidParams(U=2.0))
        fine = refine_uniform(channel)
        for m in (channel, fine):
            st = solve_stokes_ipm(m, None, None, data)
            assert force_integral(st.u, st.pi, 1.0) / 2.0 == pytest.approx(-4.0, abs=1e-8)

    def test_body_force(self, channel):
        # u = 0 on the boundary and w = grad(x y): the solution is u = 0, pi = x y
        vs = velocity_space(channel)
        w = vs.interpolate(lambda x, y: np.stack([y, x], -1))
        st = solve_stokes_ipm(channel, vs, w, zero_data())
        assert fem.norm(st.u, "H1") < 1e-9
        exact = st.pi.space.interpolate(lambda x, y: x * y)
        assert fem.norm(st.pi - exact, "L2") < 1e-7

    def test_incompatible_flux(self, channel):
        data = channel_boundary_data(FluidParams())
        bad = BoundaryData({"inlet": data.velocity["inlet"],
                            "outlet": lambda x, y: 2 * data.velocity["outlet"](x, y)},
                           {}, {}, "custom")
        with pytest.raises(IncompatibleBoundaryData):
            solve_stokes_ipm(channel, None, None, bad)

    def test_nonconvergence_carries_history(self, channel):
        cfg = SolverConfig(rho=1e-3, ipm_max=3, early_exit=False)
        with pytest.raises(NonConvergence) as e:
            solve_stokes_ipm(channel, None, None, channel_boundary_data(FluidParams()), cfg)
        assert len(e.value.history) == 3

    def test_early_exit(self, channel):
        cfg = SolverConfig(rho=1e-2, ipm_max=50)
        st = solve_stokes_ipm(channel, None, None, channel_boundary_data(FluidParams()), cfg)
        assert st.status == EARLY_EXIT
        assert st.div_history[-1] / st.div_history[-2] > 0.5

    def test_operator_cache(self, channel):
        vs = velocity_space(channel)
        assert PenaltyOperator.get(vs, 1e4) is PenaltyOperator.get(vs, 1e4)
        assert PenaltyOperator.get(vs, 1e4) is not PenaltyOperator.get(vs, 1e3)


class TestPressureRecovery:
    def test_zero(self, channel):
        vs = velocity_space(channel)
        assert np.all(recover_pressure(vs.zero(), pressure_space(channel)).coefficients == 0)

    def test_linear_divergence(self, channel):
        # z = -(x^2/2, y^2/2): -div z = x + y
        vs = velocity_space(channel)
        z = vs.interpolate(lambda x, y: -0.5 * np.stack([x * x, y * y], -1))
        ps = pressure_space(channel)
        pi = recover_pressure(z, ps, zero_mean=False)
        assert np.allclose(pi.coefficients, ps.interpolate(lambda x, y: x + y).coefficients,
                           atol=1e-11)
        assert fem.integral(recover_pressure(z, ps)) == pytest.approx(0.0, abs=1e-12)


class TestNavierStokes:
    def test_zero_reynolds_is_stokes(self, channel):
        data = channel_boundary_data(FluidParams())
        a = solve_navier_stokes(channel, None, 0.0, data)
        b = solve_stokes_ipm(channel, None, None, data)
        assert np.array_equal(a.u.coefficients, b.u.coefficients)

    def test_poiseuille_unchanged(self, channel):
        # u . grad u = 0 for parallel flow
        data = channel_boundary_data(FluidParams())
        a = solve_navier_stokes(channel, None, 5.0, data, SolverConfig(tol_outer=1e-10))
        b = solve_stokes_ipm(channel, None, None, data)
        assert field_difference(a.u, b.u, "H1") < 1e-8
        assert a.outer_iterations <= 3

    def test_negative_reynolds(self, channel):
        with pytest.raises(ConfigError):
            solve_navier_stokes(channel, None, -1.0, channel_boundary_data(FluidParams()))

    def test_duct_departure_from_stokes(self, long_geom, long_mesh):
        data = duct_boundary_data(long_geom, FluidParams(U=1.0))
        st = solve_stokes_ipm(long_mesh, None, None, data)
        ns = solve_navier_stokes(long_mesh, None, 1.0, data, SolverConfig(tol_outer=1e-8))
        rel = field_difference(ns.u, st.u, "H1", st.u)
        assert rel == pytest.approx(8.09e-3, rel=0.05)
        assert all(b < a for a, b in zip(ns.residuals, ns.residuals[1:]))

    def test_long_duct_reference_values(self, long_geom, long_mesh):
        data = duct_boundary_data(long_geom, FluidParams(U=1.0))
        st = solve_stokes_ipm(long_mesh, None, None, data)
        assert fem.norm(st.u, "H1") == pytest.approx(9.2616, rel=1e-3)
        ns = solve_navier_stokes(long_mesh, None, 1.0, data, SolverConfig(tol_outer=1e-8))
        # inlet-mean minus outlet-mean pressure; loose, the reference definition is uncertain
        assert pressure_drop(ns.pi) == pytest.approx(58.45, rel=0.01)
