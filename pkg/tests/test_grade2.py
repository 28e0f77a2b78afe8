import json

import numpy as np
import pytest

from g2duct import fem
from g2duct.analytic import channel_boundary_data, duct_boundary_data
from g2duct.anderson import AAConfig
from g2duct.errors import NonConvergence, ParameterMismatch
from g2duct.grade2 import (assemble_N_divergence, inflow_facets, solve_grade2,
                           solve_grade2_simplified, solve_transport, write_manifest)
from g2duct.mesh import CROSSED, INLET, OUTLET, WALL_CONTRACTION, build_rectangle_mesh
from g2duct.observables import field_difference
from g2duct.params import FluidParams
from g2duct.stokes import (SolverConfig, l2_projection, pressure_space, solve_navier_stokes,
                           solve_stokes_ipm, velocity_space)

TIGHT = SolverConfig(tol_outer=1e-8)


@pytest.fixture(scope="module")
def channel():
    return build_rectangle_mesh(0.0, 1.0, -1.0, 1.0, 2, CROSSED, wall_tag=WALL_CONTRACTION)


@pytest.fixture(scope="module")
def channel_flow(channel):
    p = FluidParams(nu=0.7, alpha1=0.3, alpha2=0.2, U=0.5)
    return p, solve_grade2(channel, p, None, TIGHT, boundary=channel_boundary_data(p))


class TestPieces:
    def test_zero_velocity_gives_zero_load(self, channel):
        vs = velocity_space(channel)
        pi = pressure_space(channel).interpolate(lambda x, y: x * y)
        load = assemble_N_divergence(vs.zero(), pi, FluidParams(alpha1=0.4, alpha2=0.1))
        assert np.all(load == 0)

    def test_transport_without_alpha1_is_projection(self, channel):
        vs = velocity_space(channel)
        u = vs.interpolate(lambda x, y: np.stack([1 - y * y, x * 0], -1))
        pi = pressure_space(channel).interpolate(lambda x, y: -2 * x)
        p = FluidParams(nu=2.5, alpha1=0.0, alpha2=0.3)
        load = assemble_N_divergence(u, pi, p)
        w = solve_transport(u, load, p, channel_boundary_data(p))
        c, _ = l2_projection(vs, load)
        assert np.allclose(w.coefficients, c / 2.5, atol=1e-12)

    @pytest.mark.parametrize("a1,tag", [(0.2, INLET), (-0.2, OUTLET)])
    def test_inflow_set(self, geom, coarse_mesh, a1, tag):
        p = FluidParams(alpha1=a1, alpha2=0.1)
        facets = inflow_facets(coarse_mesh, duct_boundary_data(geom, p), a1)
        assert facets and {t for _, t in facets} == {tag}
        assert inflow_facets(coarse_mesh, duct_boundary_data(geom, p), 0.0) == []


class TestChannel:
    def test_transport_variable(self, channel_flow):
        p, s = channel_flow
        exact = s.w.space.interpolate(channel_boundary_data(p).transport[INLET])
        assert fem.norm(s.w - exact, "L2") < 1e-8
        assert s.converged and s.outer_iterations <= 3

    def test_velocity(self, channel_flow):
        p, s = channel_flow
        exact = s.u.space.interpolate(channel_boundary_data(p).velocity[INLET])
        assert fem.norm(s.u - exact, "H1") < 1e-8

    def test_physical_pressure(self, channel_flow):
        p, s = channel_flow
        x = s.p.space.node_coords
        exact = -2 * p.U * p.nu * x[:, 0] + 4 * (2 * p.alpha1 + p.alpha2) * p.U**2 * x[:, 1] ** 2
        assert np.ptp(s.p.coefficients - exact) < 1e-7

    def test_wall_pressure_is_scaled_auxiliary(self, channel_flow):
        p, s = channel_flow
        wall = s.p.space.tagged_nodes(WALL_CONTRACTION)
        gap = s.p.coefficients[wall] - p.nu * s.pi.coefficients[wall]
        assert np.abs(gap).max() < 1e-12


class TestDuct:
    def test_newtonian_limit_matches_navier_stokes(self, geom, coarse_mesh):
        p = FluidParams(nu=1.0, U=1.0)
        ns = solve_navier_stokes(coarse_mesh, None, 1.0 / p.nu, duct_boundary_data(geom, p), TIGHT)
        g2 = solve_grade2(coarse_mesh, p, geom, TIGHT)
        simp = solve_grade2_simplified(coarse_mesh, p, geom, TIGHT)
        assert field_difference(g2.u, ns.u, "H1", ns.u) < 1e-8
        assert field_difference(simp.u, ns.u, "H1", ns.u) < 1e-6

    def test_formulations_agree(self, geom, coarse_mesh):
        p = FluidParams(nu=1.0, alpha1=0.1, alpha2=-0.1, U=2.0 ** -4)
        a = solve_grade2(coarse_mesh, p, geom, TIGHT)
        b = solve_grade2_simplified(coarse_mesh, p, geom, TIGHT)
        assert field_difference(a.u, b.u, "H1", a.u) < 2e-4

    def test_acceleration_does_not_change_the_limit(self, geom, coarse_mesh):
        p = FluidParams(nu=1.0, alpha1=0.1, alpha2=0.1, U=2.0 ** -4)
        a = solve_grade2(coarse_mesh, p, geom, TIGHT)
        b = solve_grade2(coarse_mesh, p, geom, TIGHT, AAConfig(m_max=5))
        assert field_difference(a.u, b.u, "H1", a.u) < 1e-7
        assert len(b.aa_log) == b.outer_iterations

    def test_simplified_rejects_general_parameters(self, geom, coarse_mesh):
        with pytest.raises(ParameterMismatch):
            solve_grade2_simplified(coarse_mesh, FluidParams(alpha1=0.1, alpha2=0.1), geom)

    def test_iteration_limit(self, geom, coarse_mesh):
        p = FluidParams(alpha1=0.1, alpha2=0.1, U=2.0 ** -4)
        cfg = SolverConfig(outer_max=1)
        with pytest.raises(NonConvergence) as e:
            solve_grade2(coarse_mesh, p, geom, cfg)
        assert len(e.value.history) == 1
        s = solve_grade2(coarse_mesh, p, geom, cfg, raise_on_failure=False)
        assert not s.converged and s.outer_iterations == 1

    def test_manifest(self, geom, coarse_mesh, tmp_path):
        p = FluidParams(alpha1=0.1, alpha2=0.1, U=2.0 ** -4)
        s = solve_grade2(coarse_mesh, p, geom, TIGHT, AAConfig())
        path = tmp_path / "m.json"
        write_manifest(s, path, TIGHT, AAConfig(), extra={"force": -1.0})
        doc = json.loads(path.read_text())
        assert doc["params"]["alpha1"] == 0.1 and doc["solver"]["tol_outer"] == 1e-8
        assert doc["aa"]["m_max"] == 5 and doc["convergence_test"] == "extrapolated iterate"
        assert doc["residuals"] == s.residuals and doc["force"] == -1.0
        assert doc["mesh"]["provenance"] == [0, 3, 4]


def departures(geom, mesh, Re, a1):
    """Relative H1 departures from Stokes and Navier-Stokes, and |z| in L2."""
    p = FluidParams(nu=1.0 / Re, alpha1=a1, alpha2=-a1, U=1.0)
    data = duct_boundary_data(geom, p)
    st = solve_stokes_ipm(mesh, None, None, data)
    ns = solve_navier_stokes(mesh, None, Re, data, TIGHT, AAConfig())
    g = solve_grade2_simplified(mesh, p, geom, TIGHT, AAConfig())
    return (field_difference(ns.u, g.u, "H1", st.u), field_difference(st.u, g.u, "H1", st.u),
            fem.norm(g.z_scalar, "L2"))


def stokes_departure(geom, mesh, Re, a1):
    p = FluidParams(nu=1.0 / Re, alpha1=a1, alpha2=-a1, U=1.0)
    st = solve_stokes_ipm(mesh, None, None, duct_boundary_data(geom, p))
    g = solve_grade2_simplified(mesh, p, geom, TIGHT, AAConfig())
    return field_difference(st.u, g.u, "H1", st.u)


class TestLongDuct:
    @pytest.mark.parametrize("Re,a1,expected", [
        (1.0, 1.0, (6.07e-3, 3.34e-3, 7.6517)),
        (1.0, 0.1, (1.87e-3, 7.00e-3, 8.6597)),
        (10.0, 1.0, (6.64e-2, 6.61e-3, 4.7639)),
    ])
    def test_departures(self, long_geom, long_mesh, Re, a1, expected):
        got = departures(long_geom, long_mesh, Re, a1)
        assert got[0] == pytest.approx(expected[0], rel=0.01)
        assert got[1] == pytest.approx(expected[1], rel=0.01)
        assert got[2] == pytest.approx(expected[2], rel=1e-3)

    @pytest.mark.slow
    @pytest.mark.parametrize("Re", [10.0, 50.0])
    def test_shear_thickening_moves_towards_stokes(self, long_geom, long_mesh, Re):
        d1 = stokes_departure(long_geom, long_mesh, Re, 1.0)
        d10 = stokes_departure(long_geom, long_mesh, Re, 10.0)
        assert d10 < d1
