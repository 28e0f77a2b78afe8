import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2duct.errors import DegenerateDifferences, G2DuctError
from g2duct.fem import FunctionSpace
from g2duct.mesh import CROSSED, WALL_CONTRACTION, build_rectangle_mesh
from g2duct.observables import (CSV_COLUMNS, ForceRecord, aitken_extrapolate,
                                aitken_sensitivity, field_difference, force_integral,
                                force_integral_nested, pressure_drop, read_records,
                                write_records)
from g2duct.params import FluidParams
from g2duct.stokes import pressure_space, velocity_space
from g2duct.verify import AITKEN_TRIPLES, aitken_bound


@pytest.fixture(scope="module")
def channel():
    return build_rectangle_mesh(0.0, 2.0, -1.0, 1.0, 2, CROSSED, wall_tag=WALL_CONTRACTION)


def poiseuille_fields(mesh, U=1.0):
    u = velocity_space(mesh).interpolate(lambda x, y: np.stack([U * (1 - y * y), 0 * x], -1))
    pi = pressure_space(mesh).interpolate(lambda x, y: -2 * U * x)
    return u, pi


class TestAitken:
    @pytest.mark.parametrize("triple,limit", AITKEN_TRIPLES)
    def test_published_triples(self, triple, limit):
        assert abs(aitken_extrapolate(*triple) - limit) <= aitken_bound(triple)

    def test_geometric(self):
        assert aitken_extrapolate(0.5, 0.25, 0.125) == pytest.approx(0.0, abs=1e-15)
        assert aitken_extrapolate(3.5, 3.25, 3.125) == pytest.approx(3.0, abs=1e-14)

    def test_degenerate(self):
        with pytest.raises(DegenerateDifferences):
            aitken_extrapolate(1.0, 2.0, 3.0)
        with pytest.raises(DegenerateDifferences):
            aitken_sensitivity(1.0, 2.0, 3.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(-20, 20), st.floats(0.1, 2.0), st.floats(0.2, 0.8))
    def test_sensitivity_matches_finite_differences(self, a, d, q):
        x = np.array([a, a + d, a + d + q * d])
        g = aitken_sensitivity(*x)
        h = 1e-6 * d
        for i in range(3):
            e = np.zeros(3)
            e[i] = h
            fd = (aitken_extrapolate(*(x + e)) - aitken_extrapolate(*(x - e))) / (2 * h)
            assert g[i] == pytest.approx(fd, rel=1e-5, abs=1e-7)
        assert g.sum() == pytest.approx(1.0)  # shifting all inputs shifts the limit


class TestForce:
    @pytest.mark.parametrize("nu,U", [(1.0, 1.0), (2.0, 0.25)])
    def test_channel(self, channel, nu, U):
        u, pi = poiseuille_fields(channel, U)
        assert force_integral(u, pi, nu) == pytest.approx(-4 * nu * U * 2.0, abs=1e-12)
        # walls are horizontal: the pressure does not contribute
        assert force_integral(u, pi * 0.0, nu) == pytest.approx(-8 * nu * U, abs=1e-12)

    def test_zero(self, channel):
        u, pi = poiseuille_fields(channel)
        assert force_integral(u * 0.0, pi * 0.0, 1.0) == 0.0

    def test_pressure_forms_agree(self, channel):
        vs = velocity_space(channel)
        u = vs.interpolate(lambda x, y: np.stack([(1 - y * y) * (1 + x), 0 * x], -1))
        pi = pressure_space(channel).interpolate(lambda x, y: x * y + y)
        nu = 0.3
        a = force_integral(u, pi, nu)
        b = force_integral(u, pi * nu, nu, pressure="physical")
        assert a == pytest.approx(b, abs=1e-13)
        with pytest.raises(ValueError):
            force_integral(u, pi, nu, pressure="total")

    def test_nested_variant(self, channel):
        u, pi = poiseuille_fields(channel)
        assert force_integral_nested(u, pi, 1.0) == pytest.approx(force_integral(u, pi, 1.0))
        assert force_integral_nested(u, pi, 2.0) == pytest.approx(2 * 2 * (-8.0), abs=1e-11)

    def test_missing_tag(self):
        m = build_rectangle_mesh(0.0, 1.0, 0.0, 1.0, 1, CROSSED)
        u, pi = poiseuille_fields(m)
        with pytest.raises(G2DuctError):
            force_integral(u, pi, 1.0)


class TestPressureDrop:
    def test_linear(self, channel):
        p = pressure_space(channel).interpolate(lambda x, y: -2 * 0.5 * 3.0 * x + y * y)
        assert pressure_drop(p) == pytest.approx(2 * 0.5 * 3.0 * 2.0, abs=1e-12)

    def test_constant(self, channel):
        p = pressure_space(channel).interpolate(lambda x, y: 7.0 + 0 * x)
        assert pressure_drop(p) == pytest.approx(0.0, abs=1e-13)


class TestFieldDifference:
    def test_basic(self, channel):
        u, _ = poiseuille_fields(channel)
        v = u * 2.0
        assert field_difference(u, u) == 0.0
        assert field_difference(u, v) == field_difference(v, u)
        assert field_difference(v, u, "H1", u) == pytest.approx(1.0)

    def test_space_mismatch(self, channel):
        a = FunctionSpace(channel, 2, 2).zero()
        b = FunctionSpace(channel, 3, 2).zero()
        with pytest.raises(ValueError):
            field_difference(a, b)


class TestRecords:
    def test_round_trip(self, tmp_path, channel):
        p = FluidParams.polar(0.1, 3 * np.pi / 8, U=2.0 ** -6)
        recs = [ForceRecord.from_solve(-0.171, p, 3, True, channel),
                ForceRecord.from_solve(-0.2, p.with_(U=2.0 ** -7), 4, False, channel)]
        path = tmp_path / "r.csv"
        write_records(recs, path)
        assert path.read_text().splitlines()[0] == ",".join(CSV_COLUMNS)
        back = read_records(path)
        assert [r.converged for r in back] == [True, False]
        assert back[0].F_over_U == pytest.approx(-0.171 * 64, rel=1e-12)
        assert back == recs

    def test_bad_columns(self, tmp_path):
        path = tmp_path / "r.csv"
        path.write_text("U,F\n1,2\n")
        with pytest.raises(G2DuctError):
            read_records(path)
