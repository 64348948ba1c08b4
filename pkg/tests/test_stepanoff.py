import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate as spi

from torusflow.core import FieldSpec, FourierSeries, Stepanoff, eval_field
from torusflow.errors import SpecError
from torusflow.integrator import flow_map
from torusflow.stepanoff import (StepanoffFlow, check_single_zero, commensurable_zeta, first_root, flow_exact,
                                 inverse_profile, is_lattice_point, large_deviation_demo, profile_integral,
                                 vanishing_analysis)

from conftest import GOLDEN

RHO = FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, 0))


@pytest.fixture(scope="module")
def e1_flow():
    return StepanoffFlow.from_rho(RHO, [1.0, 0.0])


@pytest.fixture(scope="module")
def golden_flow():
    rho = RHO + FourierSeries.sine((1, 1), 0.3) + FourierSeries.cosine((2, -1), 0.2)
    return StepanoffFlow.from_rho(rho, GOLDEN)


class TestProfile:
    def test_frozen_values(self, e1_flow):
        # F(s) = 2 s + sin(2 pi s) / (2 pi)
        assert profile_integral(e1_flow, np.zeros(2), 0.3) == pytest.approx(0.7513653457281313, abs=1e-15)
        assert profile_integral(e1_flow, np.zeros(2), 1.7) == pytest.approx(3.2486346542718687, abs=1e-15)

    @given(st.floats(-3, 3), st.floats(-3, 3), st.floats(-20, 20))
    def test_matches_quadrature(self, y1, y2, t):
        flow = StepanoffFlow.from_rho(RHO + FourierSeries.sine((1, 1), 0.3), GOLDEN)
        y = np.array([y1, y2])
        ref = spi.quad(lambda s: float(flow.rho(y + s * flow.xi)), 0.0, t, limit=2000, epsabs=1e-13)[0]
        assert profile_integral(flow, y, t) == pytest.approx(ref, abs=1e-10)

    def test_vectorised(self, e1_flow):
        t = np.array([0.0, 0.5, 1.0])
        assert np.allclose(profile_integral(e1_flow, np.zeros(2), t), [0.0, 1.0, 2.0], atol=1e-15)

    @given(st.floats(-50, 50))
    def test_inverse(self, t):
        flow = StepanoffFlow.from_rho(RHO, GOLDEN)
        y = np.array([0.2, 0.4])
        s = inverse_profile(flow, y, t)
        assert profile_integral(flow, y, s) == pytest.approx(t, abs=1e-11 * max(1, abs(t)))


class TestExactFlow:
    def test_against_integrator(self, golden_flow):
        y = np.array([0.1, 0.9])
        for t in (0.5, 7.0, -3.0):
            assert np.allclose(flow_exact(golden_flow, y, t), flow_map(golden_flow.spec, y, t, 1e-11), atol=1e-9)

    def test_ode(self, golden_flow):
        y = np.array([0.3, 0.3])
        h = 1e-5
        X = flow_exact(golden_flow, y, 2.0)
        dX = (flow_exact(golden_flow, y, 2.0 + h) - flow_exact(golden_flow, y, 2.0 - h)) / (2 * h)
        assert np.allclose(dX, eval_field(golden_flow.spec, X), atol=1e-8)

    def test_underline_a(self, e1_flow):
        assert e1_flow.underline_a == 0.5

    def test_not_stepanoff(self, arctan):
        with pytest.raises(SpecError):
            StepanoffFlow.from_spec(arctan.field)


class TestCommensurable:
    def test_exact_half(self, e1_flow):
        z = commensurable_zeta(e1_flow, np.array([0.37, 0.11]), 1.0)
        assert tuple(z) == (0.5, 0.0)

    def test_diagonal_depends_on_line(self):
        # rho = 2 + cos(2 pi (y1 - y2)) along (1,1)/sqrt2 is constant on each orbit
        flow = StepanoffFlow.from_rho(FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, -1)), [1, 1])
        T = math.sqrt(2)
        for y in ([0.0, 0.0], [0.25, 0.0]):
            y = np.array(y)
            rho_y = 2.0 + math.cos(2 * math.pi * (y[0] - y[1]))
            assert np.allclose(commensurable_zeta(flow, y, T), flow.xi / rho_y, atol=1e-14)

    def test_errors(self, e1_flow, golden_flow):
        with pytest.raises(SpecError):
            commensurable_zeta(golden_flow, np.zeros(2), 1.0)
        with pytest.raises(SpecError):
            commensurable_zeta(e1_flow, np.zeros(2), -1.0)


@pytest.fixture(scope="module")
def flow(vanishing):
    return StepanoffFlow.from_spec(vanishing.field)


class TestVanishing:
    def test_single_zero(self, flow):
        chk = check_single_zero(flow)
        assert chk.single_zero and np.all(chk.hessian_eigenvalues > 0)

    def test_second_zero_detected(self):
        # zeros at (0, 0) and (1/2, 0)
        g = FourierSeries.constant(2, 2.0) - FourierSeries.cosine((2, 0)) - FourierSeries.cosine((0, 1))
        spec = FieldSpec(2, Stepanoff(tuple(GOLDEN), profile=g, exponent=1.0, vanishing=True))
        assert not check_single_zero(StepanoffFlow.from_spec(spec)).single_zero

    def test_underline_a_polar_oracle(self, flow):
        assert flow.underline_a == pytest.approx(0.8754076127466103, abs=1e-8)

    def test_first_root(self, flow):
        y = np.array([1.0, 1.0]) - 2.5 * flow.xi
        assert first_root(flow, y) == pytest.approx(2.5, abs=1e-12)
        assert first_root(flow, np.array([0.3, 0.1]), search=20.0) is None

    def test_absorbed(self, flow):
        for tau in (0.5, 3.0):
            y = np.array([2.0, -1.0]) - tau * flow.xi
            c = vanishing_analysis(flow, y)
            assert c.kind == "absorbed" and abs(c.tau - tau) <= 1e-9
            assert np.allclose(c.limit_point, [2.0, -1.0], atol=1e-9)
            # the orbit approaches but never reaches the zero
            X = flow_map(flow.spec, y, 200.0, 1e-10)
            assert np.linalg.norm(X - c.limit_point) <= 1e-3
            assert (X - y) @ flow.xi < tau

    def test_fixed_and_emanating(self, flow):
        assert vanishing_analysis(flow, np.array([3.0, 1.0])).kind == "fixed"
        c = vanishing_analysis(flow, 0.7 * flow.xi, horizon=200.0)
        assert c.kind == "emanating"

    def test_lattice_helper(self):
        assert is_lattice_point([1.0, -2.0]) and not is_lattice_point([1.0, 0.5])

    def test_large_deviation_linear(self, flow):
        rows = large_deviation_demo(flow, [1.0, 2.0, 4.0], t_final=500.0)
        for r in rows:
            assert r.displacement == pytest.approx(r.tau, abs=1e-9)
            assert 0 < r.finite_time_displacement <= r.displacement

    def test_exact_flow_reaches_limit(self, flow):
        y = -1.5 * flow.xi
        pt = flow_exact(flow, y, 1e6, detail=True)
        assert pt.reached_limit and np.allclose(pt.point, 0.0, atol=1e-12)
        mid = flow_exact(flow, y, 0.5)
        assert np.allclose(mid, flow_map(flow.spec, y, 0.5, 1e-11), atol=1e-8)
