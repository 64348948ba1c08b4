import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.core import FourierSeries, constant_field, eval_field, fourier_field, stepanoff_field
from torusflow.errors import HorizonError, SpecError, StepUnderflowError
from torusflow.integrator import (Trajectory, dense_solution, detect_periodic_orbit, flow_map, integrate,
                                  verify_flow_invariants)
from torusflow.presets import preset

from conftest import GOLDEN


def rho_cos():
    return FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, 0))


class TestIntegrate:
    def test_linear_flow(self):
        xi = np.array([0.3, -1.1])
        tr = integrate(constant_field(xi), np.zeros(2), 10.0, 1e-9, dt=0.5)
        assert np.abs(tr.lifts - tr.times[:, None] * xi).max() <= 1e-9

    def test_arctan_closed_form(self, arctan):
        X = flow_map(arctan.field, np.array([0.0, 0.25]), 1.0, 1e-10)
        # X_2 = arctan(e^{4 pi^2} tan(pi/4)) / pi, which is 1/2 to double precision
        assert np.allclose(X, [1.0, math.atan(math.exp(4 * math.pi**2)) / math.pi], atol=1e-6)

    def test_cos2_stationary_line(self):
        p = preset("cos2_profile", gamma=1.0)
        x = np.array([0.5, 0.3])
        tr = integrate(p.field, x, 20.0, 1e-9, dt=1.0)
        assert np.array_equal(tr.lifts, np.repeat(x[None], len(tr.times), axis=0))

    def test_trajectory_invariants(self, example51):
        tr = integrate(example51.field, np.array([0.2, 0.7]), 30.0, 1e-9, dt=0.1)
        assert np.array_equal(tr.lifts[0], tr.initial)
        assert np.all(np.diff(tr.times) > 0)
        step = np.linalg.norm(np.diff(tr.lifts, axis=0), axis=1)
        assert np.all(step <= example51.field.sup_bound * np.diff(tr.times) * (1 + 1e-9))

    def test_horizon_cap(self):
        with pytest.raises(HorizonError):
            integrate(constant_field([1.0, 0.0]), np.zeros(2), 2e6)

    def test_bad_inputs(self):
        f = constant_field([1.0, 0.0])
        with pytest.raises(SpecError):
            integrate(f, np.zeros(3), 1.0)
        with pytest.raises(SpecError):
            integrate(f, np.zeros(2), 1.0, t_eval=[0.0, 0.5, 0.4])
        with pytest.raises(SpecError):
            integrate(f, np.zeros(2), -1.0)

    def test_step_underflow_reports_location(self):
        f = fourier_field([FourierSeries.constant(2, 1.0) + FourierSeries.cosine((1, 0), 1e13),
                           FourierSeries.sine((0, 37), 1e13)])
        with pytest.raises(StepUnderflowError) as err:
            integrate(f, np.array([0.1, 0.2]), 1.0)
        assert err.value.location is not None and err.value.time is not None

    def test_backward_flow_inverts_forward(self, example51):
        x = np.array([0.4, 0.1])
        y = flow_map(example51.field, x, 7.5, 1e-11)
        assert np.allclose(flow_map(example51.field, y, -7.5, 1e-11), x, atol=1e-9)

    def test_dense_output(self, example51):
        x = np.array([0.1, 0.2])
        sol = dense_solution(example51.field, x, 10.0, 1e-10)
        for t in (0.0, 1.3, 9.99):
            assert np.allclose(sol(t)[0], flow_map(example51.field, x, t, 1e-10), atol=1e-8)
        with pytest.raises(SpecError):
            sol(11.0)

    def test_csv_round_trip(self, tmp_path, example51):
        tr = integrate(example51.field, np.array([0.3, 0.3]), 2.0, 1e-9, dt=0.25)
        path = tmp_path / "orbit.csv"
        tr.to_csv(path, manifest="abc")
        back = Trajectory.from_csv(path)
        assert np.array_equal(back.lifts, tr.lifts) and back.tolerance == tr.tolerance
        meta = json.loads(path.with_suffix(".meta.json").read_text())
        assert meta["rejected_steps"] == tr.rejected_steps and meta["manifest"] == "abc"
        assert path.read_text().splitlines()[1] == "t,x1,x2"

    @pytest.mark.parametrize("name", ["cos2_profile", "separable", "example_5_1", "vanishing_stepanoff"])
    def test_halving_tol_reduces_closed_form_error(self, name):
        p = preset(name)
        pts = np.random.default_rng(0).uniform(0, 1, (8, 2))

        def rms(tol):
            return math.sqrt(np.mean([np.sum((flow_map(p.field, x, t, tol) - p.exact_flow(t, x)) ** 2)
                                      for x in pts for t in (3.0, 10.0)]))

        assert rms(1e-7) / rms(5e-8) >= 1.5

    def test_tiny_horizon(self):
        f = fourier_field([FourierSeries.constant(2, 1.0) + FourierSeries.cosine((1, 1), 0.5),
                           FourierSeries.sine((0, 1), 0.5)])
        x = np.array([0.3, 0.8])
        assert np.allclose(flow_map(f, x, 1e-38), x, atol=1e-30)


@st.composite
def random_field(draw, d):
    comps = []
    for _ in range(d):
        s = FourierSeries.constant(d, draw(st.floats(-1, 1)))
        for _ in range(3):
            n = draw(st.tuples(*[st.integers(-2, 2)] * d).filter(any))
            s = s + FourierSeries.cosine(n, draw(st.floats(-0.5, 0.5))) + FourierSeries.sine(n, draw(st.floats(-0.5, 0.5)))
        comps.append(s)
    return fourier_field(comps)


class TestInvariants:
    def test_constant_exact(self):
        rep = verify_flow_invariants(constant_field([0.7, 0.2]), [(np.zeros(2), 1.0, 2.0, (1, 1))])
        assert rep.semigroup <= 1e-14 and rep.equivariance <= 1e-14

    def test_example51(self, example51):
        tol = 1e-9
        rep = verify_flow_invariants(example51.field, [(np.zeros(2), 1.0, 2.0, (1, 1))], tol)
        assert rep.passed(5)

    def test_arctan_against_closed_form(self, arctan):
        tol = 1e-9
        x = np.array([0.1, 0.3])
        for s, t in [(0.5, 1.0), (2.0, 3.0)]:
            composed = flow_map(arctan.field, flow_map(arctan.field, x, s, tol), t, tol)
            assert np.abs(composed - arctan.exact_flow(s + t, x)).max() <= 5 * tol

    @settings(max_examples=15)
    @given(random_field(2), st.floats(0, 2), st.floats(0, 2))
    def test_random_fields(self, f, s, t):
        rep = verify_flow_invariants(f, [(np.array([0.3, 0.8]), s, t, (2, -1))], 1e-9)
        assert rep.passed(5)

    @pytest.mark.parametrize("name", ["gradient_arctan", "cos2_profile", "separable", "example_5_1",
                                      "vanishing_stepanoff"])
    def test_presets_match_closed_form_over_50(self, name):
        p = preset(name)
        tol = 1e-10
        rng = np.random.default_rng(3)
        for x in rng.uniform(0, 1, (3, 2)):
            tr = integrate(p.field, x, 50.0, tol, dt=5.0)
            exact = np.array([p.exact_flow(t, x) for t in tr.times])
            assert np.abs(tr.lifts - exact).max() <= 100 * tol


class TestPeriodicOrbit:
    def test_commensurable_stepanoff(self):
        spec = stepanoff_field(rho_cos(), [1.0, 0.0])
        orb = detect_periodic_orbit(spec, np.zeros(2), 5.0, 1e-9)
        # F_0(1) = int_0^1 (2 + cos 2 pi s) ds = 2
        assert orb is not None and orb.translation == (1, 0)
        assert abs(orb.period - 2.0) <= 1e-9 and orb.residual <= 1e-9

    def test_linear(self):
        orb = detect_periodic_orbit(constant_field([1.0, 2.0]), np.array([0.3, 0.1]), 3.0, 1e-9)
        assert orb.translation == (1, 2) and abs(orb.period - 1.0) <= 1e-9

    def test_incommensurable_none(self, example51):
        assert detect_periodic_orbit(example51.field, np.zeros(2), 50.0, 1e-9) is None

    def test_equilibrium(self):
        p = preset("cos2_profile")
        orb = detect_periodic_orbit(p.field, np.array([0.5, 0.2]), 10.0)
        assert orb.translation == (0, 0) and orb.period == 1.0
