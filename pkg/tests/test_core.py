import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from torusflow.core import (FieldSpec, FourierSeries, Stepanoff, TorusPoint, certify_positive, constant_field,
                            eval_field, eval_jacobian, fourier_field, lattice_vector, parse_spec, stepanoff_field,
                            to_document)
from torusflow.errors import CertificationError, SpecError

from conftest import GOLDEN


def arctan_field():
    return fourier_field([FourierSeries.constant(2, 1.0), FourierSeries.sine((0, 1), 2 * math.pi)])


def example51_field(xi=GOLDEN):
    return stepanoff_field(FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, 0)), xi)


modes = st.tuples(st.integers(-3, 3), st.integers(-3, 3)).filter(lambda n: n != (0, 0))
amps = st.floats(-2, 2, allow_nan=False)


@st.composite
def series2(draw, k=4):
    s = FourierSeries.constant(2, draw(amps))
    for _ in range(draw(st.integers(0, k))):
        s = s + FourierSeries.cosine(draw(modes), draw(amps)) + FourierSeries.sine(draw(modes), draw(amps))
    return s


points = st.tuples(st.floats(-5, 5), st.floats(-5, 5)).map(np.array)
shifts = st.tuples(st.integers(-50, 50), st.integers(-50, 50)).map(np.array)


class TestTypes:
    def test_lattice_vector(self):
        assert lattice_vector([1, -2, 3.0]) == (1, -2, 3)
        with pytest.raises(SpecError):
            lattice_vector([0.5])
        with pytest.raises(SpecError):
            lattice_vector([])

    @given(points)
    def test_torus_point_reduces_into_unit_cube(self, x):
        r, k = TorusPoint(tuple(x)).reduce()
        assert np.all((0 <= r) & (r < 1))
        assert np.allclose(r + np.array(k), x, atol=1e-12)

    def test_torus_point_tiny_negative(self):
        r, k = TorusPoint((-1e-18, 0.0)).reduce()
        assert r[0] == 0.0 and k == (0, 0)

    def test_conjugate_partner_required(self):
        with pytest.raises(SpecError):
            FourierSeries(2, (((1, 0), 1.0),))
        with pytest.raises(SpecError):
            FourierSeries(2, (((0, 0), 1j),))
        with pytest.raises(SpecError):
            FourierSeries(2, (((1, 0), 1.0), ((-1, 0), 2.0)))

    @given(series2(), st.lists(points, min_size=1, max_size=5))
    def test_evaluation_is_real(self, s, xs):
        v = s.evaluate_complex(np.array(xs))
        assert np.all(np.abs(v.imag) <= 1e-12 * (1 + s.l1_norm()))

    @given(series2(), series2(), points)
    def test_algebra_pointwise(self, a, b, x):
        assert math.isclose((a + b)(x), a(x) + b(x), abs_tol=1e-10)
        assert math.isclose((a * b)(x), a(x) * b(x), abs_tol=1e-9 * (1 + a.l1_norm() * b.l1_norm()))
        assert math.isclose((a - b)(x), a(x) - b(x), abs_tol=1e-10)

    def test_truncate_and_mean(self):
        s = FourierSeries.constant(2, 3.0) + FourierSeries.cosine((1, 0)) + FourierSeries.cosine((4, 1))
        assert s.mean == 3.0
        assert s.truncate(2).max_mode == 1
        assert s.without_mean().mean == 0.0

    def test_triples_round_trip(self):
        s = FourierSeries.constant(2, 2.0) + FourierSeries.sine((1, -2), 0.3)
        assert FourierSeries.from_triples(2, s.to_triples()) == s


class TestEvalField:
    def test_example51_at_origin(self):
        assert np.allclose(eval_field(example51_field(), np.zeros(2)), GOLDEN / 3, rtol=0, atol=1e-16)

    def test_constant(self):
        assert np.array_equal(eval_field(constant_field([0.3, -1.2]), np.array([4.2, 0.1])), [0.3, -1.2])

    def test_arctan_quarter(self):
        assert np.allclose(eval_field(arctan_field(), np.array([0.0, 0.25])), [1.0, 2 * math.pi], atol=1e-15)

    @given(series2(), series2(), points, shifts)
    def test_periodicity(self, a, b, x, k):
        spec = fourier_field([a, b])
        v0, v1 = eval_field(spec, x), eval_field(spec, x + k)
        scale = 1 + a.l1_norm() + b.l1_norm()
        assert np.all(np.abs(v0 - v1) <= 8 * np.finfo(float).eps * scale * (1 + np.abs(x + k).max()) * 8)

    def test_dimension_mismatch(self):
        with pytest.raises(SpecError):
            eval_field(arctan_field(), np.zeros(3))
        with pytest.raises(SpecError):
            eval_field("not a spec", np.zeros(2))


def _fd_jacobian(spec, x, h):
    d = len(x)
    return np.column_stack([(eval_field(spec, x + h * e) - eval_field(spec, x - h * e)) / (2 * h) for e in np.eye(d)])


class TestJacobian:
    def test_constant_zero(self):
        assert np.array_equal(eval_jacobian(constant_field([1.0, 2.0]), np.array([0.3, 0.4])), np.zeros((2, 2)))

    def test_arctan_origin(self):
        # central-difference oracle at h = 1e-5 gave 39.47841757838167
        J = eval_jacobian(arctan_field(), np.zeros(2))
        assert np.allclose(J, [[0, 0], [0, 39.47841757838167]], atol=1e-7)
        assert math.isclose(J[1, 1], 4 * math.pi**2, rel_tol=1e-15)

    def test_example51_first_column_zero(self):
        J = eval_jacobian(example51_field(), np.zeros(2))
        assert np.allclose(J[:, 0], 0.0, atol=1e-16)

    @pytest.mark.parametrize("make", [arctan_field, example51_field,
                                      lambda: fourier_field([FourierSeries.cosine((1, 2), 0.4) + FourierSeries.constant(2, 1),
                                                             FourierSeries.sine((2, -1), 0.7)])])
    def test_matches_finite_differences_second_order(self, make):
        spec = make()
        x = np.array([0.137, 0.611])
        J = eval_jacobian(spec, x)
        e4 = np.abs(_fd_jacobian(spec, x, 1e-4) - J).max()
        e5 = np.abs(_fd_jacobian(spec, x, 1e-5) - J).max()
        assert e5 < 1e-7
        # O(h^2): a tenfold smaller step cuts the error by roughly 100
        assert e5 < e4 / 30 or e4 < 1e-9

    def test_preset_resolves(self, vanishing):
        x = np.array([0.3, 0.2])
        assert np.allclose(eval_jacobian(vanishing.field, x), _fd_jacobian(vanishing.field, x, 1e-5), atol=1e-6)


class TestParse:
    def test_stepanoff_document(self):
        doc = {"dimension": 2, "variant": "stepanoff",
               "params": {"xi": [1, 0], "rho": [[[0, 0], 2, 0], [[1, 0], 0.5, 0], [[-1, 0], 0.5, 0]]}}
        spec = parse_spec(doc)
        assert spec.certificates["rho"].certified
        assert spec.certificates["rho"].lower_bound > 0.9
        assert parse_spec(to_document(spec)).variant.rho == spec.variant.rho

    def test_vanishing_rho_rejected(self):
        doc = {"dimension": 2, "variant": "stepanoff",
               "params": {"xi": [1, 0], "rho": [[[0, 0], 1, 0], [[1, 0], 0.5, 0], [[-1, 0], 0.5, 0]]}}
        with pytest.raises(CertificationError):
            parse_spec(doc)

    def test_preset_document(self):
        spec = parse_spec({"variant": "preset", "params": {"name": "example_5_1", "xi": "golden"}})
        assert spec.kind == "preset"
        assert np.allclose(eval_field(spec, np.zeros(2)), GOLDEN / 3)
        assert to_document(spec)["params"]["name"] == "example_5_1"

    def test_named_direction(self):
        spec = parse_spec({"dimension": 2, "variant": "stepanoff",
                           "params": {"xi": "golden", "rho": [[[0, 0], 1, 0]]}})
        assert np.allclose(spec.variant.direction, GOLDEN)

    @pytest.mark.parametrize("doc", [
        [], {"variant": "nope"}, {"dimension": 2, "variant": "fourier", "params": {"components": []}},
        {"dimension": 2, "variant": "fourier", "extra": 1},
        {"dimension": 2, "variant": "stepanoff", "params": {"rho": [[[0, 0], 1, 0]]}},
        {"variant": "preset", "params": {"name": "unknown"}},
        {"dimension": 2, "variant": "fourier", "params": {"components": [[[[1, 0], 1, 0]], [[[0, 0], 1, 0]]]}},
    ])
    def test_schema_errors(self, doc):
        with pytest.raises(SpecError):
            parse_spec(doc)

    def test_density_mean_one(self):
        base = {"dimension": 2, "variant": "fourier",
                "params": {"components": [[[[0, 0], 1, 0]], [[[0, 0], 0, 0]]]}}
        parse_spec({**base, "invariant_density": [[[0, 0], 1, 0], [[0, 1], 0.25, 0], [[0, -1], 0.25, 0]]})
        with pytest.raises(CertificationError):
            parse_spec({**base, "invariant_density": [[[0, 0], 2, 0]]})
        with pytest.raises(CertificationError):
            parse_spec({**base, "invariant_density": [[[0, 0], 1, 0], [[0, 1], 0.6, 0], [[0, -1], 0.6, 0]]})


class TestPositivity:
    @given(st.floats(1.05, 3.0))
    def test_certificate_sound(self, c):
        s = FourierSeries.constant(2, c) + FourierSeries.cosine((1, 1))
        cert = certify_positive(s)
        assert cert.certified
        assert cert.lower_bound <= c - 1 + 1e-12

    def test_stepanoff_spec_requires_one_profile(self):
        with pytest.raises(SpecError):
            FieldSpec(2, Stepanoff((1.0, 0.0)))
