import math

import numpy as np
import pytest

from torusflow.core import eval_field, parse_spec, to_document
from torusflow.errors import SpecError
from torusflow.integrator import flow_map
from torusflow.presets import named_direction, ode_residual, preset, preset_names, summary_rows

from conftest import GOLDEN

CLOSED = ["example_5_1", "gradient_arctan", "separable", "cos2_profile", "vanishing_stepanoff"]


def samples(d=2, n=6, seed=0):
    rng = np.random.default_rng(seed)
    return [(float(t), x) for t, x in zip(rng.uniform(0.05, 5, n), rng.uniform(-1, 2, (n, d)))]


@pytest.mark.parametrize("name", CLOSED)
def test_closed_form_solves_ode(name):
    assert ode_residual(preset(name), samples()) <= 1e-6


@pytest.mark.parametrize("name", CLOSED)
def test_closed_form_identity_at_zero(name):
    p = preset(name)
    x = np.array([0.37, 0.21])
    assert np.allclose(p.exact_flow(0.0, x), x, atol=1e-12)


@pytest.mark.parametrize("name", CLOSED)
def test_closed_form_matches_integrator(name):
    p = preset(name)
    for t, x in samples(n=3, seed=1):
        assert np.allclose(p.exact_flow(t, x), flow_map(p.field, x, t, 1e-11), atol=1e-8)


def test_separable_3d():
    p = preset("separable", d=3, scales=[1.0, 0.5, -2.0])
    assert p.field.dimension == 3 and ode_residual(p, samples(d=3)) <= 1e-6
    assert p.known_deviation_bound == math.sqrt(3)


def test_example51_rotation_and_bound(example51):
    assert np.allclose(example51.zeta_at(np.zeros(2)), GOLDEN / 2)
    assert example51.known_deviation_bound == pytest.approx(0.1870978567577278, abs=1e-15)


def test_arctan_invariant_line(arctan):
    x = np.array([0.2, 0.5])
    assert np.array_equal(arctan.exact_flow(3.0, x), [3.2, 0.5])
    assert np.allclose(eval_field(arctan.field, x), [1.0, 0.0], atol=1e-15)


def test_arctan_tends_to_half_line(arctan):
    X = arctan.exact_flow(5.0, np.array([0.0, 0.01]))
    assert abs(X[1] - 0.5) <= 1e-12


def test_cos2_stationary_lines():
    p = preset("cos2_profile", gamma=2.0)
    assert np.allclose(eval_field(p.field, np.array([0.5, 0.3])), 0.0, atol=1e-15)
    assert p.known_deviation_bound == pytest.approx(math.sqrt(5))


def test_liouville_eval_only():
    p = preset("liouville", terms=3)
    assert p.exact_flow is None and p.known_deviation_bound is None
    v = eval_field(p.field, np.array([0.1, 0.2]))
    assert np.all(np.isfinite(v))
    with pytest.raises(SpecError):
        ode_residual(p, samples())


def test_named_direction():
    assert np.allclose(named_direction("golden", 2), GOLDEN)
    assert named_direction("e2", 3) == (0.0, 1.0, 0.0)
    assert np.linalg.norm(named_direction("cubic", 3)) == pytest.approx(1.0)
    for bad in [("golden", 3), ("e4", 3), ("pi", 2)]:
        with pytest.raises(SpecError):
            named_direction(*bad)


def test_lookup_errors():
    with pytest.raises(SpecError):
        preset("nope")
    with pytest.raises(SpecError):
        preset("separable", dims=2)
    with pytest.raises(SpecError):
        preset("vanishing_stepanoff", p=-1.0)
    with pytest.raises(SpecError):
        preset("example_5_1", xi=[0.0, 0.0])


@pytest.mark.parametrize("name", ["example_5_1", "gradient_arctan", "separable", "cos2_profile"])
def test_document_round_trip(name):
    p = preset(name)
    spec = parse_spec(to_document(p.field))
    x = np.random.default_rng(2).uniform(0, 1, (5, 2))
    assert np.array_equal(eval_field(spec, x), eval_field(p.field, x))


def test_summary_table():
    rows = summary_rows()
    assert [r[0] for r in rows] == preset_names()
    assert all(isinstance(r[4], str) and r[4] for r in rows)
