import math

import numpy as np
import pytest

from torusflow.core import FourierSeries, constant_field, stepanoff_field
from torusflow.errors import SpecError
from torusflow.presets import preset
from torusflow.rotation import (check_zeta_invariance, deviation_sup, estimate_rotation, herman_sample,
                                rotation_header, rotation_row, unit_grid)

from conftest import GOLDEN


def test_linear_rotation_exact():
    est = estimate_rotation(constant_field([0.3, 0.4]), np.zeros(2), 100.0)
    assert np.allclose(est.zeta, [0.3, 0.4], atol=1e-12) and est.converged


def test_short_horizon_rejected():
    with pytest.raises(SpecError):
        estimate_rotation(constant_field([1.0, 0.0]), np.zeros(2), 5.0)


def test_example51_rotation(example51):
    est = estimate_rotation(example51.field, np.array([0.1, 0.7]), 1000.0)
    assert np.linalg.norm(est.zeta - GOLDEN / 2) <= 1e-3
    assert est.extrapolation_error <= 1e-3


def test_deviation_within_cohomology_bound(example51):
    rep = deviation_sup(example51.field, np.array([0.2, 0.3]), GOLDEN / 2, horizon=200.0)
    assert rep.sup_deviation <= example51.known_deviation_bound
    assert np.all(np.diff(rep.running_sup()) >= 0)
    assert rep.arg_time in rep.times


def test_deviation_wrong_shape(example51):
    with pytest.raises(SpecError):
        deviation_sup(example51.field, np.zeros(2), np.zeros(3), horizon=10.0)


def test_zeta_invariance(example51):
    rep = check_zeta_invariance(example51.field, np.array([0.1, 0.2]), [1.0, 5.0], 500.0)
    # both estimates carry O(1/T) endpoint error
    assert rep.residual <= 2 * example51.known_deviation_bound / 500.0 + 1e-9


def test_herman_constant_field_single_point():
    s = herman_sample(constant_field([0.5, 0.25]), unit_grid(2, 3), 50.0)
    assert s.affine_rank == 0 and len(s.hull) == 1 and s.max_hull_distance() <= 1e-12


def test_herman_arctan_segment(arctan):
    s = herman_sample(arctan.field, unit_grid(2, 3), 50.0)
    assert not s.failures
    assert np.allclose(s.zetas, [1.0, 0.0], atol=0.05)


def test_herman_stepanoff_commensurable_segment():
    # rho = 2 + cos(2 pi (y1 + y2)) along (1,-1): every orbit is closed, zeta = xi/(2 or so)
    spec = stepanoff_field(FourierSeries.constant(2, 2.0) + FourierSeries.cosine((1, 1)), [1.0, -1.0])
    s = herman_sample(spec, unit_grid(2, 3), 100.0)
    assert s.max_hull_distance() <= s.hull_tolerance


def test_herman_3d_hull():
    f = preset("separable", d=3).field
    s = herman_sample(f, unit_grid(3, 2), 20.0, hull_tolerance=1e-9)
    assert s.affine_rank == 3 and s.hull.shape[1] == 3
    assert s.max_hull_distance() <= 1e-9


def test_herman_empty_grid():
    with pytest.raises(SpecError):
        herman_sample(constant_field([1.0, 0.0]), [], 10.0)


def test_unit_grid_cells():
    g = unit_grid(2, (2, 3))
    assert g.shape == (6, 2) and np.all((g > 0) & (g < 1))
    with pytest.raises(SpecError):
        unit_grid(2, (2, 2, 2))


def test_rows():
    est = estimate_rotation(constant_field([1.0, 0.0]), np.zeros(2), 10.0)
    row = rotation_row(np.zeros(2), est, None, 2)
    assert len(row) == len(rotation_header(2)) and math.isnan(row[-1])
