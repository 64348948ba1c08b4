import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from torusflow.construct import (DiffeoSpec, KozlovInput, Potential, build_from_diffeo, compatibility_residual,
                                 kozlov_reduction, phi_from_equipotential, random_diffeo_product,
                                 random_unimodular, verify_coboundary)
from torusflow.core import FourierSeries, eval_field
from torusflow.errors import CertificationError, SpecError
from torusflow.integrator import flow_map

from conftest import GOLDEN

FS = FourierSeries


def small_psi():
    return DiffeoSpec(np.eye(2, dtype=int), (FS.sine((0, 1), 0.05), FS.cosine((1, 0), 0.04)))


class TestDiffeo:
    def test_rejects_non_integer(self):
        with pytest.raises(CertificationError):
            DiffeoSpec([[1.5, 0], [0, 1]], (FS.zero(2), FS.zero(2)))

    def test_rejects_non_unimodular(self):
        with pytest.raises(CertificationError):
            DiffeoSpec([[2, 0], [0, 1]], (FS.zero(2), FS.zero(2)))

    def test_dimension_mismatch(self):
        with pytest.raises(SpecError):
            DiffeoSpec(np.eye(3, dtype=int), (FS.zero(2), FS.zero(2)))

    @given(st.integers(0, 2**31))
    def test_unimodular_generator(self, seed):
        M = random_unimodular(np.random.default_rng(seed), 3)
        assert round(abs(np.linalg.det(M))) == 1

    def test_inverse_round_trip(self):
        psi = small_psi()
        x = np.random.default_rng(0).uniform(-3, 3, (20, 2))
        assert np.abs(psi.inverse(psi(x)) - x).max() <= 1e-12

    def test_jacobian_fd(self):
        psi = small_psi()
        x = np.array([0.3, 0.7])
        h = 1e-6
        fd = np.stack([(psi(x + h * e) - psi(x - h * e)) / (2 * h) for e in np.eye(2)], axis=-1)
        assert np.allclose(psi.jacobian(x), fd, atol=1e-8)

    def test_det_certificate_fails_for_fold(self):
        psi = DiffeoSpec(np.eye(2, dtype=int), (FS.sine((1, 0), 0.3), FS.zero(2)))
        with pytest.raises(CertificationError):
            psi.certify()


class TestBuilder:
    def test_constant_zeta_bounded(self):
        prod = build_from_diffeo(small_psi(), (0.6, 0.37))
        assert prod.corrector.bounded and prod.corrector.bound == pytest.approx(math.hypot(0.05, 0.04))
        assert prod.corrector.expansion_bound() == 2 * prod.corrector.bound

    def test_exact_flow_matches_integrator(self):
        prod = build_from_diffeo(small_psi(), (0.6, 0.37))
        x = np.array([0.1, 0.8])
        for t in (1.0, 10.0):
            assert np.allclose(prod.exact_flow(t, x), flow_map(prod.field, x, t, 1e-11), atol=1e-9)

    def test_field_formula(self):
        psi = small_psi()
        prod = build_from_diffeo(psi, (0.6, 0.37))
        x = np.array([0.2, 0.3])
        assert np.allclose(psi.jacobian(x) @ eval_field(prod.field, x), [0.6, 0.37], atol=1e-14)

    def test_incompatible_zeta_rejected(self):
        zeta = (FS.constant(2, 1.0) + FS.cosine((1, 0), 0.2), FS.constant(2, 0.5))
        with pytest.raises(CertificationError):
            build_from_diffeo(small_psi(), zeta)

    def test_nonidentity_unbounded(self):
        psi = DiffeoSpec([[1, 1], [0, 1]], (FS.sine((0, 1), 0.02), FS.zero(2)))
        prod = build_from_diffeo(psi, (1.0, 0.0))
        assert prod.corrector.bounded is False and prod.corrector.bound is None

    @settings(max_examples=10)
    @given(st.integers(0, 2**31), st.sampled_from(["constant", "sheared"]), st.sampled_from([2, 3]))
    def test_random_products(self, seed, kind, d):
        rng = np.random.default_rng(seed)
        prod = random_diffeo_product(rng, d=d, kind=kind)
        assert prod.compatibility_residual <= 1e-10
        samples = [(float(t), rng.uniform(0, 1, d)) for t in rng.uniform(0, 3, 3)]
        rep = verify_coboundary(prod.field, prod.corrector, samples)
        assert rep.trajectory_residual <= 1e-8 and rep.grid_residual <= 1e-6
        assert prod.zeta_invariance(samples) <= 1e-8

    def test_sheared_compatibility(self):
        prod = random_diffeo_product(np.random.default_rng(4), kind="sheared")
        assert compatibility_residual(prod.psi, prod.zeta) <= 1e-14


class TestEquipotential:
    def test_example51_tau(self, example51):
        u1 = example51.potentials[0]
        x = np.array([0.3, 0.6])
        res = phi_from_equipotential(example51.field, u1, GOLDEN / 2, x)
        # b.grad(u_1) = 1, so u_1 grows at unit rate along orbits
        assert res.tau == pytest.approx(-float(u1(x)), abs=1e-10)
        assert np.allclose(res.phi, res.phi_closed, atol=1e-8)
        assert res.tau_shift_residual <= 1e-8

    def test_arctan_first_component(self, arctan):
        res = phi_from_equipotential(arctan.field, arctan.potentials[0], [1.0, 0.0], np.array([0.4, 0.1]))
        assert abs(res.phi[0]) <= 1e-9 and np.linalg.norm(res.phi) <= 1.0

    def test_not_positive(self, arctan):
        u = Potential([0.0, 1.0], FS.zero(2))
        with pytest.raises(CertificationError):
            phi_from_equipotential(arctan.field, u, [1.0, 0.0], np.array([0.4, 0.1]))


class TestKozlov:
    def test_example51(self, example51):
        res = kozlov_reduction(KozlovInput(example51.potentials, example51.field))
        assert res.unit_speed
        assert np.allclose(res.zeta, GOLDEN / 2, atol=1e-14)
        assert res.conjugacy_residual <= 1e-12
        # Psi_sharp = (xi / 2) sin(2 pi x_1) / (2 pi xi_1)
        assert res.phi.bound == pytest.approx(1 / (4 * math.pi * GOLDEN[0]), rel=1e-14)

    def test_bounded_corrector_verifies(self, example51):
        res = kozlov_reduction(KozlovInput(example51.potentials, example51.field))
        rng = np.random.default_rng(1)
        samples = [(float(t), rng.uniform(0, 1, 2)) for t in (0.5, 5.0, 20.0)]
        rep = verify_coboundary(example51.field, res.phi, samples)
        assert rep.trajectory_residual <= 1e-8
        assert rep.sampled_sup_phi <= res.phi.bound + 1e-12

    def test_nonunit_reduced_zeta(self):
        # b = (1 + 0.3 cos 2 pi x_1) e_1 after a near-identity change u_1 = x_1
        from torusflow.core import fourier_field

        spec = fourier_field([FS.constant(2, 1.0) + FS.cosine((1, 0), 0.3), FS.zero(2)])
        U = (Potential([1.0, 0.0], FS.zero(2)), Potential([0.0, 1.0], FS.zero(2)))
        res = kozlov_reduction(KozlovInput(U, spec))
        assert not res.unit_speed
        # harmonic mean of 1 + 0.3 cos is sqrt(1 - 0.09)
        assert res.zeta[0] == pytest.approx(math.sqrt(0.91), abs=1e-10)

    def test_rejects_nonconstant_second(self, example51):
        U = (example51.potentials[0], Potential([0.0, 1.0], FS.zero(2)))
        with pytest.raises(CertificationError):
            kozlov_reduction(KozlovInput(U, example51.field))
