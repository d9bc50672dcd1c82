# This Source Code Form is subject to the terms of the Mozilla Public
# License, v. 2.0. If a copy of the MPL was not distributed with this
# file, You can obtain one at https://mozilla.org/MPL/2.0/.

import unittest

import numpy as np
import scipy.integrate
import scipy.linalg
from numpy.testing import assert_allclose

from loylab.effective import (
    EffectiveHamiltonian,
    decay_positivity,
    exp_php,
    h_1d,
    h_loy,
    h_loy0,
    h_loy_imp,
    h_spectral,
    iterate_v,
    pauli_decompose,
    spectral_projectors,
    v_spectral,
)
from loylab.model import ModelError, random_two_level_model, split_blocks
from loylab.self_energy import SelfEnergyEvaluator
from loylab.utils import NumericalError, frobenius

from .helpers import flat_two_level_model, three_level_model


class TestEffectiveHamiltonian(unittest.TestCase):
    def test_mass_and_decay_parts(self):
        heff = h_loy(random_two_level_model(np.random.default_rng(1)))
        assert_allclose(heff.mass_part - 0.5j * heff.decay_part, heff.matrix, atol=1e-15)
        assert_allclose(heff.mass_part, heff.mass_part.conj().T, atol=1e-16)
        assert_allclose(heff.decay_part, heff.decay_part.conj().T, atol=1e-16)

    def test_eigenvalues_and_lifetimes(self):
        heff = EffectiveHamiltonian(np.diag([2.0 - 0.01j, 1.0]), "loy", 0.1)
        assert_allclose(heff.eigenvalues(), [1.0, 2.0 - 0.01j])
        assert_allclose(heff.lifetimes, [np.inf, 50.0])

    def test_matrix_is_read_only(self):
        heff = EffectiveHamiltonian(np.eye(2), "loy", 0.1)
        with self.assertRaises(ValueError):
            heff.matrix[0, 0] = 3.0


class TestLOYForms(unittest.TestCase):
    def test_zero_coupling(self):
        model = flat_two_level_model(g1=0.0, g2=0.0)
        php = split_blocks(model)[0]

        self.assertEqual(np.abs(h_loy(model).matrix - 2.0 * np.eye(2)).max(), 0.0)
        self.assertEqual(np.abs(h_loy0(model).matrix - 2.0 * np.eye(2)).max(), 0.0)
        self.assertEqual(np.abs(h_loy_imp(model).matrix - php).max(), 0.0)
        self.assertEqual(np.abs(h_spectral(model).matrix - php).max(), 0.0)

    def test_golden_rule(self):
        g = np.array([0.06, 0.04j])
        model = flat_two_level_model(g1=g[0], g2=g[1])
        heff = h_loy(model)

        expected = 2.0 * np.pi * np.outer(g, g.conj())
        assert_allclose(heff.decay_part, expected, rtol=1e-2, atol=1e-5)
        self.assertEqual(heff.method, "loy")
        self.assertEqual(heff.metadata["eta"], heff.eta)

    def test_free_and_interacting_agree_without_rescattering(self):
        model = random_two_level_model(np.random.default_rng(2))
        evaluator = SelfEnergyEvaluator.for_model(model)
        assert_allclose(
            h_loy0(model, evaluator=evaluator).matrix,
            h_loy(model, evaluator=evaluator).matrix,
            rtol=1e-15,
        )

    def test_decay_positivity(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            model = random_two_level_model(rng, points=200)
            self.assertGreater(decay_positivity(h_loy(model)), -1e-12)

    def test_improved_needs_two_levels(self):
        model = three_level_model(np.random.default_rng(0))
        with self.assertRaises(ModelError):
            h_loy_imp(model)

    def test_explicit_eta(self):
        model = flat_two_level_model(points=100)
        self.assertEqual(h_loy(model, eta=0.25).eta, 0.25)
        self.assertEqual(h_loy_imp(model, eta=0.25).metadata["eta"], 0.25)


class TestPauli(unittest.TestCase):
    def test_decomposition(self):
        m = np.array([[0.3, 0.1 - 0.2j], [0.1 + 0.2j, -0.1]])
        decomp = pauli_decompose(m)

        self.assertAlmostEqual(decomp.h0, 0.1)
        self.assertAlmostEqual(decomp.hx, 0.1)
        self.assertAlmostEqual(decomp.hy, 0.2)
        self.assertAlmostEqual(decomp.hz, 0.2)
        self.assertAlmostEqual(decomp.kappa, 0.3)
        assert_allclose(decomp.matrix(), m, atol=1e-16)

    def test_projectors(self):
        decomp = pauli_decompose([[1.0, 0.5j], [-0.5j, 0.2]])
        plus, minus = decomp.projectors()

        assert_allclose(plus + minus, np.eye(2), atol=1e-15)
        assert_allclose(plus @ plus, plus, atol=1e-15)
        assert_allclose(plus @ minus, np.zeros((2, 2)), atol=1e-15)
        assert_allclose(
            decomp.matrix() @ plus, (decomp.h0 + decomp.kappa) * plus, atol=1e-15
        )

    def test_degenerate_has_no_projectors(self):
        with self.assertRaises(NumericalError):
            pauli_decompose(np.eye(2)).projectors()

    def test_invalid_input(self):
        with self.assertRaises(ModelError):
            pauli_decompose(np.eye(3))
        with self.assertRaises(ModelError):
            pauli_decompose([[0.0, 1.0], [0.0, 0.0]])

    def test_exponential(self):
        m = np.array([[0.7, 0.2 + 0.3j], [0.2 - 0.3j, -0.4]])
        decomp = pauli_decompose(m)

        for t in (0.0, 0.5, 3.0, -2.0):
            assert_allclose(exp_php(t, decomp), scipy.linalg.expm(-1j * t * m), atol=1e-13)
            assert_allclose(
                exp_php(t, decomp, sign=1), scipy.linalg.expm(1j * t * m), atol=1e-13
            )

    def test_exponential_degenerate(self):
        decomp = pauli_decompose(2.0 * np.eye(2))
        assert_allclose(exp_php(1.5, decomp), np.exp(-3.0j) * np.eye(2), atol=1e-15)
        with self.assertRaises(ModelError):
            exp_php(1.0, decomp, sign=2)


class TestSpectralForm(unittest.TestCase):
    def test_no_parallel_perturbation_collapses(self):
        model = flat_two_level_model(h1=np.zeros((2, 2)))
        evaluator = SelfEnergyEvaluator.for_model(model)
        loy = h_loy(model, evaluator=evaluator)
        improved = h_loy_imp(model, evaluator=evaluator)

        assert_allclose(improved.matrix, loy.matrix, rtol=1e-14)
        assert_allclose(h_spectral(model, evaluator=evaluator).matrix, loy.matrix, rtol=1e-14)
        self.assertTrue(improved.metadata["kappa_fallback"])
        self.assertEqual(improved.metadata["kappa"], 0.0)

    def test_improved_matches_spectral(self):
        rng = np.random.default_rng(2024)
        for _ in range(100):
            model = random_two_level_model(rng, points=100)
            evaluator = SelfEnergyEvaluator.for_model(model)
            improved = h_loy_imp(model, evaluator=evaluator)
            spectral = h_spectral(model, evaluator=evaluator)

            self.assertLess(frobenius(improved.matrix - spectral.matrix), 1e-10)
            self.assertNotIn("kappa_fallback", improved.metadata)

    def test_projectors_of_non_hermitian(self):
        rng = np.random.default_rng(4)
        k = rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3))
        values, projectors = spectral_projectors(k)

        self.assertEqual(len(projectors), 3)
        assert_allclose(sum(projectors), np.eye(3), atol=1e-12)
        assert_allclose(sum(v * p for v, p in zip(values, projectors)), k, atol=1e-12)
        for i, p in enumerate(projectors):
            for j, other in enumerate(projectors):
                expected = p if i == j else np.zeros((3, 3))
                assert_allclose(p @ other, expected, atol=1e-12)

    def test_degenerate_eigenvalues_merge(self):
        values, projectors = spectral_projectors(np.diag([1.0, 1.0, 3.0]))
        assert_allclose(values, [1.0, 3.0])
        assert_allclose(projectors[0], np.diag([1.0, 1.0, 0.0]), atol=1e-15)

    def test_defective_operator(self):
        with self.assertRaises(NumericalError) as e:
            spectral_projectors(np.array([[1.0, 1.0], [0.0, 1.0]]))
        self.assertEqual(e.exception.method, "spectral")

    def test_shape_mismatch(self):
        model = flat_two_level_model(points=20)
        with self.assertRaises(ModelError):
            v_spectral(model, np.eye(3))

    def test_damped_time_integral(self):
        model = three_level_model(np.random.default_rng(12), points=60)
        eta = 0.2
        php, phq, qhp, qhq = split_blocks(model)
        energies = np.diagonal(qhq).real
        levels, vectors = scipy.linalg.eigh(php)

        def integrand(tau):
            forward = (phq * np.exp(-1j * tau * energies)) @ qhp
            backward = (vectors * np.exp(1j * tau * levels)) @ vectors.conj().T
            value = -1j * np.exp(-eta * tau) * forward @ backward
            return np.concatenate([value.real.ravel(), value.imag.ravel()])

        stacked, _ = scipy.integrate.quad_vec(integrand, 0.0, 50.0 / eta, epsrel=1e-10, limit=2000)
        expected = (stacked[:9] + 1j * stacked[9:]).reshape(3, 3)

        assert_allclose(v_spectral(model, php, eta=eta), expected, rtol=1e-4, atol=1e-8)


class TestIteration(unittest.TestCase):
    def test_zero_coupling(self):
        model = flat_two_level_model(g1=0.0, g2=0.0)
        result = iterate_v(model, 50, 1e-10)

        self.assertTrue(result.converged)
        self.assertEqual(result.iterations, 1)
        self.assertEqual(np.abs(result.v).max(), 0.0)

    def test_first_iterate_is_spectral(self):
        model = flat_two_level_model()
        evaluator = SelfEnergyEvaluator.for_model(model)
        v, history = iterate_v(model, 1, 1e-10, evaluator=evaluator)

        self.assertEqual(len(history), 1)
        php = split_blocks(model)[0]
        assert_allclose(php + v, h_spectral(model, evaluator=evaluator).matrix, rtol=1e-14)

    def test_fixed_point(self):
        model = flat_two_level_model()
        evaluator = SelfEnergyEvaluator.for_model(model)
        result = iterate_v(model, 50, 1e-10, evaluator=evaluator)

        self.assertTrue(result.converged)
        php = split_blocks(model)[0]
        again = v_spectral(model, php + result.v, evaluator=evaluator)
        self.assertLessEqual(frobenius(again - result.v), 1e-9 * frobenius(result.v))

        heff = result.heff()
        self.assertEqual(heff.method, "iterate")
        self.assertTrue(heff.metadata["converged"])
        self.assertEqual(heff.metadata["iterations"], result.iterations)

    def test_weak_coupling_contraction(self):
        model = flat_two_level_model()
        evaluator = SelfEnergyEvaluator.for_model(model)
        first = iterate_v(model, 1, 1e-10, evaluator=evaluator).heff()
        result = iterate_v(model, 50, 1e-10, evaluator=evaluator)

        self.assertTrue(result.converged)
        self.assertLess(result.history[1], 0.1 * result.history[0])

        linewidth = np.max(np.linalg.eigvalsh(first.decay_part))
        shift = np.sort_complex(result.heff().eigenvalues()) - np.sort_complex(first.eigenvalues())
        self.assertLess(np.max(np.abs(shift)), 0.01 * linewidth)

    def test_close_to_improved_at_weak_coupling(self):
        for g in (0.02, 0.04, 0.08):
            model = flat_two_level_model(g1=g, g2=0.5j * g)
            evaluator = SelfEnergyEvaluator.for_model(model)
            improved = h_loy_imp(model, evaluator=evaluator)
            iterated = iterate_v(model, 50, 1e-10, evaluator=evaluator).heff()

            v = improved.matrix - split_blocks(model)[0]
            self.assertLess(frobenius(iterated.matrix - improved.matrix), 0.1 * frobenius(v))

    def test_complex_arguments(self):
        # Widths stay below eta so every argument is in the upper half plane.
        model = flat_two_level_model(g1=0.03, g2=0.02j)
        result = iterate_v(model, 50, 1e-10, complex_arguments=True)

        self.assertTrue(result.converged)
        self.assertTrue(result.metadata["complex_arguments"])

    def test_not_converged_is_reported(self):
        model = flat_two_level_model()
        result = iterate_v(model, 1, 1e-12)

        self.assertFalse(result.converged)
        self.assertFalse(result.heff().metadata["converged"])

    def test_invalid_options(self):
        model = flat_two_level_model(points=20)
        with self.assertRaises(ModelError):
            iterate_v(model, 0, 1e-10)
        with self.assertRaises(ModelError):
            iterate_v(model, 10, 0.0)


class TestOneDimensional(unittest.TestCase):
    def test_scalar(self):
        model = flat_two_level_model()
        heff = h_1d(model, [1.0, 0.0])

        self.assertEqual(heff.matrix.shape, (1, 1))
        self.assertEqual(heff.method, "onedim")
        self.assertAlmostEqual(heff.metadata["expectation"], 2.005)

    def test_decoupled_level_matches_loy(self):
        model = flat_two_level_model(g2=0.0, h1=np.zeros((2, 2)))
        eta = 0.02
        onedim = h_1d(model, [1.0, 0.0], eta=eta)
        loy = h_loy(model, eta=eta)

        assert_allclose(onedim.matrix[0, 0], loy.matrix[0, 0], rtol=1e-10)

    def test_decoupled_level_matches_improved(self):
        model = flat_two_level_model(g2=0.0, h1=np.diag([0.01, -0.01]))
        eta = 0.02
        onedim = h_1d(model, [1.0, 0.0], eta=eta)
        improved = h_loy_imp(model, eta=eta)

        assert_allclose(onedim.matrix[0, 0], improved.matrix[0, 0], rtol=1e-10)

    def test_rotated_state(self):
        model = flat_two_level_model()
        psi = np.array([1.0, 1.0j]) / np.sqrt(2.0)
        heff = h_1d(model, psi)

        expectation = (psi.conj() @ split_blocks(model)[0] @ psi).real
        self.assertAlmostEqual(heff.metadata["expectation"], expectation, places=14)
        self.assertLess(heff.matrix[0, 0].imag, 0.0)

    def test_invalid_state(self):
        model = flat_two_level_model(points=20)
        with self.assertRaises(ModelError):
            h_1d(model, [1.0, 1.0])
        with self.assertRaises(ModelError):
            h_1d(model, [1.0, 0.0, 0.0])


if __name__ == "__main__":
    unittest.main()
