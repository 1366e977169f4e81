import unittest

import numpy as np
from scipy import integrate

import tests.setup  # noqa: F401; Imported for quiet logging side-effect
from delay_reservoir.diagnostics import (
    impulse_response,
    spatial_autocorr_width,
    step_response,
)
from delay_reservoir.simulation import StateMatrix
from tests.setup import make_layer

# low-pass, two real roots, repeated root, complex pair
LAYERS = {
    "low_pass": make_layer(tau_fast=0.5),
    "real": make_layer(tau_fast=0.1, delta_slow=0.5),
    "repeated": make_layer(tau_fast=0.25, delta_slow=1.0),
    "complex": make_layer(tau_fast=1.0, delta_slow=1.0),
}


class TestKernels(unittest.TestCase):
    def test_kernels_start_at_inverse_time_constant(self):
        for name, layer in LAYERS.items():
            with self.subTest(name):
                # Arrange & Act & Assert
                self.assertAlmostEqual(
                    impulse_response(layer, 0.0), 1.0 / layer.tau_fast
                )

    def test_step_response_integrates_the_kernel(self):
        for name, layer in LAYERS.items():
            with self.subTest(name):
                # Arrange
                t = np.linspace(0.0, 6.0, 7)
                # Act
                steps = step_response(layer, t)
                # Assert
                for end, value in zip(t, steps):
                    area, _ = integrate.quad(
                        lambda s: impulse_response(layer, s), 0.0, end
                    )
                    self.assertAlmostEqual(value, area, places=7)

    def test_band_pass_kernels_integrate_to_zero(self):
        for name in ("real", "repeated", "complex"):
            with self.subTest(name):
                # Arrange & Act & Assert
                self.assertAlmostEqual(step_response(LAYERS[name], 200.0), 0.0)

    def test_low_pass_step_response_reaches_one(self):
        # Arrange & Act & Assert
        self.assertAlmostEqual(step_response(LAYERS["low_pass"], 50.0), 1.0)

    def test_repeated_root_is_the_limit_of_its_neighbours(self):
        # Arrange
        t = np.linspace(0.0, 3.0, 31)
        below = make_layer(tau_fast=0.25, delta_slow=1.0 - 1e-7)
        above = make_layer(tau_fast=0.25, delta_slow=1.0 + 1e-7)
        # Act
        repeated = impulse_response(LAYERS["repeated"], t)
        # Assert
        np.testing.assert_allclose(impulse_response(below, t), repeated, atol=1e-5)
        np.testing.assert_allclose(impulse_response(above, t), repeated, atol=1e-5)

    def test_scalar_time_gives_a_float(self):
        # Arrange & Act & Assert
        self.assertIsInstance(step_response(LAYERS["real"], 1.0), float)

    def test_negative_time_is_rejected(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValueError):
            impulse_response(LAYERS["low_pass"], -1.0)


class TestSpatialAutocorrWidth(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_white_rows_cross_within_the_first_lag(self):
        # Arrange
        states = StateMatrix(self.rng.normal(size=(200, 50)), (50,))
        # Act
        result = spatial_autocorr_width(states, 1)
        # Assert
        self.assertAlmostEqual(result.width, 1.0 - np.exp(-1.0), delta=0.05)
        self.assertFalse(result.degenerate)

    def test_smoothed_rows_are_wider(self):
        # Arrange
        noise = self.rng.normal(size=(200, 60))
        kernel = np.ones(10) / 10
        smooth = np.array([np.convolve(row, kernel, mode="valid") for row in noise])
        states = StateMatrix(smooth, (smooth.shape[1],))
        # Act
        result = spatial_autocorr_width(states, 1)
        # Assert
        self.assertGreater(result.width, 3.0)
        self.assertLess(result.width, 10.0)

    def test_close_widths_still_order(self):
        # Arrange
        noise = self.rng.normal(size=(300, 80))

        def smoothed(length):
            kernel = np.ones(length) / length
            rows = [np.convolve(row, kernel, mode="valid") for row in noise]
            return StateMatrix(np.array(rows), (80 - length + 1,))

        # Act
        narrow = spatial_autocorr_width(smoothed(5), 1).width
        wide = spatial_autocorr_width(smoothed(6), 1).width
        # Assert
        self.assertLess(narrow, wide)
        self.assertAlmostEqual(narrow, 5 * (1 - np.exp(-1.0)), delta=0.8)
        self.assertAlmostEqual(wide, 6 * (1 - np.exp(-1.0)), delta=0.8)

    def test_flat_layer_is_degenerate(self):
        # Arrange
        entries = np.hstack([self.rng.normal(size=(150, 5)), np.ones((150, 8))])
        states = StateMatrix(entries, (5, 8))
        # Act
        result = spatial_autocorr_width(states, 2)
        # Assert
        self.assertTrue(result.degenerate)
        self.assertEqual(result.width, 8.0)

    def test_needs_enough_rows(self):
        # Arrange
        states = StateMatrix(np.ones((50, 4)), (4,))
        # Act & Assert
        with self.assertRaises(ValueError):
            spatial_autocorr_width(states, 1)


if __name__ == "__main__":
    unittest.main()
