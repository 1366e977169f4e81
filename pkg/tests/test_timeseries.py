import tempfile
import unittest
from pathlib import Path

import numpy as np

import tests.setup  # noqa: F401; Imported for quiet logging side-effect
from delay_reservoir.errors import DegenerateInputError
from delay_reservoir.timeseries import (
    Normalization,
    Timeseries,
    destandardize,
    standardize,
)


class TestTimeseries(unittest.TestCase):
    def test_scalar_samples_are_stored_as_one_column(self):
        # Arrange & Act
        series = Timeseries([1.0, 2.0, 3.0], sample_interval=0.5)
        # Assert
        self.assertEqual(series.samples.shape, (3, 1))
        self.assertEqual(series.dimension, 1)
        self.assertEqual(len(series), 3)
        np.testing.assert_array_equal(series.values(), [1.0, 2.0, 3.0])

    def test_samples_are_read_only(self):
        # Arrange
        series = Timeseries(np.zeros(4))
        # Act & Assert
        with self.assertRaises(ValueError):
            series.samples[0, 0] = 1.0

    def test_non_finite_samples_rejected(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValueError):
            Timeseries([0.0, np.nan])

    def test_non_positive_interval_rejected(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValueError):
            Timeseries([0.0, 1.0], sample_interval=0.0)

    def test_component_keeps_matching_normalization(self):
        # Arrange
        norm = Normalization([1.0, 2.0], [3.0, 4.0])
        series = Timeseries(np.ones((5, 2)), 1.0, norm)
        # Act
        second = series.component(1)
        # Assert
        self.assertEqual(second.dimension, 1)
        np.testing.assert_array_equal(second.normalization.offset, [2.0])
        np.testing.assert_array_equal(second.normalization.scale, [4.0])


class TestStandardize(unittest.TestCase):
    def test_zero_mean_unit_variance(self):
        # Arrange
        rng = np.random.default_rng(3)
        series = Timeseries(rng.normal(5.0, 2.0, size=(500, 2)))
        # Act
        result = standardize(series)
        # Assert
        np.testing.assert_allclose(result.samples.mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(result.samples.std(axis=0), 1.0, rtol=1e-12)
        self.assertIsNotNone(result.normalization)

    def test_destandardize_restores_original_units(self):
        # Arrange
        series = Timeseries(np.linspace(-3.0, 7.0, 50), 0.02)
        # Act
        restored = destandardize(standardize(series))
        # Assert
        np.testing.assert_allclose(restored.samples, series.samples, atol=1e-12)
        self.assertEqual(restored.sample_interval, 0.02)
        self.assertIsNone(restored.normalization)

    def test_constant_series_is_degenerate(self):
        # Arrange
        series = Timeseries(np.full(10, 1.0))
        # Act & Assert
        with self.assertRaises(DegenerateInputError):
            standardize(series)

    def test_empty_series_rejected(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValueError):
            standardize(Timeseries(np.zeros((0, 1))))


class TestTimeseriesFiles(unittest.TestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.root = Path(self.tmp.name)

    def tearDown(self):
        self.tmp.cleanup()

    def test_csv_preserves_values_and_normalization(self):
        # Arrange
        series = standardize(Timeseries(np.array([0.1, 0.7, -0.3, 1e-17]), 0.02))
        # Act
        series.to_csv(self.root / "s.csv")
        loaded = Timeseries.from_csv(self.root / "s.csv")
        # Assert
        np.testing.assert_array_equal(loaded.samples, series.samples)
        self.assertEqual(loaded.sample_interval, 0.02)
        np.testing.assert_array_equal(
            loaded.normalization.scale, series.normalization.scale
        )

    def test_binary_preserves_multicomponent_series(self):
        # Arrange
        series = Timeseries(np.arange(12.0).reshape(4, 3), 0.5)
        # Act
        series.to_binary(self.root / "s.bin")
        loaded = Timeseries.from_binary(self.root / "s.bin")
        # Assert
        np.testing.assert_array_equal(loaded.samples, series.samples)
        self.assertIsNone(loaded.normalization)
        self.assertTrue((self.root / "s.bin").read_bytes().startswith(b"DTDRTS01"))


if __name__ == "__main__":
    unittest.main()
