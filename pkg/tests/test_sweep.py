import tempfile
import unittest
from pathlib import Path
from unittest.mock import patch

import numpy as np
from pydantic import ValidationError

import tests.setup  # noqa: F401; Imported for quiet logging side-effect
from delay_reservoir.errors import ConfigError, IntegrationBlowupError
from delay_reservoir.readout import DEFAULT_RIDGE_GRID
from delay_reservoir.sweep import (
    GridAxis,
    PointStatus,
    compare_topologies,
    config_digest,
    run_grid,
)
from delay_reservoir.tasks import prepare_task, required_length, run_pipeline
from tests.setup import make_cascade, make_layer, make_network, make_task

BETA = "layers.1.beta"


class TestTaskSpec(unittest.TestCase):
    def test_defaults_follow_the_system(self):
        # Arrange & Act
        mackey_glass = make_task(discard=None)
        lorenz = make_task(system="lorenz", discard=None)
        # Assert
        self.assertEqual(mackey_glass.default_embedding_lag, 17)
        self.assertEqual(lorenz.default_embedding_lag, 3)
        self.assertEqual(mackey_glass.resolved_discard, 1000)
        self.assertEqual(lorenz.resolved_discard, 5000)
        self.assertGreater(lorenz.lyapunov_max, mackey_glass.lyapunov_max)

    def test_readout_constraints_are_checked(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValidationError):
            make_task(ridge_grid=(1.0, 0.0))

    def test_required_length_covers_every_row(self):
        # Arrange
        task = make_task(delta_n=3)
        # Act & Assert
        self.assertEqual(required_length(task, washout=20), 20 + 300 + 100 + 3)


class TestPrepareTask(unittest.TestCase):
    def test_series_is_generated_once(self):
        # Arrange
        task = make_task()
        # Act
        first = prepare_task(task, 10)
        second = prepare_task(task, 10)
        # Assert
        self.assertIs(first.input, second.input)
        self.assertEqual(len(first.input), 411)

    def test_input_is_standardized(self):
        # Arrange & Act
        data = prepare_task(make_task(), 0)
        # Assert
        values = data.input.values()
        self.assertAlmostEqual(values.mean(), 0.0)
        self.assertAlmostEqual(values.std(), 1.0)
        self.assertIsNotNone(data.input.normalization)

    def test_seed_changes_the_history(self):
        # Arrange & Act
        first = prepare_task(make_task(seed=1), 0)
        second = prepare_task(make_task(seed=2), 0)
        # Assert
        self.assertFalse(np.array_equal(first.raw.samples, second.raw.samples))


class TestRunPipeline(unittest.TestCase):
    def test_reports_test_error_on_held_out_rows(self):
        # Arrange
        network = make_network(washout_steps=20)
        # Act
        result = run_pipeline(network, make_task())
        # Assert
        self.assertEqual(result.states.n_rows, 400)
        self.assertEqual(result.report.n_test, 100)
        self.assertTrue(np.isfinite(result.report.nmse_test))
        self.assertLess(result.report.nmse_train, 1.0)


class TestRunGrid(unittest.TestCase):
    def setUp(self):
        self.base = make_network(washout_steps=20)
        self.task = make_task()

    def test_single_point_matches_a_direct_run(self):
        # Arrange
        axis = GridAxis(parameter_path=BETA, values=(0.5,))
        # Act
        result = run_grid(self.base, self.task, [axis])
        # Assert
        direct = run_pipeline(self.base, self.task).report
        self.assertEqual(result.rows[0].nmse_test, direct.nmse_test)
        self.assertEqual(result.rows[0].nmse_train, direct.nmse_train)

    def test_rows_follow_grid_order(self):
        # Arrange
        axes = [
            GridAxis(parameter_path=BETA, values=(0.3, 0.6)),
            GridAxis(parameter_path="layers.1.input_gain", values=(0.5, 1.0, 1.5)),
        ]
        # Act
        result = run_grid(self.base, self.task, axes)
        # Assert
        self.assertEqual(len(result), 6)
        self.assertEqual(result.rows[0].point, (0.3, 0.5))
        self.assertEqual(result.rows[1].point, (0.3, 1.0))
        self.assertEqual(result.rows[5].point, (0.6, 1.5))
        self.assertEqual(result.seed, self.base.seed)

    def test_parallel_run_gives_the_same_table(self):
        # Arrange
        axis = GridAxis(parameter_path=BETA, values=(0.2, 0.4, 0.6, 0.8))
        # Act
        serial = run_grid(self.base, self.task, [axis], parallelism=1)
        parallel = run_grid(self.base, self.task, [axis], parallelism=2)
        # Assert
        self.assertEqual(
            [(r.point, r.nmse_test, r.status) for r in serial.rows],
            [(r.point, r.nmse_test, r.status) for r in parallel.rows],
        )

    def test_repeated_sweeps_write_identical_tables(self):
        # Arrange
        axis = GridAxis(parameter_path=BETA, values=(0.4, 0.8))
        with tempfile.TemporaryDirectory() as directory:
            first = Path(directory) / "first.csv"
            second = Path(directory) / "second.csv"
            # Act
            run_grid(self.base, self.task, [axis]).to_csv(first)
            run_grid(self.base, self.task, [axis]).to_csv(second)
            # Assert
            self.assertEqual(first.read_bytes(), second.read_bytes())

    @patch("delay_reservoir.sweep.run_pipeline")
    def test_failing_point_is_recorded(self, mock_pipeline):
        # Arrange
        def pipeline(config, task):
            if config.layers[0].beta > 1.0:
                raise IntegrationBlowupError("non-finite state", layer=1)
            return run_pipeline(config, task)

        mock_pipeline.side_effect = pipeline
        axis = GridAxis(parameter_path=BETA, values=(0.5, 2.0))
        # Act
        result = run_grid(self.base, self.task, [axis])
        # Assert
        self.assertEqual(result.rows[0].status, PointStatus.OK)
        self.assertEqual(result.rows[1].status, PointStatus.BLOWUP)
        self.assertIsNone(result.rows[1].nmse_test)
        self.assertEqual(result.best().point, (0.5,))

    @patch("delay_reservoir.sweep.run_pipeline")
    def test_value_error_at_a_point_does_not_stop_the_scan(self, mock_pipeline):
        # Arrange
        def pipeline(config, task):
            if config.layers[0].beta < 0.5:
                raise ValueError("only 1 test rows after the training block")
            return run_pipeline(config, task)

        mock_pipeline.side_effect = pipeline
        axis = GridAxis(parameter_path=BETA, values=(0.2, 0.8))
        # Act
        result = run_grid(self.base, self.task, [axis], parallelism=2)
        # Assert
        self.assertEqual(result.rows[0].status, PointStatus.FAILED)
        self.assertIn("test rows", result.rows[0].message)
        self.assertEqual(result.rows[1].status, PointStatus.OK)
        self.assertEqual(result.best().point, (0.8,))

    def test_smallest_training_block_sweeps(self):
        # Arrange
        task = make_task(n_train=10, ridge_grid=DEFAULT_RIDGE_GRID)
        axis = GridAxis(parameter_path=BETA, values=(0.4, 0.6))
        # Act
        result = run_grid(self.base, task, [axis])
        # Assert
        self.assertEqual([row.status for row in result.rows], [PointStatus.OK] * 2)

    def test_unknown_path_is_a_config_error(self):
        # Arrange
        axis = GridAxis(parameter_path="layers.4.beta", values=(0.5,))
        # Act & Assert
        with self.assertRaises(ConfigError):
            run_grid(self.base, self.task, [axis])

    def test_invalid_point_is_a_config_error(self):
        # Arrange
        axis = GridAxis(parameter_path="layers.1.tau_fast", values=(0.1, 0.0))
        # Act & Assert
        with self.assertRaises(ConfigError):
            run_grid(self.base, self.task, [axis])

    def test_axis_count_and_parallelism_are_checked(self):
        # Arrange
        axis = GridAxis(parameter_path=BETA, values=(0.5,))
        # Act & Assert
        with self.assertRaises(ValueError):
            run_grid(self.base, self.task, [])
        with self.assertRaises(ValueError):
            run_grid(self.base, self.task, [axis] * 4)
        with self.assertRaises(ValueError):
            run_grid(self.base, self.task, [axis], parallelism=0)

    def test_heatmap_needs_two_axes(self):
        # Arrange
        axis = GridAxis(parameter_path=BETA, values=(0.5,))
        result = run_grid(self.base, self.task, [axis])
        with tempfile.TemporaryDirectory() as directory:
            # Act & Assert
            with self.assertRaises(ValueError):
                result.heatmap_csv(Path(directory) / "heatmap.csv")

    def test_boolean_axis_values_are_rejected(self):
        # Arrange & Act & Assert
        with self.assertRaises(ValidationError):
            GridAxis(parameter_path=BETA, values=(True,))


class TestCompareTopologies(unittest.TestCase):
    def setUp(self):
        self.task = make_task()

    def test_identical_networks_score_the_same(self):
        # Arrange
        network = make_cascade(washout_steps=20)
        # Act
        report = compare_topologies([network, network], self.task, names=["a", "b"])
        # Assert
        first, second = report.entries
        self.assertEqual(first.nmse_test, second.nmse_test)
        self.assertEqual(len(report.ranking), 2)

    def test_ranking_is_by_test_error(self):
        # Arrange
        single = make_network([make_layer(n_nodes=20)], washout_steps=20)
        deep = make_cascade(washout_steps=20)
        # Act
        report = compare_topologies([single, deep], self.task, names=["1", "2"])
        # Assert
        by_name = {entry.name: entry.nmse_test for entry in report.entries}
        self.assertEqual(list(report.ranking), sorted(by_name, key=by_name.get))
        self.assertEqual(report.entries[1].n_layers, 2)

    def test_node_budgets_must_match(self):
        # Arrange
        small = make_network(washout_steps=20)
        large = make_cascade(washout_steps=20)
        # Act & Assert
        with self.assertRaises(ValueError):
            compare_topologies([small, large], self.task)
        report = compare_topologies([small, large], self.task, check_budget=False)
        self.assertEqual(len(report.entries), 2)

    @patch("delay_reservoir.sweep.run_pipeline")
    def test_failing_network_is_listed_but_not_ranked(self, mock_pipeline):
        # Arrange
        single = make_network(washout_steps=20)
        broken = make_network([make_layer(beta=0.9)], washout_steps=20)

        def pipeline(config, task):
            if config.layers[0].beta == 0.9:
                raise ValueError("nmse needs at least 2 samples")
            return run_pipeline(config, task)

        mock_pipeline.side_effect = pipeline
        # Act
        report = compare_topologies([single, broken], self.task, names=["a", "b"])
        # Assert
        self.assertEqual(report.entries[1].status, PointStatus.FAILED)
        self.assertEqual(list(report.ranking), ["a"])

    def test_names_must_be_unique(self):
        # Arrange
        network = make_network(washout_steps=20)
        # Act & Assert
        with self.assertRaises(ValueError):
            compare_topologies([network, network], self.task, names=["a", "a"])


class TestConfigDigest(unittest.TestCase):
    def test_digest_tracks_the_config(self):
        # Arrange
        base = make_network()
        # Act & Assert
        self.assertEqual(config_digest(base), config_digest(make_network()))
        self.assertNotEqual(
            config_digest(base), config_digest(base.with_parameter(BETA, 0.7))
        )


if __name__ == "__main__":
    unittest.main()
