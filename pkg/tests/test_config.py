import tempfile
import unittest
from pathlib import Path

import tests.setup  # noqa: F401; Imported for quiet logging side-effect
from delay_reservoir.config import (
    available_presets,
    deep_merge,
    dump_config,
    load_config,
    parse_config,
    parse_document,
    preset_config,
)
from delay_reservoir.errors import ConfigError

MINIMAL = """
seed = 3

[task]
delta_n = 2
n_train = 200
n_test = 50

[network]
washout_steps = 10

[[network.layers]]
beta = 0.5
tau_fast = 0.1
tau_delay = 1.25
n_nodes = 10
input_gain = 1.0
"""


def layer(**overrides):
    fields = {"beta": 0.5, "tau_fast": 0.1, "tau_delay": 1.25, "n_nodes": 10}
    fields.update(overrides)
    return fields


def issue_paths(caught):
    return [path for path, _ in caught.exception.issues]


class TestParseConfig(unittest.TestCase):
    def test_minimal_document(self):
        # Arrange & Act
        config = parse_config(MINIMAL)
        # Assert
        network = config.network_config()
        self.assertEqual(config.seed, 3)
        self.assertEqual(network.washout_steps, 10)
        self.assertEqual(network.mask.seed, 3)
        self.assertEqual(len(network.mask.values), 10)
        self.assertEqual(config.task_spec().delta_n, 2)
        self.assertEqual(config.task_spec().seed, 3)

    def test_dumped_config_parses_back_equal(self):
        # Arrange
        config = parse_config(MINIMAL)
        # Act
        reparsed = parse_config(dump_config(config))
        # Assert
        self.assertEqual(reparsed, config)

    def test_unknown_key_is_rejected(self):
        # Arrange
        document = {"network": {"layers": [layer(gain=2.0)]}}
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        self.assertIn("network.layers.1.gain", issue_paths(caught))

    def test_every_field_error_is_listed(self):
        # Arrange
        document = {
            "network": {"layers": [layer(), layer(tau_fast=-1.0, n_nodes=0)]},
            "task": {"n_test": 1},
        }
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        paths = issue_paths(caught)
        self.assertIn("network.layers.2.tau_fast", paths)
        self.assertIn("network.layers.2.n_nodes", paths)
        self.assertIn("task.n_test", paths)

    def test_gating_violations_are_listed_together(self):
        # Arrange
        document = {
            "network": {
                "layers": [
                    layer(delta_slow=0.1, input_gain=1.0),
                    layer(input_gain=2.0, w_from_prev=0.5),
                ]
            }
        }
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        paths = issue_paths(caught)
        self.assertIn("network.layers.1.delta_slow", paths)
        self.assertIn("network.layers.2.input_gain", paths)

    def test_input_to_all_layers_lifts_gating(self):
        # Arrange
        document = {
            "network": {
                "input_to_all_layers": True,
                "layers": [layer(input_gain=1.0), layer(input_gain=2.0)],
            }
        }
        # Act
        config = parse_document(document)
        # Assert
        self.assertEqual(config.network_config().layers[1].input_gain, 2.0)

    def test_training_fields_report_their_section(self):
        # Arrange
        document = {
            "network": {"layers": [layer()]},
            "train": {"ridge_grid": [1.0, 0.1]},
        }
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        self.assertTrue(any(p.startswith("train.") for p in issue_paths(caught)))

    def test_sweep_axis_must_resolve(self):
        # Arrange
        document = {
            "network": {"layers": [layer()]},
            "sweep": {"axes": [{"parameter_path": "layers.2.beta", "values": [1.0]}]},
        }
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        self.assertEqual(issue_paths(caught), ["sweep.axes.1.parameter_path"])

    def test_explicit_mask_values_are_kept(self):
        # Arrange
        document = {
            "network": {
                "layers": [layer(n_nodes=2)],
                "mask": {"values": [0.5, -0.5]},
            }
        }
        # Act
        network = parse_document(document).network_config()
        # Assert
        self.assertEqual(network.mask.values, (0.5, -0.5))

    def test_mask_amplitude_scales_the_drawn_mask(self):
        # Arrange
        document = {
            "network": {"layers": [layer()], "mask": {"amplitude": 0.025}},
        }
        # Act
        mask = parse_document(document).network_config().mask
        # Assert
        self.assertEqual(mask.amplitude, 0.025)
        self.assertLessEqual(max(abs(v) for v in mask.values), 0.025)

    def test_broken_toml_is_a_config_error(self):
        # Arrange & Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_config("[network\nbeta = ")
        self.assertEqual(issue_paths(caught), ["<document>"])

    def test_load_from_file(self):
        # Arrange
        with tempfile.TemporaryDirectory() as directory:
            path = Path(directory) / "experiment.toml"
            path.write_text(MINIMAL)
            # Act
            config = load_config(path)
        # Assert
        self.assertEqual(config.seed, 3)


class TestPresets(unittest.TestCase):
    def test_listing_hides_partial_presets(self):
        # Arrange & Act
        names = available_presets()
        # Assert
        self.assertIn("fig3c", names)
        self.assertIn("table1", names)
        self.assertFalse(any(name.startswith("_") for name in names))

    def test_every_preset_validates(self):
        for name in available_presets():
            with self.subTest(name):
                # Arrange & Act & Assert
                preset_config(name)

    def test_preset_drive_peak_per_unit_input(self):
        for name in available_presets():
            with self.subTest(name):
                # Arrange
                config = preset_config(name)
                networks = [config.network_config()] + [
                    network for _, network in config.compare_networks()
                ]
                for network in networks:
                    # Act
                    gain = network.layers[0].input_gain
                    peak = gain * max(abs(v) for v in network.mask.values)
                    # Assert
                    self.assertLessEqual(peak, 0.25)

    def test_coupling_scan_preset(self):
        # Arrange & Act
        config = preset_config("fig3c")
        # Assert
        axes = config.sweep.axes
        self.assertEqual(
            [axis.parameter_path for axis in axes],
            ["layers.2.w_from_prev", "layers.1.w_from_next"],
        )
        self.assertEqual(len(axes[0].values), 11)
        self.assertEqual(axes[1].values[-1], 1.0)
        self.assertEqual(config.task.delta_n, 34)
        self.assertEqual(config.network.layers[0].n_nodes, 600)
        first, second = config.network.layers
        self.assertEqual((first.tau_fast, second.tau_fast), (0.6e-3, 0.6e-3))
        self.assertEqual(first.tau_delay, 12.0)
        self.assertEqual((first.bias, first.input_gain), (0.2, 8.0))
        self.assertEqual((second.delta_slow, second.n_nodes), (0.01, 600))

    def test_overrides_are_applied(self):
        # Arrange & Act
        network = preset_config("fig3b").network_config()
        # Assert
        self.assertEqual(network.layers[1].w_from_prev, 0.7)
        self.assertEqual(network.layers[0].w_from_next, 0.6)

    def test_file_keys_win_over_the_preset(self):
        # Arrange
        document = {"preset": "fig3c", "seed": 9, "task": {"n_test": 500}}
        # Act
        config = parse_document(document)
        # Assert
        self.assertEqual(config.seed, 9)
        self.assertEqual(config.task.n_test, 500)
        self.assertEqual(config.task.n_train, 5000)

    def test_compare_preset_keeps_the_node_budget(self):
        # Arrange & Act
        networks = preset_config("table1").compare_networks()
        # Assert
        self.assertEqual([len(n.layers) for _, n in networks], [1, 2, 3])
        self.assertEqual({n.total_nodes for _, n in networks}, {1200})

    def test_embedding_lag_defaults_by_system(self):
        # Arrange & Act & Assert
        self.assertEqual(preset_config("fig4-lz").embedding_spec().lag, 3)
        self.assertEqual(preset_config("fig4-mg").embedding_spec().lag, 17)

    def test_preset_round_trip(self):
        # Arrange
        config = preset_config("fig3b")
        # Act & Assert
        self.assertEqual(parse_config(dump_config(config)), config)

    def test_unknown_preset(self):
        # Arrange & Act & Assert
        with self.assertRaises(ConfigError) as caught:
            preset_config("no-such-preset")
        self.assertEqual(issue_paths(caught), ["preset"])

    def test_bad_override_path(self):
        # Arrange
        document = {"preset": "fig3c", "overrides": {"layers.5.beta": 1.0}}
        # Act & Assert
        with self.assertRaises(ConfigError) as caught:
            parse_document(document)
        self.assertIn("overrides.layers.5.beta", issue_paths(caught))


class TestDeepMerge(unittest.TestCase):
    def test_tables_merge_and_values_replace(self):
        # Arrange
        base = {"task": {"n_train": 10, "n_test": 5}, "axes": [1, 2]}
        overlay = {"task": {"n_test": 7}, "axes": [3]}
        # Act
        merged = deep_merge(base, overlay)
        # Assert
        self.assertEqual(merged, {"task": {"n_train": 10, "n_test": 7}, "axes": [3]})
        self.assertEqual(base["task"]["n_test"], 5)


if __name__ == "__main__":
    unittest.main()
