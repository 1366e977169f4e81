# Import this from test modules for the shared small builders; importing it
# also quiets the package loggers so test output stays readable.

import logging

from delay_reservoir.network import LayerConfig, NetworkConfig, build_mask
from delay_reservoir.tasks import TaskSpec

logging.getLogger("delay_reservoir").setLevel(logging.ERROR)

SMALL_RIDGE_GRID = (1e-8, 1e-6, 1e-4)


def make_layer(**overrides):
    """A 10-node low-pass layer with a 1.25 delay (hold interval 1.0)."""
    fields = {
        "beta": 0.5,
        "tau_fast": 0.1,
        "delta_slow": 0.0,
        "tau_delay": 1.25,
        "bias": 0.2,
        "n_nodes": 10,
        "input_gain": 1.0,
    }
    fields.update(overrides)
    return LayerConfig(**fields)


def make_network(layers=None, substeps_per_node=4, washout_steps=0, seed=0, **extra):
    layers = tuple(layers) if layers is not None else (make_layer(),)
    mask = build_mask(layers[0].n_nodes, seed)
    return NetworkConfig(
        layers=layers,
        mask=mask,
        substeps_per_node=substeps_per_node,
        washout_steps=washout_steps,
        seed=seed,
        **extra,
    )


def make_cascade(n_layers=2, n_nodes=10, **network_extra):
    """Low-pass input layer feeding band-pass layers, unidirectionally."""
    layers = [make_layer(n_nodes=n_nodes)]
    for _ in range(n_layers - 1):
        layers.append(
            make_layer(
                n_nodes=n_nodes,
                input_gain=0.0,
                delta_slow=0.05,
                tau_fast=0.12,
                w_from_prev=0.8,
            )
        )
    return make_network(layers, **network_extra)


def make_task(**overrides):
    fields = {
        "system": "mackey_glass",
        "delta_n": 1,
        "n_train": 300,
        "n_test": 100,
        "discard": 200,
        "ridge_grid": SMALL_RIDGE_GRID,
    }
    fields.update(overrides)
    return TaskSpec(**fields)
