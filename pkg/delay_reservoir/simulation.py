"""Time integration of a cascade of delay oscillators.

Each layer i obeys

    tau_i dx_i/dt = -x_i - delta_i y_i + beta_i sin^2(d_i + b_i)
    dy_i/dt = x_i
    d_i(t) = x_i(t - tau_Di) + w_{i-1,i} x_{i-1}(t) + w_{i+1,i} x_{i+1}(t) + rho_i u(t)

The linear part is propagated exactly over a substep (exponential
integrator) while the nonlinear drive is held at its substep-start value.
Fast time constants can be much shorter than the node spacing, so an
explicit scheme would need far smaller steps for the same accuracy.

Virtual nodes are read on the input clock: every layer is sampled at N_i
evenly spaced instants of each input hold interval, so all layers share the
row index n the readout trains on.
"""

import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numba
import numpy as np
from scipy import linalg

from . import serializers
from .buffers import ring_value
from .errors import IntegrationBlowupError
from .timeseries import Timeseries

logger = logging.getLogger(__name__)

# above this many substeps a trace would hold more than ~100 MB per layer
MAX_TRACE_SUBSTEPS = 5_000_000


@dataclass(frozen=True)
class StateMatrix:
    """Virtual-node states: one row per input step, one column per node.

    Columns are grouped by layer in cascade order. ``first_input_index`` is
    the index in the driving series of the input applied during row 0.
    """

    entries: np.ndarray
    n_nodes: tuple
    first_input_index: int = 0
    sample_interval: float = 1.0

    def __post_init__(self):
        entries = np.asarray(self.entries, dtype=float).view()
        n_nodes = tuple(int(n) for n in self.n_nodes)
        if entries.ndim != 2:
            raise ValueError("state entries must be a 2-D matrix")
        if entries.shape[1] != sum(n_nodes):
            raise ValueError(
                f"{entries.shape[1]} columns do not match layer sizes {n_nodes}"
            )
        if not np.all(np.isfinite(entries)):
            raise ValueError("state entries must all be finite")
        entries.setflags(write=False)
        object.__setattr__(self, "entries", entries)
        object.__setattr__(self, "n_nodes", n_nodes)

    @property
    def n_rows(self):
        return self.entries.shape[0]

    @property
    def n_cols(self):
        return self.entries.shape[1]

    @property
    def n_layers(self):
        return len(self.n_nodes)

    def _offset(self, layer):
        if not 1 <= layer <= self.n_layers:
            raise ValueError(f"layer {layer} does not exist (1..{self.n_layers})")
        return sum(self.n_nodes[: layer - 1])

    def column(self, layer, node):
        """Column of node ``node`` (0-based) of layer ``layer`` (1-based)."""
        if not 0 <= node < self.n_nodes[layer - 1]:
            raise ValueError(f"layer {layer} has no node {node}")
        return self._offset(layer) + node

    def column_map(self):
        return [
            (layer, node)
            for layer, size in enumerate(self.n_nodes, start=1)
            for node in range(size)
        ]

    def layer_block(self, layer):
        """Spatio-temporal view (n, sigma) of one layer."""
        start = self._offset(layer)
        return self.entries[:, start : start + self.n_nodes[layer - 1]]

    def slice_rows(self, start, stop=None):
        return StateMatrix(
            self.entries[start:stop],
            self.n_nodes,
            self.first_input_index + start,
            self.sample_interval,
        )

    def to_binary(self, path):
        data = serializers.encode_state_matrix(
            self.entries, self.n_nodes, self.first_input_index, self.sample_interval
        )
        return serializers.atomic_write(path, data)

    @classmethod
    def from_binary(cls, path):
        entries, n_nodes, first, interval = serializers.decode_state_matrix(
            Path(path).read_bytes()
        )
        return cls(entries, n_nodes, first, interval)

    def to_csv(self, path):
        header = ["n"] + [f"L{layer}_{node}" for layer, node in self.column_map()]
        rows = (
            [self.first_input_index + n] + [float(v) for v in row]
            for n, row in enumerate(self.entries)
        )
        return serializers.atomic_write(path, serializers.table_to_csv(header, rows))


@dataclass
class SimulationState:
    """Mutable integration state of a running network.

    ``ring`` holds x_i over at least the last tau_Di at substep resolution,
    ``y`` the integral variables (identically 0 for low-pass layers) and
    ``step`` the global substep counter. Not to be shared between threads
    while a run is advancing.
    """

    ring: np.ndarray
    x: np.ndarray
    y: np.ndarray
    step: int
    substep: float

    @property
    def time(self):
        return self.step * self.substep

    def copy(self):
        return SimulationState(
            self.ring.copy(), self.x.copy(), self.y.copy(), self.step, self.substep
        )


@dataclass(frozen=True)
class SimulationTrace:
    """Substep-resolution record of a short run, for diagnostics."""

    times: np.ndarray
    x: np.ndarray
    drive: np.ndarray
    states: StateMatrix


def propagator(layer, h):
    """Exact one-substep map of the linear layer dynamics under a held drive.

    Returns (phi, gamma) with [x, y](t + h) = phi @ [x, y](t) + gamma * f,
    where f is the nonlinear term held over the substep. Low-pass layers keep
    y at zero.
    """
    if not layer.is_band_pass:
        decay = math.exp(-h / layer.tau_fast)
        phi = np.array([[decay, 0.0], [0.0, 0.0]])
        gamma = np.array([-math.expm1(-h / layer.tau_fast), 0.0])
        return phi, gamma
    tau, delta = layer.tau_fast, layer.delta_slow
    # augmented generator: the constant drive is the third state
    generator = np.array(
        [[-1.0 / tau, -delta / tau, 1.0 / tau], [1.0, 0.0, 0.0], [0.0, 0.0, 0.0]]
    )
    exact = linalg.expm(generator * h)
    return exact[:2, :2].copy(), exact[:2, 2].copy()


@numba.njit(cache=True, nogil=True)
def _advance(
    inputs,
    mask,
    substeps_per_node,
    beta,
    bias,
    gain,
    w_prev,
    w_next,
    feedback,
    phi,
    gamma,
    delay,
    slots,
    col_offset,
    n_nodes,
    ring,
    x,
    y,
    start,
    rows,
    trace_x,
    trace_f,
):
    n_layers = x.shape[0]
    per_step = mask.shape[0] * substeps_per_node
    tracing = trace_x.shape[0] > 0
    held = np.empty(n_layers)
    cursor = np.empty(n_layers, np.int64)
    for n in range(inputs.shape[0]):
        cursor[:] = 0
        for j in range(per_step):
            k = start + n * per_step + j
            u = mask[j // substeps_per_node] * inputs[n]
            # neighbours couple through their substep-start values
            for i in range(n_layers):
                held[i] = x[i]
            for i in range(n_layers):
                d = gain[i] * u
                if feedback[i]:
                    d += ring_value(ring[i], k - delay[i])
                if i > 0:
                    d += w_prev[i] * held[i - 1]
                if i < n_layers - 1:
                    d += w_next[i] * held[i + 1]
                s = math.sin(d + bias[i])
                f = beta[i] * s * s
                xi = phi[i, 0, 0] * held[i] + phi[i, 0, 1] * y[i] + gamma[i, 0] * f
                y[i] = phi[i, 1, 0] * held[i] + phi[i, 1, 1] * y[i] + gamma[i, 1] * f
                x[i] = xi
                ring[i, (k + 1) % ring.shape[1]] = xi
                if tracing:
                    trace_f[n * per_step + j, i] = f
                    trace_x[n * per_step + j + 1, i] = xi
                if not (math.isfinite(xi) and math.isfinite(y[i])):
                    return n, i
            for i in range(n_layers):
                if cursor[i] < n_nodes[i] and slots[i, cursor[i]] == j + 1:
                    rows[n, col_offset[i] + cursor[i]] = x[i]
                    cursor[i] += 1
    return -1, -1


class Reservoir:
    """A NetworkConfig compiled into the flat arrays the kernel consumes.

    Integration is resumable: ``advance`` continues from a SimulationState,
    which is what closed-loop operation needs.
    """

    def __init__(self, config):
        self.config = config
        layers = config.layers
        h = config.substep
        self.substep = h
        self.per_step = config.substeps_per_input
        self.mask = config.mask.array()
        self.n_nodes = np.array([layer.n_nodes for layer in layers], dtype=np.int64)
        self.beta = np.array([layer.beta for layer in layers])
        self.bias = np.array([layer.bias for layer in layers])
        self.gain = np.array([layer.input_gain for layer in layers])
        self.w_prev = np.array([layer.w_from_prev for layer in layers])
        self.w_next = np.array([layer.w_from_next for layer in layers])
        self.feedback = np.array([layer.self_feedback for layer in layers])
        self.delay = np.array([layer.tau_delay / h for layer in layers])
        maps = [propagator(layer, h) for layer in layers]
        self.phi = np.array([phi for phi, _ in maps])
        self.gamma = np.array([gamma for _, gamma in maps])
        self.slots = np.full((len(layers), int(self.n_nodes.max())), -1, np.int64)
        for i, size in enumerate(self.n_nodes):
            nodes = np.arange(1, size + 1, dtype=np.int64)
            self.slots[i, :size] = nodes * self.per_step // size
        self.col_offset = np.concatenate([[0], np.cumsum(self.n_nodes)[:-1]]).astype(
            np.int64
        )
        self.ring_size = int(math.ceil(self.delay.max())) + 2
        logger.debug(
            f"Compiled {len(layers)}-layer reservoir: substep {h:.3g}, "
            f"{self.per_step} substeps per input, delays {self.delay} substeps"
        )

    @property
    def n_cols(self):
        return int(self.n_nodes.sum())

    def initial_state(self):
        """Constant history x_i(t <= 0) = initial_state, y_i(0) = 0."""
        x0 = np.array([layer.initial_state for layer in self.config.layers])
        ring = np.repeat(x0[:, None], self.ring_size, axis=1)
        return SimulationState(ring, x0.copy(), np.zeros_like(x0), 0, self.substep)

    def advance(self, state, inputs, trace=None):
        """Integrate ``len(inputs)`` input steps; returns their state rows.

        ``trace`` may be a (trace_x, trace_f) pair of preallocated arrays
        to record every substep.
        """
        inputs = np.ascontiguousarray(inputs, dtype=float)
        rows = np.zeros((inputs.shape[0], self.n_cols))
        if trace is None:
            trace = (np.empty((0, 0)), np.empty((0, 0)))
        failed_step, failed_layer = _advance(
            inputs,
            self.mask,
            self.config.substeps_per_node,
            self.beta,
            self.bias,
            self.gain,
            self.w_prev,
            self.w_next,
            self.feedback,
            self.phi,
            self.gamma,
            self.delay,
            self.slots,
            self.col_offset,
            self.n_nodes,
            state.ring,
            state.x,
            state.y,
            state.step,
            rows,
            trace[0],
            trace[1],
        )
        if failed_step >= 0:
            time = (state.step + (failed_step + 1) * self.per_step) * self.substep
            raise IntegrationBlowupError(
                f"non-finite state in layer {failed_layer + 1} during input step "
                f"{failed_step} (t <= {time:.6g})",
                time=time,
                step=failed_step,
                layer=failed_layer + 1,
            )
        state.step += inputs.shape[0] * self.per_step
        return rows


def _scalar_input(s):
    if isinstance(s, Timeseries):
        if s.dimension != 1:
            raise ValueError(
                f"reservoir input must be scalar, got dimension {s.dimension}"
            )
        return s.values(), s.sample_interval
    values = np.asarray(s, dtype=float)
    if values.ndim != 1:
        raise ValueError("reservoir input must be a 1-D sequence")
    return values, 1.0


def simulate(config, s, n_rows=None):
    """Drive the network with ``s`` and return the post-washout state rows.

    Row n holds the node states produced while s(washout + n) was applied.
    """
    values, interval = _scalar_input(s)
    washout = config.washout_steps
    if n_rows is None:
        n_rows = len(values) - washout
    if n_rows < 1 or len(values) < washout + n_rows:
        raise ValueError(
            f"input of length {len(values)} is too short for {washout} washout "
            f"steps plus {n_rows} rows"
        )
    reservoir = Reservoir(config)
    state = reservoir.initial_state()
    rows = reservoir.advance(state, values[: washout + n_rows])
    logger.info(
        f"Simulated {washout + n_rows} input steps on {reservoir.n_cols} nodes "
        f"(t_end={state.time:.6g})"
    )
    return StateMatrix(rows[washout:], config_sizes(config), washout, interval)


def trace(config, s):
    """Like ``simulate`` (washout not dropped) but records every substep."""
    values, interval = _scalar_input(s)
    reservoir = Reservoir(config)
    n_sub = len(values) * reservoir.per_step
    if n_sub > MAX_TRACE_SUBSTEPS:
        raise ValueError(
            f"trace of {n_sub} substeps exceeds {MAX_TRACE_SUBSTEPS}; use simulate"
        )
    state = reservoir.initial_state()
    n_layers = len(config.layers)
    trace_x = np.empty((n_sub + 1, n_layers))
    trace_x[0] = state.x
    trace_f = np.empty((n_sub, n_layers))
    rows = reservoir.advance(state, values, trace=(trace_x, trace_f))
    times = np.arange(n_sub + 1) * reservoir.substep
    return SimulationTrace(
        times, trace_x, trace_f, StateMatrix(rows, config_sizes(config), 0, interval)
    )


def config_sizes(config):
    return tuple(layer.n_nodes for layer in config.layers)
