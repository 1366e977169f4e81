"""Closed-loop (free-running) operation and attractor divergence.

After training a one-step predictor, feeding its output back as the next
input turns the reservoir into a free-running model of the learned system.
Predicted and true trajectories are compared in a delay embedding; the time
until they separate by a fixed fraction of the attractor diameter, in units
of the Lyapunov time, is the valid prediction time.
"""

import json
import logging
from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from . import serializers
from .chaos import LorenzParams, gen_lorenz
from .readout import design_matrix
from .simulation import Reservoir
from .timeseries import Timeseries

logger = logging.getLogger(__name__)

MACKEY_GLASS_LYAPUNOV = 5.8e-3
LORENZ_LYAPUNOV = 0.91
DEFAULT_THRESHOLD_FRACTION = 0.4
DEFAULT_WARMUP_STEPS = 500
DEFAULT_ESCAPE_FACTOR = 10.0


class EmbeddingSpec(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    dimension: int = Field(3, ge=1)
    lag: int = Field(1, ge=1)


@dataclass(frozen=True)
class DivergenceCurve:
    """Distance between predicted and true trajectories per closed-loop step.

    ``steps`` counts from 1; ``diameter`` is the extent of the true
    (embedded) attractor the thresholds are relative to.
    """

    steps: np.ndarray
    distance: np.ndarray
    lyapunov_max: float
    sample_interval: float
    diameter: float

    def __len__(self):
        return self.steps.shape[0]

    def lyapunov_times(self):
        return lyapunov_axis(self.steps, self.sample_interval, self.lyapunov_max)

    def reference(self):
        """Growth e^{lambda t} from the first distance, for plotting beside it."""
        times = self.lyapunov_times()
        return self.distance[0] * np.exp(times - times[0])

    def to_csv(self, path):
        rows = (
            [int(n), float(d), float(t), float(r)]
            for n, d, t, r in zip(
                self.steps, self.distance, self.lyapunov_times(), self.reference()
            )
        )
        header = ["n", "distance", "lyapunov_time", "reference"]
        text = serializers.table_to_csv(header, rows)
        return serializers.atomic_write(path, text)

    def to_json(self, path, threshold_fraction=DEFAULT_THRESHOLD_FRACTION, **extra):
        body = {
            "lyapunov_max": self.lyapunov_max,
            "sample_interval": self.sample_interval,
            "diameter": self.diameter,
            "threshold_fraction": threshold_fraction,
            "valid_time": valid_time(self, threshold_fraction),
            **extra,
        }
        text = json.dumps(body, indent=2, sort_keys=True) + "\n"
        return serializers.atomic_write(path, text)


@dataclass(frozen=True)
class AutonomousRun:
    output: Timeseries
    injected: np.ndarray
    escaped: bool
    n_requested: int


def lyapunov_axis(steps, sample_interval, lyapunov_max):
    """Convert closed-loop step counts to Lyapunov times."""
    return np.asarray(steps, dtype=float) * sample_interval * lyapunov_max


def _values(series):
    if isinstance(series, Timeseries):
        return series.values(), series.sample_interval
    return np.asarray(series, dtype=float).reshape(-1), 1.0


def attractor_diameter(points):
    """Largest coordinate range of a point cloud (or of a scalar series)."""
    points = np.asarray(points, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    return float(np.max(points.max(axis=0) - points.min(axis=0)))


def run_autonomous(
    config, weights, warmup, n_steps, escape_factor=DEFAULT_ESCAPE_FACTOR
):
    """Drive with ``warmup``, then close the loop for ``n_steps`` outputs.

    Output k is the readout after input step k of the closed loop; from the
    second step on, the injected input is the previous output. A run whose
    output leaves the warmup range by more than ``escape_factor`` diameters
    stops early and is flagged as escaped.
    """
    if weights.delta_n != 1:
        raise ValueError(
            f"closed-loop operation needs a one-step readout, got delta_n="
            f"{weights.delta_n}"
        )
    if weights.n_outputs != 1:
        raise ValueError("closed-loop operation needs a scalar readout")
    if weights.n_features != config.total_nodes:
        raise ValueError(
            f"weights expect {weights.n_features} nodes, network has "
            f"{config.total_nodes}"
        )
    if n_steps < 1:
        raise ValueError("n_steps must be >= 1")
    values, interval = _values(warmup)
    if len(values) < 1:
        raise ValueError("warmup must contain at least one sample")

    center = 0.5 * (values.max() + values.min())
    bound = escape_factor * max(attractor_diameter(values), np.finfo(float).tiny)

    reservoir = Reservoir(config)
    state = reservoir.initial_state()
    rows = reservoir.advance(state, values)

    def readout(row):
        features = design_matrix(row[None, :], weights.include_bias)
        return float((features @ weights.matrix)[0, 0])

    def escapes(value):
        # NaN compares false, so test for staying inside rather than leaving
        return not abs(value - center) <= bound

    outputs = [readout(rows[-1])]
    injected = []
    escaped = escapes(outputs[0])
    while not escaped and len(outputs) < n_steps:
        feedback = outputs[-1]
        injected.append(feedback)
        row = reservoir.advance(state, np.array([feedback]))[0]
        outputs.append(readout(row))
        escaped = escapes(outputs[-1])
    if escaped:
        # the escaping value itself is not part of the truncated sequence
        outputs.pop()
        logger.warning(
            f"Autonomous output escaped after {len(outputs)} of {n_steps} steps"
        )
    logger.info(f"Closed-loop run produced {len(outputs)} outputs")
    normalization = warmup.normalization if isinstance(warmup, Timeseries) else None
    return AutonomousRun(
        Timeseries(np.array(outputs), interval, normalization),
        np.array(injected),
        escaped,
        n_steps,
    )


def takens_embed(series, spec):
    """Delay vectors v(n) = (s(n), s(n - lag), ..., s(n - (m - 1) lag))."""
    values, _ = _values(series)
    span = (spec.dimension - 1) * spec.lag
    if len(values) < span + 1:
        raise ValueError(
            f"series of length {len(values)} too short for dimension "
            f"{spec.dimension}, lag {spec.lag}"
        )
    n_points = len(values) - span
    columns = [
        values[span - k * spec.lag : span - k * spec.lag + n_points]
        for k in range(spec.dimension)
    ]
    return np.column_stack(columns)


def divergence_curve(prediction, target, spec, lyapunov_max):
    """Pointwise Euclidean distance between two embedded trajectories."""
    pred, interval = _values(prediction)
    true, _ = _values(target)
    if len(pred) != len(true):
        raise ValueError(f"length mismatch: {len(pred)} vs {len(true)}")
    pred_points = takens_embed(pred, spec)
    true_points = takens_embed(true, spec)
    distance = np.linalg.norm(pred_points - true_points, axis=1)
    return DivergenceCurve(
        steps=np.arange(1, len(distance) + 1),
        distance=distance,
        lyapunov_max=lyapunov_max,
        sample_interval=interval,
        diameter=attractor_diameter(true_points),
    )


def valid_time(curve, threshold_fraction=DEFAULT_THRESHOLD_FRACTION):
    """Lyapunov times before the distance first exceeds the threshold.

    Returns the whole horizon when the threshold is never crossed.
    """
    if not 0 < threshold_fraction < 1:
        raise ValueError("threshold_fraction must be in (0, 1)")
    threshold = threshold_fraction * curve.diameter
    crossed = np.nonzero(curve.distance > threshold)[0]
    valid_steps = crossed[0] if crossed.size else len(curve)
    return float(lyapunov_axis(valid_steps, curve.sample_interval, curve.lyapunov_max))


def saturation_step(curve, fraction=0.5, window=50):
    """First step where the moving-average distance reaches fraction x diameter.

    None means the divergence never saturated within the curve.
    """
    window = max(1, min(window, len(curve)))
    kernel = np.ones(window) / window
    smoothed = np.convolve(curve.distance, kernel, mode="valid")
    hits = np.nonzero(smoothed >= fraction * curve.diameter)[0]
    if not hits.size:
        return None
    return int(curve.steps[hits[0] + window - 1])


def periodicity_score(series, min_lag=10, tail=1000):
    """Largest normalized autocorrelation at lags >= min_lag over the tail.

    Close to 1 for a trajectory that has collapsed onto a limit cycle, much
    lower for a chaotic one.
    """
    values, _ = _values(series)
    values = values[-tail:]
    if len(values) < 2 * min_lag:
        raise ValueError("series too short for the requested minimal lag")
    centered = values - values.mean()
    energy = np.dot(centered, centered)
    if energy == 0:
        return 1.0
    n = len(centered)
    scores = [
        np.dot(centered[:-lag], centered[lag:]) / energy * n / (n - lag)
        for lag in range(min_lag, n // 2)
    ]
    return float(max(scores))


def twin_divergence(params=None, separation=1e-9, n_samples=1000, discard=5000):
    """Distance between two Lorenz runs started ``separation`` apart."""
    params = params or LorenzParams()
    settled = gen_lorenz(params, n_samples=1, discard=discard).samples[-1]
    offset = np.array([separation, 0.0, 0.0])
    reference = gen_lorenz(
        params.model_copy(update={"init_state": tuple(settled)}), n_samples, 0
    )
    perturbed = gen_lorenz(
        params.model_copy(update={"init_state": tuple(settled + offset)}),
        n_samples,
        0,
    )
    distance = np.linalg.norm(reference.samples - perturbed.samples, axis=1)
    return DivergenceCurve(
        steps=np.arange(1, n_samples + 1),
        distance=distance,
        lyapunov_max=LORENZ_LYAPUNOV,
        sample_interval=params.sample_interval,
        diameter=attractor_diameter(reference.samples),
    )


def growth_rate(curve, low, high):
    """Least-squares slope of log(distance) per time unit inside [low, high].

    Only the first stretch of the curve from its first entry into the band
    up to its first exit above ``high`` is used.
    """
    distance = curve.distance
    start = np.argmax(distance >= low)
    above = np.nonzero(distance[start:] > high)[0]
    stop = start + (above[0] if above.size else len(distance) - start)
    if stop - start < 3:
        raise ValueError("too few points inside the growth band")
    times = curve.steps[start:stop] * curve.sample_interval
    slope, _ = np.polyfit(times, np.log(distance[start:stop]), 1)
    return float(slope)
