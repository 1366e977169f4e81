import logging
import math
from enum import StrEnum

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .seeding import rng_for
from .timeseries import Timeseries

logger = logging.getLogger(__name__)


class MaskDistribution(StrEnum):
    UNIFORM_PM1 = "uniform_pm1"
    BINARY_PM1 = "binary_pm1"


class LayerConfig(BaseModel):
    """One delay oscillator layer.

    tau_fast: response time of the fast (low-pass) filter.
    delta_slow: integral feedback strength; 0 gives a low-pass layer,
        > 0 adds a low-frequency cut-off (band-pass layer).
    tau_delay: self-feedback delay.
    w_from_prev / w_from_next: instantaneous coupling from the previous and
        next layer of the cascade.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    beta: float
    tau_fast: float = Field(gt=0)
    delta_slow: float = Field(0.0, ge=0)
    tau_delay: float = Field(gt=0)
    bias: float = 0.2
    n_nodes: int = Field(ge=1)
    input_gain: float = 0.0
    w_from_prev: float = 0.0
    w_from_next: float = 0.0
    self_feedback: bool = True
    initial_state: float = 0.0

    @property
    def is_band_pass(self):
        return self.delta_slow > 0


class MaskSpec(BaseModel):
    """Input mask values of layer 1.

    ``amplitude`` bounds the drawn values to [-amplitude, +amplitude]; with a
    standardized (unit variance) input it sets the spread of the drive
    rho_1 * mask * s around the bias point.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    values: tuple[float, ...] = Field(min_length=1)
    seed: int = 0
    distribution: MaskDistribution = MaskDistribution.UNIFORM_PM1
    amplitude: float = Field(1.0, gt=0)
    hold_fraction: float = Field(0.8, gt=0, le=1)

    def array(self):
        return np.asarray(self.values, dtype=float)


class NetworkConfig(BaseModel):
    """A cascade of delay layers sharing one input clock.

    Each input sample is held for ``hold_fraction * tau_delay`` of layer 1;
    that interval is split into N_1 mask slots of ``substeps_per_node``
    integration substeps each.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    layers: tuple[LayerConfig, ...] = Field(min_length=1)
    mask: MaskSpec
    substeps_per_node: int = Field(4, ge=2)
    washout_steps: int = Field(100, ge=0)
    seed: int = 0
    input_to_all_layers: bool = False

    @model_validator(mode="after")
    def _check_topology(self):
        issues = self.constraint_violations()
        if issues:
            raise ValueError("; ".join(f"{path}: {msg}" for path, msg in issues))
        return self

    def constraint_violations(self):
        """List (key_path, message) for every cascade rule the config breaks.

        Layer paths are 1-based, matching how layers are numbered everywhere
        else (layer 1 is the one receiving the input).
        """
        issues = []
        first = self.layers[0]
        if len(self.mask.values) != first.n_nodes:
            issues.append(
                (
                    "mask.values",
                    f"mask has {len(self.mask.values)} values but layer 1 has "
                    f"{first.n_nodes} nodes",
                )
            )
        if first.w_from_prev != 0:
            issues.append(
                ("layers.1.w_from_prev", "layer 1 has no previous layer; must be 0")
            )
        if self.layers[-1].w_from_next != 0:
            issues.append(
                (
                    f"layers.{len(self.layers)}.w_from_next",
                    "last layer has no next layer; must be 0",
                )
            )
        if not self.input_to_all_layers:
            if first.is_band_pass:
                issues.append(
                    (
                        "layers.1.delta_slow",
                        "input gating: layer 1 must be low-pass (delta_slow = 0) "
                        "unless input_to_all_layers is set",
                    )
                )
            for index, layer in enumerate(self.layers[1:], start=2):
                if layer.input_gain != 0:
                    issues.append(
                        (
                            f"layers.{index}.input_gain",
                            "input gating: only layer 1 receives the input "
                            "(input_gain must be 0) unless input_to_all_layers is set",
                        )
                    )
        per_step = first.n_nodes * self.substeps_per_node
        for index, layer in enumerate(self.layers, start=1):
            if layer.n_nodes > per_step:
                issues.append(
                    (
                        f"layers.{index}.n_nodes",
                        f"{layer.n_nodes} nodes exceed the {per_step} substeps "
                        "of one input interval",
                    )
                )
            if layer.self_feedback and layer.tau_delay / self.substep < 1.0:
                issues.append(
                    (
                        f"layers.{index}.tau_delay",
                        "delay is shorter than one integration substep",
                    )
                )
        return issues

    @property
    def hold_interval(self):
        return self.mask.hold_fraction * self.layers[0].tau_delay

    @property
    def node_spacing(self):
        return self.hold_interval / self.layers[0].n_nodes

    @property
    def substep(self):
        return self.node_spacing / self.substeps_per_node

    @property
    def substeps_per_input(self):
        return self.layers[0].n_nodes * self.substeps_per_node

    @property
    def total_nodes(self):
        return sum(layer.n_nodes for layer in self.layers)

    def with_parameter(self, path, value):
        """Return a copy with one dotted-path field replaced.

        ``layers.<i>.<field>`` uses 1-based layer numbers; ``mask.<field>``
        and top-level fields are addressed directly. The copy is validated.
        """
        parts = path.split(".")
        data = self.model_dump()
        data["layers"] = list(data["layers"])
        target = data
        for part in parts[:-1]:
            if isinstance(target, list):
                index = int(part) - 1
                if not 0 <= index < len(target):
                    raise ValueError(f"{path}: layer {part} does not exist")
                target = target[index]
            elif isinstance(target, dict) and part in target:
                target = target[part]
            else:
                raise ValueError(f"{path}: '{part}' does not resolve")
        leaf = parts[-1]
        if not isinstance(target, dict) or leaf not in target:
            raise ValueError(f"{path}: '{leaf}' does not resolve")
        current = target[leaf]
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise ValueError(f"{path}: field is not real-valued")
        target[leaf] = value
        return NetworkConfig.model_validate(data)

    def resolve(self, path):
        """Read the value at a dotted path (same addressing as with_parameter)."""
        parts = path.split(".")
        current = self
        for part in parts:
            if isinstance(current, tuple):
                index = int(part) - 1
                if not 0 <= index < len(current):
                    raise ValueError(f"{path}: layer {part} does not exist")
                current = current[index]
            elif hasattr(current, part):
                current = getattr(current, part)
            else:
                raise ValueError(f"{path}: '{part}' does not resolve")
        return current


def build_mask(
    n_nodes,
    seed=0,
    distribution=MaskDistribution.UNIFORM_PM1,
    hold_fraction=0.8,
    amplitude=1.0,
):
    """Draw a zero-mean input mask with N_1 values from a labeled seed stream.

    Values lie in [-amplitude, +amplitude] (uniform) or are +-amplitude
    (binary).
    """
    if n_nodes < 1:
        raise ValueError(f"n_nodes must be >= 1, got {n_nodes}")
    if amplitude <= 0:
        raise ValueError(f"mask amplitude must be > 0, got {amplitude}")
    distribution = MaskDistribution(distribution)
    rng = rng_for(seed, "mask")
    if distribution is MaskDistribution.UNIFORM_PM1:
        values = rng.uniform(-amplitude, amplitude, size=n_nodes)
    else:
        values = amplitude * rng.choice(np.array([-1.0, 1.0]), size=n_nodes)
    logger.debug(f"Built {distribution.value} mask with {n_nodes} values, seed {seed}")
    return MaskSpec(
        values=tuple(float(v) for v in values),
        seed=seed,
        distribution=distribution,
        amplitude=amplitude,
        hold_fraction=hold_fraction,
    )


def drive_signal(s, mask, layer1, t):
    """Masked input drive rho_1 * mask[slot(t)] * s(n(t)) seen by layer 1.

    The input value s(n) is held for hold_fraction * tau_delay; during that
    interval the mask steps once through its N_1 values.
    """
    hold = mask.hold_fraction * layer1.tau_delay
    values = s.values() if isinstance(s, Timeseries) else np.asarray(s, dtype=float)
    if t < 0 or t >= hold * len(values):
        raise ValueError(
            f"t={t} outside the input span [0, {hold * len(values)})"
        )
    n = int(math.floor(t / hold))
    slot = int(math.floor((t - n * hold) / (hold / len(mask.values))))
    slot = min(slot, len(mask.values) - 1)
    return layer1.input_gain * mask.values[slot] * values[n]
