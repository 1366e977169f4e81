"""Experiment files: TOML documents validated into the typed configs.

A file may name ``preset = "<name>"``; the shipped preset is deep-merged
underneath the file's own keys (tables merge, everything else is replaced).
An ``[overrides]`` table sets single network fields by dotted path, using
the same 1-based layer addressing as sweep axes::

    preset = "fig3c"

    [overrides]
    "layers.2.w_from_next" = 0.0
"""

import copy
import logging
import tomllib
from importlib import resources
from typing import Literal

import tomli_w
from pydantic import BaseModel, ConfigDict, Field, ValidationError

from .autonomy import (
    DEFAULT_ESCAPE_FACTOR,
    DEFAULT_THRESHOLD_FRACTION,
    DEFAULT_WARMUP_STEPS,
    EmbeddingSpec,
)
from .chaos import LorenzParams, MackeyGlassParams
from .errors import ConfigError
from .network import LayerConfig, MaskDistribution, NetworkConfig, build_mask
from .readout import DEFAULT_RIDGE_GRID, RidgeGrid
from .sweep import GridAxis
from .tasks import TaskSpec

logger = logging.getLogger(__name__)

PRESET_PACKAGE = "delay_reservoir"
PRESET_DIR = "presets"


class _Section(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")


class TaskSection(_Section):
    system: Literal["mackey_glass", "lorenz"] = "mackey_glass"
    delta_n: int = Field(1, ge=0)
    n_train: int = Field(5000, ge=10)
    n_test: int = Field(1000, ge=2)
    standardize: bool = True
    discard: int | None = Field(None, ge=0)
    mackey_glass: MackeyGlassParams = MackeyGlassParams()
    lorenz: LorenzParams = LorenzParams()


class MaskSection(_Section):
    distribution: MaskDistribution = MaskDistribution.UNIFORM_PM1
    amplitude: float = Field(1.0, gt=0)
    hold_fraction: float = Field(0.8, gt=0, le=1)
    values: tuple[float, ...] | None = None


class NetworkSection(_Section):
    layers: tuple[LayerConfig, ...] = Field(min_length=1)
    mask: MaskSection = MaskSection()
    substeps_per_node: int = Field(4, ge=2)
    washout_steps: int = Field(100, ge=0)
    input_to_all_layers: bool = False

    def _mask(self, seed):
        mask = build_mask(
            self.layers[0].n_nodes,
            seed,
            self.mask.distribution,
            self.mask.hold_fraction,
            self.mask.amplitude,
        )
        if self.mask.values is not None:
            mask = mask.model_copy(update={"values": self.mask.values})
        return mask

    def build(self, seed):
        """NetworkConfig with the mask drawn from ``seed`` unless given."""
        return NetworkConfig(
            layers=self.layers,
            mask=self._mask(seed),
            substeps_per_node=self.substeps_per_node,
            washout_steps=self.washout_steps,
            seed=seed,
            input_to_all_layers=self.input_to_all_layers,
        )

    def violations(self, seed):
        unchecked = NetworkConfig.model_construct(
            layers=self.layers,
            mask=self._mask(seed),
            substeps_per_node=self.substeps_per_node,
            washout_steps=self.washout_steps,
            seed=seed,
            input_to_all_layers=self.input_to_all_layers,
        )
        return unchecked.constraint_violations()


class TrainSection(_Section):
    ridge_grid: RidgeGrid = DEFAULT_RIDGE_GRID
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    include_bias: bool = True


class EvalSection(_Section):
    embedding_dimension: int = Field(3, ge=1)
    embedding_lag: int | None = Field(None, ge=1)
    threshold_fraction: float = Field(DEFAULT_THRESHOLD_FRACTION, gt=0, lt=1)
    warmup_steps: int = Field(DEFAULT_WARMUP_STEPS, ge=1)
    n_autonomous: int = Field(2000, ge=1)
    escape_factor: float = Field(DEFAULT_ESCAPE_FACTOR, gt=0)
    saturation_fraction: float = Field(0.5, gt=0)
    saturation_window: int = Field(50, ge=1)
    periodicity_min_lag: int = Field(10, ge=1)


class SweepSection(_Section):
    axes: tuple[GridAxis, ...] = ()
    parallelism: int = Field(1, ge=1)


class CompareEntry(NetworkSection):
    name: str = Field(min_length=1)


class CompareSection(_Section):
    networks: tuple[CompareEntry, ...] = ()
    check_budget: bool = True


class ExperimentConfig(_Section):
    """Everything one CLI run needs, validated.

    ``seed`` is the root of every random stream of the run (mask, series
    history, ...); each consumer derives its own labeled stream from it.
    """

    preset: str | None = None
    seed: int = 0
    task: TaskSection = TaskSection()
    network: NetworkSection
    train: TrainSection = TrainSection()
    eval: EvalSection = EvalSection()
    sweep: SweepSection = SweepSection()
    compare: CompareSection = CompareSection()
    overrides: dict[str, float] = {}

    def with_seed(self, seed):
        return self.model_copy(update={"seed": seed})

    def network_config(self):
        return self.network.build(self.seed)

    def compare_networks(self):
        return [(entry.name, entry.build(self.seed)) for entry in self.compare.networks]

    def task_spec(self):
        task = self.task
        return TaskSpec(
            system=task.system,
            delta_n=task.delta_n,
            n_train=task.n_train,
            n_test=task.n_test,
            seed=self.seed,
            standardize=task.standardize,
            discard=task.discard,
            mackey_glass=task.mackey_glass,
            lorenz=task.lorenz,
            ridge_grid=self.train.ridge_grid,
            validation_fraction=self.train.validation_fraction,
            include_bias=self.train.include_bias,
        )

    def embedding_spec(self):
        lag = self.eval.embedding_lag or self.task_spec().default_embedding_lag
        return EmbeddingSpec(dimension=self.eval.embedding_dimension, lag=lag)


def _loc_path(loc):
    parts = []
    for previous, part in zip((None,) + tuple(loc), loc):
        if isinstance(part, int) and previous in ("layers", "networks"):
            part += 1
        parts.append(str(part))
    return ".".join(parts)


def _validation_issues(exc, prefix=""):
    return [(prefix + _loc_path(error["loc"]), error["msg"]) for error in exc.errors()]


def _task_field_section(path):
    field = path.split(".")[0]
    return "train." if field in TrainSection.model_fields else "task."


def available_presets():
    root = resources.files(PRESET_PACKAGE) / PRESET_DIR
    return sorted(
        entry.name.removesuffix(".toml")
        for entry in root.iterdir()
        if entry.name.endswith(".toml") and not entry.name.startswith("_")
    )


def load_preset(name):
    """Raw (unmerged, unvalidated) document of a shipped preset."""
    resource = resources.files(PRESET_PACKAGE) / PRESET_DIR / f"{name}.toml"
    if not resource.is_file():
        raise ConfigError(
            [("preset", f"unknown preset '{name}'; known: {available_presets()}")]
        )
    return tomllib.loads(resource.read_text(encoding="utf-8"))


def deep_merge(base, overlay):
    """Tables merge key by key; any other value in ``overlay`` wins."""
    merged = copy.deepcopy(base)
    for key, value in overlay.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = deep_merge(merged[key], value)
        else:
            merged[key] = copy.deepcopy(value)
    return merged


def resolve_presets(document, _seen=()):
    """Merge the named preset (and the presets it names) under ``document``."""
    name = document.get("preset")
    if name is None:
        return document
    if name in _seen:
        raise ConfigError([("preset", f"preset cycle through '{name}'")])
    base = resolve_presets(load_preset(name), _seen + (name,))
    return deep_merge(base, document)


def apply_override(document, path, value):
    """Set ``network.<path>`` in a raw document; returns an issue or None."""
    key = f"overrides.{path}"
    target = document.get("network")
    parts = path.split(".")
    for part in parts[:-1]:
        if isinstance(target, list):
            if not part.isdigit() or not 1 <= int(part) <= len(target):
                return (key, f"layer {part} does not exist")
            target = target[int(part) - 1]
        elif isinstance(target, dict):
            target = target.setdefault(part, {})
        else:
            return (key, f"'{part}' does not resolve")
    if not isinstance(target, dict):
        return (key, "path does not address a field")
    target[parts[-1]] = value
    return None


def parse_document(document):
    """Validate a raw document; raises ConfigError listing every issue."""
    document = resolve_presets(copy.deepcopy(document))
    issues = []
    for path, value in document.get("overrides", {}).items():
        issue = apply_override(document, path, value)
        if issue:
            issues.append(issue)
    try:
        config = ExperimentConfig.model_validate(document)
    except ValidationError as exc:
        raise ConfigError(issues + _validation_issues(exc)) from exc

    issues += [
        (f"network.{path}", message)
        for path, message in config.network.violations(config.seed)
    ]
    for index, entry in enumerate(config.compare.networks, start=1):
        issues += [
            (f"compare.networks.{index}.{path}", message)
            for path, message in entry.violations(config.seed)
        ]
    try:
        config.task_spec()
    except ValidationError as exc:
        issues += [
            (_task_field_section(path) + path, message)
            for path, message in _validation_issues(exc)
        ]
    if not issues:
        network = config.network_config()
        for index, axis in enumerate(config.sweep.axes, start=1):
            try:
                axis.check(network)
            except ValueError as exc:
                issues.append((f"sweep.axes.{index}.parameter_path", str(exc)))
    if issues:
        raise ConfigError(issues)
    logger.debug(f"Parsed experiment config (preset={config.preset})")
    return config


def parse_config(text):
    try:
        document = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError([("<document>", str(exc))]) from exc
    return parse_document(document)


def load_config(path):
    with open(path, "rb") as handle:
        try:
            document = tomllib.load(handle)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError([("<document>", f"{path}: {exc}")]) from exc
    return parse_document(document)


def preset_config(name):
    return parse_document({"preset": name})


def dump_config(config):
    """TOML text that parses back to an equal config."""
    # fully resolved, so re-merging the preset and overrides changes nothing
    return tomli_w.dumps(config.model_dump(mode="json", exclude_none=True))

