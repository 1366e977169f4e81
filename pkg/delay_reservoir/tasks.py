import logging
import threading
from dataclasses import dataclass
from typing import Literal

import cachetools
from pydantic import BaseModel, ConfigDict, Field

from .autonomy import LORENZ_LYAPUNOV, MACKEY_GLASS_LYAPUNOV
from .chaos import (
    LORENZ_DISCARD,
    MACKEY_GLASS_DISCARD,
    LorenzParams,
    MackeyGlassParams,
    RandomHistory,
    gen_lorenz,
    gen_mackey_glass,
)
from .readout import (
    DEFAULT_RIDGE_GRID,
    RidgeGrid,
    TrainSpec,
    evaluate,
    train_ridge,
)
from .simulation import simulate
from .timeseries import standardize

logger = logging.getLogger(__name__)

_series_cache = cachetools.LRUCache(maxsize=16)
_series_lock = threading.Lock()


class TaskSpec(BaseModel):
    """A prediction task: which series, how far ahead, and how to fit it."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    system: Literal["mackey_glass", "lorenz"] = "mackey_glass"
    delta_n: int = Field(1, ge=0)
    n_train: int = Field(5000, ge=10)
    n_test: int = Field(1000, ge=2)
    seed: int = 0
    standardize: bool = True
    discard: int | None = Field(None, ge=0)
    mackey_glass: MackeyGlassParams = MackeyGlassParams()
    lorenz: LorenzParams = LorenzParams()
    ridge_grid: RidgeGrid = DEFAULT_RIDGE_GRID
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    include_bias: bool = True

    def train_spec(self):
        return TrainSpec(
            n_train=self.n_train,
            delta_n=self.delta_n,
            ridge_grid=self.ridge_grid,
            validation_fraction=self.validation_fraction,
            include_bias=self.include_bias,
            seed=self.seed,
        )

    @property
    def lyapunov_max(self):
        if self.system == "lorenz":
            return LORENZ_LYAPUNOV
        return MACKEY_GLASS_LYAPUNOV

    @property
    def default_embedding_lag(self):
        return 3 if self.system == "lorenz" else 17

    @property
    def resolved_discard(self):
        if self.discard is not None:
            return self.discard
        if self.system == "lorenz":
            return LORENZ_DISCARD
        return MACKEY_GLASS_DISCARD

    def series_params(self):
        """Generator parameters with the task seed applied."""
        if self.system == "lorenz":
            return self.lorenz
        params = self.mackey_glass
        if isinstance(params.history_init, RandomHistory):
            history = params.history_init.model_copy(update={"seed": self.seed})
            params = params.model_copy(update={"history_init": history})
        return params


@dataclass(frozen=True)
class TaskData:
    """Scalar reservoir input and the series its targets are read from.

    Both are the same (standardized) signal: the target of row n is
    s(n + delta_n).
    """

    input: object
    target: object
    raw: object


@dataclass(frozen=True)
class PipelineResult:
    states: object
    weights: object
    report: object


def generate_raw(task, n_samples):
    """Unstandardized benchmark series of the task, all components."""
    params = task.series_params()
    if task.system == "lorenz":
        return gen_lorenz(params, n_samples, task.resolved_discard)
    return gen_mackey_glass(params, n_samples, task.resolved_discard)


@cachetools.cached(cache=_series_cache, lock=_series_lock)
def load_series(system, params, n_samples, discard, do_standardize):
    """Generate (and memoize) one benchmark series.

    Sweeps call this once per grid point with identical arguments, so every
    point consumes byte-identical data.
    """
    if system == "lorenz":
        raw = gen_lorenz(params, n_samples, discard)
    else:
        raw = gen_mackey_glass(params, n_samples, discard)
    scalar = raw.component(0)
    return raw, standardize(scalar) if do_standardize else scalar


def required_length(task, washout):
    return washout + task.n_train + task.n_test + task.delta_n


def prepare_task(task, washout):
    length = required_length(task, washout)
    raw, series = load_series(
        task.system,
        task.series_params(),
        length,
        task.resolved_discard,
        task.standardize,
    )
    logger.debug(f"Task {task.system} series ready: {length} samples")
    return TaskData(input=series, target=series, raw=raw)


def run_pipeline(network, task, data=None):
    """Simulate, train and evaluate one network on one task."""
    if data is None:
        data = prepare_task(task, network.washout_steps)
    spec = task.train_spec()
    states = simulate(network, data.input, n_rows=task.n_train + task.n_test)
    weights = train_ridge(states, data.target, spec)
    report = evaluate(states, data.target, weights, spec)
    return PipelineResult(states, weights, report)
