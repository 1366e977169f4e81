import json
import logging
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Annotated

import numpy as np
from pydantic import AfterValidator, BaseModel, ConfigDict, Field
from scipy import linalg

from . import serializers
from .errors import DegenerateInputError, TrainingError
from .timeseries import Timeseries

logger = logging.getLogger(__name__)

DEFAULT_RIDGE_GRID = (0.0,) + tuple(10.0**k for k in range(-12, -1))


def check_ridge_grid(value):
    if any(r < 0 for r in value):
        raise ValueError("ridge parameters must be >= 0")
    if list(value) != sorted(value):
        raise ValueError("ridge_grid must be sorted ascending")
    return value


RidgeGrid = Annotated[
    tuple[float, ...], Field(min_length=1), AfterValidator(check_ridge_grid)
]


class TrainSpec(BaseModel):
    """How to fit the readout.

    The target for state row n is s(n + delta_n). The last
    ``validation_fraction`` of the training block picks the ridge parameter;
    the readout is then refit on the whole block.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_train: int = Field(5000, ge=10)
    delta_n: int = Field(1, ge=0)
    ridge_grid: RidgeGrid = DEFAULT_RIDGE_GRID
    validation_fraction: float = Field(0.1, ge=0, lt=1)
    include_bias: bool = True
    seed: int = 0

    @property
    def n_validation(self):
        """Rows of the validation tail; 0 means the first grid point is used.

        A nonzero tail has at least 2 rows (NMSE needs a variance) and leaves
        at least 2 rows to fit on.
        """
        if len(self.ridge_grid) == 1 or self.validation_fraction == 0:
            return 0
        rows = int(round(self.validation_fraction * self.n_train))
        return min(max(2, rows), self.n_train - 2)


@dataclass(frozen=True)
class ReadoutWeights:
    """Trained output matrix; the bias row, when present, is last."""

    matrix: np.ndarray
    ridge: float
    include_bias: bool = True
    delta_n: int = 1
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        matrix = np.asarray(self.matrix, dtype=float)
        if matrix.ndim == 1:
            matrix = matrix[:, None]
        if not np.all(np.isfinite(matrix)):
            raise ValueError("readout weights must all be finite")
        object.__setattr__(self, "matrix", matrix)

    @property
    def n_features(self):
        return self.matrix.shape[0] - int(self.include_bias)

    @property
    def n_outputs(self):
        return self.matrix.shape[1]

    def to_binary(self, path):
        data = serializers.encode_weights(
            self.matrix,
            self.include_bias,
            self.ridge,
            self.delta_n,
            self.metadata.get("seed", 0),
            self.metadata.get("n_train", 0),
        )
        return serializers.atomic_write(path, data)

    @classmethod
    def from_binary(cls, path):
        """Load weights; only the seed and n_train of the metadata are kept."""
        matrix, include_bias, ridge, delta_n, seed, n_train = (
            serializers.decode_weights(Path(path).read_bytes())
        )
        metadata = {"seed": seed, "n_train": n_train}
        return cls(matrix, ridge, include_bias, delta_n, metadata)


@dataclass(frozen=True)
class EvalReport:
    nmse_train: float
    nmse_test: float
    chosen_ridge: float
    n_test: int

    def to_json(self, path, **extra):
        body = {
            "nmse_train": self.nmse_train,
            "nmse_test": self.nmse_test,
            "chosen_ridge": self.chosen_ridge,
            "n_test": self.n_test,
            **extra,
        }
        text = json.dumps(body, indent=2, sort_keys=True) + "\n"
        return serializers.atomic_write(path, text)


def _as_samples(series):
    if isinstance(series, Timeseries):
        return series.samples
    samples = np.asarray(series, dtype=float)
    return samples[:, None] if samples.ndim == 1 else samples


def nmse(prediction, target):
    """Mean squared error divided by the target variance.

    The mean runs over the evaluated samples (their actual count), and the
    variance is the population variance of the target.
    """
    pred = _as_samples(prediction)
    true = _as_samples(target)
    if pred.shape != true.shape:
        raise ValueError(f"prediction {pred.shape} and target {true.shape} differ")
    if true.shape[0] < 2:
        raise ValueError("nmse needs at least 2 samples")
    variance = true.var(axis=0).sum()
    if variance == 0:
        raise DegenerateInputError("target has zero variance; NMSE undefined")
    return float(np.mean(np.sum((true - pred) ** 2, axis=1)) / variance)


def design_matrix(states, include_bias):
    entries = states.entries if hasattr(states, "entries") else np.asarray(states)
    if not include_bias:
        return np.asarray(entries, dtype=float)
    return np.hstack([entries, np.ones((entries.shape[0], 1))])


def aligned_targets(states, target, delta_n):
    """Targets s(first + n + delta_n) for every state row that has one."""
    samples = _as_samples(target)
    first = states.first_input_index + delta_n
    available = max(0, min(states.n_rows, samples.shape[0] - first))
    return samples[first : first + available]


def solve_ridge(gram, cross, ridge, penalize):
    """Solve (G + ridge * diag(penalize)) W = C for the readout weights.

    Raises ``np.linalg.LinAlgError`` when the regularized system is
    singular or too ill-conditioned to trust.
    """
    system = gram + ridge * np.diag(penalize.astype(float))
    with warnings.catch_warnings():
        warnings.simplefilter("error", linalg.LinAlgWarning)
        try:
            return linalg.solve(system, cross, assume_a="sym")
        except linalg.LinAlgWarning as exc:
            raise np.linalg.LinAlgError(str(exc)) from exc


def _penalty(n_cols, include_bias):
    penalize = np.ones(n_cols, dtype=bool)
    if include_bias:
        penalize[-1] = False
    return penalize


def train_ridge(states, target, spec):
    """Fit the linear readout on the first ``n_train`` rows.

    Gram matrices of the fit part and the validation tail are accumulated
    once and reused across the whole ridge grid.
    """
    targets = aligned_targets(states, target, spec.delta_n)
    if targets.shape[0] < spec.n_train:
        raise ValueError(
            f"need {spec.n_train} aligned rows for training (delta_n="
            f"{spec.delta_n}), only {targets.shape[0]} available"
        )
    X = design_matrix(states, spec.include_bias)[: spec.n_train]
    Y = targets[: spec.n_train]
    penalize = _penalty(X.shape[1], spec.include_bias)

    n_val = spec.n_validation
    n_fit = spec.n_train - n_val
    X_fit, Y_fit = X[:n_fit], Y[:n_fit]
    X_val, Y_val = X[n_fit:], Y[n_fit:]
    gram_fit, cross_fit = X_fit.T @ X_fit, X_fit.T @ Y_fit
    gram_val, cross_val = X_val.T @ X_val, X_val.T @ Y_val

    scores = {}
    if n_val == 0:
        chosen = spec.ridge_grid[0]
    else:
        for ridge in spec.ridge_grid:
            try:
                W = solve_ridge(gram_fit, cross_fit, ridge, penalize)
            except np.linalg.LinAlgError as exc:
                logger.warning(f"Skipping ridge={ridge:g}: {exc}")
                continue
            scores[ridge] = nmse(X_val @ W, Y_val)
            logger.debug(f"ridge={ridge:g} validation NMSE={scores[ridge]:.4g}")
        if not scores:
            raise TrainingError("every ridge grid point gave a singular system")
        chosen = min(scores, key=scores.get)
        if chosen == spec.ridge_grid[-1]:
            logger.warning(
                f"Chosen ridge={chosen:g} is the largest in the grid; the optimum "
                "may lie above it"
            )

    try:
        W = solve_ridge(gram_fit + gram_val, cross_fit + cross_val, chosen, penalize)
    except np.linalg.LinAlgError as exc:
        raise TrainingError(f"final fit at ridge={chosen:g} failed: {exc}") from exc
    logger.info(f"Trained readout on {spec.n_train} rows, ridge={chosen:g}")
    return ReadoutWeights(
        W,
        chosen,
        spec.include_bias,
        spec.delta_n,
        {
            "seed": spec.seed,
            "n_train": spec.n_train,
            "n_validation": n_val,
            "validation_nmse": {f"{r:g}": v for r, v in scores.items()},
        },
    )


def predict(states, weights):
    """Apply the linear readout to every state row."""
    entries = states.entries if hasattr(states, "entries") else np.asarray(states)
    if entries.shape[1] != weights.n_features:
        raise ValueError(
            f"states have {entries.shape[1]} columns, weights expect "
            f"{weights.n_features}"
        )
    out = design_matrix(entries, weights.include_bias) @ weights.matrix
    interval = getattr(states, "sample_interval", 1.0)
    return Timeseries(out, interval)


def evaluate(states, target, weights, spec):
    """NMSE on the training block and on every later row with a target."""
    targets = aligned_targets(states, target, spec.delta_n)
    prediction = predict(states.slice_rows(0, targets.shape[0]), weights).samples
    n_test = targets.shape[0] - spec.n_train
    if n_test < 2:
        raise ValueError(f"only {max(n_test, 0)} test rows after the training block")
    report = EvalReport(
        nmse_train=nmse(prediction[: spec.n_train], targets[: spec.n_train]),
        nmse_test=nmse(prediction[spec.n_train :], targets[spec.n_train :]),
        chosen_ridge=weights.ridge,
        n_test=n_test,
    )
    logger.info(
        f"NMSE train={report.nmse_train:.4g} test={report.nmse_test:.4g} "
        f"({n_test} test rows)"
    )
    return report
