"""Exhaustive parameter scans and topology comparisons.

Every grid point is an independent simulate / train / evaluate pipeline on
the same cached task data. Points run on a thread pool (the integration
kernels release the GIL) and land in per-point slots, so the table is in
Cartesian grid order whatever the execution order was.
"""

import hashlib
import itertools
import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from pydantic import BaseModel, ConfigDict, Field, field_validator

from . import serializers
from .errors import (
    ConfigError,
    DegenerateInputError,
    IntegrationBlowupError,
    ReservoirError,
)
from .tasks import prepare_task, run_pipeline

logger = logging.getLogger(__name__)

MAX_AXES = 3

# a failing point is recorded with a status and the scan goes on
POINT_FAILURES = (ReservoirError, ArithmeticError, ValueError)


class PointStatus:
    OK = "ok"
    BLOWUP = "blowup"
    DEGENERATE = "degenerate"
    FAILED = "failed"


class GridAxis(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    parameter_path: str = Field(min_length=1)
    values: tuple[float, ...] = Field(min_length=1)

    @field_validator("values", mode="before")
    @classmethod
    def _check_values(cls, value):
        # before coercion, which would turn True into 1.0
        if isinstance(value, (list, tuple)) and any(isinstance(v, bool) for v in value):
            raise ValueError("axis values must be real numbers")
        return value

    def check(self, base):
        """Raise ValueError unless the path addresses a real-valued field."""
        current = base.resolve(self.parameter_path)
        if isinstance(current, bool) or not isinstance(current, (int, float)):
            raise ValueError(f"{self.parameter_path}: field is not real-valued")


@dataclass(frozen=True)
class SweepRow:
    point: tuple
    nmse_train: float | None
    nmse_test: float | None
    chosen_ridge: float | None
    status: str
    wall_time: float
    message: str = ""

    @property
    def ok(self):
        return self.status == PointStatus.OK


@dataclass(frozen=True)
class SweepResult:
    """One row per Cartesian grid point, in grid order.

    Failed points keep their status and message and carry no NMSE.
    """

    axes: tuple
    rows: tuple
    base_digest: str
    seed: int
    base_config: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.rows)

    @property
    def parameter_paths(self):
        return [axis.parameter_path for axis in self.axes]

    def best(self):
        successful = [row for row in self.rows if row.ok]
        if not successful:
            return None
        return min(successful, key=lambda row: row.nmse_test)

    def to_csv(self, path):
        # wall times are left out so repeated sweeps give identical tables
        header = self.parameter_paths + [
            "nmse_train",
            "nmse_test",
            "chosen_ridge",
            "status",
        ]
        rows = (
            [*row.point, row.nmse_train, row.nmse_test, row.chosen_ridge, row.status]
            for row in self.rows
        )
        return serializers.atomic_write(path, serializers.table_to_csv(header, rows))

    def heatmap_csv(self, path):
        if len(self.axes) != 2:
            raise ValueError(
                f"heatmap export needs exactly 2 axes, sweep has {len(self.axes)}"
            )
        rows = ([*row.point, row.nmse_test] for row in self.rows)
        text = serializers.table_to_csv(self.parameter_paths + ["nmse"], rows)
        return serializers.atomic_write(path, text)

    def to_json(self, path, **extra):
        best = self.best()
        body = {
            "axes": [axis.model_dump() for axis in self.axes],
            "base_digest": self.base_digest,
            "seed": self.seed,
            "base_config": self.base_config,
            "best": (
                None if best is None else dict(zip(self.parameter_paths, best.point))
            ),
            "rows": [
                {
                    "point": list(row.point),
                    "nmse_train": row.nmse_train,
                    "nmse_test": row.nmse_test,
                    "chosen_ridge": row.chosen_ridge,
                    "status": row.status,
                    "message": row.message,
                    "wall_time": row.wall_time,
                }
                for row in self.rows
            ],
            **extra,
        }
        text = json.dumps(body, indent=2, sort_keys=True) + "\n"
        return serializers.atomic_write(path, text)


@dataclass(frozen=True)
class TopologyEntry:
    name: str
    total_nodes: int
    n_layers: int
    nmse_train: float | None
    nmse_test: float | None
    status: str
    message: str = ""


@dataclass(frozen=True)
class TopologyReport:
    entries: tuple
    ranking: tuple

    def to_csv(self, path):
        header = [
            "name",
            "n_layers",
            "total_nodes",
            "nmse_train",
            "nmse_test",
            "status",
            "rank",
        ]
        rank = {name: position for position, name in enumerate(self.ranking, 1)}
        rows = (
            [
                e.name,
                e.n_layers,
                e.total_nodes,
                e.nmse_train,
                e.nmse_test,
                e.status,
                rank.get(e.name),
            ]
            for e in self.entries
        )
        return serializers.atomic_write(path, serializers.table_to_csv(header, rows))


def config_digest(config):
    """Stable hex digest of a validated config."""
    payload = config.model_dump_json().encode("utf-8")
    return hashlib.blake2b(payload, digest_size=16).hexdigest()


def grid_points(axes):
    return list(itertools.product(*(axis.values for axis in axes)))


def point_config(base, axes, point):
    config = base
    for axis, value in zip(axes, point):
        config = config.with_parameter(axis.parameter_path, value)
    return config


def _failure_status(exc):
    if isinstance(exc, IntegrationBlowupError):
        return PointStatus.BLOWUP
    if isinstance(exc, DegenerateInputError):
        return PointStatus.DEGENERATE
    return PointStatus.FAILED


def _run_point(config, task, point):
    started = time.perf_counter()
    logger.debug(f"Grid point {point} started")
    try:
        result = run_pipeline(config, task)
    except POINT_FAILURES as exc:
        elapsed = time.perf_counter() - started
        logger.warning(f"Grid point {point} failed: {exc}")
        status = _failure_status(exc)
        return SweepRow(point, None, None, None, status, elapsed, str(exc))
    report = result.report
    return SweepRow(
        point,
        report.nmse_train,
        report.nmse_test,
        report.chosen_ridge,
        PointStatus.OK,
        time.perf_counter() - started,
    )


def _validated_configs(base, axes, points):
    issues = []
    for axis in axes:
        try:
            axis.check(base)
        except ValueError as exc:
            issues.append((axis.parameter_path, str(exc)))
    if issues:
        raise ConfigError(issues)
    configs = []
    for point in points:
        try:
            configs.append(point_config(base, axes, point))
        except ValueError as exc:
            issues.append((f"sweep point {point}", str(exc)))
    if issues:
        raise ConfigError(issues)
    return configs


def _map_ordered(function, jobs, parallelism):
    """Run ``function(*job)`` for every job; results keep the job order."""
    if parallelism <= 1 or len(jobs) <= 1:
        return [function(*job) for job in jobs]
    slots = [None] * len(jobs)
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        futures = {pool.submit(function, *job): index for index, job in enumerate(jobs)}
        for future, index in futures.items():
            slots[index] = future.result()
    return slots


def run_grid(base, task, axes, parallelism=1):
    """Scan the Cartesian product of ``axes`` around ``base``.

    All points share the seeds of ``base`` and the same task data, so only
    the scanned parameters differ between rows. A point whose integration
    blows up or whose fit fails is recorded and the sweep goes on.
    """
    axes = tuple(axes)
    if not 1 <= len(axes) <= MAX_AXES:
        raise ValueError(f"a sweep takes 1 to {MAX_AXES} axes, got {len(axes)}")
    if parallelism < 1:
        raise ValueError(f"parallelism must be >= 1, got {parallelism}")
    digest = config_digest(base)
    points = grid_points(axes)
    configs = _validated_configs(base, axes, points)
    # warm the series cache so every point reads the same arrays
    prepare_task(task, base.washout_steps)
    logger.info(
        f"Sweeping {len(points)} points over "
        f"{[axis.parameter_path for axis in axes]} with parallelism {parallelism}"
    )
    started = time.perf_counter()
    rows = _map_ordered(
        _run_point,
        [(config, task, point) for config, point in zip(configs, points)],
        parallelism,
    )
    failed = sum(not row.ok for row in rows)
    logger.info(
        f"Sweep finished in {time.perf_counter() - started:.2f}s, "
        f"{failed} of {len(rows)} points failed"
    )
    return SweepResult(
        axes=axes,
        rows=tuple(rows),
        base_digest=digest,
        seed=base.seed,
        base_config=base.model_dump(mode="json"),
    )


def _compare_one(name, config, task):
    try:
        result = run_pipeline(config, task)
    except POINT_FAILURES as exc:
        logger.warning(f"Topology {name} failed: {exc}")
        return TopologyEntry(
            name,
            config.total_nodes,
            len(config.layers),
            None,
            None,
            _failure_status(exc),
            str(exc),
        )
    return TopologyEntry(
        name,
        config.total_nodes,
        len(config.layers),
        result.report.nmse_train,
        result.report.nmse_test,
        PointStatus.OK,
    )


def compare_topologies(specs, task, check_budget=True, names=None, parallelism=1):
    """Evaluate several networks on one task and rank them by test NMSE.

    ``check_budget`` requires every network to have the same total number
    of virtual nodes.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("compare_topologies needs at least one network")
    names = list(names) if names is not None else [
        f"{len(spec.layers)}-layer#{index}" for index, spec in enumerate(specs, 1)
    ]
    if len(names) != len(specs) or len(set(names)) != len(names):
        raise ValueError("names must be unique and match the networks one to one")
    if check_budget:
        budgets = {spec.total_nodes for spec in specs}
        if len(budgets) > 1:
            raise ValueError(
                f"networks differ in total node count {sorted(budgets)}; pass "
                f"check_budget=False to compare anyway"
            )
    entries = _map_ordered(
        _compare_one,
        [(name, spec, task) for name, spec in zip(names, specs)],
        parallelism,
    )
    successful = [e for e in entries if e.status == PointStatus.OK]
    ranking = tuple(e.name for e in sorted(successful, key=lambda e: e.nmse_test))
    for entry in entries:
        logger.info(f"{entry.name}: status={entry.status} nmse_test={entry.nmse_test}")
    return TopologyReport(tuple(entries), ranking)
