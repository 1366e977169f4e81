"""Mackey-Glass and Lorenz benchmark generators.

Both systems are integrated with the classical fixed-step fourth order
Runge-Kutta scheme inside compiled kernels. The Mackey-Glass delay is served
from a circular buffer at substep resolution; lookback instants that fall
between grid points (the half-step stages) use linear interpolation.
"""

import logging
import math
from typing import Literal

import numba
import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from .buffers import ring_value
from .errors import IntegrationBlowupError
from .seeding import rng_for
from .timeseries import Timeseries

logger = logging.getLogger(__name__)

MACKEY_GLASS_DISCARD = 1000
LORENZ_DISCARD = 5000


class RandomHistory(BaseModel):
    """Seeded random initial history, drawn once per sample interval.

    Values are drawn on the sample grid over [-delay, 0] and linearly
    interpolated onto the substep grid, so the history is identical for any
    ``substeps_per_sample``.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: Literal["random"] = "random"
    seed: int = 0
    low: float = 0.5
    high: float = 1.3

    @model_validator(mode="after")
    def _check_range(self):
        if not self.low < self.high:
            raise ValueError("random history needs low < high")
        return self


class MackeyGlassParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    feedback_gain: float = 0.2
    decay: float = 0.1
    exponent: float = 10.0
    delay: float = Field(17.0, gt=0)
    sample_interval: float = Field(1.0, gt=0)
    substeps_per_sample: int = Field(10, ge=10)
    history_init: float | RandomHistory = RandomHistory()


class LorenzParams(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    sigma: float = 10.0
    rho: float = 28.0
    beta: float = 8.0 / 3.0
    sample_interval: float = Field(0.02, gt=0)
    substeps_per_sample: int = Field(10, ge=1)
    init_state: tuple[float, float, float] = (1.0, 1.0, 1.0)


@numba.njit(cache=True, nogil=True)
def _mg_rhs(x, lagged, gain, decay, exponent):
    return gain * lagged / (1.0 + lagged**exponent) - decay * x


@numba.njit(cache=True, nogil=True)
def _mackey_glass_kernel(
    history, n_total, substeps, h, delay_steps, gain, decay, exponent, out
):
    # history[j] holds x at substep index j - (len(history) - 1), so its last
    # entry is x(0); ring slot of substep index k is k mod size
    size = history.shape[0] + 2
    ring = np.empty(size)
    first = -(history.shape[0] - 1)
    for j in range(history.shape[0]):
        ring[(first + j) % size] = history[j]
    x = history[history.shape[0] - 1]
    out[0] = x
    k = 0
    for n in range(1, n_total):
        for _ in range(substeps):
            lag0 = ring_value(ring, k - delay_steps)
            lag_half = ring_value(ring, k + 0.5 - delay_steps)
            lag1 = ring_value(ring, k + 1.0 - delay_steps)
            k1 = _mg_rhs(x, lag0, gain, decay, exponent)
            k2 = _mg_rhs(x + 0.5 * h * k1, lag_half, gain, decay, exponent)
            k3 = _mg_rhs(x + 0.5 * h * k2, lag_half, gain, decay, exponent)
            k4 = _mg_rhs(x + h * k3, lag1, gain, decay, exponent)
            x = x + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            k += 1
            ring[k % size] = x
            if not math.isfinite(x):
                return n
        out[n] = x
    return -1


@numba.njit(cache=True, nogil=True)
def _lorenz_rhs(state, sigma, rho, beta):
    x, y, z = state[0], state[1], state[2]
    return np.array([sigma * (y - x), x * (rho - z) - y, x * y - beta * z])


@numba.njit(cache=True, nogil=True)
def _lorenz_kernel(init, n_total, substeps, h, sigma, rho, beta, out):
    state = init.copy()
    out[0] = state
    for n in range(1, n_total):
        for _ in range(substeps):
            k1 = _lorenz_rhs(state, sigma, rho, beta)
            k2 = _lorenz_rhs(state + 0.5 * h * k1, sigma, rho, beta)
            k3 = _lorenz_rhs(state + 0.5 * h * k2, sigma, rho, beta)
            k4 = _lorenz_rhs(state + h * k3, sigma, rho, beta)
            state = state + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not (
            math.isfinite(state[0])
            and math.isfinite(state[1])
            and math.isfinite(state[2])
        ):
            return n
        out[n] = state
    return -1


def _check_counts(n_samples, discard):
    if n_samples < 1:
        raise ValueError(f"n_samples must be >= 1, got {n_samples}")
    if discard < 0:
        raise ValueError(f"discard must be >= 0, got {discard}")


def _mackey_glass_history(params, h):
    # lookback window in substeps, plus one for the x(0) entry
    window = int(math.ceil(params.delay / h)) + 1
    times = (np.arange(window) - (window - 1)) * h
    spec = params.history_init
    if not isinstance(spec, RandomHistory):
        return np.full(window, float(spec))
    n_knots = int(math.ceil(params.delay / params.sample_interval)) + 1
    knot_times = (np.arange(n_knots) - (n_knots - 1)) * params.sample_interval
    rng = rng_for(spec.seed, "history")
    knots = rng.uniform(spec.low, spec.high, size=n_knots)
    return np.interp(times, knot_times, knots)


def gen_mackey_glass(params=None, n_samples=1000, discard=MACKEY_GLASS_DISCARD):
    """Integrate the Mackey-Glass delay equation and sample it.

    dx/dt = gain * x(t - delay) / (1 + x(t - delay)^exponent) - decay * x
    """
    params = params or MackeyGlassParams()
    _check_counts(n_samples, discard)
    h = params.sample_interval / params.substeps_per_sample
    history = _mackey_glass_history(params, h)
    n_total = discard + n_samples
    out = np.empty(n_total)
    failed = _mackey_glass_kernel(
        history,
        n_total,
        params.substeps_per_sample,
        h,
        params.delay / h,
        params.feedback_gain,
        params.decay,
        params.exponent,
        out,
    )
    if failed >= 0:
        raise IntegrationBlowupError(
            f"Mackey-Glass state became non-finite at sample {failed}",
            time=failed * params.sample_interval,
            step=failed,
        )
    logger.info(
        f"Generated {n_samples} Mackey-Glass samples (discarded {discard}, "
        f"{params.substeps_per_sample} substeps per sample)"
    )
    return Timeseries(out[discard:], params.sample_interval)


def gen_lorenz(params=None, n_samples=1000, discard=LORENZ_DISCARD):
    """Integrate the Lorenz system; returns the 3-D (x, y, z) samples."""
    params = params or LorenzParams()
    _check_counts(n_samples, discard)
    h = params.sample_interval / params.substeps_per_sample
    n_total = discard + n_samples
    out = np.empty((n_total, 3))
    failed = _lorenz_kernel(
        np.asarray(params.init_state, dtype=float),
        n_total,
        params.substeps_per_sample,
        h,
        params.sigma,
        params.rho,
        params.beta,
        out,
    )
    if failed >= 0:
        raise IntegrationBlowupError(
            f"Lorenz state became non-finite at sample {failed}",
            time=failed * params.sample_interval,
            step=failed,
        )
    logger.info(f"Generated {n_samples} Lorenz samples (discarded {discard})")
    return Timeseries(out[discard:], params.sample_interval)
