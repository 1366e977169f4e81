import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import serializers
from .errors import DegenerateInputError

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class Normalization:
    """Affine map recorded by ``standardize``: z = (x - offset) / scale."""

    offset: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        offset = np.atleast_1d(np.asarray(self.offset, dtype=float))
        scale = np.atleast_1d(np.asarray(self.scale, dtype=float))
        if offset.shape != scale.shape:
            raise ValueError("offset and scale must have the same length")
        if np.any(scale <= 0) or not np.all(np.isfinite(scale)):
            raise ValueError("normalization scale components must be > 0")
        object.__setattr__(self, "offset", offset)
        object.__setattr__(self, "scale", scale)


@dataclass(frozen=True)
class Timeseries:
    """Samples of a scalar or vector signal at a fixed sampling interval.

    ``samples`` is always stored 2-D with shape (n, d). ``normalization`` is
    None for a series in original units, otherwise the map that produced it.
    """

    samples: np.ndarray
    sample_interval: float = 1.0
    normalization: Normalization | None = None

    def __post_init__(self):
        samples = np.array(self.samples, dtype=float)
        if samples.ndim == 1:
            samples = samples[:, None]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got {samples.ndim}-D")
        if not np.all(np.isfinite(samples)):
            raise ValueError("timeseries samples must all be finite")
        if not self.sample_interval > 0:
            raise ValueError("sample_interval must be > 0")
        if self.normalization is not None:
            if self.normalization.offset.shape[0] != samples.shape[1]:
                raise ValueError("normalization does not match sample dimension")
        samples.setflags(write=False)
        object.__setattr__(self, "samples", samples)
        object.__setattr__(self, "sample_interval", float(self.sample_interval))

    def __len__(self):
        return self.samples.shape[0]

    @property
    def dimension(self):
        return self.samples.shape[1]

    def component(self, index=0):
        """Return one component as a scalar series, keeping its normalization."""
        norm = self.normalization
        if norm is not None:
            norm = Normalization(norm.offset[[index]], norm.scale[[index]])
        return Timeseries(self.samples[:, [index]], self.sample_interval, norm)

    def values(self):
        """Return the first component as a 1-D array (scalar-input view)."""
        return self.samples[:, 0]

    def slice(self, start, stop=None):
        return Timeseries(
            self.samples[start:stop], self.sample_interval, self.normalization
        )

    def to_csv(self, path):
        offset, scale = self._norm_arrays()
        text = serializers.timeseries_to_csv(
            self.samples, self.sample_interval, offset, scale
        )
        return serializers.atomic_write(path, text)

    @classmethod
    def from_csv(cls, path):
        samples, interval, offset, scale = serializers.timeseries_from_csv(
            Path(path).read_text()
        )
        norm = Normalization(offset, scale) if offset is not None else None
        return cls(samples, interval, norm)

    def to_binary(self, path):
        offset, scale = self._norm_arrays()
        data = serializers.encode_timeseries(
            self.samples, self.sample_interval, offset, scale
        )
        return serializers.atomic_write(path, data)

    @classmethod
    def from_binary(cls, path):
        samples, interval, offset, scale = serializers.decode_timeseries(
            Path(path).read_bytes()
        )
        norm = Normalization(offset, scale) if offset is not None else None
        return cls(samples, interval, norm)

    def _norm_arrays(self):
        if self.normalization is None:
            return None, None
        return self.normalization.offset, self.normalization.scale


def standardize(series):
    """Shift and scale every component to zero mean and unit variance.

    The applied (offset, scale) is recorded on the result so predictions can
    be mapped back with ``destandardize``.
    """
    if len(series) == 0:
        raise ValueError("cannot standardize an empty series")
    offset = series.samples.mean(axis=0)
    scale = series.samples.std(axis=0)
    if np.any(scale == 0):
        flat = [k for k in range(series.dimension) if scale[k] == 0]
        raise DegenerateInputError(
            f"component(s) {flat} have zero variance; cannot standardize"
        )
    logger.debug(f"Standardizing with offset={offset}, scale={scale}")
    return Timeseries(
        (series.samples - offset) / scale,
        series.sample_interval,
        Normalization(offset, scale),
    )


def destandardize(series):
    """Map a standardized series (or a prediction in its units) back."""
    norm = series.normalization
    if norm is None:
        return series
    return Timeseries(series.samples * norm.scale + norm.offset, series.sample_interval)
