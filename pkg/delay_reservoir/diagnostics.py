"""Convolution kernels of the layer filters and spatial-scale measurements.

Eliminating y from the layer equations gives

    tau x'' + x' + delta x = f'

so a layer filters its nonlinear drive f with transfer function
H(s) = s / (tau s^2 + s + delta). Its characteristic roots are

    lambda_pm = (-1 +- sqrt(1 - 4 tau delta)) / (2 tau)

and partial fractions of H(s) / tau give the kernel

    h(t) = (lambda_+ e^{lambda_+ t} - lambda_- e^{lambda_- t})
           / (tau (lambda_+ - lambda_-))

For delta = 0 this reduces to the low-pass kernel (1/tau) e^{-t/tau}. The
repeated root (4 tau delta = 1) and complex pair (4 tau delta > 1) follow from
the same expression as limits; they are handled explicitly below. Every
kernel starts at h(0) = 1/tau; the band-pass kernels integrate to H(0) = 0.
"""

import logging
from typing import NamedTuple

import numpy as np

logger = logging.getLogger(__name__)


class AutocorrWidth(NamedTuple):
    width: float
    degenerate: bool


def _check_time(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise ValueError("kernel time must be >= 0")
    return t


def _roots(layer):
    tau, delta = layer.tau_fast, layer.delta_slow
    disc = 1.0 - 4.0 * tau * delta
    return tau, delta, disc


def impulse_response(layer, t):
    """Kernel h(t) of the linear layer filter (scalar or array ``t``)."""
    t = _check_time(t)
    tau, delta, disc = _roots(layer)
    if delta == 0:
        out = np.exp(-t / tau) / tau
    elif disc > 0:
        root = np.sqrt(disc)
        fast = (-1.0 - root) / (2.0 * tau)
        slow = (-1.0 + root) / (2.0 * tau)
        out = (slow * np.exp(slow * t) - fast * np.exp(fast * t)) / (
            tau * (slow - fast)
        )
    elif disc == 0:
        lam = -1.0 / (2.0 * tau)
        out = (1.0 + lam * t) * np.exp(lam * t) / tau
    else:
        real = -1.0 / (2.0 * tau)
        omega = np.sqrt(-disc) / (2.0 * tau)
        out = (
            np.exp(real * t)
            * (np.cos(omega * t) + real / omega * np.sin(omega * t))
            / tau
        )
    return out if out.ndim else float(out)


def step_response(layer, t):
    """Integral of the kernel from 0 to ``t``: response to a unit step drive."""
    t = _check_time(t)
    tau, delta, disc = _roots(layer)
    if delta == 0:
        out = -np.expm1(-t / tau)
    elif disc > 0:
        root = np.sqrt(disc)
        fast = (-1.0 - root) / (2.0 * tau)
        slow = (-1.0 + root) / (2.0 * tau)
        out = (np.exp(slow * t) - np.exp(fast * t)) / (tau * (slow - fast))
    elif disc == 0:
        lam = -1.0 / (2.0 * tau)
        out = t * np.exp(lam * t) / tau
    else:
        real = -1.0 / (2.0 * tau)
        omega = np.sqrt(-disc) / (2.0 * tau)
        out = np.exp(real * t) * np.sin(omega * t) / (tau * omega)
    return out if out.ndim else float(out)


def spatial_autocorr_width(states, layer, threshold=np.exp(-1.0)):
    """Node lag at which the row-averaged spatial autocorrelation drops below 1/e.

    The crossing is interpolated linearly between the integer lags around
    it, so layers whose widths fall between the same two lags still order.

    Each row (one input step) of the layer is treated as a signal along the
    virtual-node axis. Rows without spread are skipped; if every row is flat
    the layer is degenerate and the maximal width n_nodes is returned.
    """
    block = np.asarray(states.layer_block(layer), dtype=float)
    if block.shape[0] < 100:
        raise ValueError(
            f"spatial autocorrelation needs >= 100 rows, got {block.shape[0]}"
        )
    n_rows, n_nodes = block.shape
    centered = block - block.mean(axis=1, keepdims=True)
    energy = np.sum(centered**2, axis=1)
    usable = energy > 0
    if not np.any(usable):
        logger.warning(f"Layer {layer} states are constant; width is degenerate")
        return AutocorrWidth(float(n_nodes), True)
    centered = centered[usable]
    # zero-padded FFT gives the linear (non-circular) autocorrelation
    spectrum = np.fft.rfft(centered, n=2 * n_nodes, axis=1)
    acov = np.fft.irfft(spectrum * np.conj(spectrum), n=2 * n_nodes, axis=1)
    acorr = acov[:, :n_nodes] / energy[usable][:, None]
    mean_acorr = acorr.mean(axis=0)
    below = np.nonzero(mean_acorr[1:] < threshold)[0]
    if below.size:
        lag = below[0] + 1
        before, after = mean_acorr[lag - 1], mean_acorr[lag]
        width = float(lag - 1 + (before - threshold) / (before - after))
    else:
        width = float(n_nodes)
    logger.debug(f"Layer {layer} spatial autocorrelation width: {width:.3f} nodes")
    return AutocorrWidth(width, False)
