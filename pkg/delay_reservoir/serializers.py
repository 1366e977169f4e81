"""Binary and CSV encodings shared by series, state matrices and readouts.

Every writer goes through ``atomic_write`` so an interrupted run never leaves
a half-written result behind: data lands in a temporary file in the target
directory and is renamed into place.
"""

import csv
import io
import logging
import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError

logger = logging.getLogger(__name__)

TIMESERIES_MAGIC = b"DTDRTS01"
STATE_MATRIX_MAGIC = b"DTDRSM01"
WEIGHTS_MAGIC = b"DTDRWT01"

_TS_HEADER = struct.Struct("<QQdB")
_SM_HEADER = struct.Struct("<QQQQd")
_WT_HEADER = struct.Struct("<QQBdQqQ")


def atomic_write(path, data):
    """Write bytes or text to ``path`` via temp file + rename."""
    path = Path(path)
    if isinstance(data, str):
        data = data.encode("utf-8")
    fd, tmp_name = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise
    logger.debug(f"Wrote {len(data)} bytes to {path}")
    return path


def format_float(value):
    # 17 significant digits round-trip any float64 exactly
    return format(float(value), ".17g")


def _float_array(buffer, offset, count, name):
    needed = offset + 8 * count
    if len(buffer) < needed:
        raise FormatError(f"truncated {name}: need {needed} bytes, got {len(buffer)}")
    return np.frombuffer(buffer, dtype="<f8", count=count, offset=offset), needed


def _check_magic(buffer, magic):
    if buffer[: len(magic)] != magic:
        raise FormatError(
            f"bad magic header {bytes(buffer[:len(magic)])!r}, expected {magic!r}"
        )
    return len(magic)


def encode_timeseries(samples, sample_interval, offset=None, scale=None):
    samples = np.asarray(samples, dtype=float)
    n, d = samples.shape
    has_norm = offset is not None
    parts = [TIMESERIES_MAGIC, _TS_HEADER.pack(n, d, sample_interval, has_norm)]
    if has_norm:
        parts.append(np.asarray(offset, dtype="<f8").tobytes())
        parts.append(np.asarray(scale, dtype="<f8").tobytes())
    # columnar: each component is contiguous
    parts.append(np.ascontiguousarray(samples.T, dtype="<f8").tobytes())
    return b"".join(parts)


def decode_timeseries(buffer):
    """Return (samples, sample_interval, offset, scale) from encoded bytes."""
    pos = _check_magic(buffer, TIMESERIES_MAGIC)
    if len(buffer) < pos + _TS_HEADER.size:
        raise FormatError("truncated timeseries header")
    n, d, sample_interval, has_norm = _TS_HEADER.unpack_from(buffer, pos)
    pos += _TS_HEADER.size
    offset = scale = None
    if has_norm:
        offset, pos = _float_array(buffer, pos, d, "normalization offset")
        scale, pos = _float_array(buffer, pos, d, "normalization scale")
    payload, pos = _float_array(buffer, pos, n * d, "timeseries payload")
    if pos != len(buffer):
        raise FormatError(f"{len(buffer) - pos} trailing bytes after payload")
    samples = payload.reshape(d, n).T.copy()
    return samples, sample_interval, offset, scale


def timeseries_to_csv(samples, sample_interval, offset=None, scale=None):
    samples = np.asarray(samples, dtype=float)
    out = io.StringIO()
    out.write(f"# sample_interval={format_float(sample_interval)}\n")
    if offset is None:
        out.write("# normalization=identity\n")
    else:
        out.write("# offset=" + ";".join(format_float(v) for v in offset) + "\n")
        out.write("# scale=" + ";".join(format_float(v) for v in scale) + "\n")
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["n"] + [f"x{k}" for k in range(samples.shape[1])])
    for n, row in enumerate(samples):
        writer.writerow([n] + [format_float(v) for v in row])
    return out.getvalue()


def timeseries_from_csv(text):
    sample_interval = None
    offset = scale = None
    body = []
    for line in text.splitlines():
        if line.startswith("#"):
            key, _, value = line[1:].strip().partition("=")
            if key == "sample_interval":
                sample_interval = float(value)
            elif key == "offset":
                offset = np.array([float(v) for v in value.split(";")])
            elif key == "scale":
                scale = np.array([float(v) for v in value.split(";")])
            continue
        body.append(line)
    rows = [
        [float(v) for v in record[1:]]
        for record in csv.reader(body)
        if record and record[0] != "n"
    ]
    if sample_interval is None:
        raise FormatError("missing '# sample_interval=' comment")
    if (offset is None) != (scale is None):
        raise FormatError("normalization needs both offset and scale")
    return np.array(rows, dtype=float), sample_interval, offset, scale


def encode_state_matrix(entries, n_nodes, first_input_index, sample_interval):
    entries = np.asarray(entries, dtype=float)
    rows, cols = entries.shape
    header = _SM_HEADER.pack(
        rows, cols, len(n_nodes), first_input_index, sample_interval
    )
    layout = np.asarray(n_nodes, dtype="<u8").tobytes()
    payload = np.ascontiguousarray(entries, dtype="<f8").tobytes()
    return b"".join([STATE_MATRIX_MAGIC, header, layout, payload])


def decode_state_matrix(buffer):
    """Return (entries, n_nodes, first_input_index, sample_interval)."""
    pos = _check_magic(buffer, STATE_MATRIX_MAGIC)
    if len(buffer) < pos + _SM_HEADER.size:
        raise FormatError("truncated state matrix header")
    rows, cols, n_layers, first_input_index, sample_interval = (
        _SM_HEADER.unpack_from(buffer, pos)
    )
    pos += _SM_HEADER.size
    if len(buffer) < pos + 8 * n_layers:
        raise FormatError("truncated state matrix layer sizes")
    n_nodes = np.frombuffer(buffer, dtype="<u8", count=n_layers, offset=pos)
    pos += 8 * n_layers
    if int(n_nodes.sum()) != cols:
        total = int(n_nodes.sum())
        raise FormatError(f"layer sizes sum to {total}, header says {cols}")
    payload, pos = _float_array(buffer, pos, rows * cols, "state matrix payload")
    if pos != len(buffer):
        raise FormatError(f"{len(buffer) - pos} trailing bytes after payload")
    return (
        payload.reshape(rows, cols).copy(),
        tuple(int(v) for v in n_nodes),
        first_input_index,
        sample_interval,
    )


def encode_weights(matrix, include_bias, ridge, delta_n, seed=0, n_train=0):
    matrix = np.asarray(matrix, dtype=float)
    rows, outputs = matrix.shape
    header = _WT_HEADER.pack(
        rows, outputs, include_bias, ridge, delta_n, seed, n_train
    )
    payload = np.ascontiguousarray(matrix, dtype="<f8").tobytes()
    return b"".join([WEIGHTS_MAGIC, header, payload])


def decode_weights(buffer):
    """Return (matrix, include_bias, ridge, delta_n, seed, n_train)."""
    pos = _check_magic(buffer, WEIGHTS_MAGIC)
    if len(buffer) < pos + _WT_HEADER.size:
        raise FormatError("truncated weights header")
    rows, outputs, include_bias, ridge, delta_n, seed, n_train = (
        _WT_HEADER.unpack_from(buffer, pos)
    )
    pos += _WT_HEADER.size
    payload, pos = _float_array(buffer, pos, rows * outputs, "weights payload")
    if pos != len(buffer):
        raise FormatError(f"{len(buffer) - pos} trailing bytes after payload")
    matrix = payload.reshape(rows, outputs).copy()
    return matrix, bool(include_bias), ridge, delta_n, seed, n_train


def table_to_csv(header, rows):
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow(
            [format_float(v) if isinstance(v, float) else v for v in row]
        )
    return out.getvalue()
