import math

import numba


@numba.njit(cache=True, nogil=True)
def ring_value(ring, position):
    """Value of a circular substep buffer at a possibly fractional index.

    Slot ``k % len(ring)`` holds the sample of substep ``k``; negative
    indices address the preloaded history. Off-grid positions are linearly
    interpolated between the two neighbouring substeps.
    """
    size = ring.shape[0]
    lo = math.floor(position)
    frac = position - lo
    a = ring[int(lo) % size]
    if frac == 0.0:
        return a
    b = ring[(int(lo) + 1) % size]
    return (1.0 - frac) * a + frac * b
