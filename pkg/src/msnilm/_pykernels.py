"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``."""

import numpy as np


def im2col(x, k, d):
    """Gather the dilated taps of ``x`` (B, C, T) into a (C, k, B, T) array.

    ``cols[c, j, b, t] = x[b, c, t + j*d - pad]`` with zeros outside [0, T).
    """
    B, C, T = x.shape
    pad = (k - 1) * d // 2
    xp = np.zeros((B, C, T + 2 * pad), dtype=x.dtype)
    xp[:, :, pad : pad + T] = x
    cols = np.empty((C, k, B, T), dtype=x.dtype)
    for j in range(k):
        cols[:, j] = xp[:, :, j * d : j * d + T].transpose(1, 0, 2)
    return cols


def col2im(cols, d):
    """Adjoint of :func:`im2col`: scatter-add (C, k, B, T) taps back to (B, C, T)."""
    C, k, B, T = cols.shape
    pad = (k - 1) * d // 2
    xp = np.zeros((B, C, T + 2 * pad), dtype=cols.dtype)
    for j in range(k):
        xp[:, :, j * d : j * d + T] += cols[:, j].transpose(1, 0, 2)
    return np.ascontiguousarray(xp[:, :, pad : pad + T])


def activation_runs(above, period, min_on_duration, min_off_duration):
    """Merge on-runs split by short gaps, then drop short merged runs.

    Returns ``(starts, ends)`` as half-open index arrays.
    """
    above = np.asarray(above, dtype=bool)
    if not above.any():
        empty = np.zeros(0, dtype=np.int64)
        return empty, empty
    edges = np.diff(np.concatenate(([0], above.view(np.int8), [0])))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    gaps = (starts[1:] - ends[:-1]) * period
    # a run opens a new activation unless its gap to the previous run is short
    opens = np.concatenate(([True], gaps >= min_off_duration))
    group = np.cumsum(opens) - 1
    m_starts = starts[opens]
    m_ends = np.zeros(len(m_starts), dtype=np.int64)
    np.maximum.at(m_ends, group, ends)
    keep = (m_ends - m_starts) * period >= min_on_duration
    return m_starts[keep].astype(np.int64), m_ends[keep].astype(np.int64)
