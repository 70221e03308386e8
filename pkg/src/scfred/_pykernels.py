"""Reference (numpy) implementations of the hot kernels.

These mirror ``_ckernels.pyx`` one for one and are used whenever the
compiled module is unavailable or ``SCFRED_PURE=1`` is set.
"""

from __future__ import annotations

import numpy as np


def _psi(x):
    out = np.zeros_like(x)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def _dpsi(x):
    out = np.zeros_like(x)
    pos = x > 0
    xp = x[pos]
    out[pos] = np.exp(-1.0 / xp) / (xp * xp)
    return out


def cutoff(s):
    """Return ``(beta(s), beta'(s))`` for a 1-D float array ``s``."""
    s = np.ascontiguousarray(s, dtype=np.float64)
    y = 0.5 * (s + 1.0)
    a = _psi(y)
    b = _psi(1.0 - y)
    den = a + b
    step = a / den
    dstep = (_dpsi(y) * b + a * _dpsi(1.0 - y)) / (den * den)
    return 1.0 - step, -0.5 * dstep


def glue_pointwise(beta, h, k):
    """Pointwise total gluing of two sampled fields.

    ``h`` and ``k`` have shape (n, d) and ``k`` is already shifted onto the
    nodes of ``h``.  Returns ``(glued, antiglued)``.
    """
    b = np.asarray(beta, dtype=np.float64)[:, None]
    h = np.asarray(h, dtype=np.float64)
    k = np.asarray(k, dtype=np.float64)
    glued = b * h + (1.0 - b) * k
    anti = -(1.0 - b) * h + b * k
    return glued, anti


def unglue_pointwise(beta, glued, anti):
    """Invert :func:`glue_pointwise` by solving the 2x2 system per node."""
    b = np.asarray(beta, dtype=np.float64)[:, None]
    g = np.asarray(glued, dtype=np.float64)
    a = np.asarray(anti, dtype=np.float64)
    det = b * b + (1.0 - b) * (1.0 - b)
    h = (b * g - (1.0 - b) * a) / det
    k = ((1.0 - b) * g + b * a) / det
    return h, k


def gf2_row_reduce(M):
    """Row-reduce a binary matrix over GF(2).

    Returns ``(R, pivot_cols)`` with ``R`` in reduced row-echelon form.
    """
    R = (np.asarray(M, dtype=np.uint8) % 2).copy()
    m, n = R.shape
    pivots = []
    row = 0
    for col in range(n):
        if row >= m:
            break
        nz = np.nonzero(R[row:, col])[0]
        if nz.size == 0:
            continue
        p = row + nz[0]
        if p != row:
            R[[row, p]] = R[[p, row]]
        hits = np.nonzero(R[:, col])[0]
        for r in hits:
            if r != row:
                R[r] ^= R[row]
        pivots.append(col)
        row += 1
    return R, pivots
