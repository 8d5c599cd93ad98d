"""Tables for a 256-layer ziggurat normal sampler with 52-bit magnitudes.

Shared by the compiled kernel and the numpy fallback so that both map the
same 64-bit words to the same normals.  Layer construction follows Marsaglia
and Tsang; the rightmost layer starts at ``R`` and each layer has area ``V``.
"""
from __future__ import annotations

import math

import numpy as np

R = 3.6541528853610088
V = 0.00492867323399
SCALE = 2.0 ** 52
MASK52 = (1 << 52) - 1


def tables() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(k, w, f): acceptance thresholds, magnitude scales, and density at layer edges."""
    k = np.zeros(256, dtype=np.uint64)
    w = np.zeros(256)
    f = np.zeros(256)
    dn = tn = R
    q = V / math.exp(-0.5 * dn * dn)
    k[0] = int(dn / q * SCALE)
    k[1] = 0
    w[0] = q / SCALE
    w[255] = dn / SCALE
    f[0] = 1.0
    f[255] = math.exp(-0.5 * dn * dn)
    for i in range(254, 0, -1):
        dn = math.sqrt(-2.0 * math.log(V / dn + math.exp(-0.5 * dn * dn)))
        k[i + 1] = int(dn / tn * SCALE)
        tn = dn
        f[i] = math.exp(-0.5 * dn * dn)
        w[i] = dn / SCALE
    return k, w, f


K, W, F = tables()
