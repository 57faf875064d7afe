"""Counter-based random numbers (Philox4x32-10).

Every variate is a pure function of ``(seed, counter)``: the 64-bit seed is
the Philox key and the 128-bit counter is made of four 32-bit words
``(index, sub_index, purpose, replica)``. Replicas therefore never share
numbers, can be generated in any order or all at once, and reruns are
bitwise identical on every platform.

One Philox block yields exactly one variate: a 53-bit uniform on the open
interval (0, 1) built from the first two output words, mapped to a normal by
inverse transform. Stream consumption per variate is fixed at one counter.
"""

from __future__ import annotations

from dataclasses import dataclass

import numba as nb
import numpy as np
from scipy.special import ndtri

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_M53 = 2.0**-53

# purpose word values; keep them stable, changing one changes every result
PATH = 1
REFINE = 2
BRIDGE = 3
TAIL = 4
CURVE = 5
MEASURE = 6
POINTS = 7


def philox4x32(counter, key) -> np.ndarray:
    """Philox4x32 with 10 rounds. ``counter`` is ``(..., 4)`` uint32, ``key`` two uint32."""
    c = np.asarray(counter, dtype=np.uint32)
    x0, x1, x2, x3 = (c[..., i].astype(np.uint64) for i in range(4))
    k0, k1 = np.uint32(key[0]), np.uint32(key[1])
    for r in range(10):
        if r:
            k0 = np.uint32((int(k0) + int(_W0)) & 0xFFFFFFFF)
            k1 = np.uint32((int(k1) + int(_W1)) & 0xFFFFFFFF)
        p0 = _M0 * x0
        p1 = _M1 * x2
        x0, x1, x2, x3 = (
            (p1 >> _S32) ^ x1 ^ np.uint64(k0),
            p1 & _LO,
            (p0 >> _S32) ^ x3 ^ np.uint64(k1),
            p0 & _LO,
        )
    return np.stack([x0, x1, x2, x3], axis=-1).astype(np.uint32)


def seed_key(seed: int) -> tuple:
    seed = int(seed)
    if not 0 <= seed < 2**64:
        raise ValueError("seed must be an integer in [0, 2**64)")
    return (seed & 0xFFFFFFFF, seed >> 32)


@nb.njit(cache=True)
def _philox_uniforms(c0, c1, c2, c3, k0, k1, out):
    m0 = np.uint64(0xD2511F53)
    m1 = np.uint64(0xCD9E8D57)
    lo = np.uint64(0xFFFFFFFF)
    for i in range(out.size):
        x0 = np.uint64(c0[i])
        x1 = np.uint64(c1[i])
        x2 = np.uint64(c2[i])
        x3 = np.uint64(c3[i])
        a = np.uint64(k0)
        b = np.uint64(k1)
        for r in range(10):
            if r > 0:
                a = (a + np.uint64(0x9E3779B9)) & lo
                b = (b + np.uint64(0xBB67AE85)) & lo
            p0 = m0 * x0
            p1 = m1 * x2
            x0, x1, x2, x3 = ((p1 >> np.uint64(32)) ^ x1 ^ a), p1 & lo, ((p0 >> np.uint64(32)) ^ x3 ^ b), p0 & lo
        bits = ((x0 << np.uint64(32)) | x1) >> np.uint64(11)
        out[i] = (np.float64(bits) + 0.5) * 1.1102230246251565e-16


def uniforms_at(seed: int, replica, purpose, index, sub=0) -> np.ndarray:
    """Uniforms on (0, 1) addressed by broadcastable counter components.

    Same values as the first two words of :func:`philox4x32` on the counter
    ``(index, sub, purpose, replica)``; compiled for speed.
    """
    parts = np.broadcast_arrays(
        np.asarray(index, dtype=np.uint64),
        np.asarray(sub, dtype=np.uint64),
        np.asarray(purpose, dtype=np.uint64),
        np.asarray(replica, dtype=np.uint64),
    )
    shape = parts[0].shape
    flat = [np.ascontiguousarray(p).reshape(-1) & _LO for p in parts]
    k0, k1 = seed_key(seed)
    out = np.empty(int(np.prod(shape)), dtype=np.float64)
    _philox_uniforms(flat[0], flat[1], flat[2], flat[3], np.uint64(k0), np.uint64(k1), out)
    return out.reshape(shape)


def normals_at(seed: int, replica, purpose, index, sub=0) -> np.ndarray:
    """Standard normals addressed by counter, via inverse transform."""
    return ndtri(uniforms_at(seed, replica, purpose, index, sub))


@dataclass
class Stream:
    """Sequential view of one counter block: successive calls advance ``index``.

    ``Stream(seed, r, purpose).normals(n)`` returns exactly
    ``normals_at(seed, r, purpose, range(n))``.
    """

    seed: int
    replica: int = 0
    purpose: int = PATH
    sub: int = 0
    position: int = 0

    def _take(self, size) -> np.ndarray:
        shape = (size,) if np.isscalar(size) else tuple(size)
        n = int(np.prod(shape))
        idx = np.arange(self.position, self.position + n, dtype=np.uint64)
        self.position += n
        return idx.reshape(shape)

    def uniforms(self, size) -> np.ndarray:
        return uniforms_at(self.seed, self.replica, self.purpose, self._take(size), self.sub)

    def normals(self, size) -> np.ndarray:
        return normals_at(self.seed, self.replica, self.purpose, self._take(size), self.sub)


def as_stream(source, purpose: int = PATH) -> Stream:
    """Coerce a seed, a ``(seed, replica)`` pair or a Stream into a Stream."""
    if isinstance(source, Stream):
        return source
    if isinstance(source, tuple):
        seed, replica = source
        return Stream(int(seed), int(replica), purpose)
    return Stream(int(source), 0, purpose)
