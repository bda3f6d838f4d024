"""JIT kernel for the block-rekeyed cipher on large inputs.

Mirrors rc4pr.rc4pr_apply exactly (same permutation loop, same KSA/PRGA);
tests assert byte equality between the two paths. Importing this module
pulls in numba, so rc4pr only loads it lazily and falls back to the pure
implementation when the import fails.
"""

from __future__ import annotations

import numpy as np
from numba import njit


@njit(cache=True)
def _rc4pr_kernel(master, data):  # pragma: no cover - exercised via wrapper
    n = data.shape[0]
    out = np.empty(n, dtype=np.uint8)
    key = master.astype(np.int64)
    s16 = np.empty(16, dtype=np.int64)
    s = np.empty(256, dtype=np.int64)
    nblocks = (n + 15) // 16
    if nblocks == 0:
        nblocks = 1
    for b in range(nblocks):
        # round-key permutation
        for i in range(16):
            s16[i] = i
        j = 0
        for i in range(16):
            j = (j + s16[i] + key[i]) % 15
            s16[i], s16[j] = s16[j], s16[i]
        for i in range(16):
            si = s16[i]
            t = key[i]
            key[i] = key[si]
            key[si] = t
        # key scheduling
        for i in range(256):
            s[i] = i
        j = 0
        for i in range(256):
            j = (j + s[i] + key[i % 16]) % 256
            s[i], s[j] = s[j], s[i]
        # stream generation + XOR for this block
        x = 0
        y = 0
        start = b * 16
        end = start + 16
        if end > n:
            end = n
        for pos in range(start, end):
            x = (x + 1) % 256
            y = (y + s[x]) % 256
            s[x], s[y] = s[y], s[x]
            out[pos] = data[pos] ^ np.uint8(s[(s[x] + s[y]) % 256])
    return out


def rc4pr_bytes(master: bytes, data: bytes) -> bytes:
    m = np.frombuffer(master, dtype=np.uint8)
    d = np.frombuffer(data, dtype=np.uint8)
    return _rc4pr_kernel(m, d).tobytes()
