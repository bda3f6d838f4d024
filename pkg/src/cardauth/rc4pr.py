"""RC4 primitives plus the block-rekeyed variant.

The variant keeps the classic KSA/PRGA but re-keys every 16-byte block: a
byte-permutation of the previous 16-byte round key produces the next one, so
each block is encrypted under its own key schedule. Key length is fixed at
128 bits and so is the round's data length.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import InvalidKeyError

KEY_LEN = 16
BLOCK_LEN = 16

# Above this size rc4pr_apply switches to the optional JIT kernel; the two
# paths are equivalence-tested byte for byte.
_FAST_PATH_THRESHOLD = 1 << 14


@dataclass
class StateTable:
    """RC4 state: a permutation of 0..255 plus the two stream indices."""

    s: list[int]
    i: int = 0
    j: int = 0


def ksa(key: bytes) -> StateTable:
    """Key-schedule `key` (1..256 bytes) into a fresh state table.

    Keys shorter than 256 bytes repeat: index i uses key[i % len(key)].
    """
    if not 1 <= len(key) <= 256:
        raise InvalidKeyError(f"key must be 1..256 bytes, got {len(key)}")
    s = list(range(256))
    j = 0
    klen = len(key)
    for i in range(256):
        j = (j + s[i] + key[i % klen]) % 256
        s[i], s[j] = s[j], s[i]
    return StateTable(s)


def keystream(state: StateTable, n: int) -> bytes:
    """Emit the next `n` keystream bytes, advancing `state` in place."""
    s = state.s
    i, j = state.i, state.j
    out = bytearray(n)
    for k in range(n):
        i = (i + 1) % 256
        j = (j + s[i]) % 256
        s[i], s[j] = s[j], s[i]
        out[k] = s[(s[i] + s[j]) % 256]
    state.i, state.j = i, j
    return bytes(out)


def rc4_apply(key: bytes, data: bytes) -> bytes:
    """Plain RC4: XOR `data` with the keystream. Self-inverse."""
    ks = keystream(ksa(key), len(data))
    return bytes(a ^ b for a, b in zip(data, ks))


def pr_permute(key: bytes) -> bytes:
    """Derive the next round key by permuting the bytes of a 16-byte key.

    Builds an index permutation over 0..15 with a KSA-style swap loop whose
    pointer update is taken modulo 15 (n-1, kept verbatim even though it
    biases the pointer away from the last index), then applies
    swap(K[i], K[S[i]]) for i ascending. Output is always a byte permutation
    of the input.
    """
    n = len(key)
    if n != KEY_LEN:
        raise InvalidKeyError(f"round key must be {KEY_LEN} bytes, got {n}")
    s = list(range(n))
    j = 0
    for i in range(n):
        j = (j + s[i] + key[i]) % (n - 1)
        s[i], s[j] = s[j], s[i]
    k = bytearray(key)
    for i in range(n):
        si = s[i]
        k[i], k[si] = k[si], k[i]
    return bytes(k)


def count_subkeys(length_bytes: int) -> int:
    """Round keys consumed for a message of `length_bytes`: ceil(len/16).

    An empty message still schedules one round key, so sealing an empty
    payload is well-defined.
    """
    if length_bytes <= 0:
        return 1
    return (length_bytes + BLOCK_LEN - 1) // BLOCK_LEN


def subkey_at(master: bytes, index: int) -> bytes:
    """Round key for block `index`: pr_permute iterated (index+1) times.

    The chain starts at pr_permute(master), not master itself: the first
    scheduling of every round produces that round's key.
    """
    key = master
    for _ in range(index + 1):
        key = pr_permute(key)
    return key


def rc4pr_apply(master: bytes, data: bytes) -> bytes:
    """Encrypt/decrypt `data` under the block-rekeyed pipeline. Self-inverse."""
    out, _ = rc4pr_apply_counted(master, data)
    return out


def rc4pr_apply_counted(master: bytes, data: bytes) -> tuple[bytes, int]:
    """rc4pr_apply plus the number of round keys actually consumed."""
    if len(master) != KEY_LEN:
        raise InvalidKeyError(f"master key must be {KEY_LEN} bytes, got {len(master)}")
    nblocks = count_subkeys(len(data))
    if len(data) >= _FAST_PATH_THRESHOLD:
        fast = _fast_kernel()
        if fast is not None:
            return fast(master, data), nblocks
    out = bytearray()
    key = master
    for b in range(nblocks):
        key = pr_permute(key)
        block = data[b * BLOCK_LEN : (b + 1) * BLOCK_LEN]
        # Always generate the full 16 keystream bytes; a short final block
        # uses only the prefix it needs.
        ks = keystream(ksa(key), BLOCK_LEN)
        out += bytes(x ^ y for x, y in zip(block, ks))
    return bytes(out), nblocks


_fast = None
_fast_failed = False


def _fast_kernel():
    """Lazily build the JIT kernel; returns None when numba is unavailable."""
    global _fast, _fast_failed
    if _fast is not None or _fast_failed:
        return _fast
    try:
        from ._fastpath import rc4pr_bytes
    except Exception:
        _fast_failed = True
        return None
    _fast = rc4pr_bytes
    return _fast
