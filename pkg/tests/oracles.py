"""Naive reference implementations used as independent test oracles.

Everything here is written straight from first principles with flat loops
and no shared code with the package, so the two sides can disagree when one
of them is wrong. Keep it slow and obvious.
"""


def rc4_keystream_reference(key, n):
    """Stream bytes from a plain RC4 trace: schedule, then emit n bytes."""
    table = []
    for i in range(256):
        table.append(i)
    j = 0
    for i in range(256):
        j = (j + table[i] + key[i % len(key)]) % 256
        tmp = table[i]
        table[i] = table[j]
        table[j] = tmp
    out = []
    i = 0
    j = 0
    for _ in range(n):
        i = (i + 1) % 256
        j = (j + table[i]) % 256
        tmp = table[i]
        table[i] = table[j]
        table[j] = tmp
        out.append(table[(table[i] + table[j]) % 256])
    return bytes(out)


def rc4_state_reference(key):
    """Just the scheduled 256-entry table, as a list."""
    table = list(range(256))
    j = 0
    for i in range(256):
        j = (j + table[i] + key[i % len(key)]) % 256
        table[i], table[j] = table[j], table[i]
    return table


def rc4_reference(key, data):
    stream = rc4_keystream_reference(key, len(data))
    return bytes(d ^ s for d, s in zip(data, stream))


def pr_reference(key):
    """Round-key permutation traced directly from its pseudo-code: pointer
    update modulo n-1, then swap K[i] with K[S[i]] for ascending i."""
    n = len(key)
    order = list(range(n))
    j = 0
    for i in range(n):
        j = (j + order[i] + key[i]) % (n - 1)
        order[i], order[j] = order[j], order[i]
    out = list(key)
    for i in range(n):
        target = order[i]
        out[i], out[target] = out[target], out[i]
    return bytes(out)


def rc4pr_reference(master, data):
    """Block-by-block composition: permute the key, schedule, encrypt 16."""
    chunks = []
    key = bytes(master)
    nblocks = max(1, (len(data) + 15) // 16)
    for b in range(nblocks):
        key = pr_reference(key)
        block = data[b * 16 : b * 16 + 16]
        stream = rc4_keystream_reference(key, 16)
        chunks.append(bytes(x ^ y for x, y in zip(block, stream)))
    return b"".join(chunks)


def naive_mod_pow(base, exp, modulus):
    """Repeated multiplication, no squaring tricks."""
    result = 1
    for _ in range(exp):
        result = (result * base) % modulus
    return result


def trial_division_is_prime(x):
    if x < 2:
        return False
    d = 2
    while d * d <= x:
        if x % d == 0:
            return False
        d += 1
    return True


def extended_euclid_inverse(a, m):
    """Brute-force inverse by scanning; fine for small test moduli."""
    a %= m
    for x in range(1, m):
        if (a * x) % m == 1:
            return x
    return None
