"""Textbook RSA with small moduli.

Deliberately pedagogical: primes up to 32 bits, no padding scheme, no
side-channel thought whatsoever. Signatures below lean on the raw inverse
pair m^(e*d) = m (mod n), and "encrypting with the private key" is the same
mod-pow with d. Do not reuse outside this artifact.

Key text format: decimal "n-e" / "n-d", hyphen-separated.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .errors import (
    CardauthError,
    KeyGenerationError,
    KeyTooSmallError,
    MalformedCiphertextError,
    MessageTooLargeError,
    NoInverseError,
)

_MR_BASES = (2, 3, 5, 7, 11, 13, 17)  # deterministic for every x < 3.4e14


@dataclass(frozen=True)
class RsaPublicKey:
    n: int
    e: int

    @property
    def exponent(self) -> int:
        return self.e

    def to_text(self) -> str:
        return f"{self.n}-{self.e}"


@dataclass(frozen=True)
class RsaPrivateKey:
    n: int
    d: int

    @property
    def exponent(self) -> int:
        return self.d

    def to_text(self) -> str:
        return f"{self.n}-{self.d}"


@dataclass(frozen=True)
class RsaKeyBundle:
    p: int
    q: int
    n: int
    phi: int
    e: int
    d: int

    @property
    def public(self) -> RsaPublicKey:
        return RsaPublicKey(self.n, self.e)

    @property
    def private(self) -> RsaPrivateKey:
        return RsaPrivateKey(self.n, self.d)


def public_key_from_text(text: str) -> RsaPublicKey:
    try:
        n_s, e_s = text.strip().split("-")
        return RsaPublicKey(int(n_s), int(e_s))
    except ValueError as exc:
        raise CardauthError(f"bad key text {text!r}") from exc


def private_key_from_text(text: str) -> RsaPrivateKey:
    try:
        n_s, d_s = text.strip().split("-")
        return RsaPrivateKey(int(n_s), int(d_s))
    except ValueError as exc:
        raise CardauthError(f"bad key text {text!r}") from exc


def is_prime(x: int) -> bool:
    """Exact primality for x < 2^32 (Miller-Rabin on fixed bases)."""
    if x < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13):
        if x % p == 0:
            return x == p
    d = x - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    for a in _MR_BASES:
        if a >= x:
            continue
        v = pow(a, d, x)
        if v in (1, x - 1):
            continue
        for _ in range(r - 1):
            v = v * v % x
            if v == x - 1:
                break
        else:
            return False
    return True


def mod_pow(base: int, exp: int, modulus: int) -> int:
    """Square-and-multiply base^exp mod modulus."""
    if modulus < 2:
        raise CardauthError(f"modulus must be >= 2, got {modulus}")
    result = 1
    base %= modulus
    while exp > 0:
        if exp & 1:
            result = result * base % modulus
        base = base * base % modulus
        exp >>= 1
    return result


def mod_inverse(a: int, m: int) -> int:
    """x in 1..m-1 with a*x = 1 (mod m), by extended Euclid."""
    g, x = _ext_gcd(a % m, m)
    if g != 1:
        raise NoInverseError(f"gcd({a}, {m}) = {g} != 1")
    return x % m


def _ext_gcd(a: int, b: int) -> tuple[int, int]:
    old_r, r = a, b
    old_x, x = 1, 0
    while r != 0:
        q = old_r // r
        old_r, r = r, old_r - q * r
        old_x, x = x, old_x - q * x
    return old_r, old_x


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def generate_keypair(p: int, q: int, e: int) -> RsaKeyBundle:
    """Build the full key bundle from chosen primes and public exponent."""
    if not is_prime(p) or not is_prime(q):
        raise KeyGenerationError(f"p={p}, q={q} must both be prime")
    if p == q:
        raise KeyGenerationError("p and q must differ")
    n = p * q
    phi = (p - 1) * (q - 1)
    if not 1 < e < phi:
        raise KeyGenerationError(f"e={e} outside 1 < e < phi={phi}")
    if _gcd(e, phi) != 1:
        raise KeyGenerationError(f"e={e} not coprime to phi={phi}")
    d = mod_inverse(e, phi)
    return RsaKeyBundle(p=p, q=q, n=n, phi=phi, e=e, d=d)


def generate_keypair_random(bits: int, rng: random.Random | int) -> RsaKeyBundle:
    """Random bundle with distinct `bits`-bit primes; deterministic per seed.

    e is the smallest integer >= 3 coprime to phi.
    """
    if not 8 <= bits <= 32:
        raise KeyGenerationError(f"bits must be in 8..32, got {bits}")
    if isinstance(rng, int):
        rng = random.Random(rng)
    p = _random_prime(bits, rng)
    q = _random_prime(bits, rng)
    while q == p:
        q = _random_prime(bits, rng)
    phi = (p - 1) * (q - 1)
    e = 3
    while _gcd(e, phi) != 1:
        e += 1
    return generate_keypair(p, q, e)


def _random_prime(bits: int, rng: random.Random) -> int:
    lo, hi = 1 << (bits - 1), 1 << bits
    while True:
        cand = rng.randrange(lo, hi) | 1
        if is_prime(cand):
            return cand


def encrypt_int(m: int, key: RsaPublicKey | RsaPrivateKey) -> int:
    if m >= key.n:
        raise MessageTooLargeError(f"m={m} >= n={key.n}")
    return pow(m, key.exponent, key.n)


def decrypt_int(c: int, key: RsaPublicKey | RsaPrivateKey) -> int:
    if c >= key.n:
        raise MessageTooLargeError(f"c={c} >= n={key.n}")
    return pow(c, key.exponent, key.n)


def _chunk_widths(n: int) -> tuple[int, int]:
    """(plaintext chunk width, ciphertext block width) in bytes for modulus n."""
    bl = n.bit_length()
    return (bl - 1) // 8, (bl + 7) // 8


def encrypt_bytes(data: bytes, key: RsaPublicKey | RsaPrivateKey) -> bytes:
    """Chunked big-endian integer encryption of an arbitrary byte string.

    Output: 4-byte big-endian plaintext length, then one fixed-width block
    per chunk. A short final chunk is left-padded with zeros (the length
    header is what makes the codec injective).
    """
    if key.n < 257:
        raise KeyTooSmallError(f"n={key.n} < 257 cannot chunk bytes")
    ci, co = _chunk_widths(key.n)
    out = bytearray(len(data).to_bytes(4, "big"))
    for off in range(0, len(data), ci):
        chunk = data[off : off + ci]
        m = int.from_bytes(chunk, "big")
        c = pow(m, key.exponent, key.n)
        out += c.to_bytes(co, "big")
    return bytes(out)


def decrypt_bytes(data: bytes, key: RsaPublicKey | RsaPrivateKey) -> bytes:
    """Inverse of encrypt_bytes; strips padding via the length header."""
    if key.n < 257:
        raise KeyTooSmallError(f"n={key.n} < 257 cannot chunk bytes")
    ci, co = _chunk_widths(key.n)
    if len(data) < 4:
        raise MalformedCiphertextError("truncated length header")
    declared = int.from_bytes(data[:4], "big")
    body = data[4:]
    nblocks = (declared + ci - 1) // ci
    if len(body) != nblocks * co:
        raise MalformedCiphertextError(
            f"declared {declared} bytes needs {nblocks} blocks, body is {len(body)} bytes"
        )
    out = bytearray()
    for b in range(nblocks):
        c = int.from_bytes(body[b * co : (b + 1) * co], "big")
        if c >= key.n:
            raise MalformedCiphertextError(f"block {b} value >= modulus")
        m = pow(c, key.exponent, key.n)
        width = ci if (b + 1) * ci <= declared else declared - b * ci
        if m >= 1 << (8 * width):
            raise MalformedCiphertextError(f"block {b} decrypts outside chunk width")
        out += m.to_bytes(width, "big")
    return bytes(out)
