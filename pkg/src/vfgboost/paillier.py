"""Paillier additively homomorphic encryption with signed fixed-point encoding.

Key generation follows the textbook scheme: n = p*q for random primes p, q
with gcd(pq, (p-1)(q-1)) = 1, secret lambda = lcm(p-1, q-1) and
mu = (L(g^lambda mod n^2))^-1 mod n where L(x) = (x-1)/n.  Encryption of
m in Z_n is c = g^m * r^n mod n^2; the product of two ciphertexts decrypts to
the sum of the plaintexts mod n.  g = n+1 is used by default, which admits the
cheap g^m = 1 + m*n shortcut without changing the scheme.

Real-valued statistics are carried through the integers by `FixedPointCodec`:
x maps to round(x * scale) with negatives wrapped modulo n and decoded back
with an n/2 threshold, so sums of encodings decode to sums of reals as long as
the total magnitude stays below n / (2 * scale).
"""

import random
from dataclasses import dataclass

from . import ntheory

DEFAULT_KEY_BITS = 512
DEFAULT_SCALE = 2**40


@dataclass(frozen=True)
class PublicKey:
    n: int
    g: int
    key_id: int

    @property
    def n_sq(self) -> int:
        return self.n * self.n

    @property
    def ciphertext_bytes(self) -> int:
        """Serialized width of one ciphertext: the full Z_{n^2} word."""
        return 2 * ((self.n.bit_length() + 7) // 8)

    def to_bytes(self) -> bytes:
        return _lp_bigint(self.n) + _lp_bigint(self.g) + self.key_id.to_bytes(4, "big")

    @classmethod
    def from_bytes(cls, raw: bytes) -> "PublicKey":
        n, off = _read_lp_bigint(raw, 0)
        g, off = _read_lp_bigint(raw, off)
        key_id = int.from_bytes(raw[off : off + 4], "big")
        return cls(n=n, g=g, key_id=key_id)


@dataclass(frozen=True)
class SecretKey:
    public: PublicKey
    lam: int
    mu: int


@dataclass(frozen=True)
class Ciphertext:
    value: int
    key_id: int

    def to_bytes(self, pk: PublicKey) -> bytes:
        """Fixed-width big-endian serialization (full Z_{n^2} word)."""
        return self.key_id.to_bytes(4, "big") + self.value.to_bytes(
            pk.ciphertext_bytes, "big"
        )

    @classmethod
    def from_bytes(cls, raw: bytes) -> "Ciphertext":
        return cls(
            value=int.from_bytes(raw[4:], "big"),
            key_id=int.from_bytes(raw[:4], "big"),
        )


def _lp_bigint(v: int) -> bytes:
    raw = v.to_bytes((v.bit_length() + 7) // 8 or 1, "big")
    return len(raw).to_bytes(4, "big") + raw


def _read_lp_bigint(raw: bytes, off: int) -> tuple[int, int]:
    ln = int.from_bytes(raw[off : off + 4], "big")
    off += 4
    return int.from_bytes(raw[off : off + ln], "big"), off + ln


def keygen(bits: int = DEFAULT_KEY_BITS, rng_seed=None, key_id: int = 0):
    """Generate a key pair whose modulus has exactly `bits` bits.

    `rng_seed` may be an int/str seed or a ready `random.Random`; prime
    search is fully deterministic given the seed.
    """
    if bits < 256:
        raise ValueError("key size below 256 bits is not supported")
    rng = rng_seed if isinstance(rng_seed, random.Random) else random.Random(rng_seed)
    half = bits // 2
    while True:
        p = ntheory.random_prime(half, rng)
        q = ntheory.random_prime(bits - half, rng)
        if p == q:
            continue
        n = p * q
        if n.bit_length() != bits:
            continue
        if _gcd(n, (p - 1) * (q - 1)) != 1:
            continue
        break
    g = n + 1
    lam = (p - 1) * (q - 1) // _gcd(p - 1, q - 1)  # lcm(p-1, q-1)
    n_sq = n * n
    mu = ntheory.invert(_l_func(ntheory.powmod(g, lam, n_sq), n), n)
    pk = PublicKey(n=n, g=g, key_id=key_id)
    return pk, SecretKey(public=pk, lam=lam, mu=mu)


def _gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a


def _l_func(x: int, n: int) -> int:
    return (x - 1) // n


def encrypt(pk: PublicKey, m: int, rng: random.Random) -> Ciphertext:
    """Probabilistic encryption of m in [0, n)."""
    if not 0 <= m < pk.n:
        raise ValueError("plaintext out of range [0, n)")
    n_sq = pk.n_sq
    if pk.g == pk.n + 1:
        gm = (1 + m * pk.n) % n_sq
    else:
        gm = ntheory.powmod(pk.g, m, n_sq)
    # r in [1, n) is coprime to n except with probability ~2^-(bits/2)
    r = rng.randrange(1, pk.n)
    return Ciphertext(value=gm * ntheory.powmod(r, pk.n, n_sq) % n_sq, key_id=pk.key_id)


def decrypt(sk: SecretKey, c: Ciphertext) -> int:
    if c.key_id != sk.public.key_id:
        raise ValueError("ciphertext key %d does not match secret key %d"
                         % (c.key_id, sk.public.key_id))
    n = sk.public.n
    x = ntheory.powmod(c.value, sk.lam, sk.public.n_sq)
    return _l_func(x, n) * sk.mu % n


def add_ciphertexts(a: Ciphertext, b: Ciphertext, pk: PublicKey) -> Ciphertext:
    """Homomorphic addition: modular product in Z_{n^2}."""
    if a.key_id != b.key_id or a.key_id != pk.key_id:
        raise ValueError("cannot combine ciphertexts under different keys")
    return Ciphertext(value=a.value * b.value % pk.n_sq, key_id=pk.key_id)


def sum_ciphertexts(cts, pk: PublicKey) -> Ciphertext:
    acc = None
    for ct in cts:
        acc = ct if acc is None else add_ciphertexts(acc, ct, pk)
    if acc is None:
        raise ValueError("empty ciphertext fold")
    return acc


class FixedPointCodec:
    """Signed fixed-point encoding of reals into Z_n at a power-of-two scale."""

    def __init__(self, modulus: int, scale: int = DEFAULT_SCALE):
        if scale <= 0 or scale & (scale - 1):
            raise ValueError("scale must be a positive power of two")
        self.scale = scale
        self.modulus = modulus
        self.max_abs = modulus // (2 * scale)

    def encode(self, x: float) -> int:
        q = round(x * self.scale)
        if abs(q) > self.max_abs * self.scale:
            raise OverflowError("value %r exceeds codec range" % (x,))
        return q % self.modulus

    def decode(self, m: int) -> float:
        if m > self.modulus // 2:
            m -= self.modulus
        return m / self.scale
