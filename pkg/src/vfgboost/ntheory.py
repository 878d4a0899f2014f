"""Big-integer kernels used by the Paillier layer.

Modular exponentiation with 1024-bit moduli dominates the runtime of every
encrypted training run, so the kernels are backed by GMP (via gmpy2) whenever
it imports, with pure-Python equivalents as the fallback.  The backend is
picked once at import time; set ``VFGBOOST_PURE_BIGNUM=1`` to force the pure
path.  ``benchmarks/bench_bignum.py`` compares the two backends.
"""

import os
import random

try:
    if os.environ.get("VFGBOOST_PURE_BIGNUM") == "1":
        raise ImportError("forced pure-python backend")
    import gmpy2 as _gmpy2
except ImportError:
    _gmpy2 = None

BACKEND = "gmpy2" if _gmpy2 is not None else "python"

# Witness count for Miller-Rabin; error probability below 4**-50.
_MR_ROUNDS = 50


def py_powmod(base: int, exp: int, mod: int) -> int:
    return pow(base, exp, mod)


def py_invert(a: int, mod: int) -> int:
    return pow(a, -1, mod)


def py_is_probable_prime(n: int) -> bool:
    """Miller-Rabin test with witnesses drawn deterministically from n."""
    if n < 2:
        return False
    for p in (2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37):
        if n % p == 0:
            return n == p
    d = n - 1
    r = 0
    while d % 2 == 0:
        d //= 2
        r += 1
    wit_rng = random.Random(n)
    for _ in range(_MR_ROUNDS):
        a = wit_rng.randrange(2, n - 1)
        x = pow(a, d, n)
        if x == 1 or x == n - 1:
            continue
        for _ in range(r - 1):
            x = x * x % n
            if x == n - 1:
                break
        else:
            return False
    return True


def gmp_powmod(base: int, exp: int, mod: int) -> int:
    return int(_gmpy2.powmod(base, exp, mod))


def gmp_invert(a: int, mod: int) -> int:
    return int(_gmpy2.invert(a, mod))


def gmp_is_probable_prime(n: int) -> bool:
    return bool(_gmpy2.is_prime(n, _MR_ROUNDS))


if BACKEND == "gmpy2":
    powmod = gmp_powmod
    invert = gmp_invert
    is_probable_prime = gmp_is_probable_prime
else:
    powmod = py_powmod
    invert = py_invert
    is_probable_prime = py_is_probable_prime


def random_prime(bits: int, rng: random.Random) -> int:
    """Draw a random prime with exactly `bits` bits from the given stream."""
    if bits < 8:
        raise ValueError("prime size too small: %d bits" % bits)
    while True:
        cand = rng.getrandbits(bits) | (1 << (bits - 1)) | 1
        if is_probable_prime(cand):
            return cand
