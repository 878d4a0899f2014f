"""Compare the GMP-backed and pure-Python big-integer backends.

The hot kernels of an encrypted training run are Paillier encrypt / decrypt /
ciphertext-add, all dominated by modular exponentiation in Z_{n^2}.  This
script times both backends on the same keys and prints a table.

Usage: python benchmarks/bench_bignum.py [--bits 512] [--ops 200]
"""

import argparse
import random
import time

from vfgboost import ntheory, paillier


def _time(fn, n_ops):
    t0 = time.perf_counter()
    for _ in range(n_ops):
        fn()
    return (time.perf_counter() - t0) / n_ops


def bench_backend(name, powmod, invert, bits, n_ops):
    # keygen once with the library defaults; the kernels under test get swapped
    saved = (ntheory.powmod, ntheory.invert)
    ntheory.powmod, ntheory.invert = powmod, invert
    try:
        pk, sk = paillier.keygen(bits, rng_seed=7)
        rng = random.Random(11)
        msgs = [rng.randrange(pk.n) for _ in range(32)]
        cts = [paillier.encrypt(pk, m, rng) for m in msgs]

        t_keygen = _time(lambda: paillier.keygen(bits, rng_seed=rng.random()),
                         max(1, n_ops // 50))
        it = iter(range(10**9))
        t_enc = _time(lambda: paillier.encrypt(pk, msgs[next(it) % 32], rng), n_ops)
        t_dec = _time(lambda: paillier.decrypt(sk, cts[next(it) % 32]), n_ops)
        t_add = _time(lambda: paillier.add_ciphertexts(cts[next(it) % 32],
                                                       cts[(next(it) + 1) % 32],
                                                       pk), n_ops)
        print("%-8s keygen=%8.2f ms  encrypt=%8.3f ms  decrypt=%8.3f ms  add=%8.4f ms"
              % (name, t_keygen * 1e3, t_enc * 1e3, t_dec * 1e3, t_add * 1e3))
        return t_enc, t_dec
    finally:
        ntheory.powmod, ntheory.invert = saved


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--bits", type=int, default=512)
    ap.add_argument("--ops", type=int, default=200)
    args = ap.parse_args()

    print("key size: %d bits, %d ops per cell" % (args.bits, args.ops))
    py = bench_backend("python", ntheory.py_powmod, ntheory.py_invert,
                       args.bits, args.ops)
    if ntheory._gmpy2 is not None:
        gmp = bench_backend("gmpy2", ntheory.gmp_powmod, ntheory.gmp_invert,
                            args.bits, args.ops)
        print("speedup: encrypt %.1fx, decrypt %.1fx"
              % (py[0] / gmp[0], py[1] / gmp[1]))
    else:
        print("gmpy2 not importable; only the pure backend was measured")


if __name__ == "__main__":
    main()
