"""Time the compiled and pure-Python scan kernels on the same inputs.

    python benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from mambalab import Rng, kernels


def cases(rng):
    n, L = 16, 1024
    A = rng.normal(0, 1, (n, n)) / (2 * np.sqrt(n))
    B, C, x, h0 = rng.normal(0, 1, n), rng.normal(0, 1, n), rng.normal(0, 1, L), np.zeros(n)
    ker = kernels.BACKENDS["python"].krylov(A, B, C, L)[1]
    Ls, D, N = 1024, 16, 8
    dA = rng.uniform(0.5, 0.99, (Ls, D, N))
    dBx, Cs, gy = rng.normal(0, 1, (Ls, D, N)), rng.normal(0, 1, (Ls, N)), rng.normal(0, 1, (Ls, D))
    return {
        f"lti_scan n={n} L={L}": lambda m: m.lti_scan(A, B, C, x, h0),
        f"krylov n={n} L={L}": lambda m: m.krylov(A, B, C, L),
        f"causal_conv L={L}": lambda m: m.causal_conv(ker, x),
        f"diag_scan_fwd L={Ls} D={D} N={N}": lambda m: m.diag_scan_fwd(dA, dBx, Cs),
        f"diag_scan_bwd L={Ls} D={D} N={N}": lambda m: m.diag_scan_bwd(dA, Cs, gy),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    names = list(kernels.BACKENDS)
    print(f"{'kernel':36s}" + "".join(f"{n:>12s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in cases(Rng(42)).items():
        best = {}
        for name, mod in kernels.BACKENDS.items():
            fn(mod)
            best[name] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        row = f"{label:36s}" + "".join(f"{best[n] * 1e3:10.3f}ms" for n in names)
        if "compiled" in best:
            row += f"{best['python'] / best['compiled']:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
