"""Time the compiled and pure-Python kernel backends on assembly-sized inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from rbiga import kernels
from rbiga.assembly import patch_quadrature
from rbiga.case import Case


def inputs(seed=0):
    rng = np.random.default_rng(seed)
    p = 3
    knots = np.r_[np.zeros(p), np.linspace(0.0, 1.0, 65), np.ones(p)]
    xs = rng.random(20000)
    vals = [rng.random((16, 4, p + 1)) for _ in range(3)]
    phi = rng.random((4000, 27, 27))
    wq = rng.random((4000, 27))
    return knots, p, xs, vals, phi, wq


def cases(mod, data):
    knots, p, xs, vals, phi, wq = data
    return {
        "find_spans": lambda: mod.find_spans(knots, p, xs),
        "basis_funs_ders": lambda: mod.basis_funs_ders(knots, p, xs, 1),
        "tensor_basis": lambda: mod.tensor_basis(vals),
        "element_matrices": lambda: mod.element_matrices(phi, phi, wq),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    data = inputs()
    names = sorted(kernels.BACKENDS)
    timings = {}
    for name in names:
        for kern, fn in cases(kernels.get_backend(name), data).items():
            timings[kern, name] = min(timeit.repeat(fn, number=1, repeat=args.repeat))
    print(f"{'kernel':<18}" + "".join(f"{n:>12}" for n in names) + f"{'speedup':>10}")
    for kern in cases(kernels.get_backend(names[0]), data):
        row = [timings[kern, n] for n in names]
        sp = (timings[kern, "python"] / timings[kern, "cython"]
              if "cython" in names else float("nan"))
        print(f"{kern:<18}" + "".join(f"{t * 1e3:>10.2f}ms" for t in row) + f"{sp:>9.2f}x")

    # end to end: quadrature setup for the pipeline preset's patches
    case = Case.preset("pipeline", 1)
    t = min(timeit.repeat(lambda: [patch_quadrature(p, g) for p, g in
                                   zip(case.domain.patches, case.domain.glue)],
                          number=1, repeat=args.repeat))
    print(f"pipeline level-1 quadrature setup ({kernels.BACKEND} backend): {t:.3f}s")


if __name__ == "__main__":
    main()
