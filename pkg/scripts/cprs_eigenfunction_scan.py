"""Eigen-residual of the transported CPRS eigenfunctions against grid size.

The residual of an exact eigenfunction under the 3-point operator is its
truncation error, so it falls as h^2; this prints where it crosses 1e-5.
"""

import argparse

import numpy as np

from swanson_ssusy.grid import Grid
from swanson_ssusy.models import CPRSChoice, cprs_eigenfunction, cprs_operator, cprs_reference, eigen_residual


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000, 8000, 16000])
    parser.add_argument("--levels", type=int, nargs="+", default=[0, 3, 4])
    parser.add_argument("--length", type=float, default=10.0)
    args = parser.parse_args()

    ch = CPRSChoice()
    print("n," + ",".join(f"phi_{k}" for k in args.levels))
    prev = None
    for n in args.sizes:
        g = Grid(-args.length, args.length, n)
        A = cprs_operator(ch, g)
        row = np.array([eigen_residual(A, cprs_eigenfunction(ch, k, g), cprs_reference(k).energy) for k in args.levels])
        ratio = "" if prev is None else "  ratio " + " ".join(f"{r:.2f}" for r in prev / row)
        print(f"{n}," + ",".join(f"{r:.3e}" for r in row) + ratio)
        prev = row


if __name__ == "__main__":
    main()
