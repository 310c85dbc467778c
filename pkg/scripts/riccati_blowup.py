"""Integrate the CPRS Riccati equation from a few starting values and report blow-up points."""

import argparse

import numpy as np

from swanson_ssusy.grid import Grid
from swanson_ssusy.models import CPRSChoice, riccati_integrate


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--kappa", type=float, default=0.0)
    parser.add_argument("--alpha", type=float, default=0.0)
    parser.add_argument("--x0", type=float, default=1.0)
    parser.add_argument("--starts", type=float, nargs="+", default=[-2.0, 0.0, 1.0, 5.0])
    parser.add_argument("--n", type=int, default=4000)
    args = parser.parse_args()

    ch = CPRSChoice(args.kappa, args.alpha)
    g = Grid(0.2, 6.0, args.n)
    print("varrho0,valid_fraction,blowup_x,residual")
    for v0 in args.starts:
        sol = riccati_integrate(ch, args.x0, v0, g)
        bx = ";".join(f"{b:.6f}" for b in sol.blowup_x) or "-"
        print(f"{v0},{np.mean(sol.valid):.3f},{bx},{sol.residual:.2e}")


if __name__ == "__main__":
    main()
