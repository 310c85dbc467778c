"""Observed convergence order of the lowest levels for the built-in spectra."""

import argparse
import json

from swanson_ssusy.expr import parse
from swanson_ssusy.grid import Grid
from swanson_ssusy.models import CPRSChoice, IsotonicChoice, cprs_operator, isotonic_family
from swanson_ssusy.operators import LadderSpec
from swanson_ssusy.spectral import convergence_study
from swanson_ssusy.swanson import SwansonModel, SwansonParams, hermitian_matrix


def builders() -> dict:
    osc = SwansonModel(SwansonParams(1.0, 0.1, -0.1), LadderSpec(parse("1/sqrt(2)"), parse("x/sqrt(2)")))
    iso = isotonic_family(IsotonicChoice(alpha=0.2, beta=-0.1, c=1.0, d=1.0)).model
    return {
        "harmonic": (lambda g: hermitian_matrix(osc, g), (-10.0, 10.0)),
        "isotonic": (lambda g: hermitian_matrix(iso, g), (0.2, 5.0)),
        "cprs": (lambda g: cprs_operator(CPRSChoice(), g), (-10.0, 10.0)),
    }


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--sizes", type=int, nargs="+", default=[1000, 2000, 4000])
    parser.add_argument("-k", type=int, default=4)
    parser.add_argument("--json", action="store_true", help="print the full studies as JSON")
    args = parser.parse_args()

    out = {}
    for name, (build, dom) in builders().items():
        out[name] = convergence_study(build, [Grid(*dom, n) for n in args.sizes], args.k)
    if args.json:
        print(json.dumps(out, indent=2))
        return
    for name, study in out.items():
        orders = " ".join(f"{lv['order']:.4f}" for lv in study["levels"])
        print(f"{name:10s} {orders}")


if __name__ == "__main__":
    main()
