"""Command-line front end: ``spectrum``, ``verify``, ``audit`` and ``convergence``.

Exit codes: 0 success (or measured-only), 1 a thresholded check failed, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import platform
import sys
from datetime import datetime, timezone
from typing import Sequence

import numpy as np

from . import __version__
from .config import (
    SCHEMA_VERSION,
    ConfigError,
    Setup,
    apply_override,
    build_setup,
    load_config,
    normalized,
    resolve_checks,
)
from .expr import ExprError
from .grid import Grid
from .operators import DEFAULT_BUFFER, commutator_residual
from .pseudo import report as pseudo_report
from .pseudo import sector_from_weight
from .spectral import (
    SpectralError,
    convergence_study,
    eigen_symmetric,
    eigen_via_similarity,
    spectrum_compare,
    sturm_count,
)
from .ssusy import build_triplet, constraint_report, verify as ssusy_verify
from .swanson import metric_residual, similarity_matrix, similarity_residual

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _provenance(g: Grid) -> dict:
    return {
        "version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "grid": g.to_dict(),
        "python": platform.python_version(),
        "numpy": np.__version__,
    }


def _report(command: str, cfg: dict, setup: Setup) -> dict:
    return {
        "schema": "swanson-ssusy/report",
        "schema_version": SCHEMA_VERSION,
        "command": command,
        "model": setup.name,
        "config": normalized(cfg),
        "checks": [],
        "provenance": _provenance(setup.grid),
    }


def _int(cfg: dict, key: str, default: int) -> int:
    v = cfg.get(key, default)
    if isinstance(v, bool) or not isinstance(v, int) or v < 0:
        raise ConfigError(f"{key}: expected a non-negative integer, got {v!r}")
    return v


def _operator(setup: Setup, name: str, g: Grid, k: int):
    if name == "H_similarity":
        if setup.model is None:
            raise ConfigError("operators: H_similarity needs a Swanson model")
        return eigen_via_similarity(similarity_matrix(setup.model, g), setup.rho(g), k)
    if name not in setup.operators:
        raise ConfigError(f"operators: {name!r} not available for model {setup.name}; have {sorted(setup.operators)}")
    return eigen_symmetric(setup.operators[name](g), k)


# --------------------------------------------------------------------------
# Commands


def cmd_spectrum(cfg: dict) -> tuple[dict, int]:
    setup = build_setup(cfg)
    g = setup.grid
    k = _int(cfg, "k", 5)
    names = cfg.get("operators", setup.default_operators)
    if not isinstance(names, list):
        raise ConfigError("operators: expected a list")
    rep = _report("spectrum", cfg, setup)
    rep["spectra"] = {}
    for name in names:
        res = _operator(setup, name, g, k)
        entry = res.to_dict()
        ref = setup.references.get(name)
        if ref:
            m = min(len(ref), k)
            entry["reference"] = ref[:m]
            entry["max_reference_deviation"] = float(np.max(np.abs(res.eigenvalues[:m] - np.asarray(ref[:m])))) if m else 0.0
        if name == "h_plus" and setup.gap_window is not None:
            A = setup.operators["h_plus"](g)
            lo, hi = setup.gap_window
            count = sturm_count(A.diagonal(0), A.diagonal(1), hi) - sturm_count(A.diagonal(0), A.diagonal(1), lo)
            entry["gap_window"] = {"interval": [lo, hi], "count": int(count)}
        rep["spectra"][name] = entry
    return rep, EXIT_OK


def _status(value: float, tol: float | None) -> str:
    if tol is None:
        return "measured"
    return "pass" if value <= tol else "fail"


def cmd_verify(cfg: dict) -> tuple[dict, int]:
    setup = build_setup(cfg)
    g = setup.grid
    buffer = _int(cfg, "buffer", DEFAULT_BUFFER)
    checks = resolve_checks(cfg, setup)
    rep = _report("verify", cfg, setup)
    names = {n for n, _ in checks}
    values: dict[str, float] = {}
    extra: dict[str, dict] = {}

    if setup.model is not None:
        if "commutator" in names:
            values["commutator"] = commutator_residual(setup.model.ladder, g, buffer)
        if "metric" in names:
            values["metric"] = metric_residual(setup.model, g, buffer)
        if "similarity" in names:
            values["similarity"] = similarity_residual(setup.model, g, buffer)
    if setup.pair is not None:
        p, q = setup.pair, setup.quasi
        if names & {"intertwine", "intertwine_plus", "intertwine_minus", "quasi_plus", "quasi_minus", "nilpotency"}:
            values.update({k: v for k, v in ssusy_verify(p, q, g, buffer).items() if isinstance(v, float)})
        if "constraint" in names:
            cr = constraint_report(p, q, g)
            values["constraint"] = cr.max_abs
            extra["constraint"] = cr.to_dict()
        if names & {"isospectral_plus_bar", "isospectral_bar_minus"}:
            mats = build_triplet(p, q).matrices(g)
            k = _int(cfg, "k", 5)
            spec = {n: eigen_symmetric(mats[n], k) for n in ("h_plus", "h_bar", "h_minus")}
            tol = dict(checks)
            for name, (s1, s2) in {
                "isospectral_plus_bar": ("h_plus", "h_bar"),
                "isospectral_bar_minus": ("h_bar", "h_minus"),
            }.items():
                if name in names:
                    t = tol[name] if tol[name] is not None else 1e-3
                    cmp = spectrum_compare(spec[s1], spec[s2], t, allow_missing=1)
                    values[name] = cmp.max_deviation if cmp.ok else float("inf")
                    extra[name] = cmp.to_dict()
        if any(n.startswith("pseudo_") or n == "rho_condition" for n in names):
            sector = sector_from_weight(setup.rho(g), p, q, g, setup.model.V_plus if setup.model else None)
            pr = pseudo_report(sector, q, buffer)
            values.update({k: float(v) for k, v in pr.items() if k in names})
            extra["pseudo"] = {k: v for k, v in pr.items() if k not in names}
    failed = False
    for name, tol in checks:
        v = float(values[name])
        status = _status(v, tol)
        failed |= status == "fail"
        entry = {"name": name, "value": v if np.isfinite(v) else str(v), "tolerance": tol, "status": status}
        if name in extra:
            entry["details"] = extra[name]
        rep["checks"].append(entry)
    if "pseudo" in extra:
        rep["pseudo_details"] = extra["pseudo"]
        if extra["pseudo"].get("rho_condition_flag"):
            rep["warnings"] = ["cond(D(rho)) exceeds 1e8: pseudo-sector residuals are untrustworthy, truncate the domain"]
    rep["buffer"] = buffer
    return rep, EXIT_FAIL if failed else EXIT_OK


def cmd_audit(cfg: dict) -> tuple[dict, int]:
    setup = build_setup(cfg)
    if setup.audit is None:
        raise ConfigError(f"audit: model {setup.name!r} has no audit; use a builtin (isotonic, cprs)")
    block = cfg.get("audit", {})
    if not isinstance(block, dict):
        raise ConfigError("audit: expected an object {formulas: [...]}")
    wanted = block.get("formulas", setup.audit_ids)
    if not isinstance(wanted, list):
        raise ConfigError("audit.formulas: expected a list of formula ids")
    for f in wanted:
        if f not in setup.audit_ids:
            raise ConfigError(f"audit.formulas: unknown formula id {f!r}; known: {setup.audit_ids}")
    result = setup.audit(setup.grid)
    result["entries"] = [e for e in result["entries"] if e["formula_id"] in wanted]
    rep = _report("audit", cfg, setup)
    rep["audit"] = result
    rep["checks"] = [
        {"name": e["formula_id"], "value": e["max_dev"], "tolerance": None, "status": "measured"} for e in result["entries"]
    ]
    return rep, EXIT_OK


def cmd_convergence(cfg: dict) -> tuple[dict, int]:
    setup = build_setup(cfg)
    block = cfg.get("convergence", {})
    if not isinstance(block, dict):
        raise ConfigError("convergence: expected an object {n: [...], operator, k}")
    ns = block.get("n", [1000, 2000, 4000])
    if not isinstance(ns, list) or not all(isinstance(n, int) and not isinstance(n, bool) for n in ns):
        raise ConfigError("convergence.n: expected a list of integers")
    name = block.get("operator", "h_plus")
    if name not in setup.operators:
        raise ConfigError(f"convergence.operator: {name!r} not available; have {sorted(setup.operators)}")
    k = block.get("k", cfg.get("k", 5))
    if isinstance(k, bool) or not isinstance(k, int) or k < 1:
        raise ConfigError(f"convergence.k: expected a positive integer, got {k!r}")
    g = setup.grid
    try:
        grids = [Grid(g.x_min, g.x_max, n) for n in ns]
        study = convergence_study(setup.operators[name], grids, k, setup.references.get(name))
    except SpectralError as err:
        raise ConfigError(f"convergence: {err}") from None
    rep = _report("convergence", cfg, setup)
    rep["convergence"] = {"operator": name, **study}
    rep["checks"] = [
        {"name": f"order_{lv['index']}", "value": lv["order"], "tolerance": None, "status": "measured"}
        for lv in study["levels"]
    ]
    return rep, EXIT_OK


COMMANDS = {
    "spectrum": cmd_spectrum,
    "verify": cmd_verify,
    "audit": cmd_audit,
    "convergence": cmd_convergence,
}


# --------------------------------------------------------------------------
# Output


def to_csv(rep: dict) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if rep["command"] == "spectrum":
        w.writerow(["operator", "index", "eigenvalue"])
        for name, entry in rep["spectra"].items():
            for i, v in enumerate(entry["eigenvalues"]):
                w.writerow([name, i, repr(v)])
    elif rep["command"] == "convergence":
        conv = rep["convergence"]
        w.writerow(["index"] + [f"n={g['n']}" for g in conv["grids"]] + ["order"])
        for lv in conv["levels"]:
            w.writerow([lv["index"]] + [repr(v) for v in lv["eigenvalues"]] + [repr(lv["order"])])
    else:
        w.writerow(["name", "value", "tolerance", "status"])
        for c in rep["checks"]:
            w.writerow([c["name"], repr(c["value"]), "" if c["tolerance"] is None else repr(c["tolerance"]), c["status"]])
    return buf.getvalue()


def render_report(rep: dict, fmt: str) -> str:
    if fmt == "csv":
        return to_csv(rep)
    return json.dumps(rep, indent=2, sort_keys=False) + "\n"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="swanson-ssusy", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        p = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        p.add_argument("--config", help="JSON run configuration")
        p.add_argument("--model", help="builtin model name (cprs, isotonic, oscillator_chain, swanson_oscillator)")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config entry")
        p.add_argument("--output", help="write the report here instead of stdout")
        p.add_argument("--format", choices=["json", "csv"], help="report format (default json)")
    return parser


def run(argv: Sequence[str] | None = None) -> tuple[dict | None, int, str]:
    """Parse arguments and run; returns (report, exit code, rendered text or error message)."""
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config) if args.config else {}
        if args.model:
            cfg["model"] = {"builtin": args.model, "params": {}}
        for s in args.set:
            apply_override(cfg, s)
        out = cfg.get("output", {})
        if not isinstance(out, dict):
            raise ConfigError("output: expected an object {format, path}")
        fmt = args.format or out.get("format", "json")
        if fmt not in ("json", "csv"):
            raise ConfigError(f"output.format: expected json or csv, got {fmt!r}")
        rep, code = COMMANDS[args.command](cfg)
    except (ConfigError, ExprError, FileNotFoundError) as err:
        return None, EXIT_CONFIG, f"config error: {err}"
    text = render_report(rep, fmt)
    path = args.output or out.get("path")
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return rep, code, text if not path else ""


def main(argv: Sequence[str] | None = None) -> int:
    rep, code, text = run(argv)
    if code == EXIT_CONFIG:
        print(text, file=sys.stderr)
    elif text:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    raise SystemExit(main())
