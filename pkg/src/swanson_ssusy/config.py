"""Run configuration: loading, overrides, validation and model setup.

A config is a JSON object::

    {
      "model": {"builtin": "cprs", "params": {"kappa": 0.0, "alpha": 0.0}},
      "grid": {"x_min": -10, "x_max": 10, "n": 4000},
      "k": 5,
      "checks": ["constraint", "intertwine"],
      "tolerances": {"intertwine": 1e-3},
      "buffer": 5
    }

or, for a custom model, ``"model": {"omega": 1, "alpha": 0.1, "beta": -0.1,
"a": "1/sqrt(2)", "b": "x/sqrt(2)", "params": {...}}`` optionally with
``"a_tilde"``, ``"b1"``, ``"b2"`` and ``"quasi": {"kind": ..., "lambda"|"c"|"mu": ...}``.
"""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable

import numpy as np

from .expr import Const, Expr, ExprError, ExprSyntaxError, bind, parse, simplify
from .grid import Field, Grid, GridError
from .models import (
    ChoiceError,
    CPRSChoice,
    IsotonicChoice,
    cprs_audit,
    cprs_family,
    cprs_operator,
    isotonic_audit,
    isotonic_family,
)
from .operators import BandedOperator, LadderSpec, OperatorError
from .ssusy import FactorPair, QuasiError, QuasiSpec, build_triplet
from .swanson import ModelError, SwansonModel, SwansonParams, fit_quadratic, hermitian_matrix, rho_weight

SCHEMA_VERSION = 1

CHECKS = {
    # name: (default tolerance or None for measured-only, needs)
    "commutator": (1e-3, "model"),
    "metric": (1e-3, "model"),
    "similarity": (1e-3, "model"),
    "constraint": (None, "pair"),
    "intertwine": (1e-3, "pair"),
    "intertwine_plus": (1e-3, "pair"),
    "intertwine_minus": (1e-3, "pair"),
    "quasi_plus": (1e-3, "pair"),
    "quasi_minus": (1e-3, "pair"),
    "nilpotency": (0.0, "pair"),
    "isospectral_plus_bar": (1e-3, "pair"),
    "isospectral_bar_minus": (1e-3, "pair"),
    "pseudo_adjoint": (1e-13, "pair"),
    "pseudo_intertwine_plus": (1e-3, "pair"),
    "pseudo_intertwine_minus": (1e-3, "pair"),
    "pseudo_quasi_plus": (1e-3, "pair"),
    "pseudo_quasi_minus": (1e-3, "pair"),
    "rho_condition": (None, "pair"),
}

TOP_LEVEL = {"model", "grid", "k", "checks", "tolerances", "buffer", "operators", "audit", "convergence", "output"}
AUDIT_IDS = {
    "isotonic": [
        "rho_closed_form",
        "v_plus_closed_form",
        "v_plus_similarity_route",
        "v_plus_pair_route",
        "v_minus_closed_form",
        "v_bar_closed_form",
        "constraint",
        "fit_p",
        "fit_q",
        "fit_r",
        "fit_s",
        "fit_t",
    ],
    "cprs": [
        "v_plus_closed_form",
        "b1_quoted_vs_exact",
        "v_plus_exact_pair_route",
        "v_plus_quoted_pair_route",
        "v_minus_quoted_pair_route",
        "v_bar_quoted_pair_route",
        "constraint",
        "v_plus_model_b_route",
    ],
}


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# Loading and overrides


def load_config(path: str | Path) -> dict:
    text = Path(path).read_text()
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as err:
        raise ConfigError(f"{path}: line {err.lineno}, column {err.colno}: {err.msg}") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: top level must be an object")
    return cfg


def _parse_value(text: str) -> Any:
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply ``key=value``; dotted keys address nested blocks, bare keys default to model parameters."""
    if "=" not in assignment:
        raise ConfigError(f"--set expects key=value, got {assignment!r}")
    key, raw = assignment.split("=", 1)
    key = key.strip()
    if not key:
        raise ConfigError(f"--set has an empty key: {assignment!r}")
    value = _parse_value(raw.strip())
    parts = key.split(".")
    if len(parts) == 1 and key not in TOP_LEVEL:
        model = cfg.setdefault("model", {})
        parts = ["model", "params", key] if "builtin" in model else ["model", key]
    node = cfg
    for p in parts[:-1]:
        nxt = node.setdefault(p, {})
        if not isinstance(nxt, dict):
            raise ConfigError(f"--set {key}: {p!r} is not a block")
        node = nxt
    node[parts[-1]] = value
    return cfg


# --------------------------------------------------------------------------
# Setup


@dataclass
class Setup:
    name: str
    grid: Grid
    model: SwansonModel | None = None
    pair: FactorPair | None = None
    quasi: QuasiSpec | None = None
    operators: dict[str, Callable[[Grid], BandedOperator]] = field(default_factory=dict)
    default_operators: list[str] = field(default_factory=lambda: ["h_plus"])
    references: dict[str, list[float]] = field(default_factory=dict)
    default_checks: list[str] = field(default_factory=list)
    audit: Callable[[Grid], dict] | None = None
    audit_ids: list[str] = field(default_factory=list)
    gap_window: tuple[float, float] | None = None

    def rho(self, g: Grid) -> Field:
        if self.model is None:
            return Field(g, np.ones(g.n))
        return rho_weight(self.model, g)


def _num(block: dict, key: str, where: str, default: Any = None) -> float:
    if key not in block:
        if default is None:
            raise ConfigError(f"{where}: missing required key {key!r}")
        return float(default)
    v = block[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where}.{key}: expected a number, got {v!r}")
    return float(v)


def _expr(block: dict, key: str, where: str, params: dict) -> Expr:
    text = block.get(key)
    if not isinstance(text, str):
        raise ConfigError(f"{where}.{key}: expected an expression string, got {text!r}")
    try:
        return simplify(bind(parse(text), params))
    except ExprSyntaxError as err:
        raise ConfigError(f"{where}.{key}: {err}") from None
    except ExprError as err:
        raise ConfigError(f"{where}.{key}: {err}") from None


def _grid(cfg: dict, default: Grid | None) -> Grid:
    block = cfg.get("grid")
    if block is None:
        if default is None:
            raise ConfigError("missing grid block {x_min, x_max, n}")
        return default
    if not isinstance(block, dict):
        raise ConfigError("grid: expected an object {x_min, x_max, n}")
    base = default.to_dict() if default is not None else {}
    merged = {**base, **block}
    for key in ("x_min", "x_max", "n"):
        if key not in merged:
            raise ConfigError(f"grid: missing required key {key!r}")
    n = merged["n"]
    if isinstance(n, bool) or not isinstance(n, int) and not (isinstance(n, float) and n.is_integer()):
        raise ConfigError(f"grid.n: expected an integer, got {n!r}")
    try:
        return Grid(_num(merged, "x_min", "grid"), _num(merged, "x_max", "grid"), int(n))
    except GridError as err:
        raise ConfigError(f"grid: {err}") from None


def _quasi(block: Any, where: str) -> QuasiSpec:
    if not isinstance(block, dict) or "kind" not in block:
        raise ConfigError(f"{where}: expected {{kind, lambda|c|mu}}")
    kind = block["kind"]
    try:
        if kind == "perfect_square":
            return QuasiSpec.perfect_square(_num(block, "lambda", where))
        if kind == "split_c":
            return QuasiSpec.split_c(_num(block, "c", where))
        if kind == "general":
            return QuasiSpec.general(_num(block, "lambda", where), _num(block, "mu", where))
    except QuasiError as err:
        raise ConfigError(f"{where}: {err}") from None
    raise ConfigError(f"{where}.kind: unknown kind {kind!r} (perfect_square, split_c, general)")


def _triplet_operators(pair: FactorPair, quasi: QuasiSpec) -> dict[str, Callable[[Grid], BandedOperator]]:
    tri = build_triplet(pair, quasi)
    return {
        "h_plus": lambda g: tri.matrices(g)["h_plus"],
        "h_bar": lambda g: tri.matrices(g)["h_bar"],
        "h_minus": lambda g: tri.matrices(g)["h_minus"],
    }


PAIR_CHECKS = [
    "constraint",
    "intertwine",
    "intertwine_plus",
    "intertwine_minus",
    "quasi_plus",
    "quasi_minus",
    "nilpotency",
    "isospectral_plus_bar",
    "isospectral_bar_minus",
    "pseudo_adjoint",
    "pseudo_intertwine_plus",
    "pseudo_intertwine_minus",
    "pseudo_quasi_plus",
    "pseudo_quasi_minus",
    "rho_condition",
]
MODEL_CHECKS = ["commutator", "metric", "similarity"]


def _setup_cprs(params: dict, cfg: dict) -> Setup:
    _only(params, {"kappa", "alpha"}, "model.params")
    ch = CPRSChoice(_num(params, "kappa", "model.params", 0.0), _num(params, "alpha", "model.params", 0.0))
    fam = cprs_family(ch)
    g = _grid(cfg, ch.default_grid())
    ops = _triplet_operators(fam.pair, fam.quasi)
    ops["h_plus"] = lambda gg: cprs_operator(ch, gg)
    return Setup(
        name="cprs",
        grid=g,
        model=fam.model if ch.alpha != 0 else None,
        pair=fam.pair,
        quasi=fam.quasi,
        operators=ops,
        default_operators=["h_plus"],
        references={"h_plus": [-3.0, 3.0, 5.0, 7.0, 9.0, 11.0, 13.0, 15.0]},
        default_checks=["constraint", "nilpotency", "pseudo_adjoint"],
        audit=lambda gg: cprs_audit(ch, gg),
        audit_ids=AUDIT_IDS["cprs"],
        gap_window=(-2.9, 2.9),
    )


def _setup_isotonic(params: dict, cfg: dict) -> Setup:
    _only(params, {"alpha", "beta", "c", "d", "omega_tilde", "lambda"}, "model.params")
    where = "model.params"
    ch = IsotonicChoice(
        _num(params, "alpha", where, 0.0),
        _num(params, "beta", where, 0.0),
        _num(params, "c", where, 0.0),
        _num(params, "d", where, 1.0),
        _num(params, "omega_tilde", where, 1.0),
        _num(params, "lambda", where, 0.0),
    )
    fam = isotonic_family(ch)
    g = _grid(cfg, Grid(0.2, 5.0, 2000))
    ops = _triplet_operators(fam.pair, fam.quasi) if fam.pair is not None else {}
    ops["h_plus"] = lambda gg: hermitian_matrix(fam.model, gg)
    return Setup(
        name="isotonic",
        grid=g,
        model=fam.model,
        pair=fam.pair,
        quasi=fam.quasi,
        operators=ops,
        default_operators=["h_plus"],
        default_checks=MODEL_CHECKS + (["constraint", "nilpotency", "pseudo_adjoint"] if fam.pair else []),
        audit=lambda gg: isotonic_audit(ch, gg),
        audit_ids=AUDIT_IDS["isotonic"],
    )


def _setup_chain(params: dict, cfg: dict) -> Setup:
    _only(params, {"c", "epsilon"}, "model.params")
    c = _num(params, "c", "model.params", -2.0)
    eps = _num(params, "epsilon", "model.params", 0.0)
    x = parse("x")
    pair = FactorPair(Const(1.0), x, simplify(x + eps))
    quasi = QuasiSpec.split_c(c)
    g = _grid(cfg, Grid(-10.0, 10.0, 2000))
    return Setup(
        name="oscillator_chain",
        grid=g,
        pair=pair,
        quasi=quasi,
        operators=_triplet_operators(pair, quasi),
        default_operators=["h_plus", "h_bar", "h_minus"],
        references={
            "h_plus": [2.0 * n + c / 2.0 for n in range(8)],
            "h_bar": [2.0 * n + 2.0 + c / 2.0 for n in range(8)] if eps == 0 else [],
        },
        default_checks=[k for k in PAIR_CHECKS],
    )


def _setup_swanson_oscillator(params: dict, cfg: dict) -> Setup:
    _only(params, {"omega", "alpha", "beta"}, "model.params")
    where = "model.params"
    try:
        sp_ = SwansonParams(_num(params, "omega", where, 1.0), _num(params, "alpha", where, 0.1), _num(params, "beta", where, -0.1))
    except ModelError as err:
        raise ConfigError(f"{where}: {err}") from None
    model = SwansonModel(sp_, LadderSpec(simplify(parse("1/sqrt(2)")), simplify(parse("x/sqrt(2)"))))
    g = _grid(cfg, Grid(-10.0, 10.0, 2000))
    pair, quasi, spacing, offset = oscillator_pair(model)
    ops = _triplet_operators(pair, quasi)
    ops["h_plus"] = lambda gg: hermitian_matrix(model, gg)
    return Setup(
        name="swanson_oscillator",
        grid=g,
        model=model,
        pair=pair,
        quasi=quasi,
        operators=ops,
        default_operators=["h_plus", "H_similarity"],
        references={
            "h_plus": [spacing * (n + 0.5) + offset for n in range(8)],
            "H_similarity": [spacing * (n + 0.5) + offset for n in range(8)],
        },
        default_checks=MODEL_CHECKS + PAIR_CHECKS,
    )


def oscillator_pair(model: SwansonModel) -> tuple[FactorPair, QuasiSpec, float, float]:
    """Factor pair b1 = kx, b2 = -kx reproducing V+ = A x^2 + C for a constant-mass model.

    Returns the pair, PerfectSquare(C + a~ k), the level spacing and the offset C.
    """
    pts = np.linspace(-3.0, 3.0, 13)
    (A, B, C), misfit = fit_quadratic(model.V_plus, pts)
    (_, _, mass), _ = fit_quadratic(model.a_tilde_sq, pts)
    if A <= 0 or abs(B) > 1e-9 or misfit > 1e-9 * (1 + abs(A)):
        raise ConfigError("swanson_oscillator needs V+ = A x^2 + C with A > 0")
    at = float(np.sqrt(mass))
    k = float(np.sqrt(A))
    x = parse("x")
    pair = FactorPair(Const(at), simplify(k * x), simplify(-k * x))
    return pair, QuasiSpec.perfect_square(C + at * k), 2.0 * float(np.sqrt(mass * A)), C


def _setup_custom(block: dict, cfg: dict) -> Setup:
    params = block.get("params", {})
    if not isinstance(params, dict):
        raise ConfigError("model.params: expected an object")
    _only(block, {"omega", "alpha", "beta", "a", "b", "params", "a_tilde", "b1", "b2", "quasi"}, "model")
    model = None
    if any(k in block for k in ("omega", "alpha", "beta", "a", "b")):
        try:
            sp_ = SwansonParams(_num(block, "omega", "model"), _num(block, "alpha", "model"), _num(block, "beta", "model"))
        except ModelError as err:
            raise ConfigError(f"model: {err}") from None
        model = SwansonModel(sp_, LadderSpec(_expr(block, "a", "model", params), _expr(block, "b", "model", params)))
    pair = quasi = None
    if "b1" in block or "b2" in block:
        if "a_tilde" in block:
            at = _expr(block, "a_tilde", "model", params)
        elif model is not None:
            at = model.a_tilde
        else:
            raise ConfigError("model: a pair needs a_tilde or a Swanson model (omega, alpha, beta, a, b)")
        pair = FactorPair(at, _expr(block, "b1", "model", params), _expr(block, "b2", "model", params))
        quasi = _quasi(block.get("quasi"), "model.quasi")
    if model is None and pair is None:
        raise ConfigError("model: give a builtin name, a Swanson model (omega, alpha, beta, a, b) or a pair (a_tilde, b1, b2, quasi)")
    g = _grid(cfg, None)
    ops: dict[str, Callable[[Grid], BandedOperator]] = {}
    if pair is not None:
        ops.update(_triplet_operators(pair, quasi))
    if model is not None:
        ops["h_plus"] = lambda gg: hermitian_matrix(model, gg)
    checks = (MODEL_CHECKS if model is not None else []) + (PAIR_CHECKS if pair is not None else [])
    return Setup(
        name="custom",
        grid=g,
        model=model,
        pair=pair,
        quasi=quasi,
        operators=ops,
        default_operators=["h_plus"] + (["H_similarity"] if model is not None else []),
        default_checks=checks,
    )


BUILTINS = {
    "cprs": _setup_cprs,
    "isotonic": _setup_isotonic,
    "oscillator_chain": _setup_chain,
    "swanson_oscillator": _setup_swanson_oscillator,
}


def _only(block: dict, allowed: set[str], where: str) -> None:
    extra = sorted(set(block) - allowed)
    if extra:
        raise ConfigError(f"{where}: unknown key(s) {extra}; allowed: {sorted(allowed)}")


def build_setup(cfg: dict) -> Setup:
    _only(cfg, TOP_LEVEL, "config")
    model = cfg.get("model")
    if not isinstance(model, dict):
        raise ConfigError("missing model block (builtin name or custom definition)")
    try:
        if "builtin" in model:
            _only(model, {"builtin", "params"}, "model")
            name = model["builtin"]
            if name not in BUILTINS:
                raise ConfigError(f"model.builtin: unknown model {name!r}; choose from {sorted(BUILTINS)}")
            params = model.get("params", {})
            if not isinstance(params, dict):
                raise ConfigError("model.params: expected an object")
            setup = BUILTINS[name](params, cfg)
        else:
            setup = _setup_custom(model, cfg)
    except (ChoiceError, ModelError, QuasiError, OperatorError) as err:
        raise ConfigError(f"model: {err}") from None
    return setup


def resolve_checks(cfg: dict, setup: Setup) -> list[tuple[str, float | None]]:
    names = cfg.get("checks", setup.default_checks)
    if not isinstance(names, list) or not all(isinstance(n, str) for n in names):
        raise ConfigError("checks: expected a list of check names")
    seen = set()
    for n in names:
        if n not in CHECKS:
            raise ConfigError(f"checks: unknown check {n!r}; known: {sorted(CHECKS)}")
        if n in seen:
            raise ConfigError(f"checks: {n!r} listed twice")
        seen.add(n)
        need = CHECKS[n][1]
        if need == "model" and setup.model is None:
            raise ConfigError(f"checks: {n!r} needs a Swanson model (omega, alpha, beta, a, b)")
        if need == "pair" and setup.pair is None:
            raise ConfigError(f"checks: {n!r} needs a factor pair (b1, b2, quasi)")
    tols = cfg.get("tolerances", {})
    if not isinstance(tols, dict):
        raise ConfigError("tolerances: expected an object")
    for n in tols:
        if n not in CHECKS:
            raise ConfigError(f"tolerances: unknown check {n!r}")
    out = []
    for n in names:
        tol = tols.get(n, CHECKS[n][0])
        if tol is not None and (isinstance(tol, bool) or not isinstance(tol, (int, float))):
            raise ConfigError(f"tolerances.{n}: expected a number or null")
        out.append((n, None if tol is None else float(tol)))
    return out


def normalized(cfg: dict) -> dict:
    """Deep copy used as the config echo in reports."""
    return copy.deepcopy(cfg)
