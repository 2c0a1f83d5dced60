"""Command-line front end: presets, config files, CSV/JSON emission.

Subcommands map one-to-one onto the library surface::

    estimate    one estimator run            -> report.json
    levels      per-level statistics sweep   -> levels_<scheme>.csv + summary
    sweep-T     variance growth in T         -> variance_vs_T_<scheme>.csv + summary
    sweep-eps   cost versus accuracy         -> cost_vs_eps_<scheme>.csv + summary
    fit-lambda  convergence-rate fit         -> lambda_star.json + envelope csv
    find-h0     base-step search over T      -> h0_table.csv + summary

Configuration comes from an optional JSON file plus flags (flags win),
or from a named preset. Unknown config keys are rejected so presets
cannot drift silently. Every output embeds the effective configuration
and seed, and reruns with the same seed are byte-identical for any
worker count.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import diagnostics
from .errors import (AdaptivityFailureError, ConfigError, ErgodicMlmcError,
                     InvalidDataError, NumericOverflowError)
from .estimators import MlmcConfig, estimate
from .models import SpringPolicy, get_model
from .sampling import DEFAULT_MASTER_SEED

__all__ = ["RunConfig", "parse_config", "run", "main", "PRESETS"]

OUT_DIR_ENV = "ERGODIC_MLMC_OUT"

EXIT_CONFIG = 2
EXIT_INVALID_ARGUMENT = 3
EXIT_OVERFLOW = 4
EXIT_ADAPTIVITY = 5
EXIT_INVALID_DATA = 6

SUBCOMMANDS = ("estimate", "levels", "sweep-T", "sweep-eps", "fit-lambda",
               "find-h0")

_CONFIG_KEYS = {
    "model", "estimator", "spring", "schemes", "h0", "delta0", "eps",
    "eps_grid", "lambda_star", "mu_star", "T", "T_grid", "levels", "level",
    "paths", "n_per_level", "seed", "workers", "out", "paper_scale", "x0",
    "n_warm", "bias_constant", "max_paths", "window", "burn_in", "threshold",
    "j_min", "j_max",
}


@dataclass
class RunConfig:
    """Fully resolved CLI run description."""

    subcommand: str
    model: str = "double_well"
    schemes: List[dict] = field(default_factory=lambda: [
        {"label": "com", "estimator": "mlmc_com", "spring": "const:1"}])
    h0: Optional[float] = None
    delta0: Optional[float] = None
    eps: Optional[float] = None
    eps_grid: Optional[List[float]] = None
    lambda_star: Optional[float] = None
    mu_star: float = 1.0
    T: Optional[float] = None
    T_grid: Optional[List[float]] = None
    levels: Optional[int] = None
    level: Optional[int] = None
    paths: Optional[int] = None
    n_per_level: Optional[List[int]] = None
    seed: int = DEFAULT_MASTER_SEED
    workers: int = 1
    out: Optional[str] = None
    paper_scale: bool = False
    x0: Optional[List[float]] = None
    n_warm: int = 100
    bias_constant: float = 1.0
    max_paths: int = 10_000_000
    window: Optional[float] = None
    burn_in: Optional[float] = None
    threshold: Optional[float] = None
    j_min: int = 0
    j_max: int = 16
    preset: Optional[str] = None

    def effective_dict(self) -> dict:
        d = asdict(self)
        return {k: v for k, v in d.items() if v is not None}


# ---------------------------------------------------------------------------
# presets: desk-scale mirrors of the reference experiments; --paper-scale
# restores the published sample counts and depths (expect long runtimes).

PRESETS = {
    "ou-estimate": {
        "subcommand": "estimate", "model": "ou",
        "schemes": [{"label": "com", "estimator": "mlmc_com",
                     "spring": "const:1"}],
        "h0": 0.25, "eps": 0.02, "lambda_star": 1.0, "mu_star": 1.0,
        "paper": {},
    },
    "fig-dw-levels": {
        "subcommand": "levels", "model": "double_well", "delta0": 1.0,
        "T": 5.0, "levels": 6, "paths": 2000,
        "schemes": [
            {"label": "standard", "estimator": "mlmc_standard",
             "spring": "none"},
            {"label": "com_const", "estimator": "mlmc_com",
             "spring": "const:1"},
            {"label": "com_adaptive", "estimator": "mlmc_com",
             "spring": "adaptive"},
        ],
        "paper": {"paths": 10000},
    },
    "fig-lorenz-levels": {
        "subcommand": "levels", "model": "lorenz", "delta0": 1.0,
        "T": 10.0, "levels": 1, "paths": 100,
        "schemes": [
            {"label": "standard", "estimator": "mlmc_standard",
             "spring": "none"},
            {"label": "com_const", "estimator": "mlmc_com",
             "spring": "const:10"},
        ],
        "paper": {"paths": 10000, "levels": 6},
    },
    "fig-var-vs-T": {
        "subcommand": "sweep-T", "model": "truncated_lorenz", "h0": 2.0 ** -9,
        "level": 4, "T_grid": [2.0, 4.0, 6.0, 8.0], "paths": 2000,
        "schemes": [
            {"label": "standard", "estimator": "mlmc_standard",
             "spring": "none"},
            {"label": "com_s10", "estimator": "mlmc_com",
             "spring": "const:10"},
        ],
        "paper": {"level": 8, "paths": 10000,
                  "T_grid": [float(t) for t in range(1, 21)]},
    },
    "fig-h0-vs-T": {
        "subcommand": "find-h0", "model": "truncated_lorenz", "h0": 2.0 ** -9,
        "T_grid": [4.0, 8.0, 16.0], "paths": 400, "j_max": 16,
        "x0": [13.9, 13.0, 34.7],
        "schemes": [{"label": "com_s10", "estimator": "mlmc_com",
                     "spring": "const:10"}],
        "paper": {"paths": 10000, "T_grid": [float(t) for t in range(2, 21, 2)]},
    },
    "fit-lambda-star": {
        "subcommand": "fit-lambda", "model": "truncated_lorenz",
        "h0": 2.0 ** -7, "T": 20.0, "paths": 2000,
        "schemes": [{"label": "mc", "estimator": "mc", "spring": "none"}],
        "paper": {"paths": 10000},
    },
}


def parse_spring(spec: str) -> SpringPolicy:
    """Parse a spring spec string: none | const:<S> | adaptive."""
    if spec == "none":
        return SpringPolicy.none()
    if spec == "adaptive":
        return SpringPolicy(kind="adaptive", rule=lambda x: x)  # bound later
    if spec.startswith("const:"):
        try:
            return SpringPolicy.constant(float(spec[len("const:"):]))
        except ValueError:
            raise ConfigError(f"bad spring coefficient in {spec!r}") from None
    raise ConfigError(
        f"bad spring spec {spec!r}; expected none, const:<S> or adaptive")


def _resolve_spring(spec: str, model_name: str) -> SpringPolicy:
    if spec == "adaptive":
        model = get_model(model_name)
        if model.spring_rule is None:
            raise ConfigError(
                f"model {model_name!r} has no adaptive spring rule")
        return SpringPolicy.adaptive(model.spring_rule)
    return parse_spring(spec)


def _float_list(text: str) -> List[float]:
    try:
        return [float(v) for v in text.split(",") if v != ""]
    except ValueError:
        raise ConfigError(f"expected comma-separated numbers, got {text!r}") \
            from None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="ergodic-mlmc",
        description="Invariant-measure estimators and diagnostics for "
                    "ergodic SDEs.")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", help="JSON config file (flags override it)")
    p.add_argument("--preset", choices=sorted(PRESETS),
                   help="named experiment preset")
    p.add_argument("--model")
    p.add_argument("--estimator",
                   choices=("mc", "mlmc_standard", "mlmc_com"))
    p.add_argument("--spring", help="none | const:<S> | adaptive")
    p.add_argument("--h0", type=float, help="uniform base step")
    p.add_argument("--delta0", type=float, help="adaptive base parameter")
    p.add_argument("--eps", help="target accuracy, or comma grid for sweep-eps")
    p.add_argument("--lambda-star", dest="lambda_star", type=float)
    p.add_argument("--mu-star", dest="mu_star", type=float)
    p.add_argument("--T", dest="T", help="horizon, or comma grid for "
                                         "sweep-T / find-h0")
    p.add_argument("--levels", type=int, help="max level (sweeps) or plan "
                                              "depth (estimate)")
    p.add_argument("--paths", help="paths per level; comma list gives an "
                                   "explicit per-level plan")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--out", help=f"output directory (default ${OUT_DIR_ENV} "
                                 "or ./out)")
    p.add_argument("--paper-scale", action="store_true", default=None,
                   help="use the published sample counts and depths")
    p.add_argument("--x0", help="comma-separated initial state override")
    p.add_argument("--n-warm", dest="n_warm", type=int)
    p.add_argument("--bias-constant", dest="bias_constant", type=float)
    p.add_argument("--max-paths", dest="max_paths", type=int)
    p.add_argument("--window", type=float)
    p.add_argument("--burn-in", dest="burn_in", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--j-min", dest="j_min", type=int)
    p.add_argument("--j-max", dest="j_max", type=int)
    return p


def parse_config(argv: Optional[List[str]] = None) -> RunConfig:
    """Merge preset, config file and flags into a validated RunConfig."""
    args = _build_parser().parse_args(argv)

    merged: dict = {}
    if args.preset:
        preset = dict(PRESETS[args.preset])
        paper = preset.pop("paper", {})
        sub = preset.pop("subcommand")
        if sub != args.subcommand:
            raise ConfigError(
                f"preset {args.preset!r} belongs to subcommand {sub!r}")
        merged.update(preset)
        if args.paper_scale:
            merged.update(paper)
    if args.config:
        try:
            with open(args.config) as fh:
                file_cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config file: {exc}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(file_cfg) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(
                f"unknown config keys: {sorted(unknown)}; "
                f"allowed: {sorted(_CONFIG_KEYS)}")
        merged.update(file_cfg)

    # flags override file and preset values
    flag_map = {
        "model": args.model, "h0": args.h0, "delta0": args.delta0,
        "lambda_star": args.lambda_star, "mu_star": args.mu_star,
        "levels": args.levels, "seed": args.seed, "workers": args.workers,
        "out": args.out, "n_warm": args.n_warm,
        "bias_constant": args.bias_constant, "max_paths": args.max_paths,
        "window": args.window, "burn_in": args.burn_in,
        "threshold": args.threshold, "j_min": args.j_min, "j_max": args.j_max,
    }
    for key, val in flag_map.items():
        if val is not None:
            merged[key] = val
    if args.paper_scale is not None:
        merged["paper_scale"] = args.paper_scale
    if args.estimator or args.spring:
        scheme = {"label": args.estimator or "run",
                  "estimator": args.estimator or "mlmc_com",
                  "spring": args.spring or "none"}
        merged["schemes"] = [scheme]
    if args.eps is not None:
        grid = _float_list(args.eps)
        if args.subcommand == "sweep-eps":
            merged["eps_grid"] = grid
        elif len(grid) == 1:
            merged["eps"] = grid[0]
        else:
            merged["eps_grid"] = grid
    if args.T is not None:
        grid = _float_list(args.T)
        if args.subcommand in ("sweep-T", "find-h0") or len(grid) > 1:
            merged["T_grid"] = grid
        else:
            merged["T"] = grid[0]
    if args.paths is not None:
        counts = [int(v) for v in _float_list(args.paths)]
        if len(counts) == 1:
            merged["paths"] = counts[0]
        else:
            merged["n_per_level"] = counts
    if args.x0 is not None:
        merged["x0"] = _float_list(args.x0)

    # normalize file-style aliases
    if "eps_grid" in merged and merged.get("eps") is not None \
            and args.subcommand != "sweep-eps":
        raise ConfigError("give either eps or eps_grid, not both")
    if merged.get("T") is not None and merged.get("eps") is not None:
        raise ConfigError("horizon T and target eps are mutually exclusive; "
                          "T is derived from (eps, lambda_star, mu_star)")

    cfg = RunConfig(subcommand=args.subcommand, preset=args.preset,
                    **{k: v for k, v in merged.items() if k in
                       RunConfig.__dataclass_fields__ and k != "subcommand"})
    if cfg.subcommand == "sweep-T" and cfg.level is None:
        cfg.level = cfg.levels  # --levels doubles as the fixed level here
    _validate_run_config(cfg)
    return cfg


def _validate_run_config(cfg: RunConfig) -> None:
    if cfg.subcommand not in SUBCOMMANDS:
        raise ConfigError(f"unknown subcommand {cfg.subcommand!r}")
    get_model(cfg.model)
    if not cfg.schemes:
        raise ConfigError("at least one scheme is required")
    for scheme in cfg.schemes:
        if set(scheme) - {"label", "estimator", "spring"}:
            raise ConfigError(f"bad scheme entry {scheme!r}")
        _resolve_spring(scheme.get("spring", "none"), cfg.model)
    if cfg.subcommand == "estimate":
        if cfg.eps is None and cfg.T is None:
            raise ConfigError("estimate needs eps or an explicit T")
        if cfg.T is not None and cfg.paths is None and cfg.n_per_level is None:
            raise ConfigError("an explicit estimate plan needs --paths")
        if len(cfg.schemes) != 1:
            raise ConfigError("estimate runs a single scheme")
    if cfg.subcommand == "levels":
        if cfg.levels is None or cfg.paths is None:
            raise ConfigError("levels needs --levels and --paths")
    if cfg.subcommand == "sweep-T":
        if cfg.level is None or not cfg.T_grid or cfg.paths is None:
            raise ConfigError("sweep-T needs level, a T grid and --paths")
    if cfg.subcommand == "sweep-eps":
        if not cfg.eps_grid:
            raise ConfigError("sweep-eps needs an eps grid")
        if cfg.lambda_star is None:
            raise ConfigError("sweep-eps needs --lambda-star")
    if cfg.subcommand == "fit-lambda":
        if cfg.h0 is None or cfg.T is None or cfg.paths is None:
            raise ConfigError("fit-lambda needs --h0, --T and --paths")
    if cfg.subcommand == "find-h0":
        if not cfg.T_grid or cfg.paths is None:
            raise ConfigError("find-h0 needs a T grid and --paths")


# ---------------------------------------------------------------------------
# output helpers


def _fmt(value) -> str:
    if value is None:
        return "nan"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    v = float(value)
    return f"{v:.17g}"


def _config_header_lines(cfg: RunConfig) -> List[str]:
    eff = cfg.effective_dict()
    return [f"# {k} = {json.dumps(eff[k], sort_keys=True)}"
            for k in sorted(eff)]


def write_csv(path: Path, columns: List[str], rows: List[List],
              cfg: RunConfig) -> None:
    lines = _config_header_lines(cfg)
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(_fmt(v) for v in row))
    path.write_text("\n".join(lines) + "\n")


def write_json(path: Path, payload: dict, cfg: RunConfig) -> None:
    doc = {"config": cfg.effective_dict(), **payload}
    path.write_text(json.dumps(doc, indent=2, sort_keys=True,
                               allow_nan=True) + "\n")


def _out_dir(cfg: RunConfig) -> Path:
    out = cfg.out or os.environ.get(OUT_DIR_ENV) or "out"
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _mlmc_config(cfg: RunConfig, scheme: dict, **overrides) -> MlmcConfig:
    base = dict(
        model=cfg.model,
        estimator=scheme["estimator"],
        spring=_resolve_spring(scheme.get("spring", "none"), cfg.model),
        h0=cfg.h0, delta0=cfg.delta0,
        eps=cfg.eps, lambda_star=cfg.lambda_star, mu_star=cfg.mu_star,
        horizon=cfg.T, n_per_level=cfg.n_per_level, seed=cfg.seed,
        n_warm=cfg.n_warm, bias_constant=cfg.bias_constant,
        max_paths_per_level=cfg.max_paths, workers=cfg.workers,
        x0_override=cfg.x0)
    base.update(overrides)
    return MlmcConfig(**base)


LEVELS_COLUMNS = ["level", "h", "N", "mean", "variance", "kurtosis",
                  "mean_cost", "divergence_prob"]


def _stats_row(st) -> List:
    return [st.level, st.h, st.n, st.mean, st.variance, st.kurtosis,
            st.mean_cost, st.divergence_fraction]


# ---------------------------------------------------------------------------
# subcommand runners


def _run_estimate(cfg: RunConfig, out: Path) -> None:
    scheme = cfg.schemes[0]
    plan = cfg.n_per_level
    if plan is None and cfg.T is not None:
        plan = [cfg.paths] * ((cfg.levels or 0) + 1)
    config = _mlmc_config(cfg, scheme, n_per_level=plan)
    report = estimate(config)
    write_json(out / "report.json", {"report": report.to_dict()}, cfg)
    write_csv(out / "report_levels.csv", LEVELS_COLUMNS,
              [_stats_row(s) for s in report.levels], cfg)
    print(f"estimate = {report.estimate:.6g} "
          f"(stat err {report.statistical_error:.2g}, "
          f"cost {report.total_cost})")


def _run_levels(cfg: RunConfig, out: Path) -> None:
    summary = {}
    for scheme in cfg.schemes:
        config = _mlmc_config(cfg, scheme, eps=None, lambda_star=None,
                              n_per_level=None)
        stats = diagnostics.level_sweep(config, cfg.levels, cfg.paths,
                                        horizon=cfg.T)
        rows = [_stats_row(s) for s in stats]
        write_csv(out / f"levels_{scheme['label']}.csv", LEVELS_COLUMNS,
                  rows, cfg)
        coupled = [s for s in stats if s.level >= 1 and s.variance > 0]
        entry = {"levels": [s.to_dict() for s in stats]}
        if len(coupled) >= 3:
            fit = diagnostics.fit_rate([s.level for s in coupled],
                                       [s.variance for s in coupled],
                                       transform="log2-y")
            entry["variance_rate"] = fit.to_dict()
        summary[scheme["label"]] = entry
        print(f"{scheme['label']}: levels 0..{cfg.levels} done")
    write_json(out / "levels_summary.json", {"schemes": summary}, cfg)


def _run_sweep_T(cfg: RunConfig, out: Path) -> None:
    summary = {}
    for scheme in cfg.schemes:
        config = _mlmc_config(cfg, scheme, eps=None, lambda_star=None,
                              n_per_level=None, horizon=cfg.T_grid[-1])
        stats = diagnostics.variance_vs_horizon(
            config, cfg.level, cfg.T_grid, cfg.paths)
        rows = [[T] + _stats_row(s) for T, s in zip(cfg.T_grid, stats)]
        write_csv(out / f"variance_vs_T_{scheme['label']}.csv",
                  ["T"] + LEVELS_COLUMNS, rows, cfg)
        variances = [s.variance for s in stats]
        entry = {"T": list(cfg.T_grid), "variance": variances}
        if all(v > 0 for v in variances):
            fit = diagnostics.fit_rate(cfg.T_grid, variances,
                                       transform="log-y")
            entry["log_variance_slope"] = fit.to_dict()
        summary[scheme["label"]] = entry
        print(f"{scheme['label']}: V(T) = "
              + ", ".join(f"{v:.3g}" for v in variances))
    write_json(out / "variance_vs_T_summary.json", {"schemes": summary}, cfg)


def _run_sweep_eps(cfg: RunConfig, out: Path) -> None:
    summary = {}
    for scheme in cfg.schemes:
        config = _mlmc_config(cfg, scheme, eps=cfg.eps_grid[0],
                              horizon=None, n_per_level=None)
        rows = diagnostics.cost_vs_epsilon(config, cfg.eps_grid)
        csv_rows = [[r["eps"], r["total_cost"], r["estimate"], r["horizon"],
                     r["max_level"]] for r in rows]
        write_csv(out / f"cost_vs_eps_{scheme['label']}.csv",
                  ["eps", "total_cost", "estimate", "horizon", "max_level"],
                  csv_rows, cfg)
        entry: dict = {"rows": rows}
        try:
            fit = diagnostics.cost_exponent(rows)
            entry["cost_exponent"] = fit.to_dict()
            print(f"{scheme['label']}: cost exponent {fit.slope:.2f}")
        except InvalidDataError:
            pass
        summary[scheme["label"]] = entry
    write_json(out / "cost_vs_eps_summary.json", {"schemes": summary}, cfg)


def _run_fit_lambda(cfg: RunConfig, out: Path) -> None:
    config = _mlmc_config(cfg, {"label": "mc", "estimator": "mc",
                                "spring": "none"},
                          eps=None, lambda_star=None, horizon=cfg.T,
                          n_per_level=None)
    lam, fit = diagnostics.fit_lambda_star(
        config, cfg.T, cfg.paths, window=cfg.window, burn_in=cfg.burn_in)
    write_json(out / "lambda_star.json",
               {"lambda_star": lam, "fit": fit.to_dict()}, cfg)
    rows = [[x, y] for x, y in zip(fit.x, fit.y)]
    write_csv(out / "lambda_star_envelope.csv", ["t", "envelope_gap"],
              rows, cfg)
    print(f"lambda_star = {lam:.4f}")


def _run_find_h0(cfg: RunConfig, out: Path) -> None:
    scheme = cfg.schemes[0]
    rows_out = []
    results = {}
    for T in cfg.T_grid:
        config = _mlmc_config(cfg, scheme, eps=None, lambda_star=None,
                              horizon=T, n_per_level=None)
        res = diagnostics.find_h0(config, T, n=cfg.paths,
                                  j_min=cfg.j_min, j_max=cfg.j_max)
        results[str(T)] = {
            "h0": res.h0,
            "rows": res.rows,
        }
        rows_out.append([T, res.h0 if res.h0 is not None else float("nan")])
        print(f"T={T}: h0 = {res.h0}")
    summary: dict = {"results": results}
    hs = [r[1] for r in rows_out]
    if all(math.isfinite(h) for h in hs) and len(hs) >= 3:
        fit = diagnostics.fit_rate(np.log(cfg.T_grid), np.array(hs),
                                   transform="log-y")
        summary["log_h0_vs_log_T_slope"] = fit.to_dict()
        print(f"log h0 vs log T slope: {fit.slope:.3f}")
    write_csv(out / "h0_table.csv", ["T", "h0"], rows_out, cfg)
    write_json(out / "h0_summary.json", summary, cfg)


def run(cfg: RunConfig) -> int:
    """Execute one subcommand; returns the process exit status."""
    out = _out_dir(cfg)
    runners = {
        "estimate": _run_estimate,
        "levels": _run_levels,
        "sweep-T": _run_sweep_T,
        "sweep-eps": _run_sweep_eps,
        "fit-lambda": _run_fit_lambda,
        "find-h0": _run_find_h0,
    }
    runners[cfg.subcommand](cfg, out)
    return 0


def main(argv: Optional[List[str]] = None) -> int:
    try:
        cfg = parse_config(argv)
        return run(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericOverflowError as exc:
        print(f"numeric overflow: {exc}", file=sys.stderr)
        return EXIT_OVERFLOW
    except AdaptivityFailureError as exc:
        print(f"adaptivity failure: {exc}", file=sys.stderr)
        return EXIT_ADAPTIVITY
    except InvalidDataError as exc:
        print(f"invalid data: {exc}", file=sys.stderr)
        return EXIT_INVALID_DATA
    except ValueError as exc:
        print(f"invalid argument: {exc}", file=sys.stderr)
        return EXIT_INVALID_ARGUMENT


if __name__ == "__main__":
    sys.exit(main())
