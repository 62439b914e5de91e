"""Command line front end.

Subcommands:

* ``baseline``    — honest sifted-rate targets over one or more loss values
* ``attack-eval`` — observables of a fixed strategy read from a YAML file
* ``optimize``    — full attack optimization at a single loss point
* ``sweep``       — optimization across a loss range, CSV + strategy files
* ``validate``    — Monte Carlo cross-check of the analytic model

Exit codes: 0 success, 2 configuration problem, 3 malformed input data,
4 optimization finished infeasible, 5 validation failure.

The scenario file is taken from ``--config`` or the ``BB84_MISMATCH_CONFIG``
environment variable; with neither, built-in defaults apply.  All numbers in
result files are written with full precision (``repr``) and result files
carry no timestamps, so reruns of a deterministic scenario are byte-identical.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np
import yaml

from . import __version__
from .attack import GeneralizedStrategy, Observables, RestrictedStrategy, honest_baseline, observables
from .config import ConfigError, ScenarioConfig, load_config, parse_loss_range
from .optimizer import (
    OptimizationResult,
    STRATEGY_SPACES,
    objective,
    optimize,
    sweep,
)
from .oracle import TrialConfig, validation_suite

SWEEP_COLUMNS = (
    "loss_db", "r_ab", "rate_total", "rate_h", "rate_v", "rate_d", "rate_a",
    "qber", "residual_max", "feasible", "restarts_used", "evaluations",
    "strategy_path",
)


class InputDataError(ValueError):
    """Problem in user-supplied data files (not the scenario config)."""


def _fnum(x) -> str:
    """Full-precision text for one CSV number; missing values become nan."""
    if x is None:
        return "nan"
    return repr(float(x))


def _fbool(x: bool) -> str:
    return "true" if x else "false"


def _to_plain(obj):
    """Recursively convert numpy scalars/arrays so YAML dumps stay portable."""
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _to_plain(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    return obj


def _dump_yaml(data: dict, path: str) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(_to_plain(data), fh, sort_keys=False, default_flow_style=None)


def _parse_losses_arg(text: str) -> list[float]:
    if ":" in text:
        return parse_loss_range(text)
    try:
        losses = [float(p) for p in text.split(",") if p.strip()]
    except ValueError:
        raise ConfigError("--losses", f"expected numbers, got {text!r}") from None
    if not losses:
        raise ConfigError("--losses", "no loss values given")
    if min(losses) < 0:
        raise ConfigError("--losses", "losses must be nonnegative")
    return losses


def _resolve_losses(args, cfg: ScenarioConfig, fallback_single: bool) -> list[float]:
    if getattr(args, "loss", None) is not None:
        if args.loss < 0:
            raise ConfigError("--loss", "must be nonnegative")
        return [args.loss]
    if getattr(args, "losses", None) is not None:
        return _parse_losses_arg(args.losses)
    if cfg.losses is not None:
        return list(cfg.losses)
    if fallback_single:
        return [cfg.loss_db]
    raise ConfigError("channel.losses", "no loss values: set channel.losses or pass --losses")


def _provenance(cfg: ScenarioConfig) -> dict:
    return {"config_sha256": cfg.sha256, "seed": cfg.optimizer.seed, "version": __version__}


# ---------------------------------------------------------------------------
# strategy files


def _strategy_to_data(strategy) -> dict:
    if isinstance(strategy, RestrictedStrategy):
        return {"space": "restricted_4", "mu": [float(m) for m in strategy.mu]}
    return {
        "space": "generalized_32",
        "mu": [[float(m) for m in row] for row in strategy.mu],
        "f": [[float(v) for v in row] for row in strategy.f],
    }


def _matrix_from(node, name: str, rows: int) -> np.ndarray:
    if not isinstance(node, list) or len(node) != rows:
        raise InputDataError(f"{name}: expected {rows} rows")
    out = np.empty((rows, 4))
    for i, row in enumerate(node):
        if not isinstance(row, list) or len(row) != 4:
            raise InputDataError(f"{name}[{i}]: expected 4 numbers")
        for j, v in enumerate(row):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InputDataError(f"{name}[{i}][{j}]: expected a number, got {v!r}")
            out[i, j] = float(v)
    return out


def load_strategy(path: str) -> RestrictedStrategy | GeneralizedStrategy:
    """Read a strategy YAML file; raises :class:`InputDataError` on any defect."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise InputDataError(f"cannot read strategy file {path!r}: {exc}") from None
    except yaml.YAMLError as exc:
        raise InputDataError(f"invalid YAML in strategy file {path!r}: {exc}") from None
    if not isinstance(data, dict):
        raise InputDataError("strategy file must contain a mapping")
    unknown = set(data) - {"space", "mu", "f"}
    if unknown:
        raise InputDataError(f"unknown strategy keys: {sorted(unknown)}")
    space = data.get("space")
    if space not in STRATEGY_SPACES:
        raise InputDataError(f"space: must be one of {STRATEGY_SPACES}, got {space!r}")
    if "mu" not in data:
        raise InputDataError("mu: required")
    if space == "restricted_4":
        if "f" in data:
            raise InputDataError("f: not allowed for restricted_4 strategies")
        mu = data["mu"]
        if not isinstance(mu, list) or len(mu) != 4:
            raise InputDataError("mu: expected 4 numbers")
        for i, v in enumerate(mu):
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                raise InputDataError(f"mu[{i}]: expected a number, got {v!r}")
        try:
            return RestrictedStrategy(np.array([float(v) for v in mu]))
        except ValueError as exc:
            raise InputDataError(f"mu: {exc}") from None
    if "f" not in data:
        raise InputDataError("f: required for generalized_32 strategies")
    mu = _matrix_from(data["mu"], "mu", 4)
    f = _matrix_from(data["f"], "f", 4)
    for i in range(4):
        total = float(f[i].sum())
        if abs(total - 1.0) > 1e-9:
            raise InputDataError(f"f[{i}]: row must sum to 1, got {total!r}")
        if float(f[i].min()) < 0:
            raise InputDataError(f"f[{i}]: entries must be nonnegative")
    try:
        return GeneralizedStrategy(mu, f)
    except ValueError as exc:
        raise InputDataError(str(exc)) from None


# ---------------------------------------------------------------------------
# subcommands


def _cmd_baseline(args) -> int:
    cfg = load_config(args.config)
    losses = _resolve_losses(args, cfg, fallback_single=True)
    lines = ["loss_db,r_ab"]
    for loss in losses:
        r_ab = honest_baseline(cfg.channel(loss), cfg.params, cfg.nominal_eta)
        lines.append(f"{_fnum(loss)},{_fnum(r_ab)}")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(text)
    return 0


def _eval_lines(cfg: ScenarioConfig, obs: Observables, residuals: np.ndarray) -> list[str]:
    resid_max = float(np.max(np.abs(residuals)))
    feasible = resid_max <= cfg.optimizer.feasibility_tol
    lines = [
        f"rate_total {_fnum(obs.rate_total)}",
        "rate_per_pol " + " ".join(_fnum(v) for v in obs.rate_per_pol),
        f"qber {_fnum(obs.qber)}",
        f"residual_max {_fnum(resid_max)}",
        f"feasible {_fbool(feasible)}",
    ]
    return lines


def _cmd_attack_eval(args) -> int:
    cfg = load_config(args.config)
    strategy = load_strategy(args.strategy)
    scenario = cfg.scenario()
    obs = observables(strategy, cfg.policy, cfg.eve, cfg.params, cfg.emap)
    _, residuals = objective(
        strategy, scenario, cfg.channel(), cfg.policy,
        cfg.constraint_mode, cfg.optimizer.match_per_pol_baseline,
    )
    for line in _eval_lines(cfg, obs, residuals):
        print(line)
    if args.out:
        resid_max = float(np.max(np.abs(residuals)))
        _dump_yaml(
            {
                "strategy": _strategy_to_data(strategy),
                "constraint_mode": cfg.constraint_mode,
                "loss_db": cfg.loss_db,
                "observables": obs.as_dict(),
                "residuals": [float(r) for r in residuals],
                "residual_max": resid_max,
                "feasible": bool(resid_max <= cfg.optimizer.feasibility_tol),
                "provenance": _provenance(cfg),
            },
            args.out,
        )
    return 0


def _result_data(cfg: ScenarioConfig, loss_db: float, result: OptimizationResult) -> dict:
    obs = observables(result.strategy, cfg.policy, cfg.eve, cfg.params, cfg.emap)
    r_ab = honest_baseline(cfg.channel(loss_db), cfg.params, cfg.nominal_eta)
    return {
        "space": cfg.strategy_space,
        "constraint_mode": cfg.constraint_mode,
        "loss_db": float(loss_db),
        "r_ab": float(r_ab),
        "qber": result.qber,
        "rate_total": obs.rate_total,
        "rate_per_pol": list(obs.rate_per_pol),
        "error_per_pol": list(obs.error_per_pol),
        "residuals": list(result.residuals),
        "residual_max": float(np.max(np.abs(result.residuals))),
        "feasible": result.feasible,
        "restarts_used": result.restarts_used,
        "evaluations": result.evaluations,
        "strategy": _strategy_to_data(result.strategy),
        "provenance": _provenance(cfg),
    }


def _cmd_optimize(args) -> int:
    cfg = load_config(args.config)
    result = optimize(
        cfg.strategy_space, cfg.constraint_mode, cfg.policy, cfg.channel(),
        cfg.optimizer, cfg.scenario(),
    )
    os.makedirs(args.out, exist_ok=True)
    _dump_yaml(_result_data(cfg, cfg.loss_db, result), os.path.join(args.out, "result.yaml"))
    _dump_yaml(_strategy_to_data(result.strategy), os.path.join(args.out, "strategy.yaml"))
    resid_max = float(np.max(np.abs(result.residuals)))
    print(
        f"loss_db {_fnum(cfg.loss_db)} qber {_fnum(result.qber)} "
        f"residual_max {_fnum(resid_max)} feasible {_fbool(result.feasible)}"
    )
    return 0 if result.feasible else 4


def _cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    losses = _resolve_losses(args, cfg, fallback_single=False)
    os.makedirs(args.out, exist_ok=True)

    def report(point):
        if point.result is None:
            print(f"loss_db {_fnum(point.loss_db)} failed: {point.error}", flush=True)
        else:
            print(
                f"loss_db {_fnum(point.loss_db)} qber {_fnum(point.result.qber)} "
                f"feasible {_fbool(point.result.feasible)}",
                flush=True,
            )

    points = sweep(
        losses, cfg.strategy_space, cfg.constraint_mode, cfg.policy, cfg.channel(),
        cfg.optimizer, cfg.scenario(),
        warm_start=cfg.warm_start, jobs=args.jobs, progress=report,
    )

    lines = [",".join(SWEEP_COLUMNS)]
    all_ok = True
    for point in points:
        r_ab = honest_baseline(cfg.channel(point.loss_db), cfg.params, cfg.nominal_eta)
        if point.result is None:
            all_ok = False
            lines.append(
                ",".join(
                    [_fnum(point.loss_db), _fnum(r_ab)]
                    + ["nan"] * 7
                    + [_fbool(False), "0", "0", ""]
                )
            )
            continue
        result = point.result
        all_ok = all_ok and result.feasible
        obs = observables(result.strategy, cfg.policy, cfg.eve, cfg.params, cfg.emap)
        name = f"strategy_loss_{_fnum(point.loss_db)}.yaml"
        _dump_yaml(_strategy_to_data(result.strategy), os.path.join(args.out, name))
        lines.append(
            ",".join(
                [
                    _fnum(point.loss_db),
                    _fnum(r_ab),
                    _fnum(obs.rate_total),
                    _fnum(obs.rate_per_pol[0]),
                    _fnum(obs.rate_per_pol[1]),
                    _fnum(obs.rate_per_pol[2]),
                    _fnum(obs.rate_per_pol[3]),
                    _fnum(result.qber),
                    _fnum(float(np.max(np.abs(result.residuals)))),
                    _fbool(result.feasible),
                    str(result.restarts_used),
                    str(result.evaluations),
                    name,
                ]
            )
        )
    with open(os.path.join(args.out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
    _dump_yaml(
        {**_provenance(cfg), "losses": [float(v) for v in losses]},
        os.path.join(args.out, "provenance.yaml"),
    )
    return 0 if all_ok else 4


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    TrialConfig(args.trials, 0)  # reuse its range checks on the trial count
    report = validation_suite(
        n_scenarios=args.scenarios,
        trials=args.trials,
        master_seed=cfg.optimizer.seed if args.seed is None else args.seed,
        z_threshold=args.z_threshold,
    )
    failed = [row["scenario"] for row in report["rows"] if not row["passed"]]
    print(
        f"scenarios {report['scenarios']} trials {report['trials']} "
        f"retried {report['retried']} failed {len(failed)} passed {_fbool(report['passed'])}"
    )
    if failed:
        print(f"failing scenarios: {failed}", file=sys.stderr)
    if args.out:
        _dump_yaml({**report, "provenance": _provenance(cfg)}, args.out)
    return 0 if report["passed"] else 5


# ---------------------------------------------------------------------------
# parser


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bb84-mismatch",
        description="Detector-efficiency-mismatch attacks on a BB84 receiver.",
        epilog="The scenario config comes from --config or $BB84_MISMATCH_CONFIG.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("baseline", help="honest sifted rates over loss values")
    p.add_argument("--config", default=None, help="scenario YAML file")
    p.add_argument("--loss", type=float, default=None, help="single loss in dB")
    p.add_argument("--losses", default=None, help="A:B:STEP range or comma list, in dB")
    p.add_argument("--out", default=None, help="also write the CSV here")
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("attack-eval", help="evaluate a fixed strategy file")
    p.add_argument("--config", default=None, help="scenario YAML file")
    p.add_argument("--strategy", required=True, help="strategy YAML file")
    p.add_argument("--out", default=None, help="write a YAML report here")
    p.set_defaults(func=_cmd_attack_eval)

    p = sub.add_parser("optimize", help="optimize the attack at one loss point")
    p.add_argument("--config", default=None, help="scenario YAML file")
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=_cmd_optimize)

    p = sub.add_parser("sweep", help="optimize across a loss range")
    p.add_argument("--config", default=None, help="scenario YAML file")
    p.add_argument("--losses", default=None, help="A:B:STEP range or comma list, in dB")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--jobs", type=int, default=1, help="worker processes (warm_start must be off)")
    p.set_defaults(func=_cmd_sweep)

    p = sub.add_parser("validate", help="Monte Carlo check of the analytic model")
    p.add_argument("--config", default=None, help="scenario YAML file")
    p.add_argument("--scenarios", type=int, default=100, help="number of random scenarios")
    p.add_argument("--trials", type=int, default=1_000_000, help="pulses per scenario")
    p.add_argument("--seed", type=int, default=None, help="master seed (default: optimizer seed)")
    p.add_argument("--z-threshold", type=float, default=4.0, help="pass/fail z-score bound")
    p.add_argument("--out", default=None, help="write the YAML report here")
    p.set_defaults(func=_cmd_validate)

    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except InputDataError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
