"""Scenario configuration: schema, validation, normalization, round-trip.

One YAML file describes a full experiment: receiver hardware, Eve's
measurement model, the scrambling policy, the honest channel, optimizer
settings, and the strategy space / constraint mode to search.  Loading
merges the file over the built-in defaults, validates every field with its
full path in error messages, rejects unknown keys, and keeps a normalized
(canonically ordered, fully expanded) copy whose YAML dump is stable —
loading a dump reproduces it byte for byte, and its hash identifies the
scenario in result files.
"""

from __future__ import annotations

import copy
import hashlib
import os
from dataclasses import dataclass

import numpy as np
import yaml

from .attack import EveMeasurementModel, HonestChannel, ScramblingPolicy
from .optimizer import (
    CONSTRAINT_MODES,
    OptimizerConfig,
    STRATEGY_SPACES,
    Scenario,
)
from .receiver import CLICK_MODELS, EfficiencyMap, ReceiverParams

ENV_CONFIG_PATH = "BB84_MISMATCH_CONFIG"

DEFAULT_CONFIG: dict = {
    "receiver": {
        "efficiency_map": {"diagonal": 0.1, "off_diagonal": 0.001},
        "dark_counts": 1e-6,
        "fidelity": 0.98,
        "click_model": "paper_approx",
    },
    "eve": {"p_correct": 0.5, "p_wrong": 0.0, "p_noncompat": 0.25},
    "scrambling": {"weights": [0.25, 0.25, 0.25, 0.25]},
    "channel": {"loss_db": 6.0, "losses": None, "alice_mu": 0.5, "nominal_eta": 0.1},
    "optimizer": {
        "restarts": 64,
        "penalty_init": 10.0,
        "penalty_growth": 10.0,
        "penalty_rounds": 6,
        "inner_tol": 1e-10,
        "feasibility_tol": 1e-6,
        "mu_max": 1e4,
        "seed": 2024,
        "warm_start": True,
        "match_per_pol_baseline": False,
    },
    "strategy_space": "generalized_32",
    "constraint_mode": "total_rate",
}


class ConfigError(ValueError):
    """Configuration problem, carrying the dotted path of the offending field."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


def _require_mapping(node, path: str) -> dict:
    if not isinstance(node, dict):
        raise ConfigError(path, f"expected a mapping, got {type(node).__name__}")
    return node


def _merge(defaults: dict, override: dict, path: str) -> dict:
    out = copy.deepcopy(defaults)
    for key, value in override.items():
        if key not in defaults:
            raise ConfigError(f"{path}.{key}" if path else key, "unknown key")
        child_path = f"{path}.{key}" if path else key
        # efficiency_map is replaced wholesale: its mapping forms are
        # alternatives, not defaults to merge into.
        if isinstance(defaults[key], dict) and key != "efficiency_map":
            out[key] = _merge(defaults[key], _require_mapping(value, child_path), child_path)
        else:
            out[key] = copy.deepcopy(value)
    return out


def _as_float(value, path: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(path, f"expected a number, got {value!r}")
    return float(value)


def _as_int(value, path: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(path, f"expected an integer, got {value!r}")
    return value


def _as_bool(value, path: str) -> bool:
    if not isinstance(value, bool):
        raise ConfigError(path, f"expected a boolean, got {value!r}")
    return value


def _float_list(value, length: int, path: str) -> list[float]:
    if not isinstance(value, (list, tuple)) or len(value) != length:
        raise ConfigError(path, f"expected a list of {length} numbers")
    return [_as_float(v, f"{path}[{i}]") for i, v in enumerate(value)]


def _normalize_efficiency_map(node, path: str) -> list[list[float]]:
    if isinstance(node, dict):
        keys = set(node)
        if keys == {"diagonal", "off_diagonal"}:
            diag = _as_float(node["diagonal"], f"{path}.diagonal")
            off = _as_float(node["off_diagonal"], f"{path}.off_diagonal")
            eta = EfficiencyMap.from_diag(diag, off)
        elif keys == {"uniform"}:
            eta = EfficiencyMap.uniform(_as_float(node["uniform"], f"{path}.uniform"))
        else:
            raise ConfigError(
                path, "mapping form must have keys {diagonal, off_diagonal} or {uniform}"
            )
        return [[float(x) for x in row] for row in eta.eta]
    if isinstance(node, list) and len(node) == 4:
        rows = [_float_list(row, 4, f"{path}[{i}]") for i, row in enumerate(node)]
        try:
            EfficiencyMap(np.array(rows))
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
        return rows
    raise ConfigError(path, "expected a 4x4 table or a {diagonal, off_diagonal}/{uniform} mapping")


def parse_loss_range(text: str) -> list[float]:
    """Losses from an ``A:B:STEP`` dB range; points are computed as A + i*STEP."""
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"loss range must look like A:B:STEP, got {text!r}")
    try:
        a, b, step = (float(p) for p in parts)
    except ValueError:
        raise ValueError(f"loss range must contain numbers, got {text!r}") from None
    if step <= 0:
        raise ValueError("loss range step must be positive")
    if b < a:
        raise ValueError("loss range end must not precede its start")
    losses = []
    i = 0
    while True:
        point = a + i * step
        if point > b + 1e-9:
            break
        losses.append(point)
        i += 1
    return losses


def _normalize_losses(node, path: str) -> list[float] | None:
    if node is None:
        return None
    if isinstance(node, str):
        try:
            losses = parse_loss_range(node)
        except ValueError as exc:
            raise ConfigError(path, str(exc)) from None
    elif isinstance(node, (list, tuple)):
        losses = [_as_float(v, f"{path}[{i}]") for i, v in enumerate(node)]
    else:
        losses = [_as_float(node, path)]
    for i, loss in enumerate(losses):
        if loss < 0:
            raise ConfigError(f"{path}[{i}]", "losses must be nonnegative")
    return losses


def normalize_data(data: dict | None) -> dict:
    """Merge over defaults, validate every field, return the canonical dict."""
    merged = _merge(DEFAULT_CONFIG, _require_mapping(data or {}, ""), "")

    rec = merged["receiver"]
    rec["efficiency_map"] = _normalize_efficiency_map(rec["efficiency_map"], "receiver.efficiency_map")
    dc = rec["dark_counts"]
    if isinstance(dc, (list, tuple)):
        rec["dark_counts"] = _float_list(dc, 4, "receiver.dark_counts")
    else:
        rec["dark_counts"] = [_as_float(dc, "receiver.dark_counts")] * 4
    rec["fidelity"] = _as_float(rec["fidelity"], "receiver.fidelity")
    if not isinstance(rec["click_model"], str) or rec["click_model"] not in CLICK_MODELS:
        raise ConfigError("receiver.click_model", f"must be one of {CLICK_MODELS}")
    try:
        ReceiverParams(np.array(rec["dark_counts"]), rec["fidelity"], rec["click_model"])
    except ValueError as exc:
        raise ConfigError("receiver", str(exc)) from None

    eve = merged["eve"]
    for key in ("p_correct", "p_wrong", "p_noncompat"):
        eve[key] = _as_float(eve[key], f"eve.{key}")
    try:
        EveMeasurementModel(eve["p_correct"], eve["p_wrong"], eve["p_noncompat"])
    except ValueError as exc:
        raise ConfigError("eve", str(exc)) from None

    scr = merged["scrambling"]
    scr["weights"] = _float_list(scr["weights"], 4, "scrambling.weights")
    try:
        ScramblingPolicy(np.array(scr["weights"]))
    except ValueError as exc:
        raise ConfigError("scrambling.weights", str(exc)) from None

    ch = merged["channel"]
    ch["loss_db"] = _as_float(ch["loss_db"], "channel.loss_db")
    ch["losses"] = _normalize_losses(ch["losses"], "channel.losses")
    ch["alice_mu"] = _as_float(ch["alice_mu"], "channel.alice_mu")
    ch["nominal_eta"] = _as_float(ch["nominal_eta"], "channel.nominal_eta")
    if ch["loss_db"] < 0:
        raise ConfigError("channel.loss_db", "must be nonnegative")
    if ch["alice_mu"] < 0:
        raise ConfigError("channel.alice_mu", "must be nonnegative")
    if not 0 < ch["nominal_eta"] <= 1:
        raise ConfigError("channel.nominal_eta", "must lie in (0, 1]")

    opt = merged["optimizer"]
    for key in ("restarts", "penalty_rounds", "seed"):
        opt[key] = _as_int(opt[key], f"optimizer.{key}")
    for key in ("penalty_init", "penalty_growth", "inner_tol", "feasibility_tol", "mu_max"):
        opt[key] = _as_float(opt[key], f"optimizer.{key}")
    for key in ("warm_start", "match_per_pol_baseline"):
        opt[key] = _as_bool(opt[key], f"optimizer.{key}")
    try:
        _optimizer_config_from(opt)
    except ValueError as exc:
        raise ConfigError("optimizer", str(exc)) from None

    if merged["strategy_space"] not in STRATEGY_SPACES:
        raise ConfigError("strategy_space", f"must be one of {STRATEGY_SPACES}")
    if merged["constraint_mode"] not in CONSTRAINT_MODES:
        raise ConfigError("constraint_mode", f"must be one of {CONSTRAINT_MODES}")

    # Rebuild in canonical key order.
    canonical = {
        "receiver": {k: rec[k] for k in ("efficiency_map", "dark_counts", "fidelity", "click_model")},
        "eve": {k: eve[k] for k in ("p_correct", "p_wrong", "p_noncompat")},
        "scrambling": {"weights": scr["weights"]},
        "channel": {k: ch[k] for k in ("loss_db", "losses", "alice_mu", "nominal_eta")},
        "optimizer": {
            k: opt[k]
            for k in (
                "restarts", "penalty_init", "penalty_growth", "penalty_rounds",
                "inner_tol", "feasibility_tol", "mu_max", "seed",
                "warm_start", "match_per_pol_baseline",
            )
        },
        "strategy_space": merged["strategy_space"],
        "constraint_mode": merged["constraint_mode"],
    }
    return canonical


def _optimizer_config_from(opt: dict) -> OptimizerConfig:
    return OptimizerConfig(
        restarts=opt["restarts"],
        penalty_init=opt["penalty_init"],
        penalty_growth=opt["penalty_growth"],
        penalty_rounds=opt["penalty_rounds"],
        inner_tol=opt["inner_tol"],
        feasibility_tol=opt["feasibility_tol"],
        mu_max=opt["mu_max"],
        seed=opt["seed"],
        match_per_pol_baseline=opt["match_per_pol_baseline"],
    )


@dataclass
class ScenarioConfig:
    """A validated scenario plus its canonical dict form."""

    params: ReceiverParams
    emap: EfficiencyMap
    eve: EveMeasurementModel
    policy: ScramblingPolicy
    loss_db: float
    losses: list[float] | None
    alice_mu: float
    nominal_eta: float
    optimizer: OptimizerConfig
    warm_start: bool
    strategy_space: str
    constraint_mode: str
    normalized: dict

    def scenario(self) -> Scenario:
        return Scenario(self.eve, self.params, self.emap, self.nominal_eta)

    def channel(self, loss_db: float | None = None) -> HonestChannel:
        return HonestChannel(self.loss_db if loss_db is None else loss_db, self.alice_mu)

    @property
    def sha256(self) -> str:
        return hashlib.sha256(dump_config(self.normalized).encode()).hexdigest()


def config_from_data(data: dict | None) -> ScenarioConfig:
    canonical = normalize_data(data)
    rec = canonical["receiver"]
    return ScenarioConfig(
        params=ReceiverParams(
            np.array(rec["dark_counts"]), rec["fidelity"], rec["click_model"]
        ),
        emap=EfficiencyMap(np.array(rec["efficiency_map"])),
        eve=EveMeasurementModel(**canonical["eve"]),
        policy=ScramblingPolicy(np.array(canonical["scrambling"]["weights"])),
        loss_db=canonical["channel"]["loss_db"],
        losses=canonical["channel"]["losses"],
        alice_mu=canonical["channel"]["alice_mu"],
        nominal_eta=canonical["channel"]["nominal_eta"],
        optimizer=_optimizer_config_from(canonical["optimizer"]),
        warm_start=canonical["optimizer"]["warm_start"],
        strategy_space=canonical["strategy_space"],
        constraint_mode=canonical["constraint_mode"],
        normalized=canonical,
    )


def load_config(path: str | None = None) -> ScenarioConfig:
    """Load a scenario from YAML; falls back to $BB84_MISMATCH_CONFIG, then defaults."""
    if path is None:
        path = os.environ.get(ENV_CONFIG_PATH) or None
    if path is None:
        return config_from_data({})
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read config {path!r}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"invalid YAML in {path!r}: {exc}") from None
    if data is None:
        data = {}
    return config_from_data(_require_mapping(data, "<root>"))


def dump_config(normalized: dict) -> str:
    """Canonical YAML text of a normalized config dict."""
    return yaml.safe_dump(normalized, sort_keys=False, default_flow_style=None)
