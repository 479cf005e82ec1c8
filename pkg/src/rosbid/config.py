"""Experiment configuration: a flat TOML file with one nested table.

Example::

    policy = "approx_ros"
    horizons = [100, 400, 1600]
    trials = 50
    seed = 7
    output_dir = "out"

    [distribution]
    kind = "uniform_second_price"

Every key is validated up front with the offending key path in the error
message; unknown keys are rejected rather than ignored.  The environment
variable ROSBID_SEED, when set, overrides the seed from the file.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, fields
from typing import Mapping, Optional

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .policies import BUDGETED_KINDS, PolicyKind
from .simulate import (
    DISTRIBUTION_KINDS,
    ORACLE_CHOICES,
    Distribution,
    distribution_to_dict,
)

SEED_ENV_VAR = "ROSBID_SEED"

_MISSING = object()


class ConfigError(ValueError):
    """Invalid or missing configuration; the message names the key."""


@dataclass
class ExperimentConfig:
    policy: str
    distribution: Distribution
    horizons: list[int]
    trials: int
    seed: int
    output_dir: str
    rho: Optional[float] = None
    target_ros: float = 1.0
    alpha_override: Optional[float] = None
    eta_override: Optional[float] = None
    emit_trajectories: bool = False
    oracle: str = "auto"
    intermingled: bool = False

    def to_dict(self, include_output_dir: bool = True) -> dict:
        out = {
            "policy": self.policy,
            "distribution": distribution_to_dict(self.distribution),
            "horizons": list(self.horizons),
            "trials": self.trials,
            "seed": self.seed,
            "rho": self.rho,
            "target_ros": self.target_ros,
            "alpha_override": self.alpha_override,
            "eta_override": self.eta_override,
            "emit_trajectories": self.emit_trajectories,
            "oracle": self.oracle,
            "intermingled": self.intermingled,
        }
        if include_output_dir:
            out["output_dir"] = self.output_dir
        return out

    def config_hash(self) -> str:
        """sha256 over the resolved settings, excluding the output path so
        the same experiment hashes identically wherever it is written."""
        payload = json.dumps(self.to_dict(include_output_dir=False), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def _pop(raw: dict, key: str, kind: type, default=_MISSING, where: str = ""):
    label = f"{where}{key}"
    if key not in raw:
        if default is _MISSING:
            raise ConfigError(f"missing required key '{label}'")
        return default
    val = raw.pop(key)
    if kind is float and isinstance(val, int) and not isinstance(val, bool):
        val = float(val)
    if not isinstance(val, kind) or (kind is not bool and isinstance(val, bool)):
        raise ConfigError(f"'{label}' must be {kind.__name__}, got {type(val).__name__}")
    return val


def _parse_distribution(raw: dict) -> Distribution:
    table = _pop(raw, "distribution", dict)
    kind = _pop(table, "kind", str, where="distribution.")
    cls = DISTRIBUTION_KINDS.get(kind)
    if cls is None:
        raise ConfigError(
            f"'distribution.kind' must be one of {sorted(DISTRIBUTION_KINDS)}, got '{kind}'")
    allowed = {f.name for f in fields(cls)}
    params = {}
    for key in list(table):
        if key not in allowed:
            raise ConfigError(f"unknown key 'distribution.{key}' for kind '{kind}'")
        params[key] = _pop(table, key, float, where="distribution.")
    try:
        return cls(**params)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"distribution: {exc}") from exc


def parse_config(data: dict, env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Validate an already-parsed mapping; see load_config for the file API."""
    raw = dict(data)
    policy_str = _pop(raw, "policy", str)
    try:
        policy = PolicyKind(policy_str)
    except ValueError:
        valid = sorted(k.value for k in PolicyKind)
        raise ConfigError(f"'policy' must be one of {valid}, got '{policy_str}'") from None

    dist = _parse_distribution(raw)

    horizons = _pop(raw, "horizons", list)
    if not horizons:
        raise ConfigError("'horizons' must not be empty")
    for h in horizons:
        if isinstance(h, bool) or not isinstance(h, int) or h < 1:
            raise ConfigError(f"'horizons' entries must be positive integers, got {h!r}")
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise ConfigError("'horizons' must be strictly ascending")

    trials = _pop(raw, "trials", int)
    if trials < 1:
        raise ConfigError(f"'trials' must be at least 1, got {trials}")

    seed = _pop(raw, "seed", int)
    output_dir = _pop(raw, "output_dir", str, default="out")

    rho = _pop(raw, "rho", float, default=None)
    if rho is not None and rho <= 0.0:
        raise ConfigError(f"'rho' must be positive, got {rho}")
    if policy in BUDGETED_KINDS and rho is None:
        raise ConfigError(f"rho required for policy '{policy.value}'")

    target_ros = _pop(raw, "target_ros", float, default=1.0)
    if target_ros <= 0.0:
        raise ConfigError(f"'target_ros' must be positive, got {target_ros}")
    if dist.max_value() * target_ros > 1.0 + 1e-12:
        raise ConfigError(
            f"'target_ros' {target_ros} would scale values above 1 "
            f"(distribution max {dist.max_value()})")

    alpha_override = _pop(raw, "alpha_override", float, default=None)
    eta_override = _pop(raw, "eta_override", float, default=None)
    for name, val in (("alpha_override", alpha_override), ("eta_override", eta_override)):
        if val is not None and val <= 0.0:
            raise ConfigError(f"'{name}' must be positive, got {val}")

    emit_trajectories = _pop(raw, "emit_trajectories", bool, default=False)

    oracle = _pop(raw, "oracle", str, default="auto")
    if oracle not in ORACLE_CHOICES:
        raise ConfigError(f"'oracle' must be one of {list(ORACLE_CHOICES)}, got '{oracle}'")
    if oracle == "exact" and max(horizons) > 25:
        raise ConfigError(f"'oracle' = \"exact\" supports horizons up to 25, got {max(horizons)}")
    if oracle == "grid" and max(horizons) > 100:
        raise ConfigError(f"'oracle' = \"grid\" supports horizons up to 100, got {max(horizons)}")
    if oracle in ("exact", "lp") and dist.kind == "linear_allocation_uniform":
        raise ConfigError(f"'oracle' = \"{oracle}\" needs a second-price distribution")

    intermingled = _pop(raw, "intermingled", bool, default=False)
    if intermingled and policy is not PolicyKind.STRICT_ROS:
        raise ConfigError("'intermingled' applies to policy 'strict_ros' only")

    if raw:
        raise ConfigError(f"unknown key(s): {', '.join(sorted(raw))}")

    if env is None:
        env = os.environ
    if SEED_ENV_VAR in env:
        try:
            seed = int(env[SEED_ENV_VAR])
        except ValueError:
            raise ConfigError(
                f"{SEED_ENV_VAR} must be an integer, got '{env[SEED_ENV_VAR]}'") from None

    return ExperimentConfig(
        policy=policy.value,
        distribution=dist,
        horizons=list(horizons),
        trials=trials,
        seed=seed,
        output_dir=output_dir,
        rho=rho,
        target_ros=target_ros,
        alpha_override=alpha_override,
        eta_override=eta_override,
        emit_trajectories=emit_trajectories,
        oracle=oracle,
        intermingled=intermingled,
    )


def load_config(path: str, env: Optional[Mapping[str, str]] = None) -> ExperimentConfig:
    """Parse and validate a TOML experiment file.

    ``env`` defaults to os.environ and is where the ROSBID_SEED override is
    read from; tests inject their own mapping.
    """
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None
    return parse_config(data, env=env)
