"""Config parsing and validation (YAML key-value documents)."""

from __future__ import annotations

import dataclasses
import warnings

import yaml

from .federation import FLAT_STRATEGIES, FederationConfig

_ALIASES = {"lambda": "lam"}

# Fields that only some strategies read; setting them elsewhere is accepted
# with a warning.
_STRATEGY_FIELDS = {
    "mu": ("fedprox",),
    "lam": ("ditto", "floco_plus"),
    "tau": ("floco", "floco_plus"),
    "rho": ("floco", "floco_plus"),
    "simplex_dim": ("floco", "floco_plus"),
    "simplex_scope": ("floco", "floco_plus"),
    "finetune_epochs": ("ditto", "floco_plus"),
}


def parse_config(text: str) -> FederationConfig:
    """Parse a YAML document into a validated config; empty text gives defaults.

    Unknown keys are rejected; fields irrelevant to the chosen strategy are
    accepted with a warning.  A run manifest (with its resolved config under
    the "config" key) is accepted as-is, so manifests replay runs.
    """
    doc = yaml.safe_load(text) if text.strip() else {}
    if doc is None:
        doc = {}
    if not isinstance(doc, dict):
        raise ValueError("config document must be a key-value mapping")
    replay = "config" in doc and isinstance(doc["config"], dict)
    if replay:
        doc = doc["config"]  # manifest replay

    valid = {f.name: f.type for f in dataclasses.fields(FederationConfig)}
    resolved = {}
    for key, value in doc.items():
        name = _ALIASES.get(key, key)
        if name not in valid:
            raise ValueError(f"unknown config key: {key}")
        resolved[name] = value

    try:
        cfg = FederationConfig(**resolved)
    except TypeError as exc:
        raise ValueError(f"bad config value: {exc}") from exc
    cfg.validate()

    # A manifest materializes every default, so per-field intent is unknown.
    for name, strategies in () if replay else _STRATEGY_FIELDS.items():
        if name in resolved and cfg.strategy not in strategies:
            warnings.warn(
                f"config field {name} is ignored by strategy {cfg.strategy}",
                UserWarning,
            )
    return cfg


def config_to_dict(cfg: FederationConfig) -> dict:
    """All fields with defaults materialized, ready for serialization."""
    return dataclasses.asdict(cfg)
