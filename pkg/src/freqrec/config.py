"""Run configuration: defaults, file loading, overrides, fingerprints.

A config is one JSON document; every field has a default, and the
effective (fully merged) document is what gets serialized into JSON
artifacts, so a run is always reproducible from its own outputs.  The
fingerprint is a short hash of the effective document minus fields that
cannot change results (worker counts, file locations): artifacts stamped
with the same fingerprint were produced under the same semantics, which
is what `evaluate` checks before mixing inputs.
"""

import copy
import hashlib
import json

from freqrec.errors import InputError

DEFAULTS = {
    "dataset": {
        "format": "tsv",
        "min_interactions": 5,
        "max_seq_len": 50,
    },
    "synth": {
        "users": 200,
        "items": 100,
        "mean_length": 20,
        "rho": 0.5,
        "seed": 0,
        "with_text": True,
    },
    "pretrain": {
        "window": 5,
        "negatives": 5,
        "epochs": 5,
        "lr": 0.05,
        "seed": 0,
        "chunk": 128,
    },
    "model": {
        "d_id": 50,
        "d_text": 50,
        "d_model": 64,
        "mlp_hidden": 128,
        "mlp_seed": 1,
        "activation": "gelu",
    },
    "backbone": {
        "layers": 4,
        "heads": 2,
        "seed": 2,
        "ffn_mult": 4,
    },
    "glpf": {
        "enabled": True,
        "alpha": 0.3,
        "order": 1,
        "coefficients": None,   # explicit theta_0..theta_K overrides first-order mode
        "apply_to": "id",       # "id" (offline) or "fused" (filter tokens at use)
    },
    "tfm": {
        "enabled": True,
        "cutoff": 0.3,
        "order": 2,
        "residual": False,
        "causal_safe": False,
    },
    "training": {
        "lr": 1e-4,             # protocol grid: 1e-5, 5e-5, 1e-4, 5e-4
        "batch_size": 32,
        "epochs": 10,
        "patience": 3,
        "n_negatives": 100,
        "seed": 0,
        "weight_decay": 0.01,
    },
    "eval": {
        "k": 10,
        "n_candidates": 100,
        "seed": 0,
    },
    "analysis": {
        "n_bands": 4,
        "theorem_trials": 1000,
        "theorem_t_min": 8,
        "theorem_t_max": 64,
        "theorem_rho": 0.5,
        "theorem_seed": 0,
    },
    "workers": 0,               # 0 = machine parallelism
}

# fields with no influence on computed values
_VOLATILE = {("workers",)}


def _merge(base, override, path=""):
    out = copy.deepcopy(base)
    for key, value in override.items():
        if key not in base:
            raise InputError(f"unknown config key {path + key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise InputError(f"config key {path + key!r} must be a section")
            out[key] = _merge(base[key], value, path + key + ".")
        else:
            out[key] = value
    return out


def load_config(path=None, overrides=None):
    """Effective config: defaults <- file <- dotted-key overrides."""
    effective = copy.deepcopy(DEFAULTS)
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                document = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise InputError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(document, dict):
            raise InputError(f"config {path} must be a JSON object")
        effective = _merge(effective, document)
    for dotted, raw in (overrides or {}).items():
        effective = _apply_override(effective, dotted, raw)
    return effective


def _apply_override(config, dotted, raw):
    keys = dotted.split(".")
    node = config
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise InputError(f"unknown config section {dotted!r}")
        node = node[key]
    leaf = keys[-1]
    if leaf not in node:
        raise InputError(f"unknown config key {dotted!r}")
    current = node[leaf]
    node[leaf] = _coerce(raw, current, dotted)
    return config


def _coerce(raw, current, dotted):
    if isinstance(raw, str):
        if isinstance(current, bool):
            if raw.lower() in ("1", "true", "on", "yes"):
                return True
            if raw.lower() in ("0", "false", "off", "no"):
                return False
            raise InputError(f"cannot parse boolean for {dotted!r}: {raw!r}")
        if isinstance(current, int) and not isinstance(current, bool):
            try:
                return int(raw)
            except ValueError as exc:
                raise InputError(f"cannot parse integer for {dotted!r}: {raw!r}") from exc
        if isinstance(current, float):
            try:
                return float(raw)
            except ValueError as exc:
                raise InputError(f"cannot parse number for {dotted!r}: {raw!r}") from exc
        if current is None:
            return json.loads(raw)
        return raw
    return raw


def canonical_json(config):
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def fingerprint(config):
    """12-hex-digit hash of the effective config minus volatile fields."""
    trimmed = copy.deepcopy(config)
    for path in _VOLATILE:
        node = trimmed
        for key in path[:-1]:
            node = node.get(key, {})
        node.pop(path[-1], None)
    return hashlib.sha256(canonical_json(trimmed).encode("utf-8")).hexdigest()[:12]
