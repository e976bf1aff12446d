"""YAML run configuration.

A config file has up to five sections; every key is optional and falls back
to the defaults of :class:`SimConfig` and :class:`BoundsConfig`::

    geometry:   {ell: 4, n_c: 13, n_p: [1, 2, 3]}
    code:       {generators: ["552137", "614671", "772233"], memory: 17,
                 k: 32, interleaver_seed: 0xC0DE}
    decoders:   {names: [pat-osd, em-osd, inlist-glrt-osd], osd_order: 3,
                 em_iterations: 1, em_rebuild_list: true, em_include_pilots: false}
    simulation: {snr_db: [6, 8, 10, 12], min_errors: 100, max_frames: 2000000,
                 master_seed: 1, batch_size: 500}
    bounds:     {snr_db: [4, 6, 8], kinds: [metaconverse, noncoherent-ml, pat-ml],
                 n_outer: 10000, n_inner: 512, s_grid: [0.5, 1.0, 2.0], master_seed: 1}

``n_p`` may be a list; one simulation config (and one bounds config) is
produced per entry. Octal generators should be quoted so YAML keeps them
as strings.
"""

from __future__ import annotations

from pathlib import Path

import yaml

from .bounds import BoundsConfig
from .errors import ConfigError, PilotOsdError
from .harness import SimConfig

SECTIONS = {
    "geometry": {"ell", "n_c", "n_p"},
    "code": {"generators", "memory", "k", "interleaver_seed"},
    "decoders": {"names", "osd_order", "em_iterations", "em_rebuild_list", "em_include_pilots"},
    "simulation": {"snr_db", "min_errors", "max_frames", "master_seed", "batch_size"},
    "bounds": {"snr_db", "kinds", "n_outer", "n_inner", "s_grid", "master_seed"},
}


def load_config(path) -> dict:
    try:
        raw = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    raw = raw or {}
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of sections")
    for name, body in raw.items():
        if name not in SECTIONS:
            raise ConfigError(f"unknown section {name!r}")
        if body is None:
            raw[name] = {}
        elif not isinstance(body, dict):
            raise ConfigError(f"section {name!r} must be a mapping")
        extra = set(raw[name]) - SECTIONS[name]
        if extra:
            raise ConfigError(f"unknown keys in {name!r}: {sorted(extra)}")
    return raw


def _pilot_counts(raw) -> list[int]:
    n_p = raw.get("geometry", {}).get("n_p", 2)
    values = n_p if isinstance(n_p, list) else [n_p]
    if not values:
        raise ConfigError("geometry.n_p must not be empty")
    return values


def sim_configs(raw: dict) -> list[SimConfig]:
    geo = dict(raw.get("geometry", {}))
    code = raw.get("code", {})
    dec = dict(raw.get("decoders", {}))
    sim = raw.get("simulation", {})
    if "names" in dec:
        dec["decoders"] = dec.pop("names")
    out = []
    for n_p in _pilot_counts(raw):
        geo["n_p"] = n_p
        try:
            out.append(SimConfig(**geo, **code, **dec, **sim))
        except ConfigError:
            raise
        except (PilotOsdError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return out


def bounds_configs(raw: dict) -> list[BoundsConfig]:
    if "bounds" not in raw:
        raise ConfigError("config has no 'bounds' section")
    geo = dict(raw.get("geometry", {}))
    k = raw.get("code", {}).get("k")
    extra = {"k": k} if k is not None else {}
    out = []
    for n_p in _pilot_counts(raw):
        geo["n_p"] = n_p
        try:
            out.append(BoundsConfig(**geo, **extra, **raw["bounds"]))
        except (PilotOsdError, TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc
    return out
