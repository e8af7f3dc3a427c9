"""INI-style configuration for the CLI.

Sections mirror the config dataclasses; every constant the pipeline
consumes can be overridden.  Missing sections or keys keep their
defaults; unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import fields, replace
from pathlib import Path

from .phantom import PhantomParams
from .pipeline import PipelineConfig
from .repair import RepairConfig

_SECTIONS = {
    "enhance": ("w1", "w2", "w3"),
    "background": ("alpha", "beta"),
    "fuzzy": ("delta", "range_width", "ivfs_on_foreground"),
    "shape": ("circ_t1", "circ_t2"),
}


def _coerce(current, text: str):
    if isinstance(current, bool):
        return text.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(current, int):
        return int(text)
    if isinstance(current, float):
        return float(text)
    return text


def _apply(obj, section: configparser.SectionProxy, allowed: tuple[str, ...]):
    updates = {}
    for key, value in section.items():
        if key not in allowed:
            raise ValueError(f"unknown option {key!r} in section [{section.name}]")
        updates[key] = _coerce(getattr(obj, key), value)
    return replace(obj, **updates) if updates else obj


def load_pipeline_config(path: str | Path | None) -> PipelineConfig:
    """Pipeline settings from an INI file; defaults when path is None."""
    config = PipelineConfig()
    if path is None:
        return config
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    for section, keys in _SECTIONS.items():
        if parser.has_section(section):
            config = _apply(config, parser[section], keys)
    if parser.has_section("repair"):
        repair_keys = tuple(f.name for f in fields(RepairConfig))
        config = replace(config,
                         repair=_apply(config.repair, parser["repair"], repair_keys))
    # Re-run validation with the merged values.
    return replace(config)


def load_phantom_params(path: str | Path | None) -> PhantomParams:
    """Phantom-generation settings from the [phantom] section."""
    params = PhantomParams()
    if path is None:
        return params
    parser = configparser.ConfigParser()
    read = parser.read(path)
    if not read:
        raise FileNotFoundError(f"config file not found: {path}")
    if parser.has_section("phantom"):
        params = _apply(params, parser["phantom"],
                        tuple(f.name for f in fields(PhantomParams)))
    return replace(params)


def write_default_config(path: str | Path) -> None:
    """Write a fully-populated config file with the default values."""
    pipeline = PipelineConfig()
    parser = configparser.ConfigParser()
    for section, keys in _SECTIONS.items():
        parser[section] = {k: str(getattr(pipeline, k)) for k in keys}
    parser["repair"] = {f.name: str(getattr(pipeline.repair, f.name))
                        for f in fields(RepairConfig)}
    params = PhantomParams()
    parser["phantom"] = {f.name: str(getattr(params, f.name))
                         for f in fields(PhantomParams)}
    with open(path, "w") as fh:
        parser.write(fh)
