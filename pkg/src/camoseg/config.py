"""Run configuration stored as an INI file.

Every tunable constant appears in its section with its default, e.g.::

    [fusion]
    score_threshold = 0.5
    overlap_threshold = 0.5
    overlap_rule = mutual_fraction
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .augment import AugmentConfig
from .core import MASK_RESOLUTION, ValidationError
from .fusion import FusionConfig
from .metrics import MetricConstants, ThresholdRule
from .visdiff import LOG_FLOOR, TEXTON_BANK_SIZE, TEXTON_ITERATIONS, TEXTON_SEED, TEXTON_VOCAB


@dataclass(frozen=True)
class PoolingConfig:
    bins_x: int = 7
    bins_y: int = 7
    samples_per_axis: int = 2


@dataclass(frozen=True)
class VisdiffConfig:
    log_floor: float = LOG_FLOOR
    texton_bank_size: int = TEXTON_BANK_SIZE
    texton_vocab: int = TEXTON_VOCAB
    texton_iterations: int = TEXTON_ITERATIONS
    texton_seed: int = TEXTON_SEED


@dataclass(frozen=True)
class RunConfig:
    fusion: FusionConfig = field(default_factory=FusionConfig)
    threshold: ThresholdRule = field(default_factory=ThresholdRule)
    metrics: MetricConstants = field(default_factory=MetricConstants)
    augment: AugmentConfig = field(default_factory=AugmentConfig)
    visdiff: VisdiffConfig = field(default_factory=VisdiffConfig)
    pooling: PoolingConfig = field(default_factory=PoolingConfig)
    mask_resolution: int = MASK_RESOLUTION
    seed: int = 0
    workers: int = 1


_SECTIONS = ("fusion", "threshold", "metrics", "augment", "visdiff", "pooling")


def _coerce(value: str, like):
    if isinstance(like, bool):
        return value.strip().lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(value)
    if isinstance(like, float):
        return float(value)
    return value.strip()


def to_parser(cfg: RunConfig) -> configparser.ConfigParser:
    cp = configparser.ConfigParser()
    cp["run"] = {
        "mask_resolution": str(cfg.mask_resolution),
        "seed": str(cfg.seed),
        "workers": str(cfg.workers),
    }
    for name in _SECTIONS:
        section = getattr(cfg, name)
        cp[name] = {f.name: repr(v) if isinstance(v, float) else str(v)
                    for f in fields(section) for v in [getattr(section, f.name)]}
    return cp


def save(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        to_parser(cfg).write(fh)


def loads(text: str) -> RunConfig:
    cp = configparser.ConfigParser()
    cp.read_string(text)
    return _from_parser(cp)


def load(path) -> RunConfig:
    return loads(Path(path).read_text(encoding="utf-8"))


def _from_parser(cp: configparser.ConfigParser) -> RunConfig:
    cfg = RunConfig()
    known = set(_SECTIONS) | {"run"}
    unknown = set(cp.sections()) - known
    if unknown:
        raise ValidationError(f"unknown config sections: {', '.join(sorted(unknown))}")
    updates = {}
    for name in _SECTIONS:
        if name not in cp:
            continue
        current = getattr(cfg, name)
        names = {f.name for f in fields(current)}
        extra = set(cp[name]) - names
        if extra:
            raise ValidationError(f"unknown keys in [{name}]: {', '.join(sorted(extra))}")
        vals = {k: _coerce(v, getattr(current, k)) for k, v in cp[name].items()}
        updates[name] = replace(current, **vals)
    if "run" in cp:
        for k, v in cp["run"].items():
            if not hasattr(cfg, k) or k in _SECTIONS:
                raise ValidationError(f"unknown key in [run]: {k}")
            updates[k] = _coerce(v, getattr(cfg, k))
    return replace(cfg, **updates)
