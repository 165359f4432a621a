"""Run configuration shared by the CLI commands.

A run is described by a flat key=value config file plus command-line flags;
precedence is flags > file > defaults. The effective merged configuration is
written next to every command's outputs.
"""
from __future__ import annotations

from dataclasses import dataclass, fields


@dataclass
class RunConfig:
    # dataset
    data: str = ""
    labels: str = ""
    data_format: str = "auto"  # auto | csv | idx
    unlabeled: bool = False
    delimiter: str = ","
    # encoder architecture: input -> hidden... -> rep_dim
    hidden: tuple = (500, 500, 2000)
    rep_dim: int = 10
    # corruption and autoencoder training
    corruption: float = 0.2
    pretrain_epochs: int = 15
    finetune_epochs: int = 15
    pretrain_lr: float = 0.01
    # mixture initialization
    clusters: int = 10
    gmm_init: str = "kmeans"  # kmeans | random
    em_max_iters: int = 200
    em_tol: float = 1e-6
    # joint phase
    eta: float = 0.01
    neighbor_fraction: float = 0.5
    lr: float = 0.01
    lr_step_factor: float = 0.1
    lr_step_every: int = 40
    epochs: int = 60
    batch_size: int = 256
    separability_mode: str = "per_step"
    embed_every: int = 0
    # synthetic data generation
    dim: int = 8
    n: int = 1500
    separation: float = 10.0
    # run plumbing
    seed: int = 0
    out: str = "."
    checkpoint: str = ""


def parse_config_file(path):
    """Read flat key=value lines; '#' starts a comment."""
    values = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value")
            key, _, raw = line.partition("=")
            values[key.strip()] = raw.strip()
    return values


def _coerce(name, default, raw):
    if isinstance(raw, str):
        try:
            if isinstance(default, bool):
                low = raw.lower()
                if low not in ("true", "false"):
                    raise ValueError
                return low == "true"
            if isinstance(default, int):
                return int(raw)
            if isinstance(default, float):
                return float(raw)
            if isinstance(default, tuple):
                return tuple(int(v) for v in raw.split(",") if v.strip())
        except ValueError:
            raise ValueError(f"config key {name}: cannot parse {raw!r}") from None
        return raw
    if isinstance(default, tuple) and not isinstance(raw, tuple):
        return tuple(raw)
    return raw


def merge_config(file_values=None, flag_values=None) -> RunConfig:
    """Layer file values and explicit flag values over the defaults."""
    cfg = RunConfig()
    known = {f.name: getattr(cfg, f.name) for f in fields(cfg)}
    for source in (file_values or {}), (flag_values or {}):
        for key, raw in source.items():
            if raw is None:
                continue
            if key not in known:
                raise ValueError(f"unknown config key {key!r}")
            setattr(cfg, key, _coerce(key, known[key], raw))
    return cfg


def config_text(cfg: RunConfig):
    """Serialize in field order, parseable by parse_config_file."""
    lines = []
    for f in fields(cfg):
        value = getattr(cfg, f.name)
        if isinstance(value, tuple):
            value = ",".join(str(v) for v in value)
        elif isinstance(value, bool):
            value = "true" if value else "false"
        lines.append(f"{f.name}={value}")
    return "\n".join(lines) + "\n"
