"""INI configuration files for experiments.

Every key is optional; missing keys take the reference defaults below.
Unknown sections or keys are rejected so typos cannot silently fall back to
defaults. Example::

    [layout]
    grid_dim = 4

    [target]
    location = random

    [channel]
    scheme = dMRTC
    alpha = 4
"""

from __future__ import annotations

import configparser
import math
from pathlib import Path

from .channel import ChannelConfig, Scheme
from .montecarlo import ExperimentConfig, SweepGrid
from .sensing import SensingConfig

SEED_ENV = "MACFUSION_SEED"

DEFAULTS: dict[str, dict[str, str]] = {
    "layout": {"side_length": "100.0", "grid_dim": "2"},
    "network": {"intensity": "1.0"},
    "target": {"power": "10.0", "location": "20.0, 20.0", "placement_box": "85.0"},
    "sensing": {"snr_db": "12.0", "pfa": "0.01", "saturation_distance": "1.0", "exponent": "2.0"},
    "channel": {
        "scheme": "dEGTC",
        "alpha": "2",
        "fading_scale": repr(1 / math.sqrt(2)),
        "ref_distance": "1.0",
        "sn_power": "1.0",
        "ch_power": "1.0",
        "snr_ch_db": "20.0",
        "snr_fc_db": "20.0",
    },
    "experiment": {"rule": "MOR-N", "trials": "10000", "master_seed": "20240601", "sampling": "direct"},
    "sweep": {
        "lambdas": "0.5, 1.0, 2.5, 5.0",
        "clusters": "1, 4, 9, 16",
        "snr_ch_db": "10.0, 15.0, 20.0, 25.0, 30.0",
        "schemes": "dEGTC, dMRTC",
        "alphas": "2, 4",
        "pfa_global": "0.05",
        "roc_points": "101",
    },
}


class ConfigError(ValueError):
    pass


def _parser() -> configparser.ConfigParser:
    p = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    p.optionxform = str  # keys are case-sensitive
    return p


def resolve(text: str = "", source: str = "<config>") -> dict[str, dict[str, str]]:
    """Parse INI text and fill in defaults; returns ``{section: {key: value}}``."""
    p = _parser()
    try:
        p.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    out = {sec: dict(keys) for sec, keys in DEFAULTS.items()}
    for sec in p.sections():
        if sec not in DEFAULTS:
            raise ConfigError(f"{source}: unknown section [{sec}]; valid sections: {', '.join(DEFAULTS)}")
        for key, value in p.items(sec):
            if key not in DEFAULTS[sec]:
                raise ConfigError(f"{source}: unknown key {key!r} in [{sec}]; "
                                  f"valid keys: {', '.join(DEFAULTS[sec])}")
            out[sec][key] = value.strip()
    return out


def _get(resolved, sec, key, conv):
    raw = resolved[sec][key]
    try:
        return conv(raw)
    except ValueError as exc:
        raise ConfigError(f"[{sec}] {key} = {raw!r}: {exc}") from None


def _int(raw: str) -> int:
    return int(raw)


def _alpha(raw: str) -> int:
    v = int(raw)
    if v not in (2, 4):
        raise ValueError("path-loss exponent alpha must be 2 or 4")
    return v


def _positive_int(raw: str) -> int:
    v = int(raw)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _floats(raw: str) -> tuple[float, ...]:
    vals = tuple(float(v) for v in raw.split(",") if v.strip())
    if not vals:
        raise ValueError("expected at least one number")
    return vals


def _ints(raw: str) -> tuple[int, ...]:
    return tuple(int(v) for v in raw.split(",") if v.strip())


def _scalar_or_list(raw: str):
    vals = _floats(raw)
    return vals[0] if len(vals) == 1 else vals


def _location(raw: str):
    if raw.lower() == "random":
        return None
    vals = _floats(raw)
    if len(vals) != 2:
        raise ValueError("expected 'x, y' or 'random'")
    return vals


def _schemes(raw: str) -> tuple[Scheme, ...]:
    return tuple(Scheme(v.strip()) for v in raw.split(",") if v.strip())


def build(resolved: dict[str, dict[str, str]], seed_override: int | None = None) -> ExperimentConfig:
    """Validated :class:`ExperimentConfig` from a resolved mapping."""
    g = lambda sec, key, conv=float: _get(resolved, sec, key, conv)  # noqa: E731
    target_power = g("target", "power")
    seed = g("experiment", "master_seed", _int) if seed_override is None else seed_override
    try:
        sensing = SensingConfig.from_snr(g("sensing", "pfa"), g("sensing", "snr_db"), target_power,
                                         saturation_distance=g("sensing", "saturation_distance"),
                                         exponent=g("sensing", "exponent"))
        channel = ChannelConfig.from_snr(
            g("channel", "snr_ch_db"), g("channel", "snr_fc_db"),
            sn_power=g("channel", "sn_power"), ch_power=g("channel", "ch_power"),
            scheme=g("channel", "scheme", Scheme), path_loss=g("channel", "alpha", _alpha),
            fading_scale=g("channel", "fading_scale"), ref_distance=g("channel", "ref_distance"))
        grid = SweepGrid(
            lambdas=g("sweep", "lambdas", _floats), clusters=g("sweep", "clusters", _ints),
            snr_ch_db=g("sweep", "snr_ch_db", _floats), schemes=g("sweep", "schemes", _schemes),
            alphas=g("sweep", "alphas", _ints), pfa_global=g("sweep", "pfa_global"),
            roc_points=g("sweep", "roc_points", _int))
        cfg = ExperimentConfig(
            side_length=g("layout", "side_length"), grid_dim=g("layout", "grid_dim", _int),
            intensity=g("network", "intensity", _scalar_or_list), target_power=target_power,
            target_location=g("target", "location", _location),
            placement_box=g("target", "placement_box"), sensing=sensing, channel=channel,
            rule=resolved["experiment"]["rule"], trials=g("experiment", "trials", _positive_int),
            master_seed=seed, sampling=resolved["experiment"]["sampling"], grid=grid)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    return cfg


def load_config(path, seed_override: int | None = None) -> ExperimentConfig:
    """Read, validate and build the experiment configuration stored at ``path``."""
    path = Path(path)
    return build(resolve(path.read_text(), str(path)), seed_override)
