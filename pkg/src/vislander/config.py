"""Run configuration: nested TOML sections with strict keys and documented defaults.

The canonical serialization is ``tomli_w`` output of :func:`to_dict`, whose
key order follows the dataclass field order, so a resolved config written
out and read back produces byte-identical text.

Random streams: every draw derives from the top-level ``seed`` plus a stream
name (``env``, ``init``, ``noise``, ``policy``, ``ppo``, ``eval``) and, for
per-environment streams, the environment index.
"""

from __future__ import annotations

import dataclasses
import hashlib
import re
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any, get_args, get_origin, get_type_hints

import tomli
import tomli_w

from .curriculum import CurriculumConfig
from .encoder import EncoderConfig
from .env import EnvParams, EpisodeConfig, VisionConfig
from .observation import StateNoiseParams
from .platform import PlatformLimits
from .policy import PolicyConfig
from .ppo import PPOConfig
from .reward import RewardParams
from .sim import VehicleParams
from .vision import CameraModel


class ConfigError(ValueError):
    pass


@dataclass
class CameraSection:
    fx: float = 460.0
    fy: float = 460.0
    cx: float = 320.0
    cy: float = 240.0
    width: int = 640
    height: int = 480
    translation: tuple[float, float, float] = (0.0, 0.0, 0.0)
    max_rot_deg: float = 2.0
    max_trans: float = 0.01


@dataclass
class NoiseSection:
    dropout: float = 0.2
    desc_noise_sigma: float = 0.05
    vel_sigma: float = 0.05
    att_sigma: float = 0.01
    angvel_sigma: float = 0.02


@dataclass
class CurriculumSection:
    start_stage: str = "static"
    start_heave_cap: float = 0.0
    window: int = 4096
    static_advance: float = 0.9
    raise_above: float = 0.6
    lower_below: float = 0.2
    freeze: bool = False


@dataclass
class EvalSection:
    freqs: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)
    trials: int = 100
    amplitudes: str = "full"
    seed: int = 1
    batch_size: int = 100
    histogram_bin_deg: float = 5.0
    dropout: float = 0.2
    desc_noise_sigma: float = 0.05


@dataclass
class TrainSection:
    workers: int = 1
    torch_threads: int = 1
    checkpoint_every: int = 50
    keep_checkpoints: int = 3
    success_window: int = 4096
    stop_success_rate: float = 0.0
    stop_min_episodes: int = 4096


@dataclass
class RunConfig:
    seed: int = 0
    output_dir: str = "runs"
    vehicle: VehicleParams = field(default_factory=VehicleParams)
    platform: PlatformLimits = field(default_factory=PlatformLimits)
    camera: CameraSection = field(default_factory=CameraSection)
    noise: NoiseSection = field(default_factory=NoiseSection)
    reward: RewardParams = field(default_factory=RewardParams)
    episode: EpisodeConfig = field(default_factory=EpisodeConfig)
    encoder: EncoderConfig = field(default_factory=EncoderConfig)
    policy: PolicyConfig = field(default_factory=PolicyConfig)
    ppo: PPOConfig = field(default_factory=PPOConfig)
    curriculum: CurriculumSection = field(default_factory=CurriculumSection)
    eval: EvalSection = field(default_factory=EvalSection)
    train: TrainSection = field(default_factory=TrainSection)

    def env_params(self, dropout: float | None = None, desc_noise_sigma: float | None = None) -> EnvParams:
        c, n = self.camera, self.noise
        cam = CameraModel(c.fx, c.fy, c.cx, c.cy, c.width, c.height, translation=_arr(c.translation))
        vision = VisionConfig(
            camera=cam, max_rot_deg=c.max_rot_deg, max_trans=c.max_trans,
            dropout=n.dropout if dropout is None else dropout,
            desc_noise_sigma=n.desc_noise_sigma if desc_noise_sigma is None else desc_noise_sigma,
            descriptor_dim=self.encoder.descriptor_dim,
        )
        return EnvParams(
            vehicle=self.vehicle, platform=self.platform, vision=vision,
            state_noise=StateNoiseParams(n.vel_sigma, n.att_sigma, n.angvel_sigma),
            reward=self.reward, episode=self.episode,
        )

    def curriculum_config(self) -> CurriculumConfig:
        c = self.curriculum
        return CurriculumConfig(c.window, c.static_advance, c.raise_above, c.lower_below, c.freeze)


def _arr(x):
    import numpy as np
    return np.asarray(x, dtype=float)


# -- (de)serialization ---------------------------------------------------------

def to_dict(obj) -> dict:
    out = {}
    for f in fields(obj):
        v = getattr(obj, f.name)
        if dataclasses.is_dataclass(v):
            out[f.name] = to_dict(v)
        elif isinstance(v, tuple):
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def _coerce(tp, value, where: str):
    origin = get_origin(tp)
    if origin is tuple:
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{where}: expected an array")
        args = get_args(tp)
        item = args[0] if args else Any
        if len(args) == 2 and args[1] is Ellipsis or len(args) == 1:
            return tuple(_coerce(item, v, where) for v in value)
        if len(value) != len(args):
            raise ConfigError(f"{where}: expected {len(args)} values, got {len(value)}")
        return tuple(_coerce(a, v, where) for a, v in zip(args, value))
    if tp is float:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{where}: expected a number, got {value!r}")
        return float(value)
    if tp is int:
        if isinstance(value, float) and value.is_integer():
            value = int(value)
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{where}: expected an integer, got {value!r}")
        return value
    if tp is bool:
        if not isinstance(value, bool):
            raise ConfigError(f"{where}: expected true/false, got {value!r}")
        return value
    if tp is str:
        if not isinstance(value, str):
            raise ConfigError(f"{where}: expected a string, got {value!r}")
        return value
    return value


def from_dict(cls, data: dict, prefix: str = ""):
    """Build a dataclass from nested dicts; unknown keys raise, missing keys take defaults."""
    hints = get_type_hints(cls)
    names = {f.name for f in fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"unknown key {prefix}{unknown[0]}", ) if len(unknown) == 1 else \
            ConfigError(f"unknown keys {', '.join(prefix + u for u in unknown)}")
    kwargs = {}
    for name, value in data.items():
        tp = hints[name]
        where = f"{prefix}{name}"
        if dataclasses.is_dataclass(tp):
            if not isinstance(value, dict):
                raise ConfigError(f"{where}: expected a section")
            kwargs[name] = from_dict(tp, value, where + ".")
        else:
            kwargs[name] = _coerce(tp, value, where)
    try:
        return cls(**kwargs)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"{prefix.rstrip('.') or 'config'}: {exc}") from exc


def dumps(cfg: RunConfig) -> str:
    return tomli_w.dumps(to_dict(cfg))


def config_hash(cfg: RunConfig) -> str:
    return hashlib.sha256(dumps(cfg).encode()).hexdigest()


def _locate(text: str, dotted: str) -> int | None:
    """1-based line where a dotted key is defined, if it can be found."""
    *section, key = dotted.split(".")
    current = []
    for lineno, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"^\[([^\[\]]+)\]$", s)
        if m:
            current = [p.strip() for p in m.group(1).split(".")]
            continue
        m = re.match(r"^([A-Za-z0-9_\-\.]+)\s*=", s)
        if m:
            full = current + [p.strip() for p in m.group(1).split(".")]
            if full == section + [key] or full[: len(section) + 1] == section + [key]:
                return lineno
    return None


def parse_override(item: str) -> tuple[list[str], Any]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} must look like section.key=value")
    key, raw = item.split("=", 1)
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw
    return key.strip().split("."), value


def apply_overrides(data: dict, overrides: list[str]) -> dict:
    for item in overrides:
        path, value = parse_override(item)
        node = data
        for part in path[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigError(f"override {item!r}: {part} is not a section")
        node[path[-1]] = value
    return data


def loads(text: str, overrides: list[str] | None = None, source: str = "<config>") -> RunConfig:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    data = apply_overrides(data, overrides or [])
    try:
        return from_dict(RunConfig, data)
    except ConfigError as exc:
        m = re.search(r"unknown keys? ([A-Za-z0-9_\.]+)", str(exc)) or re.match(r"([A-Za-z0-9_\.]+):", str(exc))
        line = _locate(text, m.group(1)) if m else None
        where = f"{source}:{line}" if line else source
        raise ConfigError(f"{where}: {exc}") from exc


def load(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    if path is None:
        return loads("", overrides, "<defaults>")
    p = Path(path)
    return loads(p.read_text(), overrides, str(p))


def defaults_reference() -> str:
    return "# vislander run configuration with every default\n" + dumps(RunConfig())
