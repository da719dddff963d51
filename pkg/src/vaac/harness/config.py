"""Run configuration and its flat ``key = value`` file format.

Keys are dotted: top-level run settings (``agent``, ``seed``, ...), maze
geometry under ``maze.`` and learner hyperparameters under ``hp.``. Values in
an environment variable ``VAAC_<KEY>`` (dots become double underscores, e.g.
``VAAC_HP__ALPHA``) override the file; explicit overrides beat both.
"""

from __future__ import annotations

import dataclasses
import os
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..agents import AGENT_KINDS, AgentConfig
from ..env_maze import MazeConfig
from ..nn_core import ConfigurationError

ENV_PREFIX = "VAAC_"

RNG_STREAMS = ("init.critic", "init.actor", "init.virtual", "init.dynamics", "init.rnd",
               "act", "actor", "virtual", "replay")


@dataclass
class RunConfig:
    agent: str = "vaac"
    seed: int = 0
    total_steps: int = 100_000
    report_interval: int = 1000
    # the final step always gets a snapshot as well
    snapshot_steps: tuple[int, ...] = (5000, 50000)
    save_checkpoint: bool = True
    maze: MazeConfig = field(default_factory=MazeConfig)
    hp: AgentConfig = field(default_factory=AgentConfig)

    def __post_init__(self):
        self.snapshot_steps = tuple(int(s) for s in self.snapshot_steps)
        self.validate()

    def validate(self) -> None:
        if self.agent not in AGENT_KINDS:
            raise ConfigurationError(f"agent: unknown kind {self.agent!r}; expected one of {AGENT_KINDS}")
        if self.seed < 0:
            raise ConfigurationError("seed: must be non-negative")
        if self.total_steps < 0:
            raise ConfigurationError("total_steps: must be non-negative")
        if self.report_interval < 1:
            raise ConfigurationError("report_interval: must be >= 1")

    def snapshots(self) -> list[int]:
        return sorted({s for s in self.snapshot_steps if 0 < s <= self.total_steps} |
                      ({self.total_steps} if self.total_steps > 0 else set()))

    def replace(self, **overrides) -> "RunConfig":
        """Copy with dotted-key overrides, e.g. ``replace(**{"hp.beta": 0.0})``."""
        flat = self.to_flat()
        for k, v in overrides.items():
            if k not in flat:
                raise ConfigurationError(f"unknown config key {k!r}")
            flat[k] = _format(v)
        return from_flat(flat)

    def to_flat(self) -> dict[str, str]:
        out = {}
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if f.name in ("maze", "hp"):
                for sub in dataclasses.fields(v):
                    out[f"{f.name}.{sub.name}"] = _format(getattr(v, sub.name))
            else:
                out[f.name] = _format(v)
        return out

    def dumps(self) -> str:
        return "".join(f"{k} = {v}\n" for k, v in sorted(self.to_flat().items()))


def _format(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, (tuple, list)):
        return ",".join(_format(x) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _coerce(key: str, raw: str, default):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple) or default is None:
            if raw.lower() == "none":
                return None
            if raw == "":
                return ()
            kind = type(default[0]) if default else float
            return tuple(kind(x) for x in raw.split(","))
        return raw
    except (ValueError, TypeError, IndexError) as exc:
        raise ConfigurationError(f"{key}: cannot parse {raw!r}") from exc


def from_flat(flat: dict[str, str]) -> RunConfig:
    top = {f.name: f for f in dataclasses.fields(RunConfig)}
    sections = {"maze": MazeConfig, "hp": AgentConfig}
    section_defaults = {"maze": MazeConfig(), "hp": AgentConfig()}
    values: dict = {}
    nested: dict[str, dict] = {"maze": {}, "hp": {}}
    for key, raw in flat.items():
        head, _, rest = key.partition(".")
        if rest:
            if head not in sections or rest not in {f.name for f in dataclasses.fields(sections[head])}:
                raise ConfigurationError(f"unknown config key {key!r}")
            nested[head][rest] = _coerce(key, raw, getattr(section_defaults[head], rest))
        else:
            if key not in top or key in sections:
                raise ConfigurationError(f"unknown config key {key!r}")
            f = top[key]
            default = f.default if f.default is not dataclasses.MISSING else None
            values[key] = _coerce(key, raw, default)
    try:
        return RunConfig(**values, maze=MazeConfig(**nested["maze"]), hp=AgentConfig(**nested["hp"]))
    except ConfigurationError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigurationError(str(exc)) from exc


def parse_config_text(text: str) -> dict[str, str]:
    flat = {}
    for n, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"line {n}: expected 'key = value', got {line!r}")
        k, v = line.split("=", 1)
        flat[k.strip()] = v.strip()
    return flat


def env_overrides(environ=None) -> dict[str, str]:
    environ = os.environ if environ is None else environ
    out = {}
    for k, v in environ.items():
        if k.startswith(ENV_PREFIX):
            out[k[len(ENV_PREFIX):].lower().replace("__", ".")] = v
    return out


def load_config(path=None, overrides: dict[str, str] | None = None, environ=None) -> RunConfig:
    """Defaults <- file <- ``VAAC_*`` environment <- explicit overrides."""
    flat = RunConfig().to_flat()
    layers = []
    if path is not None:
        layers.append(parse_config_text(Path(path).read_text()))
    layers.append(env_overrides(environ))
    layers.append({k: str(v) for k, v in (overrides or {}).items()})
    for layer in layers:
        for k, v in layer.items():
            if k not in flat:
                raise ConfigurationError(f"unknown config key {k!r}")
            flat[k] = v
    return from_flat(flat)


def make_rngs(seed: int, names=RNG_STREAMS) -> dict[str, np.random.Generator]:
    """Independent named substreams of one master seed."""
    return {n: np.random.default_rng(np.random.SeedSequence([seed, zlib.crc32(n.encode())]))
            for n in names}
