"""Run configuration stored as one JSON document."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, fields, replace
from typing import Optional, Union

from .engine import LatencyTable
from .geometry import KiB, PlatformConfig, platform_from_dict, platform_preset, platform_to_dict
from .harness import DEFAULT_WSS, KINDS, MODES, RunSettings, SweepGrid, default_victim_wss
from .partition import parse_ratio
from .workloads import VictimSpec


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class VictimConfig:
    wss_kib: Optional[int] = None          # None: private capacity + LLC/8
    read_fraction: float = 0.9
    accesses_per_line: int = 8
    shuffle_seed: Optional[int] = 0


@dataclass(frozen=True)
class GridConfig:
    modes: tuple[str, ...] = MODES
    ratios: tuple[str, ...] = ("1/3", "2/2", "3/1")
    kinds: tuple[str, ...] = KINDS
    wss_kib: tuple[int, ...] = tuple(w // KiB for w in DEFAULT_WSS)
    victim: VictimConfig = VictimConfig()
    victim_core: int = 0
    interference_core: int = 1


@dataclass(frozen=True)
class RunConfig:
    platform: Union[str, dict] = "rk3568"
    grid: GridConfig = GridConfig()
    latency: LatencyTable = LatencyTable()
    max_bandwidth: float = 320.0            # bytes per 1000 cycles
    write_streaming: tuple[bool, bool, bool] = (True, True, True)
    hw_prefetch: bool = False
    seed: int = 0
    out: str = "results"
    probe_sizes_kib: tuple[int, ...] = (16, 32, 48, 64, 80, 96, 128, 192, 256)
    strided_sets: tuple[int, ...] = (128, 256, 384)
    strided_repetitions: int = 8
    threads: int = 1

    # -- derived objects -----------------------------------------------------
    def platform_config(self) -> PlatformConfig:
        if isinstance(self.platform, str):
            return platform_preset(self.platform)
        return platform_from_dict(self.platform)

    def settings(self) -> RunSettings:
        return RunSettings(self.latency, self.max_bandwidth, tuple(self.write_streaming),
                           self.hw_prefetch, self.seed)

    def victim_spec(self, platform: Optional[PlatformConfig] = None) -> VictimSpec:
        v = self.grid.victim
        p = platform or self.platform_config()
        wss = v.wss_kib * KiB if v.wss_kib is not None else default_victim_wss(p)
        return VictimSpec(wss, v.read_fraction, accesses_per_line=v.accesses_per_line,
                          shuffle_seed=v.shuffle_seed, line_size=p.line_size)

    def sweep_grid(self) -> SweepGrid:
        p = self.platform_config()
        g = self.grid
        return SweepGrid(p, tuple(g.modes), tuple(g.ratios), tuple(g.kinds),
                         tuple(w * KiB for w in g.wss_kib), self.victim_spec(p),
                         victim_core=g.victim_core, interference_core=g.interference_core)

    def validate(self) -> "RunConfig":
        """Build every derived object once so errors surface before a run."""
        try:
            p = self.platform_config()
            self.latency.check(p)
            if self.max_bandwidth <= 0:
                raise ValueError("max_bandwidth must be positive")
            if len(self.write_streaming) != 3:
                raise ValueError("write_streaming needs one flag per level (L1, L2, L3)")
            for r in self.grid.ratios:
                parse_ratio(r)
            self.sweep_grid()
            if self.threads < 1:
                raise ValueError("threads must be >= 1")
        except (KeyError, TypeError, ValueError) as e:
            raise ConfigError(str(e)) from e
        return self

    # -- serialization -------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        if not isinstance(self.platform, str):
            d["platform"] = dict(self.platform)
        return _lists(d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        try:
            d = dict(d)
            unknown = set(d) - {f.name for f in fields(cls)}
            if unknown:
                raise ConfigError(f"unknown config keys: {sorted(unknown)}")
            if "grid" in d:
                g = dict(d["grid"])
                if "victim" in g:
                    g["victim"] = VictimConfig(**g["victim"])
                for k in ("modes", "ratios", "kinds", "wss_kib"):
                    if k in g:
                        g[k] = tuple(g[k])
                d["grid"] = GridConfig(**g)
            if "latency" in d:
                d["latency"] = LatencyTable(**d["latency"])
            for k in ("write_streaming", "probe_sizes_kib", "strided_sets"):
                if k in d:
                    d[k] = tuple(d[k])
            return cls(**d)
        except TypeError as e:
            raise ConfigError(str(e)) from e

    @classmethod
    def from_json(cls, text: str) -> "RunConfig":
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"bad JSON: {e}") from e

    @classmethod
    def load(cls, path) -> "RunConfig":
        with open(path) as f:
            return cls.from_json(f.read())

    def with_overrides(self, **kw) -> "RunConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})


def _lists(x):
    if isinstance(x, dict):
        return {k: _lists(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_lists(v) for v in x]
    return x


def inline_platform(name: str) -> dict:
    """Preset expanded to its full dict form, for editing in a config."""
    return platform_to_dict(platform_preset(name))
