"""Core data types, configuration parsing and validation.

Everything in here is immutable once built. A :class:`ScenarioConfig` is
validated once and then shared read-only by every replication.
"""

from __future__ import annotations

import dataclasses
import math
import re
from dataclasses import dataclass, field
from typing import Any, Union

import numpy as np

BEACON_SIZE_BYTES = 100
SPEED_OF_LIGHT = 299_792_458.0


class ConfigError(ValueError):
    """Raised for malformed config text (syntax, unknown keys, bad values)."""


@dataclass(frozen=True)
class InvalidConfig:
    field: str
    reason: str

    def __str__(self) -> str:
        return f"{self.field}: {self.reason}"


class InvalidConfigError(ValueError):
    """All invariant violations found in a config, not just the first."""

    def __init__(self, errors: list[InvalidConfig]):
        self.errors = list(errors)
        super().__init__("; ".join(str(e) for e in self.errors))


# --------------------------------------------------------------------------
# protocol constants

@dataclass(frozen=True)
class BeaconRateSet:
    rates: tuple[int, ...] = tuple(range(1, 11))

    @property
    def br_min(self) -> int:
        return self.rates[0]

    @property
    def br_max(self) -> int:
        return self.rates[-1]

    @property
    def k(self) -> int:
        return len(self.rates)

    def index(self, rate: int) -> int:
        return self.rates.index(rate)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.rates, dtype=np.int64)

    def __contains__(self, rate: object) -> bool:
        return rate in self.rates


@dataclass(frozen=True)
class ChannelParams:
    max_q: int = 400
    alpha: float = 0.8

    @property
    def omega(self) -> float:
        return self.alpha * self.max_q


@dataclass(frozen=True)
class SdidiParams:
    d1: float
    d2: float


# The evaluation grid: every 50 m step with d1 < d2 <= 250.
CANONICAL_SDIDI_PAIRS: tuple[tuple[int, int], ...] = tuple(
    (d1, d2)
    for d1 in range(0, 250, 50)
    for d2 in range(50, 300, 50)
    if d1 < d2
)


# --------------------------------------------------------------------------
# strategy descriptors

@dataclass(frozen=True)
class Fredy:
    sdidi: SdidiParams

    @property
    def label(self) -> str:
        return f"SF({self.sdidi.d1:03.0f},{self.sdidi.d2:03.0f})"

    def spec(self) -> str:
        return f"fredy({_num(self.sdidi.d1)},{_num(self.sdidi.d2)})"


@dataclass(frozen=True)
class Difra:
    @property
    def label(self) -> str:
        return "SD"

    def spec(self) -> str:
        return "difra"


@dataclass(frozen=True)
class Fixed:
    rate: int

    @property
    def label(self) -> str:
        return f"FIX({self.rate})"

    def spec(self) -> str:
        return f"fixed({self.rate})"


StrategyKind = Union[Fredy, Difra, Fixed]

_STRATEGY_RE = re.compile(
    r"^\s*(?:(fredy)\s*\(\s*([0-9.]+)\s*,\s*([0-9.]+)\s*\)"
    r"|(difra)|(fixed)\s*\(\s*([0-9]+)\s*\))\s*$",
    re.IGNORECASE,
)


def parse_strategy(text: str) -> StrategyKind:
    """Parse ``fredy(D1,D2)``, ``difra`` or ``fixed(R)``."""
    m = _STRATEGY_RE.match(text)
    if m is None:
        raise ConfigError(f"bad strategy descriptor {text!r}")
    if m.group(1):
        return Fredy(SdidiParams(_parse_number(m.group(2)), _parse_number(m.group(3))))
    if m.group(4):
        return Difra()
    return Fixed(int(m.group(6)))


def fredy(d1: float, d2: float) -> Fredy:
    return Fredy(SdidiParams(d1, d2))


def paper_strategies() -> list[StrategyKind]:
    """The 15 sDiDi configurations plus the DIFRA baseline."""
    return [fredy(d1, d2) for d1, d2 in CANONICAL_SDIDI_PAIRS] + [Difra()]


# --------------------------------------------------------------------------
# per-node protocol objects (scalar API; the engine uses array batches)

class BRBuffer:
    """Per-node tally of rate-change requests, one slot per allowed rate."""

    def __init__(self, rate_set: BeaconRateSet, counts=None):
        self.rate_set = rate_set
        if counts is None:
            self.counts = np.zeros(rate_set.k, dtype=np.int64)
        else:
            self.counts = np.array(counts, dtype=np.int64)
            if self.counts.shape != (rate_set.k,) or (self.counts < 0).any():
                raise ValueError("BRBuffer needs k non-negative counts")

    def add(self, rate: int, n: int = 1) -> None:
        self.counts[self.rate_set.index(rate)] += n

    def clear(self) -> None:
        self.counts[:] = 0

    def total(self) -> int:
        return int(self.counts.sum())

    def copy(self) -> "BRBuffer":
        return BRBuffer(self.rate_set, self.counts.copy())

    def __repr__(self) -> str:
        return f"BRBuffer({self.counts.tolist()})"


@dataclass(frozen=True)
class Beacon:
    sender_id: int
    position: tuple[float, float]
    speed: float
    heading: int
    dbr: int
    timestamp: float
    size_bytes: int = BEACON_SIZE_BYTES


@dataclass
class Vehicle:
    id: int
    position: tuple[float, float]
    lane: int
    speed: float
    direction: int
    current_br: int
    br_buffer: BRBuffer
    adaptation_count: int = 0
    dbr: int | None = None

    def set_rate(self, rate: int) -> None:
        if rate != self.current_br:
            self.adaptation_count += 1
        self.current_br = rate

    def beacon(self, timestamp: float = 0.0) -> Beacon:
        return Beacon(
            sender_id=self.id,
            position=self.position,
            speed=self.speed,
            heading=self.direction,
            dbr=self.current_br if self.dbr is None else self.dbr,
            timestamp=timestamp,
        )


# --------------------------------------------------------------------------
# scenario parameters

@dataclass(frozen=True)
class RadioParams:
    comm_range: float = 250.0
    ref_distances: tuple[float, float, float] = (1.0, 90.0, 500.0)
    exponents: tuple[float, float, float] = (1.9, 3.8, 3.8)
    frequency_hz: float = 5.8e9
    tx_power_dbm: float = 20.0
    # None: calibrate so the deterministic cutoff lands exactly at comm_range
    rx_sensitivity_dbm: float | None = None
    shadowing_sigma_db: float = 0.0


@dataclass(frozen=True)
class MobilityParams:
    # per-direction lane profile, innermost lane first
    lane_speeds_kmh: tuple[float, ...] = (120.0, 100.0, 80.0)
    lane_weights: tuple[float, ...] = (0.25, 0.35, 0.40)
    lane_width: float = 3.5
    time_headway: float = 1.5
    max_accel: float = 1.0
    comfort_decel: float = 1.5
    min_gap: float = 2.0
    exponent: float = 4.0
    vehicle_length: float = 5.0
    substeps: int = 4


@dataclass(frozen=True)
class ScenarioConfig:
    road_length: float = 10_000.0
    lanes: int = 6
    vehicle_count: int = 500
    sim_duration: float = 150.0
    window: float = 1.0
    channel: ChannelParams = field(default_factory=ChannelParams)
    rate_set: BeaconRateSet = field(default_factory=BeaconRateSet)
    strategy: StrategyKind = field(default_factory=lambda: fredy(0, 50))
    replications: int = 50
    base_seed: int = 1
    radio: RadioParams = field(default_factory=RadioParams)
    mobility: MobilityParams = field(default_factory=MobilityParams)
    dedup_senders: bool = False
    cv_textbook: bool = False
    initial_rate: int = 10
    warmup_windows: int = 0
    # experiment grid; empty means "just this config"
    densities: tuple[int, ...] = ()
    strategies: tuple[StrategyKind, ...] = ()

    @property
    def comm_range(self) -> float:
        return self.radio.comm_range

    @property
    def n_windows(self) -> int:
        return int(round(self.sim_duration / self.window))

    @property
    def label(self) -> str:
        return f"{self.vehicle_count}veh"

    def replace(self, **changes: Any) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)


def desk_profile(cfg: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = cfg or ScenarioConfig()
    return cfg.replace(
        road_length=2_000.0,
        sim_duration=60.0,
        replications=20,
        densities=cfg.densities or (100, 200, 400),
        strategies=cfg.strategies or (fredy(0, 50), fredy(0, 250), Difra()),
    )


def paper_profile(cfg: ScenarioConfig | None = None) -> ScenarioConfig:
    cfg = cfg or ScenarioConfig()
    return cfg.replace(
        road_length=10_000.0,
        sim_duration=150.0,
        replications=50,
        densities=cfg.densities or (500, 750, 1000, 1250, 1500, 1750, 2000),
        strategies=cfg.strategies or tuple(paper_strategies()),
    )


# --------------------------------------------------------------------------
# validation

def check_config(cfg: ScenarioConfig) -> list[InvalidConfig]:
    errs: list[InvalidConfig] = []

    def bad(name: str, reason: str) -> None:
        errs.append(InvalidConfig(name, reason))

    rates = cfg.rate_set.rates
    if not rates:
        bad("rates", "rate set is empty")
    elif any(not isinstance(r, (int, np.integer)) or r <= 0 for r in rates):
        bad("rates", "rates must be positive integers")
    elif any(b <= a for a, b in zip(rates, rates[1:])):
        bad("rates", "rates must be strictly increasing")

    ch = cfg.channel
    if not ch.max_q > 0:
        bad("channel.max_q", "must be > 0")
    if not 0.0 <= ch.alpha <= 1.0:
        bad("channel.alpha", "must lie in [0, 1]")

    if not cfg.road_length > 0:
        bad("road_length", "must be > 0")
    if cfg.lanes < 2 or cfg.lanes % 2:
        bad("lanes", "need an even number of lanes (half per direction)")
    elif len(cfg.mobility.lane_speeds_kmh) != cfg.lanes // 2:
        bad("mobility.lane_speeds_kmh", "need one target speed per lane of a direction")
    if cfg.lanes >= 2 and len(cfg.mobility.lane_weights) != cfg.lanes // 2:
        bad("mobility.lane_weights", "need one weight per lane of a direction")
    if any(w < 0 for w in cfg.mobility.lane_weights) or sum(cfg.mobility.lane_weights) <= 0:
        bad("mobility.lane_weights", "weights must be non-negative with positive sum")
    if any(s <= 0 for s in cfg.mobility.lane_speeds_kmh):
        bad("mobility.lane_speeds_kmh", "target speeds must be > 0")
    if cfg.mobility.substeps < 1:
        bad("mobility.substeps", "must be >= 1")
    if cfg.vehicle_count < 1:
        bad("vehicle_count", "must be >= 1")
    if not cfg.window > 0:
        bad("window", "must be > 0")
    if not cfg.sim_duration >= cfg.window:
        bad("sim_duration", "must cover at least one window")
    if cfg.replications < 1:
        bad("replications", "must be >= 1")
    if not 0 <= cfg.base_seed < 2**64:
        bad("base_seed", "must be a 64-bit unsigned integer")
    if cfg.warmup_windows < 0:
        bad("engine.warmup_windows", "must be >= 0")
    if rates and cfg.initial_rate not in rates:
        bad("engine.initial_rate", "must be a member of the rate set")

    r = cfg.radio
    if not r.comm_range > 0:
        bad("comm_range", "must be > 0")
    d0, da, db = r.ref_distances
    if not 0 < d0 < da < db:
        bad("radio.ref_distances", "need 0 < d0 < dA < dB")
    if any(n <= 0 for n in r.exponents):
        bad("radio.exponents", "all exponents must be > 0")
    if r.shadowing_sigma_db < 0:
        bad("radio.shadowing_sigma_db", "must be >= 0")
    if r.comm_range > 0 and 0 < d0 and r.comm_range < d0:
        bad("comm_range", "must be at least the reference distance d0")

    for d in cfg.densities:
        if d < 1:
            bad("experiment.densities", "densities must be >= 1")
    for strat in (cfg.strategy, *cfg.strategies):
        _check_strategy(strat, cfg, bad)
    return errs


def _check_strategy(strat: StrategyKind, cfg: ScenarioConfig, bad) -> None:
    if isinstance(strat, Fredy):
        d1, d2 = strat.sdidi.d1, strat.sdidi.d2
        if not d1 < d2:
            bad("sdidi", "d1 < d2 required")
        if d1 < 0:
            bad("sdidi", "d1 >= 0 required")
        if d2 > cfg.comm_range:
            bad("sdidi", "d2 must not exceed the communication range")
    elif isinstance(strat, Fixed):
        if strat.rate not in cfg.rate_set:
            bad("strategy", f"fixed rate {strat.rate} is not in the rate set")


def validate_config(cfg: ScenarioConfig) -> ScenarioConfig:
    errs = check_config(cfg)
    if errs:
        raise InvalidConfigError(errs)
    return cfg


# --------------------------------------------------------------------------
# text format: flat ``key = value`` lines, dotted sections, ``#`` comments

def _parse_number(text: str) -> float:
    v = float(text)
    if not math.isfinite(v):
        raise ConfigError(f"non-finite number {text!r}")
    return v


def _num(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("true", "yes", "on", "1"):
        return True
    if t in ("false", "no", "off", "0"):
        return False
    raise ConfigError(f"bad boolean {text!r}")


def _floats(text: str) -> tuple[float, ...]:
    return tuple(_parse_number(p) for p in text.split(",") if p.strip())


def _ints(text: str) -> tuple[int, ...]:
    return tuple(int(p) for p in text.split(",") if p.strip())


def _strategies(text: str) -> tuple[StrategyKind, ...]:
    return tuple(parse_strategy(p) for p in text.split(";") if p.strip())


def _sensitivity(text: str) -> float | None:
    return None if text.strip().lower() == "auto" else _parse_number(text)


# key -> (path into the config tree, parser, formatter)
_KEYS: dict[str, tuple[tuple[str, ...], Any, Any]] = {
    "road_length": (("road_length",), _parse_number, _num),
    "lanes": (("lanes",), int, str),
    "vehicle_count": (("vehicle_count",), int, str),
    "sim_duration": (("sim_duration",), _parse_number, _num),
    "window": (("window",), _parse_number, _num),
    "comm_range": (("radio", "comm_range"), _parse_number, _num),
    "replications": (("replications",), int, str),
    "base_seed": (("base_seed",), int, str),
    "strategy": (("strategy",), parse_strategy, lambda s: s.spec()),
    "strategy.dedup_senders": (("dedup_senders",), _parse_bool, lambda b: str(b).lower()),
    "channel.max_q": (("channel", "max_q"), int, str),
    "channel.alpha": (("channel", "alpha"), _parse_number, _num),
    "rates.values": (("rate_set", "rates"), _ints, lambda t: ",".join(map(str, t))),
    "radio.ref_distances": (("radio", "ref_distances"), _floats, lambda t: ",".join(map(_num, t))),
    "radio.exponents": (("radio", "exponents"), _floats, lambda t: ",".join(map(_num, t))),
    "radio.frequency_hz": (("radio", "frequency_hz"), _parse_number, _num),
    "radio.tx_power_dbm": (("radio", "tx_power_dbm"), _parse_number, _num),
    "radio.rx_sensitivity_dbm": (("radio", "rx_sensitivity_dbm"), _sensitivity,
                                 lambda v: "auto" if v is None else _num(v)),
    "radio.shadowing_sigma_db": (("radio", "shadowing_sigma_db"), _parse_number, _num),
    "mobility.lane_speeds_kmh": (("mobility", "lane_speeds_kmh"), _floats, lambda t: ",".join(map(_num, t))),
    "mobility.lane_weights": (("mobility", "lane_weights"), _floats, lambda t: ",".join(map(_num, t))),
    "mobility.lane_width": (("mobility", "lane_width"), _parse_number, _num),
    "mobility.substeps": (("mobility", "substeps"), int, str),
    "idm.time_headway": (("mobility", "time_headway"), _parse_number, _num),
    "idm.max_accel": (("mobility", "max_accel"), _parse_number, _num),
    "idm.comfort_decel": (("mobility", "comfort_decel"), _parse_number, _num),
    "idm.min_gap": (("mobility", "min_gap"), _parse_number, _num),
    "idm.exponent": (("mobility", "exponent"), _parse_number, _num),
    "idm.vehicle_length": (("mobility", "vehicle_length"), _parse_number, _num),
    "metrics.cv_textbook": (("cv_textbook",), _parse_bool, lambda b: str(b).lower()),
    "engine.initial_rate": (("initial_rate",), int, str),
    "engine.warmup_windows": (("warmup_windows",), int, str),
    "experiment.densities": (("densities",), _ints, lambda t: ",".join(map(str, t))),
    "experiment.strategies": (("strategies",), _strategies, lambda t: "; ".join(s.spec() for s in t)),
}

CONFIG_KEYS = tuple(_KEYS)


def _set_path(obj: Any, path: tuple[str, ...], value: Any) -> Any:
    if len(path) == 1:
        return dataclasses.replace(obj, **{path[0]: value})
    child = getattr(obj, path[0])
    return dataclasses.replace(obj, **{path[0]: _set_path(child, path[1:], value)})


def _get_path(obj: Any, path: tuple[str, ...]) -> Any:
    for p in path:
        obj = getattr(obj, p)
    return obj


def apply_overrides(cfg: ScenarioConfig, values: dict[str, str]) -> ScenarioConfig:
    """Apply raw ``key -> text`` assignments; unknown keys are an error."""
    unknown = sorted(k for k in values if k not in _KEYS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    for key, text in values.items():
        path, parse, _ = _KEYS[key]
        try:
            value = parse(text)
        except (ValueError, TypeError) as exc:
            raise ConfigError(f"{key}: {exc}") from exc
        cfg = _set_path(cfg, path, value)
    return cfg


def parse_config_text(text: str, base: ScenarioConfig | None = None) -> ScenarioConfig:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = line.partition("=")
        key = key.strip()
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        values[key] = value.strip()
    return apply_overrides(base or ScenarioConfig(), values)


def load_config(path) -> ScenarioConfig:
    with open(path, encoding="utf-8") as fh:
        return parse_config_text(fh.read())


def dump_config(cfg: ScenarioConfig) -> str:
    lines = []
    for key, (path, _, fmt) in _KEYS.items():
        lines.append(f"{key} = {fmt(_get_path(cfg, path))}")
    return "\n".join(lines) + "\n"
