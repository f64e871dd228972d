"""Experiment configuration, run bookkeeping and engine selection.

A run simulates one constant-bit-rate stream split over several lossy paths
with either block FEC or Tetrys protection, classifies every source packet
against its playback deadline and reports aggregate counts plus per-window
snapshots.  Two engines implement identical semantics: a compiled one for
sweep-scale runs and a pure-Python one that composes the public modules
directly.  Both must produce equal ledgers for equal configs; parity tests
enforce this.
"""

import math
import os
from dataclasses import dataclass, field

from . import ols, rng, scheduler
from .channel import PathConfig
from .fec_block import FecParams
from .tetrys import TetrysParams

OLS_ORIGINAL = "original"
OLS_MODIFIED = "modified"
OLS_OFF = "off"
OLS_MODES = (OLS_ORIGINAL, OLS_MODIFIED, OLS_OFF)

# seed namespace tags: forward chains, reverse (ack) chain, repair stream
_TAG_PATH = 0x50415448
_TAG_ACK = 0x41434B
_TAG_STREAM = 0x53545245


@dataclass(frozen=True)
class ExperimentConfig:
    paths: tuple
    coding: object  # FecParams or TetrysParams
    duration_s: float
    strategy: str = scheduler.ANY
    ols_mode: str = OLS_ORIGINAL
    theta: float = ols.THETA
    delta_l: float = ols.DELTA_L
    fixed_loads: tuple = None  # only with ols_mode="off"; None means uniform
    rate_kbps: float = 1900.0
    packet_bytes: int = 210
    deadline_ms: float = 150.0  # math.inf disables the deadline
    ack_period_ms: float = 10.0
    adapt_window_s: float = 1.0
    seed: int = 1
    rate_includes_repairs: bool = False
    drain_ms: float = 2000.0
    apply_strategy_to_fec: bool = False

    def __post_init__(self):
        object.__setattr__(self, "paths", tuple(self.paths))
        if not self.paths:
            raise ValueError("need at least one path")
        for p in self.paths:
            if not isinstance(p, PathConfig):
                raise ValueError(f"paths must be PathConfig, got {type(p).__name__}")
        if not isinstance(self.coding, (FecParams, TetrysParams)):
            raise ValueError(f"coding must be FecParams or TetrysParams, got {self.coding!r}")
        if self.strategy not in scheduler.STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.ols_mode not in OLS_MODES:
            raise ValueError(f"unknown ols_mode {self.ols_mode!r}")
        if self.fixed_loads is not None:
            if self.ols_mode != OLS_OFF:
                raise ValueError("fixed_loads requires ols_mode='off'")
            object.__setattr__(self, "fixed_loads", tuple(float(s) for s in self.fixed_loads))
            problem = scheduler.check_shares(self.fixed_loads)
            if problem:
                raise ValueError(f"fixed_loads invalid: {problem}")
            if len(self.fixed_loads) != len(self.paths):
                raise ValueError("fixed_loads size does not match path count")
        for name in ("duration_s", "rate_kbps", "ack_period_ms", "adapt_window_s"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.packet_bytes <= 0:
            raise ValueError("packet_bytes must be positive")
        if not (self.deadline_ms > 0.0):
            raise ValueError("deadline_ms must be positive (math.inf allowed)")
        if self.drain_ms < 0.0:
            raise ValueError("drain_ms must be >= 0")

    @property
    def is_tetrys(self):
        return isinstance(self.coding, TetrysParams)

    @property
    def source_interval_ms(self):
        """Source spacing for the configured stream rate.

        By default the configured rate is the source-packet rate and repairs
        ride on top; with rate_includes_repairs the wire rate is held at
        rate_kbps instead and sources are spaced out accordingly.
        """
        per_packet = self.packet_bytes * 8.0 / self.rate_kbps  # ms
        if self.rate_includes_repairs:
            if self.is_tetrys:
                per_packet *= (self.coding.k + 1) / self.coding.k
            else:
                per_packet *= self.coding.n / self.coding.k
        return per_packet


@dataclass(frozen=True)
class RunPlan:
    """Every derived quantity both engines must agree on, computed once."""

    interval_ms: float
    n_sources: int
    duration_ms: float
    window_ms: float
    n_windows: int
    t_end_ms: float
    path_seeds: tuple
    ack_seed: int
    stream_seed: int


def plan(config):
    interval = config.source_interval_ms
    duration_ms = config.duration_s * 1000.0
    n_sources = int(math.ceil(duration_ms / interval - 1e-9))
    if n_sources < 1:
        raise ValueError("duration too short for a single source packet")
    window_ms = config.adapt_window_s * 1000.0
    n_windows = int(math.floor(duration_ms / window_ms + 1e-9))
    return RunPlan(
        interval_ms=interval,
        n_sources=n_sources,
        duration_ms=duration_ms,
        window_ms=window_ms,
        n_windows=n_windows,
        t_end_ms=duration_ms + config.drain_ms,
        path_seeds=tuple(rng.derive_seed(config.seed, _TAG_PATH, i)
                         for i in range(len(config.paths))),
        ack_seed=rng.derive_seed(config.seed, _TAG_ACK),
        stream_seed=rng.derive_seed(config.seed, _TAG_STREAM),
    )


@dataclass
class WindowRecord:
    index: int
    end_ms: float
    path_sent: tuple
    path_lost: tuple
    info_loss: float
    loads: tuple


@dataclass
class PerSourceDetails:
    send_ms: list
    known_ms: list  # None when never known
    how: list  # 0 unknown, 1 arrived directly, 2 decoded


@dataclass
class MetricsLedger:
    n_paths: int
    sources_sent: int
    delivered_on_time: int
    recovered_on_time: int
    late: int
    unrecovered: int
    repairs_sent: int
    acks_sent: int
    acks_lost: int
    path_sent: tuple
    path_lost: tuple
    path_source_sent: tuple
    path_repair_sent: tuple
    windows: list
    engine: str = field(compare=False, default="?")
    details: PerSourceDetails = field(compare=False, default=None, repr=False)

    @property
    def information_loss_rate(self):
        if self.sources_sent == 0:
            return 0.0
        return (self.late + self.unrecovered) / self.sources_sent

    @property
    def wire_packets(self):
        return sum(self.path_sent)

    def validate(self):
        parts = (self.delivered_on_time + self.recovered_on_time
                 + self.late + self.unrecovered)
        if parts != self.sources_sent:
            raise AssertionError(
                f"outcome counts {parts} do not add up to {self.sources_sent} sources")
        if sum(self.path_source_sent) != self.sources_sent:
            raise AssertionError("per-path source counts do not add up")
        if sum(self.path_repair_sent) != self.repairs_sent:
            raise AssertionError("per-path repair counts do not add up")
        for i in range(self.n_paths):
            if self.path_sent[i] != self.path_source_sent[i] + self.path_repair_sent[i]:
                raise AssertionError(f"path {i} class split inconsistent")


def on_time(send_ms, known_ms, deadline_ms):
    """Deadline rule: known by send + deadline, boundary inclusive."""
    return known_ms is not None and known_ms <= send_ms + deadline_ms


def make_controller(config):
    """OLS controller for a run, or None when adaptation is off."""
    if config.ols_mode == OLS_OFF:
        return None
    theta = config.theta if config.ols_mode == OLS_MODIFIED else None
    return ols.OlsController(len(config.paths), delta_l=config.delta_l, theta=theta)


def initial_loads(config):
    if config.fixed_loads is not None:
        return scheduler.LoadVector(config.fixed_loads)
    return ols.bootstrap(len(config.paths))


def compiled_available():
    try:
        from . import _engine  # noqa: F401
    except ImportError:
        return False
    return True


def _pick_engine(engine):
    if engine == "auto":
        engine = os.environ.get("MPTETRYS_ENGINE") or "auto"
    if engine == "auto":
        return "compiled" if compiled_available() else "python"
    if engine not in ("compiled", "python"):
        raise ValueError(f"unknown engine {engine!r}")
    if engine == "compiled" and not compiled_available():
        raise RuntimeError("compiled engine requested but the extension is not built")
    return engine


def run(config, engine="auto", trace=None, collect_details=False):
    """Simulate one experiment and return its MetricsLedger.

    ``trace`` is an optional callable fed one dict per simulation event;
    tracing and collect_details force the Python engine.
    """
    chosen = _pick_engine(engine)
    if chosen == "compiled" and (trace is not None or collect_details):
        chosen = "python"
    if chosen == "compiled":
        from . import _engine
        ledger = _engine.run_compiled(config)
    else:
        from ._pyengine import PyEngine
        ledger = PyEngine(config, trace=trace, collect_details=collect_details).run()
    ledger.validate()
    return ledger
