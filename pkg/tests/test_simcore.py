"""End-to-end tests of the simulation core on the pure-Python engine.

Rates are picked to make the source interval an exact float (210 bytes at
1680 kb/s is exactly 1 ms) so slot times, window boundaries and deadline
arithmetic can be asserted without tolerance.
"""

import math

import pytest

from mptetrys import (
    ExperimentConfig,
    FecParams,
    LossModel,
    PathConfig,
    TetrysParams,
    UNIFORM,
    run,
)
from mptetrys import simcore
from mptetrys.scheduler import LONG


def path(delay=20.0, plr=0.0):
    return PathConfig(prop_delay_ms=delay, loss=LossModel(UNIFORM, plr=plr))


def config(**kw):
    base = dict(
        paths=(path(),),
        coding=TetrysParams(k=9),
        duration_s=2.0,
        ols_mode=simcore.OLS_OFF,
        rate_kbps=1680.0,  # 210-byte packets spaced exactly 1 ms apart
        packet_bytes=210,
        seed=7,
    )
    base.update(kw)
    return ExperimentConfig(**base)


# -- configuration and planning -----------------------------------------------


def test_config_validation():
    with pytest.raises(ValueError):
        config(paths=())
    with pytest.raises(ValueError):
        config(paths=("not a path",))
    with pytest.raises(ValueError):
        config(coding="raptor")
    with pytest.raises(ValueError):
        config(strategy="median")
    with pytest.raises(ValueError):
        config(ols_mode="sometimes")
    with pytest.raises(ValueError):
        config(ols_mode=simcore.OLS_ORIGINAL, fixed_loads=(1.0,))
    with pytest.raises(ValueError):
        config(fixed_loads=(0.7, 0.7))
    with pytest.raises(ValueError):
        config(paths=(path(), path()), fixed_loads=(1.0,))
    with pytest.raises(ValueError):
        config(duration_s=0.0)
    with pytest.raises(ValueError):
        config(deadline_ms=0.0)
    with pytest.raises(ValueError):
        config(drain_ms=-1.0)
    assert config(deadline_ms=math.inf).deadline_ms == math.inf


def test_source_interval_arithmetic():
    assert config().source_interval_ms == 1.0
    assert config(rate_kbps=1900.0).source_interval_ms == 210 * 8.0 / 1900.0
    # holding the wire rate constant stretches the source spacing by the
    # coding overhead: (k+1)/k for the sliding window, n/k for block FEC
    stretched = config(coding=TetrysParams(k=3), rate_includes_repairs=True)
    assert stretched.source_interval_ms == pytest.approx(4.0 / 3.0)
    fec = config(coding=FecParams(15, 20), rate_includes_repairs=True)
    assert fec.source_interval_ms == pytest.approx(4.0 / 3.0)


def test_plan_counts_and_seeds():
    p = simcore.plan(config(duration_s=1.0005, paths=(path(), path(30.0))))
    assert p.interval_ms == 1.0
    assert p.n_sources == 1001  # partial trailing interval still emits
    assert p.n_windows == 1  # only whole adaptation windows count
    assert p.t_end_ms == 1000.5 + 2000.0
    assert len(set(p.path_seeds)) == 2
    assert len({p.path_seeds[0], p.path_seeds[1], p.ack_seed, p.stream_seed}) == 4
    assert simcore.plan(config(duration_s=1.0005, paths=(path(), path(30.0)))) == p


def test_on_time_boundary_is_inclusive():
    assert simcore.on_time(10.0, 160.0, 150.0)
    assert not simcore.on_time(10.0, 160.0 + 1e-9, 150.0)
    assert not simcore.on_time(10.0, None, 150.0)
    assert simcore.on_time(10.0, 1e9, math.inf)


def test_ledger_validate_catches_bad_counts():
    ledger = run(config(duration_s=0.5), engine="python")
    ledger.delivered_on_time += 1
    with pytest.raises(AssertionError):
        ledger.validate()


# -- lossless baselines --------------------------------------------------------


def test_lossless_tetrys_delivers_everything_on_time():
    cfg = config(drain_ms=0.0)
    ledger = run(cfg, engine="python")
    n = simcore.plan(cfg).n_sources
    assert ledger.sources_sent == n == 2000
    assert ledger.delivered_on_time == n
    assert ledger.recovered_on_time == ledger.late == ledger.unrecovered == 0
    assert ledger.information_loss_rate == 0.0
    # one repair rides along with every k-th source and nothing else
    assert ledger.repairs_sent == n // 9
    assert ledger.wire_packets == n + n // 9
    assert ledger.path_lost == (0,)


def test_lossless_fec_counts_block_repairs():
    cfg = config(coding=FecParams(k=5, n=7), duration_s=1.0003)
    ledger = run(cfg, engine="python")
    n = simcore.plan(cfg).n_sources
    assert n == 1001  # 200 full blocks plus a 1-source partial block
    assert ledger.delivered_on_time == n
    assert ledger.recovered_on_time == 0
    # every block, including the flushed partial one, emits n - k repairs
    assert ledger.repairs_sent == (n // 5 + 1) * 2
    ledger.validate()


# -- determinism ---------------------------------------------------------------


def test_runs_are_reproducible():
    cfg = config(paths=(path(20.0, 0.1), path(35.0, 0.05)),
                 ols_mode=simcore.OLS_ORIGINAL, strategy=LONG,
                 duration_s=3.0)
    a = run(cfg, engine="python")
    b = run(cfg, engine="python")
    assert a == b
    assert a.windows == b.windows


def test_seed_changes_the_loss_pattern():
    base = dict(paths=(path(20.0, 0.1),), duration_s=2.0)
    a = run(config(**base, seed=1), engine="python")
    b = run(config(**base, seed=2), engine="python")
    assert a.path_lost != b.path_lost


# -- deadline classification ---------------------------------------------------


def test_deadline_boundary_arrivals_count_as_on_time():
    exact = run(config(paths=(path(delay=150.0),), deadline_ms=150.0),
                engine="python")
    assert exact.delivered_on_time == exact.sources_sent
    assert exact.late == 0

    over = run(config(paths=(path(delay=150.0),), deadline_ms=149.999),
               engine="python")
    assert over.late == over.sources_sent
    assert over.delivered_on_time == 0
    assert over.information_loss_rate == 1.0


def test_infinite_deadline_with_drain_recovers_every_source():
    cfg = config(paths=(path(20.0, 0.05),), deadline_ms=math.inf,
                 duration_s=5.0, drain_ms=4000.0)
    ledger = run(cfg, engine="python")
    assert ledger.unrecovered == 0
    assert ledger.late == 0
    assert ledger.recovered_on_time > 0
    assert (ledger.delivered_on_time + ledger.recovered_on_time
            == ledger.sources_sent)


# -- window bookkeeping --------------------------------------------------------


def test_window_snapshots_cover_all_traffic():
    cfg = config(paths=(path(20.0), path(30.0), path(40.0)),
                 ols_mode=simcore.OLS_ORIGINAL, duration_s=5.0,
                 drain_ms=0.0)
    ledger = run(cfg, engine="python")
    assert len(ledger.windows) == 5
    for w, rec in enumerate(ledger.windows):
        assert rec.index == w + 1  # numbered by the boundary that closed them
        assert rec.end_ms == (w + 1) * 1000.0
        assert rec.info_loss == 0.0
        assert sum(rec.loads) == pytest.approx(1.0, abs=1e-9)
    for i in range(3):
        assert sum(rec.path_sent[i] for rec in ledger.windows) == ledger.path_sent[i]


def test_fixed_loads_stay_fixed():
    cfg = config(paths=(path(20.0), path(30.0)), fixed_loads=(0.75, 0.25),
                 duration_s=3.0)
    ledger = run(cfg, engine="python")
    assert all(rec.loads == (0.75, 0.25) for rec in ledger.windows)
    total = ledger.wire_packets
    assert ledger.path_sent[0] / total == pytest.approx(0.75, abs=0.01)


# -- cross-checks against the event trace --------------------------------------


def test_fec_details_match_trace_reconstruction():
    cfg = config(paths=(path(20.0, 0.2),), coding=FecParams(k=5, n=7),
                 duration_s=1.0)
    events = []
    ledger = run(cfg, engine="python", trace=events.append,
                 collect_details=True)
    n = ledger.sources_sent
    k = 5

    def block_size(b):
        return min(n, (b + 1) * k) - b * k

    # replay arrivals with the documented rule: a source is known at its own
    # arrival, or when its block's k-th distinct packet lands
    known = [None] * n
    how = [0] * n
    counts = {}
    for ev in events:
        if ev["ev"] != "rx":
            continue
        if ev["kind"] == 0:
            blk = ev["a"] // k
            if known[ev["a"]] is None:
                known[ev["a"]] = ev["t"]
                how[ev["a"]] = 1
        else:
            blk = ev["a"]
        counts[blk] = counts.get(blk, 0) + 1
        if counts[blk] == block_size(blk):
            for s in range(blk * k, blk * k + block_size(blk)):
                if known[s] is None:
                    known[s] = ev["t"]
                    how[s] = 2

    assert ledger.details.known_ms == known
    assert ledger.details.how == how
    assert ledger.recovered_on_time > 0


def test_tetrys_details_match_trace_reconstruction():
    cfg = config(paths=(path(20.0, 0.1),), duration_s=2.0)
    events = []
    ledger = run(cfg, engine="python", trace=events.append,
                 collect_details=True)
    n = ledger.sources_sent
    known = [None] * n
    how = [0] * n
    for ev in events:
        if ev["ev"] != "rx":
            continue
        if ev["kind"] == 0 and known[ev["a"]] is None:
            known[ev["a"]] = ev["t"]
            how[ev["a"]] = 1
        for s in ev["decoded"]:
            if known[s] is None:
                known[s] = ev["t"]
                how[s] = 2
    assert ledger.details.known_ms == known
    assert ledger.details.how == how
    assert ledger.details.send_ms == [float(i) for i in range(n)]


# -- engine selection ----------------------------------------------------------


def test_engine_selection_errors():
    with pytest.raises(ValueError):
        run(config(duration_s=0.1), engine="fortran")
    if not simcore.compiled_available():
        with pytest.raises(RuntimeError):
            run(config(duration_s=0.1), engine="compiled")


def test_engine_env_override(monkeypatch):
    monkeypatch.setenv("MPTETRYS_ENGINE", "python")
    ledger = run(config(duration_s=0.2), engine="auto")
    assert ledger.engine == "python"
    monkeypatch.setenv("MPTETRYS_ENGINE", "fortran")
    with pytest.raises(ValueError):
        run(config(duration_s=0.2), engine="auto")
    monkeypatch.setenv("MPTETRYS_ENGINE", "")
    ledger = run(config(duration_s=0.2), engine="auto")
    assert ledger.engine in ("python", "compiled")
