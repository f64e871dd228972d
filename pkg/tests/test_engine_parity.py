"""The compiled engine must reproduce the Python engine ledger for ledger.

Equality here is exact: every count, every per-window snapshot, every load
share, down to the float.  Both engines draw from the same splitmix64
streams and share one Python adaptation controller, so any divergence is a
bug, not noise.
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
from mptetrys.channel import GILBERT_ELLIOT
from mptetrys import simcore

pytestmark = pytest.mark.skipif(
    not simcore.compiled_available(),
    reason="compiled engine not built",
)

THREE_PATHS = (
    PathConfig(80.0, LossModel(GILBERT_ELLIOT, 0.14, 2.0)),
    PathConfig(60.0, LossModel(UNIFORM, 0.10)),
    PathConfig(50.0, LossModel(GILBERT_ELLIOT, 0.12, 3.0)),
)


def both(cfg):
    a = run(cfg, engine="python")
    b = run(cfg, engine="compiled")
    assert a.engine == "python" and b.engine == "compiled"
    return a, b


def assert_equal_ledgers(cfg):
    a, b = both(cfg)
    assert a == b  # dataclass equality covers counts and window snapshots
    assert a.windows == b.windows
    assert a.information_loss_rate == b.information_loss_rate


@pytest.mark.parametrize("strategy", ["long", "short", "any"])
@pytest.mark.parametrize("ols_mode", ["original", "modified", "off"])
def test_tetrys_strategies_and_adaptation(strategy, ols_mode):
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=TetrysParams(k=3),
        duration_s=8.0,
        strategy=strategy,
        ols_mode=ols_mode,
        seed=5,
    ))


@pytest.mark.parametrize("seed", [1, 2, 3, 4])
def test_tetrys_seeds(seed):
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=TetrysParams(k=3),
        duration_s=10.0,
        strategy="long",
        seed=seed,
    ))


def test_tetrys_over_capacity_backlog():
    # repair budget below the loss rate: the pending system keeps growing,
    # which is the worst case for the echelon bookkeeping; kept short because
    # the reference engine is quadratic in the backlog
    assert_equal_ledgers(ExperimentConfig(
        paths=(PathConfig(40.0, LossModel(UNIFORM, 0.18)),),
        coding=TetrysParams(k=9),
        duration_s=2.0,
        drain_ms=1000.0,
        seed=13,
    ))


def test_tetrys_single_lossy_path_long_drain():
    assert_equal_ledgers(ExperimentConfig(
        paths=(PathConfig(25.0, LossModel(GILBERT_ELLIOT, 0.15, 2.5)),),
        coding=TetrysParams(k=3),
        duration_s=12.0,
        deadline_ms=math.inf,
        drain_ms=5000.0,
        seed=9,
    ))


def test_tetrys_bursty_loss_elastic_window():
    # long loss bursts stack several pending equations at once; the echelon
    # bookkeeping must still agree between implementations
    assert_equal_ledgers(ExperimentConfig(
        paths=(PathConfig(40.0, LossModel(GILBERT_ELLIOT, 0.20, 6.0)),
               PathConfig(90.0, LossModel(UNIFORM, 0.15))),
        coding=TetrysParams(k=3),
        duration_s=4.0,
        strategy="short",
        drain_ms=2500.0,
        seed=3,
    ))


def test_tetrys_rate_includes_repairs_and_fixed_loads():
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=TetrysParams(k=3),
        duration_s=7.0,
        strategy="long",
        ols_mode="off",
        fixed_loads=(0.5, 0.3, 0.2),
        rate_includes_repairs=True,
        seed=12,
    ))


@pytest.mark.parametrize("k,n", [(15, 20), (4, 6), (1, 2)])
def test_fec_block_codes(k, n):
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=FecParams(k=k, n=n),
        duration_s=9.0,
        seed=6,
    ))


def test_fec_with_placement_strategy_applied():
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=FecParams(k=15, n=20),
        duration_s=9.0,
        strategy="long",
        apply_strategy_to_fec=True,
        seed=8,
    ))


def test_fec_partial_final_block():
    cfg = ExperimentConfig(
        paths=(PathConfig(30.0, LossModel(UNIFORM, 0.2)),),
        coding=FecParams(k=7, n=9),
        duration_s=1.0012,
        rate_kbps=1680.0,
        seed=4,
    )
    assert simcore.plan(cfg).n_sources % 7 != 0
    assert_equal_ledgers(cfg)


def test_modified_controller_with_custom_theta():
    assert_equal_ledgers(ExperimentConfig(
        paths=THREE_PATHS,
        coding=TetrysParams(k=3),
        duration_s=15.0,
        strategy="long",
        ols_mode="modified",
        theta=0.02,
        adapt_window_s=0.5,
        seed=21,
    ))


def test_deadline_on_boundary():
    assert_equal_ledgers(ExperimentConfig(
        paths=(PathConfig(150.0, LossModel(UNIFORM, 0.05)),),
        coding=TetrysParams(k=9),
        duration_s=4.0,
        deadline_ms=150.0,
        rate_kbps=1680.0,
        seed=2,
    ))
