"""Session-scoped runs of the built-in benchmark shared across test modules.

The 40 s offline and rl simulations take tens of seconds each, so every
module that needs them pulls from these fixtures instead of rerunning.
Wall-clock times are captured where a test asserts a runtime budget.
"""

from __future__ import annotations

import dataclasses
import time

import numpy as np
import pytest

from containctl.sim import paper_scenario, run_scenario, synthesize_gains

from helpers import scalar_scenario


@pytest.fixture(scope="session")
def bench_scn():
    return paper_scenario()


@pytest.fixture(scope="session")
def bench_gains(bench_scn):
    return synthesize_gains(bench_scn)


@pytest.fixture(scope="session")
def offline_run(bench_scn, bench_gains):
    t0 = time.perf_counter()
    result = run_scenario(bench_scn, mode="offline", gains=bench_gains)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def rl_run(bench_scn):
    t0 = time.perf_counter()
    result = run_scenario(bench_scn, mode="rl")
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def negative_run(bench_scn, bench_gains):
    ablated = dataclasses.replace(
        bench_gains, K2=tuple(np.zeros_like(K) for K in bench_gains.K2)
    )
    t0 = time.perf_counter()
    result = run_scenario(bench_scn, mode="offline", gains=ablated)
    return result, time.perf_counter() - t0


@pytest.fixture(scope="session")
def scalar_rl_result():
    return run_scenario(scalar_scenario(), mode="rl")
