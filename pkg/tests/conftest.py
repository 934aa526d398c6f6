import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from swag import tensor as T

settings.register_profile("default", max_examples=40, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture
def f64():
    """Run a test in float64, restoring the previous precision afterwards."""
    before = T.precision_name()
    T.set_precision("f64")
    yield
    T.set_precision(before)


@pytest.fixture
def f32():
    before = T.precision_name()
    T.set_precision("f32")
    yield
    T.set_precision(before)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# one line per acceptance criterion, printed together at the end of the run
_criteria: dict[int, str] = {}


@pytest.fixture(scope="session")
def criterion():
    def record(number: int, ok: bool, detail: str) -> bool:
        line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
        _criteria[number] = line
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _criteria:
        terminalreporter.write_sep("=", "acceptance criteria")
        for number in sorted(_criteria):
            terminalreporter.write_line(_criteria[number])


@pytest.fixture(scope="session")
def resnet_pairs():
    """Standard and SWAG r-resnet50 stylizations of the first five bundled pairs.

    Shared by the optimizer property test and the reference-style-loss
    criterion; returns ``({(pair, swag): RunRecord}, seconds)``.
    """
    import time

    from swag import assets, netzoo as nz, optim as O
    from swag.imageio import load, normalize
    from swag.losses import LossConfig

    start = time.perf_counter()
    net = nz.init_random(nz.preset("resnet50", width_scale=0.25), 0)
    runs = {}
    for i in range(5):
        c = normalize(load(assets.path("content", i)))
        s = normalize(load(assets.path("style", i)))
        for swag in (False, True):
            runs[i, swag] = O.stylize(net, c, s, LossConfig.for_arch(net.spec, swag=swag),
                                      O.OptimConfig(steps=300))
    return runs, time.perf_counter() - start
