import logging

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gridmarket import _kernels_py, kernels
from gridmarket.dataio import FIXTURES, Options, load_fixture, options_from_dict
from gridmarket.grid import build_security_constraints, build_topology, compute_ptdf, enumerate_contingencies

logging.getLogger("gridmarket").setLevel(logging.ERROR)

# the backend fixture only swaps module attributes, so sharing it across examples is safe
settings.register_profile("default", suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile("default")

KERNELS = ("first_hits", "ratio_test", "dual_ratio_test", "polygon_vertices")
BACKENDS = ["python"] + (["cython"] if kernels.BACKEND == "cython" else [])


@pytest.fixture(params=BACKENDS)
def backend(request, monkeypatch):
    """Run a test once per available kernel backend."""
    if request.param == "python":
        for name in KERNELS:
            monkeypatch.setattr(kernels, name, getattr(_kernels_py, name))
    return request.param


class Case:
    """A fixture dataset with its PTDF and N-0 / N-1 constraint sets."""

    def __init__(self, name):
        self.name = name
        self.dataset = load_fixture(name)
        T = len(self.dataset.timesteps)
        self.options = options_from_dict({"model_horizon": [0, T], "contingency": {"enabled": True}})
        self.topology = build_topology(self.dataset)
        self.ptdf = compute_ptdf(self.topology)
        self.scenarios = enumerate_contingencies(self.topology, self.options, self.ptdf)
        self.n0 = build_security_constraints(self.ptdf)
        self.n1 = build_security_constraints(self.ptdf, self.scenarios)
        self.bounds = self.dataset.injection_bounds()
        self.balance = len(self.topology.components) == 1


_CASES = {}


def get_case(name):
    if name not in _CASES:
        _CASES[name] = Case(name)
    return _CASES[name]


SMALL = [f for f in FIXTURES if f != "case118.m"]


@pytest.fixture(params=SMALL)
def small_case(request):
    return get_case(request.param)


@pytest.fixture(scope="session")
def case118():
    return get_case("case118.m")


@pytest.fixture(scope="session")
def case118_reduced(case118, tmp_path_factory):
    """N-1 reduction of case118, computed once per session and cached on disk."""
    from gridmarket.cli import reduce_grid

    cache = tmp_path_factory.mktemp("reduction_cache")
    import time

    t0 = time.perf_counter()
    reduced, info = reduce_grid(case118.n1, case118.dataset, cache)
    info["elapsed"] = time.perf_counter() - t0
    return reduced, info, cache


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def default_options(**kw):
    opts = Options()
    for k, v in kw.items():
        setattr(opts, k, v)
    return opts


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for n in sorted(RESULTS):
            terminalreporter.write_line(RESULTS[n])
