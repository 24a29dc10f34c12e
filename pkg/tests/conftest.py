import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from stripwalk.envgen import EnvSpec, Triple, discrete_spec, scalar_triple
from stripwalk.specfile import load_spec, shipped_spec_path

settings.register_profile(
    "default", deadline=None, max_examples=40,
    suppress_health_check=[HealthCheck.too_slow, HealthCheck.data_too_large],
)
settings.load_profile("default")


@pytest.fixture(scope="session")
def scalar_spec():
    return discrete_spec([scalar_triple(0.3, 0.7), scalar_triple(0.7, 0.3)], [0.5, 0.5])


@pytest.fixture(scope="session")
def mirror_spec():
    return load_spec(shipped_spec_path("strip2_mirror.toml")).spec


@pytest.fixture(scope="session")
def dirichlet2():
    return EnvSpec(m=2, epsilon=0.05, kind="dirichlet")


@pytest.fixture(scope="session")
def dirichlet3():
    return EnvSpec(m=3, epsilon=0.05, kind="dirichlet")


def random_triple(rng, m, floor=0.02):
    """Strictly positive stochastic triple with every entry >= floor."""
    w = rng.dirichlet(np.ones(3 * m), size=m)
    w = floor + (1 - 3 * m * floor) * w
    return Triple(w[:, :m], w[:, 2 * m:], w[:, m:2 * m])


_ACCEPTANCE = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion (part) for the summary."""

    def record(key, ok, detail=""):
        """Returns this part's outcome; the summary line ANDs all parts."""
        ok = bool(ok)
        prev = _ACCEPTANCE.get(key)
        both = ok and (prev is None or prev[0])
        text = detail if prev is None else f"{prev[1]}; {detail}"
        _ACCEPTANCE[key] = (both, text)
        print(f"criterion {key}: {'PASS' if ok else 'FAIL'} {detail}")
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_ACCEPTANCE, key=lambda k: (int(str(k).rstrip("abc")), str(k))):
        ok, detail = _ACCEPTANCE[key]
        terminalreporter.write_line(f"criterion {key}: {'PASS' if ok else 'FAIL'}  {detail}")
