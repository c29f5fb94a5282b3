import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from ringdeph.sampler import SamplerConfig, generate_pool

settings.register_profile("default", deadline=None, database=None, derandomize=True,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

_ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_criterion(num: int, title: str, passed: bool, detail: str) -> None:
    _ACCEPTANCE[num] = (title, passed, detail)
    print(f"criterion {num}: {'PASS' if passed else 'FAIL'} {title} [{detail}]")


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        title, passed, detail = _ACCEPTANCE[num]
        terminalreporter.write_line(
            f"criterion {num}: {'PASS' if passed else 'FAIL'} {title} [{detail}]")


@pytest.fixture(scope="session")
def small_pools():
    """Small admissible pools for N = 3..6, keyed by N."""
    return {N: generate_pool(SamplerConfig(N, pool_target=200, batch_size=1024))
            for N in range(3, 7)}


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
