import numpy as np
import pytest

from bigfoot import ContactState, GeneralizedState, default_params
from bigfoot.kinematics import consistent_rates


@pytest.fixture(scope="session")
def params():
    return default_params()


def random_state(rng, contact=None, params=None, phi_range=0.5, rate=5.0, consistent=True):
    """Generic state; with ``consistent`` the planar rates obey rolling."""
    if contact is None:
        contact = ContactState(int(rng.integers(0, 4)))
    q = np.concatenate([rng.uniform(-0.6, 0.6, 2), [rng.uniform(-phi_range, phi_range)],
                        [rng.uniform(-np.pi, np.pi)], rng.uniform(-0.01, 0.01, 2)])
    rates = rng.uniform(-rate, rate, 4)
    if consistent:
        qd = consistent_rates(q, rates, contact, params or default_params())
    else:
        qd = np.concatenate([rates, rng.uniform(-0.01, 0.01, 2)])
    return GeneralizedState(q, qd, contact)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
