import numpy as np
import pytest
from hypothesis import HealthCheck, settings, strategies as st

from drmech.domain import EXAMPLE_1, Agent, MarketParams

settings.register_profile("drmech", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("drmech")

# criterion id -> (passed, detail); filled by test_acceptance, printed at the end
ACCEPTANCE = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")


@pytest.fixture
def ex1():
    return EXAMPLE_1


def params(D=10.0, pi_e=0.15, pi_max=1.3, pi_o=2.0, m=10):
    return MarketParams(pi_e=pi_e, pi_o=pi_o, pi_max=pi_max, D=D, m=m)


def agents_from(b, pi):
    return [Agent(j, float(x), float(y)) for j, (x, y) in enumerate(zip(b, pi))]


def random_population(seed, n, b_range=(4.0, 6.0), pi_range=(0.3, 1.3)):
    rng = np.random.default_rng(seed)
    return agents_from(rng.uniform(*b_range, n), rng.uniform(*pi_range, n))


# a population: distinct-ish positive baselines and marginal utilities in (pi_e, pi_max]
population = st.integers(min_value=8, max_value=80).flatmap(
    lambda n: st.tuples(
        st.lists(st.floats(1.0, 8.0), min_size=n, max_size=n),
        st.lists(st.floats(0.2, 1.3), min_size=n, max_size=n)))
