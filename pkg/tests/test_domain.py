import pytest
from hypothesis import given, strategies as st

from drmech.domain import Agent, MarketParams, Report, net_utility, truthful_report


def test_net_utility_at_kink():
    assert net_utility(Agent(0, 5.0, 0.5), 5.0, 0.15) == pytest.approx(1.75)


def test_net_utility_zero_consumption():
    assert net_utility(Agent(0, 5.0, 0.5), 0.0, 0.15) == 0.0


def test_net_utility_above_baseline():
    # pi*b - pi_e*q on the q >= b branch
    assert net_utility(Agent(0, 5.0, 0.5), 8.0, 0.15) == pytest.approx(0.5 * 5 - 0.15 * 8)


def test_negative_consumption_rejected():
    with pytest.raises(ValueError):
        net_utility(Agent(0, 5.0, 0.5), -1.0, 0.15)


@given(b=st.floats(0.5, 10), pi=st.floats(0.2, 2.0), pi_e=st.floats(0.01, 0.19))
def test_slopes_either_side_of_baseline(b, pi, pi_e):
    a = Agent(0, b, pi)
    h = 1e-4 * b
    left = (net_utility(a, b, pi_e) - net_utility(a, b - h, pi_e)) / h
    right = (net_utility(a, b + h, pi_e) - net_utility(a, b, pi_e)) / h
    assert left == pytest.approx(pi - pi_e, abs=1e-6)
    assert right == pytest.approx(-pi_e, abs=1e-6)
    assert right <= left  # concave kink


@given(b=st.floats(0.5, 10), pi=st.floats(0.2, 2.0), qs=st.lists(st.floats(0, 30), min_size=1))
def test_true_baseline_maximises_utility(b, pi, qs):
    a = Agent(0, b, pi)
    best = net_utility(a, b, 0.15)
    assert all(net_utility(a, q, 0.15) <= best + 1e-12 for q in qs)


def test_penalty_defaults_to_retail_price():
    p = MarketParams(pi_e=0.15, pi_o=2.0, pi_max=1.3, D=100, m=10)
    assert p.pi_p == 0.15


@pytest.mark.parametrize("kw", [
    dict(pi_e=0.0), dict(pi_o=-1.0), dict(pi_max=0.1), dict(D=0.0), dict(m=0), dict(pi_p=0.1),
])
def test_market_params_validation(kw):
    base = dict(pi_e=0.15, pi_o=2.0, pi_max=1.3, D=100.0, m=10)
    with pytest.raises(ValueError):
        MarketParams(**{**base, **kw})


def test_reports_reject_negative_values():
    with pytest.raises(ValueError):
        Report(0, -1.0, 0.5)
    with pytest.raises(ValueError):
        Report(0, 1.0, -0.5)


def test_truthful_report():
    a = Agent(3, 4.0, 0.7)
    assert truthful_report(a) == Report(3, 4.0, 0.7)
    assert truthful_report(a, with_mu=False).mu is None
