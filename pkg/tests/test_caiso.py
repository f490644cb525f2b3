import pytest
from hypothesis import given, strategies as st

from drmech import caiso
from drmech.caiso import TenTenBaseline

from conftest import params, random_population


def test_unit_adjustment_pays_raw_baseline():
    base = TenTenBaseline(5.0, 4.0)
    assert caiso.caiso_payment(base, 4.0, 0.0, 0.65) == pytest.approx(0.65 * 5.0)


def test_attempted_fifty_percent_inflation_is_capped():
    base = TenTenBaseline(5.0, 4.0)
    assert caiso.caiso_payment(base, 1.5 * 4.0, 0.0, 0.65) == pytest.approx(0.65 * 1.2 * 5.0)
    assert caiso.caiso_payment(base, 0.1, 0.0, 0.65) == pytest.approx(0.65 * 0.8 * 5.0)


def test_payment_never_negative():
    assert caiso.caiso_payment(TenTenBaseline(5.0, 5.0), 5.0, 9.0, 0.65) == 0.0


def test_invalid_history():
    with pytest.raises(caiso.InvalidHistory):
        TenTenBaseline(5.0, 0.0)
    with pytest.raises(caiso.InvalidHistory):
        TenTenBaseline.from_history([], [])
    base = TenTenBaseline.from_history([4.0, 6.0] * 5, [3.0, 5.0] * 5)
    assert (base.raw_baseline, base.prior_avg) == (5.0, 4.0)


def test_strategic_agent_inflates_to_cap():
    base = TenTenBaseline(5.0, 5.0)
    assert caiso.inflation_best_response(base, 0.65, 0.15) == pytest.approx(1.2)
    assert caiso.caiso_inflation_factor(base, 0.65, 0.15) == 1.2


def test_low_reward_does_not_inflate():
    base = TenTenBaseline(5.0, 5.0)
    assert caiso.inflation_best_response(base, 0.10, 0.15) == 1.0
    assert caiso.caiso_inflation_factor(base, 0.10, 0.15) == 1.0


def test_zero_cap_removes_the_incentive():
    base = TenTenBaseline(5.0, 5.0, adjustment_cap=0.0)
    assert caiso.caiso_inflation_factor(base, 0.65, 0.15) == 1.0


@given(st.floats(0.01, 100), st.floats(0.151, 3.0))
def test_factor_is_scale_free(b, reward):
    assert caiso.caiso_inflation_factor(TenTenBaseline(b, b), reward, 0.15) == 1.2


@given(st.floats(0.01, 100), st.floats(0.0, 0.149))
def test_no_inflation_below_retail_price(b, reward):
    assert caiso.caiso_inflation_factor(TenTenBaseline(b, b), reward, 0.15) == 1.0


def test_side_by_side_comparison():
    p = params(D=20.0)
    rows = caiso.compare(random_population(4, 40), p)
    assert rows
    for r in rows:
        assert r.incentive == pytest.approx(r.reward_price - p.pi_e)
        assert r.caiso_factor == (1.2 if r.incentive > 0 else 1.0)
        assert r.srbm_factor == 1.0
