import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from drmech import bounds
from drmech.bounds import EXAMPLE_1_STATS as S

from conftest import params


def test_harmonic_moment_of_uniform():
    assert S.e_inv_pi == pytest.approx(math.log(1.3 / 0.3) / 1.0)
    assert S.e_pi == pytest.approx(0.8)


def test_harmonic_moment_by_sampling_agrees():
    mc = bounds.PopulationStats.from_sampler(lambda rng, n: rng.uniform(0.3, 1.3, n), 5.0, 1.3)
    assert abs(mc.e_inv_pi - S.e_inv_pi) <= 3 * mc.e_inv_pi_se
    assert mc.e_inv_pi_se > 0


def test_example_1_lower_bound(ex1):
    assert bounds.phi_min(S, ex1) == pytest.approx(0.71, abs=0.005)


def test_example_1_baseline_only_cost(ex1):
    assert bounds.phi_bo_upper(S, ex1) == pytest.approx(1.51, abs=0.005)


def test_example_1_srbm_upper_bound(ex1):
    # (0.8 + 0.3) + (2/50 + 2/1000)(0.8/0.15 + 3)
    expect = 0.8 + 2 * 0.15 + (2.0 / (10 * 5) + 2.0 / (10 * 100)) * (0.8 / 0.15 + 3)
    assert bounds.phi_srbm_upper(S, ex1) == pytest.approx(expect)
    assert bounds.phi_srbm_upper(S, ex1) == pytest.approx(1.45, abs=0.01)


def test_pod_and_recruit_count_bounds(ex1):
    en, em = bounds.en_em_upper(S, ex1)
    assert em == pytest.approx(0.8 / 0.15 + 3)
    assert en == pytest.approx((em + 1) * (100 / 5 + 1))
    assert bounds.en_upper(5.0, S, ex1) == pytest.approx(6 * 21)


def test_no_recruitment_cost_leaves_payout_terms(ex1):
    p = replace(ex1, pi_o=0.0)
    assert bounds.phi_min(S, p) == pytest.approx(1 / S.e_inv_pi - p.pi_e)
    assert bounds.phi_srbm_upper(S, p) == pytest.approx(S.e_pi + 2 * p.pi_e)
    assert bounds.phi_bo_upper_large_D(S, p) == pytest.approx(p.pi_max - p.pi_e)


@given(st.floats(0.2, 0.9), st.floats(0.05, 1.0), st.floats(0.5, 10), st.floats(10, 500))
def test_bound_ordering(lo, width, e_b, D):
    stats = bounds.PopulationStats.uniform_pi(lo, lo + width, e_b, pi_max=lo + width)
    p = params(D=D, pi_e=0.1, pi_max=lo + width)
    # 1/E[1/pi] <= E[pi], so the approximation can only overstate the bound
    assert bounds.phi_min_approx(stats, p) >= bounds.phi_min(stats, p) - 1e-12
    assert bounds.phi_min(stats, p) <= bounds.phi_srbm_upper(stats, p)
    assert bounds.phi_min(stats, p) <= bounds.phi_bo_upper(stats, p)


@given(st.floats(0.5, 10))
def test_large_D_limits(e_b):
    stats = replace(S, e_b=e_b)
    p = params(D=1e12)
    assert bounds.phi_bo_upper(stats, p) == pytest.approx(bounds.phi_bo_upper_large_D(stats, p), rel=1e-9)
    assert bounds.phi_srbm_upper(stats, p) == pytest.approx(bounds.phi_srbm_upper_large_D(stats, p), rel=1e-9)


def test_jensen_violation_rejected():
    with pytest.raises(ValueError):
        bounds.PopulationStats(5.0, 0.8, 1.0, 1.3)


def test_point_mass_moments():
    st_ = bounds.PopulationStats.point_pi(0.5, 5.0)
    assert st_.e_inv_pi == 2.0 and st_.pi_max == 0.5


def test_first_passage_constant_increments():
    n = bounds.first_passage_counts(lambda rng, shape: np.full(shape, 5.0), 100.0, 50,
                                    np.random.default_rng(0))
    assert np.all(n == 20)


def test_first_passage_long_horizons():
    # increments far below D force the horizon to be widened
    n = bounds.first_passage_counts(lambda rng, shape: rng.uniform(0, 0.2, shape), 100.0, 200,
                                    np.random.default_rng(0))
    assert n.min() > 500


def test_stopping_time_and_wald():
    rng = np.random.default_rng(4)
    n = bounds.first_passage_counts(lambda r, shape: r.uniform(4, 6, shape), 100.0, 10_000, rng)
    rep = bounds.stopping_time_check(n, 5.0, 100.0)
    assert rep.passed
    assert rep.lower == 20 and rep.upper == 21
    with pytest.raises(ValueError):
        bounds.stopping_time_check(n[:100], 5.0, 100.0)


def test_wald_identity_holds_on_exact_sums():
    rng = np.random.default_rng(9)
    sums, ns = [], []
    for _ in range(5000):
        x = rng.uniform(4, 6, 40)
        k = int(np.argmax(np.cumsum(x) >= 100)) + 1
        sums.append(x[:k].sum())
        ns.append(k)
    assert abs(bounds.wald_check(sums, ns, 5.0)) < 4
