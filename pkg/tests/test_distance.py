import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.stats import qmc

from darts_tof.distance import (QRNG_TABLE, CandidateSet, DistanceSampleContext, gen_candidates, qrng_row,
                                ris_resample, sample_scatter_event, target_density)
from darts_tof.media import Medium
from darts_tof.stats import DistanceCase, default_distance_cases, default_medium, ris_draws, ris_unbiasedness, suite_da_distance

M = Medium(4.0, 0.2, 0.3, 1.0, c=1.0)


def _ctx(d_max=2.0, res=1.5, emitter=(0, 0.3, 0.4)):
    return DistanceSampleContext(np.zeros(3), np.array([0.0, 0.0, 1.0]), d_max, res, np.array(emitter, float), M)


def test_qrng_table_is_sobol_prefix():
    ref = qmc.Sobol(d=8, scramble=False).random(32)
    assert QRNG_TABLE.shape == (32, 8)
    assert np.array_equal(QRNG_TABLE, ref)


@given(eps=st.floats(0, 1, exclude_max=True), row=st.integers(0, 31))
def test_qrng_row_rotation(eps, row):
    r = qrng_row(np.random.default_rng(0), eps0=eps, row=row)
    assert np.all((r >= 0) & (r < 1))
    assert np.allclose(r, (QRNG_TABLE[row] + eps) % 1.0, atol=1e-15)


def test_qrng_rows_have_lower_discrepancy_than_iid():
    rng = np.random.default_rng(1)
    sob = np.stack([qrng_row(rng) for _ in range(32)])
    iid = rng.random((32, 8))
    # the unrotated table itself is a (t, m, s)-net prefix
    assert qmc.discrepancy(QRNG_TABLE) < qmc.discrepancy(iid)
    assert sob.shape == (32, 8)


@given(u=st.floats(0, 1, exclude_max=True), d_max=st.floats(0.01, 50))
def test_scatter_event_probability(u, d_max):
    is_med, p_m = sample_scatter_event(d_max, M, u)
    assert p_m == pytest.approx(1 - math.exp(-M.sigma_t * d_max))
    assert is_med == (u < p_m)


def test_candidates_within_segment():
    cs = gen_candidates(_ctx(), np.linspace(0, 0.999999, 8))
    assert len(cs) == 8
    assert np.all(cs.distances >= 0) and np.all(cs.distances < 2.0)
    assert cs.distances[0] == 0.0
    assert np.all(np.diff(cs.distances) > 0)


def test_candidate_endpoint_u_to_one_reaches_d_max():
    cs = gen_candidates(_ctx(d_max=1.0), [1.0 - 1e-15])
    assert cs.distances[0] == pytest.approx(1.0, rel=1e-9)


def test_target_zero_outside_causal_ball():
    ctx = _ctx(res=0.5, emitter=(0, 0, 5))
    assert target_density(0.1, ctx) == 0.0
    assert target_density(0.6, _ctx(res=0.5)) == 0.0  # residual exhausted


def test_resample_all_zero_weights_terminates():
    cs = gen_candidates(_ctx(res=0.5, emitter=(0, 0, 5)), np.linspace(0.1, 0.9, 8))
    assert np.all(cs.ris_weights == 0)
    assert ris_resample(cs, 0.3) is None
    _, _, ok = ris_draws(DistanceCase((0, 0, 0), (0, 0, 1), (0, 0, 5), 2.0, 0.5), M, 100, 8)
    assert not ok.any()


def test_resample_picks_proportionally():
    cs = CandidateSet(np.array([0.1, 0.2, 0.3]), np.array([1.0, 1.0, 1.0]), np.array([1.0, 0.0, 3.0]))
    assert ris_resample(cs, 0.0)[0] == 0.1
    assert ris_resample(cs, 0.3)[0] == 0.3
    d, w = ris_resample(cs, 0.9)
    # weight = sum(w) / (N * target) = 4 / (3 * 3)
    assert w == pytest.approx(4 / 9)


def test_kernel_draws_are_in_range():
    case = default_distance_cases()[0]
    d, r, ok = ris_draws(case, M, 20000, 8)
    # candidates outside the emitter's causal reach carry zero weight
    assert ok.mean() > 0.9
    assert np.all((d[ok] >= 0) & (d[ok] < min(case.d_max, case.residual_length)))
    assert np.all(r[ok] > 0) and np.all(np.isfinite(r))


@pytest.mark.parametrize("i", range(5))
def test_distribution_chi_square(i):
    res = suite_da_distance(default_distance_cases()[i], default_medium(), n=100_000, n_ris=256)
    assert res.p_value > 0.01, res.line()


@pytest.mark.parametrize("h", [lambda d: np.ones_like(d), lambda d: 1.0 + 2.0 * d], ids=["const", "linear"])
def test_ris_unbiased_quick(h):
    est, se, ref = ris_unbiasedness(default_distance_cases()[1], default_medium(), h, n=200_000)
    assert abs(est - ref) < 3.5 * se
