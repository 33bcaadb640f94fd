import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from darts_tof.rng import new_state, next_float, next_u64
from darts_tof.stats import (PdfTestResult, check_continuous, chi_square, negative_control, positive_control,
                             suite_hg)


def test_splitmix64_reference_sequence():
    # the canonical splitmix64 stream from state 0
    s = np.zeros(1, dtype=np.uint64)
    assert [int(next_u64(s)) for _ in range(3)] == [0xE220A8397B1DCDAF, 0x6E789E6AA1B965F4, 0x06C45D188009454F]


@given(seed=st.integers(0, 2**64 - 1), a=st.integers(0, 2**40), b=st.integers(0, 2**40))
def test_streams_are_reproducible_and_in_unit_interval(seed, a, b):
    seed = np.uint64(seed)
    s1, s2 = new_state(seed, a, b), new_state(seed, a, b)
    x = [next_float(s1) for _ in range(4)]
    assert x == [next_float(s2) for _ in range(4)]
    assert all(0.0 <= v < 1.0 for v in x)


def test_neighbouring_streams_differ():
    firsts = {next_float(new_state(7, p, 0)) for p in range(1000)}
    assert len(firsts) == 1000
    u = np.array([next_float(new_state(7, p, s)) for p in range(200) for s in range(50)])
    assert abs(u.mean() - 0.5) < 4 * math.sqrt(1 / 12 / len(u))


def test_chi_square_exact_fit_and_pooling():
    stat, dof, p = chi_square([25, 25, 25, 25], [0.25] * 4)
    assert stat == 0 and dof == 3 and p == 1.0
    # tiny expected counts are pooled into their neighbours
    stat, dof, p = chi_square([50, 48, 1, 1], [0.5, 0.48, 0.01, 0.01])
    assert dof == 1


def test_chi_square_impossible_category():
    assert chi_square([10, 5], [1.0, 0.0])[2] == 0.0
    with pytest.raises(ValueError):
        chi_square([1, 1], [0.5, 0.6])


def test_controls():
    assert not negative_control().passed
    assert positive_control().passed


def test_out_of_support_samples_fail():
    r = check_continuous("x", np.array([0.1, 0.2, 1.5]), lambda x: 1.0, 0.0, 1.0, 2)
    assert r.p_value == 0.0 and not r.passed


@pytest.mark.parametrize("g", [-0.7, 0.0, 0.9])
def test_hg_sampler_suite(g):
    assert suite_hg(g, 200_000).passed


def test_result_line():
    r = PdfTestResult("demo", 1.0, 3, 0.5, 10)
    assert r.line().startswith("PASS") and "demo" in r.line()
