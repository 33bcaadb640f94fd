import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from darts_tof.diffusion import FLUX_MAX, DaQuery, causal_valid, da_flux, da_flux_nb, da_log_flux_nb
from darts_tof.media import Medium

MEDIA = [Medium(4.5, 0.15, 0.3, 1.0, c=1.0), Medium(10.0, 1.0, 0.0, 1.33, c=1.0),
         Medium(100.0, 0.5, 0.8, 1.4)]


def _spatial_integral(m, dt):
    # Gaussian in r with variance 2 D c dt per axis; integrate well past its support
    sd = math.sqrt(2 * m.D * m.speed * dt)
    f = lambda r: 4 * math.pi * r * r * da_flux_nb(r * r, dt, m.speed, m.D, m.sigma_a)
    val, _ = quad(f, 0, 40 * sd, points=[sd, 3 * sd, 6 * sd], limit=400, epsabs=0, epsrel=1e-12)
    return val


@pytest.mark.parametrize("m", MEDIA, ids=["cornell", "dense-eta", "si"])
@pytest.mark.parametrize("k", [0.1, 1.0, 10.0])
def test_flux_spatial_integral(m, k):
    dt = k / (m.speed * m.sigma_t)  # k mean free paths of travel
    expected = m.speed * math.exp(-m.sigma_a * m.speed * dt)
    assert _spatial_integral(m, dt) == pytest.approx(expected, rel=1e-4)


def test_flux_is_zero_before_emission():
    m = MEDIA[0]
    for dt in (0.0, -1.0, -1e-12):
        assert da_flux_nb(0.1, dt, m.speed, m.D, m.sigma_a) == 0.0
        assert da_log_flux_nb(0.1, dt, m.speed, m.D, m.sigma_a) == -math.inf


def test_flux_clamped_at_tiny_times():
    m = MEDIA[0]
    v = da_flux_nb(0.0, 1e-300, m.speed, m.D, m.sigma_a)
    assert v == FLUX_MAX and math.isfinite(v)


def test_da_flux_query_matches_kernel():
    m = MEDIA[0]
    q = DaQuery(np.array([0.1, 0.2, 0.3]), np.zeros(3), 2.5, 0.5, m)
    assert da_flux(q) == pytest.approx(da_flux_nb(0.14, 2.0, m.speed, m.D, m.sigma_a), rel=1e-14)


@given(r=st.floats(0, 5), dt=st.floats(1e-3, 20))
def test_flux_decreases_with_distance(r, dt):
    m = MEDIA[0]
    a = da_flux_nb(r * r, dt, m.speed, m.D, m.sigma_a)
    b = da_flux_nb((r + 0.1) ** 2, dt, m.speed, m.D, m.sigma_a)
    assert b <= a


def test_causal_valid():
    m = Medium(1.0, 0.0, c=2.0)
    assert causal_valid((1, 0, 0), (0, 0, 0), 0.5, m)
    assert not causal_valid((1.01, 0, 0), (0, 0, 0), 0.5, m)
    assert not causal_valid((0, 0, 0), (0, 0, 0), 0.0, m)
