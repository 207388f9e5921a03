"""Shared fixtures and frozen reference numbers.

The reference constants below were computed once with scipy.integrate.quad
for the clipped-Gaussian stationary law (U = x^2/2 on [-1, 1], sigma =
sqrt(2)) and are frozen as literals; a session guard recomputes them at
import so a quadrature regression cannot silently move the targets.
"""
import numpy as np
import pytest
from scipy import integrate

from ebsde import ball_domain, cos_driver, kolmogorov_model, quadratic_potential

# gaussian weight on [-1, 1], stationary law of the standard test model
NORMALIZER = 1.7112487837842973
SECOND_MOMENT = 0.29112509477279325
FOURTH_MOMENT = 0.16450037909117285
MEAN_COS = 0.8611359463964351
# stationary boundary flux -E_nu[L phi]  = 1 - SECOND_MOMENT
FLUX_RATE = 0.7088749052272068


def _recompute():
    N, _ = integrate.quad(lambda t: np.exp(-0.5 * t * t), -1, 1)
    m2, _ = integrate.quad(lambda t: t * t * np.exp(-0.5 * t * t) / N, -1, 1)
    m4, _ = integrate.quad(lambda t: t ** 4 * np.exp(-0.5 * t * t) / N, -1, 1)
    mc, _ = integrate.quad(lambda t: np.cos(t) * np.exp(-0.5 * t * t) / N, -1, 1)
    return N, m2, m4, mc


@pytest.fixture(scope="session", autouse=True)
def oracle_guard():
    N, m2, m4, mc = _recompute()
    assert abs(N - NORMALIZER) < 1e-12
    assert abs(m2 - SECOND_MOMENT) < 1e-12
    assert abs(m4 - FOURTH_MOMENT) < 1e-12
    assert abs(mc - MEAN_COS) < 1e-12
    assert abs((1.0 - m2) - FLUX_RATE) < 1e-12


@pytest.fixture()
def interval():
    return ball_domain(1.0, 1)


@pytest.fixture()
def std_model():
    return kolmogorov_model(quadratic_potential(), eta_hint=-1.0)


@pytest.fixture()
def cosdrv():
    return cos_driver()
