import numpy as np
import pytest
from hypothesis import given, strategies as st

from relkin.cross_section import CrossSection, chi, sigma, validate_params
from relkin.errors import ConfigError, SingularityError


def test_validate_params_examples():
    assert validate_params(1, 0, 0) == []
    assert "a ≤ 2+γ" in validate_params(3, 0, 0)
    assert "γ > -2" in validate_params(0, 0, -2)
    assert validate_params(0, 4, 0) == ["b < min{4, 4+γ}"]
    with pytest.raises(ConfigError, match="a ≤ 2"):
        CrossSection(a=3)


def test_sigma_examples():
    assert sigma(2.0, 1.234, CrossSection()) == 2.0
    assert sigma(1.0, np.pi / 6, CrossSection(a=0, gamma=2)) == pytest.approx(0.25, rel=1e-14)
    assert sigma(0.0, 0.7, CrossSection(a=2)) == 0.0


def test_soft_term_singular_at_zero():
    m = CrossSection(a=1, b=1, soft_enabled=True)
    with pytest.raises(SingularityError):
        sigma(0.0, 1.0, m)
    assert sigma(2.0, np.pi / 2, m) == pytest.approx(2.5)


def test_band_containment(rng):
    m = CrossSection(a=1.5, b=1.0, gamma=0.5, soft_enabled=True)
    g = rng.uniform(1e-6, 10, 10_000)
    th = rng.uniform(1e-6, np.pi - 1e-6, 10_000)
    s0 = np.sin(th) ** m.gamma
    val = sigma(g, th, m)
    assert np.all(val >= 0)
    assert np.all(g / np.sqrt(g * g + 4) * g**m.a * s0 <= val * (1 + 1e-14))
    assert np.all(val <= (g**m.a + g**-m.b) * s0 * (1 + 1e-14))


def test_chi_examples():
    eps = 0.3
    assert chi(2 * eps, eps) == 1.0
    assert chi(eps, eps) == 0.0
    assert chi(1.5 * eps, eps) == pytest.approx(0.5, abs=1e-15)


@given(st.floats(0, 5), st.floats(0, 5), st.floats(0.01, 2))
def test_chi_monotone_partition(g1, g2, eps):
    lo, hi = sorted((g1, g2))
    assert 0.0 <= chi(lo, eps) <= chi(hi, eps) <= 1.0
    assert chi(g1, eps) + (1 - chi(g1, eps)) == 1.0
