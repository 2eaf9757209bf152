import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from coreg.errors import ContractError
from coreg.kernels import (
    FAMILIES,
    KernelSpec,
    eval_scaled_bivariate,
    eval_scaled_univariate,
)


def test_gaussian_bivariate_at_origin():
    assert eval_scaled_bivariate("gaussian", 0.0, 0.0, 1.0, 1.0) == pytest.approx(1 / (2 * np.pi))
    assert eval_scaled_bivariate("gaussian", 0.0, 0.0, 1.0, 1.0) == pytest.approx(0.159155, abs=1e-6)


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("h", [0.1, 0.5, 3.0])
def test_bivariate_scaling_at_origin(family, h):
    k0 = eval_scaled_bivariate(family, 0.0, 0.0, 1.0, 1.0)
    assert eval_scaled_bivariate(family, 0.0, 0.0, h, h) == pytest.approx(k0 / h**2, rel=1e-14)


def test_epanechnikov_bivariate_product():
    # 0.75 * (1 - 0.25) * 0.75
    assert eval_scaled_bivariate("epanechnikov", 0.5, 0.0, 1.0, 1.0) == pytest.approx(0.421875, abs=1e-15)


def test_univariate_values():
    assert eval_scaled_univariate("gaussian", 0.0, 1.0) == pytest.approx(0.398942, abs=1e-6)
    assert eval_scaled_univariate("gaussian", 0.0, 2.0) == pytest.approx(0.199471, abs=1e-6)
    assert eval_scaled_univariate("epanechnikov", 2.0, 1.0) == 0.0
    assert eval_scaled_univariate("epanechnikov", 1.0, 1.0) == 0.0


@pytest.mark.parametrize("h", [0.0, -1.0])
def test_nonpositive_bandwidth(h):
    with pytest.raises(ContractError):
        eval_scaled_univariate("gaussian", 0.0, h)
    with pytest.raises(ContractError):
        eval_scaled_bivariate("gaussian", 0.0, 0.0, 1.0, h)


def test_unknown_family():
    with pytest.raises(ContractError):
        KernelSpec("triangle")


@pytest.mark.parametrize("family", FAMILIES)
@pytest.mark.parametrize("h", [0.3, 2.0])
def test_integrates_to_one(family, h):
    lim = np.inf if family == "gaussian" else h
    val, _ = integrate.quad(lambda u: eval_scaled_univariate(family, u, h), -lim, lim)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("family", FAMILIES)
def test_bivariate_integrates_to_one(family):
    h1, h2 = 0.4, 1.5
    lim1 = np.inf if family == "gaussian" else h1
    lim2 = np.inf if family == "gaussian" else h2
    val, _ = integrate.dblquad(
        lambda v, u: eval_scaled_bivariate(family, u, v, h1, h2), -lim1, lim1, -lim2, lim2
    )
    assert val == pytest.approx(1.0, abs=1e-6)


@settings(max_examples=200, deadline=None)
@given(
    st.sampled_from(FAMILIES),
    st.floats(-5, 5),
    st.floats(-5, 5),
    st.floats(0.05, 5),
    st.floats(0.05, 5),
)
def test_bivariate_symmetric_nonnegative_and_product(family, u, v, h1, h2):
    k = eval_scaled_bivariate(family, u, v, h1, h2)
    assert k >= 0
    assert eval_scaled_bivariate(family, -u, -v, h1, h2) == pytest.approx(k, rel=1e-14, abs=0)
    prod = eval_scaled_univariate(family, u, h1) * eval_scaled_univariate(family, v, h2)
    assert k == pytest.approx(prod, rel=1e-12, abs=1e-300)


def test_vectorised_evaluation():
    u = np.linspace(-2, 2, 9)
    out = eval_scaled_univariate("epanechnikov", u, 1.0)
    assert out.shape == u.shape
    assert np.all(out[np.abs(u) >= 1] == 0)
