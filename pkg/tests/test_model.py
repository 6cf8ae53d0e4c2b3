import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tumorbif.model import (AdmissibilityError, DomainError, ModelParams, NutrientFn, ParameterError,
                            check_admissible, eval_f, eval_f_prime, validate_params)

BUILTIN = [NutrientFn.identity(), NutrientFn.michaelis_menten(2.0), NutrientFn.michaelis_menten(0.3)]


@pytest.mark.parametrize("f, psi, expected", [
    (NutrientFn.identity(), 0.0, 0.0),
    (NutrientFn.identity(), 1.0, 1.0),
    (NutrientFn.michaelis_menten(2.0), 1.0, 1.0),
])
def test_eval_f(f, psi, expected):
    assert eval_f(f, psi) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("f, psi, expected", [
    (NutrientFn.identity(), 0.5, 1.0),
    (NutrientFn.michaelis_menten(2.0), 0.0, 2.0),
    (NutrientFn.michaelis_menten(2.0), 1.0, 0.5),
])
def test_eval_f_prime(f, psi, expected):
    assert eval_f_prime(f, psi) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("fn", [eval_f, eval_f_prime])
def test_negative_psi_rejected(fn):
    with pytest.raises(DomainError):
        fn(NutrientFn.identity(), -1e-3)


def test_custom_f_with_bad_derivative():
    bad = NutrientFn("custom", value=lambda p: p - p**2, derivative=lambda p: 1 - 2 * p)
    with pytest.raises(AdmissibilityError):
        eval_f_prime(bad, 0.9)
    with pytest.raises(AdmissibilityError):
        NutrientFn.custom(lambda p: p - p**2, lambda p: 1 - 2 * p)


def test_custom_needs_both_callables():
    with pytest.raises(ValueError):
        NutrientFn("custom", value=lambda p: p)


def test_custom_admissible_law():
    f = NutrientFn.custom(np.tanh, lambda p: 1 / np.cosh(p) ** 2, name="tanh")
    check_admissible(f)
    assert eval_f(f, 0.0) == 0.0


@pytest.mark.parametrize("f", BUILTIN, ids=lambda f: f"{f.kind}-{f.sigma}")
def test_builtin_laws_on_dense_grid(f):
    psi = np.linspace(0.0, 2.0, 1000)
    assert f.f(np.array(0.0)) == 0.0
    assert np.all(f.df(psi) > 0)
    h = 1e-6
    fd = (f.f(psi[1:-1] + h) - f.f(psi[1:-1] - h)) / (2 * h)
    assert np.max(np.abs(fd / f.df(psi[1:-1]) - 1)) <= 1e-6


@pytest.mark.parametrize("A, ok", [(0.5, True), (1.0, False), (0.892779931793069, True), (0.0, False),
                                   (-0.1, False)])
def test_validate_params_identity(A, ok):
    p = ModelParams(A=A)
    if ok:
        assert validate_params(p) is p
    else:
        with pytest.raises(ParameterError):
            validate_params(p)


def test_parameter_error_names_bound():
    with pytest.raises(ParameterError, match="upper bound"):
        validate_params(ModelParams(A=1.0))
    with pytest.raises(ParameterError, match="lower bound"):
        validate_params(ModelParams(A=0.0))


@given(sigma=st.floats(0.05, 20.0), frac=st.floats(0.01, 0.99))
@settings(max_examples=50, deadline=None)
def test_mm_admissible_range(sigma, frac):
    f = NutrientFn.michaelis_menten(sigma)
    validate_params(ModelParams(A=frac * f.f(np.array(1.0)), f=f))
    with pytest.raises(ParameterError):
        validate_params(ModelParams(A=(1 + frac) * f.f(np.array(1.0)), f=f))


@given(psi=st.floats(0.0, 50.0), sigma=st.floats(0.1, 10.0))
@settings(max_examples=100, deadline=None)
def test_mm_monotone_and_bounded(psi, sigma):
    f = NutrientFn.michaelis_menten(sigma)
    assert 0 <= eval_f(f, psi) < sigma
    assert eval_f_prime(f, psi) > 0
