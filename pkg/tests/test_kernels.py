import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from drmksd.errors import DegenerateBandwidthError, InvalidArgumentError
from drmksd.kernels import (KernelConfig, kernel_eval, kernel_grad_second, kernel_matrix,
                            kernel_mixed_trace, median_heuristic)
from oracles import central_diff, imq, mixed_trace_fd, rbf

IMQ = KernelConfig.imq()
RBF1 = KernelConfig.rbf(1.0)


def test_imq_at_coincident_points_is_one():
    for d in (1, 3, 7):
        x = np.linspace(-1, 1, d)
        assert kernel_eval(IMQ, x, x) == 1.0


def test_imq_value_at_one_lengthscale():
    assert kernel_eval(IMQ, [0.0], [0.1]) == pytest.approx(2**-0.5, rel=1e-12)


def test_rbf_at_zero():
    assert kernel_eval(RBF1, [0.0], [0.0]) == 1.0


def test_matches_independent_formula():
    rng = np.random.default_rng(0)
    cfg = KernelConfig.imq(c=1.3, lengthscale=0.7, beta=-0.3)
    for _ in range(20):
        x, y = rng.normal(size=(2, 3))
        assert kernel_eval(cfg, x, y) == pytest.approx(imq(x, y, 1.3, 0.7, -0.3), rel=1e-13)
        assert kernel_eval(KernelConfig.rbf(0.8), x, y) == pytest.approx(rbf(x, y, 0.8), rel=1e-13)


def test_dimension_mismatch():
    with pytest.raises(InvalidArgumentError):
        kernel_eval(IMQ, [0.0, 1.0], [0.0])
    with pytest.raises(InvalidArgumentError):
        kernel_grad_second(IMQ, [0.0], [0.0, 1.0])
    with pytest.raises(InvalidArgumentError):
        kernel_mixed_trace(IMQ, np.zeros(2), np.zeros(3))


@pytest.mark.parametrize("kwargs", [dict(c=0.0), dict(lengthscale=-1.0), dict(beta=0.0),
                                    dict(beta=-1.0), dict(beta=0.5)])
def test_invalid_config(kwargs):
    with pytest.raises(InvalidArgumentError):
        KernelConfig.imq(**kwargs)


def test_config_is_frozen():
    with pytest.raises(Exception):
        IMQ.lengthscale = 1.0


def test_gradient_vanishes_on_diagonal():
    for cfg in (IMQ, RBF1):
        np.testing.assert_array_equal(kernel_grad_second(cfg, [0.3, -1.0], [0.3, -1.0]), 0.0)


def test_imq_gradient_against_fd():
    grad = kernel_grad_second(IMQ, [0.0], [0.1])
    fd = central_diff(lambda y: kernel_eval(IMQ, [0.0], y), np.array([0.1]))
    np.testing.assert_allclose(grad, fd, rtol=1e-6)


def test_rbf_gradient_value():
    assert kernel_grad_second(RBF1, [0.0], [1.0])[0] == pytest.approx(-np.exp(-0.5), rel=1e-12)


@pytest.mark.parametrize("cfg", [IMQ, KernelConfig.imq(c=0.5, lengthscale=1.0, beta=-0.7),
                                 RBF1, KernelConfig.rbf(0.3)])
def test_gradient_battery(cfg):
    rng = np.random.default_rng(1)
    scale = cfg.lengthscale
    for _ in range(100):
        d = rng.integers(1, 5)
        x = rng.normal(size=d)
        y = x + scale * rng.normal(size=d)
        fd = central_diff(lambda v: kernel_eval(cfg, x, v), y)
        np.testing.assert_allclose(kernel_grad_second(cfg, x, y), fd, rtol=1e-5, atol=1e-9)


@pytest.mark.parametrize("d,expected", [(1, 100.0), (2, 200.0), (5, 500.0)])
def test_imq_mixed_trace_on_diagonal(d, expected):
    x = np.full(d, 0.4)
    assert kernel_mixed_trace(IMQ, x, x) == pytest.approx(expected, rel=1e-14)
    fd = mixed_trace_fd(lambda a, b: kernel_eval(IMQ, a, b), x, x, h=1e-4)
    assert fd == pytest.approx(expected, rel=1e-4)


@pytest.mark.parametrize("cfg", [IMQ, KernelConfig.imq(c=2.0, lengthscale=0.5, beta=-0.9), RBF1])
def test_mixed_trace_battery(cfg):
    rng = np.random.default_rng(2)
    for _ in range(50):
        d = rng.integers(1, 4)
        x = rng.normal(size=d)
        y = x + cfg.lengthscale * rng.normal(size=d)
        h = 1e-2 * cfg.lengthscale
        fd = mixed_trace_fd(lambda a, b: kernel_eval(cfg, a, b), x, y, h=h, richardson=True)
        exact = kernel_mixed_trace(cfg, x, y)
        assert exact == pytest.approx(fd, rel=1e-5, abs=1e-6 * abs(kernel_mixed_trace(cfg, x, x)))


finite = st.floats(-3, 3, allow_nan=False)


@settings(max_examples=60, deadline=None)
@given(arrays(float, 3, elements=finite), arrays(float, 3, elements=finite))
def test_symmetry_and_imq_bound(x, y):
    assert kernel_eval(IMQ, x, y) == kernel_eval(IMQ, y, x)
    assert kernel_mixed_trace(IMQ, x, y) == pytest.approx(kernel_mixed_trace(IMQ, y, x), rel=1e-12)
    assert 0 < kernel_eval(IMQ, x, y) <= 1.0


def test_gram_positive_definite():
    rng = np.random.default_rng(3)
    for cfg in (IMQ, RBF1):
        K = kernel_matrix(cfg, rng.normal(size=(20, 2)))
        assert np.linalg.eigvalsh(K).min() >= -1e-8


def test_median_heuristic_on_standard_normal():
    # median of |Z - Z'| for independent N(0, 1) is sqrt(2) * Phi^{-1}(0.75)
    from scipy.stats import norm
    target = np.sqrt(2) * norm.ppf(0.75)
    rng = np.random.default_rng(4)
    draws = [median_heuristic(rng.standard_normal(100)) for _ in range(200)]
    assert np.mean(draws) == pytest.approx(target, abs=0.03)


def test_median_heuristic_degenerate():
    with pytest.raises(DegenerateBandwidthError):
        median_heuristic(np.ones((5, 2)))
    with pytest.raises(InvalidArgumentError):
        median_heuristic(np.zeros((1, 2)))
