import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as hst

from shflab.walk import (HeatKernel, HorizonError, WalkKernel,
                         default_step_law, heat_kernel)


def brute_marginal(step, n):
    """Independent oracle: n explicit convolutions of the dense pmf."""
    p = np.array([1.0])
    k = step.pmf_array()
    for _ in range(n):
        p = np.convolve(p, k)
    return n * step.lo, p


def brute_q2d(step, n):
    """Full 2d convolution oracle (no separability shortcut)."""
    k1 = step.pmf_array()
    k2 = np.outer(k1, k1)
    q = np.array([[1.0]])
    for _ in range(n):
        out = np.zeros((q.shape[0] + k2.shape[0] - 1,
                        q.shape[1] + k2.shape[1] - 1))
        for i in range(k2.shape[0]):
            for j in range(k2.shape[1]):
                out[i:i + q.shape[0], j:j + q.shape[1]] += k2[i, j] * q
        q = out
    return q  # indexed by offsets starting at n*lo in both axes


@pytest.fixture(scope="module")
def kernel():
    return WalkKernel(cache_n=1 << 13)


def test_default_law_normalization_and_moments():
    law = default_step_law()
    p = np.array(law.probs)
    s = np.array(law.support, dtype=float)
    assert abs(p.sum() - 1.0) < 1e-15
    assert abs((p * s).sum()) < 1e-15
    # per-coordinate variance 2*(1/4) + 2*4*(1/16) = 1
    assert abs((p * s ** 2).sum() - 1.0) < 1e-15


def test_default_law_zero_step_probability(kernel):
    # P(step2d = (0,0)) = (3/8)^2
    assert kernel.q_n(1, (0, 0)) == pytest.approx((3 / 8) ** 2, abs=1e-15)


def test_q0_is_point_mass(kernel):
    assert kernel.q_n(0, (0, 0)) == 1.0
    assert kernel.q_n(0, (1, 0)) == 0.0


def test_q1_diagonal(kernel):
    assert kernel.q_n(1, (1, 1)) == pytest.approx(1 / 16, abs=1e-15)


def test_q2_origin_against_1d_convolution_oracle(kernel):
    law = default_step_law()
    p = np.array(law.probs)
    a = (p ** 2).sum()  # 1d two-step return prob = 2*(1/16)^2 + 2*(1/4)^2 + (3/8)^2
    assert a == pytest.approx(2 * (1 / 16) ** 2 + 2 * (1 / 4) ** 2 + (3 / 8) ** 2,
                              abs=1e-16)
    assert kernel.q_n(2, (0, 0)) == pytest.approx(a * a, rel=1e-13)
    assert kernel.q_n(2, (0, 0)) == pytest.approx(0.074768, abs=5e-7)


@pytest.mark.parametrize("n", [1, 2, 3, 5, 8])
def test_marginals_match_brute_convolution(kernel, n):
    lo, arr = kernel.marginal_1d(n)
    blo, barr = brute_marginal(kernel.step, n)
    assert lo == blo
    np.testing.assert_allclose(arr, barr, rtol=0, atol=1e-15)


@pytest.mark.parametrize("n", [1, 4, 17, 300, 4096])
def test_marginal_normalization_and_symmetry(kernel, n):
    _, arr = kernel.marginal_1d(n)
    assert abs(math.fsum(arr) - 1.0) < 1e-10
    np.testing.assert_allclose(arr, arr[::-1], rtol=0, atol=1e-14)


@pytest.mark.parametrize("n", [1, 2, 4, 6])
def test_separability_identity_vs_full_2d_convolution(kernel, n):
    q2d = brute_q2d(kernel.step, n)
    center = -n * kernel.step.lo
    _, p = kernel.marginal_1d(n)
    # q_{2n}(0) by full 2d convolution = sum_x q_n(x)^2 = (sum_k p_n(k)^2)^2
    full = float(q2d.flatten() @ q2d.flatten())
    assert full == pytest.approx((p @ p) ** 2, abs=1e-12)
    assert kernel.q_n(2 * n, (0, 0)) == pytest.approx(full, abs=1e-12)
    # spot-check off-origin separability q_n(x) = p_n(x1) p_n(x2)
    for x in [(0, 0), (1, -1), (2, 0), (-2, 1)]:
        assert kernel.q_n(n, x) == pytest.approx(
            q2d[center + x[0], center + x[1]], abs=1e-14)


def test_replica_overlap_small_values(kernel):
    assert kernel.replica_overlap(0) == 0.0
    assert kernel.replica_overlap(1) == pytest.approx(kernel.q_n(2, (0, 0)), rel=1e-14)
    # R_N accumulates q_{2n}(0)
    want = math.fsum(kernel.q_n(2 * n, (0, 0)) for n in range(1, 33))
    assert kernel.replica_overlap(32) == pytest.approx(want, rel=1e-12)


def test_replica_overlap_monotone(kernel):
    r = kernel.r_table
    assert np.all(np.diff(r) > 0)


@pytest.mark.slow
def test_replica_overlap_log_asymptotics_with_extrapolation():
    # R_N ~ log N / 4pi: fit R_N = a log N + b over a geometric grid and
    # require the fitted slope to match 1/4pi; raw ratios drift as 1/log N.
    k = WalkKernel(cache_n=1 << 22)
    exps = np.arange(10, 23)
    ns = (1 << exps).astype(np.int64)
    rs = k.r_table[ns]
    slope, _ = np.polyfit(np.log(ns), rs, 1)
    assert slope * 4 * np.pi == pytest.approx(1.0, rel=1e-3)
    ratios = rs / (np.log(ns) / (4 * np.pi))
    assert np.all(np.abs(ratios - 1.0) < 0.08)
    assert np.all(np.diff(np.abs(ratios - 1.0)) < 0)  # approaching 1


def test_overlap_doubling_increment():
    # R_{2N} - R_N -> log(2)/4pi; Cesaro-type check at N = 2^16
    k = WalkKernel(cache_n=1 << 17)
    inc = k.replica_overlap(1 << 17) - k.replica_overlap(1 << 16)
    assert inc == pytest.approx(math.log(2) / (4 * math.pi), rel=0.10)


def test_horizon_guard(kernel):
    with pytest.raises(HorizonError):
        kernel.q_n(kernel.cache_n + 1, (0, 0))
    with pytest.raises(HorizonError):
        kernel.replica_overlap(kernel.cache_n + 1)


def test_local_clt_error_well_defined(kernel):
    assert kernel.local_clt_error(1) > 0
    assert np.isfinite(kernel.local_clt_error(1))


def test_local_clt_error_order_one_over_n2(kernel):
    # err(n) * n^2 should be a stable constant across dyadic n
    vals = {n: kernel.local_clt_error(n) for n in (64, 128, 256, 512, 1024, 2048, 4096)}
    for n in (64, 128, 256, 512, 1024, 2048):
        ratio = vals[2 * n] / vals[n]
        assert 0.5 < ratio < 2.0
    assert vals[4096] < 10.0  # max|q_n - g_n| < 10/n^2 at n = 4096


def test_scaled_walk_close_to_gaussian(kernel):
    from scipy.stats import norm
    n = 4096
    lo, arr = kernel.marginal_1d(n)
    xs = (np.arange(lo, lo + arr.size) + 0.5) / math.sqrt(n)
    ks = np.abs(np.cumsum(arr) - norm.cdf(xs)).max()
    assert ks < 0.01


def test_heat_kernel_normalization_and_semigroup():
    hk = HeatKernel(t=0.7)
    xs = np.linspace(-12, 12, 601)
    grid = np.stack(np.meshgrid(xs, xs), axis=-1)
    h = xs[1] - xs[0]
    total = hk.density(grid).sum() * h * h
    assert total == pytest.approx(1.0, abs=1e-8)
    # semigroup g_s * g_t = g_{s+t}: by separability it suffices to check
    # the 1d factors, convolved by quadrature
    s, t = 0.4, 0.9
    y = np.linspace(-14, 14, 1401)
    hy = y[1] - y[0]

    def g1(tt, z):
        return np.exp(-z ** 2 / (2 * tt)) / math.sqrt(2 * math.pi * tt)

    for x1 in (0.0, 0.8):
        conv1 = (g1(s, y) * g1(t, x1 - y)).sum() * hy
        assert conv1 == pytest.approx(g1(s + t, x1), abs=1e-9)
    # and the 2d evaluator is the product of 1d factors
    assert heat_kernel(s, 0.3, -0.2) == pytest.approx(g1(s, 0.3) * g1(s, -0.2), rel=1e-12)


@settings(max_examples=30, deadline=None)
@given(n=hst.integers(min_value=1, max_value=40),
       x1=hst.integers(min_value=-6, max_value=6),
       x2=hst.integers(min_value=-6, max_value=6))
def test_q_symmetry_property(n, x1, x2):
    k = WalkKernel(cache_n=64)
    assert k.q_n(n, (x1, x2)) == pytest.approx(k.q_n(n, (-x1, -x2)), abs=1e-15)
    assert k.q_n(n, (x1, x2)) == pytest.approx(k.q_n(n, (x2, x1)), abs=1e-15)
