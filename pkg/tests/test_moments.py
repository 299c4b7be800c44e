import math

import numpy as np
import pytest

from shflab import dickman as dk
from shflab import moments as mo
from shflab.walk import WalkKernel


@pytest.fixture(scope="module")
def kernel():
    return WalkKernel(cache_n=1 << 16)


def test_renewal_recursion_definition(kernel):
    # re-evaluate the defining recursion independently of the DP code
    s2 = 0.17
    v = mo.renewal_weights(kernel, s2, 200)
    assert v[0] == 1.0
    for n in (1, 2, 7, 100, 199):
        want = s2 * math.fsum(v[m] * kernel.q2n0[n - m] for m in range(n))
        assert v[n] == pytest.approx(want, rel=1e-12)
    assert np.all(v >= 0)
    # U_N(n) >= sigma^2 q_{2n}(0) (first renewal term)
    assert np.all(v[1:] >= s2 * kernel.q2n0[1:200] - 1e-18)


def test_fft_and_direct_renewal_agree(kernel):
    s2 = 0.25 / kernel.replica_overlap(1 << 14)
    vd = mo.renewal_weights(kernel, s2, 4000, method="direct")
    vf = mo.renewal_weights(kernel, s2, 4000, method="fft")
    np.testing.assert_allclose(vf, vd, rtol=1e-10)


def test_second_moment_trivial_cases(kernel):
    assert mo.second_moment_p2plane(kernel, 0.0, 1024) == 1.0
    # N = 3 closed form: 1 + s2 (q2(0)+q4(0)) + s2^2 q2(0)^2
    s2 = 0.1
    want = 1 + s2 * (kernel.q2n0[1] + kernel.q2n0[2]) + s2 ** 2 * kernel.q2n0[1] ** 2
    assert mo.second_moment_p2plane(kernel, s2, 3) == pytest.approx(want, rel=1e-14)


def test_second_moment_u1(kernel):
    s2 = 0.3
    tab = mo.u_table(kernel, s2, 16)
    assert tab.u[1] == pytest.approx(s2 * kernel.q2n0[1], rel=1e-14)
    assert mo.u_table(kernel, 0.0, 16).u[1:].sum() == 0.0


def test_chaos_oracle_bit_agreement(kernel):
    for N in (2, 3, 4, 5, 6):
        for s2 in (0.05, 0.3, 1.1):
            oracle = mo.chaos_oracle_second_moment(kernel, s2, N)
            dp = mo.second_moment_p2plane(kernel, s2, N)
            assert abs(oracle - dp) <= 1e-14 * oracle
    assert mo.chaos_oracle_second_moment(kernel, 0.0, 4) == 1.0
    assert mo.chaos_oracle_second_moment(kernel, 0.3, 2) == pytest.approx(
        1 + 0.3 * kernel.q2n0[1], rel=1e-15)


def test_renewal_probability_form(kernel):
    # eq-(2mom3)-style weighted renewal probabilities match the DP for N <= 64
    for N in (8, 32, 64):
        s2 = 0.8 / kernel.replica_overlap(N)
        a = mo.renewal_probability_expansion(kernel, s2, N)
        b = mo.second_moment_p2plane(kernel, s2, N)
        assert a == pytest.approx(b, rel=1e-12)


def test_second_moment_monotonicity(kernel):
    # nondecreasing in N and in sigma^2 (termwise positivity)
    vals_n = [mo.second_moment_p2plane(kernel, 0.05, N) for N in (4, 16, 64, 256)]
    assert all(a < b for a, b in zip(vals_n, vals_n[1:]))
    vals_s = [mo.second_moment_p2plane(kernel, s2, 128) for s2 in (0.0, 0.05, 0.1, 0.2)]
    assert all(a < b for a, b in zip(vals_s, vals_s[1:]))


def test_subcritical_bounded_by_limit(kernel):
    bh = 0.5
    for N in (1 << 10, 1 << 14, 1 << 16):
        s2 = bh ** 2 / kernel.replica_overlap(N)
        val = mo.second_moment_p2plane(kernel, s2, N)
        assert 1.0 < val < 1.0 / (1 - bh ** 2)


def test_exponential_scale_degenerate_cases(kernel):
    # alpha = 1 reduces to the plain second moment
    bh, N = 0.6, 1 << 12
    s2 = bh ** 2 / kernel.replica_overlap(N)
    assert mo.second_moment_exponential_scale(kernel, bh, N, 1.0) == pytest.approx(
        mo.second_moment_p2plane(kernel, s2, N), rel=1e-14)
    # horizon 1: empty sum, E[Z_1^2] = 1 (there are no disorder times < 1)
    assert mo.second_moment_exponential_scale(kernel, bh, N, 0.0) == 1.0


def test_critical_growth_ratio_toward_green_bar(kernel):
    seq = mo.critical_second_moment_growth(kernel, 0.0, [1 << 12, 1 << 14, 1 << 16])
    gbar = dk.green_bar_oracle(0.0)
    ratios = [v / gbar for _, v in seq]
    # far from converged at these N but drifting monotonically toward 1
    assert all(r > 1 for r in ratios)
    assert all(a > b for a, b in zip(ratios, ratios[1:]))
    assert abs(ratios[-1] - 1.0) < 0.10


def test_critical_growth_halved_window_smaller(kernel):
    # window 1 + theta/log N = 1/2 gives strictly smaller ratios than theta=0
    N = 1 << 14
    theta_half = -0.5 * math.log(N)
    lo = mo.critical_second_moment_growth(kernel, theta_half, [N])[0][1]
    hi = mo.critical_second_moment_growth(kernel, 0.0, [N])[0][1]
    assert lo < hi


def test_u_table_local_limit_asymptotics():
    # [PAPER-scale check] N U_N(n) / log N ~ G_0(n/N), within 15% at N = 2^20
    k = WalkKernel(cache_n=1 << 20)
    N = 1 << 20
    tab = mo.u_table(k, mo.critical_sigma2(k, 0.0, N), N)
    for frac in (0.25, 0.5, 0.75):
        lhs = N * tab.u[int(N * frac)] / math.log(N)
        assert lhs == pytest.approx(dk.green_theta(0.0, frac), rel=0.15)


def test_covariance_variance_case(kernel):
    s2 = 0.2
    N = 256
    cov0 = mo.covariance_p2plane(kernel, s2, N, (0, 0))
    assert cov0 == pytest.approx(mo.second_moment_p2plane(kernel, s2, N) - 1.0,
                                 rel=1e-12)
    assert mo.covariance_p2plane(kernel, 0.0, N, (3, 1)) == 0.0


def test_covariance_decreases_with_distance(kernel):
    s2 = 0.2
    N = 512
    vals = [mo.covariance_p2plane(kernel, s2, N, (d, 0)) for d in (0, 2, 8, 32)]
    assert all(a > b for a, b in zip(vals, vals[1:]))
    assert vals[-1] > 0


def test_covariance_brute_force_small(kernel):
    # direct double sum over the chaos first-collision decomposition
    s2, N, dx = 0.3, 12, (2, 1)
    e2 = mo.second_moments_prefix(kernel, s2, N)
    want = math.fsum(kernel.q_n(2 * n, dx) * s2 * e2[N - n] for n in range(1, N))
    assert mo.covariance_p2plane(kernel, s2, N, dx) == pytest.approx(want, rel=1e-12)


def test_extrapolate_inverse_log_recovers_model():
    ns = [1 << e for e in range(8, 20, 2)]
    vals = [2.5 - 3.0 / math.log(n) for n in ns]
    a, b = mo.extrapolate_inverse_log(ns, vals)
    assert a == pytest.approx(2.5, abs=1e-12)
    assert b == pytest.approx(-3.0, abs=1e-10)


def test_averaged_field_variance_brute_force(kernel):
    # oracle: explicit double lattice sum of phi phi' Cov(Z(x), Z(x'))
    N = 24
    s2 = 0.15
    offs = np.arange(-6, 7)
    vals = np.exp(-(offs[:, None] ** 2 + offs[None, :] ** 2) / (2 * 9.0))
    var = mo.averaged_field_variance(kernel, s2, N, {"offsets": offs, "values": vals})
    e2 = mo.second_moments_prefix(kernel, s2, N)
    want = 0.0
    for i1, x1 in enumerate(offs):
        for j1, y1 in enumerate(offs):
            for i2, x2 in enumerate(offs):
                for j2, y2 in enumerate(offs):
                    cov = math.fsum(kernel.q_n(2 * n, (x1 - x2, y1 - y2)) * s2 * e2[N - n]
                                    for n in range(1, N))
                    want += vals[i1, j1] * vals[i2, j2] * cov
    want /= N ** 2
    assert var == pytest.approx(want, rel=1e-10)
