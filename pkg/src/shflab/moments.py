"""Deterministic second-moment computations via the renewal representation.

With xi-variance sigma^2, the chaos expansion of the point-to-plane
partition function collapses spatially to renewal sums driven by the
return probabilities q_{2n}(0):

    v(0) = 1,   v(n) = sigma^2 sum_{0 <= m < n} v(m) q_{2(n-m)}(0),

so E[Z_N^2] = 1 + sum_{n=1}^{N-1} v(n).  The same array is the renewal
mass function U_N(n) (the defining recursions coincide for n >= 1).  The
generating function identity V(z) = 1 / (1 - sigma^2 K(z)) gives an
O(N log N) power-series path to horizons ~4 million where the direct
O(N^2) recursion is hopeless; both are kept and cross-checked.
"""

import math
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit
from scipy.signal import fftconvolve


@njit(cache=True)
def _renewal_direct(kvals, sigma2, n_terms):
    """v[0..n_terms-1] by the O(N^2) recursion (oracle / moderate N)."""
    v = np.zeros(n_terms)
    v[0] = 1.0
    for n in range(1, n_terms):
        acc = 0.0
        for m in range(n):
            acc += v[m] * kvals[n - m]
        v[n] = sigma2 * acc
    return v


def _renewal_fft(kvals, sigma2, n_terms):
    """Same array via Newton reciprocal of the power series 1 - sigma^2 K."""
    a = np.zeros(n_terms)
    a[0] = 1.0
    a[1:] = -sigma2 * kvals[1:n_terms]
    m = 1
    v = np.array([1.0])
    while m < n_terms:
        m2 = min(2 * m, n_terms)
        size = 1 << (2 * m2 - 1).bit_length()
        fv = np.fft.rfft(v, size)
        fa = np.fft.rfft(a[:m2], size)
        av = np.fft.irfft(fa * fv, size)[:m2]
        corr = -av
        corr[0] += 2.0
        fc = np.fft.rfft(corr, size)
        v = np.fft.irfft(fv * fc, size)[:m2]
        m = m2
    return v


def renewal_weights(kernel, sigma2, n_terms, method="auto"):
    """Renewal weight array v(n), n < n_terms, for the given sigma^2."""
    if n_terms > kernel.cache_n + 1:
        raise ValueError("horizon exceeds kernel cache")
    kvals = kernel.q2n0
    if method == "direct" or (method == "auto" and n_terms <= 4096):
        return _renewal_direct(kvals, float(sigma2), int(n_terms))
    return _renewal_fft(kvals, float(sigma2), int(n_terms))


@dataclass(frozen=True)
class RenewalTable:
    """Exact renewal arrays at one (N, sigma^2).

    v and the spatially summed U_N(n) satisfy the same recursion, so a
    single array serves both; second_moments[m] = E[Z_m^2] for m <= N.
    """

    N: int
    sigma2: float
    v: np.ndarray

    @property
    def u(self):
        return self.v

    @property
    def second_moments(self):
        out = np.empty(self.N + 1)
        out[0] = 1.0
        np.cumsum(self.v[:self.N], out=out[1:])
        return out  # E[Z_m^2] = 1 + sum_{n<m} v(n), and v[0] = 1 supplies it


def u_table(kernel, sigma2, N, method="auto"):
    """RenewalTable up to horizon N."""
    v = renewal_weights(kernel, sigma2, N + 1, method=method)
    return RenewalTable(N=int(N), sigma2=float(sigma2), v=v)


def second_moment_p2plane(kernel, sigma2, N, method="auto"):
    """E[(Z_N( point-to-plane ))^2] = 1 + sum_{n=1}^{N-1} v(n)."""
    if sigma2 == 0.0:
        return 1.0
    v = renewal_weights(kernel, sigma2, N, method=method)
    return 1.0 + float(np.sum(v[1:]))


def second_moments_prefix(kernel, sigma2, N, method="auto"):
    """Array E[Z_m^2] for m = 0..N (E[Z_0^2] = E[Z_1^2] = 1)."""
    v = renewal_weights(kernel, sigma2, N + 1, method=method)
    return RenewalTable(N=int(N), sigma2=float(sigma2), v=v).second_moments


def second_moment_exponential_scale(kernel, beta_hat, N, alpha, method="auto"):
    """E[(Z_{N^alpha})^2] with sigma^2 pinned by horizon N.

    The subcritical window makes sigma^2 R_N = beta_hat^2 exact; the
    limit as N grows is 1/(1 - alpha beta_hat^2) for alpha beta_hat^2 < 1.
    """
    sigma2 = beta_hat ** 2 / kernel.replica_overlap(N)
    horizon = max(1, int(round(N ** alpha)))
    return second_moment_p2plane(kernel, sigma2, horizon, method=method)


def critical_sigma2(kernel, theta, N):
    """sigma^2 in the critical window: (1 + theta/log N)/R_N (exact form)."""
    scale = 1.0 + theta / math.log(N)
    if scale <= 0:
        raise ValueError("theta collapses the window")
    return scale / kernel.replica_overlap(N)


def critical_second_moment_growth(kernel, theta, n_list, method="auto"):
    """[(N, E[Z_N^2]/log N)] along an N-grid in the critical window."""
    out = []
    for N in n_list:
        s2 = critical_sigma2(kernel, theta, N)
        out.append((int(N), second_moment_p2plane(kernel, s2, N, method=method)
                    / math.log(N)))
    return out


def covariance_p2plane(kernel, sigma2, N, dx, method="auto"):
    """Cov[Z_N(0), Z_N(dx)] = sum_{n=1}^{N-1} q_{2n}(dx) sigma^2 E[Z_{N-n}^2]."""
    if sigma2 == 0.0:
        return 0.0
    e2 = second_moments_prefix(kernel, sigma2, N, method=method)
    q = kernel.q2n_series(N - 1, dx)  # q_{2n}(dx), n = 1..N-1
    return float(sigma2 * np.dot(q, e2[N - 1:0:-1]))


def chaos_oracle_second_moment(kernel, sigma2, N):
    """Direct enumeration of the chaos expansion for tiny N (oracle).

    Sums sigma^{2r} prod q_{2 delta}(0) over all 0 < n_1 < ... < n_r < N.
    """
    if N > 8:
        raise ValueError("oracle is exponential; keep N <= 8")
    total = 1.0
    times = range(1, N)
    for r in range(1, N):
        for cfg in combinations(times, r):
            prev = 0
            prod = 1.0
            for n in cfg:
                prod *= kernel.q2n0[n - prev]
                prev = n
            total += sigma2 ** r * prod
    return total


def renewal_probability_expansion(kernel, sigma2, N):
    """E[Z_N^2] in the weighted renewal-probability form
    sum_r (sigma^2 R_N)^r P(tau_r < N), increments q_{2n}(0)/R_N, n <= N."""
    r_n = kernel.replica_overlap(N)
    w = sigma2 * r_n
    f1 = np.zeros(N)
    f1[1:] = kernel.q2n0[1:N] / r_n
    total = 1.0
    fr = f1.copy()
    for r in range(1, N):
        mass = float(fr.sum())
        if mass == 0.0:
            break
        total += w ** r * mass
        fr = np.convolve(fr, f1)[:N]
    return total


def mc_second_moment_oracle(spec, N, replicas, seed=0):
    """Monte Carlo mean of Z_N^2 over disorder replicas, with stderr.

    Cross-checks the renewal DP: the DP is exact, so agreement within a
    few stderr validates the transfer matrix + field plumbing end to end.
    """
    from . import polymer  # local import: polymer depends on walk/disorder only

    zs = polymer.point_to_plane_replicas(spec, N, replicas, seed=seed)
    z2 = zs * zs
    est = float(z2.mean())
    stderr = float(z2.std(ddof=1) / math.sqrt(replicas))
    return est, stderr


def extrapolate_inverse_log(n_values, values):
    """Richardson-style fit value = a + b/log N; returns (a, b)."""
    x = 1.0 / np.log(np.asarray(n_values, dtype=float))
    b, a = np.polyfit(x, np.asarray(values, dtype=float), 1)
    return float(a), float(b)


def averaged_field_variance(kernel, sigma2, N, phi_lattice, method="auto"):
    """Exact DP variance of (1/N) sum_x phi(x/sqrt N) Z_N(x).

    phi_lattice: dict with 'offsets' (1d integer offsets o) and 'values'
    (2d array phi evaluated on the offsets product grid).  Uses
    Cov(Z(x), Z(x')) = sum_n q_{2n}(x - x') sigma^2 E[Z_{N-n}^2] and the
    separability of q_{2n}, assembling sum_{x,x'} phi phi' q_{2n}(x-x')
    as p^T A p with A the 2d autocorrelation of the phi values.
    """
    vals = phi_lattice["values"]
    auto = fftconvolve(vals, vals[::-1, ::-1])
    d = auto.shape[0] // 2
    e2 = second_moments_prefix(kernel, sigma2, N, method=method)
    total = 0.0
    p0 = np.sqrt(kernel.q2n0[1:N])
    ratios = _offset_ratio_matrix(N - 1, d)
    # per n: sum_dx A(dx) q_{2n}(dx) = (p_row . A . p_col) with
    # p_{2n}(k) = p_{2n}(0) * ratio(n, |k|)
    for n in range(1, N):
        p = p0[n - 1] * ratios[n - 1]
        pfull = np.concatenate((p[::-1], p[1:]))
        total += sigma2 * e2[N - n] * float(pfull @ auto @ pfull)
    return total / N ** 2


def _offset_ratio_matrix(n_max, d_max):
    """ratio(n, d) = p_{2n}(d)/p_{2n}(0) for the default binomial walk."""
    ns = np.arange(1, n_max + 1, dtype=float)
    out = np.empty((n_max, d_max + 1))
    out[:, 0] = 1.0
    run = np.ones(n_max)
    for j in range(1, d_max + 1):
        run *= (4.0 * ns - j + 1.0) / (4.0 * ns + j)
        out[:, j] = run
    return out
