"""2d random walk kernel: step law, n-step marginals, replica overlap.

The walk has i.i.d. increments with independent coordinates, each drawn
from a symmetric 1d step law with mean 0 and unit variance, so the 2d
covariance matrix is the identity.  Because the coordinates are
independent, every 2d quantity reduces to products of 1d marginals,
which keeps the tables one-dimensional.
"""

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numba import njit
from scipy.signal import fftconvolve


class HorizonError(ValueError):
    """Requested horizon exceeds the kernel cache."""


@dataclass(frozen=True)
class StepLaw1d:
    """Symmetric integer step law used independently per coordinate.

    Invariants checked at construction: probabilities sum to 1, mean 0,
    variance 1, an atom at 0 (aperiodicity) and atoms at +-1
    (irreducibility).  Support is finite by construction, so all
    exponential moments exist.
    """

    support: tuple
    probs: tuple

    def __post_init__(self):
        s = np.asarray(self.support, dtype=np.int64)
        p = np.asarray(self.probs, dtype=np.float64)
        if s.shape != p.shape or s.ndim != 1:
            raise ValueError("support and probs must be 1d and aligned")
        if np.any(p < 0):
            raise ValueError("negative probability")
        if abs(math.fsum(p) - 1.0) > 1e-12:
            raise ValueError("probabilities must sum to 1")
        if abs(math.fsum(p * s)) > 1e-12:
            raise ValueError("step law must have mean 0")
        if abs(math.fsum(p * s.astype(float) ** 2) - 1.0) > 1e-12:
            raise ValueError("step law must have unit variance")
        for required in (0, 1, -1):
            if required not in s or p[list(s).index(required)] <= 0:
                raise ValueError("law must put positive mass on 0 and +-1")

    @property
    def lo(self):
        return int(min(self.support))

    @property
    def hi(self):
        return int(max(self.support))

    def pmf_array(self):
        """Dense pmf over offsets lo..hi."""
        arr = np.zeros(self.hi - self.lo + 1)
        for x, p in zip(self.support, self.probs):
            arr[x - self.lo] = p
        return arr


def default_step_law():
    """Canonical step law P(0)=3/8, P(+-1)=1/4, P(+-2)=1/16.

    Per coordinate this is K - 2 with K ~ Binomial(4, 1/2), which gives
    unit variance, aperiodicity and bounded support, and makes n-step
    marginals exact binomial tails.
    """
    return StepLaw1d(support=(-2, -1, 0, 1, 2),
                     probs=(1 / 16, 1 / 4, 3 / 8, 1 / 4, 1 / 16))


def _is_default_law(step):
    d = default_step_law()
    return (tuple(step.support) == d.support
            and np.allclose(step.probs, d.probs, rtol=0, atol=1e-15))


@njit(cache=True)
def _binomial_q2n0(n_max):
    """q_{2n}(0,0) for the default law, n = 0..n_max.

    Uses q_{2n}(0) = p_{2n}(0)^2 with p_{2n}(0) = C(8n,4n)/2^{8n}; the
    central binomial ratio b_k = b_{k-1}(2k-1)/(2k) is exact in floating
    point to ~1e-12 relative even at n ~ 4e6.
    """
    out = np.empty(n_max + 1)
    out[0] = 1.0
    b = 1.0  # C(2k,k)/4^k at k=0
    k = 0
    for n in range(1, n_max + 1):
        for _ in range(4):  # advance b from k=4(n-1) to k=4n
            k += 1
            b *= (2.0 * k - 1.0) / (2.0 * k)
        out[n] = b * b
    return out


@njit(cache=True)
def _kahan_cumsum(values):
    out = np.empty(values.size)
    total = 0.0
    comp = 0.0
    for i in range(values.size):
        y = values[i] - comp
        t = total + y
        comp = (t - total) - y
        total = t
        out[i] = total
    return out


def _conv(a, b):
    """1d convolution; direct for small sizes, FFT beyond."""
    if min(a.size, b.size) <= 32 or a.size + b.size <= 4096:
        return np.convolve(a, b)
    out = fftconvolve(a, b)
    # FFT jitter can leave tiny negatives in far tails
    np.clip(out, 0.0, None, out=out)
    return out


def _pmf_power(pmf, n):
    """n-fold self-convolution of a pmf by binary powering."""
    if n == 0:
        return np.array([1.0])
    result = None
    base = pmf
    while True:
        if n & 1:
            result = base if result is None else _conv(result, base)
        n >>= 1
        if n == 0:
            return result
        base = _conv(base, base)


class WalkKernel:
    """Cached transition probabilities of the 2d walk up to a horizon.

    Stores only 1d n-step marginals p_n (computed lazily) plus the scalar
    tables q_{2n}(0,0) and R_N; 2d values are rebuilt on demand from
    q_n(x) = p_n(x1) p_n(x2).
    """

    def __init__(self, step=None, cache_n=1 << 16):
        self.step = step if step is not None else default_step_law()
        self.cache_n = int(cache_n)
        self._marginals = {}
        if _is_default_law(self.step):
            self.q2n0 = _binomial_q2n0(self.cache_n)
        else:
            self.q2n0 = self._q2n0_by_convolution(self.cache_n)
        # r_table[N] = R_N = sum_{n=1}^{N} q_{2n}(0); r_table[0] = 0
        self.r_table = np.concatenate(
            ([0.0], _kahan_cumsum(self.q2n0[1:])))

    def _q2n0_by_convolution(self, n_max):
        """Rolling 1d convolution: q_{2n}(0) = (sum_k p_n(k)^2)^2."""
        out = np.empty(n_max + 1)
        out[0] = 1.0
        p = np.array([1.0])
        kern = self.step.pmf_array()
        for n in range(1, n_max + 1):
            p = np.convolve(p, kern)
            a = float(p @ p)  # = p_{2n}(0) by symmetry
            out[n] = a * a
        return out

    def marginal_1d(self, n):
        """1d n-step pmf as (offset_lo, array over offsets lo..hi)."""
        if n < 0 or n > self.cache_n:
            raise HorizonError(f"n={n} outside cache (cache_n={self.cache_n})")
        if n not in self._marginals:
            arr = _pmf_power(self.step.pmf_array(), n)
            self._marginals[n] = (n * self.step.lo, arr)
        return self._marginals[n]

    def p_n(self, n, k):
        """1d marginal P(S^1_n = k)."""
        lo, arr = self.marginal_1d(n)
        idx = int(k) - lo
        if idx < 0 or idx >= arr.size:
            return 0.0
        return float(arr[idx])

    def q_n(self, n, x):
        """2d transition probability q_n(x) = P(S_n = x | S_0 = 0)."""
        if n < 0 or n > self.cache_n:
            raise HorizonError(f"n={n} outside cache (cache_n={self.cache_n})")
        x1, x2 = int(x[0]), int(x[1])
        if n == 0:
            return 1.0 if x1 == 0 and x2 == 0 else 0.0
        return self.p_n(n, x1) * self.p_n(n, x2)

    def replica_overlap(self, N):
        """R_N = sum_{n=1..N} q_{2n}(0); expected collisions of two walks."""
        if N < 0 or N > self.cache_n:
            raise HorizonError(f"N={N} outside cache (cache_n={self.cache_n})")
        return float(self.r_table[N])

    def q2n_series(self, n_max, dx):
        """Array of q_{2n}(dx) for n = 1..n_max at a fixed displacement.

        For the default binomial law this uses the exact ratio recursion
        p_{2n}(d) = p_{2n}(0) prod_{j<=|d|} (4n-j+1)/(4n+j); other laws
        fall back to cached marginals (keep n_max moderate there).
        """
        if n_max > self.cache_n:
            raise HorizonError(f"n_max={n_max} outside cache")
        d1, d2 = abs(int(dx[0])), abs(int(dx[1]))
        if _is_default_law(self.step):
            ns = np.arange(1, n_max + 1, dtype=float)
            p0 = np.sqrt(self.q2n0[1:n_max + 1])
            out = p0 * p0
            for d in (d1, d2):
                run = np.ones(n_max)
                for j in range(1, d + 1):
                    run *= (4.0 * ns - j + 1.0) / (4.0 * ns + j)
                out = out * run
            return out
        return np.array([self.p_n(2 * n, d1) * self.p_n(2 * n, d2)
                         for n in range(1, n_max + 1)])

    def q2n0_ratio_series(self, n_values):
        """(N, R_N / (log N / 4 pi)) pairs for overlap asymptotics checks."""
        n_values = np.asarray(n_values, dtype=np.int64)
        return np.column_stack(
            [n_values.astype(float),
             self.r_table[n_values] / (np.log(n_values) / (4 * np.pi))])

    def local_clt_error(self, n, window_mult=10.0):
        """max_x |q_n(x) - g_n(x)| * n^2 over the diffusive bulk.

        The max is taken over |x_i| <= window_mult * sqrt(n) (clipped to
        the support); beyond that both terms are far below the attained
        maximum, which sits at the origin scale.
        """
        if n < 1:
            raise ValueError("n >= 1 required")
        lo, arr = self.marginal_1d(n)
        w = min(-lo, int(math.ceil(window_mult * math.sqrt(n))) + 2)
        ks = np.arange(-w, w + 1)
        p = arr[ks - lo]
        g1 = np.exp(-ks.astype(float) ** 2 / (2.0 * n)) / math.sqrt(2 * math.pi * n)
        diff = np.abs(np.outer(p, p) - np.outer(g1, g1))
        return float(diff.max()) * n * n


@dataclass(frozen=True)
class HeatKernel:
    """Continuum 2d heat kernel g_t(x) = exp(-|x|^2 / 2t) / (2 pi t)."""

    t: float

    def density(self, x):
        x = np.asarray(x, dtype=float)
        r2 = np.sum(x * x, axis=-1)
        return np.exp(-r2 / (2.0 * self.t)) / (2.0 * math.pi * self.t)


def heat_kernel(t, x1, x2=0.0):
    """g_t evaluated at the point (x1, x2); vectorized in x1/x2."""
    r2 = np.asarray(x1, dtype=float) ** 2 + np.asarray(x2, dtype=float) ** 2
    return np.exp(-r2 / (2.0 * t)) / (2.0 * math.pi * t)


@lru_cache(maxsize=8)
def shared_kernel(cache_n=1 << 16):
    """Process-wide default-law kernel (immutable, safe to share)."""
    return WalkKernel(cache_n=cache_n)
