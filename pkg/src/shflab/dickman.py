"""Dickman subordinator analytics and sampling.

The subordinator Y is the pure-jump Levy process with measure
nu(dt) = (1/t) 1_{(0,1)}(t) dt.  Its marginal density f_s has a closed
form below t = 1 and a one-step integral recursion above, and the
exponentially weighted Green's function

    G_theta(t) = int_0^infty e^{theta s} f_s(t) ds

drives every critical-window second-moment asymptotic in this package.
All s-integrals reduce to the two Volterra-type integrals

    V_k(c) = int_0^infty s^k e^{-c s} / Gamma(s+1) ds,   k = 0, 1,

evaluated by adaptive quadrature after locating the integrand peak.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.integrate import quad
from scipy.special import gammaln

EULER_GAMMA = float(np.euler_gamma)


class RangeError(ValueError):
    """Argument outside the tabulated or analytic domain."""


# ----------------------------------------------------------------------
# Volterra-type integrals
# ----------------------------------------------------------------------

def _volterra(c, k):
    """V_k(c) = int_0^infty s^k exp(-c s) / Gamma(s+1) ds for k in {0, 1}.

    Convergent for every real c because 1/Gamma(s+1) decays
    super-exponentially; c may be negative (large-t Green values).
    """
    def log_f(s):
        with np.errstate(divide="ignore"):
            return k * np.log(s) - c * s - gammaln(s + 1.0)

    grid = np.logspace(-9, 4.2, 1600)
    lf = log_f(grid)
    i_max = int(np.argmax(lf))
    peak = grid[i_max]
    lf_max = lf[i_max]
    # integration bounds where the integrand is below exp(-60) of its peak
    cut = lf_max - 60.0
    below_lo = np.nonzero(lf[:i_max] < cut)[0]
    lo = grid[below_lo[-1]] if below_lo.size else 0.0
    above_hi = np.nonzero(lf[i_max:] < cut)[0]
    hi = grid[i_max + above_hi[0]] if above_hi.size else grid[-1] * 10.0

    def f(s):
        return math.exp(k * math.log(s) - c * s - gammaln(s + 1.0)) if s > 0 else (
            1.0 if k == 0 else 0.0)

    scale = math.exp(lf_max)
    out1 = quad(f, lo, peak, epsabs=1e-13 * scale, epsrel=1e-11, limit=200)[0]
    out2 = quad(f, peak, hi, epsabs=1e-13 * scale, epsrel=1e-11, limit=200)[0]
    return out1 + out2


# ----------------------------------------------------------------------
# closed forms on (0, 1]
# ----------------------------------------------------------------------

_FAST_TABLES = {}
_FAST_RANGE = (-4.0, 120.0)


def volterra_fast(c, k):
    """Spline-tabulated V_k(c); falls back to direct quadrature outside
    the table.  V_k is smooth and log-convex in c, so a cubic spline of
    log V_k on a uniform c-grid reproduces it to ~1e-9 relative."""
    lo, hi = _FAST_RANGE
    if not lo <= c <= hi:
        return _volterra(c, k)
    if k not in _FAST_TABLES:
        from scipy.interpolate import CubicSpline
        cs = np.linspace(lo, hi, 1600)
        vals = np.array([_volterra(ci, k) for ci in cs])
        _FAST_TABLES[k] = CubicSpline(cs, np.log(vals))
    return math.exp(float(_FAST_TABLES[k](c)))


def green_theta_fast(theta, t):
    """Tabulated-path G_theta(t) for quadrature-heavy callers."""
    if not 0.0 < t <= 1.0:
        raise RangeError("green_theta is tabulated on (0, 1]")
    return volterra_fast(EULER_GAMMA - theta + math.log(1.0 / t), 1) / t


def green_integral_fast(theta, t):
    """Tabulated-path int_0^t G_theta."""
    if not 0.0 < t <= 1.0:
        raise RangeError("green_integral is defined on (0, 1]")
    return volterra_fast(EULER_GAMMA - theta + math.log(1.0 / t), 0)


def mass_below_one(s):
    """P(Y_s <= 1) = exp(-gamma s) / Gamma(s+1)."""
    if s < 0:
        raise RangeError("s must be nonnegative")
    return math.exp(-EULER_GAMMA * s - gammaln(s + 1.0))


def density_unit_interval(s, t):
    """f_s(t) for t in (0, 1]: s t^(s-1) exp(-gamma s) / Gamma(s+1)."""
    return s * t ** (s - 1.0) * mass_below_one(s)


def laplace(s, lam):
    """E[exp(lam Y_s)] = exp(s * int_0^1 (e^{lam t}-1)/t dt).

    The inner integral is the entire series sum_{n>=1} lam^n / (n n!).
    """
    if lam == 0.0:
        return 1.0
    total = 0.0
    term = 1.0  # lam^n / n! at n=0
    for n in range(1, 400):
        term *= lam / n
        add = term / n
        total += add
        if abs(add) < 1e-18 * max(abs(total), 1.0) and n > 4:
            break
    return math.exp(s * total)


# ----------------------------------------------------------------------
# density marching for t > 1
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DickmanGrid:
    """Tabulated f_s on a uniform t-grid with its marching metadata."""

    s: float
    h: float
    t_max: float
    t: np.ndarray
    f: np.ndarray
    unit_prefix: np.ndarray  # int_0^{t_j} f(a) / (1+a)^s da on [0, 1]
    layers: tuple = ()  # cusp-series (alpha, beta) of f(m + v) per integer m

    def density(self, t):
        if t <= 0:
            raise RangeError("t must be positive")
        if t <= 1.0:
            return density_unit_interval(self.s, t)
        if t > self.t_max:
            raise RangeError(f"t={t} beyond tabulated range {self.t_max}")
        # linear interpolation is enough: the grid step bounds the error
        return float(np.interp(t, self.t, self.f))

    def weighted_tail_integral(self, u):
        """int_0^u f(a) (1+a)^{-s} da for u <= t_max - 1 (recursion oracle)."""
        per = int(round(1.0 / self.h))
        if u <= 1.0:
            return float(np.interp(u, self.t[:per + 1], self.unit_prefix))
        j = int(math.floor((u - 1.0) / self.h))
        grid = self.t[per:per + j + 1]
        vals = self.f[per:per + j + 1] * (1.0 + grid) ** (-self.s)
        base = self.unit_prefix[-1] + float(np.trapezoid(vals, dx=self.h))
        # partial last cell
        g_l = self.f[per + j] * (1.0 + self.t[per + j]) ** (-self.s)
        g_u = self.density(1.0 + u) * (2.0 + u) ** (-self.s) if u > 0 else g_l
        return base + 0.5 * (u - 1.0 - j * self.h) * (g_l + g_u)


def _series_prefix(s, u):
    """sum_k binom(-s-1, k) u^{s+1+k} / (s+1+k) = int_0^u a^s (1+a)^{-s-1} da,
    termwise binomial series, u <= 1/2."""
    total = np.zeros_like(u, dtype=float)
    coef = 1.0
    power = u ** (s + 1.0)
    for k in range(120):
        total += coef * power / (s + 1.0 + k)
        coef *= -(s + 1.0 + k) / (k + 1.0)
        power = power * u
        if abs(coef) * 0.5 ** (s + 2.0 + k) < 1e-19:
            break
    return total


# -- cusp-series algebra: F(v) = sum_j alpha_j v^j + v^s sum_j beta_j v^j --
#
# The density restricted to (m, m+1/2] is exactly of this form (the
# recursion injects a v^s branch at every integer, progressively damped),
# so layers can be propagated by coefficient arithmetic and the marching
# quadrature never crosses a singular point.

_SERIES_LEN = 60


def _binom_taylor(p, base, n):
    """Taylor coefficients of (base + v)^p around v=0, length n."""
    out = np.empty(n)
    out[0] = base ** p
    for j in range(1, n):
        out[j] = out[j - 1] * (p - j + 1) / (j * base)
    return out


def _conv_trunc(a, b, n):
    return np.convolve(a, b)[:n]


def _layer_integral(alpha, beta, s, w0, n):
    """Termwise Q(v) = int_0^v F(u) (w0 + u)^{-s} du for a cusp series F.

    Returns (q_alpha, q_beta) with q_beta indexed so that exponent
    s + j goes with q_beta[j] (q_beta[0] = 0 after integration).
    """
    g = _binom_taylor(-s, w0, n)
    pa = _conv_trunc(alpha, g, n)
    pb = _conv_trunc(beta, g, n)
    qa = np.zeros(n)
    qb = np.zeros(n)
    js = np.arange(1, n, dtype=float)
    qa[1:] = pa[:-1] / js
    qb[1:] = pb[:-1] / (s + js)
    return qa, qb


def _eval_layer(alpha, beta, s, v):
    return (np.polynomial.polynomial.polyval(v, alpha)
            + v ** s * np.polynomial.polynomial.polyval(v, beta))


def build_grid(s, t_max=8.0, h=1e-3):
    """Tabulate f_s via the t > 1 recursion
    f_s(t) = s t^{s-1} [ e^{-gamma s}/Gamma(s+1) - int_0^{t-1} f_s(a)/(1+a)^s da ].

    Numerically the recursion is marched in its differentiated form
    f'(t) = ((s-1) f(t) - s f(t-1)) / t (exactly equivalent; for s = 1 it
    is the classical Dickman delay ODE), because for s < 1 the integral
    form loses all relative accuracy in the far tail where the bracket is
    a cancellation of O(1) terms.  The stretch (1, 3/2] is seeded by the
    exact series of the integral form, which also resolves the t^s cusp
    at 1+.  The integral form itself stays available as a cross-check via
    weighted_tail_integral.
    """
    if s <= 0:
        raise RangeError("s must be positive")
    per = int(round(1.0 / h))
    h = 1.0 / per
    n_pts = int(round(t_max / h)) + 1
    t = np.arange(n_pts) * h
    f = np.empty(n_pts)
    c = mass_below_one(s)

    on_unit = t[1:per + 1]
    f[1:per + 1] = s * on_unit ** (s - 1.0) * c
    f[0] = np.inf if s < 1 else (c if s == 1 else 0.0)

    # prefix integral on [0, 1] by parts:
    # W(u) = c u^s (1+u)^{-s} + s c int_0^u a^s (1+a)^{-s-1} da,
    # with the a^s cusp at 0 handled by the binomial series up to 1/8
    w = np.empty(per + 1)
    j0 = max(per // 8, 1)
    cum_head = _series_prefix(s, t[:j0 + 1])
    smooth = t[:per + 1] ** s * (1.0 + t[:per + 1]) ** (-s - 1.0)
    cum_tail = np.cumsum((smooth[j0 + 1:] + smooth[j0:-1]) * 0.5 * h)
    cum = np.concatenate((cum_head, cum_head[-1] + cum_tail))
    w[:] = c * t[:per + 1] ** s * (1.0 + t[:per + 1]) ** (-s) + s * c * cum
    w[0] = 0.0

    # Above t = 1 the density alternates between exact cusp-series
    # stretches (m, m+1/2], propagated layer to layer by coefficient
    # algebra, and a marched quadrature of g(t) = f(t) t^{1-s} on
    # (m+1/2, m+1], whose derivative g' = -s f(t-1) t^{-s} involves only
    # lagged (already known) values.  The backward 4-point Newton-Cotes
    # step never straddles an integer, where f has a v^s branch.
    half = per // 2
    n_ser = _SERIES_LEN
    # layer at m=1 from the by-parts form: f(1+v) = s(1+v)^{s-1}(c - W(v)),
    # W(v) = c v^s (1+v)^{-s} + s c * series_prefix
    w_beta = np.empty(n_ser)
    w_beta[:] = c * _binom_taylor(-s, 1.0, n_ser)
    coefs = np.empty(n_ser - 1)
    coef = 1.0
    for k in range(n_ser - 1):
        coefs[k] = coef / (s + 1.0 + k)
        coef *= -(s + 1.0 + k) / (k + 1.0)
    w_beta[1:] += s * c * coefs
    t2 = s * _binom_taylor(s - 1.0, 1.0, n_ser)
    alpha = c * t2
    beta = _conv_trunc(t2, -w_beta, n_ser)

    layers = []
    m_max = int(math.floor(t_max - 1e-9))
    for m in range(1, m_max + 1):
        layers.append((alpha.copy(), beta.copy()))
        base = m * per
        stop_ser = min(base + half, n_pts - 1)
        v = t[base + 1:stop_ser + 1] - m
        f[base + 1:stop_ser + 1] = _eval_layer(alpha, beta, s, v)
        if stop_ser >= n_pts - 1:
            break
        # march (m+1/2, m+1] (or up to t_max on the last stretch)
        stop_march = min((m + 1) * per, n_pts - 1)
        g = f[stop_ser] * t[stop_ser] ** (1.0 - s)
        for j in range(stop_ser + 1, stop_march + 1):
            q3 = f[j - per] * ((j * h) ** (-s))
            q2 = f[j - 1 - per] * (((j - 1) * h) ** (-s))
            q1 = f[j - 2 - per] * (((j - 2) * h) ** (-s))
            q0 = f[j - 3 - per] * (((j - 3) * h) ** (-s))
            g -= s * (h / 24.0) * (q0 - 5.0 * q1 + 19.0 * q2 + 9.0 * q3)
            f[j] = g * t[j] ** (s - 1.0)
        if stop_march >= n_pts - 1:
            break
        # next layer: f(m+1+v) = s(m+1+v)^{s-1} [(c - W(m)) - Q_m(v)]
        # with c - W(m) = f(m+1) / (s (m+1)^{s-1}) from the march endpoint
        qa, qb = _layer_integral(alpha, beta, s, float(m + 1), n_ser)
        head = f[(m + 1) * per] / (s * (m + 1.0) ** (s - 1.0))
        bracket_a = -qa
        bracket_a[0] += head
        taylor = s * _binom_taylor(s - 1.0, float(m + 1), n_ser)
        alpha = _conv_trunc(taylor, bracket_a, n_ser)
        beta = _conv_trunc(taylor, -qb, n_ser)
    return DickmanGrid(s=float(s), h=h, t_max=float(t_max), t=t, f=f,
                       unit_prefix=w, layers=tuple(layers))


@lru_cache(maxsize=32)
def _cached_grid(s, t_max, h):
    return build_grid(s, t_max=t_max, h=h)


def density(s, t, t_max=8.0, h=1e-3):
    """Marginal density f_s(t); closed form below 1, marched table above."""
    if t <= 0:
        raise RangeError("t must be positive")
    if t <= 1.0:
        return density_unit_interval(s, t)
    return _cached_grid(float(s), float(t_max), float(h)).density(t)


def total_mass(s, t_max=8.0, h=1e-3):
    """int_0^{t_max} f_s: closed form below 1, termwise series over the
    cusp stretches (m, m+1/2], trapezoid over the smooth marched rest."""
    grid = _cached_grid(float(s), float(t_max), float(h))
    per = int(round(1.0 / grid.h))
    half = per // 2
    total = mass_below_one(s)
    js = np.arange(_SERIES_LEN, dtype=float)
    for m, (alpha, beta) in enumerate(grid.layers, start=1):
        v_hi = min(0.5, grid.t_max - m)
        total += float(np.sum(alpha * v_hi ** (js + 1) / (js + 1)))
        total += float(np.sum(beta * v_hi ** (s + js + 1) / (s + js + 1)))
        lo = m * per + half
        hi = min((m + 1) * per, grid.t.size - 1)
        if lo < hi:
            total += float(np.trapezoid(grid.f[lo:hi + 1], dx=grid.h))
    return total


# ----------------------------------------------------------------------
# weighted Green's function
# ----------------------------------------------------------------------

def green_theta(theta, t):
    """G_theta(t) = int_0^infty e^{(theta-gamma) s} s t^{s-1} / Gamma(s+1) ds,
    valid on t in (0, 1]."""
    if not 0.0 < t <= 1.0:
        raise RangeError("green_theta is tabulated on (0, 1]")
    return _volterra(EULER_GAMMA - theta + math.log(1.0 / t), 1) / t


def green_integral(theta, t):
    """int_0^t G_theta(a) da via the exact s-representation
    int_0^infty e^{(theta-gamma)s} t^s / Gamma(s+1) ds (t <= 1)."""
    if not 0.0 < t <= 1.0:
        raise RangeError("green_integral is defined on (0, 1]")
    return _volterra(EULER_GAMMA - theta + math.log(1.0 / t), 0)


def green_bar(theta, split=50.0, tail_cut=1e-7):
    """bar G_theta = int_0^1 G_theta(t) dt by t-quadrature.

    Substituting t = e^{-x} maps the integral to int_0^infty H(x) dx with
    H(x) = V_1(gamma - theta + x), which decays like 1/x^2; the far tail
    is folded by w = 1/x.  (The closed alternative V_0(gamma - theta) is
    kept as an independent cross-check, not used here.)
    """
    def H(x):
        return _volterra(EULER_GAMMA - theta + x, 1)

    part1 = quad(H, 0.0, split, epsrel=1e-9, limit=300)[0]
    part2 = quad(lambda w: H(1.0 / w) / (w * w), tail_cut, 1.0 / split,
                 epsrel=1e-9, limit=300)[0]
    # beyond x = 1/tail_cut the integrand is below ~tail_cut^2
    return part1 + part2


def green_bar_oracle(theta):
    """Fubini form int_0^infty e^{theta s} P(Y_s <= 1) ds = V_0(gamma - theta)."""
    return _volterra(EULER_GAMMA - theta, 0)


# ----------------------------------------------------------------------
# exact-in-law sampler
# ----------------------------------------------------------------------

@dataclass(frozen=True)
class DickmanPath:
    """Piecewise-linear-in-drift, jump-decorated path of Y up to s_max."""

    s_max: float
    delta: float
    jump_s: np.ndarray
    jump_t: np.ndarray

    def value(self, s):
        """Y_s = delta * s (small-jump compensation) + sum of jumps by s."""
        s = np.asarray(s, dtype=float)
        idx = np.searchsorted(self.jump_s, s, side="right")
        cums = np.concatenate(([0.0], np.cumsum(self.jump_t)))
        out = self.delta * s + cums[idx]
        return float(out) if out.ndim == 0 else out

    def spatial_skeleton(self, rng):
        """Positions W_{Y_s}/sqrt(2) sampled at the jump skeleton.

        Returns (s_points, y_values, positions): a 2d Brownian motion run
        in the Y clock, evaluated just after every jump and at s_max.
        """
        s_pts = np.concatenate((self.jump_s, [self.s_max]))
        y_pts = self.value(s_pts)
        dy = np.diff(np.concatenate(([0.0], y_pts)))
        steps = rng.normal(size=(dy.size, 2)) * np.sqrt(np.maximum(dy, 0.0) / 2.0)[:, None]
        return s_pts, y_pts, np.cumsum(steps, axis=0)


def sample_path(s_max, rng, delta=1e-6):
    """One exact-in-law path: jumps above delta arrive at rate log(1/delta)
    with size density 1/(t log(1/delta)) on (delta, 1); discarded small
    jumps are compensated by drift delta per unit s (their exact mean)."""
    if s_max < 0:
        raise ValueError("s_max must be nonnegative")
    if s_max == 0:
        return DickmanPath(0.0, delta, np.zeros(0), np.zeros(0))
    rate = math.log(1.0 / delta)
    k = rng.poisson(rate * s_max)
    s_i = np.sort(rng.uniform(0.0, s_max, size=k))
    t_i = delta ** (1.0 - rng.uniform(size=k))  # inverse CDF on (delta, 1)
    return DickmanPath(float(s_max), float(delta), s_i, t_i)


def sample_terminal(s_max, n, rng, delta=1e-6):
    """Vectorized draws of Y_{s_max} for n independent paths."""
    rate = math.log(1.0 / delta)
    counts = rng.poisson(rate * s_max, size=n)
    total = int(counts.sum())
    sizes = delta ** (1.0 - rng.uniform(size=total))
    bounds = np.concatenate(([0], np.cumsum(counts)))
    sums = np.add.reduceat(np.concatenate((sizes, [0.0])), bounds[:-1])
    sums[counts == 0] = 0.0
    return delta * s_max + sums


def max_jump_terminal(s_max, n, rng, delta=1e-6):
    """(Y_{s_max}, max jump) pairs, for the conditional scaling diagnostic."""
    rate = math.log(1.0 / delta)
    counts = rng.poisson(rate * s_max, size=n)
    total = int(counts.sum())
    sizes = delta ** (1.0 - rng.uniform(size=total))
    bounds = np.concatenate(([0], np.cumsum(counts)))
    padded = np.concatenate((sizes, [0.0]))
    sums = np.add.reduceat(padded, bounds[:-1])
    maxs = np.maximum.reduceat(padded, bounds[:-1])
    empty = counts == 0
    sums[empty] = 0.0
    maxs[empty] = 0.0
    return delta * s_max + sums, maxs
