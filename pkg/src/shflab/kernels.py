"""Continuum covariance kernels of the critical 2d stochastic heat flow.

Everything here is deterministic quadrature on top of the Dickman Green
function G_theta.  Spatial arguments are continuum (macroscopic) points;
time horizons are restricted to t <= 1 so G_theta's explicit (0, 1]
domain suffices.

Conventions: the underlying walk has identity covariance, so the heat
kernel is g_t(x) = exp(-|x|^2/2t)/(2 pi t) and the one-point function of
the flow is g_{t-s}(y-x).  All kernels inherit these constants.
"""

import math

import numpy as np
from scipy.integrate import quad
from scipy.special import exp1, j0

from . import dickman
from .walk import heat_kernel


class DomainError(ValueError):
    """Arguments outside the kernel's tabulated/analytic domain."""


DIVERGENT = math.inf  # sentinel for coincident spatial diagonals


def _sep2(x, xp):
    dx = float(x[0]) - float(xp[0])
    dy = float(x[1]) - float(xp[1])
    return dx * dx + dy * dy


def _expint_weighted(m_lo, func, epsrel=1e-8, limit=150):
    """int_{m_lo}^infty e^{-m}/m * func(m) dm via m = m_lo e^tau (the 1/m
    shape spans many decades when m_lo is tiny, so integrate in log-m)."""
    tau_hi = math.log((m_lo + 60.0) / m_lo)

    def g(tau):
        m = m_lo * math.exp(tau)
        return math.exp(-m) * func(m)

    mid = min(tau_hi, max(1.0, math.log(1.0 / m_lo) if m_lo < 1 else 1.0))
    return (quad(g, 0.0, mid, limit=limit, epsabs=0.0, epsrel=epsrel)[0]
            + quad(g, mid, tau_hi, limit=limit, epsabs=0.0, epsrel=epsrel)[0])


def k_tilde(theta, t, x, xp):
    """Covariance kernel K~_t^theta(x, x') of the point-to-plane flow:
    4 pi int_{0<u<v<t} g_{2u}(x'-x) G_theta(v-u) du dv.

    Substituting m = |x-x'|^2/(4u) gives
    int_{m0}^infty e^{-m}/m * IG_theta(t - r^2/(4m)) dm, m0 = r^2/(4t),
    which is smooth and handles the logarithmic blow-up at r -> 0.
    Coincident points return the DIVERGENT sentinel.
    """
    if not 0.0 < t <= 1.0:
        raise DomainError("k_tilde needs 0 < t <= 1")
    r2 = _sep2(x, xp)
    if r2 == 0.0:
        return DIVERGENT
    m0 = r2 / (4.0 * t)

    def f(m):
        tau = t - r2 / (4.0 * m)
        if tau <= 0.0:
            return 0.0
        return dickman.green_integral_fast(theta, tau)

    return _expint_weighted(m0, f)


def k_full(theta, t, x, xp, y, yp):
    """Two-endpoint covariance kernel K_t^theta(x, x'; y, y'):
    4 pi g_{t/2}((y+y')/2 - (x+x')/2) *
        int_{0<a<b<t} g_{2a}(x'-x) G_theta(b-a) g_{2(t-b)}(y'-y) da db.
    """
    if not 0.0 < t <= 1.0:
        raise DomainError("k_full needs 0 < t <= 1")
    r1s = _sep2(x, xp)
    r2s = _sep2(y, yp)
    if r1s == 0.0 or r2s == 0.0:
        return DIVERGENT
    mid = ((0.5 * (y[0] + yp[0]) - 0.5 * (x[0] + xp[0])),
           (0.5 * (y[1] + yp[1]) - 0.5 * (x[1] + xp[1])))
    front = 4.0 * math.pi * float(heat_kernel(0.5 * t, mid[0], mid[1]))

    def inner(a):
        # int_0^{top} G_theta(w) g_{2(top-w)}(r2) dw with top = t - a.
        # Near w=0 the barely-integrable G mass is folded analytically
        # (g is locally constant there); near w=top the Gaussian kills
        # the 1/(top-w) pole after the substitution m = r2^2/(4(top-w)).
        top = t - a
        delta = 1e-6 * top
        head = (math.exp(-r2s / (4.0 * top)) / (4.0 * math.pi * top)
                * dickman.green_integral_fast(theta, delta))

        def h_mid(tau):  # w = (top/2) e^{-tau}; G(w) w is bounded smooth
            w = 0.5 * top * math.exp(-tau)
            rem = top - w
            g2 = math.exp(-r2s / (4.0 * rem)) / (4.0 * math.pi * rem)
            return dickman.green_theta_fast(theta, w) * w * g2

        middle = quad(h_mid, 0.0, math.log(0.5 * top / delta), limit=100,
                      epsabs=0.0, epsrel=1e-7)[0]

        m1 = r2s / (2.0 * top)

        def h_top(m):
            w = top - r2s / (4.0 * m)
            if w <= 0.0:
                return 0.0
            return dickman.green_theta_fast(theta, w) / (4.0 * math.pi)

        tail = _expint_weighted(m1, h_top, epsrel=1e-7, limit=100)
        return head + middle + tail

    m0 = r1s / (4.0 * t)

    def outer(m):
        a = r1s / (4.0 * m)
        if a >= t:
            return 0.0
        return inner(a) / (4.0 * math.pi)

    val = _expint_weighted(m0, outer, epsrel=1e-6, limit=100)
    return front * val


def scaling_identity_residual(theta, t, a, x, xp):
    """Relative residual of the scaling covariance at the kernel level:
    K~^theta_{at}(sqrt(a) x, sqrt(a) x') vs K~^{theta + log a}_t(x, x')."""
    if a <= 0:
        raise DomainError("a must be positive")
    ra = math.sqrt(a)
    lhs = k_tilde(theta, a * t, (ra * x[0], ra * x[1]), (ra * xp[0], ra * xp[1]))
    rhs = k_tilde(theta + math.log(a), t, x, xp)
    return abs(lhs - rhs) / abs(rhs)


def coarse_grained_variance(theta, eps):
    """(4 pi / eps) int_0^eps int_0^{eps - u} G_theta(t) dt du.

    The inner integral is IG_theta(eps - u); substituting w = eps e^{-y}
    resolves the 1/log endpoint behaviour.
    """
    if not 0.0 < eps < 1.0 + 1e-12:
        raise DomainError("eps in (0, 1)")

    def f(y):
        return dickman.green_integral_fast(theta, eps * math.exp(-y)) * math.exp(-y)

    val = quad(f, 0.0, 45.0, limit=300)[0]
    # beyond y = 45 the integrand is ~ e^{-y}/y, negligible at 1e-21
    return 4.0 * math.pi * val


def mean_kernel(t, x, y):
    """First-moment density of the flow: E[SHF_{0,t}(dx, dy)] = g_t(y-x)."""
    return float(heat_kernel(t, y[0] - x[0], y[1] - x[1]))


# ----------------------------------------------------------------------
# Edwards-Wilkinson variance machinery
# ----------------------------------------------------------------------

def ew_kernel(t, r):
    """K_t(x, x') = int_0^t g_{2u}(x - x') du = E_1(r^2/(4t)) / (4 pi).

    This is the time-integrated heat kernel of the identity-covariance
    convention used throughout the package.  (The simple-random-walk
    normalization seen elsewhere differs by constants; the exact lattice
    covariance computation in the moments module arbitrates.)
    """
    r = np.asarray(r, dtype=float)
    return exp1(r * r / (4.0 * t)) / (4.0 * math.pi)


def ew_variance(phi_radial, radius, t=1.0, k_max=160.0, n_k=32000, n_r=4000):
    """sigma^2_{t,phi} = iint phi(x) K_t(x, x') phi(x') dx dx' for a radial
    test function, via the Hankel/Fourier closed form
    FT[K_t](k) = (1 - e^{-t k^2}) / k^2:

        sigma^2 = (1/2 pi) int_0^infty |phi_hat(k)|^2 (1 - e^{-t k^2}) dk / k.
    """
    rs = np.linspace(0.0, radius, n_r + 1)
    fr = phi_radial(rs) * rs
    ks = np.linspace(k_max / n_k, k_max, n_k)
    phat = 2.0 * math.pi * np.trapezoid(fr * j0(np.outer(ks, rs)), rs, axis=-1)
    integrand = phat ** 2 * (1.0 - np.exp(-t * ks ** 2)) / ks
    # k -> 0 limit of the integrand is phat(0)^2 * t * k, vanishing
    return float(np.trapezoid(integrand, ks) / (2.0 * math.pi))
