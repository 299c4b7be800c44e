"""Disorder laws, the chaos variance, window selection, and the i.i.d. field.

The field omega(n, z) is a pure function of (seed, n, z) built from a
chained splitmix64 hash, so any site can be generated in O(1), in any
traversal order, on any number of workers, with bit-identical results.
"""

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX_B = np.uint64(0xBF58476D1CE4E5B9)
_MIX_C = np.uint64(0x94D049BB133111EB)
_LANE2 = np.uint64(0xD1B54A32D192ED03)

FAMILY_GAUSSIAN = 0
FAMILY_RADEMACHER = 1
FAMILY_FINITE = 2

_FAMILY_CODES = {"gaussian": FAMILY_GAUSSIAN,
                 "rademacher": FAMILY_RADEMACHER,
                 "finite": FAMILY_FINITE}


class BetaRangeError(ValueError):
    """beta outside the finite-lambda range of the family."""


class WindowCollapseError(ValueError):
    """Requested critical window has non-positive target variance."""


@dataclass(frozen=True)
class DisorderLaw:
    """Mean-zero unit-variance disorder law.

    family is one of "gaussian", "rademacher", "finite"; the finite
    family takes explicit atoms and probabilities (standardized at
    construction if not already mean 0, variance 1).
    """

    family: str
    atoms: tuple = ()
    probs: tuple = ()

    def __post_init__(self):
        if self.family not in _FAMILY_CODES:
            raise ValueError(f"unknown family {self.family!r}")
        if self.family == "finite":
            a = np.asarray(self.atoms, dtype=float)
            p = np.asarray(self.probs, dtype=float)
            if a.size < 2 or a.shape != p.shape:
                raise ValueError("finite law needs aligned atoms/probs")
            if np.any(p <= 0) or abs(math.fsum(p) - 1.0) > 1e-12:
                raise ValueError("probs must be positive and sum to 1")
            m = math.fsum(p * a)
            v = math.fsum(p * (a - m) ** 2)
            if abs(m) > 1e-12 or abs(v - 1.0) > 1e-12:
                a = (a - m) / math.sqrt(v)
                object.__setattr__(self, "atoms", tuple(a))
                object.__setattr__(self, "probs", tuple(p))

    @property
    def family_code(self):
        return _FAMILY_CODES[self.family]

    @property
    def beta_max(self):
        # guard against overflow of exp(beta * omega); all three families
        # have lambda(beta) finite for every real beta
        if self.family == "gaussian":
            return 25.0
        scale = max(abs(a) for a in self.atoms) if self.family == "finite" else 1.0
        return 200.0 / scale

    def atom_arrays(self):
        """(atoms, cumulative probs) for the finite sampler; empty otherwise."""
        if self.family == "finite":
            a = np.asarray(self.atoms, dtype=float)
            c = np.cumsum(np.asarray(self.probs, dtype=float))
            c[-1] = 1.0
            return a, c
        return np.zeros(0), np.zeros(0)


def gaussian_law():
    return DisorderLaw("gaussian")


def rademacher_law():
    return DisorderLaw("rademacher")


def skewed_two_point_law():
    """Finite-support law with the skewness (=2) of a centred exponential.

    Takes value 1+sqrt(2) with probability (2-sqrt(2))/4 and 1-sqrt(2)
    otherwise: long right tail, bulk slightly negative.
    """
    r2 = math.sqrt(2.0)
    return DisorderLaw("finite",
                       atoms=(1.0 - r2, 1.0 + r2),
                       probs=((2.0 + r2) / 4.0, (2.0 - r2) / 4.0))


def lambda_(law, beta):
    """Log moment generating function lambda(beta) = log E[exp(beta omega)]."""
    beta = float(beta)
    if abs(beta) > law.beta_max:
        raise BetaRangeError(f"beta={beta} outside safe range of {law.family}")
    if law.family == "gaussian":
        return 0.5 * beta * beta
    if law.family == "rademacher":
        # log cosh, stable for large |beta|
        ab = abs(beta)
        return ab + math.log1p(math.exp(-2.0 * ab)) - math.log(2.0)
    a = np.asarray(law.atoms)
    p = np.asarray(law.probs)
    m = beta * a
    mmax = m.max()
    return float(mmax + np.log(np.sum(p * np.exp(m - mmax))))


def sigma2_of_beta(law, beta):
    """Chaos variance sigma^2 = exp(lambda(2 beta) - 2 lambda(beta)) - 1."""
    beta = float(beta)
    if beta == 0.0:
        return 0.0
    if law.family == "gaussian":
        return math.expm1(beta * beta)
    return math.expm1(lambda_(law, 2.0 * beta) - 2.0 * lambda_(law, beta))


def beta_of_sigma2(law, target):
    """Invert sigma2_of_beta on beta >= 0 (monotone bisection)."""
    if target < 0:
        raise ValueError("target variance must be nonnegative")
    if target == 0.0:
        return 0.0
    if law.family == "gaussian":
        return math.sqrt(math.log1p(target))
    lo, hi = 0.0, 1.0
    while sigma2_of_beta(law, hi) < target:
        hi *= 2.0
        if hi > law.beta_max / 2.0:
            raise BetaRangeError("cannot bracket target variance")
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid == lo or mid == hi:
            break
        if sigma2_of_beta(law, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class DisorderSpec:
    """A disorder law pinned at a specific inverse temperature and window."""

    law: DisorderLaw
    beta: float
    lambda_beta: float
    sigma2: float
    window: tuple  # e.g. ("subcritical", beta_hat) or ("critical", theta)
    N: int = 0

    @classmethod
    def from_beta(cls, law, beta, window=("fixed",), N=0):
        return cls(law=law, beta=float(beta),
                   lambda_beta=lambda_(law, beta),
                   sigma2=sigma2_of_beta(law, beta),
                   window=tuple(window), N=int(N))


def beta_subcritical(kernel, law, N, beta_hat):
    """Spec on the intermediate disorder scale: sigma^2(beta_N) = beta_hat^2 / R_N.

    The o(1) freedom in beta_N = (beta_hat + o(1)) / sqrt(R_N) is resolved
    by making the variance identity exact, so sigma^2 R_N = beta_hat^2.
    """
    if beta_hat < 0:
        raise ValueError("beta_hat must be nonnegative")
    target = beta_hat ** 2 / kernel.replica_overlap(N)
    beta = beta_of_sigma2(law, target)
    return DisorderSpec(law=law, beta=beta, lambda_beta=lambda_(law, beta),
                        sigma2=sigma2_of_beta(law, beta),
                        window=("subcritical", float(beta_hat)), N=int(N))


def beta_critical(kernel, law, N, theta):
    """Spec in the critical window: sigma^2(beta_N) = (1 + theta/log N) / R_N."""
    if N < 3:
        raise ValueError("need N >= 3 so that log N > 1")
    scale = 1.0 + theta / math.log(N)
    if scale <= 0.0:
        raise WindowCollapseError(
            f"theta={theta} collapses the window at N={N}")
    target = scale / kernel.replica_overlap(N)
    beta = beta_of_sigma2(law, target)
    return DisorderSpec(law=law, beta=beta, lambda_beta=lambda_(law, beta),
                        sigma2=sigma2_of_beta(law, beta),
                        window=("critical", float(theta)), N=int(N))


def beta_quasicritical(kernel, law, N, kappa):
    """Quasi-critical window sigma^2 = (1 - theta_N/log N)/R_N, theta_N = (log N)^kappa."""
    if not 0.0 < kappa < 1.0:
        raise ValueError("kappa must lie in (0, 1)")
    logN = math.log(N)
    theta_n = logN ** kappa
    target = (1.0 - theta_n / logN) / kernel.replica_overlap(N)
    if target <= 0:
        raise WindowCollapseError("theta_N >= log N")
    beta = beta_of_sigma2(law, target)
    return DisorderSpec(law=law, beta=beta, lambda_beta=lambda_(law, beta),
                        sigma2=sigma2_of_beta(law, beta),
                        window=("quasicritical", float(kappa), float(theta_n)),
                        N=int(N))


# ----------------------------------------------------------------------
# counter-based field
# ----------------------------------------------------------------------

@njit(inline="always", cache=True)
def _mix64(z):
    z = (z ^ (z >> np.uint64(30))) * _MIX_B
    z = (z ^ (z >> np.uint64(27))) * _MIX_C
    return z ^ (z >> np.uint64(31))


@njit(inline="always", cache=True)
def _hash3(seed, n, z1, z2):
    h = _mix64(seed + GOLDEN + np.uint64(n))
    h = _mix64(h ^ (np.uint64(z1) + GOLDEN))
    h = _mix64(h ^ (np.uint64(z2) + GOLDEN))
    return h


@njit(inline="always", cache=True)
def _to_unit(h):
    # 53-bit mantissa, strictly inside (0, 1)
    return (np.float64(h >> np.uint64(11)) + 0.5) * 1.1102230246251565e-16


@njit(inline="always", cache=True)
def _omega_from_hash(h, family, atoms, cumprobs):
    if family == 1:  # rademacher
        return 1.0 if (h >> np.uint64(63)) else -1.0
    if family == 0:  # gaussian via Box-Muller on two derived lanes
        u1 = _to_unit(h)
        u2 = _to_unit(_mix64(h ^ _LANE2))
        return math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
    u = _to_unit(h)
    for i in range(cumprobs.size - 1):
        if u < cumprobs[i]:
            return atoms[i]
    return atoms[cumprobs.size - 1]


@njit(cache=True)
def _omega_block(seed, n, z1, z2, family, atoms, cumprobs):
    out = np.empty(z1.size)
    for i in range(z1.size):
        h = _hash3(seed, n, z1[i], z2[i])
        out[i] = _omega_from_hash(h, family, atoms, cumprobs)
    return out


@dataclass(frozen=True)
class DisorderField:
    """Counter-based i.i.d. field omega(n, z); same (seed, n, z) in, same value out."""

    seed: int
    law: DisorderLaw

    def omega(self, n, z1, z2):
        """Field values at time n and sites (z1, z2); broadcasts over arrays."""
        z1a, z2a = np.broadcast_arrays(np.asarray(z1, dtype=np.int64),
                                       np.asarray(z2, dtype=np.int64))
        atoms, cum = self.law.atom_arrays()
        flat = _omega_block(np.uint64(self.seed), np.int64(n),
                            z1a.ravel(), z2a.ravel(),
                            self.law.family_code, atoms, cum)
        out = flat.reshape(z1a.shape)
        return float(out) if out.ndim == 0 else out

    def omega_grid(self, n, z1_range, z2_range):
        """Dense grid over z1_range x z2_range (half-open integer ranges)."""
        z1 = np.arange(z1_range[0], z1_range[1], dtype=np.int64)
        z2 = np.arange(z2_range[0], z2_range[1], dtype=np.int64)
        zz1, zz2 = np.meshgrid(z1, z2, indexing="ij")
        return self.omega(n, zz1, zz2)


def derive_seed(master, *words):
    """Deterministic child seed from (master, words) via the same
    splitmix chain as the field hash; reproducible replica streams."""
    h = np.uint64(master & 0xFFFFFFFFFFFFFFFF)
    for w in words:
        h = _mix64(np.uint64((int(h) + int(GOLDEN) + (int(w) & 0xFFFFFFFFFFFFFFFF))
                             & 0xFFFFFFFFFFFFFFFF))
    return int(h)


def xi_samples(field, spec, n, z1, z2):
    """Centred chaos variables xi = exp(beta omega - lambda) - 1."""
    om = field.omega(n, z1, z2)
    return np.expm1(spec.beta * om - spec.lambda_beta)
