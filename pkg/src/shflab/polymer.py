"""Exact transfer-matrix partition functions for a fixed disorder field.

The recursion applies the environment weight when ARRIVING at time n:

    Z_{n}(y) = e^{beta omega(n, y) - lambda} * sum_x Z_{n-1}(x) q_1(y - x),

with weights collected at times strictly between the endpoints (so the
final step into the horizon is a plain kernel application).  Everything
runs on a bounded window with absorbing truncation; the probability mass
lost at the boundary is tracked exactly by a beta=0 sidecar recursion
that is cached per window geometry and shared across replicas.

The slice update is a separable 5-tap convolution fused with the
counter-based disorder hash in numba; each output element is computed by
exactly one thread, so results are bit-identical for any thread count.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numba import njit, prange

from .disorder import (FAMILY_GAUSSIAN, FAMILY_RADEMACHER, GOLDEN, _LANE2,
                       _hash3, _mix64, _to_unit, DisorderField, DisorderSpec)
from .walk import default_step_law

_PAD = 4


class TruncationError(RuntimeError):
    """Window leaked more probability mass than the configured cap."""


@dataclass(frozen=True)
class WindowRule:
    """Lattice window policy: support growth 2n per step, optionally
    clipped diffusively at radius ~ diffusive_a * sqrt(n), hard-capped at
    r_cap.  The default cap follows c sqrt(N log N) with c = 6."""

    r_cap: int
    diffusive_a: float = 0.0
    trunc_cap: float = 1e-8

    @staticmethod
    def default(N, c=6.0, trunc_cap=1e-8):
        r_cap = int(min(2 * N, math.ceil(c * math.sqrt(N * max(math.log(N), 1.0)))))
        return WindowRule(r_cap=r_cap, trunc_cap=trunc_cap)

    @staticmethod
    def diffusive(N, a=4.0, trunc_cap=1e-3):
        r_cap = int(min(2 * N, math.ceil(a * math.sqrt(N))) + 8)
        return WindowRule(r_cap=r_cap, diffusive_a=a, trunc_cap=trunc_cap)

    def radius(self, n, r0):
        r = r0 + 2 * n
        if self.diffusive_a > 0.0 and n > 0:
            r = min(r, r0 + int(self.diffusive_a * math.sqrt(n)) + 8)
        return min(r, self.r_cap)


@dataclass
class PartitionSlice:
    """One time slice of the recursion: values on the active window."""

    n: int
    center: tuple
    radius: int
    values: np.ndarray
    log_scale: float
    truncation_mass: float


@njit(inline="always", cache=True)
def _weight_at(seed, n, z1, z2, family, beta, lamb, cumprobs, wtable):
    h = _hash3(seed, n, z1, z2)
    if family == FAMILY_RADEMACHER:
        return wtable[np.int64(h >> np.uint64(63))]
    if family == FAMILY_GAUSSIAN:
        u1 = _to_unit(h)
        u2 = _to_unit(_mix64(h ^ _LANE2))
        om = math.sqrt(-2.0 * math.log(u1)) * math.cos(2.0 * math.pi * u2)
        return math.exp(beta * om - lamb)
    u = _to_unit(h)
    for i in range(cumprobs.size - 1):
        if u < cumprobs[i]:
            return wtable[i]
    return wtable[cumprobs.size - 1]


@njit(parallel=True, cache=True)
def _slice_step(cur, tmp, nxt, probs, klo, ni0, ni1,
                nj0, nj1, seed, n, base1, base2, family, beta, lamb,
                cumprobs, wtable, weighted):
    """One transfer-matrix step from bounds (o*) into bounds (n*).

    Pass 1 convolves along axis 0 into tmp (cols padded by the kernel
    half-width), pass 2 convolves along axis 1 and multiplies in the
    arrival weight.  Cells outside the old bounds are zero by invariant.
    """
    ktaps = probs.size
    khi = klo + ktaps - 1
    j_lo = nj0 - khi if nj0 - khi >= 0 else 0
    j_hi = nj1 - klo if nj1 - klo < cur.shape[1] else cur.shape[1] - 1
    for i in prange(ni0, ni1 + 1):
        for j in range(j_lo, j_hi + 1):
            acc = 0.0
            for k in range(ktaps):
                acc += probs[k] * cur[i - klo - k, j]
            tmp[i, j] = acc
    for i in prange(ni0, ni1 + 1):
        for j in range(nj0, nj1 + 1):
            acc = 0.0
            for k in range(ktaps):
                acc += probs[k] * tmp[i, j - klo - k]
            if weighted:
                acc *= _weight_at(seed, n, base1 + i, base2 + j,
                                  family, beta, lamb, cumprobs, wtable)
            nxt[i, j] = acc


def _law_tables(spec):
    law = spec.law
    atoms, cum = law.atom_arrays()
    if law.family == "rademacher":
        wtable = np.array([math.exp(-spec.beta - spec.lambda_beta),
                           math.exp(spec.beta - spec.lambda_beta)])
        cum = np.array([0.5, 1.0])
    elif law.family == "finite":
        wtable = np.exp(spec.beta * atoms - spec.lambda_beta)
    else:
        wtable = np.zeros(1)
        cum = np.zeros(1)
    return law.family_code, cum, wtable


class TransferMatrix:
    """Drives the slice recursion for one disorder realization.

    seed_values: dict mapping lattice points (relative to `center`) to
    initial mass at time `start`, or "flat" for the constant-1 start.
    """

    def __init__(self, spec, seed, N, center=(0, 0), start=0,
                 seed_values=None, window=None, step=None):
        self.spec = spec
        self.seed = np.uint64(seed)
        self.N = int(N)
        self.start = int(start)
        self.center = (int(center[0]), int(center[1]))
        self.window = window or WindowRule.default(N)
        law = step or default_step_law()
        self.probs = law.pmf_array()
        self.klo = law.lo
        self.family, self.cum, self.wtable = _law_tables(spec)
        self.flat = seed_values == "flat"
        if self.flat:
            r0 = self.window.r_cap
        elif seed_values is None:
            seed_values = {(0, 0): 1.0}
            r0 = 0
        if not self.flat:
            r0 = max((max(abs(p[0]), abs(p[1])) for p in seed_values), default=0)
        self.r0 = int(r0)
        size = 2 * self.window.r_cap + 2 * _PAD + 1
        mid = size // 2
        self.mid = mid
        self.cur = np.zeros((size, size))
        if self.flat:
            r = self.window.r_cap
            self.cur[mid - r:mid + r + 1, mid - r:mid + r + 1] = 1.0
        else:
            for (a, b), val in seed_values.items():
                self.cur[mid + a, mid + b] = val
        self.tmp = np.zeros_like(self.cur)
        self.nxt = np.zeros_like(self.cur)
        self.log_scale = 0.0
        self.n = self.start
        self.radius = self.window.radius(0, self.r0)

    def step_to(self, n_stop, weight_final_time=None):
        """Advance to time n_stop, weighting arrivals at times where
        start < n <= weight_final_time (default: n_stop - 1)."""
        wf = n_stop - 1 if weight_final_time is None else weight_final_time
        mid = self.mid
        while self.n < n_stop:
            n_new = self.n + 1
            r_old = self.radius
            r_new = self.window.radius(n_new - self.start, self.r0)
            weighted = self.start < n_new <= wf
            _slice_step(self.cur, self.tmp, self.nxt, self.probs, self.klo,
                        mid - r_new, mid + r_new, mid - r_new, mid + r_new,
                        self.seed, np.int64(n_new),
                        np.int64(self.center[0] - mid),
                        np.int64(self.center[1] - mid),
                        self.family, self.spec.beta, self.spec.lambda_beta,
                        self.cum, self.wtable, weighted)
            self.cur, self.nxt = self.nxt, self.cur
            self.n = n_new
            self.radius = r_new
            if (n_new & 31) == 0:
                m = self.active_view().max()
                if m > 1e280 or (0.0 < m < 1e-280):
                    scale = m
                    self.cur[mid - r_new:mid + r_new + 1,
                             mid - r_new:mid + r_new + 1] /= scale
                    self.log_scale += math.log(scale)
        return self

    def active_view(self):
        r, mid = self.radius, self.mid
        return self.cur[mid - r:mid + r + 1, mid - r:mid + r + 1]

    def plane_sum(self):
        """Sum over the current slice, including the running log scale."""
        return float(np.sum(self.active_view())) * math.exp(self.log_scale)

    def value_at(self, x, y):
        """Slice value at the absolute lattice point (x, y)."""
        i = self.mid + (int(x) - self.center[0])
        j = self.mid + (int(y) - self.center[1])
        r, mid = self.radius, self.mid
        if not (mid - r <= i <= mid + r and mid - r <= j <= mid + r):
            return 0.0
        return float(self.cur[i, j]) * math.exp(self.log_scale)


@lru_cache(maxsize=64)
def _beta0_mass(N, r_cap, diffusive_a):
    """Retained probability mass of the beta=0 point-start recursion;
    depends only on the window geometry, so it is shared across replicas."""
    rule = WindowRule(r_cap=r_cap, diffusive_a=diffusive_a, trunc_cap=1.0)
    spec0 = DisorderSpec.from_beta(_beta0_law(), 0.0)
    tm = TransferMatrix(spec0, 0, N, window=rule)
    tm.step_to(N, weight_final_time=0)  # never weighted: pure kernel mass
    return tm.plane_sum()


@lru_cache(maxsize=1)
def _beta0_law():
    from .disorder import rademacher_law
    return rademacher_law()


def _check_truncation(window, N, margin=0):
    """Verify the window keeps truncation below its cap (conservatively
    shrunk by `margin` for extended initial supports)."""
    mass = _beta0_mass(N, max(window.r_cap - margin, 1), window.diffusive_a)
    lost = 1.0 - mass
    if lost > window.trunc_cap:
        raise TruncationError(
            f"window leaks {lost:.3e} > cap {window.trunc_cap:.1e}")
    return lost


def point_to_plane(spec, seed, N, z0=(0, 0), window=None, check_cap=True):
    """Point-to-plane partition function Z_N(z0) for one realization.

    Disorder is collected at times 1..N-1; the final step is a plain
    kernel application.  `seed` may be a DisorderField or an integer.
    """
    seed = seed.seed if isinstance(seed, DisorderField) else seed
    window = window or WindowRule.default(N)
    if check_cap:
        _check_truncation(window, N)
    tm = TransferMatrix(spec, seed, N, center=z0, window=window)
    tm.step_to(N, weight_final_time=N - 1)
    return tm.plane_sum()


def point_to_point(spec, seed, M, N, x, y, window=None):
    """Pinned-endpoint partition function Z_{M,N}(x, y); weights at
    times M+1..N-1, so Z_{M,M} is the identity and Z_{M,M+1} = q_1."""
    seed = seed.seed if isinstance(seed, DisorderField) else seed
    if M > N:
        raise ValueError("need M <= N")
    if M == N:
        return 1.0 if tuple(x) == tuple(y) else 0.0
    window = window or WindowRule.default(N - M)
    tm = TransferMatrix(spec, seed, N, center=x, start=M, window=window)
    tm.step_to(N, weight_final_time=N - 1)
    return tm.value_at(y[0], y[1])


def averaged_field(spec, seed, N, phi, psi=None, window=None,
                   phi_radius=1.0, check_cap=True):
    """(1/N) sum_{x,y} phi(x/sqrt N) Z_{0,N}(x, y) psi(y/sqrt N) in one
    transfer-matrix pass seeded with the phi-weighted initial mass."""
    seed = seed.seed if isinstance(seed, DisorderField) else seed
    rphi = int(math.ceil(phi_radius * math.sqrt(N)))
    if window is None:
        window = WindowRule.diffusive(N)
        window = WindowRule(r_cap=window.r_cap + rphi,
                            diffusive_a=window.diffusive_a,
                            trunc_cap=window.trunc_cap)
    sqn = math.sqrt(N)
    offs = np.arange(-rphi, rphi + 1)
    xx, yy = np.meshgrid(offs, offs, indexing="ij")
    vals = phi(xx / sqn, yy / sqn)
    seed_values = {(int(a), int(b)): float(v)
                   for a, b, v in zip(xx.ravel(), yy.ravel(), vals.ravel())
                   if v != 0.0}
    if check_cap:
        _check_truncation(window, N, margin=rphi)
    tm = TransferMatrix(spec, seed, N, window=window, seed_values=seed_values)
    tm.step_to(N, weight_final_time=N - 1)
    view = tm.active_view()
    if psi is None:
        total = float(view.sum()) * math.exp(tm.log_scale)
    else:
        r = tm.radius
        zs = np.arange(-r, r + 1) / sqn
        px, py = np.meshgrid(zs, zs, indexing="ij")
        total = float((view * psi(px, py)).sum()) * math.exp(tm.log_scale)
    return total / N


def field_snapshot(spec, seed, N, snapshot_radius, margin_a=4.0):
    """Plane-to-point field Z_{0,N}(1, y) on a centered square window.

    Flat initial condition outside the snapshot too (the computational
    window adds a diffusive margin so edge truncation cannot reach the
    reported grid)."""
    seed = seed.seed if isinstance(seed, DisorderField) else seed
    margin = int(math.ceil(margin_a * math.sqrt(N))) + 8
    r_cap = int(snapshot_radius) + margin
    window = WindowRule(r_cap=min(r_cap, snapshot_radius + 2 * N), trunc_cap=1.0)
    tm = TransferMatrix(spec, seed, N, window=window, seed_values="flat")
    tm.step_to(N, weight_final_time=N - 1)
    mid, r = tm.mid, int(snapshot_radius)
    grid = tm.cur[mid - r:mid + r + 1, mid - r:mid + r + 1] * math.exp(tm.log_scale)
    return grid.copy()


def point_to_plane_replicas(spec, N, replicas, seed=0, window=None,
                            log_values=False):
    """Independent-replica values of Z_N(0) (or log Z) as an array.

    Per-replica field seeds are derived by hashing (master seed, index),
    so any subset of replicas is reproducible in isolation.
    """
    from .disorder import derive_seed
    window = window or WindowRule.default(N)
    _check_truncation(window, N)
    out = np.empty(replicas)
    for i in range(replicas):
        tm = TransferMatrix(spec, derive_seed(seed, 101, i), N, window=window)
        tm.step_to(N, weight_final_time=N - 1)
        v = float(np.sum(tm.active_view()))
        out[i] = (math.log(v) + tm.log_scale) if log_values else v * math.exp(tm.log_scale)
    return out


def write_pgm(path, grid, quantile=0.995):
    """16-bit binary PGM (P5, maxval 65535, big-endian) with affine
    clipping at the given upper quantile."""
    g = np.asarray(grid, dtype=float)
    hi = float(np.quantile(g, quantile))
    lo = float(g.min())
    if hi <= lo:
        hi = lo + 1.0
    scaled = np.clip((g - lo) / (hi - lo), 0.0, 1.0)
    img = (scaled * 65535.0 + 0.5).astype(">u2")
    with open(path, "wb") as fh:
        fh.write(f"P5\n{g.shape[1]} {g.shape[0]}\n65535\n".encode())
        fh.write(img.tobytes())
    return path
