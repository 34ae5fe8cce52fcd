"""Discrete Gaussian law on Z^g: normalization, moments, cumulants, exact
sampling, and the theta-derivative cumulant route.

P(X = n) is proportional to exp(-pi (n-e).tau(n-e)); the lattice window
shares the ellipsoidal tail policy of the theta sums.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .errors import ThetaNearZero
from .riemann import ThetaParams, theta_eval, truncation_lattice

_PMF_TOL = 1e-12


@dataclass(frozen=True)
class DiscreteGaussianParams:
    tau: np.ndarray
    e: np.ndarray

    def __post_init__(self):
        tau = np.atleast_2d(np.asarray(self.tau, dtype=float))
        e = np.atleast_1d(np.asarray(self.e, dtype=float))
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "e", e)
        if tau.shape != (len(e), len(e)):
            raise ValueError("tau must be g x g matching e")
        if not np.allclose(tau, tau.T):
            raise ValueError("tau must be symmetric")
        if np.linalg.eigvalsh(tau)[0] <= 0:
            raise ValueError("tau must be positive definite")

    @property
    def genus(self):
        return len(self.e)

    @cached_property
    def support(self):
        """Truncated lattice window, ordered by decreasing weight then lex."""
        pts = truncation_lattice(self.tau, self.e, _PMF_TOL)
        d = pts - self.e
        w = np.exp(-math.pi * np.einsum("ni,ij,nj->n", d, self.tau, d))
        order = np.lexsort(tuple(pts[:, k] for k in range(pts.shape[1] - 1, -1, -1)))
        pts, w = pts[order], w[order]
        order = np.argsort(-w, kind="stable")
        return pts[order].astype(int), w[order]

    @cached_property
    def normalization(self):
        return float(self.support[1].sum())


def pmf(params: DiscreteGaussianParams, n) -> float:
    """P(X = n), exact up to the lattice truncation tolerance."""
    n = np.atleast_1d(np.asarray(n, dtype=float))
    d = n - params.e
    return float(np.exp(-math.pi * d @ params.tau @ d) / params.normalization)


def normalization(params: DiscreteGaussianParams) -> float:
    return params.normalization


def mean(params: DiscreteGaussianParams) -> np.ndarray:
    pts, w = params.support
    return (w[:, None] * pts).sum(axis=0) / params.normalization


def raw_moment(params: DiscreteGaussianParams, alpha) -> float:
    """E[prod_k X_k^alpha_k] by direct lattice summation."""
    alpha = tuple(int(a) for a in alpha)
    pts, w = params.support
    vals = np.ones(len(pts))
    for k, a in enumerate(alpha):
        if a:
            vals = vals * pts[:, k] ** a
    return float((w * vals).sum() / params.normalization)


def set_partitions(items):
    """All partitions of a list into nonempty blocks."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for k in range(len(part)):
            yield part[:k] + [[first] + part[k]] + part[k + 1 :]
        yield [[first]] + part


def _moment_of_block(params, block, g):
    alpha = [0] * g
    for idx in block:
        alpha[idx] += 1
    return raw_moment(params, alpha)


def cumulant(params: DiscreteGaussianParams, alpha) -> float:
    """Joint cumulant for the multi-index alpha via set-partition inversion."""
    alpha = tuple(int(a) for a in alpha)
    g = params.genus
    items = [k for k, a in enumerate(alpha) for _ in range(a)]
    if not items:
        return 0.0
    total = 0.0
    for part in set_partitions(items):
        m = len(part)
        coef = (-1) ** (m - 1) * math.factorial(m - 1)
        prod = 1.0
        for block in part:
            prod *= _moment_of_block(params, block, g)
        total += coef * prod
    return total


def moments_cumulants(params: DiscreteGaussianParams, alpha):
    """(raw moment, cumulant) pair for one multi-index of total order <= 4."""
    if sum(alpha) > 4:
        raise ValueError("cumulant orders capped at 4")
    return raw_moment(params, alpha), cumulant(params, alpha)


def covariance(params: DiscreteGaussianParams) -> np.ndarray:
    g = params.genus
    out = np.empty((g, g))
    for i in range(g):
        for j in range(i, g):
            alpha = [0] * g
            alpha[i] += 1
            alpha[j] += 1
            out[i, j] = out[j, i] = cumulant(params, alpha)
    return out


def sample_dgauss(params: DiscreteGaussianParams, rng_seed, size=None):
    """Exact inverse-CDF sampling over the pmf-ordered truncated lattice."""
    pts, w = params.support
    cdf = np.cumsum(w) / w.sum()
    rng = np.random.default_rng(rng_seed)
    if size is None:
        k = int(np.searchsorted(cdf, rng.random(), side="right"))
        return pts[min(k, len(pts) - 1)].copy()
    ks = np.searchsorted(cdf, rng.random(size), side="right")
    return pts[np.minimum(ks, len(pts) - 1)].copy()


def _log_theta_derivative(params: ThetaParams, e, alpha):
    """d^alpha log theta at the real point e, via the partition identity."""
    g = params.genus
    e = np.asarray(e, dtype=float).astype(complex)
    t0 = theta_eval(params, e)
    if abs(t0) < 1e-8:
        raise ThetaNearZero(f"|theta(e)| = {abs(t0):.2e}")
    items = [k for k, a in enumerate(alpha) for _ in range(a)]
    cache = {}

    def block_ratio(block):
        key = tuple(sorted(block))
        if key not in cache:
            beta = [0] * g
            for idx in block:
                beta[idx] += 1
            cache[key] = theta_eval(params, e, alpha=tuple(beta)) / t0
        return cache[key]

    total = 0.0 + 0.0j
    for part in set_partitions(items):
        m = len(part)
        coef = (-1) ** (m - 1) * math.factorial(m - 1)
        prod = 1.0 + 0.0j
        for block in part:
            prod *= block_ratio(block)
        total += coef * prod
    return total


def cumulants_via_theta(B, e, alpha) -> float:
    """Cumulant of the discrete Gaussian from theta derivatives at shift e.

    (2 pi i)^K kappa equals the alpha-th z-derivative at 0 of
    log theta(Bz + e) + (1/2)(2 pi i) z.Bz, evaluated by chain rule through
    the log-theta derivatives; requires K = |alpha| in 2..4.
    """
    B = np.atleast_2d(np.asarray(B, dtype=complex))
    g = B.shape[0]
    alpha = tuple(int(a) for a in alpha)
    K = sum(alpha)
    if not 2 <= K <= 4:
        raise ValueError("theta-derivative cumulants implemented for K in 2..4")
    params = ThetaParams(B=B)
    slots = [k for k, a in enumerate(alpha) for _ in range(a)]
    total = 0.0 + 0.0j
    # chain rule: each z_i derivative contributes sum_k B[k, i] d/du_k
    for assign in itertools.product(range(g), repeat=K):
        beta = [0] * g
        coef = 1.0 + 0.0j
        for slot, k in zip(slots, assign):
            coef *= B[k, slot]
            beta[k] += 1
        total += coef * _log_theta_derivative(params, e, tuple(beta))
    if K == 2:
        i, j = slots
        total += 2j * math.pi * B[i, j]
    kappa = total / (2j * math.pi) ** K
    return float(kappa.real)
