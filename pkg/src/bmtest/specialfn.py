"""Constants appearing in the limiting variances of the test statistics.

The moment ``m_kp(k, p) = E(|Z|^p |Z + sqrt(k-1) Z'|^p)`` is computed by
quadrature of the defining expectation.  In polar coordinates the radial part
integrates in closed form and the angular integrand is smooth except at two
known kink angles, so a graded Gauss-Legendre rule on each smooth piece
reaches machine precision.  A tensor Gauss-Hermite rule is kept as an alternative (it stalls near
1e-3 because of the kinks).  The hypergeometric closed form is provided only
as a cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from .errors import ConfigError, NumericalError

GH_ORDER = 200
GL_ORDER = 200
_STD_NORMAL = NormalDist()


def gamma_fn(x: float) -> float:
    if not x > 0:
        raise ConfigError(f"gamma_fn is defined here for x > 0, got {x}")
    return math.gamma(x)


def gauss_2f1(a: float, b: float, c: float, x: float, *, tol: float = 1e-15, max_terms: int = 100_000) -> float:
    """Gauss hypergeometric function 2F1(a, b; c; x) for -1 <= x <= 0.

    Uses the Pfaff transformation
    ``2F1(a, b; c; x) = (1 - x)**(-a) * 2F1(a, c - b; c; x / (x - 1))`` so the
    series is summed at an argument in ``[0, 1/2]``.
    """
    if c <= 0 and float(c).is_integer():
        raise ConfigError(f"c must not be a nonpositive integer, got {c}")
    if not -1.0 <= x <= 0.0:
        raise ConfigError(f"gauss_2f1 supports -1 <= x <= 0, got {x}")
    if x == 0.0:
        return 1.0
    z = x / (x - 1.0)
    b2 = c - b
    term = 1.0
    total = 1.0
    for n in range(max_terms):
        term *= (a + n) * (b2 + n) / ((c + n) * (n + 1)) * z
        total += term
        if term == 0.0 or abs(term) <= tol * abs(total):
            return (1.0 - x) ** (-a) * total
    raise NumericalError(f"2F1({a}, {b}; {c}; {x}) did not converge in {max_terms} terms")


def m_p(p: float) -> float:
    """``E|Z|^p`` for a standard normal ``Z``."""
    if not p > 0:
        raise ConfigError(f"p must be positive, got {p}")
    return 2.0 ** (p / 2.0) / math.sqrt(math.pi) * math.gamma((p + 1.0) / 2.0)


@lru_cache(maxsize=None)
def _hermite_rule(order):
    with np.errstate(all="ignore"):
        x, w = np.polynomial.hermite.hermgauss(order)
    return x * math.sqrt(2.0), w / math.sqrt(math.pi)


@lru_cache(maxsize=1024)
def _m_kp(k: int, p: float, order: int) -> float:
    z, w = _hermite_rule(order)
    c = math.sqrt(k - 1.0)
    inner = np.abs(z[:, None] + c * z[None, :]) ** p
    return float(np.sum(w[:, None] * w[None, :] * (np.abs(z)[:, None] ** p) * inner))


@lru_cache(maxsize=1024)
def _m_kp_polar(k: int, p: float, order: int) -> float:
    # The angular integrand is pi-periodic with kinks at +-pi/2 and where
    # cos + c sin = 0.  On each smooth piece the graded map
    # s -> s^3 / (s^3 + (1-s)^3) flattens the |.|^p endpoint behaviour, so
    # Gauss-Legendre converges to machine precision even for small p.
    c = math.sqrt(k - 1.0)
    kink = -math.atan(1.0 / c)
    x, w = np.polynomial.legendre.leggauss(order)
    s = 0.5 * (x + 1.0)
    den = s**3 + (1.0 - s) ** 3
    g = s**3 / den
    dg = 3.0 * s**2 * (1.0 - s) ** 2 / den**2
    total = 0.0
    for lo, hi in ((-math.pi / 2, kink), (kink, math.pi / 2)):
        phi = lo + (hi - lo) * g
        f = np.abs(np.cos(phi)) ** p * np.abs(np.cos(phi) + c * np.sin(phi)) ** p
        total += 0.5 * (hi - lo) * float(np.dot(w, f * dg))
    radial = 2.0 ** p * math.gamma(p + 1.0)
    return 2.0 * total * radial / (2.0 * math.pi)


def m_kp(k: int, p: float, method: str = "polar") -> float:
    """``E(|Z|^p |Z + sqrt(k-1) Z'|^p)`` for independent standard normals.

    ``method="hermite"`` selects the 200x200 Gauss-Hermite tensor rule.
    """
    if int(k) != k or k < 2:
        raise ConfigError(f"k must be an integer >= 2, got {k}")
    if not p > 0:
        raise ConfigError(f"p must be positive, got {p}")
    if method == "polar":
        return _m_kp_polar(int(k), float(p), GL_ORDER)
    if method == "hermite":
        return _m_kp(int(k), float(p), GH_ORDER)
    raise ConfigError(f"unknown quadrature method {method!r}")


def m_kp_closed_form(k: int, p: float) -> float:
    """Hypergeometric expression for ``m_kp``; used only to cross-check."""
    return (
        2.0 ** p / math.pi * (k - 1.0) ** (p / 2.0) * math.gamma((p + 1.0) / 2.0) ** 2
        * gauss_2f1(-p / 2.0, (p + 1.0) / 2.0, 0.5, -1.0 / (k - 1.0))
    )


def n_factor(p: float, k: int) -> float:
    """Variance factor of the ratio of power variations at strides 1 and k."""
    m2p = m_p(2 * p)
    return (
        k ** (2 - p) * (1 + k) * m2p
        + k ** (2 - p) * (k - 1) * m_p(p) ** 2
        - 2 * k ** (3 - 1.5 * p) * m_kp(k, p)
    ) / m2p


def normal_quantile(a: float) -> float:
    """Upper ``a``-quantile: the ``z`` with ``P(Z > z) = a``."""
    if not 0 < a < 1:
        raise ConfigError(f"level must lie in (0, 1), got {a}")
    return -_STD_NORMAL.inv_cdf(a)


def mc_moment_oracle(k: int, p: float, n_draws: int, seed: int, *, method: str = "pseudo",
                     chunk: int = 1_000_000):
    """Monte Carlo estimate and standard error of ``m_kp(k, p)``.

    ``method="sobol"`` uses 16 independently scrambled Sobol' point sets
    (randomized QMC) of about ``n_draws / 16`` points each; the standard error
    then comes from the spread of the 16 replicate means.
    """
    if n_draws < 10_000:
        raise ConfigError("n_draws must be at least 10_000")
    c = math.sqrt(k - 1.0)
    if method == "sobol":
        return _rqmc_moment(c, p, n_draws, seed)
    if method != "pseudo":
        raise ConfigError(f"unknown oracle method {method!r}")
    rng = np.random.default_rng(seed)
    s1 = s2 = 0.0
    left = n_draws
    while left:
        m = min(chunk, left)
        z = rng.standard_normal((2, m))
        v = np.abs(z[0]) ** p * np.abs(z[0] + c * z[1]) ** p
        s1 += float(v.sum())
        s2 += float(np.dot(v, v))
        left -= m
    mean = s1 / n_draws
    var = (s2 - n_draws * mean**2) / (n_draws - 1)
    return mean, math.sqrt(var / n_draws)


def _rqmc_moment(c, p, n_draws, seed, replicates=16):
    from scipy.stats import qmc
    from scipy.special import ndtri

    m = max(1, int(round(math.log2(n_draws / replicates))))
    means = []
    for child in np.random.SeedSequence(seed).spawn(replicates):
        u = qmc.Sobol(2, scramble=True, seed=np.random.default_rng(child)).random_base2(m)
        z = ndtri(u)
        means.append(np.mean(np.abs(z[:, 0]) ** p * np.abs(z[:, 0] + c * z[:, 1]) ** p))
    means = np.asarray(means)
    return float(means.mean()), float(means.std(ddof=1) / math.sqrt(replicates))


@dataclass(frozen=True)
class MomentConstants:
    p: float
    k: int
    m_p: float
    m_2p: float
    m_kp: float
    n_pk: float


@lru_cache(maxsize=256)
def moment_constants(p: float, k: int) -> MomentConstants:
    return MomentConstants(p, k, m_p(p), m_p(2 * p), m_kp(k, p), n_factor(p, k))
