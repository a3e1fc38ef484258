"""Matern covariance with time/space rescaling and conditional moments.

The kernel is normalized so that K(x, x) = 1 before the space rescale,
and the half-integer regularities use their exponential closed forms.
A configuration (alpha, tau, s) describes the process s * Z(tau * x)
for a unit Matern process Z.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist
from scipy.special import gammaln, kv

from .errors import NearSingularParents, UnsupportedAlpha

# alpha above this makes the numeric Bessel evaluation unreliable
MAX_ALPHA = 20.0

# diagonal jitter applied to the parent correlation matrix when enabled
JITTER = 1e-10


def strict_floor(alpha: float) -> int:
    """Largest integer strictly below ``alpha`` (so strict_floor(2) == 1)."""
    return int(math.ceil(alpha)) - 1


@dataclass(frozen=True)
class MaternConfig:
    """Kernel regularity and rescaling parameters.

    Attributes
    ----------
    alpha : regularity of the mother process; paths are strict_floor(alpha)
        times differentiable
    tau : time rescale applied to inputs
    s : space rescale applied to outputs, so marginal variance is s**2
    """

    alpha: float
    tau: float = 1.0
    s: float = 1.0

    def __post_init__(self):
        if not (self.alpha > 0 and math.isfinite(self.alpha)):
            raise UnsupportedAlpha(f"alpha must be positive and finite, got {self.alpha}")
        if self.alpha > MAX_ALPHA:
            raise UnsupportedAlpha(f"alpha={self.alpha} exceeds stable range {MAX_ALPHA}")
        if not (self.tau > 0 and math.isfinite(self.tau)):
            raise ValueError(f"tau must be positive and finite, got {self.tau}")
        if not (self.s > 0 and math.isfinite(self.s)):
            raise ValueError(f"s must be positive and finite, got {self.s}")

    @property
    def interp_order(self) -> int:
        """Default polynomial order for parent sets, strict_floor(alpha)."""
        return strict_floor(self.alpha)


def _is_half_integer(alpha: float) -> bool:
    return abs(2 * alpha - round(2 * alpha)) < 1e-12 and round(2 * alpha) % 2 == 1


def matern_correlation(r: np.ndarray, alpha: float) -> np.ndarray:
    """Unit Matern correlation at (already rescaled) distances ``r``.

    Half integers use the closed form
    exp(-r) * p!/(2p)! * sum_i (p+i)!/(i!(p-i)!) * (2r)^(p-i) with
    p = alpha - 1/2; other regularities go through the modified Bessel
    function of the second kind.
    """
    r = np.asarray(r, dtype=float)
    if np.any(r < 0):
        raise ValueError("distances must be nonnegative")
    if _is_half_integer(alpha):
        p = int(round(alpha - 0.5))
        poly = np.zeros_like(r)
        lead = math.factorial(p) / math.factorial(2 * p)
        for i in range(p + 1):
            coef = math.factorial(p + i) / (math.factorial(i) * math.factorial(p - i))
            poly += coef * (2 * r) ** (p - i)
        return lead * poly * np.exp(-r)
    out = np.ones_like(r)
    pos = r > 0
    rp = r[pos]
    with np.errstate(over="ignore"):
        bessel = kv(alpha, rp)
    val = np.exp((1 - alpha) * math.log(2) - gammaln(alpha) + alpha * np.log(rp)) * bessel
    out[pos] = np.where(np.isfinite(val), val, 0.0)
    return out


def matern_cov(x1: np.ndarray, x2: np.ndarray, cfg: MaternConfig) -> float:
    """Covariance of the rescaled process between two points."""
    x1 = np.atleast_1d(np.asarray(x1, dtype=float))
    x2 = np.atleast_1d(np.asarray(x2, dtype=float))
    r = cfg.tau * float(np.linalg.norm(x1 - x2))
    return cfg.s**2 * float(matern_correlation(np.array(r), cfg.alpha))


def correlation_matrix(A: np.ndarray, B: np.ndarray, cfg: MaternConfig) -> np.ndarray:
    """Unit-variance correlation matrix between two point sets."""
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    return matern_correlation(cfg.tau * cdist(A, B), cfg.alpha)


def cov_matrix(A: np.ndarray, B: np.ndarray, cfg: MaternConfig) -> np.ndarray:
    """Covariance matrix of the rescaled process between two point sets."""
    return cfg.s**2 * correlation_matrix(A, B, cfg)


@dataclass(frozen=True)
class ConditionalMoments:
    """Kriging weights over the parents and the conditional variance."""

    weights: np.ndarray = field(repr=False)
    variance: float


def conditional_moments(
    x: np.ndarray,
    pa: np.ndarray,
    cfg: MaternConfig,
    jitter: bool = False,
    node_index: int | None = None,
) -> ConditionalMoments:
    """Conditional mean weights and variance of the process at ``x`` given ``pa``.

    The conditional mean is weights @ z_pa and the conditional variance is
    s**2 * (1 - rho_x @ weights) in correlation form; an empty parent set
    returns no weights and the marginal variance s**2.

    Parameters
    ----------
    jitter : add a diagonal 1e-10 to the parent correlation before the
        Cholesky factorization instead of failing; off by default so that
        numerically singular parent sets surface as errors.

    Raises
    ------
    NearSingularParents
        When the parent correlation Cholesky fails and jitter is disabled.
    """
    pa = np.asarray(pa, dtype=float)
    if pa.size == 0:
        return ConditionalMoments(weights=np.zeros(0), variance=cfg.s**2)
    pa = np.atleast_2d(pa)
    x = np.atleast_2d(np.asarray(x, dtype=float))
    R = correlation_matrix(pa, pa, cfg)
    rho_x = correlation_matrix(pa, x, cfg)[:, 0]
    try:
        chol = cho_factor(R, lower=True)
    except np.linalg.LinAlgError as exc:
        if not jitter:
            raise NearSingularParents(
                f"parent correlation Cholesky failed: {exc}", node_index=node_index
            ) from exc
        chol = cho_factor(R + JITTER * np.eye(R.shape[0]), lower=True)
    weights = cho_solve(chol, rho_x)
    variance = cfg.s**2 * (1.0 - float(rho_x @ weights))
    variance = min(max(variance, 0.0), cfg.s**2)
    return ConditionalMoments(weights=weights, variance=variance)
