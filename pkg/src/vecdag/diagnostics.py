"""Numeric checks of the probabilistic structure, at desk scale.

Each routine measures a quantity the construction is designed to control:
the small-scale convergence of kriging weights to polynomial weights, the
geometric decay of conditional variances over layers, the operator norm
of recursive layer-to-layer interpolation, Wasserstein-2 distances between
Gaussians, and the spectral transition bound behind the interpolation
operator's stability in one dimension.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import CapExceeded, NotPSD, SingularSystem, UnsupportedOrder, VecdagError
from .factor import VecchiaFactor
from .kernels import MaternConfig, correlation_matrix, strict_floor
from .polynomials import interp_weights

PSD_TOL = 1e-10
VARTHETA_CAP = 4096
MAX_TRANSITION_ORDER = 8


@dataclass(frozen=True)
class FlatLimitCurve:
    """L1 gap between kriging and polynomial weights as the set shrinks."""

    nus: np.ndarray
    errors: np.ndarray
    slope: float


@dataclass(frozen=True)
class DecayProfile:
    """Per-layer conditional variance statistics against the expected decay."""

    layers: np.ndarray
    var_min: np.ndarray
    var_median: np.ndarray
    var_max: np.ndarray
    reference: np.ndarray
    ratio_min: np.ndarray
    ratio_max: np.ndarray


def flat_limit_error(
    a: np.ndarray, x: np.ndarray, alpha: float, nus: list[float] | np.ndarray
) -> FlatLimitCurve:
    """Shrink the point set toward the origin and compare weight vectors.

    For each scale factor, kriging weights on the shrunken set are
    compared in l1 norm against the scale-free polynomial interpolation
    weights. The fitted log-log slope tracks how fast the kernel
    forgets its roughness.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    nus = np.asarray(nus, dtype=float)
    if np.any(np.diff(nus) >= 0):
        raise ValueError("scale factors must be strictly decreasing")
    poly = interp_weights(a, x)
    cfg = MaternConfig(alpha=alpha)
    errors = np.empty(nus.size)
    for k, nu in enumerate(nus):
        corr = correlation_matrix(nu * a, nu * a, cfg)
        rhs = correlation_matrix(nu * a, nu * x[None, :], cfg).ravel()
        try:
            krig = np.linalg.solve(corr, rhs)
        except np.linalg.LinAlgError as exc:
            raise SingularSystem(f"kernel matrix singular at scale {nu}") from exc
        errors[k] = float(np.abs(krig - poly).sum())
    if np.all(errors > 0):
        slope = float(np.polyfit(np.log(nus), np.log(errors), 1)[0])
    else:
        slope = float("nan")
    return FlatLimitCurve(nus=nus, errors=errors, slope=slope)


def variance_decay_profile(factor: VecchiaFactor) -> DecayProfile:
    """Group conditional variances by layer and compare to geometric decay.

    The reference value per layer j is s^2 tau^{2 alpha} gamma^{-2 alpha j};
    ratios against it should stay within constant bounds once the corner
    layers begin.
    """
    dag = factor.dag
    cfg = factor.config
    layers = np.array(sorted(set(dag.layer.tolist())), dtype=int)
    stats = {name: np.empty(layers.size) for name in ("min", "med", "max", "ref")}
    for k, j in enumerate(layers):
        dvals = factor.cond_var[dag.layer == j]
        stats["min"][k] = dvals.min()
        stats["med"][k] = float(np.median(dvals))
        stats["max"][k] = dvals.max()
        stats["ref"][k] = (
            cfg.s**2 * cfg.tau ** (2 * cfg.alpha) * dag.gamma ** (-2 * cfg.alpha * j)
        )
    return DecayProfile(
        layers=layers,
        var_min=stats["min"],
        var_median=stats["med"],
        var_max=stats["max"],
        reference=stats["ref"],
        ratio_min=stats["min"] / stats["ref"],
        ratio_max=stats["max"] / stats["ref"],
    )


def _layer_operators(dag) -> list[np.ndarray]:
    """Dense maps from values on layers <= j to values on layers <= j+1.

    Carried-over nodes keep their value (identity rows); each node of the
    next layer gets the polynomial interpolation weights of its parents,
    at the order its parent count supports.
    """
    layers = sorted(set(dag.layer.tolist()))
    starts = np.searchsorted(dag.layer, np.array(layers + [layers[-1] + 1]))
    ops = []
    for idx in range(len(layers) - 1):
        n_prev = starts[idx + 1]
        n_next = starts[idx + 2]
        p = np.zeros((n_next, n_prev))
        p[:n_prev, :n_prev] = np.eye(n_prev)
        for node in range(n_prev, n_next):
            pa = dag.parents[node]
            if len(pa) == 0 or np.any(pa >= n_prev):
                raise VecdagError(
                    "interpolation operator needs parents on strictly earlier layers"
                )
            p[node, pa] = interp_weights(dag.points[pa], dag.points[node])
        ops.append(p)
    return ops


def estimate_vartheta(dag) -> float:
    """Largest sup-norm amplification over all layer-to-layer windows.

    Composes the per-layer interpolation operators over every window of
    consecutive layers and returns the maximum absolute row sum seen,
    which realizes the sup-norm operator norm exactly. Always at least 1
    (identity rows).
    """
    if dag.n_nodes > VARTHETA_CAP:
        raise CapExceeded(f"dense layer operators capped at {VARTHETA_CAP} nodes")
    ops = _layer_operators(dag)
    best = 1.0
    for j1 in range(len(ops)):
        window = None
        for j2 in range(j1, len(ops)):
            window = ops[j2] if window is None else ops[j2] @ window
            best = max(best, float(np.abs(window).sum(axis=1).max()))
    return best


def _psd_sqrt(mat: np.ndarray, name: str) -> np.ndarray:
    vals, vecs = np.linalg.eigh((mat + mat.T) / 2.0)
    if vals.min() < -PSD_TOL * max(1.0, float(vals.max())):
        raise NotPSD(f"{name} has eigenvalue {vals.min():.3e}")
    vals = np.clip(vals, 0.0, None)
    return (vecs * np.sqrt(vals)) @ vecs.T


def gaussian_w2_sq(
    mean1: np.ndarray, cov1: np.ndarray, mean2: np.ndarray, cov2: np.ndarray
) -> float:
    """Squared Wasserstein-2 distance between two Gaussian distributions.

    Mean displacement plus the Bures term between covariances, computed
    with symmetric eigendecompositions; slightly negative eigenvalues
    from Monte Carlo covariance estimates are clamped to zero.
    """
    mean1 = np.atleast_1d(np.asarray(mean1, dtype=float))
    mean2 = np.atleast_1d(np.asarray(mean2, dtype=float))
    cov1 = np.atleast_2d(np.asarray(cov1, dtype=float))
    cov2 = np.atleast_2d(np.asarray(cov2, dtype=float))
    root2 = _psd_sqrt(cov2, "second covariance")
    inner = root2 @ cov1 @ root2
    vals = np.linalg.eigvalsh((inner + inner.T) / 2.0)
    if vals.min() < -PSD_TOL * max(1.0, float(vals.max())):
        raise NotPSD(f"cross term has eigenvalue {vals.min():.3e}")
    cross = np.sqrt(np.clip(vals, 0.0, None)).sum()
    value = (
        float(np.sum((mean1 - mean2) ** 2))
        + float(np.trace(cov1) + np.trace(cov2))
        - 2.0 * float(cross)
    )
    return max(value, 0.0)


def _interp_filter_coeffs(m: int) -> np.ndarray:
    """Weights of symmetric midpoint interpolation from m nearest integers.

    Coefficient j multiplies the pair at distance (2j-1)/2 from the
    midpoint; the two weights of a pair are equal by symmetry.
    """
    half = m // 2
    pts = np.arange(-half + 1, half + 1, dtype=float)[:, None]
    w = interp_weights(pts, np.array([0.5]))
    # pair j sits at points (1 -(2j-1))/2 shifted: indices half-j and half-1+j
    return np.array([w[half - 1 + j] for j in range(1, half + 1)])


def transition_measure_value(alpha: float, xi: np.ndarray) -> np.ndarray:
    """One-dimensional spectral transition bound at frequencies xi.

    Averages the interpolation filter response over the two half-scale
    preimages of each frequency, weighted by torus-norm ratios. Values
    uniformly below one certify the stability of recursive midpoint
    interpolation for the matching smoothness.
    """
    m = strict_floor(alpha) + 1
    if m % 2 != 0:
        raise UnsupportedOrder(f"midpoint filter needs an even parent count, got {m}")
    if m > MAX_TRANSITION_ORDER:
        raise UnsupportedOrder(f"parent count {m} beyond supported {MAX_TRANSITION_ORDER}")
    coeffs = _interp_filter_coeffs(m)
    xi = np.atleast_1d(np.asarray(xi, dtype=float))

    def psi(freq: np.ndarray) -> np.ndarray:
        total = np.ones_like(freq)
        for j, b in enumerate(coeffs, start=1):
            total = total + 2.0 * b * np.cos(2.0 * np.pi * (2 * j - 1) * freq)
        return total

    def torus_norm(freq: np.ndarray) -> np.ndarray:
        frac = np.mod(freq, 1.0)
        return np.minimum(frac, 1.0 - frac)

    norm_xi = torus_norm(xi)
    if np.any(norm_xi == 0):
        raise ValueError("transition bound is undefined at integer frequencies")
    out = np.zeros_like(xi)
    for shift in (0.0, 0.5):
        pre = xi / 2.0 + shift
        out += (torus_norm(pre) / norm_xi) * np.abs(psi(pre))
    return 0.5 * out


def transition_measure_sup(alpha: float, resolution: int) -> float:
    """Supremum of the transition bound over a uniform frequency grid."""
    if resolution < 2**10:
        raise ValueError("resolution below 2^10 undersamples the filter response")
    xi = np.arange(1, resolution) / resolution
    return float(transition_measure_value(alpha, xi).max())
