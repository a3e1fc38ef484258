"""Multivariate polynomial interpolation on small point sets.

Multi-index enumeration, Vandermonde matrices, interpolation weights,
norming constants over cubes, and corner-style parent selection. Point
sets are plain ``(n, d)`` float arrays; all systems here are tiny dense
matrices solved with pivoted factorizations.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import PoolTooSmall, SingularSystem

# sigma_min below this multiple of sigma_max counts as singular
SINGULAR_RTOL = 1e-10

# evaluation grid for norming-constant sups, per dimension
NORMING_GRID = 2**9 + 1


def basis_size(l: int, d: int) -> int:
    """Number of monomials of total degree at most ``l`` in ``d`` variables."""
    return math.comb(l + d, l)


def multi_index_sequence(d: int, count: int) -> np.ndarray:
    """First ``count`` exponent multi-indices in ``d`` variables.

    Ordered by ascending total degree, ties broken lexicographically on
    the exponent tuple, so the first entry is always all zeros.

    Returns
    -------
    (count, d) integer array, one multi-index per row.
    """
    if d < 1 or count < 1:
        raise ValueError("need d >= 1 and count >= 1")
    out: list[tuple[int, ...]] = []
    degree = 0
    while len(out) < count:
        out.extend(_compositions(degree, d))
        degree += 1
    return np.array(out[:count], dtype=int)


def _compositions(total: int, parts: int):
    """Nonnegative integer tuples of length ``parts`` summing to ``total``, ascending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first, *rest)


def monomial_matrix(points: np.ndarray, count: int) -> np.ndarray:
    """Evaluate the first ``count`` monomials at each point.

    Parameters
    ----------
    points : (k, d) array
    count : number of monomials

    Returns
    -------
    (count, k) array with entry (i, j) = points[j] ** k_(i).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    exps = multi_index_sequence(points.shape[1], count)
    return np.prod(points[None, :, :] ** exps[:, None, :], axis=2)


def monomial_vector(x: np.ndarray, count: int) -> np.ndarray:
    """Monomial evaluations at a single point, shape ``(count,)``."""
    return monomial_matrix(np.atleast_2d(x), count)[:, 0]


def vandermonde(points: np.ndarray) -> np.ndarray:
    """Square Vandermonde matrix of a point set.

    Rows run over the first ``len(points)`` monomials, columns over the
    points, so entry (i, j) is the i-th monomial evaluated at point j.
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    return monomial_matrix(points, points.shape[0])


def min_singular_value(mat: np.ndarray) -> float:
    """Smallest singular value of a (possibly rectangular) matrix."""
    return float(np.linalg.svd(mat, compute_uv=False)[-1])


def _factor_vandermonde(points: np.ndarray):
    """LU-factor the Vandermonde of ``points``, raising on near-singularity."""
    V = vandermonde(points)
    sv = np.linalg.svd(V, compute_uv=False)
    if sv[-1] < SINGULAR_RTOL * sv[0]:
        raise SingularSystem(
            f"Vandermonde is numerically singular (smin={sv[-1]:.3e}, smax={sv[0]:.3e})"
        )
    return lu_factor(V), float(sv[-1]), float(sv[0])


def interp_weights(points: np.ndarray, x: np.ndarray) -> np.ndarray:
    """Polynomial interpolation weights of ``x`` with respect to ``points``.

    The returned vector ``w`` satisfies P(x) = sum_i w[i] * y[i] for the
    unique polynomial P interpolating values ``y`` on ``points``. When x
    coincides with the j-th point, ``w`` is the j-th standard basis vector.

    Raises
    ------
    SingularSystem
        If the point set is not unisolvent at the working tolerance.
    """
    lu, _, _ = _factor_vandermonde(points)
    points = np.atleast_2d(np.asarray(points, dtype=float))
    vx = monomial_vector(np.asarray(x, dtype=float), points.shape[0])
    return lu_solve(lu, vx)


def _cube_grid(corner: np.ndarray, side: float, resolution: int) -> np.ndarray:
    """Uniform tensor evaluation grid over an axis-aligned cube, shape (N, d)."""
    corner = np.atleast_1d(np.asarray(corner, dtype=float))
    axes = [np.linspace(c, c + side, resolution) for c in corner]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def _max_weight_norm(lu, grid: np.ndarray, m: int, chunk: int = 1 << 16):
    """Max over grid points of the l1 norm of the interpolation weights."""
    best = -np.inf
    best_x = grid[0]
    for start in range(0, grid.shape[0], chunk):
        block = grid[start : start + chunk]
        W = lu_solve(lu, monomial_matrix(block, m))
        norms = np.abs(W).sum(axis=0)
        k = int(np.argmax(norms))
        if norms[k] > best:
            best = float(norms[k])
            best_x = block[k]
    return best, best_x


def norming_constant(
    points: np.ndarray,
    cube: tuple[np.ndarray, float],
    l: int,
    resolution: int = NORMING_GRID,
) -> float:
    """Norming constant of a point set over a cube for degree-``l`` polynomials.

    Approximates sup over the cube of the l1 norm of the interpolation
    weight vector by a uniform grid of ``resolution`` points per dimension
    followed by one local refinement pass around the coarse argmax. The
    result is a lower bound of the true sup at the stated resolution.

    Parameters
    ----------
    points : (m, d) array with m = C(l+d, l)
    cube : (corner, side) pair describing the evaluation cube
    l : polynomial order

    Returns
    -------
    The estimated norming constant; ``inf`` when the point set is not
    unisolvent (singular Vandermonde).
    """
    points = np.atleast_2d(np.asarray(points, dtype=float))
    m, d = points.shape
    if m != basis_size(l, d):
        raise ValueError(f"expected {basis_size(l, d)} points for order {l}, got {m}")
    corner, side = cube
    corner = np.atleast_1d(np.asarray(corner, dtype=float))
    try:
        lu, _, _ = _factor_vandermonde(points)
    except SingularSystem:
        return float("inf")

    coarse = _cube_grid(corner, side, resolution)
    best, best_x = _max_weight_norm(lu, coarse, m)

    # one refinement pass: re-grid the coarse cell around the argmax
    spacing = side / (resolution - 1)
    lo = np.maximum(best_x - spacing, corner)
    hi = np.minimum(best_x + spacing, corner + side)
    fine_axes = [np.linspace(a, b, resolution) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*fine_axes, indexing="ij")
    fine = np.stack([x.ravel() for x in mesh], axis=1)
    refined, _ = _max_weight_norm(lu, fine, m)
    return max(best, refined)


def norming_constant_lagrange(
    points: np.ndarray,
    cube: tuple[float, float],
    resolution: int = NORMING_GRID,
) -> float:
    """One-dimensional norming constant via the Lagrange basis product form.

    Cross-check for :func:`norming_constant` in d=1: evaluates
    sup_x sum_j |prod_{i != j} (x - w_i) / (w_j - w_i)| on the same kind of
    grid with the same refinement pass.
    """
    w = np.sort(np.asarray(points, dtype=float).ravel())
    corner, side = cube
    corner = float(np.atleast_1d(corner)[0])

    def lebesgue(xs: np.ndarray) -> np.ndarray:
        total = np.zeros_like(xs)
        for j in range(w.size):
            others = np.delete(w, j)
            num = np.prod(xs[:, None] - others[None, :], axis=1)
            den = np.prod(w[j] - others)
            total += np.abs(num / den)
        return total

    xs = np.linspace(corner, corner + side, resolution)
    vals = lebesgue(xs)
    k = int(np.argmax(vals))
    best = float(vals[k])
    spacing = side / (resolution - 1)
    lo = max(xs[k] - spacing, corner)
    hi = min(xs[k] + spacing, corner + side)
    fine = lebesgue(np.linspace(lo, hi, resolution))
    return max(best, float(fine.max()))


@dataclass(frozen=True)
class NormingReport:
    """Norming constant, minimal singular value, and the evaluation cube."""

    norming_constant: float
    min_singular_value: float
    cube_corner: tuple[float, ...]
    cube_side: float

    def to_dict(self) -> dict:
        c = self.norming_constant
        return {
            "norming_constant": "infinite" if math.isinf(c) else c,
            "min_singular_value": self.min_singular_value,
            "cube": {"corner": list(self.cube_corner), "side": self.cube_side},
        }


def norming_report(
    points: np.ndarray, cube: tuple[np.ndarray, float], l: int
) -> NormingReport:
    """Bundle the norming constant with the Vandermonde conditioning."""
    points = np.atleast_2d(np.asarray(points, dtype=float))
    sv = np.linalg.svd(vandermonde(points), compute_uv=False)
    corner, side = cube
    corner = np.atleast_1d(np.asarray(corner, dtype=float))
    return NormingReport(
        norming_constant=norming_constant(points, cube, l),
        min_singular_value=float(sv[-1]),
        cube_corner=tuple(float(c) for c in corner),
        cube_side=float(side),
    )


def scaled_min_singular(
    pa: np.ndarray,
    candidate: np.ndarray,
    center: np.ndarray,
    j: int,
    gamma: float,
    l: int,
) -> float:
    """Smallest singular value of the scaled monomial column matrix.

    Columns are the monomial vectors of the centered parents plus the
    centered candidate; row i is scaled by gamma ** (j * |k_(i)|) so that
    acceptance thresholds are comparable across layers.
    """
    center = np.atleast_1d(np.asarray(center, dtype=float))
    d = center.size
    m = basis_size(l, d)
    pa = np.asarray(pa, dtype=float).reshape(-1, d)
    cand = np.asarray(candidate, dtype=float).reshape(1, d)
    pts = np.vstack([pa, cand]) - center
    exps = multi_index_sequence(d, m)
    cols = np.prod(pts[None, :, :] ** exps[:, None, :], axis=2)
    scale = np.asarray(gamma, dtype=float) ** (j * exps.sum(axis=1))
    return min_singular_value(cols * scale[:, None])


def corner_set(target: np.ndarray, pools: list[np.ndarray], l: int) -> np.ndarray:
    """Corner parent set of a target point from per-coordinate value pools.

    Each pool is ranked by distance to the matching target coordinate,
    ties broken toward the smaller value. The returned points combine the
    per-coordinate ranks (i_1, ..., i_d) with sum of (i_h - 1) at most
    ``l``, giving exactly C(l+d, l) points in multi-index order.

    Raises
    ------
    PoolTooSmall
        If any pool has fewer than l+1 values.
    """
    target = np.atleast_1d(np.asarray(target, dtype=float))
    d = target.size
    need = l + 1
    ranked = []
    for h in range(d):
        pool = np.asarray(pools[h], dtype=float).ravel()
        if pool.size < need:
            raise PoolTooSmall(
                f"coordinate {h} pool has {pool.size} values, need {need}"
            )
        dist = np.abs(pool - target[h])
        # keep one extra candidate so a tie at the cut is resolved by value
        k = min(pool.size, need + 1)
        idx = np.argpartition(dist, k - 1)[:k] if k < pool.size else np.arange(pool.size)
        order = np.lexsort((pool[idx], dist[idx]))
        ranked.append(pool[idx[order]][:need])
    exps = multi_index_sequence(d, basis_size(l, d))
    return np.array([[ranked[h][e[h]] for h in range(d)] for e in exps])
