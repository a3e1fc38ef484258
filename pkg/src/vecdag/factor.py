"""Sparse triangular factor of the DAG-induced Gaussian prior.

Conditioning each node on its parents factorizes the joint density into
univariate normals, which encodes the precision matrix as Phi = B' D^-1 B
with B unit lower triangular in DAG order (identity minus parent weights)
and D the diagonal of conditional variances. Everything here works off the
per-node weights, so density evaluation and matrix-vector products cost
O(n m) and never assemble a global matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING

import numpy as np
from scipy.linalg import solve_triangular

from .errors import CapExceeded
from .kernels import MaternConfig, conditional_moments
from .polynomials import basis_size, corner_set

if TYPE_CHECKING:
    from .dag import LayeredDag

DENSE_CAP = 2048
COINCIDENCE_TOL = 1e-12


@dataclass
class VecchiaFactor:
    """Per-node conditional weights and variances for a layered DAG."""

    dag: "LayeredDag"
    config: MaternConfig
    weights: list[np.ndarray]
    cond_var: np.ndarray
    _pa_idx: np.ndarray = field(init=False, repr=False)
    _pa_w: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.cond_var = np.asarray(self.cond_var, dtype=float)
        n = self.dag.n_nodes
        width = max((len(w) for w in self.weights), default=0)
        # zero-weight padding pointing at node 0 keeps every op a fixed-shape
        # gather/scatter
        self._pa_idx = np.zeros((n, width), dtype=int)
        self._pa_w = np.zeros((n, width), dtype=float)
        for i, (pa, w) in enumerate(zip(self.dag.parents, self.weights)):
            self._pa_idx[i, : len(pa)] = pa
            self._pa_w[i, : len(pa)] = w

    @property
    def n_nodes(self) -> int:
        return self.dag.n_nodes

    def residuals(self, z: np.ndarray) -> np.ndarray:
        """B z: each value minus its parent-weighted prediction."""
        z = np.asarray(z, dtype=float)
        if self._pa_idx.shape[1] == 0:
            return z.copy()
        return z - (self._pa_w * z[self._pa_idx]).sum(axis=1)

    def _scatter_transpose(self, u: np.ndarray) -> np.ndarray:
        """B' u: subtract each node's contribution from its parents' rows."""
        out = u.copy()
        if self._pa_idx.shape[1]:
            np.subtract.at(out, self._pa_idx.ravel(), (self._pa_w * u[:, None]).ravel())
        return out

    def log_prior_density(self, z: np.ndarray) -> float:
        """Joint Gaussian log-density of a latent vector under the factor."""
        r = self.residuals(z)
        return float(
            -0.5 * np.sum(np.log(2.0 * np.pi * self.cond_var) + r * r / self.cond_var)
        )

    def rkhs_norm_sq(self, f: np.ndarray) -> float:
        """f' Phi f through the residual sum, no matrix assembly."""
        r = self.residuals(f)
        return float(np.sum(r * r / self.cond_var))

    def apply_precision(self, v: np.ndarray) -> np.ndarray:
        """Phi v = B'(D^-1 (B v))."""
        return self._scatter_transpose(self.residuals(v) / self.cond_var)

    def apply_sqrt_precision(self, w: np.ndarray) -> np.ndarray:
        """L w with L = B' D^{-1/2}, so L L' = Phi."""
        return self._scatter_transpose(np.asarray(w, dtype=float) / np.sqrt(self.cond_var))

    def precision_diagonal(self) -> np.ndarray:
        """diag(Phi), for Jacobi preconditioning."""
        diag = 1.0 / self.cond_var
        if self._pa_idx.shape[1]:
            np.add.at(
                diag,
                self._pa_idx.ravel(),
                (self._pa_w**2 / self.cond_var[:, None]).ravel(),
            )
        return diag

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        """One draw of the latent field, sequentially in DAG order."""
        n = self.n_nodes
        z = np.empty(n)
        noise = rng.standard_normal(n) * np.sqrt(self.cond_var)
        for i in range(n):
            pa = self.dag.parents[i]
            z[i] = noise[i]
            if len(pa):
                z[i] += self.weights[i] @ z[pa]
        return z

    def _dense_b(self) -> np.ndarray:
        n = self.n_nodes
        b = np.eye(n)
        for i, pa in enumerate(self.dag.parents):
            if len(pa):
                b[i, pa] = -self.weights[i]
        return b

    def precision_dense(self) -> np.ndarray:
        """Assembled Phi, for desk-scale checks only."""
        if self.n_nodes > DENSE_CAP:
            raise CapExceeded(f"dense assembly capped at {DENSE_CAP} nodes")
        b = self._dense_b()
        return b.T @ (b / self.cond_var[:, None])

    def dense_vecchia_cov(self, cap: int = DENSE_CAP) -> np.ndarray:
        """Implied covariance B^-1 D B^-T, for desk-scale oracles."""
        if self.n_nodes > cap:
            raise CapExceeded(f"dense covariance capped at {cap} nodes")
        b_inv = solve_triangular(
            self._dense_b(), np.eye(self.n_nodes), lower=True, unit_diagonal=True
        )
        return (b_inv * self.cond_var) @ b_inv.T


def build_factor(
    dag: "LayeredDag", cfg: MaternConfig, jitter: bool = False
) -> VecchiaFactor:
    """Compute every node's conditional weights and variance.

    Work is O(n m^3): one small symmetric solve per node. ``jitter``
    regularizes nearly singular parent correlation matrices instead of
    raising.
    """
    weights: list[np.ndarray] = []
    cond_var = np.empty(dag.n_nodes)
    for i in range(dag.n_nodes):
        pa = dag.parents[i]
        mom = conditional_moments(
            dag.points[i], dag.points[pa], cfg, jitter=jitter, node_index=i
        )
        weights.append(mom.weights)
        cond_var[i] = mom.variance
    return VecchiaFactor(dag=dag, config=cfg, weights=weights, cond_var=cond_var)


def predict(
    factor: VecchiaFactor,
    test_points: np.ndarray,
    z: np.ndarray,
    pool_order: int | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Conditional mean and variance at new points given latent node values.

    Each test point conditions on a small parent set drawn from the
    non-augmented training nodes: a corner set over the per-coordinate
    training pools when the DAG was built on a grid, otherwise the
    nearest basis-size many nodes. Test points are treated as
    conditionally independent given the training set. A test point that
    coincides with a training node reproduces its value with variance 0.
    """
    test_points = np.atleast_2d(np.asarray(test_points, dtype=float))
    z = np.asarray(z, dtype=float)
    dag = factor.dag
    d = dag.dimension
    if pool_order is None:
        pool_order = dag.order_l
    m = basis_size(pool_order, d)

    train_idx = np.flatnonzero(dag.observed)
    train = dag.points[train_idx]
    on_grid = dag.construction in ("grid", "grid-augmented")
    if on_grid:
        pools = [np.unique(train[:, h]) for h in range(d)]
        position = {tuple(np.round(p, 12)): int(i) for p, i in zip(train, train_idx)}

    means = np.empty(test_points.shape[0])
    variances = np.empty(test_points.shape[0])
    for t, x in enumerate(test_points):
        dists = np.linalg.norm(train - x, axis=1)
        hit = int(np.argmin(dists))
        if dists[hit] <= COINCIDENCE_TOL:
            means[t] = z[train_idx[hit]]
            variances[t] = 0.0
            continue
        pa_nodes = None
        if on_grid:
            pa_pts = corner_set(x, pools, pool_order)
            keys = [tuple(np.round(p, 12)) for p in pa_pts]
            if all(k in position for k in keys):
                pa_nodes = np.array([position[k] for k in keys], dtype=int)
        if pa_nodes is None:
            nearest = np.argsort(dists, kind="stable")[: min(m, train.shape[0])]
            pa_nodes = train_idx[nearest]
        mom = conditional_moments(x, dag.points[pa_nodes], factor.config)
        means[t] = mom.weights @ z[pa_nodes]
        variances[t] = mom.variance
    return means, variances
