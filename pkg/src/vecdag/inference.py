"""Posterior inference for noisy observations of a Vecchia GP.

The model observes Y = f + noise at the non-augmented DAG nodes, with an
inverse-gamma prior on the noise variance. The Gibbs sweep alternates an
exact inverse-gamma draw for the noise variance with an exact latent draw
obtained by solving a randomized linear system in the posterior precision
via preconditioned conjugate gradients, plus an optional random-walk
Metropolis step on the log of the kernel time-scale.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, TYPE_CHECKING

import numpy as np

from .errors import EmptyTrace, NotConverged, OutOfSupport
from .factor import VecchiaFactor, build_factor
from .kernels import MaternConfig

if TYPE_CHECKING:
    from .dag import LayeredDag

CG_TOL = 1e-10
POINT_MATCH_TOL = 1e-9


@dataclass(frozen=True)
class PowerExponentialTau:
    """Hyperprior ln p(tau) = -1/2 n^{d/(2a+d)} tau^{2ad/(2a+d)} on tau >= 1."""

    alpha: float
    d: int
    n: int

    def __post_init__(self):
        if self.alpha <= 0 or self.d < 1 or self.n < 1:
            raise ValueError("hyperprior needs alpha > 0, d >= 1, n >= 1")


@dataclass(frozen=True)
class PriorSpec:
    """Priors for the noise variance and, optionally, the time-scale.

    ``tau_prior`` None keeps tau fixed at its configured value.
    ``sigma2_fixed`` pins the noise variance instead of sampling it.
    """

    a0: float = 1.0
    b0: float = 1.0
    tau_prior: PowerExponentialTau | None = None
    sigma2_fixed: float | None = None

    def __post_init__(self):
        if self.a0 <= 0 or self.b0 <= 0:
            raise ValueError("inverse-gamma prior needs a0, b0 > 0")
        if self.sigma2_fixed is not None and self.sigma2_fixed <= 0:
            raise ValueError("fixed noise variance must be positive")


@dataclass(frozen=True)
class McmcConfig:
    n_iter: int
    burn_in: int
    thin: int = 1
    tau_every: int = 10
    proposal_sd: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_iter <= self.burn_in:
            raise ValueError("n_iter must exceed burn_in")
        if self.thin < 1 or self.tau_every < 1 or self.proposal_sd <= 0:
            raise ValueError("thin, tau_every >= 1 and proposal_sd > 0 required")


@dataclass
class GibbsTraces:
    """Post-burn-in states, thinned: one row per kept iteration."""

    iters: np.ndarray
    sigma2: np.ndarray
    tau: np.ndarray
    latent: np.ndarray


@dataclass
class ChainSummary:
    node_mean: np.ndarray
    node_q025: np.ndarray
    node_q975: np.ndarray
    sigma2_trace: np.ndarray
    tau_trace: np.ndarray
    cg_iters: np.ndarray | None = None
    tau_acceptance: float = float("nan")


def cg_solve(
    apply: Callable[[np.ndarray], np.ndarray],
    b: np.ndarray,
    tol: float = CG_TOL,
    max_iter: int | None = None,
    diagonal: np.ndarray | None = None,
) -> tuple[np.ndarray, int]:
    """Conjugate gradients for a symmetric positive definite operator.

    Stops when the residual norm drops to ``tol`` times the norm of ``b``.
    ``diagonal`` switches on Jacobi preconditioning.

    Raises
    ------
    NotConverged
        With the final relative residual and iteration count.
    """
    b = np.asarray(b, dtype=float)
    if max_iter is None:
        max_iter = b.size
    b_norm = float(np.linalg.norm(b))
    if b_norm == 0.0:
        return np.zeros_like(b), 0
    x = np.zeros_like(b)
    r = b.copy()
    z = r / diagonal if diagonal is not None else r
    p = z.copy()
    rz = float(r @ z)
    for k in range(1, max_iter + 1):
        ap = apply(p)
        alpha = rz / float(p @ ap)
        x += alpha * p
        r -= alpha * ap
        if np.linalg.norm(r) <= tol * b_norm:
            return x, k
        z = r / diagonal if diagonal is not None else r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NotConverged(
        "conjugate gradients stalled",
        residual=float(np.linalg.norm(r) / b_norm),
        iterations=max_iter,
    )


def sigma2_full_conditional(
    a0: float, b0: float, residuals: np.ndarray
) -> tuple[float, float]:
    """Inverse-gamma shape and rate given observation residuals."""
    residuals = np.asarray(residuals, dtype=float)
    return a0 + residuals.size / 2.0, b0 + 0.5 * float(residuals @ residuals)


def tau_log_hyperprior(tau: float, spec: PowerExponentialTau) -> float:
    """Unnormalized log hyperprior density; support is tau >= 1."""
    if tau < 1.0:
        raise OutOfSupport(f"time-scale hyperprior has support tau >= 1, got {tau}")
    denom = 2.0 * spec.alpha + spec.d
    scale = spec.n ** (spec.d / denom)
    exponent = 2.0 * spec.alpha * spec.d / denom
    return -0.5 * scale * tau**exponent


def match_observations(
    dag: "LayeredDag", x: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Align data rows with the DAG's non-augmented nodes.

    Returns the observed node indices (DAG order) and, for each, the row
    of ``x`` sitting at that node. Raises ValueError when the point sets
    differ.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    obs_nodes = np.flatnonzero(dag.observed)
    if x.shape[0] != obs_nodes.size or x.shape[1] != dag.dimension:
        raise ValueError(
            f"data has shape {x.shape}, DAG has {obs_nodes.size} observed nodes "
            f"in dimension {dag.dimension}"
        )
    lookup = {tuple(np.round(row, 9)): i for i, row in enumerate(x)}
    rows = np.empty(obs_nodes.size, dtype=int)
    for k, node in enumerate(obs_nodes):
        key = tuple(np.round(dag.points[node], 9))
        if key not in lookup:
            raise ValueError(f"no data row found for node at {dag.points[node]}")
        rows[k] = lookup[key]
    if np.unique(rows).size != rows.size:
        raise ValueError("data rows map to DAG nodes ambiguously")
    return obs_nodes, rows


def run_gibbs(
    x: np.ndarray,
    y: np.ndarray,
    dag: "LayeredDag",
    cfg: MaternConfig,
    priors: PriorSpec,
    mcmc: McmcConfig,
) -> tuple[ChainSummary, GibbsTraces]:
    """Gibbs sampler over (noise variance, latent field, time-scale).

    Each sweep draws the noise variance from its inverse-gamma full
    conditional, then draws the latent field exactly by solving
    (Phi + P/sigma^2) f = P Y/sigma^2 + L w1 + P w2/sigma
    with standard normal w1, w2, where P projects onto observed nodes.
    Every ``tau_every`` sweeps a random-walk proposal on ln(tau) is
    accepted against the hyperprior plus the prior density under the
    rebuilt factor. Augmented nodes never enter the likelihood.
    """
    y = np.asarray(y, dtype=float).ravel()
    obs_nodes, rows = match_observations(dag, x)
    y_node = y[rows]
    n = dag.n_nodes
    n_obs = obs_nodes.size
    rng = np.random.default_rng(mcmc.seed)

    factor = build_factor(dag, cfg)
    tau = cfg.tau
    sigma2 = priors.sigma2_fixed if priors.sigma2_fixed is not None else 1.0
    f = np.zeros(n)

    kept_iters, kept_sigma2, kept_tau, kept_f = [], [], [], []
    cg_iters: list[int] = []
    proposals = 0
    accepts = 0

    def posterior_apply(v: np.ndarray) -> np.ndarray:
        out = factor.apply_precision(v)
        out[obs_nodes] += v[obs_nodes] / sigma2
        return out

    for it in range(mcmc.n_iter):
        if priors.sigma2_fixed is None:
            shape, rate = sigma2_full_conditional(
                priors.a0, priors.b0, y_node - f[obs_nodes]
            )
            sigma2 = rate / rng.gamma(shape)

        w1 = rng.standard_normal(n)
        w2 = rng.standard_normal(n_obs)
        rhs = factor.apply_sqrt_precision(w1)
        rhs[obs_nodes] += y_node / sigma2 + w2 / np.sqrt(sigma2)
        diagonal = factor.precision_diagonal()
        diagonal[obs_nodes] += 1.0 / sigma2
        try:
            # Jacobi-preconditioned CG needs ~5n sweeps at tol 1e-10 on
            # fine grids, so the budget is a generous multiple of n.
            f, iters = cg_solve(
                posterior_apply, rhs, max_iter=20 * n, diagonal=diagonal
            )
        except NotConverged as exc:
            raise NotConverged(
                f"latent draw failed at iteration {it}: {exc}",
                residual=exc.residual,
                iterations=exc.iterations,
            ) from exc
        cg_iters.append(iters)

        if priors.tau_prior is not None and (it + 1) % mcmc.tau_every == 0:
            proposals += 1
            log_tau_new = np.log(tau) + mcmc.proposal_sd * rng.standard_normal()
            tau_new = float(np.exp(log_tau_new))
            accept_draw = rng.uniform()
            if tau_new >= 1.0:
                cfg_new = dataclasses.replace(cfg, tau=tau_new)
                factor_new = build_factor(dag, cfg_new)
                # ln tau terms: the walk proposes in log space
                log_ratio = (
                    tau_log_hyperprior(tau_new, priors.tau_prior)
                    + factor_new.log_prior_density(f)
                    + np.log(tau_new)
                    - tau_log_hyperprior(tau, priors.tau_prior)
                    - factor.log_prior_density(f)
                    - np.log(tau)
                )
                if log_ratio >= 0.0 or accept_draw < np.exp(log_ratio):
                    tau = tau_new
                    cfg = cfg_new
                    factor = factor_new
                    accepts += 1

        if it >= mcmc.burn_in and (it - mcmc.burn_in) % mcmc.thin == 0:
            kept_iters.append(it)
            kept_sigma2.append(sigma2)
            kept_tau.append(tau)
            kept_f.append(f.copy())

    traces = GibbsTraces(
        iters=np.array(kept_iters, dtype=int),
        sigma2=np.array(kept_sigma2),
        tau=np.array(kept_tau),
        latent=np.array(kept_f),
    )
    summary = posterior_summary(traces)
    summary.cg_iters = np.array(cg_iters, dtype=int)
    summary.tau_acceptance = accepts / proposals if proposals else float("nan")
    return summary, traces


def posterior_summary(traces: GibbsTraces) -> ChainSummary:
    """Pointwise mean and central 95% interval of the latent trace."""
    if traces.latent.size == 0:
        raise EmptyTrace("no post-burn-in samples to summarize")
    lo, hi = np.percentile(traces.latent, [2.5, 97.5], axis=0)
    return ChainSummary(
        node_mean=traces.latent.mean(axis=0),
        node_q025=lo,
        node_q975=hi,
        sigma2_trace=traces.sigma2,
        tau_trace=traces.tau,
    )
