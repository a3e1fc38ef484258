"""Synthetic-data generation and the reproducible experiment harness.

A TOML config names a grid of (method, size, seed) runs; each run draws a
ground-truth function from the dense mother process, fits the Gibbs
sampler under the method's DAG, and records estimation error, optional
prior approximation quality in squared Wasserstein-2, and runtime. A
separate benchmark times density evaluation alone for the linear-cost
check. Everything is deterministic given the config and seeds.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .dag import build_grid_dag, build_general_dag, build_maximin_nngp_dag
from .diagnostics import gaussian_w2_sq
from .errors import CapExceeded
from .factor import build_factor
from .inference import McmcConfig, PriorSpec, match_observations, run_gibbs
from .kernels import JITTER, MaternConfig, cov_matrix

TRUTH_CAP = 4096


@dataclass(frozen=True)
class TruthSpec:
    """Mother-process parameters the synthetic ground truth is drawn from."""

    alpha: float
    tau: float
    s: float
    seed: int

    def kernel(self) -> MaternConfig:
        return MaternConfig(alpha=self.alpha, tau=self.tau, s=self.s)


@dataclass(frozen=True)
class MethodSpec:
    """One fitting method: DAG family plus the kernel it assumes."""

    name: str
    dag: str  # norming | nngp | general
    kernel: MaternConfig
    order_l: int = 1
    parent_count: int | None = None

    def __post_init__(self):
        if self.dag not in ("norming", "nngp", "general"):
            raise ValueError(f"unknown dag family {self.dag!r}")


@dataclass(frozen=True)
class ExperimentConfig:
    dimension: int
    n_list: list[int]
    seeds: list[int]
    sigma_noise: float
    truth: TruthSpec
    methods: list[MethodSpec]
    mcmc: dict = field(default_factory=dict)
    compute_w2: bool = True
    out_dir: str = "results"
    workers: int | None = None

    def __post_init__(self):
        if self.sigma_noise <= 0:
            raise ValueError("sigma_noise must be positive")
        if not self.n_list or any(b <= a for a, b in zip(self.n_list, self.n_list[1:])):
            raise ValueError("n_list must be nonempty and strictly ascending")
        if not self.methods:
            raise ValueError("at least one method required")


@dataclass
class SyntheticData:
    x: np.ndarray
    f0: np.ndarray
    y: np.ndarray


@dataclass
class ResultRow:
    method: str
    n: int
    seed: int
    l2_error: float = float("nan")
    w2sq: float = float("nan")
    runtime_ms: float = float("nan")
    cg_iters_mean: float = float("nan")
    acceptance_rate: float = float("nan")
    error: str = ""

    FIELDS = (
        "method",
        "n",
        "seed",
        "l2_error",
        "w2sq",
        "runtime_ms",
        "cg_iters_mean",
        "acceptance_rate",
        "error",
    )

    def as_record(self) -> dict:
        return {name: getattr(self, name) for name in self.FIELDS}


def unit_grid(n: int, dimension: int) -> np.ndarray:
    """Equispaced lattice over the unit cube with n points total."""
    if dimension == 1:
        return np.linspace(0.0, 1.0, n)[:, None]
    n_side = round(n ** (1.0 / dimension))
    if n_side**dimension != n:
        raise ValueError(f"{n} points do not tile a lattice in dimension {dimension}")
    axes = [np.linspace(0.0, 1.0, n_side)] * dimension
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


def generate_synthetic(
    n: int,
    dimension: int,
    kernel: MaternConfig,
    sigma_noise: float,
    seed: int,
    cap: int = TRUTH_CAP,
) -> SyntheticData:
    """Grid locations, a dense-Cholesky draw of the mother process, noisy obs."""
    if n > cap:
        raise CapExceeded(f"dense truth generation capped at {cap} points")
    x = unit_grid(n, dimension)
    rng = np.random.default_rng(seed)
    cov = cov_matrix(x, x, kernel)
    chol = np.linalg.cholesky(cov + JITTER * kernel.s**2 * np.eye(n))
    f0 = chol @ rng.standard_normal(n)
    y = f0 + sigma_noise * rng.standard_normal(n)
    return SyntheticData(x=x, f0=f0, y=y)


def _derived_seed(*parts: int) -> int:
    return int(np.random.SeedSequence(list(parts)).generate_state(1)[0])


def _coarse_size(n: int, dimension: int, cap: int) -> int:
    """Largest nested coarsening of an n-per-side lattice within the cap."""
    side = n
    while side > 1 and side**dimension > cap:
        if (side - 1) % 2 != 0:
            raise CapExceeded(
                f"dense truth generation capped at {cap} points and "
                f"{n} has no nested coarsening"
            )
        side = (side - 1) // 2 + 1
    return side


def _interpolated_synthetic(
    config: ExperimentConfig, n: int, seed: int
) -> SyntheticData:
    """Truth drawn on a nested coarse lattice, linearly lifted to the fine one.

    The coarse draw reuses the seed a direct run of that size would use,
    so the lifted truth agrees with the exact one on the shared nodes.
    """
    from scipy.interpolate import RegularGridInterpolator

    d = config.dimension
    side = n if d == 1 else round(n ** (1.0 / d))
    base = _coarse_size(side, d, TRUTH_CAP)
    coarse = generate_synthetic(
        base**d,
        d,
        config.truth.kernel(),
        config.sigma_noise,
        _derived_seed(config.truth.seed, base**d, seed),
    )
    axes = [np.linspace(0.0, 1.0, base)] * d
    lift = RegularGridInterpolator(
        axes, coarse.f0.reshape([base] * d), method="linear"
    )
    x = unit_grid(n, d)
    f0 = lift(x)
    noise_rng = np.random.default_rng(_derived_seed(config.truth.seed, n, seed, 1))
    y = f0 + config.sigma_noise * noise_rng.standard_normal(f0.size)
    return SyntheticData(x=x, f0=f0, y=y)


def _build_method_dag(method: MethodSpec, x: np.ndarray, n: int):
    if method.dag == "norming":
        return build_grid_dag(x, method.order_l)
    if method.dag == "general":
        return build_general_dag(x, method.order_l)
    count = method.parent_count
    if count is None:
        count = max(1, round(2.0 * np.log(n)))
    return build_maximin_nngp_dag(x, count)


def _prior_w2sq(dag, kernel: MaternConfig) -> float:
    """Squared W2 between the DAG prior and the mother prior at the nodes."""
    obs = np.flatnonzero(dag.observed)
    factor = build_factor(dag, kernel)
    approx = factor.dense_vecchia_cov()[np.ix_(obs, obs)]
    exact = cov_matrix(dag.points[obs], dag.points[obs], kernel)
    zero = np.zeros(obs.size)
    return gaussian_w2_sq(zero, approx, zero, exact)


def run_single(config: ExperimentConfig, method: MethodSpec, n: int, seed: int) -> ResultRow:
    """One (method, size, seed) cell of the experiment grid."""
    row = ResultRow(method=method.name, n=n, seed=seed)
    started = time.perf_counter()
    if n > TRUTH_CAP:
        data = _interpolated_synthetic(config, n, seed)
    else:
        data = generate_synthetic(
            n,
            config.dimension,
            config.truth.kernel(),
            config.sigma_noise,
            _derived_seed(config.truth.seed, n, seed),
        )
    dag = _build_method_dag(method, data.x, n)
    mcmc_args = {k: v for k, v in config.mcmc.items() if k != "seed"}
    mcmc = McmcConfig(seed=_derived_seed(seed, n, 1), **mcmc_args)
    priors = PriorSpec()
    summary, _ = run_gibbs(data.x, data.y, dag, method.kernel, priors, mcmc)

    obs_nodes, rows = match_observations(dag, data.x)
    diff = summary.node_mean[obs_nodes] - data.f0[rows]
    row.l2_error = float(np.sqrt(np.mean(diff**2)))
    row.cg_iters_mean = float(summary.cg_iters.mean())
    row.acceptance_rate = summary.tau_acceptance
    if config.compute_w2:
        row.w2sq = _prior_w2sq(dag, method.kernel)
    row.runtime_ms = (time.perf_counter() - started) * 1e3
    return row


def _run_cell(
    config: ExperimentConfig, method: MethodSpec, n: int, seed: int
) -> ResultRow:
    try:
        return run_single(config, method, n, seed)
    except Exception as exc:  # per-row isolation is the contract
        return ResultRow(method=method.name, n=n, seed=seed, error=str(exc))


def run_experiment(config: ExperimentConfig) -> tuple[list[ResultRow], Path]:
    """Run the full grid, append rows to CSV, and write a manifest.

    Cells are independent and run in a process pool; rows keep the
    deterministic (method, n, seed) order regardless of completion
    order. Failures in one cell are recorded in the row's error column
    and do not stop the rest of the grid.
    """
    out_dir = Path(config.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    jobs = [
        (method, n, seed)
        for method in config.methods
        for n in config.n_list
        for seed in config.seeds
    ]
    workers = config.workers
    if workers is None:
        workers = min(len(jobs), os.cpu_count() or 1)
    if workers <= 1:
        rows = [_run_cell(config, *job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = [pool.submit(_run_cell, config, *job) for job in jobs]
            rows = [future.result() for future in futures]

    csv_path = out_dir / "results.csv"
    with csv_path.open("w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=ResultRow.FIELDS)
        writer.writeheader()
        for row in rows:
            writer.writerow(row.as_record())

    manifest = {
        "config_sha256": config_digest(config),
        "version": _package_version(),
        "rows": len(rows),
        "interpolated_truth": [n for n in config.n_list if n > TRUTH_CAP],
    }
    with (out_dir / "manifest.json").open("w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
    return rows, csv_path


def config_digest(config: ExperimentConfig) -> str:
    payload = {
        "dimension": config.dimension,
        "n_list": config.n_list,
        "seeds": config.seeds,
        "sigma_noise": config.sigma_noise,
        "truth": vars(config.truth),
        "methods": [
            {
                "name": m.name,
                "dag": m.dag,
                "kernel": vars(m.kernel),
                "order_l": m.order_l,
                "parent_count": m.parent_count,
            }
            for m in config.methods
        ],
        "mcmc": config.mcmc,
        "compute_w2": config.compute_w2,
    }
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def _package_version() -> str:
    from . import __version__

    return __version__


def parse_experiment_config(payload: dict) -> ExperimentConfig:
    """Build an ExperimentConfig from a parsed TOML document."""
    try:
        exp = payload["experiment"]
        truth_raw = payload["truth"]
        methods_raw = payload["methods"]
    except KeyError as exc:
        raise ValueError(f"config missing section {exc}") from exc
    truth = TruthSpec(
        alpha=float(truth_raw["alpha"]),
        tau=float(truth_raw["tau"]),
        s=float(truth_raw.get("s", 1.0)),
        seed=int(truth_raw["seed"]),
    )
    methods = []
    for raw in methods_raw:
        kernel = MaternConfig(
            alpha=float(raw["alpha"]),
            tau=float(raw.get("tau", 1.0)),
            s=float(raw.get("s", 1.0)),
        )
        methods.append(
            MethodSpec(
                name=str(raw.get("name", raw["dag"])),
                dag=str(raw["dag"]),
                kernel=kernel,
                order_l=int(raw.get("order_l", 1)),
                parent_count=(
                    int(raw["parent_count"]) if "parent_count" in raw else None
                ),
            )
        )
    return ExperimentConfig(
        dimension=int(exp.get("dimension", 1)),
        n_list=[int(v) for v in exp["n_list"]],
        seeds=[int(v) for v in exp["seeds"]],
        sigma_noise=float(exp["sigma_noise"]),
        truth=truth,
        methods=methods,
        mcmc={k: (float(v) if k == "proposal_sd" else int(v)) for k, v in payload.get("mcmc", {}).items()},
        compute_w2=bool(exp.get("compute_w2", True)),
        out_dir=str(exp.get("out_dir", "results")),
        workers=int(exp["workers"]) if "workers" in exp else None,
    )


@dataclass
class BenchRow:
    n: int
    build_ms: float
    density_ms: float


def run_density_benchmark(
    n_list: list[int],
    kernel: MaternConfig,
    order_l: int,
    seed: int,
    repeats: int = 5,
) -> list[BenchRow]:
    """Time prior density evaluation on growing grids with fixed parent size.

    Each size gets the best of ``repeats`` timed blocks, each block
    looping enough evaluations to rise above timer resolution.
    """
    rng = np.random.default_rng(seed)
    out: list[BenchRow] = []
    for n in n_list:
        started = time.perf_counter()
        dag = build_grid_dag(unit_grid(n, 1), order_l)
        factor = build_factor(dag, kernel)
        build_ms = (time.perf_counter() - started) * 1e3
        z = rng.standard_normal(dag.n_nodes)
        inner = max(1, int(np.ceil(65536 / n)))
        best = np.inf
        for _ in range(repeats):
            t0 = time.perf_counter()
            for _ in range(inner):
                factor.log_prior_density(z)
            best = min(best, (time.perf_counter() - t0) / inner)
        out.append(BenchRow(n=n, build_ms=build_ms, density_ms=best * 1e3))
    return out


def fit_loglog_slope(ns: np.ndarray, values: np.ndarray) -> float:
    return float(np.polyfit(np.log(np.asarray(ns, float)), np.log(np.asarray(values, float)), 1)[0])
