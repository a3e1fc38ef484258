from __future__ import annotations

import math
import time

import numpy as np
import pytest

from vecdag import (
    ExperimentConfig,
    MaternConfig,
    McmcConfig,
    MethodSpec,
    PriorSpec,
    TruthSpec,
    build_factor,
    build_full_dag,
    build_general_dag,
    build_grid_dag,
    build_maximin_nngp_dag,
    cov_matrix,
    estimate_vartheta,
    flat_limit_error,
    norming_constant,
    norming_constant_lagrange,
    run_density_benchmark,
    run_experiment,
    run_gibbs,
    transition_measure_sup,
    transition_measure_value,
    unit_grid,
    variance_decay_profile,
)
from vecdag.experiments import fit_loglog_slope
from vecdag.inference import cg_solve


def _dense_precision(factor) -> np.ndarray:
    n = factor.dag.n_nodes
    b = np.eye(n)
    for i, parents in enumerate(factor.dag.parents):
        if len(parents):
            b[i, parents] = -factor.weights[i]
    return b.T @ np.diag(1.0 / factor.cond_var) @ b


def _dense_log_density(factor, z: np.ndarray) -> float:
    phi = _dense_precision(factor)
    sign, logdet = np.linalg.slogdet(phi)
    assert sign > 0
    return 0.5 * (logdet - z.size * math.log(2.0 * math.pi) - z @ phi @ z)


def _jittered_line(rng: np.random.Generator, n: int) -> np.ndarray:
    spacing = 1.0 / (n - 1)
    pts = np.linspace(0.0, 1.0, n) + rng.uniform(-0.25, 0.25, size=n) * spacing
    return pts[:, None]


def _random_case(seed: int):
    rng = np.random.default_rng(seed)
    alpha = float(rng.uniform(0.5, 3.0))
    tau = float(rng.uniform(1.0, 5.0))
    kernel = MaternConfig(alpha=alpha, tau=tau, s=float(rng.uniform(0.5, 2.0)))
    # cap the resolution so conditional variances stay representable:
    # spacing h with (tau h)^(2 alpha) >= e^-10 keeps the dense oracle
    # comparable at 1e-8 absolute in float64
    h_min = math.exp(-5.0 / alpha) / tau
    kind = seed % 3
    if kind == 0:
        n = int(rng.integers(5, max(6, min(64, int(1.0 / h_min) + 1)) + 1))
        dag = build_grid_dag(unit_grid(n, 1), int(rng.integers(1, 3)))
    elif kind == 1:
        n = int(rng.integers(5, max(6, min(64, int(0.5 / h_min) + 1)) + 1))
        dag = build_general_dag(_jittered_line(rng, n), 1)
    else:
        side = int(rng.integers(2, max(3, min(8, int(0.5 / h_min) + 1)) + 1))
        spacing = 1.0 / (side - 1)
        axis = np.linspace(0.0, 1.0, side)
        mesh = np.stack(np.meshgrid(axis, axis, indexing="ij"), axis=-1)
        pts = mesh.reshape(-1, 2) + rng.uniform(
            -0.25, 0.25, size=(side**2, 2)
        ) * spacing
        dag = build_maximin_nngp_dag(pts, int(rng.integers(1, 5)))
    return dag, kernel, rng


def test_sparse_density_matches_dense_normal():
    started = time.monotonic()
    for seed in range(50):
        dag, kernel, rng = _random_case(seed)
        factor = build_factor(dag, kernel)
        z = rng.normal(size=dag.n_nodes)
        got = factor.log_prior_density(z)
        want = _dense_log_density(factor, z)
        assert got == pytest.approx(want, abs=1e-8), f"case {seed}"
    assert time.monotonic() - started < 60.0


def test_full_conditioning_reproduces_mother_covariance():
    rng = np.random.default_rng(3)
    pts = np.sort(rng.uniform(size=32))[:, None]
    kernel = MaternConfig(alpha=1.5, tau=2.0, s=1.3)
    factor = build_factor(build_full_dag(pts), kernel)
    np.testing.assert_allclose(
        factor.dense_vecchia_cov(), cov_matrix(pts, pts, kernel), atol=1e-10
    )


def test_norming_constants_match_closed_form():
    cube = (np.zeros(1), 1.0)
    pair = np.array([[0.0], [1.0]])
    triple = np.array([[0.0], [0.5], [1.0]])
    assert norming_constant(pair, cube, 1) == pytest.approx(1.0, abs=1e-4)
    assert norming_constant(triple, cube, 2) == pytest.approx(1.25, abs=1e-4)
    assert norming_constant_lagrange(pair, (0.0, 1.0)) == pytest.approx(
        1.0, abs=1e-4
    )
    assert norming_constant_lagrange(triple, (0.0, 1.0)) == pytest.approx(
        1.25, abs=1e-4
    )


@pytest.mark.parametrize("scale", [0.1, 10.0])
def test_norming_constant_scale_invariant(scale):
    triple = np.array([[0.0], [0.5], [1.0]])
    base = norming_constant(triple, (np.zeros(1), 1.0), 2)
    scaled = norming_constant(scale * triple, (np.zeros(1), scale), 2)
    assert scaled == pytest.approx(base, abs=1e-4)


@pytest.mark.parametrize("alpha", [1.25, 1.5, 1.75])
def test_kriging_weight_convergence_rate(alpha):
    curve = flat_limit_error(
        np.array([[0.0], [1.0]]),
        np.array([0.5]),
        alpha,
        [0.2, 0.1, 0.05, 0.025, 0.0125],
    )
    target = min(1.0, 2.0 * (alpha - math.floor(alpha)))
    assert target / 2.0 <= curve.slope <= target * 2.0


def test_conditional_variance_tracks_layer_decay():
    factor = build_factor(
        build_grid_dag(unit_grid(257, 1), 1), MaternConfig(alpha=1.5, tau=1.0, s=1.0)
    )
    profile = variance_decay_profile(factor)
    j0 = factor.dag.layer[factor.dag.i0]
    keep = profile.layers >= j0
    spread = profile.ratio_max[keep].max() / profile.ratio_min[keep].min()
    assert spread <= 10.0


def _dense_posterior(y: np.ndarray, factor, sigma2: float):
    phi = _dense_precision(factor)
    system = phi + np.eye(y.size) / sigma2
    mean = np.linalg.solve(system, y / sigma2)
    node_var = np.diag(np.linalg.inv(system))
    return system, mean, node_var


def test_gibbs_latent_mean_matches_dense_posterior():
    n = 129
    sigma2 = 0.04
    kernel = MaternConfig(alpha=1.5, tau=3.0, s=1.0)
    dag = build_grid_dag(unit_grid(n, 1), 1)
    factor = build_factor(dag, kernel)
    rng = np.random.default_rng(12)
    y = factor.sample_prior(rng) + math.sqrt(sigma2) * rng.normal(size=n)

    draws = 10_000
    summary, traces = run_gibbs(
        dag.points,
        y,
        dag,
        kernel,
        PriorSpec(sigma2_fixed=sigma2),
        McmcConfig(n_iter=draws + 200, burn_in=200, thin=1, seed=12),
    )
    assert traces.latent.shape == (draws, n)

    _, dense_mean, node_var = _dense_posterior(y, factor, sigma2)
    mc_se = np.sqrt(node_var / draws)
    gap = np.abs(summary.node_mean - dense_mean)
    assert np.all(gap <= 3.0 * mc_se)


def test_cg_matches_dense_solve():
    n = 129
    sigma2 = 0.04
    kernel = MaternConfig(alpha=1.5, tau=3.0, s=1.0)
    factor = build_factor(build_grid_dag(unit_grid(n, 1), 1), kernel)
    rng = np.random.default_rng(5)
    y = rng.normal(size=n)
    system, dense_mean, _ = _dense_posterior(y, factor, sigma2)

    def apply(v):
        return factor.apply_precision(v) + v / sigma2

    diagonal = factor.precision_diagonal() + 1.0 / sigma2
    x, _ = cg_solve(apply, y / sigma2, max_iter=20 * n, diagonal=diagonal)
    assert np.max(np.abs(x - dense_mean)) < 1e-8
    assert np.max(np.abs(system @ x - y / sigma2)) < 1e-8


_REPRO_N = [33, 65, 129, 257, 513]


@pytest.fixture(scope="module")
def reproduction(tmp_path_factory):
    kernel = MaternConfig(alpha=1.5, tau=10.0, s=1.0)
    config = ExperimentConfig(
        dimension=1,
        n_list=_REPRO_N,
        seeds=[0, 1],
        sigma_noise=0.1,
        truth=TruthSpec(alpha=1.5, tau=10.0, s=1.0, seed=20260822),
        methods=[
            MethodSpec(name="norming", dag="norming", kernel=kernel),
            MethodSpec(name="nngp", dag="nngp", kernel=kernel),
        ],
        mcmc={"n_iter": 600, "burn_in": 100, "thin": 1},
        out_dir=str(tmp_path_factory.mktemp("repro")),
    )
    started = time.monotonic()
    rows, csv_path = run_experiment(config)
    elapsed = time.monotonic() - started
    assert all(row.error == "" for row in rows)
    return rows, csv_path, elapsed


def _mean_l2(rows, method: str, n: int) -> float:
    picked = [r.l2_error for r in rows if r.method == method and r.n == n]
    return float(np.mean(picked))


def _w2(rows, method: str, n: int) -> float:
    return next(r.w2sq for r in rows if r.method == method and r.n == n)


def test_error_drops_with_resolution(reproduction):
    rows, _, _ = reproduction
    coarse = _mean_l2(rows, "norming", 33)
    fine = _mean_l2(rows, "norming", 513)
    assert coarse / fine >= 3.0


def test_prior_transport_gap_stays_large(reproduction):
    rows, _, _ = reproduction
    for n in _REPRO_N:
        assert _w2(rows, "norming", n) > 20.0, f"n={n}"


def test_nearest_neighbor_prior_gap_is_far_smaller(reproduction):
    rows, _, _ = reproduction
    assert _w2(rows, "norming", 513) >= 10.0 * _w2(rows, "nngp", 513)


def test_reproduction_fits_runtime_budget(reproduction):
    _, _, elapsed = reproduction
    assert elapsed <= 15 * 60


def test_density_evaluation_cost_is_near_linear():
    rows = run_density_benchmark(
        [2**k + 1 for k in range(7, 14)],
        MaternConfig(alpha=1.5, tau=1.0, s=1.0),
        1,
        seed=0,
        repeats=3,
    )
    slope = fit_loglog_slope(
        np.array([r.n for r in rows]), np.array([r.density_ms for r in rows])
    )
    assert slope <= 1.3


@pytest.mark.parametrize("order_l", [1, 3])
def test_interpolation_norm_stable_across_sizes(order_l):
    values = [
        estimate_vartheta(build_grid_dag(unit_grid(n, 1), order_l))
        for n in (17, 33, 65)
    ]
    assert max(values) / min(values) <= 1.10


def test_midpoint_filter_bound():
    assert transition_measure_value(1.5, 0.5) == pytest.approx(0.5, abs=1e-6)
    assert transition_measure_sup(1.5, 2**12) < 1.0


def test_figures_render_from_reproduction_output(reproduction, tmp_path):
    from figures.render import FigureSpec, render
    from vecdag.cli import main as cli_main

    _, csv_path, _ = reproduction
    for kind in ("error_curve", "w2_curve", "runtime_curve"):
        written = render(
            FigureSpec(
                kind=kind,
                input=csv_path,
                output=tmp_path / kind,
                logx=True,
                logy=True,
            )
        )
        assert all(path.exists() for path in written)

    data = tmp_path / "data.csv"
    truth = tmp_path / "truth.csv"
    dag_path = tmp_path / "dag.json"
    summary = tmp_path / "summary.csv"
    base = [
        "synth", "--n", "33", "--alpha", "1.5", "--tau", "10.0",
        "--sigma", "0.1", "--seed", "0",
        "--truth-out", str(truth), "--out", str(data),
    ]
    assert cli_main(base) == 0
    assert cli_main(["dag", "--grid-n", "33", "--out", str(dag_path)]) == 0
    assert (
        cli_main(
            [
                "fit", "--data", str(data), "--dag", str(dag_path),
                "--alpha", "1.5", "--tau", "10.0",
                "--iters", "200", "--burn", "50", "--seed", "0",
                "--summary-out", str(summary), "--out", str(tmp_path / "chain.csv"),
            ]
        )
        == 0
    )
    written = render(
        FigureSpec(
            kind="posterior_band",
            input=summary,
            output=tmp_path / "band",
            truth=truth,
        )
    )
    assert all(path.exists() for path in written)
