from __future__ import annotations

import csv
import json

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import numpy as np
import pytest

from vecdag import (
    CapExceeded,
    ExperimentConfig,
    MaternConfig,
    MethodSpec,
    ResultRow,
    TruthSpec,
    generate_synthetic,
    parse_experiment_config,
    run_density_benchmark,
    run_experiment,
    unit_grid,
)
from vecdag.experiments import (
    TRUTH_CAP,
    _coarse_size,
    _derived_seed,
    _interpolated_synthetic,
    config_digest,
    fit_loglog_slope,
    run_single,
)

_KERNEL = MaternConfig(alpha=1.5, tau=3.0, s=1.0)


def _config(**overrides) -> ExperimentConfig:
    base = dict(
        dimension=1,
        n_list=[9, 17],
        seeds=[0, 1],
        sigma_noise=0.1,
        truth=TruthSpec(alpha=1.5, tau=3.0, s=1.0, seed=7),
        methods=[
            MethodSpec(name="norming", dag="norming", kernel=_KERNEL),
            MethodSpec(name="nngp", dag="nngp", kernel=_KERNEL),
        ],
        mcmc={"n_iter": 6, "burn_in": 2, "thin": 1},
        out_dir="results",
        workers=1,
    )
    base.update(overrides)
    return ExperimentConfig(**base)


def test_unit_grid_line():
    x = unit_grid(5, 1)
    assert x.shape == (5, 1)
    np.testing.assert_allclose(x[:, 0], [0.0, 0.25, 0.5, 0.75, 1.0])


def test_unit_grid_square():
    x = unit_grid(9, 2)
    assert x.shape == (9, 2)
    assert {tuple(row) for row in x} == {
        (a, b) for a in (0.0, 0.5, 1.0) for b in (0.0, 0.5, 1.0)
    }


def test_unit_grid_rejects_non_lattice_count():
    with pytest.raises(ValueError):
        unit_grid(10, 2)


def test_generate_synthetic_deterministic():
    a = generate_synthetic(33, 1, _KERNEL, 0.1, seed=4)
    b = generate_synthetic(33, 1, _KERNEL, 0.1, seed=4)
    np.testing.assert_array_equal(a.x, b.x)
    np.testing.assert_array_equal(a.f0, b.f0)
    np.testing.assert_array_equal(a.y, b.y)
    c = generate_synthetic(33, 1, _KERNEL, 0.1, seed=5)
    assert not np.array_equal(a.y, c.y)


def test_generate_synthetic_noise_scale():
    data = generate_synthetic(2049, 1, _KERNEL, 0.1, seed=11)
    noise_sd = np.std(data.y - data.f0)
    # s.e. of a sample sd is roughly sigma / sqrt(2 n)
    assert abs(noise_sd - 0.1) < 3 * 0.1 / np.sqrt(2 * 2049)


def test_generate_synthetic_marginal_variance():
    kernel = MaternConfig(alpha=1.5, tau=3.0, s=2.0)
    draws = np.array(
        [generate_synthetic(9, 1, kernel, 0.1, seed=seed).f0[3] for seed in range(300)]
    )
    var = draws.var()
    assert abs(var - 4.0) < 3 * 4.0 * np.sqrt(2.0 / 300)


def test_generate_synthetic_respects_cap():
    with pytest.raises(CapExceeded):
        generate_synthetic(40, 1, _KERNEL, 0.1, seed=0, cap=30)


def test_method_spec_rejects_unknown_family():
    with pytest.raises(ValueError):
        MethodSpec(name="bad", dag="mesh", kernel=_KERNEL)


def test_config_rejects_descending_n_list():
    with pytest.raises(ValueError):
        _config(n_list=[17, 9])


def test_config_rejects_empty_methods():
    with pytest.raises(ValueError):
        _config(methods=[])


def test_config_rejects_bad_noise():
    with pytest.raises(ValueError):
        _config(sigma_noise=0.0)


_TOML = """
[experiment]
dimension = 1
n_list = [9, 17]
seeds = [0, 1]
sigma_noise = 0.1
compute_w2 = false
out_dir = "run1"
workers = 3

[truth]
alpha = 1.5
tau = 3.0
s = 2.0
seed = 7

[mcmc]
n_iter = 50
burn_in = 10
thin = 2
proposal_sd = 0.2

[[methods]]
name = "layered"
dag = "norming"
alpha = 1.5
tau = 3.0
order_l = 2

[[methods]]
dag = "nngp"
alpha = 1.5
parent_count = 4
"""


def test_parse_experiment_config_round_trip():
    config = parse_experiment_config(tomllib.loads(_TOML))
    assert config.dimension == 1
    assert config.n_list == [9, 17]
    assert config.seeds == [0, 1]
    assert config.sigma_noise == 0.1
    assert config.compute_w2 is False
    assert config.out_dir == "run1"
    assert config.workers == 3
    assert config.truth == TruthSpec(alpha=1.5, tau=3.0, s=2.0, seed=7)
    assert config.mcmc == {"n_iter": 50, "burn_in": 10, "thin": 2, "proposal_sd": 0.2}
    assert isinstance(config.mcmc["n_iter"], int)
    assert isinstance(config.mcmc["proposal_sd"], float)
    first, second = config.methods
    assert first.name == "layered"
    assert first.dag == "norming"
    assert first.order_l == 2
    assert first.kernel == MaternConfig(alpha=1.5, tau=3.0, s=1.0)
    assert second.name == "nngp"
    assert second.parent_count == 4


def test_parse_experiment_config_missing_section():
    payload = tomllib.loads(_TOML)
    del payload["truth"]
    with pytest.raises(ValueError):
        parse_experiment_config(payload)


def test_config_digest_stable_and_sensitive():
    a = _config()
    assert config_digest(a) == config_digest(a)
    assert config_digest(a) != config_digest(_config(sigma_noise=0.2))
    assert config_digest(a) != config_digest(_config(n_list=[9, 33]))


def test_config_digest_ignores_output_location():
    assert config_digest(_config(out_dir="a", workers=1)) == config_digest(
        _config(out_dir="b", workers=4)
    )


def test_run_single_produces_finite_row():
    config = _config()
    row = run_single(config, config.methods[0], 9, seed=0)
    assert row.method == "norming"
    assert row.n == 9
    assert row.seed == 0
    assert row.error == ""
    assert np.isfinite(row.l2_error)
    assert np.isfinite(row.w2sq)
    assert np.isfinite(row.cg_iters_mean)
    assert row.runtime_ms > 0


def test_run_single_derives_seed_per_cell():
    config = _config()
    a = run_single(config, config.methods[0], 9, seed=0)
    b = run_single(config, config.methods[0], 9, seed=1)
    assert a.l2_error != b.l2_error


def test_run_experiment_grid(tmp_path):
    config = _config(out_dir=str(tmp_path / "out"))
    rows, csv_path = run_experiment(config)
    assert len(rows) == 8
    keys = [(r.method, r.n, r.seed) for r in rows]
    assert keys == [
        (m, n, s) for m in ("norming", "nngp") for n in (9, 17) for s in (0, 1)
    ]
    assert all(r.error == "" for r in rows)

    with open(csv_path, newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader)
        body = list(reader)
    assert tuple(header) == ResultRow.FIELDS
    assert len(body) == 8

    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["rows"] == 8
    assert manifest["config_sha256"] == config_digest(config)
    assert manifest["interpolated_truth"] == []
    assert manifest["version"]


def test_run_experiment_deterministic_modulo_runtime(tmp_path):
    rows_a, _ = run_experiment(_config(out_dir=str(tmp_path / "a")))
    rows_b, _ = run_experiment(_config(out_dir=str(tmp_path / "b")))
    for a, b in zip(rows_a, rows_b):
        assert a.l2_error == b.l2_error
        assert a.w2sq == b.w2sq
        assert a.cg_iters_mean == b.cg_iters_mean


def test_run_experiment_pool_matches_serial(tmp_path):
    serial, _ = run_experiment(_config(out_dir=str(tmp_path / "s"), workers=1))
    pooled, _ = run_experiment(_config(out_dir=str(tmp_path / "p"), workers=2))
    for a, b in zip(serial, pooled):
        assert (a.method, a.n, a.seed) == (b.method, b.n, b.seed)
        assert a.l2_error == b.l2_error
        assert a.w2sq == b.w2sq


def test_run_experiment_keeps_going_after_cell_failure(tmp_path):
    # 10 points do not tile a 2-d lattice, so that cell fails alone
    config = _config(
        dimension=2,
        n_list=[9, 10],
        seeds=[0],
        methods=[MethodSpec(name="norming", dag="norming", kernel=_KERNEL)],
        out_dir=str(tmp_path / "out"),
    )
    rows, _ = run_experiment(config)
    assert len(rows) == 2
    good, bad = rows
    assert good.n == 9 and good.error == ""
    assert bad.n == 10 and bad.error != ""
    assert np.isnan(bad.l2_error)


def test_coarse_size_halves_to_cap():
    assert _coarse_size(8193, 1, 4096) == 2049
    assert _coarse_size(2049, 1, 4096) == 2049
    assert _coarse_size(33, 2, 4096) == 33
    assert _coarse_size(65, 2, 1000) == 17


def test_coarse_size_requires_dyadic_refinement():
    with pytest.raises(CapExceeded):
        _coarse_size(6, 1, 4)


def test_interpolated_truth_agrees_on_shared_nodes():
    config = _config(n_list=[9, 8193])
    data = _interpolated_synthetic(config, 8193, seed=0)
    assert data.x.shape == (8193, 1)
    coarse_seed = _derived_seed(config.truth.seed, 2049, 0)
    coarse = generate_synthetic(2049, 1, config.truth.kernel(), 0.1, coarse_seed)
    np.testing.assert_allclose(data.f0[::4], coarse.f0, atol=1e-12)
    noise_sd = np.std(data.y - data.f0)
    assert abs(noise_sd - 0.1) < 3 * 0.1 / np.sqrt(2 * 8193)


def test_run_experiment_flags_interpolated_truth(tmp_path):
    config = _config(
        n_list=[9, 4097],
        seeds=[0],
        methods=[MethodSpec(name="norming", dag="norming", kernel=_KERNEL)],
        mcmc={"n_iter": 1, "burn_in": 0, "thin": 1},
        compute_w2=False,
        out_dir=str(tmp_path / "out"),
    )
    rows, _ = run_experiment(config)
    assert len(rows) == 2
    assert rows[0].n == 9 and rows[0].error == ""
    # past the dense-truth cap the grid still completes row by row
    assert rows[1].n == 4097
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["interpolated_truth"] == [4097]


def test_density_benchmark_rows_and_slope():
    rows = run_density_benchmark([33, 65], _KERNEL, 1, seed=0, repeats=1)
    assert [r.n for r in rows] == [33, 65]
    assert all(r.build_ms > 0 and r.density_ms > 0 for r in rows)


def test_fit_loglog_slope_recovers_power_law():
    ns = np.array([128, 256, 512, 1024])
    values = 0.01 * ns**1.3
    assert fit_loglog_slope(ns, values) == pytest.approx(1.3, abs=1e-12)
