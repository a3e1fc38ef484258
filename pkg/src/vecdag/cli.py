"""Command-line interface.

Subcommands cover the whole workflow: build and validate DAGs, generate
synthetic data, fit the Gibbs sampler, predict at new points, run the
numeric diagnostics, benchmark density evaluation, and drive the full
experiment harness. Exit codes: 0 success, 2 configuration error,
3 numeric failure.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from . import __version__
from .dag import (
    LayeredDag,
    build_general_dag,
    build_grid_dag,
    build_maximin_nngp_dag,
    validate_dag,
)
from .diagnostics import (
    flat_limit_error,
    estimate_vartheta,
    transition_measure_sup,
    transition_measure_value,
    variance_decay_profile,
)
from .errors import (
    CapExceeded,
    DuplicatePoints,
    EmptyTrace,
    NotAGrid,
    OutOfSupport,
    PoolTooSmall,
    UnsupportedAlpha,
    UnsupportedOrder,
    VecdagError,
)
from .experiments import (
    fit_loglog_slope,
    generate_synthetic,
    parse_experiment_config,
    run_density_benchmark,
    run_experiment,
    unit_grid,
)
from .factor import build_factor, predict
from .inference import (
    McmcConfig,
    PowerExponentialTau,
    PriorSpec,
    run_gibbs,
)
from .kernels import MaternConfig

CONFIG_ERRORS = (
    ValueError,
    KeyError,
    OSError,
    tomllib.TOMLDecodeError,
    NotAGrid,
    DuplicatePoints,
    UnsupportedAlpha,
    UnsupportedOrder,
    PoolTooSmall,
    CapExceeded,
    OutOfSupport,
    EmptyTrace,
)


def read_points_csv(path: str) -> tuple[np.ndarray, np.ndarray | None]:
    """Read columns x1..xd and an optional y column."""
    with open(path, newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None:
            raise ValueError(f"{path} is empty")
        coord_cols = sorted(
            (name for name in reader.fieldnames if name.startswith("x")),
            key=lambda name: int(name[1:]),
        )
        if not coord_cols:
            raise ValueError(f"{path} has no coordinate columns x1..xd")
        has_y = "y" in reader.fieldnames
        xs, ys = [], []
        for record in reader:
            xs.append([float(record[c]) for c in coord_cols])
            if has_y:
                ys.append(float(record["y"]))
    return np.array(xs), (np.array(ys) if has_y else None)


def _write_csv(path: str, header: list[str], rows) -> None:
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(header)
        writer.writerows(rows)


def _coord_header(d: int) -> list[str]:
    return [f"x{h + 1}" for h in range(d)]


def _cmd_dag(args) -> int:
    if args.points is not None:
        points, _ = read_points_csv(args.points)
    elif args.grid_n is not None:
        points = unit_grid(args.grid_n, args.dim)
    else:
        raise ValueError("either --points or --grid-n is required")
    if args.construction == "norming":
        dag = build_grid_dag(points, args.order_l, augment=args.augment)
    elif args.construction == "general":
        dag = build_general_dag(
            points, args.order_l, gamma=args.gamma, seed=args.seed
        )
    else:
        count = args.parent_count
        if count is None:
            count = max(1, round(2.0 * np.log(points.shape[0])))
        dag = build_maximin_nngp_dag(points, count, seed=args.seed)
    Path(args.out).write_text(dag.to_json())
    if args.validate:
        report = validate_dag(dag)
        print(json.dumps(report.to_dict(), indent=2, sort_keys=True))
    print(f"wrote {dag.n_nodes}-node {dag.construction} DAG to {args.out}")
    return 0


def _cmd_synth(args) -> int:
    kernel = MaternConfig(alpha=args.alpha, tau=args.tau, s=args.s)
    data = generate_synthetic(args.n, args.dim, kernel, args.sigma, args.seed)
    header = _coord_header(args.dim)
    _write_csv(
        args.out,
        header + ["y"],
        [list(x) + [y] for x, y in zip(data.x, data.y)],
    )
    if args.truth_out:
        _write_csv(
            args.truth_out,
            header + ["f0"],
            [list(x) + [f] for x, f in zip(data.x, data.f0)],
        )
    print(f"wrote {args.n} observations to {args.out}")
    return 0


def _load_dag(path: str) -> LayeredDag:
    return LayeredDag.from_json(Path(path).read_text())


def _cmd_fit(args) -> int:
    x, y = read_points_csv(args.data)
    if y is None:
        raise ValueError(f"{args.data} has no y column")
    dag = _load_dag(args.dag)
    cfg = MaternConfig(alpha=args.alpha, tau=args.tau, s=args.s)
    tau_prior = None
    if args.tau_prior == "power":
        tau_prior = PowerExponentialTau(alpha=args.alpha, d=dag.dimension, n=x.shape[0])
    priors = PriorSpec(
        a0=args.a0, b0=args.b0, tau_prior=tau_prior, sigma2_fixed=args.sigma2
    )
    mcmc = McmcConfig(
        n_iter=args.iters,
        burn_in=args.burn,
        thin=args.thin,
        tau_every=args.tau_every,
        proposal_sd=args.proposal_sd,
        seed=args.seed,
    )
    summary, traces = run_gibbs(x, y, dag, cfg, priors, mcmc)

    n = dag.n_nodes
    header = ["iter", "sigma2", "tau"] + [f"f_{i}" for i in range(n)]
    rows = [
        [it, s2, tau] + list(latent)
        for it, s2, tau, latent in zip(
            traces.iters, traces.sigma2, traces.tau, traces.latent
        )
    ]
    _write_csv(args.out, header, rows)
    if args.summary_out:
        header = ["node_index"] + _coord_header(dag.dimension) + [
            "post_mean",
            "q025",
            "q975",
        ]
        rows = [
            [i] + list(dag.points[i]) + [
                summary.node_mean[i],
                summary.node_q025[i],
                summary.node_q975[i],
            ]
            for i in range(n)
        ]
        _write_csv(args.summary_out, header, rows)
    accept = summary.tau_acceptance
    extra = "" if np.isnan(accept) else f", tau acceptance {accept:.2f}"
    print(
        f"kept {traces.latent.shape[0]} draws, "
        f"mean CG iters {summary.cg_iters.mean():.1f}{extra}"
    )
    return 0


def _cmd_predict(args) -> int:
    dag = _load_dag(args.dag)
    cfg = MaternConfig(alpha=args.alpha, tau=args.tau, s=args.s)
    factor = build_factor(dag, cfg)
    with open(args.summary, newline="") as handle:
        reader = csv.DictReader(handle)
        records = sorted(reader, key=lambda rec: int(rec["node_index"]))
    z = np.array([float(rec["post_mean"]) for rec in records])
    if z.size != dag.n_nodes:
        raise ValueError("summary row count does not match the DAG")
    test, _ = read_points_csv(args.test)
    means, variances = predict(factor, test, z, pool_order=args.order_l)
    _write_csv(
        args.out,
        _coord_header(dag.dimension) + ["pred_mean", "pred_var"],
        [list(x) + [m, v] for x, m, v in zip(test, means, variances)],
    )
    print(f"wrote {test.shape[0]} predictions to {args.out}")
    return 0


def _parse_int_list(text: str) -> list[int]:
    return [int(part) for part in text.split(",") if part]


def _cmd_diagnose(args) -> int:
    if args.check == "flat-limit":
        nus = [float(v) for v in args.nus.split(",")]
        pts = np.linspace(0.0, 1.0, args.order_l + 1)[:, None]
        curve = flat_limit_error(pts, np.array([args.x]), args.alpha, nus)
        _write_csv(
            args.out,
            ["nu", "l1_error", "slope"],
            [[nu, err, curve.slope] for nu, err in zip(curve.nus, curve.errors)],
        )
        print(f"fitted slope {curve.slope:.4f}")
    elif args.check == "variance-decay":
        dag = build_grid_dag(unit_grid(args.n, 1), args.order_l)
        factor = build_factor(dag, MaternConfig(alpha=args.alpha, tau=args.tau, s=args.s))
        profile = variance_decay_profile(factor)
        _write_csv(
            args.out,
            [
                "layer",
                "var_min",
                "var_median",
                "var_max",
                "reference",
                "ratio_min",
                "ratio_max",
            ],
            [
                [
                    profile.layers[k],
                    profile.var_min[k],
                    profile.var_median[k],
                    profile.var_max[k],
                    profile.reference[k],
                    profile.ratio_min[k],
                    profile.ratio_max[k],
                ]
                for k in range(profile.layers.size)
            ],
        )
        spread = profile.ratio_max.max() / profile.ratio_min.min()
        print(f"variance ratio spread {spread:.3f} over {profile.layers.size} layers")
    elif args.check == "vartheta":
        rows = []
        for n in _parse_int_list(args.n_list):
            for l in _parse_int_list(args.order_l_list):
                dag = build_grid_dag(unit_grid(n, 1), l)
                rows.append([n, l, estimate_vartheta(dag)])
        _write_csv(args.out, ["n", "order_l", "vartheta"], rows)
        print(f"wrote {len(rows)} operator-norm estimates")
    else:  # transition-measure
        xi = np.arange(1, args.resolution) / args.resolution
        values = transition_measure_value(args.alpha, xi)
        _write_csv(
            args.out, ["xi", "value"], [[x, v] for x, v in zip(xi, values)]
        )
        sup = transition_measure_sup(args.alpha, args.resolution)
        print(f"sup over grid {sup:.6f}")
    return 0


def _cmd_bench(args) -> int:
    kernel = MaternConfig(alpha=args.alpha, tau=args.tau, s=args.s)
    rows = run_density_benchmark(
        _parse_int_list(args.n_list), kernel, args.order_l, args.seed, args.repeats
    )
    slope = fit_loglog_slope(
        np.array([r.n for r in rows]), np.array([r.density_ms for r in rows])
    )
    _write_csv(
        args.out,
        ["n", "build_ms", "density_ms", "slope"],
        [[r.n, r.build_ms, r.density_ms, slope] for r in rows],
    )
    print(f"density evaluation log-log slope {slope:.3f}")
    return 0


def _cmd_experiment(args) -> int:
    with open(args.config, "rb") as handle:
        payload = tomllib.load(handle)
    config = parse_experiment_config(payload)
    if args.out_dir:
        config = dataclasses.replace(config, out_dir=args.out_dir)
    rows, csv_path = run_experiment(config)
    failed = sum(1 for row in rows if row.error)
    print(f"wrote {len(rows)} rows ({failed} failed) to {csv_path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vecchia",
        description="Vecchia approximations of Matern processes on layered DAGs",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("dag", help="build a DAG and write it as JSON")
    p.add_argument("--points", help="CSV of points (columns x1..xd)")
    p.add_argument("--grid-n", type=int, help="build on an equispaced lattice of this size")
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--order-l", type=int, default=1)
    p.add_argument(
        "--construction", choices=["norming", "general", "nngp"], default="norming"
    )
    p.add_argument("--augment", action="store_true")
    p.add_argument("--parent-count", type=int)
    p.add_argument("--gamma", type=float, default=2.0)
    p.add_argument("--seed", type=int)
    p.add_argument("--validate", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_dag)

    p = sub.add_parser("synth", help="generate synthetic observations")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--dim", type=int, default=1)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--sigma", type=float, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--truth-out")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_synth)

    p = sub.add_parser("fit", help="run the Gibbs sampler")
    p.add_argument("--data", required=True)
    p.add_argument("--dag", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--iters", type=int, required=True)
    p.add_argument("--burn", type=int, required=True)
    p.add_argument("--thin", type=int, default=1)
    p.add_argument("--tau-every", type=int, default=10)
    p.add_argument("--proposal-sd", type=float, default=0.1)
    p.add_argument("--a0", type=float, default=1.0)
    p.add_argument("--b0", type=float, default=1.0)
    p.add_argument("--tau-prior", choices=["fixed", "power"], default="fixed")
    p.add_argument("--sigma2", type=float, help="fix the noise variance")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--summary-out")
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_fit)

    p = sub.add_parser("predict", help="predict at new points from a fit summary")
    p.add_argument("--dag", required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--summary", required=True)
    p.add_argument("--test", required=True)
    p.add_argument("--order-l", type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_predict)

    p = sub.add_parser("diagnose", help="run a numeric diagnostic")
    p.add_argument(
        "--check",
        choices=["flat-limit", "variance-decay", "vartheta", "transition-measure"],
        required=True,
    )
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--n", type=int, default=257)
    p.add_argument("--order-l", type=int, default=1)
    p.add_argument("--x", type=float, default=0.5)
    p.add_argument("--nus", default="0.2,0.1,0.05,0.025,0.0125")
    p.add_argument("--n-list", default="17,33,65")
    p.add_argument("--order-l-list", default="1,3")
    p.add_argument("--resolution", type=int, default=2**12)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_diagnose)

    p = sub.add_parser("bench", help="time density evaluation across sizes")
    p.add_argument("--n-list", default="129,257,513,1025,2049,4097,8193")
    p.add_argument("--alpha", type=float, default=1.5)
    p.add_argument("--tau", type=float, default=1.0)
    p.add_argument("--s", type=float, default=1.0)
    p.add_argument("--order-l", type=int, default=1)
    p.add_argument("--repeats", type=int, default=5)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(handler=_cmd_bench)

    p = sub.add_parser("experiment", help="run an experiment grid from TOML config")
    p.add_argument("--config", required=True)
    p.add_argument("--out-dir")
    p.set_defaults(handler=_cmd_experiment)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.handler(args)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VecdagError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
