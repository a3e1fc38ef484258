#!/usr/bin/env python3
"""Render figures from the experiment and fit CSV outputs.

Reads a TOML figure spec and writes the same plot as both PNG and SVG.
Curve kinds consume the experiment results schema (method, n, seed, one
value column per kind); the posterior band consumes a fit summary and an
optional truth table. Output is byte-deterministic for identical input.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

try:
    from .style import (
        AXIS_LABELS,
        BAND_ALPHA,
        BAND_COLOR,
        MARKERS,
        MEAN_COLOR,
        PALETTE,
        RC_PARAMS,
        TRUTH_COLOR,
    )
except ImportError:
    from style import (
        AXIS_LABELS,
        BAND_ALPHA,
        BAND_COLOR,
        MARKERS,
        MEAN_COLOR,
        PALETTE,
        RC_PARAMS,
        TRUTH_COLOR,
    )

KINDS = ("error_curve", "w2_curve", "runtime_curve", "posterior_band")

VALUE_COLUMN = {
    "error_curve": "l2_error",
    "w2_curve": "w2sq",
    "runtime_curve": "runtime_ms",
}


class SchemaMismatch(RuntimeError):
    """The CSV does not carry the columns the figure kind needs."""


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    input: Path
    output: Path
    truth: Path | None = None
    logx: bool = False
    logy: bool = False
    title: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown figure kind {self.kind!r}")


def load_spec(path: str | Path) -> FigureSpec:
    """Read a ``[figure]`` table; relative paths resolve next to the TOML."""
    path = Path(path)
    with path.open("rb") as handle:
        payload = tomllib.load(handle)
    try:
        raw = dict(payload["figure"])
    except KeyError as exc:
        raise ValueError(f"spec missing section {exc}") from exc
    base = path.parent

    def resolve(key: str) -> Path:
        return base / Path(str(raw.pop(key)))

    try:
        spec = FigureSpec(
            kind=str(raw.pop("kind")),
            input=resolve("input"),
            output=resolve("output"),
            truth=resolve("truth") if "truth" in raw else None,
            logx=bool(raw.pop("logx", False)),
            logy=bool(raw.pop("logy", False)),
            title=str(raw.pop("title", "")),
        )
    except KeyError as exc:
        raise ValueError(f"spec missing key {exc}") from exc
    if raw:
        raise ValueError(f"unknown spec keys {sorted(raw)}")
    return spec


def _read_table(path: Path, required: tuple[str, ...]) -> list[dict]:
    with path.open(newline="") as handle:
        reader = csv.DictReader(handle)
        columns = reader.fieldnames or []
        missing = [name for name in required if name not in columns]
        if missing:
            raise SchemaMismatch(f"{path} lacks columns {missing}")
        return list(reader)


def method_series(
    rows: list[dict], column: str
) -> dict[str, tuple[list[int], list[float]]]:
    """Per-method curve: size against the seed-averaged value column.

    Rows whose error field is set are skipped; so are non-finite values.
    Methods keep first-appearance order, sizes come back ascending.
    """
    buckets: dict[str, dict[int, list[float]]] = {}
    for row in rows:
        if row.get("error", ""):
            continue
        value = float(row[column])
        if not math.isfinite(value):
            continue
        per_n = buckets.setdefault(row["method"], {})
        per_n.setdefault(int(row["n"]), []).append(value)
    series = {}
    for method, per_n in buckets.items():
        ns = sorted(per_n)
        series[method] = (ns, [sum(per_n[n]) / len(per_n[n]) for n in ns])
    return series


def _render_curve(spec: FigureSpec, ax) -> None:
    column = VALUE_COLUMN[spec.kind]
    rows = _read_table(spec.input, ("method", "n", "seed", column))
    series = method_series(rows, column)
    if not series:
        raise SchemaMismatch(f"{spec.input} has no plottable rows")
    for index, (method, (ns, values)) in enumerate(series.items()):
        ax.plot(
            ns,
            values,
            color=PALETTE[index % len(PALETTE)],
            marker=MARKERS[index % len(MARKERS)],
            label=method,
        )
    ax.legend(title="method")


def _render_band(spec: FigureSpec, ax) -> None:
    rows = _read_table(
        spec.input, ("node_index", "x1", "post_mean", "q025", "q975")
    )
    rows = sorted(rows, key=lambda row: float(row["x1"]))
    x = [float(row["x1"]) for row in rows]
    mean = [float(row["post_mean"]) for row in rows]
    low = [float(row["q025"]) for row in rows]
    high = [float(row["q975"]) for row in rows]
    ax.fill_between(
        x, low, high, color=BAND_COLOR, alpha=BAND_ALPHA, label="95% band"
    )
    ax.plot(x, mean, color=MEAN_COLOR, label="posterior mean")
    if spec.truth is not None:
        truth_rows = _read_table(spec.truth, ("x1", "f0"))
        truth_rows = sorted(truth_rows, key=lambda row: float(row["x1"]))
        ax.plot(
            [float(row["x1"]) for row in truth_rows],
            [float(row["f0"]) for row in truth_rows],
            color=TRUTH_COLOR,
            linestyle="--",
            label="truth",
        )
    ax.legend()


def render(spec: FigureSpec) -> list[Path]:
    """Draw the figure and write it as PNG and SVG next to ``spec.output``."""
    with plt.rc_context(RC_PARAMS):
        fig, ax = plt.subplots()
        try:
            if spec.kind == "posterior_band":
                _render_band(spec, ax)
            else:
                _render_curve(spec, ax)
            if spec.logx:
                ax.set_xscale("log")
            if spec.logy:
                ax.set_yscale("log")
            xlabel, ylabel = AXIS_LABELS[spec.kind]
            ax.set_xlabel(xlabel)
            ax.set_ylabel(ylabel)
            if spec.title:
                ax.set_title(spec.title)
            fig.tight_layout()
            base = spec.output
            if base.suffix in (".png", ".svg"):
                base = base.with_suffix("")
            base.parent.mkdir(parents=True, exist_ok=True)
            written = []
            for suffix, metadata in ((".png", {"Software": None}), (".svg", {"Date": None})):
                target = base.with_suffix(suffix)
                fig.savefig(target, metadata=metadata)
                written.append(target)
            return written
        finally:
            plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        description="render a figure described by a TOML spec"
    )
    parser.add_argument("--spec", required=True, help="path to the figure TOML")
    args = parser.parse_args(argv)
    try:
        written = render(load_spec(args.spec))
    except (
        ValueError,
        KeyError,
        OSError,
        tomllib.TOMLDecodeError,
        SchemaMismatch,
    ) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for path in written:
        print(f"wrote {path}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
