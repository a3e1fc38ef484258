from __future__ import annotations

import csv

import pytest

from figures.render import (
    FigureSpec,
    SchemaMismatch,
    load_spec,
    main,
    method_series,
    render,
)

_RESULT_COLUMNS = [
    "method",
    "n",
    "seed",
    "l2_error",
    "w2sq",
    "runtime_ms",
    "cg_iters_mean",
    "acceptance_rate",
    "error",
]


def _result_rows():
    rows = []
    for method, base in (("norming", 0.4), ("nngp", 0.6)):
        for n in (33, 65, 129):
            for seed in (0, 1):
                rows.append(
                    {
                        "method": method,
                        "n": n,
                        "seed": seed,
                        "l2_error": base / n + 0.001 * seed,
                        "w2sq": base * n,
                        "runtime_ms": 2.0 * n,
                        "cg_iters_mean": float(n),
                        "acceptance_rate": "nan",
                        "error": "",
                    }
                )
    return rows


def _write_results(path, rows=None, columns=None):
    rows = _result_rows() if rows is None else rows
    columns = _RESULT_COLUMNS if columns is None else columns
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=columns, extrasaction="ignore")
        writer.writeheader()
        writer.writerows(rows)


def _write_summary(path, n=9):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["node_index", "x1", "post_mean", "q025", "q975"])
        for i in range(n):
            x = i / (n - 1)
            writer.writerow([i, x, x**2, x**2 - 0.1, x**2 + 0.1])


def _write_truth(path, n=9):
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(["x1", "f0"])
        for i in range(n):
            x = i / (n - 1)
            writer.writerow([x, x**2 + 0.02])


def test_method_series_groups_and_averages():
    series = method_series(
        [dict(row, **{k: str(v) for k, v in row.items()}) for row in _result_rows()],
        "l2_error",
    )
    assert list(series) == ["norming", "nngp"]
    ns, values = series["norming"]
    assert ns == [33, 65, 129]
    assert len(values) == 3
    assert values[0] == pytest.approx(0.4 / 33 + 0.0005)


def test_method_series_skips_failed_and_nonfinite_rows():
    rows = [
        {"method": "a", "n": "9", "seed": "0", "v": "1.0", "error": ""},
        {"method": "a", "n": "9", "seed": "1", "v": "9.0", "error": "boom"},
        {"method": "a", "n": "17", "seed": "0", "v": "nan", "error": ""},
    ]
    series = method_series(rows, "v")
    assert series == {"a": ([9], [1.0])}


@pytest.mark.parametrize("kind", ["error_curve", "w2_curve", "runtime_curve"])
def test_each_curve_kind_renders_both_formats(tmp_path, kind):
    results = tmp_path / "results.csv"
    _write_results(results)
    spec = FigureSpec(
        kind=kind, input=results, output=tmp_path / "fig", logx=True, logy=True
    )
    written = render(spec)
    assert [p.suffix for p in written] == [".png", ".svg"]
    for path in written:
        assert path.exists() and path.stat().st_size > 0


def test_curve_legend_names_methods(tmp_path):
    results = tmp_path / "results.csv"
    _write_results(results)
    spec = FigureSpec(kind="error_curve", input=results, output=tmp_path / "fig")
    _, svg = render(spec)
    text = svg.read_text()
    assert "norming" in text
    assert "nngp" in text


def test_posterior_band_with_truth(tmp_path):
    summary = tmp_path / "summary.csv"
    truth = tmp_path / "truth.csv"
    _write_summary(summary)
    _write_truth(truth)
    spec = FigureSpec(
        kind="posterior_band", input=summary, output=tmp_path / "band", truth=truth
    )
    written = render(spec)
    assert all(p.exists() for p in written)
    text = written[1].read_text()
    assert "truth" in text
    assert "95% band" in text


def test_posterior_band_without_truth(tmp_path):
    summary = tmp_path / "summary.csv"
    _write_summary(summary)
    spec = FigureSpec(kind="posterior_band", input=summary, output=tmp_path / "band")
    assert len(render(spec)) == 2


def test_missing_value_column_raises(tmp_path):
    results = tmp_path / "results.csv"
    columns = [c for c in _RESULT_COLUMNS if c != "l2_error"]
    _write_results(results, columns=columns)
    spec = FigureSpec(kind="error_curve", input=results, output=tmp_path / "fig")
    with pytest.raises(SchemaMismatch):
        render(spec)


def test_missing_truth_column_raises(tmp_path):
    summary = tmp_path / "summary.csv"
    _write_summary(summary)
    bad_truth = tmp_path / "truth.csv"
    with open(bad_truth, "w", newline="") as handle:
        csv.writer(handle).writerows([["x1", "value"], [0.0, 1.0]])
    spec = FigureSpec(
        kind="posterior_band",
        input=summary,
        output=tmp_path / "band",
        truth=bad_truth,
    )
    with pytest.raises(SchemaMismatch):
        render(spec)


def test_unknown_kind_rejected(tmp_path):
    with pytest.raises(ValueError):
        FigureSpec(kind="pie", input=tmp_path / "a", output=tmp_path / "b")


def test_rendering_is_deterministic(tmp_path):
    results = tmp_path / "results.csv"
    _write_results(results)
    spec_a = FigureSpec(kind="w2_curve", input=results, output=tmp_path / "a" / "fig")
    spec_b = FigureSpec(kind="w2_curve", input=results, output=tmp_path / "b" / "fig")
    png_a, svg_a = render(spec_a)
    png_b, svg_b = render(spec_b)
    assert png_a.read_bytes() == png_b.read_bytes()
    assert svg_a.read_text() == svg_b.read_text()


def test_load_spec_resolves_relative_paths(tmp_path):
    _write_results(tmp_path / "results.csv")
    spec_file = tmp_path / "fig.toml"
    spec_file.write_text(
        '[figure]\nkind = "error_curve"\ninput = "results.csv"\n'
        'output = "out/fig"\nlogx = true\nlogy = true\n'
    )
    spec = load_spec(spec_file)
    assert spec.input == tmp_path / "results.csv"
    assert spec.output == tmp_path / "out" / "fig"
    assert spec.logx and spec.logy


def test_load_spec_rejects_unknown_keys(tmp_path):
    spec_file = tmp_path / "fig.toml"
    spec_file.write_text(
        '[figure]\nkind = "error_curve"\ninput = "r.csv"\n'
        'output = "fig"\ncolor = "red"\n'
    )
    with pytest.raises(ValueError):
        load_spec(spec_file)


def test_main_renders_from_spec(tmp_path, capsys):
    _write_results(tmp_path / "results.csv")
    spec_file = tmp_path / "fig.toml"
    spec_file.write_text(
        '[figure]\nkind = "runtime_curve"\ninput = "results.csv"\noutput = "fig"\n'
    )
    assert main(["--spec", str(spec_file)]) == 0
    out = capsys.readouterr().out
    assert "fig.png" in out and "fig.svg" in out
    assert (tmp_path / "fig.png").exists()
    assert (tmp_path / "fig.svg").exists()


def test_main_bad_kind_is_config_error(tmp_path, capsys):
    spec_file = tmp_path / "fig.toml"
    spec_file.write_text(
        '[figure]\nkind = "pie"\ninput = "r.csv"\noutput = "fig"\n'
    )
    assert main(["--spec", str(spec_file)]) == 2
    assert "config error" in capsys.readouterr().err


def test_main_missing_input_is_config_error(tmp_path, capsys):
    spec_file = tmp_path / "fig.toml"
    spec_file.write_text(
        '[figure]\nkind = "error_curve"\ninput = "nope.csv"\noutput = "fig"\n'
    )
    assert main(["--spec", str(spec_file)]) == 2
    assert "config error" in capsys.readouterr().err
