"""Report rendering: delimited files, human-readable tables, and figures.

Every report lands as JSON plus CSV tables; the figure renderer writes
PNGs next to them (iteration-gain curve, error-type bars before/after
correction, sweep curves). Matplotlib is imported lazily with the Agg
backend so headless runs and non-plotting commands stay light.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path


def format_table(headers, rows) -> str:
    """Fixed-width text table; floats rendered with 4 decimals."""
    def fmt(value):
        if isinstance(value, float):
            return f"{value:.4f}"
        return str(value)

    cells = [[fmt(v) for v in row] for row in rows]
    widths = [
        max(len(headers[i]), *(len(row[i]) for row in cells)) if cells else len(headers[i])
        for i in range(len(headers))
    ]
    lines = [
        "  ".join(h.ljust(widths[i]) for i, h in enumerate(headers)),
        "  ".join("-" * w for w in widths),
    ]
    lines += ["  ".join(row[i].ljust(widths[i]) for i in range(len(headers)))
              for row in cells]
    return "\n".join(lines)


def _write_csv(path, headers, rows) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(headers)
        writer.writerows(rows)


def _figure_dir(out_dir: Path) -> Path:
    fig_dir = out_dir / "figures"
    fig_dir.mkdir(parents=True, exist_ok=True)
    return fig_dir


def _pyplot():
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt
    return plt


def write_evaluation_report(report, out_dir, figures: bool = True) -> list[Path]:
    """Write report.json, CSV tables, summary.txt, and figures. Returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    report_path = out_dir / "report.json"
    report_path.write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    written.append(report_path)

    gains_path = out_dir / "iteration_gains.csv"
    _write_csv(gains_path, ["budget", "ex"],
               [(b, ex) for b, ex in enumerate(report.iteration_gains)])
    written.append(gains_path)

    dist_path = out_dir / "error_distribution.csv"
    _write_csv(dist_path, ["category", "before", "after"],
               [(cat, before, after)
                for cat, (before, after) in sorted(report.error_distribution.items())])
    written.append(dist_path)

    diff_path = out_dir / "ex_by_difficulty.csv"
    _write_csv(diff_path, ["difficulty", "ex"],
               sorted(report.ex_by_difficulty.items()))
    written.append(diff_path)

    summary_lines = [
        f"questions scored: {report.n_questions}",
        f"gold defects excluded: {report.n_gold_defects}",
        f"execution accuracy: {report.ex_overall:.4f}",
        "",
        "EX by difficulty:",
        format_table(["difficulty", "ex"], sorted(report.ex_by_difficulty.items())),
        "",
        "EX by correction budget:",
        format_table(["budget", "ex"],
                     [(b, ex) for b, ex in enumerate(report.iteration_gains)]),
        "",
        "execution errors before/after correction:",
        format_table(["category", "before", "after"],
                     [(cat, before, after)
                      for cat, (before, after) in sorted(report.error_distribution.items())]),
    ]
    if report.retrieval_metrics is not None:
        m = report.retrieval_metrics
        summary_lines += [
            "",
            "retrieval quality:",
            format_table(["tpr", "fpr", "slr", "macro_tpr", "macro_fpr"],
                         [(m.tpr, m.fpr, m.slr, m.macro_tpr, m.macro_fpr)]),
        ]
    summary_path = out_dir / "summary.txt"
    summary_path.write_text("\n".join(summary_lines) + "\n", encoding="utf-8")
    written.append(summary_path)

    if figures:
        written += render_evaluation_figures(report, out_dir)
    return written


def render_evaluation_figures(report, out_dir) -> list[Path]:
    plt = _pyplot()
    fig_dir = _figure_dir(Path(out_dir))
    written = []

    fig, ax = plt.subplots(figsize=(5, 3.2))
    budgets = list(range(len(report.iteration_gains)))
    ax.plot(budgets, report.iteration_gains, marker="o")
    ax.set_xlabel("correction budget (iterations)")
    ax.set_ylabel("execution accuracy")
    ax.set_xticks(budgets)
    ax.set_ylim(0, 1.05)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    path = fig_dir / "iteration_gains.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)

    categories = sorted(report.error_distribution)
    before = [report.error_distribution[c][0] for c in categories]
    after = [report.error_distribution[c][1] for c in categories]
    x = range(len(categories))
    fig, ax = plt.subplots(figsize=(5.6, 3.2))
    width = 0.38
    ax.bar([i - width / 2 for i in x], before, width, label="before correction")
    ax.bar([i + width / 2 for i in x], after, width, label="after correction")
    ax.set_xticks(list(x))
    ax.set_xticklabels(categories, rotation=15)
    ax.set_ylabel("failed questions")
    ax.legend()
    fig.tight_layout()
    path = fig_dir / "error_distribution.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    written.append(path)
    return written


_SWEEP_HEADERS = ["corpus", "head", "margin", "neg_limit", "k", "tpr", "fpr", "slr"]


def _sweep_tuples(rows):
    return [
        (r.corpus_name, r.head_label,
         "" if r.margin is None else r.margin,
         "" if r.neg_limit is None else r.neg_limit,
         r.k, r.tpr, r.fpr, r.slr)
        for r in rows
    ]


def write_sweep_report(named_sweeps: dict, out_dir, figures: bool = True) -> list[Path]:
    """Write one CSV per sweep plus a combined JSON and sweep figures.

    named_sweeps: mapping sweep name (e.g. "k", "margin", "neg_limit")
    to a list of SweepRow.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    combined = {}
    for name, rows in named_sweeps.items():
        path = out_dir / f"sweep_{name}.csv"
        _write_csv(path, _SWEEP_HEADERS, _sweep_tuples(rows))
        written.append(path)
        combined[name] = [r.to_dict() for r in rows]
    json_path = out_dir / "sweeps.json"
    json_path.write_text(json.dumps(combined, indent=2, sort_keys=True) + "\n",
                         encoding="utf-8")
    written.append(json_path)
    if figures and "k" in named_sweeps:
        written += render_k_sweep_figure(named_sweeps["k"], out_dir)
    return written


def render_k_sweep_figure(rows, out_dir) -> list[Path]:
    plt = _pyplot()
    fig_dir = _figure_dir(Path(out_dir))
    series: dict[tuple[str, str], list] = {}
    for row in rows:
        series.setdefault((row.corpus_name, row.head_label), []).append(row)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.2))
    for (corpus_name, head_label), group in sorted(series.items()):
        group = sorted(group, key=lambda r: r.k)
        ks = [r.k for r in group]
        label = f"{corpus_name}/{head_label}"
        axes[0].plot(ks, [r.tpr for r in group], marker="o", label=label)
        axes[1].plot(ks, [r.slr for r in group], marker="o", label=label)
    for ax, title in zip(axes, ["TPR vs k", "SLR vs k"]):
        ax.set_xlabel("k")
        ax.set_title(title)
        ax.set_ylim(0, 1.05)
        ax.grid(True, alpha=0.3)
    axes[0].set_ylabel("rate")
    axes[1].legend(fontsize=7)
    fig.tight_layout()
    path = fig_dir / "sweep_k.png"
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return [path]


def write_traces(traces, path, row_cap: int | None = None) -> int:
    """One JSON record per line; the archive replayed by the report path."""
    n = 0
    with open(path, "w", encoding="utf-8") as fh:
        for trace in traces:
            fh.write(json.dumps(trace.to_dict(row_cap=row_cap), sort_keys=True) + "\n")
            n += 1
    return n


def write_ablation_report(rows, out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "ablation.csv"
    _write_csv(csv_path, ["name", "retriever", "tuned_generator", "correction", "ex", "n"],
               [(r.name, r.retriever, r.tuned_generator, r.correction, r.ex, r.n_questions)
                for r in rows])
    json_path = out_dir / "ablation.json"
    json_path.write_text(
        json.dumps([r.to_dict() for r in rows], indent=2, sort_keys=True) + "\n",
        encoding="utf-8")
    return [csv_path, json_path]
