"""Report rendering: markdown, JSON, CSV, and a latency chart.

Both harness subcommands drop four artifacts into the output directory: a
human-readable markdown table, machine-readable JSON, delimited CSV, and a
log-scale latency bar chart rendered with matplotlib.
"""

from __future__ import annotations

import csv
import json
import io
from pathlib import Path

from .micro import MicroReport
from .tasks import EvalReport


def eval_report_dict(report: EvalReport) -> dict:
    return {
        "rows": [
            {
                "name": r.name,
                "repetitions": r.repetitions,
                "successes": r.successes,
                "tool_calls": r.tool_calls,
                "tools_expected": r.tools_expected,
                "mean_ms": round(r.mean_ms, 3),
                "p50_ms": round(r.p50_ms, 3),
            }
            for r in report.rows
        ],
        "total_runs": report.total_runs,
        "total_successes": report.total_successes,
        "hooks_total": report.hooks_total,
        "wall_time_s": round(report.wall_time_s, 3),
        "wire_tool_kinds": sorted(report.wire_tool_kinds),
    }


def micro_report_dict(report: MicroReport) -> dict:
    return {
        "rows": [
            {
                "name": r.name,
                "iterations": r.iterations,
                "mean_ms": round(r.mean_ms, 6),
                "p50_ms": round(r.p50_ms, 6),
            }
            for r in report.rows
        ]
    }


def _markdown_table(headers: list[str], rows: list[list[str]]) -> str:
    lines = ["| " + " | ".join(headers) + " |", "|" + "|".join("---" for _ in headers) + "|"]
    lines.extend("| " + " | ".join(row) + " |" for row in rows)
    return "\n".join(lines) + "\n"


def eval_markdown(report: EvalReport) -> str:
    rows = [
        [
            r.name,
            str(r.tool_calls),
            f"{100.0 * r.successes / max(r.repetitions, 1):.0f}%",
            f"{r.mean_ms:.2f}",
            f"{r.p50_ms:.2f}",
        ]
        for r in report.rows
    ]
    header = (
        f"# End-to-end task evaluation\n\n"
        f"{report.total_successes}/{report.total_runs} runs passed, "
        f"wall time {report.wall_time_s:.1f}s\n\n"
    )
    return header + _markdown_table(["Task", "Tools", "Success", "Mean (ms)", "P50 (ms)"], rows)


def micro_markdown(report: MicroReport) -> str:
    rows = [[r.name, str(r.iterations), f"{r.mean_ms:.4f}", f"{r.p50_ms:.4f}"] for r in report.rows]
    return "# Micro-benchmarks\n\n" + _markdown_table(
        ["Scenario", "Iterations", "Mean (ms)", "P50 (ms)"], rows
    )


def _csv_text(headers: list[str], rows: list[list]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer)
    writer.writerow(headers)
    writer.writerows(rows)
    return buffer.getvalue()


def _latency_figure(names: list[str], means: list[float], title: str, out_path: Path) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8, 0.5 * len(names) + 1.5))
    positions = range(len(names))
    ax.barh(positions, [max(m, 1e-6) for m in means], color="#3a7ca5")
    ax.set_yticks(list(positions))
    ax.set_yticklabels(names, fontsize=8)
    ax.set_xscale("log")
    ax.set_xlabel("mean latency (ms, log scale)")
    ax.set_title(title)
    ax.invert_yaxis()
    fig.tight_layout()
    fig.savefig(out_path, dpi=120)
    plt.close(fig)


def write_reports(report: EvalReport | MicroReport, out_dir: Path, basename: str) -> list[Path]:
    """Write md/json/csv/png artifacts; returns the paths written."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    if isinstance(report, EvalReport):
        payload = eval_report_dict(report)
        markdown = eval_markdown(report)
        headers = ["task", "tools", "successes", "repetitions", "mean_ms", "p50_ms"]
        csv_rows = [
            [r.name, r.tool_calls, r.successes, r.repetitions, f"{r.mean_ms:.3f}", f"{r.p50_ms:.3f}"]
            for r in report.rows
        ]
        names = [r.name for r in report.rows]
        means = [r.mean_ms for r in report.rows]
        title = "End-to-end task latency"
    else:
        payload = micro_report_dict(report)
        markdown = micro_markdown(report)
        headers = ["scenario", "iterations", "mean_ms", "p50_ms"]
        csv_rows = [
            [r.name, r.iterations, f"{r.mean_ms:.6f}", f"{r.p50_ms:.6f}"] for r in report.rows
        ]
        names = [r.name for r in report.rows]
        means = [r.mean_ms for r in report.rows]
        title = "Subsystem micro-benchmark latency"

    md_path = out_dir / f"{basename}.md"
    md_path.write_text(markdown)
    written.append(md_path)
    json_path = out_dir / f"{basename}.json"
    json_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
    written.append(json_path)
    csv_path = out_dir / f"{basename}.csv"
    csv_path.write_text(_csv_text(headers, csv_rows))
    written.append(csv_path)
    png_path = out_dir / f"{basename}.png"
    _latency_figure(names, means, title, png_path)
    written.append(png_path)
    return written
