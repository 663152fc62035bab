"""Report rendering: JSON, aligned text tables, and matplotlib figures.

The text table mirrors the evaluation table column order (Acc, BS, Sim,
Fl, J, BL); values are rounded half-up to two decimals here and nowhere
else. Figures are rendered to files with the Agg backend so the report
path works headless.
"""

from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .metrics import OVERALL, REPORT_COLUMNS, PlatformReport, round_percent

_HEADERS = {"acc": "Acc", "bertscore": "BS", "sim": "Sim",
            "fluency": "Fl", "joint": "J", "bleu": "BL"}


def render_table(rows: list[PlatformReport], overall: PlatformReport | None = None) -> str:
    all_rows = list(rows) + ([overall] if overall else [])
    name_w = max(8, max(len(r.platform) for r in all_rows))
    header = "platform".ljust(name_w) + "".join(
        _HEADERS[c].rjust(9) for c in REPORT_COLUMNS) + "n".rjust(7)
    lines = [header, "-" * len(header)]
    for r in all_rows:
        cells = "".join(f"{round_percent(getattr(r, c)):9.2f}" for c in REPORT_COLUMNS)
        lines.append(r.platform.ljust(name_w) + cells + f"{r.n:7d}")
    return "\n".join(lines) + "\n"


def report_to_json(rows: list[PlatformReport], overall: PlatformReport | None = None,
                   extra: dict | None = None) -> dict:
    doc = {"platforms": [_rounded(r) for r in rows]}
    if overall:
        doc["overall"] = _rounded(overall)
    if extra:
        doc.update(extra)
    return doc


def _rounded(r: PlatformReport) -> dict:
    d = r.to_json()
    for c in REPORT_COLUMNS:
        d[c] = round_percent(d[c])
    return d


def render_metrics_figure(rows: list[PlatformReport], path,
                          overall: PlatformReport | None = None) -> Path:
    """Grouped bars, one cluster per platform, one bar per metric column."""
    all_rows = list(rows) + ([overall] if overall else [])
    platforms = [r.platform for r in all_rows]
    x = range(len(all_rows))
    width = 0.8 / len(REPORT_COLUMNS)

    fig, ax = plt.subplots(figsize=(max(6.0, 1.4 * len(all_rows)), 4.0))
    for i, col in enumerate(REPORT_COLUMNS):
        offs = [xi + (i - (len(REPORT_COLUMNS) - 1) / 2) * width for xi in x]
        ax.bar(offs, [getattr(r, col) for r in all_rows], width, label=_HEADERS[col])
    ax.set_xticks(list(x))
    ax.set_xticklabels(platforms, rotation=30, ha="right")
    ax.set_ylabel("percent / score")
    ax.set_ylim(0, 105)
    ax.legend(ncol=len(REPORT_COLUMNS), fontsize=8)
    ax.set_title("detoxification metrics by platform")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_filter_figure(stats_json: dict, path) -> Path:
    """Original vs filtered counts per platform."""
    platforms = sorted(stats_json["platforms"])
    original = [stats_json["platforms"][p]["original"] for p in platforms]
    filtered = [stats_json["platforms"][p]["filtered"] for p in platforms]
    x = range(len(platforms))

    fig, ax = plt.subplots(figsize=(max(6.0, 1.2 * len(platforms)), 4.0))
    ax.bar([xi - 0.2 for xi in x], original, 0.4, label="original")
    ax.bar([xi + 0.2 for xi in x], filtered, 0.4, label="filtered")
    ax.set_xticks(list(x))
    ax.set_xticklabels(platforms, rotation=30, ha="right")
    ax.set_ylabel("pairs")
    ax.legend()
    ax.set_title("ensemble filtration by platform")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def render_roundtrip_figure(report_rows: list[dict], path) -> Path:
    """Bars for the four round-trip columns, one cluster per language."""
    cols = ["Toxicity", "Non-toxicity", "Source Sim", "Target Sim"]
    langs = [r["Language"] for r in report_rows]
    x = range(len(report_rows))
    width = 0.8 / len(cols)

    fig, ax = plt.subplots(figsize=(max(6.0, 1.4 * len(report_rows)), 4.0))
    for i, col in enumerate(cols):
        offs = [xi + (i - (len(cols) - 1) / 2) * width for xi in x]
        ax.bar(offs, [r[col] for r in report_rows], width, label=col)
    ax.set_xticks(list(x))
    ax.set_xticklabels(langs, rotation=30, ha="right")
    ax.set_ylabel("percent")
    ax.set_ylim(0, 105)
    ax.legend(fontsize=8)
    ax.set_title("round-trip toxicity retention and similarity")
    fig.tight_layout()
    path = Path(path)
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return path


def write_report_files(rows: list[PlatformReport], overall, out_dir, basename="report",
                       extra: dict | None = None, figure: bool = True) -> dict:
    """Write <basename>.json, .txt, and .png; returns the paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {}
    json_path = out_dir / f"{basename}.json"
    with open(json_path, "w", encoding="utf-8") as f:
        json.dump(report_to_json(rows, overall, extra), f, indent=2, ensure_ascii=False)
        f.write("\n")
    paths["json"] = json_path
    txt_path = out_dir / f"{basename}.txt"
    txt_path.write_text(render_table(rows, overall), encoding="utf-8")
    paths["txt"] = txt_path
    if figure:
        paths["png"] = render_metrics_figure(rows, out_dir / f"{basename}.png", overall)
    return paths
