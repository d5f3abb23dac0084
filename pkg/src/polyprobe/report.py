"""Human-readable outputs: statistics tables, keep/strip comparison tables,
and per-language grouped bar charts (SVG written directly, CSV alongside).

Every emitter is a pure function of its inputs; outputs carry no timestamps
so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

from .builder import PackStats
from .errors import InputError
from .metrics import MetricsReport

METRIC_NAMES = ("consistency", "accuracy", "consistency_accuracy")
POLICIES = ("keep", "strip")

STATS_COLUMNS = (
    ("Language", "language"),
    ("Average #relations", "relation_count"),
    ("Average total #patterns", "total_patterns"),
    ("Min. patterns in a relation", "min_patterns"),
    ("Max. patterns in a relation", "max_patterns"),
    ("Average patterns in a relation", "avg_patterns"),
    ("Average string distance", "avg_string_distance"),
    ("Total #phrases", "phrase_count"),
)

_CSV_FIELDS = ("language", "relation_count", "total_patterns", "min_patterns",
               "max_patterns", "avg_patterns", "avg_string_distance", "phrase_count")


def _fmt(value, decimals: int = 2) -> str:
    if value is None:
        return "-"
    if isinstance(value, float):
        return f"{value:.{decimals}f}"
    return str(value)


def _render_table(headers: list[str], rows: list[list[str]]) -> str:
    widths = [max(len(h), *(len(r[i]) for r in rows)) if rows else len(h) for i, h in enumerate(headers)]
    def line(cells):
        return "  ".join(cell.ljust(w) for cell, w in zip(cells, widths)).rstrip()
    sep = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), sep] + [line(r) for r in rows]) + "\n"


def emit_stats_table(stats_list: list[PackStats]) -> str:
    """Text table of per-language pack statistics plus a cross-language mean."""
    if not stats_list:
        raise InputError("no stats records to render")
    headers = [label for label, _ in STATS_COLUMNS]
    rows = []
    for stats in stats_list:
        rows.append([_fmt(getattr(stats, attr)) for _, attr in STATS_COLUMNS])
    if len(stats_list) > 1:
        mean_row = ["mean"]
        for _, attr in STATS_COLUMNS[1:]:
            values = [getattr(s, attr) for s in stats_list if getattr(s, attr) is not None]
            mean_row.append(_fmt(sum(values) / len(values)) if values else "-")
        rows.append(mean_row)
    return _render_table(headers, rows)


def write_stats_csv(stats: PackStats, out_dir: str) -> str:
    """One lossless CSV per language (full-precision floats)."""
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, f"stats_{stats.language}.csv")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(_CSV_FIELDS)
        writer.writerow(["" if (v := getattr(stats, f)) is None else (repr(v) if isinstance(v, float) else v)
                         for f in _CSV_FIELDS])
    return path


def read_stats_csv(path: str) -> PackStats:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    if len(rows) != 1:
        raise InputError(f"{path}: expected exactly one stats row")
    row = rows[0]
    def num(field, caster):
        return caster(row[field]) if row[field] != "" else None
    return PackStats(
        language=row["language"],
        relation_count=int(row["relation_count"]),
        total_patterns=int(row["total_patterns"]),
        min_patterns=num("min_patterns", int),
        max_patterns=num("max_patterns", int),
        avg_patterns=num("avg_patterns", float),
        avg_string_distance=num("avg_string_distance", float),
        phrase_count=int(row["phrase_count"]),
    )


# --- comparison table -----------------------------------------------------

@dataclass(frozen=True)
class ComparisonTable:
    """metric x policy rows against (model, language) columns."""

    columns: tuple[tuple[str, str], ...]            # (model_tag, language)
    rows: tuple[tuple[str, str], ...]               # (metric, policy)
    values: dict[tuple[str, str, str, str], float]  # (metric, policy, model, language)
    provenance: dict[tuple[str, str, str], str]     # (model, language, policy) -> source path


def emit_comparison(reports: list[tuple[MetricsReport, str]]) -> ComparisonTable:
    """Cross-tabulate macro metrics; needs both keep and strip per column."""
    by_key: dict[tuple[str, str, str], tuple[MetricsReport, str]] = {}
    columns: list[tuple[str, str]] = []
    for report, path in reports:
        key = (report.model_tag, report.language, report.policy)
        by_key[key] = (report, path)
        col = (report.model_tag, report.language)
        if col not in columns:
            columns.append(col)

    for model, language in columns:
        for policy in POLICIES:
            if (model, language, policy) not in by_key:
                raise InputError(f"missing_variant: no {policy!r} report for model {model!r} language {language!r}")

    values = {}
    provenance = {}
    rows = tuple((metric, policy) for metric in METRIC_NAMES for policy in POLICIES)
    for model, language in columns:
        for policy in POLICIES:
            report, path = by_key[(model, language, policy)]
            provenance[(model, language, policy)] = path
            for metric in METRIC_NAMES:
                values[(metric, policy, model, language)] = report.macro.get(metric, float("nan"))
    return ComparisonTable(columns=tuple(columns), rows=rows, values=values, provenance=provenance)


def comparison_to_text(table: ComparisonTable) -> str:
    headers = ["metric", "policy"] + [f"{model}:{lang}" for model, lang in table.columns]
    rows = []
    for metric, policy in table.rows:
        cells = [metric, policy]
        for model, lang in table.columns:
            cells.append(_fmt(table.values[(metric, policy, model, lang)]))
        rows.append(cells)
    return _render_table(headers, rows)


def write_comparison_csv(table: ComparisonTable, path: str) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["metric", "policy"] + [f"{model}:{lang}" for model, lang in table.columns])
        for metric, policy in table.rows:
            row = [metric, policy]
            for model, lang in table.columns:
                row.append(repr(table.values[(metric, policy, model, lang)]))
            writer.writerow(row)


# --- per-language bar chart -----------------------------------------------

_PALETTE = ("#4878a8", "#e49444", "#6a9f58", "#b8434e", "#8465a0", "#737373")


def emit_language_chart(reports: list[MetricsReport], metric: str, out_path: str) -> None:
    """Grouped bars per language, ordered by the first model's metric (desc).

    Writes the SVG plus a sibling CSV with the plotted numbers.
    """
    if metric not in METRIC_NAMES:
        raise InputError(f"unknown metric {metric!r}")
    if not reports:
        raise InputError("no reports to chart")

    models: list[str] = []
    values: dict[tuple[str, str], float] = {}
    for report in reports:
        if report.model_tag not in models:
            models.append(report.model_tag)
        key = (report.model_tag, report.language)
        if key in values:
            raise InputError(f"duplicate report for model {key[0]!r} language {key[1]!r}")
        values[key] = report.macro.get(metric, 0.0)

    languages = sorted({lang for _, lang in values})
    first = models[0]
    languages.sort(key=lambda lang: -values.get((first, lang), 0.0))

    bar_w, gap, margin_l, margin_b, margin_t = 22, 26, 56, 46, 30
    plot_h = 260
    group_w = bar_w * len(models)
    width = margin_l + len(languages) * (group_w + gap) + gap
    height = margin_t + plot_h + margin_b

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
    ]
    # y axis, gridlines at 0.0 .. 1.0
    for i in range(6):
        frac = i / 5
        y = margin_t + plot_h - frac * plot_h
        parts.append(f'<line x1="{margin_l}" y1="{y:.1f}" x2="{width - gap}" y2="{y:.1f}" '
                     f'stroke="#dddddd" stroke-width="1"/>')
        parts.append(f'<text x="{margin_l - 6}" y="{y + 4:.1f}" text-anchor="end">{frac:.1f}</text>')
    parts.append(f'<line x1="{margin_l}" y1="{margin_t}" x2="{margin_l}" y2="{margin_t + plot_h}" '
                 f'stroke="#333333" stroke-width="1"/>')

    for gi, lang in enumerate(languages):
        x0 = margin_l + gap + gi * (group_w + gap)
        for mi, model in enumerate(models):
            value = values.get((model, lang))
            if value is None:
                continue
            h = value * plot_h
            x = x0 + mi * bar_w
            y = margin_t + plot_h - h
            color = _PALETTE[mi % len(_PALETTE)]
            parts.append(f'<rect x="{x:.1f}" y="{y:.1f}" width="{bar_w - 2}" height="{h:.1f}" fill="{color}">'
                         f'<title>{model} {lang}: {value:.4f}</title></rect>')
        parts.append(f'<text x="{x0 + group_w / 2:.1f}" y="{margin_t + plot_h + 16}" '
                     f'text-anchor="middle">{lang}</text>')

    for mi, model in enumerate(models):
        lx = margin_l + mi * 170
        ly = height - 14
        parts.append(f'<rect x="{lx}" y="{ly - 10}" width="12" height="12" fill="{_PALETTE[mi % len(_PALETTE)]}"/>')
        parts.append(f'<text x="{lx + 16}" y="{ly}">{model}</text>')
    parts.append("</svg>")

    try:
        with open(out_path, "w", encoding="utf-8") as fh:
            fh.write("\n".join(parts) + "\n")
    except OSError as exc:
        raise InputError(f"io_error: cannot write chart {out_path}: {exc}") from exc

    csv_path = os.path.splitext(out_path)[0] + ".csv"
    with open(csv_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["language", "model", metric])
        for lang in languages:
            for model in models:
                if (model, lang) in values:
                    writer.writerow([lang, model, repr(values[(model, lang)])])
