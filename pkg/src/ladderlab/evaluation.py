"""Accuracy and robustness measurement, rank protocol, epsilon sweep.

The robustness table holds one row per defence model and one column per
evaluation set (clean first, then attacks), with self-attack cells excluded:
a model adversarially trained on attack A reports no value in column A.

Ranks use competition ranking within each column: rank = 1 + number of
strictly better values, so tied cells share the best rank and the next
value skips. Row averages run over that row's valued cells only. This is
the rule that reproduces all four published average-rank columns.
"""

import csv
from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import ConfigurationError, ContractError, DegeneracyError


def accuracy(model, ds: Dataset, batch=256) -> float:
    """Percentage of argmax predictions matching the labels."""
    correct = 0
    for start in range(0, len(ds), batch):
        pred = model.predict(ds.x[start : start + batch])
        correct += int((pred == ds.y[start : start + batch]).sum())
    return 100.0 * correct / len(ds)


@dataclass
class RobustnessTable:
    row_labels: list
    col_labels: list
    values: np.ndarray  # percentages; excluded cells hold nan
    mask: np.ndarray  # True = excluded (self-attack)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        self.mask = np.asarray(self.mask, dtype=bool)
        shape = (len(self.row_labels), len(self.col_labels))
        if self.values.shape != shape or self.mask.shape != shape:
            raise ContractError(f"table arrays must be {shape}")

    def valued(self, i, j):
        return not self.mask[i, j]


@dataclass
class RankReport:
    row_labels: list
    ranks: np.ndarray  # integer ranks, 0 where masked
    average: np.ndarray  # per-row mean rank over valued cells


def average_rank(table: RobustnessTable) -> RankReport:
    """Competition ranks per column (descending), averaged per row."""
    n_rows, n_cols = table.values.shape
    ranks = np.zeros((n_rows, n_cols), dtype=np.int64)
    for j in range(n_cols):
        valued = [i for i in range(n_rows) if not table.mask[i, j]]
        if len(valued) < 2:
            raise DegeneracyError(
                f"column {table.col_labels[j]!r} has {len(valued)} valued cells"
            )
        col = table.values[valued, j]
        if np.isnan(col).any():
            raise ContractError(f"column {table.col_labels[j]!r} has NaN valued cells")
        for i in valued:
            ranks[i, j] = 1 + int((col > table.values[i, j]).sum())
    average = np.array(
        [ranks[i][~table.mask[i]].mean() for i in range(n_rows)], dtype=np.float64
    )
    return RankReport(list(table.row_labels), ranks, average)


def robustness_matrix(models, attacks, clean_ds: Dataset, per_attack_adv_sets) -> RobustnessTable:
    """Accuracy of each defence on clean data and each pre-generated attack set.

    `models` is a list of (name, model, trained_against) where
    trained_against names the attack used to build that defence (None for
    the vanilla row). Attack sets must be generated beforehand against the
    vanilla model (black-box evaluation).
    """
    missing = [a for a in attacks if a not in per_attack_adv_sets]
    if missing:
        raise ConfigurationError(f"missing adversarial sets for: {missing}")
    col_labels = ["clean"] + list(attacks)
    n_rows, n_cols = len(models), len(col_labels)
    values = np.full((n_rows, n_cols), np.nan)
    mask = np.zeros((n_rows, n_cols), dtype=bool)
    for i, (name, model, trained_against) in enumerate(models):
        values[i, 0] = accuracy(model, clean_ds)
        for j, attack in enumerate(attacks, start=1):
            if trained_against is not None and attack == trained_against:
                mask[i, j] = True
                continue
            values[i, j] = accuracy(model, per_attack_adv_sets[attack])
    return RobustnessTable([m[0] for m in models], col_labels, values, mask)


def table_to_csv(table: RobustnessTable, path):
    """Header row, then one mask row naming excluded defences per column,
    then one row per defence with empty cells where excluded."""
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["defence"] + list(table.col_labels))
        mask_row = ["#mask"]
        for j in range(len(table.col_labels)):
            excluded = [table.row_labels[i] for i in range(len(table.row_labels)) if table.mask[i, j]]
            mask_row.append(";".join(excluded))
        writer.writerow(mask_row)
        for i, label in enumerate(table.row_labels):
            row = [label]
            for j in range(len(table.col_labels)):
                row.append("" if table.mask[i, j] else repr(float(table.values[i, j])))
            writer.writerow(row)


def rank_to_csv(report: RankReport, table: RobustnessTable, path):
    with open(path, "w", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["defence"] + list(table.col_labels) + ["avg_rank"])
        for i, label in enumerate(report.row_labels):
            cells = [
                "" if table.mask[i, j] else int(report.ranks[i, j])
                for j in range(len(table.col_labels))
            ]
            writer.writerow([label] + cells + [f"{report.average[i]:.2f}"])


def epsilon_sweep(pipeline, eps_list, budget, out_csv=None, out_svg=None):
    """Re-run adversarial training at each single epsilon; measure both sides
    of the trade-off. Returns rows (epsilon, clean_accuracy, robustness)."""
    eps_list = [float(e) for e in eps_list]
    if not eps_list or any(a >= b for a, b in zip(eps_list, eps_list[1:])):
        raise ContractError(f"eps_list must be non-empty ascending, got {eps_list}")
    rows = []
    for eps in eps_list:
        clean_acc, robust_acc = pipeline.train_at_epsilon(eps, budget)
        rows.append((eps, clean_acc, robust_acc))
    if out_csv:
        with open(out_csv, "w", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["epsilon", "clean_accuracy", "robustness"])
            for eps, c, r in rows:
                writer.writerow([repr(eps), repr(c), repr(r)])
    if out_svg:
        svg_line_chart(
            out_svg,
            [r[0] for r in rows],
            {"clean accuracy": [r[1] for r in rows], "robustness": [r[2] for r in rows]},
            title="accuracy vs perturbation size",
            xlabel="epsilon",
            ylabel="accuracy (%)",
        )
    return rows


_SVG_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd")


def svg_line_chart(path, xs, series, title="", xlabel="", ylabel=""):
    """Standalone SVG line chart; no external assets, stable byte output."""
    width, height = 640, 400
    ml, mr, mt, mb = 70, 20, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs = [float(v) for v in xs]
    ys_all = [float(v) for vals in series.values() for v in vals]
    x_lo, x_hi = min(xs), max(xs)
    y_lo, y_hi = min(ys_all), max(ys_all)
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1.0

    def sx(v):
        return ml + pw * (v - x_lo) / (x_hi - x_lo)

    def sy(v):
        return mt + ph * (1.0 - (v - y_lo) / (y_hi - y_lo))

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        '<rect width="100%" height="100%" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="24" text-anchor="middle" font-size="16" '
        f'font-family="sans-serif">{title}</text>',
        f'<line x1="{ml}" y1="{mt + ph}" x2="{ml + pw}" y2="{mt + ph}" stroke="black"/>',
        f'<line x1="{ml}" y1="{mt}" x2="{ml}" y2="{mt + ph}" stroke="black"/>',
        f'<text x="{ml + pw / 2:.1f}" y="{height - 12}" text-anchor="middle" '
        f'font-size="13" font-family="sans-serif">{xlabel}</text>',
        f'<text x="18" y="{mt + ph / 2:.1f}" text-anchor="middle" font-size="13" '
        f'font-family="sans-serif" transform="rotate(-90 18 {mt + ph / 2:.1f})">{ylabel}</text>',
    ]
    for tick, value in (("min", x_lo), ("max", x_hi)):
        parts.append(
            f'<text x="{sx(value):.1f}" y="{mt + ph + 18}" text-anchor="middle" '
            f'font-size="11" font-family="sans-serif">{value:g}</text>'
        )
    for tick, value in (("min", y_lo), ("max", y_hi)):
        parts.append(
            f'<text x="{ml - 6}" y="{sy(value) + 4:.1f}" text-anchor="end" '
            f'font-size="11" font-family="sans-serif">{value:g}</text>'
        )
    for k, (name, vals) in enumerate(series.items()):
        color = _SVG_COLORS[k % len(_SVG_COLORS)]
        points = " ".join(f"{sx(x):.2f},{sy(float(v)):.2f}" for x, v in zip(xs, vals))
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="2" points="{points}"/>')
        parts.append(
            f'<text x="{ml + pw - 6}" y="{mt + 16 + 16 * k}" text-anchor="end" fill="{color}" '
            f'font-size="12" font-family="sans-serif">{name}</text>'
        )
    parts.append("</svg>")
    with open(path, "w", encoding="utf-8") as f:
        f.write("\n".join(parts) + "\n")
