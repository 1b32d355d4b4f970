"""CSV/JSON result files and static SVG figures.

CSV layouts (one header line, comma separated, floats with 6 decimals):

``results.csv``  combo,pair,pipeline,model,accuracy,f1,precision,n_test,chance,class_dis
``folds.csv``    combo,pair,pipeline,model,fold,accuracy,f1,precision,n_test
``ablation.csv`` combo,n_channels,pair,pipeline,model,accuracy,drop,class_dis
``stats.csv``    group_a,group_b,combo,pair,model,n_a,n_b,wilcoxon_p,bootstrap_reps,
                 subset_size,fraction_significant,median_p
"""
from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

import numpy as np
from matplotlib import rcParams
from matplotlib.backends.backend_svg import FigureCanvasSVG
from matplotlib.collections import PatchCollection
from matplotlib.figure import Figure
from matplotlib.patches import Patch, Rectangle

from .evaluation import pair_name

__all__ = [
    "RESULT_FIELDS", "FOLD_FIELDS", "ABLATION_FIELDS", "STATS_FIELDS", "fmt", "results_rows",
    "fold_rows", "ablation_rows", "csv_text", "read_csv", "summary_json", "accuracy_svg",
    "ablation_svg", "write_text",
]

RESULT_FIELDS = ("combo", "pair", "pipeline", "model", "accuracy", "f1", "precision", "n_test",
                 "chance", "class_dis")
FOLD_FIELDS = ("combo", "pair", "pipeline", "model", "fold", "accuracy", "f1", "precision", "n_test")
ABLATION_FIELDS = ("combo", "n_channels", "pair", "pipeline", "model", "accuracy", "drop", "class_dis")
STATS_FIELDS = ("group_a", "group_b", "combo", "pair", "model", "n_a", "n_b", "wilcoxon_p",
                "bootstrap_reps", "subset_size", "fraction_significant", "median_p")

_PAIR_COLORS = ("#4477aa", "#66ccee", "#228833", "#ccbb44", "#ee6677", "#aa3377")


def fmt(x) -> str:
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        # +0.0 avoids "-0.000000" for tiny negative drops
        return f"{float(x) + 0.0:.6f}"
    return str(x)


def results_rows(grid_rows) -> list:
    out = []
    for r in grid_rows:
        rep = r["report"]
        out.append({"combo": r["combo"], "pair": pair_name(r["pair"]), "pipeline": rep.pipeline,
                    "model": rep.model, "accuracy": rep.mean_accuracy, "f1": rep.mean_f1,
                    "precision": rep.mean_precision, "n_test": rep.n_test_total,
                    "chance": rep.chance, "class_dis": r["class_dis"]})
    return out


def fold_rows(grid_rows) -> list:
    out = []
    for r in grid_rows:
        rep = r["report"]
        for i, (acc, f1, prec, n) in enumerate(zip(rep.accuracy, rep.f1, rep.precision, rep.n_test)):
            out.append({"combo": r["combo"], "pair": pair_name(r["pair"]), "pipeline": rep.pipeline,
                        "model": rep.model, "fold": i, "accuracy": acc, "f1": f1,
                        "precision": prec, "n_test": n})
    return out


def ablation_rows(table) -> list:
    return [{"combo": r["combo"], "n_channels": r["n_channels"], "pair": pair_name(r["pair"]),
             "pipeline": r["pipeline"], "model": r["model"], "accuracy": r["accuracy"],
             "drop": r["drop"], "class_dis": r["class_dis"]} for r in table.rows]


def csv_text(rows, fields) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(fields)
    for r in rows:
        w.writerow([fmt(r[f]) for f in fields])
    return buf.getvalue()


def read_csv(path) -> list:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def summary_json(grid_rows, config: dict) -> str:
    """Mean metrics per (combo, pair, model) plus the run configuration."""
    cells = []
    for r in results_rows(grid_rows):
        cells.append({k: (round(v, 6) if isinstance(v, float) and math.isfinite(v) else
                          (None if isinstance(v, float) else v)) for k, v in r.items()})
    return json.dumps({"config": config, "results": cells}, indent=1, sort_keys=True) + "\n"


def write_text(path, text: str) -> None:
    Path(path).write_text(text)


def _svg_bytes(fig: Figure) -> bytes:
    salt = rcParams["svg.hashsalt"]
    rcParams["svg.hashsalt"] = "graspdecode"
    try:
        buf = io.BytesIO()
        FigureCanvasSVG(fig).print_svg(buf, metadata={"Date": None})
    finally:
        rcParams["svg.hashsalt"] = salt
    return buf.getvalue()


def _grouped_bars(ax, groups, series, values, group_gid):
    """One PatchCollection per group so each group is a single ``<g id=...>`` element."""
    width = 0.8 / max(len(series), 1)
    for gi, g in enumerate(groups):
        rects, colors = [], []
        for si, _ in enumerate(series):
            v = values.get((g, si))
            if v is None:
                continue
            rects.append(Rectangle((gi - 0.4 + si * width, 0.0), width, v))
            colors.append(_PAIR_COLORS[si % len(_PAIR_COLORS)])
        coll = PatchCollection(rects, facecolors=colors, edgecolors="none")
        coll.set_gid(group_gid(g))
        ax.add_collection(coll)
    ax.set_xlim(-0.6, len(groups) - 0.4)
    ax.set_ylim(0.0, 1.0)
    ax.set_xticks(range(len(groups)))
    ax.legend(handles=[Patch(color=_PAIR_COLORS[i % len(_PAIR_COLORS)], label=s) for i, s in enumerate(series)],
              fontsize=7, ncol=3, loc="lower right")


def ablation_svg(table) -> bytes:
    """Mean accuracy (over models) per combination, one bar per pair."""
    combos = sorted({r["combo"] for r in table.rows})
    pairs = []
    for r in table.rows:
        if r["pair"] not in pairs:
            pairs.append(r["pair"])
    values = {}
    for c in combos:
        for pi, p in enumerate(pairs):
            accs = [r["accuracy"] for r in table.rows if r["combo"] == c and r["pair"] == p]
            values[(c, pi)] = float(np.mean(accs))
    fig = Figure(figsize=(8, 4))
    ax = fig.add_subplot()
    _grouped_bars(ax, combos, [pair_name(p) for p in pairs], values, lambda c: f"combo-{c}")
    ax.set_xticklabels([str(c) for c in combos])
    ax.set_xlabel("electrode combination")
    ax.set_ylabel("mean accuracy")
    fig.tight_layout()
    return _svg_bytes(fig)


def accuracy_svg(grid_rows) -> bytes:
    """Mean accuracy per model, one bar per pair (first combination only)."""
    rows = results_rows(grid_rows)
    if not rows:
        raise ValueError("no results to plot")
    combo = rows[0]["combo"]
    rows = [r for r in rows if r["combo"] == combo]
    models, pairs = [], []
    for r in rows:
        if r["model"] not in models:
            models.append(r["model"])
        if r["pair"] not in pairs:
            pairs.append(r["pair"])
    values = {(r["model"], pairs.index(r["pair"])): r["accuracy"] for r in rows}
    chance = max(r["chance"] for r in rows)
    fig = Figure(figsize=(8, 4))
    ax = fig.add_subplot()
    _grouped_bars(ax, models, pairs, values, lambda m: f"model-{m}")
    ax.axhline(chance, color="0.3", lw=0.8, ls="--")
    ax.set_xticklabels(models, fontsize=8)
    ax.set_ylabel("mean accuracy")
    fig.tight_layout()
    return _svg_bytes(fig)
