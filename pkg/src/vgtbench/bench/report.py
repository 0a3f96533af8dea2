"""Plots and tables from a results directory (results.csv + summary.json).

Writes, for the aggregate and (with several models) for each model:

- ``repeatability_per_transform.svg``: rate at eps=1.5 per transform, per detector and mode
- ``repeatability_vs_epsilon.svg``: mean rate per eps, per detector and mode
- ``informedness_vs_epsilon.svg``: pooled informedness per eps, per detector
- ``auc.csv`` and ``comparison.csv`` tables
"""
from __future__ import annotations

import csv
import io
import json
import math
from collections import defaultdict
from pathlib import Path

from .svg import PALETTE, line_chart

PER_TRANSFORM_EPS = 1.5


class EmptyResults(ValueError):
    pass


def _safe(name: str) -> str:
    return "".join(c if c.isalnum() or c in "-_." else "_" for c in name)


def _read_rows(path: Path) -> list[dict]:
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


def _colors(detectors):
    return {d: PALETTE[i % len(PALETTE)] for i, d in enumerate(detectors)}


def per_transform_svg(rows, detectors, modes, title) -> str:
    # mean over models of the defined per-scene rate
    acc = defaultdict(list)
    desc = {}
    for r in rows:
        if float(r["epsilon"]) != PER_TRANSFORM_EPS or "undefined_scene" in r["flags"]:
            continue
        t = int(r["transform_index"])
        desc[t] = r["transform_desc"]
        acc[(r["detector"], r["mode"], t)].append(float(r["rate"]))
    col = _colors(detectors)
    series = []
    for d in detectors:
        for m in modes:
            ts = sorted(t for (dd, mm, t) in acc if dd == d and mm == m)
            if not ts:
                continue
            series.append({"label": f"{d} {m}", "xs": ts,
                           "ys": [math.fsum(acc[(d, m, t)]) / len(acc[(d, m, t)]) for t in ts],
                           "color": col[d], "dashed": m == "3D"})
    return line_chart(series, title=title, xlabel="transform index",
                      ylabel=f"repeatability (eps = {PER_TRANSFORM_EPS:g})", ylim=(0.0, 1.0))


def rate_vs_eps_svg(block, eps, detectors, modes, title) -> str:
    col = _colors(detectors)
    series = [{"label": f"{d} {m}", "xs": eps, "ys": block[d]["repeatability"][m]["mean_rate"],
               "color": col[d], "dashed": m == "3D"} for d in detectors for m in modes]
    return line_chart(series, title=title, xlabel="epsilon (px)", ylabel="mean repeatability",
                      ylim=(0.0, 1.0), xticks=eps)


def informedness_svg(block, eps, detectors, title) -> str:
    col = _colors(detectors)
    series = [{"label": d, "xs": eps, "ys": [p["informedness"] for p in block[d]["informedness_pooled"]],
               "color": col[d]} for d in detectors if "informedness_pooled" in block[d]]
    return line_chart(series, title=title, xlabel="epsilon (px)", ylabel="informedness (tpr - fpr)",
                      ylim=(-1.0, 1.0), xticks=eps)


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    wr = csv.writer(buf, lineterminator="\n")
    wr.writerow(header)
    for r in rows:
        wr.writerow([repr(x) if isinstance(x, float) else x for x in r])
    return buf.getvalue()


def auc_table(block, detectors) -> str:
    rows = []
    for d in detectors:
        s = block[d]
        if "auc_pooled" not in s:
            continue
        rows.append([d, s["auc_pooled"], s["auc_mean_of_curves"], s["best_epsilon_pooled"]["epsilon"],
                     s["best_epsilon_pooled"]["informedness"], s["best_epsilon_mean_of_curves"]["epsilon"]])
    return _csv_text(["detector", "auc_pooled", "auc_mean_of_curves", "best_epsilon_pooled",
                      "informedness_at_best", "best_epsilon_mean_of_curves"], rows)


def comparison_table(block, eps, detectors, modes) -> str:
    rows = []
    for d in detectors:
        s = block[d]
        for k, e in enumerate(eps):
            rates = [s["repeatability"][m]["mean_rate"][k] for m in modes]
            if "informedness_pooled" in s:
                p = s["informedness_pooled"][k]
                extra = [p["tpr"], p["fpr"], p["informedness"],
                         s["informedness_mean_of_curves"][k]["informedness"]]
            else:
                extra = ["", "", "", ""]
            rows.append([d, e, *rates, *extra])
    return _csv_text(["detector", "epsilon", *[f"rate_{m}" for m in modes], "tpr_pooled", "fpr_pooled",
                      "informedness_pooled", "informedness_mean_of_curves"], rows)


def _emit(out_plots: Path, out_tables: Path, rows, block, eps, detectors, modes, label) -> list[Path]:
    out_plots.mkdir(parents=True, exist_ok=True)
    out_tables.mkdir(parents=True, exist_ok=True)
    files = {
        out_plots / "repeatability_per_transform.svg":
            per_transform_svg(rows, detectors, modes, f"Repeatability per transform ({label})"),
        out_plots / "repeatability_vs_epsilon.svg":
            rate_vs_eps_svg(block, eps, detectors, modes, f"Repeatability vs epsilon ({label})"),
        out_tables / "comparison.csv": comparison_table(block, eps, detectors, modes),
    }
    if any("informedness_pooled" in block[d] for d in detectors):
        files[out_plots / "informedness_vs_epsilon.svg"] = informedness_svg(
            block, eps, detectors, f"Informedness vs epsilon ({label})")
        files[out_tables / "auc.csv"] = auc_table(block, detectors)
    for path, text in files.items():
        path.write_text(text, encoding="utf-8")
    return sorted(files)


def report(results_dir) -> list[Path]:
    """Write plots/ and tables/ under ``results_dir``; returns the files written."""
    results_dir = Path(results_dir)
    summary_path, csv_path = results_dir / "summary.json", results_dir / "results.csv"
    if not summary_path.is_file() or not csv_path.is_file():
        raise EmptyResults(f"{results_dir}: missing results.csv or summary.json")
    summary = json.loads(summary_path.read_text(encoding="utf-8"))
    rows = _read_rows(csv_path)
    if not rows:
        raise EmptyResults(f"{csv_path}: no result rows")
    cfg = summary["config"]
    eps, detectors, modes = cfg["epsilons"], cfg["detectors"], cfg["modes"]
    written = _emit(results_dir / "plots", results_dir / "tables", rows, summary["aggregate"],
                    eps, detectors, modes, "all models" if len(summary["models"]) > 1
                    else next(iter(summary["models"])))
    if len(summary["models"]) > 1:
        for name, block in summary["models"].items():
            mrows = [r for r in rows if r["model"] == name]
            written += _emit(results_dir / "plots" / _safe(name), results_dir / "tables" / _safe(name),
                             mrows, block, eps, detectors, modes, name)
    return written


def format_direction(summary: dict) -> str:
    """Text table: 2D vs 3D at eps=1.5 and the informedness-maximizing eps per detector."""
    lines = []
    direction = summary.get("direction_eps_1_5")
    if direction:
        lines.append(f"{'detector':<10} {'rep2D':>7} {'rep3D':>7} {'tpr':>6} {'fpr':>6} {'inf':>7}  "
                     f"2D>=3D  fpr>0  best_eps")
        for r in direction:
            lines.append(f"{r['detector']:<10} {r['rep2d']:7.4f} {r['rep3d']:7.4f} {r['tpr']:6.3f} "
                         f"{r['fpr']:6.3f} {r['informedness']:7.3f}  {str(r['rep2d_ge_rep3d']):<6}  "
                         f"{str(r['fpr_positive']):<5}  {r['best_epsilon']:g}")
        n = len(direction)
        ge = sum(r["rep2d_ge_rep3d"] for r in direction)
        fp = sum(r["fpr_positive"] for r in direction)
        lines.append(f"2D >= 3D at eps=1.5: {ge}/{n} detectors; 2D-only repeats (fpr>0): {fp}/{n}")
    return "\n".join(lines)
