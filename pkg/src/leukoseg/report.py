"""Evaluation report writers: CSV, JSON and a summary figure."""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path

import matplotlib
matplotlib.use("Agg")
import matplotlib.pyplot as plt
import numpy as np

from .metrics import EvalReport

METRIC_COLUMNS = ("sa", "or_rate", "ur_rate", "er_rate")


@dataclass(frozen=True)
class EvalRow:
    image: str
    site: str
    report: EvalReport
    dec: float | None = None
    channel: str | None = None


def _summary(rows: list[EvalRow]) -> dict:
    out = {}
    for name in METRIC_COLUMNS:
        values = np.array([getattr(r.report, name) for r in rows], dtype=np.float64)
        out[name] = {"mean": float(values.mean()), "sd": float(values.std())}
    return out


def write_csv(rows: list[EvalRow], path: str | Path) -> None:
    """Per-pair rows plus mean and standard-deviation summary lines."""
    summary = _summary(rows)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["image", "site", "sa", "or_rate", "ur_rate", "er_rate",
                         "dec", "channel"])
        for r in rows:
            writer.writerow([
                r.image, r.site, f"{r.report.sa:.4f}", f"{r.report.or_rate:.6f}",
                f"{r.report.ur_rate:.6f}", f"{r.report.er_rate:.6f}",
                "" if r.dec is None else f"{r.dec:.4f}",
                r.channel or "",
            ])
        writer.writerow(["mean", "", f"{summary['sa']['mean']:.4f}",
                         f"{summary['or_rate']['mean']:.6f}",
                         f"{summary['ur_rate']['mean']:.6f}",
                         f"{summary['er_rate']['mean']:.6f}", "", ""])
        writer.writerow(["sd", "", f"{summary['sa']['sd']:.4f}",
                         f"{summary['or_rate']['sd']:.6f}",
                         f"{summary['ur_rate']['sd']:.6f}",
                         f"{summary['er_rate']['sd']:.6f}", "", ""])


def write_json(rows: list[EvalRow], path: str | Path) -> None:
    payload = {
        "pairs": [
            {
                "image": r.image,
                "site": r.site,
                "rs": r.report.rs,
                "ts": r.report.ts,
                "os": r.report.os_pixels,
                "us": r.report.us_pixels,
                "sa": r.report.sa,
                "or_rate": r.report.or_rate,
                "ur_rate": r.report.ur_rate,
                "er_rate": r.report.er_rate,
                "dec": r.dec,
                "channel": r.channel,
            }
            for r in rows
        ],
        "summary": _summary(rows),
    }
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True)


def write_figure(rows: list[EvalRow], path: str | Path) -> None:
    """Two-panel summary: per-image accuracy bars and rate boxplots."""
    names = [r.image for r in rows]
    sa = [r.report.sa for r in rows]
    rates = {
        "OR": [r.report.or_rate for r in rows],
        "UR": [r.report.ur_rate for r in rows],
        "ER": [r.report.er_rate for r in rows],
    }
    fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(11, 4.2),
                                   gridspec_kw={"width_ratios": [2.2, 1]})
    xs = np.arange(len(rows))
    ax1.bar(xs, sa, color="#4878a8")
    ax1.axhline(np.mean(sa), color="#a84848", linestyle="--", linewidth=1,
                label=f"mean {np.mean(sa):.2f}%")
    ax1.set_xticks(xs)
    ax1.set_xticklabels(names, rotation=90, fontsize=7)
    ax1.set_ylabel("segmentation accuracy [%]")
    ax1.set_ylim(0, 105)
    ax1.legend(loc="lower right", fontsize=8)

    ax2.boxplot(list(rates.values()), tick_labels=list(rates.keys()))
    ax2.set_ylabel("rate")
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def write_reports(rows: list[EvalRow], out_dir: str | Path,
                  stem: str = "report") -> list[Path]:
    """Write CSV + JSON + figure; returns the created paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = [out / f"{stem}.csv", out / f"{stem}.json", out / f"{stem}.png"]
    write_csv(rows, paths[0])
    write_json(rows, paths[1])
    write_figure(rows, paths[2])
    return paths
