"""Join result CSVs and render one figure per experiment.

Nothing is recomputed here. Rows sharing a key must agree on every metric,
otherwise the report refuses to merge them.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from pathlib import Path

from .eval.experiments import COLUMNS

KEY = ("experiment", "method", "structure", "K", "I_sum", "N_bar", "snr_db", "seed")
METRICS = ("mean_sum_se", "wallclock_s", "flops", "pilot_overhead", "backhaul_overhead")
# experiment -> (x column, y column) of its plot
AXES = {
    "snr_sweep": ("snr_db", "mean_sum_se"),
    "nbar_sweep": ("N_bar", "mean_sum_se"),
    "ablation": ("method", "mean_sum_se"),
    "phase_robustness": ("method", "mean_sum_se"),
    "scalability": ("layout", "mean_sum_se"),
    "timing": ("method", "wallclock_s"),
    "baseline": ("method", "mean_sum_se"),
    "eval": ("method", "mean_sum_se"),
}


class ReportConflict(ValueError):
    pass


def _same(a, b):
    if a == b:
        return True
    try:
        x, y = float(a), float(b)
    except ValueError:
        return False
    if math.isnan(x) and math.isnan(y):
        return True
    return x == y


def merge(paths):
    """Rows of every CSV, de-duplicated by key; conflicting duplicates raise ``ReportConflict``."""
    merged = {}
    for path in paths:
        with Path(path).open(newline="") as f:
            reader = csv.DictReader(f)
            missing = [c for c in KEY if c not in (reader.fieldnames or [])]
            if missing:
                raise ReportConflict(f"{path}: missing columns {missing}")
            for row in reader:
                key = tuple(row[c] for c in KEY)
                if key in merged:
                    old = merged[key]
                    diff = [m for m in METRICS if not _same(old.get(m, ""), row.get(m, ""))]
                    if diff:
                        raise ReportConflict(f"conflicting values for {dict(zip(KEY, key))} in {path}: "
                                             + ", ".join(f"{m} {old.get(m)} != {row.get(m)}" for m in diff))
                    continue
                merged[key] = row
    return list(merged.values())


def series(rows):
    """Plot-ready means over seeds: ``{experiment: [{series, x, y, n}]}``."""
    acc = defaultdict(lambda: defaultdict(list))
    for r in rows:
        exp = r["experiment"]
        xcol, ycol = AXES.get(exp, ("method", "mean_sum_se"))
        if xcol == "layout":
            x = f"K={r['K']},I_sum={r['I_sum']}"
        else:
            x = r[xcol]
        label = f"{r['method']} [{r['structure']}]" if xcol != "method" else r["structure"]
        try:
            y = float(r[ycol])
        except (TypeError, ValueError):
            continue
        acc[exp][(label, x)].append(y)
    out = {}
    for exp, d in acc.items():
        pts = []
        for (label, x), ys in d.items():
            pts.append({"series": label, "x": x, "y": sum(ys) / len(ys), "n": len(ys)})

        def order(p):
            try:
                return (p["series"], 0, float(p["x"]), "")
            except ValueError:
                return (p["series"], 1, 0.0, p["x"])

        out[exp] = sorted(pts, key=order)
    return out


def plot(exp, pts, path):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    xcol, ycol = AXES.get(exp, ("method", "mean_sum_se"))
    fig, ax = plt.subplots(figsize=(6.4, 4.0))
    by = defaultdict(list)
    for p in pts:
        by[p["series"]].append(p)
    numeric = all(_is_number(p["x"]) for p in pts)
    if numeric:
        for label, ps in by.items():
            ax.plot([float(p["x"]) for p in ps], [p["y"] for p in ps], marker="o", label=label)
    else:
        cats = list(dict.fromkeys(p["x"] for p in pts))
        width = 0.8 / max(len(by), 1)
        for j, (label, ps) in enumerate(by.items()):
            pos = {p["x"]: p["y"] for p in ps}
            xs = [i + j * width for i, c in enumerate(cats) if c in pos]
            ax.bar(xs, [pos[c] for c in cats if c in pos], width=width, label=label)
        ax.set_xticks([i + 0.4 - width / 2 for i in range(len(cats))])
        ax.set_xticklabels(cats, rotation=20, ha="right", fontsize=8)
    ax.set_xlabel(xcol)
    ax.set_ylabel("sum SE (bits/s/Hz)" if ycol == "mean_sum_se" else "seconds per sample")
    ax.set_title(exp)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path


def _is_number(x):
    try:
        float(x)
        return True
    except ValueError:
        return False


def build_report(paths, outdir):
    """Write ``merged.csv`` plus a series CSV and PNG per experiment; return the written paths."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    rows = merge(paths)
    written = []
    merged = outdir / "merged.csv"
    with merged.open("w", newline="") as f:
        w = csv.DictWriter(f, fieldnames=COLUMNS, extrasaction="ignore")
        w.writeheader()
        w.writerows(rows)
    written.append(merged)
    for exp, pts in series(rows).items():
        p = outdir / f"{exp}_series.csv"
        with p.open("w", newline="") as f:
            w = csv.DictWriter(f, fieldnames=("series", "x", "y", "n"))
            w.writeheader()
            w.writerows(pts)
        written.append(p)
        written.append(plot(exp, pts, outdir / f"{exp}.png"))
    return written
