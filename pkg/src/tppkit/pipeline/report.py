"""Benchmark leaderboards: one CSV per metric plus a PNG rendered beside it."""

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

LEADERBOARD_COLUMNS = ["model", "loglik", "rmse", "error_rate", "censoring_rate"]


def _row(model_id, report):
    m = report.get("metrics", {})
    row = {"model": model_id}
    row["loglik"] = m.get("loglik", {}).get("ll_per_event", "")
    ne = m.get("next_event", {})
    row["rmse"] = ne.get("rmse", "")
    row["error_rate"] = ne.get("error_rate", "")
    row["censoring_rate"] = ne.get("censoring_rate", "")
    for key, h in m.get("horizon", {}).items():
        row[f"otd@{key}"] = h["mean_otd"]
    return row


def leaderboard_rows(reports):
    """``reports`` maps model id to its evaluation report."""
    return [_row(mid, rep) for mid, rep in reports.items()]


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)


def _bar_png(path, labels, values, ylabel, title):
    fig, ax = plt.subplots(figsize=(max(4, 1.2 * len(labels)), 3.2))
    ax.bar(range(len(labels)), values, color="tab:blue")
    ax.set_xticks(range(len(labels)))
    ax.set_xticklabels(labels, rotation=20)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def _otd_png(path, series):
    fig, ax = plt.subplots(figsize=(5, 3.2))
    for model_id, pts in series.items():
        pts = sorted(pts)
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=model_id)
    ax.set_xlabel("horizon length")
    ax.set_ylabel("mean OTD")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=100)
    plt.close(fig)


def write_report(out_dir, reports):
    """Write ``leaderboard.csv`` and a CSV/PNG pair per metric; returns paths."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = leaderboard_rows(reports)
    extra = sorted({k for r in rows for k in r} - set(LEADERBOARD_COLUMNS))
    header = LEADERBOARD_COLUMNS + extra
    written = [out_dir / "leaderboard.csv"]
    _write_csv(written[0], header, [[r.get(c, "") for c in header] for r in rows])
    for metric, ylabel in (("loglik", "test log-likelihood / event"), ("rmse", "time RMSE"), ("error_rate", "type error rate")):
        pts = [(r["model"], r[metric]) for r in rows if r.get(metric, "") != ""]
        if not pts:
            continue
        csv_path = out_dir / f"{metric}.csv"
        _write_csv(csv_path, ["model", metric], pts)
        png = csv_path.with_suffix(".png")
        _bar_png(png, [p[0] for p in pts], [p[1] for p in pts], ylabel, metric)
        written += [csv_path, png]
    series = {}
    otd_rows = []
    for mid, rep in reports.items():
        for key, h in rep.get("metrics", {}).get("horizon", {}).items():
            series.setdefault(mid, []).append((h["length"], h["mean_otd"]))
            otd_rows.append((mid, h["length"], h["mean_otd"], h["num_sequences"]))
    if otd_rows:
        csv_path = out_dir / "otd.csv"
        _write_csv(csv_path, ["model", "horizon_length", "mean_otd", "num_sequences"], otd_rows)
        png = csv_path.with_suffix(".png")
        _otd_png(png, series)
        written += [csv_path, png]
    return written
