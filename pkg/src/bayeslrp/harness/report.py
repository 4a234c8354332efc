"""CSV tables (and optional figures) from robustness records.

Floats are written with ``repr`` so a rerun with the same seed produces
byte-identical files and a reader recovers the exact values.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from ..metrics import RobustnessRecord

RECORD_HEADER = ["point_id", "model_kind", "sample_count", "layer", "k", "klrp", "softmax_rob",
                 "attack_succeeded", "clean_pred", "adv_pred", "true_label"]
HIST_HEADER = ["model_kind", "sample_count", "metric", "layer", "k", "bin_low", "bin_high", "count"]
SCATTER_HEADER = ["model_kind", "sample_count", "point_id", "klrp", "softmax_rob"]
N_BINS = 20


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def record_rows(records, alt: bool = False):
    for r in records:
        table = r.klrp_alt if alt else r.klrp
        for (layer, k), value in sorted(table.items()):
            yield [r.point_id, r.model_kind, r.sample_count, layer, k, value, r.softmax_robustness,
                   r.attack_succeeded, r.clean_prediction, r.adversarial_prediction, r.true_label]


def _groups(records):
    out: dict[tuple, list] = {}
    for r in records:
        out.setdefault((r.model_kind, r.sample_count), []).append(r)
    return out


def histogram_rows(records):
    edges = np.linspace(0.0, 1.0, N_BINS + 1)
    for (kind, n), rs in _groups(records).items():
        series = {("softmax_rob", -1, -1): [r.softmax_robustness for r in rs]}
        for key in sorted(rs[0].klrp):
            series[("klrp", *key)] = [r.klrp[key] for r in rs]
        for (metric, layer, k), values in series.items():
            counts, _ = np.histogram(np.clip(values, 0.0, 1.0), bins=edges)
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                yield [kind, n, metric, layer, k, float(lo), float(hi), int(c)]


def scatter_key(records):
    """Pre-softmax layer with the largest k <= 100 present in the grid."""
    keys = sorted(records[0].klrp) if records else []
    if not keys:
        return None
    last = max(l for l, _ in keys)
    ks = [k for l, k in keys if l == last]
    return last, (100 if 100 in ks else max(ks))


def scatter_rows(records):
    key = scatter_key(records)
    if key is None:
        return
    for r in records:
        yield [r.model_kind, r.sample_count, r.point_id, r.klrp[key], r.softmax_robustness]


def emit_report(records, out_dir, summary: dict | None = None, figures: bool = False) -> dict:
    """Write ``records.csv``, ``records_alt_mode.csv``, ``histograms.csv``,
    ``scatter.csv`` and, when given, ``summary.json``; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "records": out / "records.csv",
        "records_alt": out / "records_alt_mode.csv",
        "histograms": out / "histograms.csv",
        "scatter": out / "scatter.csv",
    }
    _write(paths["records"], RECORD_HEADER, record_rows(records))
    _write(paths["records_alt"], RECORD_HEADER, record_rows(records, alt=True))
    _write(paths["histograms"], HIST_HEADER, histogram_rows(records))
    _write(paths["scatter"], SCATTER_HEADER, scatter_rows(records))
    if summary is not None:
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(summary, indent=2, sort_keys=True, default=_json_default) + "\n")
    if figures and records:
        from .plots import render_figures
        paths.update(render_figures(records, out))
    return paths


def _json_default(v):
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, np.ndarray):
        return v.tolist()
    raise TypeError(type(v))


def read_records(path) -> list[RobustnessRecord]:
    """Rebuild records from a ``records.csv`` written by :func:`emit_report`."""
    by_key: dict[tuple, RobustnessRecord] = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        for row in reader:
            key = (row["model_kind"], int(row["sample_count"]), int(row["point_id"]))
            rec = by_key.get(key)
            if rec is None:
                rec = RobustnessRecord(
                    point_id=int(row["point_id"]), true_label=int(row["true_label"]),
                    clean_prediction=int(row["clean_pred"]), adversarial_prediction=int(row["adv_pred"]),
                    softmax_robustness=float(row["softmax_rob"]), model_kind=row["model_kind"],
                    sample_count=int(row["sample_count"]))
                by_key[key] = rec
            rec.klrp[int(row["layer"]), int(row["k"])] = float(row["klrp"])
    for rec in by_key.values():
        rec.klrp_alt = dict(rec.klrp)
    return list(by_key.values())
