"""Result tables: flat records, per-cell aggregates and (q x p) pivots."""

from __future__ import annotations

import csv
import json
import re
from collections import defaultdict
from pathlib import Path

import numpy as np

from .grid import OK, ResultRecord

SCHEMA_VERSION = 1

RECORD_COLUMNS = {
    "method": "method name",
    "p": "trusted ratio |D_T| / (|D_T| + |D_U|)",
    "noise": "corruption spec label applied to D_U",
    "q": "measured quality in [0, 1] (KL ratio on the test features); empty when D_U is empty",
    "seed": "grid seed (before --seed-base offset)",
    "accuracy": "test accuracy, argmax with ties to the lower class",
    "balanced_accuracy": "mean per-class test recall",
    "mean_log_loss": "mean test cross-entropy, nats, probabilities floored at 1e-12",
    "wall_time": "seconds spent fitting and evaluating the method",
    "status": "ok | not-applicable | failed",
    "error": "failure message, empty otherwise",
}

AGGREGATE_COLUMNS = {
    "method": "method name",
    "p": "trusted ratio",
    "noise": "corruption spec label",
    "q_median": "median measured q over seeds",
    "n_ok": "seeds with status ok",
    "n_failed": "seeds with status failed",
    "accuracy_median": "median test accuracy over ok seeds",
    "accuracy_iqr": "interquartile range of test accuracy",
    "balanced_accuracy_median": "median balanced accuracy",
    "balanced_accuracy_iqr": "interquartile range of balanced accuracy",
    "mean_log_loss_median": "median mean log loss",
    "mean_log_loss_iqr": "interquartile range of mean log loss",
}

PIVOT_DESCRIPTION = (
    "one file per method; rows are noise specs (with their median measured q), "
    "columns are p values, cells are median test accuracy"
)


def _median_iqr(values):
    if not values:
        return None, None
    a = np.asarray(values, dtype=float)
    q1, med, q3 = np.percentile(a, [25, 50, 75])
    return float(med), float(q3 - q1)


def aggregate(records: list[ResultRecord]) -> list[dict]:
    cells: dict[tuple, list[ResultRecord]] = defaultdict(list)
    for r in records:
        cells[(r.method, r.p, r.noise)].append(r)
    rows = []
    for (method, p, noise), rs in cells.items():
        ok = [r for r in rs if r.status == OK]
        qs = [r.q for r in rs if r.q is not None]
        row = {
            "method": method,
            "p": p,
            "noise": noise,
            "q_median": float(np.median(qs)) if qs else None,
            "n_ok": len(ok),
            "n_failed": sum(r.status == "failed" for r in rs),
        }
        for metric in ("accuracy", "balanced_accuracy", "mean_log_loss"):
            med, iqr = _median_iqr([getattr(r, metric) for r in ok])
            row[f"{metric}_median"], row[f"{metric}_iqr"] = med, iqr
        rows.append(row)
    return rows


def pivot(agg_rows: list[dict], method: str) -> tuple[list[str], list[list]]:
    """Header and rows of the noise x p table of median accuracy for ``method``."""
    mine = [r for r in agg_rows if r["method"] == method]
    ps = sorted({r["p"] for r in mine})
    noises = list(dict.fromkeys(r["noise"] for r in mine))
    by_key = {(r["noise"], r["p"]): r for r in mine}
    header = ["noise", "q_median"] + [f"p={p:g}" for p in ps]
    rows = []
    for n in noises:
        qs = [by_key[(n, p)]["q_median"] for p in ps if (n, p) in by_key and by_key[(n, p)]["q_median"] is not None]
        q = float(np.median(qs)) if qs else None
        rows.append([n, q] + [by_key.get((n, p), {}).get("accuracy_median") for p in ps])
    return header, rows


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return v


def _write_csv(path: Path, header, rows) -> Path:
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_cell(v) for v in row])
    return path


def _slug(name: str) -> str:
    return re.sub(r"[^A-Za-z0-9.]+", "_", name).strip("_")


def emit_report(
    records: list[ResultRecord],
    out_dir,
    formats=("csv", "json"),
    config: dict | None = None,
    diagnostics: list[dict] | None = None,
) -> list[Path]:
    """Write results, aggregates, per-method pivots and a schema file; return the paths."""
    if not records:
        raise ValueError("no records to report")
    formats = set(formats)
    if not formats <= {"csv", "json"}:
        raise ValueError(f"unknown formats {sorted(formats - {'csv', 'json'})}")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as e:
        raise OSError(f"cannot create report directory {out}: {e}") from e

    paths: list[Path] = []
    dicts = [r.to_dict() for r in records]
    agg = aggregate(records)
    if "csv" in formats:
        cols = list(RECORD_COLUMNS)
        paths.append(_write_csv(out / "results.csv", cols, [[d[c] for c in cols] for d in dicts]))
        acols = list(AGGREGATE_COLUMNS)
        paths.append(_write_csv(out / "aggregate.csv", acols, [[a[c] for c in acols] for a in agg]))
    if "json" in formats:
        p = out / "results.json"
        p.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "records": dicts}, indent=1))
        paths.append(p)
        p = out / "aggregate.json"
        p.write_text(json.dumps({"schema_version": SCHEMA_VERSION, "rows": agg}, indent=1))
        paths.append(p)
    for method in dict.fromkeys(r.method for r in records):
        header, rows = pivot(agg, method)
        paths.append(_write_csv(out / f"pivot_{_slug(method)}.csv", header, rows))

    schema = {
        "schema_version": SCHEMA_VERSION,
        "results": RECORD_COLUMNS,
        "aggregate": AGGREGATE_COLUMNS,
        "pivot": PIVOT_DESCRIPTION,
        "q_note": "q is measured on the test features as the probe set",
        "transition_estimator_note": (
            "trusted-set estimator rows are the class-wise sums of untrusted-model "
            "predictions normalized to total mass 1"
        ),
    }
    p = out / "schema.json"
    p.write_text(json.dumps(schema, indent=1))
    paths.append(p)
    if config is not None:
        p = out / "config.json"
        p.write_text(json.dumps(config, indent=1, sort_keys=True, default=str))
        paths.append(p)
    if diagnostics is not None:
        p = out / "diagnostics.json"
        p.write_text(json.dumps(diagnostics, indent=1, default=_jsonable))
        paths.append(p)
    return paths


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    raise TypeError(f"not serializable: {type(o).__name__}")


def load_records(path) -> list[ResultRecord]:
    data = json.loads(Path(path).read_text())
    return [ResultRecord(**d) for d in data["records"]]


def dump_weights(path, values) -> Path:
    """One decimal per line, aligned to the untrusted row order."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(f"{float(v)!r}\n" for v in values))
    return path
