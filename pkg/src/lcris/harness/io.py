"""CSV tables, per-angle plot series and run manifests."""
from __future__ import annotations

import csv
import json
from dataclasses import astuple, fields
from pathlib import Path

import numpy as np

from .. import __version__
from ..env import MetricRow

ROW_FIELDS = [f.name for f in fields(MetricRow)]
_TYPES = {f.name: f.type for f in fields(MetricRow)}


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, np.integer):
        return str(int(v))
    return str(v)


def write_rows(path, rows) -> Path:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f, lineterminator="\n")
            w.writerow(ROW_FIELDS)
            for r in rows:
                w.writerow([_fmt(v) for v in astuple(r)])
    except OSError as e:
        raise OSError(f"cannot write metrics to {path}: {e}") from e
    return path


def _parse(name, text):
    t = _TYPES[name]
    if t in ("int", int):
        return int(text)
    if t in ("float", float):
        return float(text)
    if t in ("bool", bool):
        return text == "1"
    return text


def read_rows(path) -> list[MetricRow]:
    path = Path(path)
    try:
        with open(path, newline="", encoding="utf-8") as f:
            reader = csv.reader(f)
            header = next(reader)
            if header != ROW_FIELDS:
                raise ValueError(f"{path}: unexpected header {header}")
            return [MetricRow(**{k: _parse(k, v) for k, v in zip(header, line)})
                    for line in reader]
    except OSError as e:
        raise OSError(f"cannot read metrics from {path}: {e}") from e


PLOT_METRICS = ("received_power_dbw", "snr_db", "t_k_ms", "rate_mbps")


def write_plotdata(path, series: dict) -> Path:
    """``series`` maps (controller, metric) -> [(angle, value), ...].

    Written as whitespace-separated columns: angle, then one column per
    (controller, metric) pair, for gnuplot or a spreadsheet.
    """
    path = Path(path)
    keys = sorted(series)
    angles = sorted({a for k in keys for a, _ in series[k]})
    lookup = {k: dict(series[k]) for k in keys}
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", encoding="utf-8") as f:
            f.write("# angle_deg " + " ".join(f"{c}:{m}" for c, m in keys) + "\n")
            for a in angles:
                vals = [lookup[k].get(a, float("nan")) for k in keys]
                f.write(f"{a:g} " + " ".join(repr(float(v)) for v in vals) + "\n")
    except OSError as e:
        raise OSError(f"cannot write plot data to {path}: {e}") from e
    return path


def write_manifest(path, config, seeds, extra=None) -> Path:
    path = Path(path)
    manifest = {
        "version": __version__,
        "config_sha256": config.digest(),
        "seeds": list(seeds),
        "config": config.to_dict(),
    }
    manifest.update(extra or {})
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    except OSError as e:
        raise OSError(f"cannot write manifest to {path}: {e}") from e
    return path
