"""Deterministic file output: CSV tables with 17 significant digits and a JSON report."""

from __future__ import annotations

import csv
import json
import os

import numpy as np

from .free_boundary import eval_boundary
from .measures import RowFunctionals


def fmt(value):
    """Shortest-safe decimal form: 17 significant digits, ``-0`` printed as ``0``."""
    v = float(value)
    if v == 0.0:
        return "0"
    return format(v, ".17g")


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


def read_csv(path):
    """Header and float rows of a file written by :func:`write_csv`."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        return header, np.array([[float(v) for v in row] for row in reader])


def write_json(path, payload):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(payload, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def emit_boundary(out_dir, traj):
    path = os.path.join(out_dir, "boundary.csv")
    write_csv(path, ["t", "h", "h_prime"], zip(map(float, traj.t), map(float, traj.h), map(float, traj.h_prime)))
    return path


def emit_outputs(out_dir, config, traj, field_, report, frame=None, extra=None):
    """Write the configured file set and return the list of paths.

    ``field_t<idx>.csv`` holds the row nearest to ``snapshot_times[idx]``;
    ``report.json`` embeds the effective configuration.
    """
    os.makedirs(out_dir, exist_ok=True)
    kinds = set(config.output.csv)
    written = []
    if "boundary" in kinds:
        written.append(emit_boundary(out_dir, traj))
    if "field" in kinds:
        for idx, ts in enumerate(config.output.snapshot_times):
            n = field_.row_index(ts)
            t_n = float(field_.t[n])
            h = float(eval_boundary(traj, t_n)[0])
            path = os.path.join(out_dir, f"field_t{idx}.csv")
            write_csv(path, ["xi", "x", "u"],
                      ((float(xi), float(h * xi), float(u)) for xi, u in zip(field_.xi, field_.values[n])))
            written.append(path)
    if "measure" in kinds and frame is not None:
        P = RowFunctionals(frame, field_.xi, field_.t).measure(field_.values)
        path = os.path.join(out_dir, "measure.csv")
        write_csv(path, ["t", "P"], zip(map(float, field_.t), map(float, P)))
        written.append(path)
    if "convergence" in kinds:
        rows = [(s["slab"], k, float(g)) for s in report.slabs for k, g in enumerate(s["gaps"])]
        path = os.path.join(out_dir, "convergence.csv")
        write_csv(path, ["slab", "k", "gap"], rows)
        written.append(path)
    payload = {"config": config.to_dict(), "solve": report.to_dict()}
    if extra:
        payload.update(extra)
    path = os.path.join(out_dir, "report.json")
    write_json(path, payload)
    written.append(path)
    return written
