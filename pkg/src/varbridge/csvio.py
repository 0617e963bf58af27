"""CSV readers and writers for every artifact the command line emits.

All files are UTF-8, comma separated, LF terminated, with one header row.
Floats are written with ``repr`` so a read-back is exact.
"""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np

from .errors import InvalidArgumentError
from .gp_core import Observations
from .paths import PathBundle, TimeGrid


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_table(path, header: list[str], rows) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    path.write_text(buf.getvalue(), encoding="utf-8", newline="")
    return path


def read_table(path, expected: list[str] | None = None) -> tuple[list[str], list[list[str]]]:
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise InvalidArgumentError(f"{path}: empty CSV")
    header, body = rows[0], rows[1:]
    if expected is not None and header != expected:
        raise InvalidArgumentError(f"{path}: expected columns {expected}, found {header}")
    return header, body


def _float_columns(path, expected):
    _, body = read_table(path, expected)
    arr = np.array([[float(x) for x in row] for row in body], dtype=float)
    return arr.reshape(len(body), len(expected))


# --------------------------------------------------------------- observations

OBS_COLUMNS = ["t", "y"]


def write_observations(path, obs: Observations) -> Path:
    return write_table(path, OBS_COLUMNS, zip(obs.times, obs.values))


def read_observations(path) -> Observations:
    arr = _float_columns(path, OBS_COLUMNS)
    return Observations(arr[:, 0], arr[:, 1])


# ----------------------------------------------------------------- ground truth

TRUTH_COLUMNS = ["t", "u", "f"]


def write_truth(path, t, u, f) -> Path:
    return write_table(path, TRUTH_COLUMNS, zip(t, u, f))


def read_truth(path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    arr = _float_columns(path, TRUTH_COLUMNS)
    return arr[:, 0], arr[:, 1], arr[:, 2]


# -------------------------------------------------------------- exact posterior

POSTERIOR_COLUMNS = ["t", "mean", "var", "lower", "upper"]


def write_posterior(path, t, mean, var) -> Path:
    sd = np.sqrt(np.maximum(var, 0.0))
    return write_table(path, POSTERIOR_COLUMNS, zip(t, mean, var, mean - 1.96 * sd, mean + 1.96 * sd))


def read_posterior(path) -> dict[str, np.ndarray]:
    arr = _float_columns(path, POSTERIOR_COLUMNS)
    return {name: arr[:, i] for i, name in enumerate(POSTERIOR_COLUMNS)}


# ------------------------------------------------------------------ ELBO trace

TRACE_COLUMNS = ["epoch", "elbo"]


def write_trace(path, trace) -> Path:
    return write_table(path, TRACE_COLUMNS, ((i + 1, float(v)) for i, v in enumerate(trace)))


def read_trace(path) -> np.ndarray:
    return _float_columns(path, TRACE_COLUMNS)[:, 1]


# ----------------------------------------------------------------------- paths

PATH_COLUMNS = ["path_id", "t", "value"]


def write_paths(path, bundle: PathBundle) -> Path:
    f = bundle.projected()
    t = bundle.grid.points
    rows = ((i, t[k], f[i, k]) for i in range(f.shape[0]) for k in range(f.shape[1]))
    return write_table(path, PATH_COLUMNS, rows)


def read_paths(path) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(t, values)`` with ``values`` shaped (n_paths, len(t))."""
    arr = _float_columns(path, PATH_COLUMNS)
    if arr.shape[0] == 0:
        raise InvalidArgumentError(f"{path}: no path rows")
    ids = arr[:, 0].astype(int)
    n = ids.max() + 1
    if arr.shape[0] % n:
        raise InvalidArgumentError(f"{path}: ragged path table")
    k = arr.shape[0] // n
    t = arr[:k, 1]
    if not np.all(arr[:, 1].reshape(n, k) == t) or not np.all(ids.reshape(n, k) == np.arange(n)[:, None]):
        raise InvalidArgumentError(f"{path}: paths are not on a shared grid in path order")
    return t, arr[:, 2].reshape(n, k)


def paths_to_bundle(t, values, grid: TimeGrid | None = None) -> PathBundle:
    g = grid if grid is not None else TimeGrid(t)
    return PathBundle(g, np.asarray(values)[:, :, None])


# ------------------------------------------------------------- squared summary

SUMMARY_COLUMNS = ["t", "mean", "lower", "upper"]


def write_summary(path, t, mean, lower, upper) -> Path:
    return write_table(path, SUMMARY_COLUMNS, zip(t, mean, lower, upper))


def read_summary(path) -> dict[str, np.ndarray]:
    arr = _float_columns(path, SUMMARY_COLUMNS)
    return {name: arr[:, i] for i, name in enumerate(SUMMARY_COLUMNS)}


# ------------------------------------------------------------------ MMD sweep

SWEEP_COLUMNS = ["epoch", "mmd2", "threshold", "reject", "bandwidth", "m", "n_permutations", "seed"]


def write_sweep(path, rows) -> Path:
    """``rows`` are ``(epoch, MmdReport)`` pairs."""
    return write_table(
        path, SWEEP_COLUMNS,
        ((e, r.mmd2, r.threshold, r.reject, r.bandwidth, r.m, r.n_permutations, r.seed) for e, r in rows),
    )


def read_sweep(path) -> list[dict]:
    _, body = read_table(path, SWEEP_COLUMNS)
    out = []
    for row in body:
        out.append({
            "epoch": int(row[0]), "mmd2": float(row[1]), "threshold": float(row[2]),
            "reject": row[3] == "true", "bandwidth": float(row[4]), "m": int(row[5]),
            "n_permutations": int(row[6]), "seed": None if row[7] in ("", "None") else int(row[7]),
        })
    return out
