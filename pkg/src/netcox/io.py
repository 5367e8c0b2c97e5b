"""File formats: CSV artifacts, JSON reports and the run manifest.

Floats are written with repr() so that reading them back reproduces the
exact double and reruns with the same seed produce byte-identical files.
Manifests record config and input hashes plus library versions; they
deliberately contain no timestamps.
"""

from __future__ import annotations

import csv
import hashlib
import json
import platform
import sys

import numpy as np

from . import __version__, backend
from .errors import DataError
from .netcore import DynamicNetwork
from .partition import PartitionAssignment
from .simulate import EventLog


def _open_csv(path):
    try:
        return open(path, newline="")
    except OSError as exc:
        raise DataError(f"cannot open {path}: {exc}")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_rows(path, header, rows):
    """CSV with deterministic formatting (repr floats, \\n line ends)."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def write_network_csv(path, net):
    rows = [(p[0], p[1], a, b) for p in net.pairs()
            for (a, b) in net.activity(p)]
    write_rows(path, ("i", "j", "start", "end"), rows)


def read_network_csv(path, n=None, horizon=None, directed=False):
    activity = {}
    max_id = -1
    max_end = 0.0
    with _open_csv(path) as fh:
        for row in csv.DictReader(fh):
            try:
                i, j = int(row["i"]), int(row["j"])
                a, b = float(row["start"]), float(row["end"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad network row {row}: {exc}")
            activity.setdefault((i, j), []).append((a, b))
            max_id = max(max_id, i, j)
            max_end = max(max_end, b)
    if n is None:
        n = max_id + 1
    if horizon is None:
        horizon = max_end
    return DynamicNetwork(n, horizon, activity=activity, directed=directed)


def write_events_csv(path, log):
    times, pairs = log.flat()
    write_rows(path, ("time", "i", "j"),
                [(t, p[0], p[1]) for t, p in zip(times, pairs)])


def read_events_csv(path, horizon=None):
    times = {}
    max_t = 0.0
    with _open_csv(path) as fh:
        for row in csv.DictReader(fh):
            try:
                t = float(row["time"])
                pair = (int(row["i"]), int(row["j"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad event row {row}: {exc}")
            times.setdefault(pair, []).append(t)
            max_t = max(max_t, t)
    if horizon is None:
        horizon = max_t if max_t > 0 else 1.0
    return EventLog(horizon, times=times)


def write_covariates_csv(path, cov, pairs):
    """Static covariate vectors, one row per pair: i,j,x_1..x_q."""
    if cov.kind != "static":
        raise DataError("only static covariate fields round-trip as CSV")
    header = ["i", "j"] + [f"x_{k + 1}" for k in range(cov.q)]
    rows = [(p[0], p[1], *cov.eval(p, 0.0)) for p in sorted(pairs)]
    write_rows(path, header, rows)


def read_covariates_csv(path, bound=None):
    from .simulate import CovariateField

    values = {}
    with _open_csv(path) as fh:
        reader = csv.DictReader(fh)
        cols = [c for c in (reader.fieldnames or []) if c.startswith("x_")]
        if not cols:
            raise DataError(f"{path} has no covariate columns")
        cols.sort(key=lambda c: int(c.split("_")[1]))
        for row in reader:
            try:
                pair = (int(row["i"]), int(row["j"]))
                values[pair] = [float(row[c]) for c in cols]
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad covariate row {row}: {exc}")
    return CovariateField.static(values, bound=bound)


def write_partition_csv(path, assignment):
    write_rows(path, ("i", "j", "k", "m"), assignment.to_rows())


def read_partition_csv(path, t, delta):
    assign = {}
    with _open_csv(path) as fh:
        for row in csv.DictReader(fh):
            try:
                pair = (int(row["i"]), int(row["j"]))
                km = (int(row["k"]), int(row["m"]))
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad partition row {row}: {exc}")
            assign[pair] = km
    k_count = len({k for k, _ in assign.values() if k > 0})
    return PartitionAssignment(t=float(t), delta=float(delta),
                               type_count=k_count, assign=assign)


def write_theta_path_csv(path, t0s, thetas, converged=None, iterations=None):
    thetas = np.atleast_2d(np.asarray(thetas, dtype=np.float64))
    q = thetas.shape[1]
    if converged is None:
        converged = [True] * len(t0s)
    if iterations is None:
        iterations = [0] * len(t0s)
    header = ["t0"] + [f"theta_{k + 1}" for k in range(q)] + [
        "converged", "iters"]
    rows = [(t0, *theta, bool(c), int(it))
            for t0, theta, c, it in zip(t0s, thetas, converged, iterations)]
    write_rows(path, header, rows)


def write_weight_csv(path, ts, wvals):
    write_rows(path, ("t", "w"), list(zip(ts, wvals)))


def write_bandwidth_csv(path, curve):
    write_rows(path, ("h", "error"), curve.to_rows())


def read_bandwidth_csv(path):
    hs, errs = [], []
    with _open_csv(path) as fh:
        for row in csv.DictReader(fh):
            hs.append(float(row["h"]))
            errs.append(float(row["error"]))
    return np.asarray(hs), np.asarray(errs)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer, int)):
        return int(obj)
    return obj


def write_json(path, payload):
    with open(path, "w") as fh:
        json.dump(_jsonable(payload), fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_test_result_json(path, result, extra=None):
    payload = result.to_dict()
    if extra:
        payload.update(extra)
    write_json(path, payload)


TEST_RESULT_COLUMNS = ("tn", "an", "b", "z", "p_value", "h", "kernel",
                       "r_n", "excluded_gridpoints")


def write_test_result_csv(path, result):
    row = [getattr(result, c) for c in TEST_RESULT_COLUMNS]
    write_rows(path, TEST_RESULT_COLUMNS, [row])


def sha256_file(path):
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def sha256_config(config):
    blob = json.dumps(_jsonable(config), sort_keys=True).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, config, inputs=(), outputs=()):
    """Reproducibility record: config hash, input/output hashes, library
    versions and the numeric backend. No timestamps, by design."""
    manifest = {
        "config_sha256": sha256_config(config),
        "seed": config.get("seed"),
        "inputs": {str(p): sha256_file(p) for p in inputs},
        "outputs": {str(p): sha256_file(p) for p in outputs},
        "versions": {
            "netcox": __version__,
            "numpy": np.__version__,
            "scipy": _scipy_version(),
            "python": platform.python_version(),
        },
        "backend": backend.BACKEND,
    }
    write_json(path, manifest)
    return manifest


def _scipy_version():
    mod = sys.modules.get("scipy")
    if mod is None:
        import scipy as mod
    return mod.__version__
