"""Batch front end.

Subcommands: simulate, estimate, test, bandwidth, partition-check,
mc-calibration. Each reads a JSON config (overridable with --set
key=value), writes CSV/JSON artifacts plus a run manifest into the
output directory, and exits 0 on success, 2 on configuration problems,
3 on data problems, 4 on numeric failures.

Paths in the config resolve against NETCOX_DATA_DIR when that variable
is set and the path is relative.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from datetime import datetime

import numpy as np

from . import io
from .bandwidth import scan_bandwidths
from .calibration import (constant_path, er_cox_instance,
                          mc_rejections, mc_variance_comparison, swing_path)
from .errors import (ConfigurationError, DataError, DomainError,
                     InstanceTooLarge, NetcoxError, NoDataInWindow,
                     NumericError, SimulationError)
from .estimate import CoxDesign, _fit_at, _fit_global, get_kernel
from .goftest import WeightFunction, run_test
from .netcore import DynamicNetwork, grid_network
from .partition import (coordinate_partition, grid_chessboard,
                        mds_partition, validate_partition)
from .simulate import CovariateField, EventLog, ParameterPath


def _req(cfg, key):
    if key not in cfg:
        raise ConfigurationError(f"missing config key '{key}'")
    return cfg[key]


def resolve_path(p):
    p = str(p)
    base = os.environ.get("NETCOX_DATA_DIR")
    if base and not os.path.isabs(p):
        return os.path.join(base, p)
    return p


def load_config(path, overrides=()):
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except FileNotFoundError:
        raise ConfigurationError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigurationError(f"config is not valid JSON: {exc}")
    if not isinstance(cfg, dict):
        raise ConfigurationError("config must be a JSON object")
    for item in overrides:
        if "=" not in item:
            raise ConfigurationError(f"--set needs key=value, got '{item}'")
        key, _, raw = item.partition("=")
        try:
            value = json.loads(raw)
        except json.JSONDecodeError:
            value = raw
        node = cfg
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ConfigurationError(f"--set path '{key}' hits a leaf")
        node[parts[-1]] = value
    return cfg


def _parse_time(raw, time_format):
    if time_format == "iso":
        return datetime.fromisoformat(raw).timestamp()
    return float(raw)


def ingest_events(path, window, time_format="float", unit=None,
                  columns=None, directed=False, registry=None):
    """Read a trip/event CSV into an EventLog plus a vertex registry.

    The window bounds use the same format as the time column; times are
    rescaled to (t - begin) / unit. The unit defaults to 3600 (hours) for
    epoch and ISO inputs and to 1 for plain floats. Vertices register by
    first appearance among usable in-window rows; pass an existing
    registry to share ids across files. Over 1% unparseable rows is an
    ingestion error.
    """
    cols = {"time": "time", "origin": "i", "dest": "j"}
    cols.update(columns or {})
    if unit is None:
        unit = 1.0 if time_format == "float" else 3600.0
    begin = _parse_time(window[0], time_format)
    end = _parse_time(window[1], time_format)
    if not end > begin:
        raise ConfigurationError(f"empty ingestion window {window}")
    horizon = (end - begin) / unit
    registry = {} if registry is None else registry
    times = {}
    rows = bad = loops = outside = 0
    try:
        fh = open(resolve_path(path), newline="")
    except OSError as exc:
        raise DataError(f"cannot open events file: {exc}")
    with fh:
        for row in csv.DictReader(fh):
            rows += 1
            try:
                t = _parse_time(row[cols["time"]], time_format)
                o = str(row[cols["origin"]]).strip()
                d = str(row[cols["dest"]]).strip()
                if not o or not d:
                    raise ValueError("empty vertex id")
            except (KeyError, TypeError, ValueError, OSError):
                bad += 1
                continue
            if o == d:
                loops += 1
                continue
            if not (begin <= t < end):
                outside += 1
                continue
            for v in (o, d):
                if v not in registry:
                    registry[v] = len(registry)
            pair = (registry[o], registry[d])
            if not directed:
                pair = tuple(sorted(pair))
            times.setdefault(pair, []).append((t - begin) / unit)
    if rows and bad > 0.01 * rows:
        raise DataError(f"{bad} of {rows} rows unparseable (> 1%)")
    log = EventLog(horizon, times=times)
    report = {"rows": rows, "events": log.total, "unparseable": bad,
              "self_loops": loops, "outside_window": outside}
    return log, registry, report


def build_conservative_network(prior, threshold, horizon, n=None,
                               directed=False):
    """Static network: a pair is active on all of [0, horizon] when the
    prior log holds at least `threshold` events for it."""
    if int(threshold) < 1:
        raise ConfigurationError("threshold must be >= 1")
    activity = {}
    max_id = -1
    for p in prior.pairs():
        max_id = max(max_id, p[0], p[1])
        if len(prior.events(p)) >= int(threshold):
            activity[p] = [(0.0, float(horizon))]
    if n is None:
        n = max_id + 1 if max_id >= 0 else 2
    return DynamicNetwork(int(n), float(horizon), activity=activity,
                          directed=directed)


def distance_covariates(durations, pairs=None):
    """Static field X = (1, max(log d, 0), max(log d, 0)^2) from per-pair
    travel durations in minutes."""
    values = {}
    for p, d in durations.items():
        d = float(d)
        if d <= 0:
            raise ConfigurationError(f"duration for {p} must be positive")
        ell = max(np.log(d), 0.0)
        values[tuple(p)] = (1.0, ell, ell * ell)
    if pairs is not None:
        missing = [p for p in pairs if tuple(p) not in values]
        if missing:
            raise ConfigurationError(
                f"no duration for active pairs, e.g. {missing[0]}")
    return CovariateField.static(values)


def _read_durations(path):
    out = {}
    with open(resolve_path(path), newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out[(int(row["i"]), int(row["j"]))] = float(row["minutes"])
            except (KeyError, TypeError, ValueError) as exc:
                raise DataError(f"bad duration row {row}: {exc}")
    return out


def _covariates_from_spec(spec, net=None):
    kind = spec.get("kind", "csv")
    if kind == "csv":
        return io.read_covariates_csv(resolve_path(_req(spec, "path")),
                                      bound=spec.get("bound"))
    if kind == "constant-one":
        if net is None:
            raise ConfigurationError("constant-one covariates need a network")
        return CovariateField.static({p: (1.0,) for p in net.pairs()},
                                     bound=1.0)
    if kind == "distance":
        durations = _read_durations(_req(spec, "path"))
        return distance_covariates(
            durations, pairs=net.pairs() if net is not None else None)
    raise ConfigurationError(f"unknown covariate kind '{kind}'")


def _theta_from_spec(spec, horizon):
    if "constant" in spec:
        return constant_path(tuple(spec["constant"]), horizon)
    if "amplitude" in spec:
        return swing_path(tuple(_req(spec, "base")),
                          float(spec["amplitude"]), horizon)
    if "grid" in spec:
        return ParameterPath(grid=np.asarray(_req(spec, "grid"), float),
                             values=np.asarray(_req(spec, "values"), float),
                             interpolation=spec.get("interpolation", "linear"))
    raise ConfigurationError("theta spec needs 'constant', 'amplitude' or "
                             "'grid'")


def _load_inputs(cfg):
    net = io.read_network_csv(resolve_path(_req(cfg, "network")),
                              horizon=cfg.get("horizon"),
                              directed=bool(cfg.get("directed", False)))
    log = io.read_events_csv(resolve_path(_req(cfg, "events")),
                             horizon=net.horizon)
    cov = _covariates_from_spec(_req(cfg, "covariates"), net=net)
    return net, cov, log


def _out_path(out_dir, name):
    os.makedirs(out_dir, exist_ok=True)
    return os.path.join(out_dir, name)


def cmd_simulate(cfg, out_dir):
    seed = _req(cfg, "seed")
    horizon = float(cfg.get("horizon", 1.0))
    theta = _theta_from_spec(cfg.get("theta", {"constant": (0.5, 0.5)}),
                             horizon)
    net, cov, log = er_cox_instance(seed, int(cfg.get("rep", 0)),
                                    n=int(cfg.get("n", 30)),
                                    edge_prob=float(cfg.get("edge_prob", 0.3)),
                                    horizon=horizon, theta_path=theta)
    paths = [_out_path(out_dir, "network.csv"),
             _out_path(out_dir, "covariates.csv"),
             _out_path(out_dir, "events.csv")]
    io.write_network_csv(paths[0], net)
    io.write_covariates_csv(paths[1], cov, net.pairs())
    io.write_events_csv(paths[2], log)
    print(f"simulated {log.total} events on {len(net.pairs())} active pairs")
    return paths


def cmd_estimate(cfg, out_dir):
    net, cov, log = _load_inputs(cfg)
    h = float(_req(cfg, "h"))
    kernel = get_kernel(cfg.get("kernel", "epanechnikov"))
    step = float(cfg.get("grid_step", h / 4.0))
    t0s = cfg.get("t0_grid")
    if t0s is None:
        lo, hi = h, net.horizon - h
        if hi < lo:
            raise ConfigurationError(
                f"bandwidth {h} leaves no interior anchors on [0, {net.horizon}]")
        t0s = np.linspace(lo, hi, max(2, int(round((hi - lo) / step)) + 1))
    design = CoxDesign(net, cov, log)
    gfit = _fit_global(design)
    kept, thetas, conv, iters = [], [], [], []
    skipped = 0
    init = gfit.theta
    for t0 in np.asarray(t0s, dtype=np.float64):
        try:
            fit = _fit_at(design, float(t0), h, kernel, init=init)
        except NoDataInWindow:
            skipped += 1
            continue
        init = fit.theta
        kept.append(float(t0))
        thetas.append(fit.theta)
        conv.append(fit.converged)
        iters.append(fit.iterations)
    if not kept:
        raise NoDataInWindow(float(np.median(t0s)), h)
    paths = [_out_path(out_dir, "theta_path.csv"),
             _out_path(out_dir, "global_fit.json")]
    io.write_theta_path_csv(paths[0], kept, np.vstack(thetas), conv, iters)
    io.write_json(paths[1], {
        "theta_bar": list(gfit.theta), "loglik": gfit.loglik,
        "grad_norm": gfit.grad_norm, "iterations": gfit.iterations,
        "skipped_gridpoints": skipped, "h": h, "kernel": kernel.name,
    })
    print(f"fitted {len(kept)} anchors ({skipped} skipped); "
          f"theta_bar = {np.round(gfit.theta, 6).tolist()}")
    return paths


def cmd_test(cfg, out_dir):
    net, cov, log = _load_inputs(cfg)
    h = float(_req(cfg, "h"))
    kernel = get_kernel(cfg.get("kernel", "epanechnikov"))
    delta = float(cfg.get("delta", h))
    taper = float(cfg.get("taper", h / 2.0))
    weight = WeightFunction(delta=delta, taper=taper, horizon=net.horizon)
    result = run_test(net, cov, log, h, kernel=kernel, weight=weight,
                      t0_step=cfg.get("t0_step"),
                      sigma_step=cfg.get("sigma_step"))
    paths = [_out_path(out_dir, "test_result.json"),
             _out_path(out_dir, "test_result.csv"),
             _out_path(out_dir, "theta_path.csv"),
             _out_path(out_dir, "weight.csv")]
    io.write_test_result_json(paths[0], result)
    io.write_test_result_csv(paths[1], result)
    io.write_theta_path_csv(paths[2], result.grid, result.theta_path)
    io.write_weight_csv(paths[3], result.grid, weight(result.grid))
    print(f"z = {result.z:.6f}, p = {result.p_value:.6f} "
          f"(Tn = {result.tn:.6g}, An = {result.an:.6g}, B = {result.b:.6g})")
    return paths


def cmd_bandwidth(cfg, out_dir):
    net, cov, log = _load_inputs(cfg)
    grid = [float(x) for x in _req(cfg, "h_grid")]
    curve = scan_bandwidths(net, cov, log, grid,
                            horizon_split=cfg.get("split"),
                            pred_window=cfg.get("pred_window"))
    paths = [_out_path(out_dir, "bandwidth.csv"),
             _out_path(out_dir, "bandwidth.json")]
    io.write_bandwidth_csv(paths[0], curve)
    io.write_json(paths[1], {"h_star": curve.h_star,
                             "h_converted": curve.h_converted})
    print(f"h* = {curve.h_star} -> converted {curve.h_converted}")
    return paths


def cmd_partition_check(cfg, out_dir):
    method = cfg.get("method", "chessboard")
    delta = float(_req(cfg, "delta"))
    t = float(cfg.get("t", 0.0))
    extra = {}
    if "grid" in cfg:
        g = cfg["grid"]
        rows, cols = int(_req(g, "rows")), int(_req(g, "cols"))
        torus = bool(g.get("torus", False))
        net = grid_network(rows, cols, torus=torus)
    else:
        net = io.read_network_csv(resolve_path(_req(cfg, "network")),
                                  horizon=cfg.get("horizon"))
    if method == "chessboard":
        if "grid" not in cfg:
            raise ConfigurationError("chessboard needs a grid spec")
        part = grid_chessboard((rows, cols), delta, torus=torus,
                               block_side=cfg["grid"].get("block_side"))
    elif method == "coordinate":
        anchors = [tuple(a) for a in _req(cfg, "anchors")]
        part = coordinate_partition(net, t, anchors, delta)
    elif method == "mds":
        part, achieved = mds_partition(net, t, int(cfg.get("dim", 2)), delta)
        extra["achieved_delta"] = achieved
    else:
        raise ConfigurationError(f"unknown partition method '{method}'")
    report = validate_partition(part, net, t)
    report.update(extra)
    report["method"] = method
    report["delta"] = part.delta
    report["type_count"] = part.type_count
    paths = [_out_path(out_dir, "partition.csv"),
             _out_path(out_dir, "partition_report.json")]
    io.write_partition_csv(paths[0], part)
    io.write_json(paths[1], report)
    print(f"partition ok = {report['ok']}, coverage = {report['coverage']}")
    return paths


def cmd_mc_calibration(cfg, out_dir):
    mode = cfg.get("mode", "h0")
    reps = int(_req(cfg, "reps"))
    seed = _req(cfg, "seed")
    common = dict(edge_prob=float(cfg.get("edge_prob", 0.3)),
                  h=float(cfg.get("h", 0.25)))
    if mode in ("h0", "h1"):
        res = mc_rejections(reps, seed, alternative=(mode == "h1"),
                            level=float(cfg.get("level", 0.05)),
                            amplitude=float(cfg.get("amplitude", 1.0)),
                            n=int(cfg.get("n", 30)),
                            horizon=float(cfg.get("horizon", 1.0)),
                            **common)
        paths = [_out_path(out_dir, f"mc_{mode}.json"),
                 _out_path(out_dir, f"mc_{mode}_pvalues.csv")]
        io.write_json(paths[0], res)
        io.write_rows(paths[1], ("rep", "p_value", "z"),
                       list(zip(range(len(res["p_values"])),
                                res["p_values"], res["z_scores"])))
        print(f"{mode}: rejection rate {res['rejection_rate']:.4f} "
              f"({res['completed']}/{reps} reps)")
    elif mode == "variance":
        res = mc_variance_comparison(reps, seed,
                                     n=int(cfg.get("n", 20)),
                                     horizon=float(cfg.get("horizon", 2.0)),
                                     **common)
        paths = [_out_path(out_dir, "mc_variance.json"),
                 _out_path(out_dir, "mc_variance_reps.csv")]
        io.write_json(paths[0], res)
        io.write_rows(paths[1], ("rep", "plugin", "martingale"),
                       list(zip(range(len(res["plugin"])),
                                res["plugin"], res["martingale"])))
        print(f"variance: plug-in {res['mean_plugin']:.6g} vs martingale "
              f"{res['mean_martingale']:.6g}")
    else:
        raise ConfigurationError(f"unknown mc mode '{mode}'")
    return paths


_COMMANDS = {
    "simulate": cmd_simulate,
    "estimate": cmd_estimate,
    "test": cmd_test,
    "bandwidth": cmd_bandwidth,
    "partition-check": cmd_partition_check,
    "mc-calibration": cmd_mc_calibration,
}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="netcox",
        description="Relational-event Cox models on dynamic networks: "
                    "simulation, localized fits, constancy test, bandwidth "
                    "scan, partition checks and Monte Carlo calibration.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True,
                       help="JSON config file for this subcommand")
        p.add_argument("--set", action="append", default=[], metavar="K=V",
                       help="override a config key (dotted paths allowed)")
        p.add_argument("--out", default=None,
                       help="output directory (default: config out_dir or .)")
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code not in (0, None) else 0
    try:
        cfg = load_config(args.config, args.set)
        out_dir = args.out or cfg.get("out_dir", ".")
        written = _COMMANDS[args.command](cfg, out_dir)
        manifest = _out_path(out_dir, "manifest.json")
        io.write_manifest(manifest, {**cfg, "subcommand": args.command},
                          outputs=written)
        for p in written + [manifest]:
            print(f"wrote {p}")
        return 0
    except (ConfigurationError, DomainError, InstanceTooLarge) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except (NumericError, SimulationError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return 4
    except NetcoxError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
