"""Monte Carlo harness for test size and power on a synthetic instance.

The instance: a static Erdos-Renyi network, per-pair static covariates
(1, U(-1, 1)) and intensity exp(theta(t)'X). Under the null theta is
constant; under the alternative the slope coordinate swings through a
full sine cycle. All randomness is derived from counter-based streams
keyed by (seed, rep), so instances are reproducible and independent
across reps.
"""

from __future__ import annotations

import numpy as np

from .errors import ConfigurationError, NetcoxError
from .estimate import EPANECHNIKOV
from .goftest import run_test, variance_b_martingale
from .netcore import DynamicNetwork
from .simulate import (CovariateField, ParameterPath, TAG_COVARIATES,
                       TAG_NETWORK, pair_stream, simulate_cox)


def constant_path(theta, horizon):
    return ParameterPath.constant(theta, horizon)


def swing_path(base, amplitude, horizon, points=201):
    """Slope coordinate rides a full sine cycle of the given amplitude
    (total swing = 2 * amplitude); the intercept stays at base[0]."""
    grid = np.linspace(0.0, horizon, points)
    vals = np.tile(np.asarray(base, dtype=np.float64), (points, 1))
    vals[:, -1] = base[-1] + amplitude * np.sin(2.0 * np.pi * grid / horizon)
    return ParameterPath(grid=grid, values=vals, interpolation="linear")


def er_cox_instance(seed, rep, n=30, edge_prob=0.3, horizon=1.0,
                    theta_path=None):
    """One simulated dataset: network, covariates and events."""
    if theta_path is None:
        theta_path = constant_path((0.5, 0.5), horizon)
    activity = {}
    values = {}
    for i in range(n):
        for j in range(i + 1, n):
            if pair_stream((seed, rep), TAG_NETWORK, i, j).random() < edge_prob:
                activity[(i, j)] = [(0.0, horizon)]
                u = pair_stream((seed, rep), TAG_COVARIATES, i, j).uniform(-1, 1)
                values[(i, j)] = (1.0, u)
    net = DynamicNetwork(n, horizon, activity=activity)
    cov = CovariateField.static(values, bound=1.0)
    log = simulate_cox(net, cov, theta_path, seed=(seed, rep))
    return net, cov, log


def mc_rejections(reps, seed, alternative=False, n=30, edge_prob=0.3,
                  horizon=1.0, h=0.25, level=0.05, kernel=EPANECHNIKOV,
                  amplitude=1.0):
    """Run the constancy test on `reps` independent datasets.

    Returns per-rep p-values and z-scores plus the rejection rate at the
    given level. Reps where the test degenerates (no data, singular fits)
    are recorded and excluded from the rate's denominator.
    """
    if reps < 1:
        raise ConfigurationError("need at least one replication")
    base = (0.5, 0.5)
    path = (swing_path(base, amplitude, horizon) if alternative
            else constant_path(base, horizon))
    p_values, z_scores, failures = [], [], []
    for rep in range(reps):
        net, cov, log = er_cox_instance(seed, rep, n=n, edge_prob=edge_prob,
                                        horizon=horizon, theta_path=path)
        try:
            res = run_test(net, cov, log, h, kernel=kernel)
        except NetcoxError as exc:
            failures.append((rep, type(exc).__name__))
            continue
        p_values.append(res.p_value)
        z_scores.append(res.z)
    done = len(p_values)
    rate = (float(np.mean(np.asarray(p_values) < level)) if done else
            float("nan"))
    return {
        "reps": reps,
        "completed": done,
        "failures": failures,
        "level": level,
        "rejection_rate": rate,
        "p_values": p_values,
        "z_scores": z_scores,
        "alternative": bool(alternative),
        "seed": seed,
        "h": h,
        "n": n,
    }


def mc_variance_comparison(reps, seed, n=20, edge_prob=0.3, horizon=2.0,
                           h=0.25, kernel=EPANECHNIKOV):
    """Per-rep plug-in vs martingale-residual variance estimates."""
    if reps < 1:
        raise ConfigurationError("need at least one replication")
    path = constant_path((0.5, 0.5), horizon)
    plug, mart, failures = [], [], []
    for rep in range(reps):
        net, cov, log = er_cox_instance(seed, rep, n=n, edge_prob=edge_prob,
                                        horizon=horizon, theta_path=path)
        try:
            res = run_test(net, cov, log, h, kernel=kernel)
            alt = variance_b_martingale(net, cov, log, res.theta_bar, h,
                                        kernel=kernel)
        except NetcoxError as exc:
            failures.append((rep, type(exc).__name__))
            continue
        plug.append(res.b)
        mart.append(alt)
    return {
        "reps": reps,
        "completed": len(plug),
        "failures": failures,
        "plugin": plug,
        "martingale": mart,
        "mean_plugin": float(np.mean(plug)) if plug else float("nan"),
        "mean_martingale": float(np.mean(mart)) if mart else float("nan"),
        "seed": seed,
        "h": h,
        "n": n,
    }
