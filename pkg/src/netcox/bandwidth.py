"""Bandwidth selection by one-step-ahead prediction error.

For each candidate bandwidth, a locally-linear intensity model (intercept
and slope per covariate coordinate) is fitted at the start of every
prediction window using only past data, weighted by the one-sided kernel
(1/2 on [-2, 0]). The fitted model predicts per-pair event counts over
the window; the squared count error, averaged over pairs and windows, is
the selection criterion. The winning bandwidth is converted for use with
a symmetric kernel by dividing by RHO.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, DataError, FitError
from .estimate import BOX, CoxDesign, _newton, NEWTON_RTOL
from .simulate import CovariateField

RHO = 1.82


@dataclass(frozen=True, eq=False)
class BandwidthCurve:
    """Prediction-error curve over candidate bandwidths."""

    h_grid: np.ndarray
    errors: np.ndarray
    h_star: float
    h_converted: float

    def to_rows(self):
        return [(float(h), float(e)) for h, e in zip(self.h_grid, self.errors)]


def _augmented_field(cov, t_star):
    """Covariates [X, (t - t_star) X] for the locally-linear exponent."""

    def fn(pair, ts):
        x = cov.eval_many(pair, ts)
        return np.concatenate([x, (ts - t_star)[:, None] * x], axis=1)

    span = 2.0  # only used via the declared bound; windows are O(h) long
    return CovariateField.from_callback(
        q=2 * cov.q, fn=fn, bound=cov.bound * max(1.0, span))


def _onesided_fit(net, cov, log, t_star, h):
    """Locally-linear fit from data in [t_star - 2h, t_star].

    The one-sided weight (1/2 on [-2, 0] in kernel units) equals a box
    kernel of bandwidth h centered at t_star - h, which reuses the
    standard localized machinery without a boundary guard.
    """
    design = CoxDesign(net, _augmented_field(cov, t_star), log)
    t0 = t_star - h
    Xa, wa = design.window_atoms(t0, h, BOX)
    if Xa.shape[0] == 0 or float(np.sum(wa)) <= 0.0:
        return None
    Xe, we = design.window_events(t0, h, BOX)
    if Xe.shape[0] == 0:
        return None
    tol = NEWTON_RTOL * max(1.0, float(np.sum(wa)))
    try:
        sol, _, _, _, _ = _newton(Xa, wa, Xe, we, np.zeros(design.q), tol)
    except FitError:
        return None
    return sol[:cov.q], sol[cov.q:]


def _predicted_count(net, cov, pair, level, slope, t_star, lo, hi, step):
    total = 0.0
    for (a, b) in net.activity(pair):
        s, e = max(a, lo), min(b, hi)
        if e <= s:
            continue
        n = max(4, int(np.ceil((e - s) / step)))
        nodes = np.linspace(s, e, n + 1)
        x = cov.eval_many(pair, nodes)
        lam = np.exp(x @ level + (nodes - t_star) * (x @ slope))
        total += float(np.trapezoid(lam, nodes))
    return total


def prediction_error(net, cov, log, h, horizon_split=None, pred_window=None):
    """Mean squared per-pair count prediction error for bandwidth h.

    Windows of length pred_window (default h/2) tile [horizon_split,
    horizon] (default split at the midpoint). Windows whose past holds no
    usable data are skipped; if every window is skipped, that is an
    error. Only pairs with positive exposure in the prediction window
    enter the average.
    """
    if h <= 0:
        raise ConfigurationError("bandwidth must be positive")
    split = net.horizon / 2.0 if horizon_split is None else float(horizon_split)
    width = h / 2.0 if pred_window is None else float(pred_window)
    if not 0.0 < split < net.horizon:
        raise ConfigurationError(f"split {split} outside (0, {net.horizon})")
    if width <= 0 or split + width > net.horizon + 1e-12:
        raise ConfigurationError("no prediction window fits after the split")
    starts = []
    t = split
    while t + width <= net.horizon + 1e-9:
        starts.append(t)
        t += width
    step = max(width / 32.0, 1e-6)
    errs = []
    skipped = 0
    for t_star in starts:
        fit = _onesided_fit(net, cov, log, t_star, h)
        if fit is None:
            skipped += 1
            continue
        level, slope = fit
        lo, hi = t_star, min(t_star + width, net.horizon)
        sq = []
        for pair in net.pairs():
            if net.exposure(pair, lo, hi) <= 0.0:
                continue
            pred = _predicted_count(net, cov, pair, level, slope, t_star,
                                    lo, hi, step)
            obs = int(np.sum((log.events(pair) >= lo)
                             & (log.events(pair) < hi)))
            sq.append((pred - obs) ** 2)
        if sq:
            errs.append(float(np.mean(sq)))
        else:
            skipped += 1
    if skipped:
        warnings.warn(f"{skipped} of {len(starts)} prediction windows "
                      "skipped for lack of past data")
    if not errs:
        raise DataError("every prediction window was skipped")
    return float(np.mean(errs))


def select_bandwidth(h_grid, errors):
    """Pick the error-minimizing bandwidth; ties go to the smaller h."""
    h_grid = np.asarray(h_grid, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if h_grid.size < 3:
        raise ConfigurationError("need at least 3 candidate bandwidths")
    if h_grid.size != errors.size:
        raise ConfigurationError("bandwidth grid and errors differ in length")
    if not np.all(np.isfinite(errors)):
        raise ConfigurationError("errors must be finite on the whole grid")
    order = np.lexsort((h_grid, errors))
    h_star = float(h_grid[order[0]])
    return BandwidthCurve(h_grid=h_grid, errors=errors, h_star=h_star,
                          h_converted=h_star / RHO)


def scan_bandwidths(net, cov, log, h_grid, horizon_split=None,
                    pred_window=None):
    """Evaluate prediction_error over a grid and select."""
    errors = [prediction_error(net, cov, log, h, horizon_split, pred_window)
              for h in h_grid]
    return select_bandwidth(h_grid, errors)
