"""L2-type test for constancy of the intensity coefficients.

The statistic integrates the squared distance between the localized and
the global coefficient estimates, weighted by the smoothed activity share
and a compactly supported weight function. After centering and scaling it
is compared against a standard normal:

    z = (r_n sqrt(h) Tn - An / sqrt(h)) / sqrt(Bhat),  p = 2 (1 - Phi(|z|)).

Two variance estimates are provided: the plug-in trace formula (used by
run_test) and an independent martingale-residual accumulation kept at
desk scale as a cross-check.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .errors import (ConfigurationError, DegenerateVariance,
                     InstanceTooLarge, NoDataInWindow, TestError)
from .estimate import (EPANECHNIKOV, CoxDesign, SigmaPath, _fit_at,
                       _fit_global, pbar_hat_many, QUAD_REFINE)


@dataclass(frozen=True)
class WeightFunction:
    """Plateau weight with cubic smoothstep ramps, supported on
    [delta, horizon - delta].

    delta = taper = 0 yields the constant weight 1; that degenerate form
    exists for oracle tests and is rejected by run_test, which needs
    delta >= h.
    """

    delta: float
    taper: float
    horizon: float

    def __post_init__(self):
        if self.delta < 0 or self.taper < 0:
            raise ConfigurationError("weight delta and taper must be >= 0")
        if 2.0 * (self.delta + self.taper) > self.horizon + 1e-12:
            raise ConfigurationError("weight ramps exceed the horizon")

    @classmethod
    def default(cls, horizon, h):
        return cls(delta=float(h), taper=float(h) / 2.0, horizon=float(horizon))

    @property
    def support(self):
        return (self.delta, self.horizon - self.delta)

    def __call__(self, ts):
        ts = np.asarray(ts, dtype=np.float64)
        out = np.zeros_like(ts)
        lo, hi = self.support
        if self.taper == 0.0:
            out[(ts >= lo) & (ts <= hi)] = 1.0
            return out
        inside = (ts >= lo) & (ts <= hi)
        u = np.clip((ts - lo) / self.taper, 0.0, 1.0)
        v = np.clip((hi - ts) / self.taper, 0.0, 1.0)
        ramp = np.minimum(u, v)
        out[inside] = (3.0 * ramp ** 2 - 2.0 * ramp ** 3)[inside]
        return out


@dataclass(frozen=True, eq=False)
class TestResult:
    """Everything run_test computed, plus diagnostics."""

    tn: float
    an: float
    b: float
    z: float
    p_value: float
    h: float
    kernel: str
    r_n: int
    theta_bar: np.ndarray
    grid: np.ndarray
    theta_path: np.ndarray
    excluded_gridpoints: int
    diagnostics: dict

    def to_dict(self):
        return {
            "tn": self.tn, "an": self.an, "b": self.b, "z": self.z,
            "p_value": self.p_value, "h": self.h, "kernel": self.kernel,
            "r_n": self.r_n,
            "theta_bar": [float(v) for v in self.theta_bar],
            "excluded_gridpoints": self.excluded_gridpoints,
            "diagnostics": {k: (float(v) if np.isscalar(v) else v)
                            for k, v in self.diagnostics.items()},
        }


def _default_grid(weight, step):
    lo, hi = weight.support
    if hi <= lo:
        raise ConfigurationError("weight support is empty")
    npts = max(2, int(round((hi - lo) / step)) + 1)
    return np.linspace(lo, hi, npts)


def _local_paths(design, h, kernel, weight, t0_grid, theta_bar):
    """Localized fits over the grid; windows without data are excluded."""
    kept_t, kept_theta, kept_fits = [], [], []
    excluded = 0
    init = np.array(theta_bar, dtype=np.float64)
    for t0 in t0_grid:
        try:
            fit = _fit_at(design, t0, h, kernel, init=init)
        except NoDataInWindow:
            excluded += 1
            warnings.warn(f"no data in window at t0={t0}; grid point excluded")
            continue
        init = fit.theta
        kept_t.append(t0)
        kept_theta.append(fit.theta)
        kept_fits.append(fit)
    if excluded > 0.2 * len(t0_grid):
        raise TestError(
            f"{excluded} of {len(t0_grid)} grid points had no data")
    if len(kept_t) < 2:
        raise TestError("fewer than two usable grid points")
    return (np.asarray(kept_t), np.vstack(kept_theta), kept_fits, excluded)


def test_statistic(net, cov, log, h, kernel=EPANECHNIKOV, weight=None,
                   t0_grid=None, theta_bar=None, local_thetas=None):
    """Weighted L2 distance Tn between localized and global estimates.

    theta_bar and local_thetas can be injected (matching t0_grid) to
    decouple the integral from the fitting step; by default both are
    estimated from the data.
    """
    design = CoxDesign(net, cov, log)
    if weight is None:
        weight = WeightFunction.default(net.horizon, h)
    if t0_grid is None:
        t0_grid = _default_grid(weight, h / 4.0)
    t0_grid = np.asarray(t0_grid, dtype=np.float64)
    if theta_bar is None:
        theta_bar = _fit_global(design).theta
    if local_thetas is None:
        t_kept, thetas, _, _ = _local_paths(design, h, kernel, weight,
                                            t0_grid, theta_bar)
    else:
        t_kept = t0_grid
        thetas = np.asarray(local_thetas, dtype=np.float64)
    return _tn_integral(design.net, t_kept, thetas,
                        np.asarray(theta_bar, float), h, kernel, weight)


def _tn_integral(net, t_grid, thetas, theta_bar, h, kernel, weight):
    dev = thetas - theta_bar[None, :]
    sq = np.einsum("ij,ij->i", dev, dev)
    pbar = pbar_hat_many(net, t_grid, h, kernel)
    return float(np.trapezoid(sq * pbar * weight(t_grid), t_grid))


def _pbar_on(net, grid, h, kernel, pbar_fn):
    if pbar_fn is None:
        return pbar_hat_many(net, grid, h, kernel)
    return np.asarray(pbar_fn(grid), dtype=np.float64)


def _support_coefficients(sigma_path, weight, net, h, kernel, pbar_fn):
    """Per-node trapezoid weight, w/pbar ratio and squared inverse, with
    support and invertibility checks."""
    grid = sigma_path.grid
    wvals = weight(grid)
    live = wvals > 0.0
    bad = live & ~sigma_path.ok
    if bad.any():
        raise TestError(
            f"second-moment matrix not invertible at t={grid[bad][0]}")
    pbar = _pbar_on(net, grid, h, kernel, pbar_fn)
    tiny = pbar[live] <= 1e-300
    if tiny.any():
        raise TestError(
            f"no smoothed exposure at t={grid[live][tiny][0]} inside the "
            "weight support")
    ratio = np.zeros_like(wvals)
    ratio[live] = wvals[live] / pbar[live]
    # trapezoid weights: half steps at the ends
    tw = np.empty_like(grid)
    d = np.diff(grid)
    tw[0] = d[0] / 2
    tw[-1] = d[-1] / 2
    tw[1:-1] = (d[:-1] + d[1:]) / 2
    return tw, ratio, live, pbar


def centering_an(net, cov, log, sigma_path, h, kernel=EPANECHNIKOV,
                 weight=None, pbar_fn=None):
    """Centering term: kernel-squared weighted quadratic forms summed over
    events.

    The inner time integral runs over the sigma-path grid; pbar_fn can
    override the smoothed activity share (oracle tests inject constants).
    """
    if weight is None:
        weight = WeightFunction.default(net.horizon, h)
    design = CoxDesign(net, cov, log)
    if design.ev_time.size == 0:
        return 0.0
    tw, ratio, live, _ = _support_coefficients(sigma_path, weight, net, h,
                                               kernel, pbar_fn)
    grid = sigma_path.grid
    coef = tw * ratio
    m = np.where(live[:, None, None], sigma_path.inv2, 0.0)
    qf = np.einsum("ep,jpq,eq->ej", design.ev_X, m, design.ev_X)
    ku = kernel((design.ev_time[:, None] - grid[None, :]) / h)
    w2 = ku ** 2 / h
    return float((w2 * qf * coef[None, :]).sum() / design.r_n)


def variance_b(sigma_path, weight, k4, t0_grid=None):
    """Plug-in variance: 4 K4 times the weighted trace integral."""
    grid = sigma_path.grid if t0_grid is None else np.asarray(t0_grid, float)
    wvals = weight(grid)
    live = wvals > 0.0
    if not live.any():
        return 0.0
    trace = np.einsum("jii->j", sigma_path.inv2)
    if t0_grid is not None:
        trace = np.interp(grid, sigma_path.grid, trace)
        ok = np.interp(grid, sigma_path.grid,
                       sigma_path.ok.astype(float)) >= 1.0 - 1e-9
    else:
        ok = sigma_path.ok
    if (live & ~ok).any():
        raise TestError("second-moment matrix not invertible inside the "
                        "weight support")
    return float(4.0 * k4 * np.trapezoid(trace * wvals ** 2, grid))


def run_test(net, cov, log, h, kernel=EPANECHNIKOV, weight=None,
             t0_step=None, sigma_step=None):
    """Full constancy test: localized fits, Tn, centering, variance, z, p."""
    if h <= 0 or 2.0 * h > net.horizon:
        raise ConfigurationError(
            f"bandwidth {h} incompatible with horizon {net.horizon}")
    if weight is None:
        weight = WeightFunction.default(net.horizon, h)
    if weight.delta < h - 1e-12:
        raise ConfigurationError(
            "weight support exceeds the fit boundary; need delta >= h")
    design = CoxDesign(net, cov, log)
    grid = _default_grid(weight, t0_step if t0_step else h / 4.0)
    gfit = _fit_global(design)
    t_kept, thetas, fits, excluded = _local_paths(design, h, kernel, weight,
                                                  grid, gfit.theta)
    tn = _tn_integral(net, t_kept, thetas, gfit.theta, h, kernel, weight)
    sigma_path = SigmaPath.build(design, gfit.theta, h, kernel,
                                 step=sigma_step if sigma_step else h / QUAD_REFINE)
    pbar_grid = pbar_hat_many(net, sigma_path.grid, h, kernel)
    an = centering_an(net, cov, log, sigma_path, h, kernel, weight,
                      pbar_fn=lambda ts: np.interp(ts, sigma_path.grid,
                                                   pbar_grid))
    bhat = variance_b(sigma_path, weight, kernel.k4)
    if not np.isfinite(bhat) or bhat <= 0.0:
        raise DegenerateVariance(f"variance estimate {bhat} is not positive")
    z = (design.r_n * np.sqrt(h) * tn - an / np.sqrt(h)) / np.sqrt(bhat)
    p_value = float(2.0 * stats.norm.sf(abs(z)))
    live = weight(sigma_path.grid) > 0
    conds = [np.linalg.cond(s) for s, okk, lv in
             zip(sigma_path.sigma, sigma_path.ok, live) if okk and lv]
    diagnostics = {
        "min_pbar_in_support": float(pbar_grid[live].min()) if live.any() else 0.0,
        "max_sigma_cond": float(max(conds)) if conds else float("nan"),
        "dropped_events": design.dropped_events,
        "max_kantorovich_r": float(max((f.kantorovich_r for f in fits),
                                       default=0.0)),
        "newton_iterations": int(sum(f.iterations for f in fits)),
    }
    return TestResult(tn=float(tn), an=float(an), b=float(bhat), z=float(z),
                      p_value=p_value, h=float(h), kernel=kernel.name,
                      r_n=design.r_n, theta_bar=gfit.theta, grid=t_kept,
                      theta_path=thetas, excluded_gridpoints=excluded,
                      diagnostics=diagnostics)


def variance_b_martingale(net, cov, log, theta_bar, h, kernel=EPANECHNIKOV,
                          weight=None, sigma_path=None, pbar_fn=None,
                          max_pairs=2000, max_events=20000):
    """Martingale-residual variance cross-check.

    Accumulates squared compensated interactions between pairs using the
    fitted constant coefficients as plug-in, and integrates them against
    the active intensity. Deliberately restricted to small instances; the
    cost grows with pairs x events.
    """
    design = CoxDesign(net, cov, log)
    if design.r_n > max_pairs or design.ev_time.size > max_events:
        raise InstanceTooLarge(
            f"{design.r_n} pairs / {design.ev_time.size} events exceed the "
            f"configured caps ({max_pairs}, {max_events})")
    if weight is None:
        weight = WeightFunction.default(net.horizon, h)
    theta_bar = np.asarray(theta_bar, dtype=np.float64)
    if sigma_path is None:
        sigma_path = SigmaPath.build(design, theta_bar, h, kernel)
    tw, ratio, live, _ = _support_coefficients(sigma_path, weight, net, h,
                                               kernel, pbar_fn)
    grid = sigma_path.grid
    minv2 = np.where(live[:, None, None], sigma_path.inv2, 0.0)
    coef = tw * ratio
    horizon = design.horizon
    step = h / QUAD_REFINE
    npairs = len(design.pair_keys)
    q = design.q

    # per-pair static snapshots of covariates at event times are already in
    # the design; activity masks and covariates at arbitrary nodes are
    # evaluated on demand below.
    def lam_at(nodes):
        """(npairs, len(nodes)) intensity exp(theta_bar'X) * activity."""
        out = np.zeros((npairs, len(nodes)))
        for k, p in enumerate(design.pair_keys):
            mask = np.zeros(len(nodes), dtype=bool)
            for (a, b) in design.net.activity(p):
                mask |= (nodes >= a) & (nodes < b)
            if mask.any():
                x = design.cov.eval_many(p, nodes[mask])
                out[k, mask] = np.exp(x @ theta_bar)
        return out

    s_nodes = np.unique(np.concatenate([
        np.linspace(0.0, horizon, max(2, int(np.ceil(horizon / step)) + 1)),
        design.ev_time + 1e-9,
    ]))
    s_nodes = s_nodes[(s_nodes >= 0) & (s_nodes <= horizon)]

    def j_matrices(s, t_batch):
        """J(s, t) for a batch of t, via the sigma-path grid quadrature."""
        alpha = coef * kernel((s - grid) / h)
        kt = kernel((t_batch[None, :] - grid[:, None]) / h) / h
        return np.einsum("j,jt,jab->tab", alpha, kt, minv2)

    integrand = np.zeros(len(s_nodes))
    x_static = design.cov.kind == "static"
    if x_static:
        xs = np.vstack([design.cov.eval(p, 0.0) for p in design.pair_keys])
    for si, s in enumerate(s_nodes):
        lo = max(0.0, s - 2.0 * h)
        if s <= lo:
            continue
        nq = max(1, int(np.ceil((s - lo) / step)))
        tq = np.linspace(lo, s, nq + 1)
        wq = np.full(nq + 1, (s - lo) / nq)
        wq[0] *= 0.5
        wq[-1] *= 0.5
        sel = design.ev_time < s - 1e-12
        ev_t = design.ev_time[sel]
        ev_p = design.ev_pair[sel]
        ev_x = design.ev_X[sel]
        j_ev = j_matrices(s, ev_t) if ev_t.size else np.zeros((0, q, q))
        j_tq = j_matrices(s, tq)
        lam_tq = lam_at(tq)
        v = np.zeros((npairs, q))
        if ev_t.size:
            contrib = np.einsum("tab,tb->ta", j_ev, ev_x)
            np.add.at(v, ev_p, contrib)
        if x_static:
            jw = np.einsum("t,tab->tab", wq, j_tq)
            comp = np.einsum("kt,tab,kb->ka", lam_tq, jw, xs)
        else:
            comp = np.zeros((npairs, q))
            for k, p in enumerate(design.pair_keys):
                xk = design.cov.eval_many(p, tq)
                comp[k] = np.einsum("t,tab,tb->a", wq * lam_tq[k], j_tq, xk)
        v -= comp
        w_total = v.T @ v
        lam_s = lam_at(np.array([s]))[:, 0]
        if x_static:
            xv = np.einsum("ka,ka->k", xs @ w_total, xs)
            own = np.einsum("ka,ka->k", xs, v) ** 2
        else:
            x_s = np.vstack([design.cov.eval(p, s) for p in design.pair_keys])
            xv = np.einsum("ka,ka->k", x_s @ w_total, x_s)
            own = np.einsum("ka,ka->k", x_s, v) ** 2
        integrand[si] = float(np.sum(lam_s * (xv - own)))
    total = np.trapezoid(integrand, s_nodes)
    return float(4.0 * total / (h * design.r_n ** 2))
