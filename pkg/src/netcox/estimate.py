"""Kernel-localized likelihood estimation for Cox event intensities.

The localized log-likelihood at anchor t0 weights both the event sum and
the exposure integral with K((t - t0)/h)/h. Exposure integrals use
composite trapezoid quadrature at step h/20 with activity and covariate
breakpoints as nodes, so score and curvature below are the exact
derivatives of the discretized objective. The smoothed activity share
pbar uses the closed-form kernel integral per activity piece instead.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import backend
from .errors import (ConfigurationError, DomainError, FitError,
                     NoDataInWindow)

QUAD_REFINE = 20          # quadrature step = h / QUAD_REFINE
NEWTON_MAX_ITER = 50
NEWTON_RTOL = 1e-8


class Kernel:
    """Symmetric localization density on [-1, 1].

    `breakpoints` are the knots of the piecewise-polynomial form; the
    variance-constant quadrature and exact integrals rely on them. The box
    kernel is kept for analytic oracle tests only; fits default to the
    Epanechnikov kernel.
    """

    def __init__(self, name, kernel_id, breakpoints, scale=1.0):
        self.name = name
        self.kernel_id = kernel_id
        self.breakpoints = tuple(float(b) for b in breakpoints)
        self.scale = float(scale)
        self._k4 = None

    def __call__(self, u):
        vals = backend.kernel_values(np.asarray(u, dtype=np.float64),
                                     self.kernel_id)
        return vals if self.scale == 1.0 else self.scale * vals

    def cdf(self, u):
        """Closed-form antiderivative, clipped to [0, scale]."""
        u = np.clip(np.asarray(u, dtype=np.float64), -1.0, 1.0)
        if self.kernel_id == backend.EPANECHNIKOV_ID:
            out = (2.0 + 3.0 * u - u ** 3) / 4.0
        elif self.kernel_id == backend.TRIANGULAR_ID:
            out = np.where(u <= 0.0, 0.5 * (1.0 + u) ** 2,
                           1.0 - 0.5 * (1.0 - u) ** 2)
        elif self.kernel_id == backend.BOX_ID:
            out = 0.5 * (u + 1.0)
        else:
            raise ConfigurationError(f"unknown kernel id {self.kernel_id}")
        return self.scale * out

    def mass(self, a, b, t0, h):
        """Exact value of the (1/h)-scaled kernel integral over [a, b]."""
        return self.cdf((np.asarray(b, float) - t0) / h) - \
            self.cdf((np.asarray(a, float) - t0) / h)

    def scaled(self, c):
        """c * K; not a density, used by homogeneity oracle tests."""
        return Kernel(f"{c}*{self.name}", self.kernel_id, self.breakpoints,
                      scale=self.scale * c)

    @property
    def k4(self):
        if self._k4 is None:
            self._k4 = k4_constant(self)
        return self._k4

    def __repr__(self):
        return f"Kernel({self.name})"


EPANECHNIKOV = Kernel("epanechnikov", backend.EPANECHNIKOV_ID, (-1.0, 1.0))
TRIANGULAR = Kernel("triangular", backend.TRIANGULAR_ID, (-1.0, 0.0, 1.0))
BOX = Kernel("box", backend.BOX_ID, (-1.0, 1.0))

_KERNELS = {k.name: k for k in (EPANECHNIKOV, TRIANGULAR, BOX)}


def get_kernel(name):
    try:
        return _KERNELS[name]
    except KeyError:
        raise ConfigurationError(
            f"unknown kernel {name!r}; choose from {sorted(_KERNELS)}")


def _segments_trapz(fn, lo, hi, cuts, step):
    """Breakpoint-aware composite trapezoid of fn over [lo, hi].

    Integrates each inter-breakpoint segment separately, evaluating the
    segment ends a hair inside so jump discontinuities at the knots do not
    leak mass across segments.
    """
    knots = [lo] + [c for c in cuts if lo < c < hi] + [hi]
    total = 0.0
    for a, b in zip(knots[:-1], knots[1:]):
        n = max(1, int(np.ceil((b - a) / step)))
        x = np.linspace(a, b, n + 1)
        xe = x.copy()
        eps = (b - a) * 1e-9
        xe[0] += eps
        xe[-1] -= eps
        total += np.trapezoid(fn(xe), x)
    return total


def k4_constant(kernel, step=1e-3):
    """Squared self-convolution constant of the kernel.

    Nested quadrature at the stated step for both layers; grids include
    the kernel breakpoints so discontinuous kernels (box) only incur the
    smooth-segment trapezoid error.
    """
    breaks = np.asarray(kernel.breakpoints)

    def inner(u):
        hi = min(1.0, 1.0 - u)
        if hi <= -1.0:
            return 0.0
        cuts = np.concatenate([breaks, breaks - u])
        return _segments_trapz(lambda v: kernel(v) * kernel(v + u),
                               -1.0, hi, np.unique(cuts), step)

    outer_cuts = np.unique(np.concatenate(
        [[0.0, 2.0], np.abs(breaks[:, None] - breaks[None, :]).ravel()]))
    outer_cuts = outer_cuts[(outer_cuts >= 0.0) & (outer_cuts <= 2.0)]
    total = 0.0
    for a, b in zip(outer_cuts[:-1], outer_cuts[1:]):
        n = max(1, int(np.ceil((b - a) / step)))
        x = np.linspace(a, b, n + 1)
        y = np.array([inner(u) ** 2 for u in x])
        total += np.trapezoid(y, x)
    return float(total)


def _pair_count(net):
    return net.pair_count


class CoxDesign:
    """Flattened (network, covariates, events) view for likelihood work.

    Pieces are maximal intervals where the pair is active and the
    covariate vector is constant; callback fields keep plain activity
    pieces and sample covariates at quadrature nodes. Events on inactive
    pairs or at inactive times are excluded from the likelihood and
    counted in `dropped_events`.
    """

    def __init__(self, net, cov, log):
        self.net = net
        self.cov = cov
        self.log = log
        self.r_n = _pair_count(net)
        self.horizon = net.horizon
        self.q = cov.q
        self.pair_keys = net.pairs()
        pix = {p: k for k, p in enumerate(self.pair_keys)}
        lo, hi, ppair, pX = [], [], [], []
        self.callback = cov.kind == "callback"
        for p in self.pair_keys:
            for (a, b) in net.activity(p):
                for (s, e, x) in cov.pieces(p, a, b):
                    lo.append(s)
                    hi.append(e)
                    ppair.append(pix[p])
                    if not self.callback:
                        pX.append(x)
        self.piece_lo = np.asarray(lo, dtype=np.float64)
        self.piece_hi = np.asarray(hi, dtype=np.float64)
        self.piece_pair = np.asarray(ppair, dtype=np.intp)
        self.piece_X = (np.asarray(pX, dtype=np.float64).reshape(-1, self.q)
                        if not self.callback else None)
        ev_t, ev_pair, dropped = [], [], 0
        for p in log.pairs():
            if p not in pix:
                dropped += len(log.events(p))
                continue
            for t in log.events(p):
                if any(a <= t < b for a, b in net.activity(p)):
                    ev_t.append(t)
                    ev_pair.append(pix[p])
                else:
                    dropped += 1
        self.ev_time = np.asarray(ev_t, dtype=np.float64)
        self.ev_pair = np.asarray(ev_pair, dtype=np.intp)
        order = np.argsort(self.ev_time, kind="stable")
        self.ev_time = self.ev_time[order]
        self.ev_pair = self.ev_pair[order]
        if self.ev_time.size:
            self.ev_X = np.vstack([
                cov.eval(self.pair_keys[k], t)
                for k, t in zip(self.ev_pair, self.ev_time)])
        else:
            self.ev_X = np.empty((0, self.q))
        self.dropped_events = dropped
        if dropped:
            warnings.warn(f"{dropped} events outside network activity were "
                          "excluded from the likelihood")

    def window_atoms(self, t0, h, kernel):
        """Quadrature atoms (X, w) for the exposure integral at t0."""
        step = h / QUAD_REFINE
        lo = np.maximum(self.piece_lo, t0 - h)
        hi = np.minimum(self.piece_hi, t0 + h)
        sel = hi > lo
        if not self.callback:
            w = backend.segment_kernel_mass(lo[sel], hi[sel], t0, h,
                                            kernel.kernel_id, step)
            X = self.piece_X[sel]
            keep = w > 0.0
            return X[keep], w[keep]
        Xs, ws = [], []
        for a, b, k in zip(lo[sel], hi[sel], self.piece_pair[sel]):
            n = max(1, int(np.ceil((b - a) / step)))
            nodes = np.linspace(a, b, n + 1)
            tw = np.full(n + 1, (b - a) / n)
            tw[0] *= 0.5
            tw[-1] *= 0.5
            kv = kernel((nodes - t0) / h) / h
            keep = kv > 0
            if keep.any():
                Xs.append(self.cov.eval_many(self.pair_keys[k], nodes[keep]))
                ws.append((tw * kv)[keep])
        if not Xs:
            return np.empty((0, self.q)), np.empty(0)
        return np.vstack(Xs), np.concatenate(ws)

    def window_events(self, t0, h, kernel):
        we = kernel((self.ev_time - t0) / h) / h
        sel = we > 0.0
        return self.ev_X[sel], we[sel]

    def global_atoms(self):
        """Atoms for the unkernelized likelihood (exact piece lengths)."""
        if not self.callback:
            return self.piece_X, self.piece_hi - self.piece_lo
        Xs, ws = [], []
        for a, b, k in zip(self.piece_lo, self.piece_hi, self.piece_pair):
            n = max(8, int(np.ceil((b - a) / (self.horizon / 400))))
            nodes = np.linspace(a, b, n + 1)
            tw = np.full(n + 1, (b - a) / n)
            tw[0] *= 0.5
            tw[-1] *= 0.5
            Xs.append(self.cov.eval_many(self.pair_keys[k], nodes))
            ws.append(tw)
        if not Xs:
            return np.empty((0, self.q)), np.empty(0)
        return np.vstack(Xs), np.concatenate(ws)

    def global_events(self):
        return self.ev_X, np.ones(self.ev_time.shape[0])


def _terms(X_atoms, w_atoms, X_ev, w_ev, theta):
    sumexp, g2, h2 = backend.cox_accumulate(X_atoms, w_atoms, theta)
    value = float(w_ev @ (X_ev @ theta)) - sumexp
    score = X_ev.T @ w_ev - g2
    return value, score, -h2


def local_loglik(net, cov, log, theta, t0, h, kernel=EPANECHNIKOV):
    """Localized log-likelihood value at anchor t0."""
    design = CoxDesign(net, cov, log)
    theta = np.asarray(theta, dtype=np.float64)
    Xa, wa = design.window_atoms(t0, h, kernel)
    Xe, we = design.window_events(t0, h, kernel)
    return _terms(Xa, wa, Xe, we, theta)[0]


def local_score_hessian(net, cov, log, theta, t0, h, kernel=EPANECHNIKOV):
    """Gradient and curvature of the localized log-likelihood.

    These are the exact derivatives of local_loglik as implemented, i.e.
    of the discretized objective, so finite differences of the value
    reproduce them to rounding.
    """
    design = CoxDesign(net, cov, log)
    theta = np.asarray(theta, dtype=np.float64)
    Xa, wa = design.window_atoms(t0, h, kernel)
    Xe, we = design.window_events(t0, h, kernel)
    _, score, hess = _terms(Xa, wa, Xe, we, theta)
    return score, hess


@dataclass(frozen=True, eq=False)
class LocalFit:
    """Result of one localized Newton fit."""

    t0: float
    h: float
    theta: np.ndarray
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool
    kantorovich_r: float
    flags: tuple = ()


@dataclass(frozen=True, eq=False)
class GlobalFit:
    """Result of the unkernelized fit (the constant-parameter estimate)."""

    theta: np.ndarray
    loglik: float
    grad_norm: float
    iterations: int
    converged: bool


def _newton(Xa, wa, Xe, we, init, tol):
    theta = np.array(init, dtype=np.float64)
    value, score, hess = _terms(Xa, wa, Xe, we, theta)
    iters = 0
    while True:
        gnorm = float(np.linalg.norm(score))
        if gnorm <= tol:
            return theta, value, gnorm, iters, True
        if iters >= NEWTON_MAX_ITER:
            raise FitError("Newton did not converge", last_theta=theta,
                           grad_norm=gnorm, iterations=iters)
        try:
            step = np.linalg.solve(hess, -score)
        except np.linalg.LinAlgError:
            raise FitError("singular curvature (collinear covariates or "
                           "no events)", last_theta=theta, grad_norm=gnorm,
                           iterations=iters)
        alpha = 1.0
        for _ in range(40):
            cand = theta + alpha * step
            v2, s2, h2 = _terms(Xa, wa, Xe, we, cand)
            if np.isfinite(v2) and v2 >= value - 1e-12 * max(1.0, abs(value)):
                theta, value, score, hess = cand, v2, s2, h2
                break
            alpha *= 0.5
        else:
            raise FitError("line search failed", last_theta=theta,
                           grad_norm=gnorm, iterations=iters)
        iters += 1


def _kantorovich(Xa, wa, Xe, we, init, bound, r_n, pbar_exact):
    """Newton-Kantorovich contraction product at the starting point.

    Uses the distance-to-first-iterate eta, the inverse-curvature norm
    and a Lipschitz constant for the normalized curvature driven by the
    declared covariate bound; values above 1/2 flag a start outside the
    guaranteed basin.
    """
    _, score, hess = _terms(Xa, wa, Xe, we, np.asarray(init, float))
    denom = max(float(np.sum(wa)), 1e-300)
    try:
        step = np.linalg.solve(hess, score)
        b_norm = float(np.linalg.norm(np.linalg.inv(hess / denom), 2))
    except np.linalg.LinAlgError:
        return np.inf
    eta = float(np.linalg.norm(step))
    tau = float(np.linalg.norm(np.asarray(init, float))) + 2.0 * eta
    scale = denom / max(r_n * pbar_exact, 1e-300)
    k_lip = bound ** 3 * np.exp(min(tau * bound, 700.0)) * scale
    return b_norm * k_lip * eta


def fit_local(net, cov, log, t0, h, kernel=EPANECHNIKOV, init=None):
    """Maximize the localized log-likelihood at anchor t0.

    t0 must keep the kernel window inside the observation window
    ([h, horizon - h]); windows without exposure raise NoDataInWindow.
    """
    design = CoxDesign(net, cov, log)
    return _fit_at(design, t0, h, kernel, init)


def _fit_at(design, t0, h, kernel, init=None):
    if h <= 0:
        raise DomainError("bandwidth must be positive")
    if not (h - 1e-12 <= t0 <= design.horizon - h + 1e-12):
        raise DomainError(
            f"anchor {t0} outside [{h}, {design.horizon - h}] for bandwidth {h}")
    Xa, wa = design.window_atoms(t0, h, kernel)
    if Xa.shape[0] == 0 or float(np.sum(wa)) <= 0.0:
        raise NoDataInWindow(t0, h)
    Xe, we = design.window_events(t0, h, kernel)
    pb = pbar_hat(design.net, t0, h, kernel)
    tol = NEWTON_RTOL * max(1.0, design.r_n * pb)
    if init is None:
        init = np.zeros(design.q)
    r = _kantorovich(Xa, wa, Xe, we, init, design.cov.bound, design.r_n, pb)
    theta, value, gnorm, iters, conv = _newton(Xa, wa, Xe, we, init, tol)
    flags = () if r <= 0.5 else ("kantorovich",)
    return LocalFit(t0=float(t0), h=float(h), theta=theta, loglik=value,
                    grad_norm=gnorm, iterations=iters, converged=conv,
                    kantorovich_r=float(r), flags=flags)


def fit_global(net, cov, log, init=None):
    """Maximize the unkernelized log-likelihood over the whole window."""
    design = CoxDesign(net, cov, log)
    return _fit_global(design, init)


def _fit_global(design, init=None):
    Xa, wa = design.global_atoms()
    if Xa.shape[0] == 0 or float(np.sum(wa)) <= 0.0:
        raise NoDataInWindow(design.horizon / 2.0, design.horizon / 2.0)
    Xe, we = design.global_events()
    tol = NEWTON_RTOL * max(1.0, float(np.sum(wa)))
    if init is None:
        init = np.zeros(design.q)
    theta, value, gnorm, iters, conv = _newton(Xa, wa, Xe, we, init, tol)
    return GlobalFit(theta=theta, loglik=value, grad_norm=gnorm,
                     iterations=iters, converged=conv)


def pbar_hat(net, t0, h, kernel=EPANECHNIKOV):
    """Kernel-smoothed share of active pairs at t0 (exact per piece)."""
    total = 0.0
    for p in net.pairs():
        for (a, b) in net.activity(p):
            total += float(kernel.mass(a, b, t0, h))
    return total / _pair_count(net)


def pbar_hat_many(net, ts, h, kernel=EPANECHNIKOV):
    """Vectorized pbar_hat over a grid of anchors."""
    ts = np.asarray(ts, dtype=np.float64)
    total = np.zeros_like(ts)
    for p in net.pairs():
        for (a, b) in net.activity(p):
            total += kernel.cdf((b - ts) / h) - kernel.cdf((a - ts) / h)
    return total / _pair_count(net)


def sigma_hat(net, cov, log, theta, t, h, kernel=EPANECHNIKOV):
    """Kernel-weighted conditional second-moment matrix at time t.

    The exposure-weighted average of -X X' exp(theta'X) over pairs active
    near t; the numerator and denominator share the same quadrature, so
    constant covariates reproduce the closed form exactly.
    """
    design = CoxDesign(net, cov, log)
    return _sigma_at(design, np.asarray(theta, float), t, h, kernel)


def _sigma_at(design, theta, t, h, kernel):
    Xa, wa = design.window_atoms(t, h, kernel)
    den = float(np.sum(wa))
    if Xa.shape[0] == 0 or den <= 0.0:
        raise NoDataInWindow(t, h)
    _, _, h2 = backend.cox_accumulate(Xa, wa, theta)
    return -h2 / den


@dataclass(frozen=True, eq=False)
class SigmaPath:
    """Grid of second-moment matrices with cached squared inverses."""

    grid: np.ndarray
    sigma: np.ndarray
    inv2: np.ndarray
    ok: np.ndarray
    theta: np.ndarray
    h: float

    @classmethod
    def build(cls, design, theta, h, kernel=EPANECHNIKOV, step=None,
              grid=None):
        if grid is None:
            if step is None:
                step = h / QUAD_REFINE
            npts = max(2, int(np.ceil(design.horizon / step)) + 1)
            grid = np.linspace(0.0, design.horizon, npts)
        grid = np.asarray(grid, dtype=np.float64)
        q = design.q
        sigma = np.zeros((len(grid), q, q))
        inv2 = np.zeros((len(grid), q, q))
        ok = np.zeros(len(grid), dtype=bool)
        theta = np.asarray(theta, dtype=np.float64)
        for k, t in enumerate(grid):
            try:
                s = _sigma_at(design, theta, t, h, kernel)
            except NoDataInWindow:
                continue
            sigma[k] = s
            try:
                inv = np.linalg.inv(s)
            except np.linalg.LinAlgError:
                continue
            if np.linalg.cond(s) > 1e12:
                continue
            inv2[k] = inv @ inv
            ok[k] = True
        return cls(grid=grid, sigma=sigma, inv2=inv2, ok=ok, theta=theta,
                   h=float(h))
