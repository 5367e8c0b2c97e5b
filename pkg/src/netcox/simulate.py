"""Data-generating processes on dynamic networks.

Three simulators: thinning for Cox-type intensities C(t) exp(theta(t)'X(t)),
an event-driven threshold adoption cascade on a block-model network, and a
spatial autoregression on the edges of a torus with an exactly computable
covariance. Every random draw comes from a counter-based stream keyed by
(seed, namespace, pair), so enlarging the network never perturbs the draws
of existing pairs.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass

import numpy as np
from scipy import integrate, sparse
from scipy.sparse.linalg import splu

from .errors import ConfigurationError, DomainError, SimulationError
from .netcore import DynamicNetwork

# stream namespaces
TAG_NETWORK = 0
TAG_EVENTS = 1
TAG_PERCEPTION = 2
TAG_TORUS = 3
TAG_MEMBERSHIP = 4
TAG_COVARIATES = 5

# headroom multiplier on the per-piece dominating rate
DOMINATING_MARGIN = 1.1


def pair_stream(seed, tag, i=0, j=0):
    """Counter-based generator for one (seed, namespace, pair) triple."""
    if isinstance(seed, (tuple, list)):
        entropy = [int(s) for s in seed]
    else:
        entropy = int(seed)
    ss = np.random.SeedSequence(entropy=entropy, spawn_key=(int(tag), int(i), int(j)))
    return np.random.Generator(np.random.Philox(ss))


class EventLog:
    """Per-pair sorted event times inside [0, horizon]."""

    def __init__(self, horizon, times=None):
        if not (float(horizon) > 0.0):
            raise DomainError("horizon must be positive")
        self.horizon = float(horizon)
        self._times = {}
        if times:
            for pair, ts in times.items():
                self.set_events(pair, ts)

    def set_events(self, pair, ts):
        arr = np.sort(np.asarray(ts, dtype=np.float64))
        if arr.size and (arr[0] < 0.0 or arr[-1] > self.horizon):
            raise DomainError(f"event outside [0, {self.horizon}] for {pair}")
        if arr.size:
            self._times[tuple(pair)] = arr
        else:
            self._times.pop(tuple(pair), None)

    def events(self, pair):
        return self._times.get(tuple(pair), np.empty(0))

    def pairs(self):
        return sorted(self._times)

    @property
    def total(self):
        return int(sum(len(v) for v in self._times.values()))

    def flat(self):
        """All events as (times, pairs) sorted by time, pair."""
        rows = [(t, p) for p in self.pairs() for t in self._times[p]]
        rows.sort()
        times = np.array([r[0] for r in rows], dtype=np.float64)
        return times, [r[1] for r in rows]


@dataclass(frozen=True, eq=False)
class ParameterPath:
    """Time-varying coefficient vector on a grid.

    'constant' interpolation holds values[k] on [grid[k], grid[k+1]) and
    extends the end values outside the grid; 'linear' interpolates
    componentwise with clamped ends.
    """

    grid: np.ndarray
    values: np.ndarray
    interpolation: str = "constant"

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        values = np.atleast_2d(np.asarray(self.values, dtype=np.float64))
        if values.shape[0] != grid.shape[0]:
            raise ConfigurationError("parameter grid and values disagree")
        if grid.size == 0 or np.any(np.diff(grid) <= 0):
            raise ConfigurationError("parameter grid must be increasing")
        if self.interpolation not in ("constant", "linear"):
            raise ConfigurationError(f"unknown interpolation {self.interpolation}")
        object.__setattr__(self, "grid", grid)
        object.__setattr__(self, "values", values)

    @classmethod
    def constant(cls, theta, horizon=None):
        theta = np.atleast_1d(np.asarray(theta, dtype=np.float64))
        return cls(grid=np.array([0.0]), values=theta[None, :])

    @property
    def q(self):
        return self.values.shape[1]

    @property
    def breakpoints(self):
        return self.grid

    def eval_many(self, ts):
        ts = np.asarray(ts, dtype=np.float64)
        if self.interpolation == "constant":
            idx = np.clip(np.searchsorted(self.grid, ts, side="right") - 1,
                          0, len(self.grid) - 1)
            return self.values[idx]
        out = np.empty(ts.shape + (self.q,))
        for c in range(self.q):
            out[..., c] = np.interp(ts, self.grid, self.values[:, c])
        return out

    def __call__(self, t):
        return self.eval_many(np.array([t]))[0]

    @property
    def sup_norm(self):
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


class CovariateField:
    """Per-pair covariate vectors, constant, piecewise-constant or callback.

    `bound` is the declared sup-norm bound on covariate components; it
    feeds the dominating rate of the simulator and the Lipschitz constant
    of the fit diagnostics, and is spot-checked rather than proven.
    """

    def __init__(self, q, kind, bound, static=None, table=None, fn=None,
                 default=None):
        self.q = int(q)
        self.kind = kind
        self.bound = float(bound)
        self._static = static
        self._table = table
        self._fn = fn
        self.default = None if default is None else np.asarray(default, float)
        if self.q < 1:
            raise ConfigurationError("covariate dimension must be >= 1")
        if self.bound <= 0:
            raise ConfigurationError("covariate bound must be positive")

    @classmethod
    def static(cls, values, bound=None, default=None, q=None):
        values = {tuple(p): np.atleast_1d(np.asarray(v, float))
                  for p, v in values.items()}
        if q is None:
            probe = next(iter(values.values()), None)
            if probe is None and default is None:
                raise ConfigurationError("cannot infer covariate dimension")
            q = len(probe) if probe is not None else len(default)
        if bound is None:
            mags = [np.max(np.abs(v)) for v in values.values()]
            if default is not None:
                mags.append(np.max(np.abs(default)))
            bound = max(mags) if mags else 1.0
        return cls(q=q, kind="static", bound=max(bound, 1e-12),
                   static=values, default=default)

    @classmethod
    def piecewise(cls, table, bound, q=None):
        tbl = {}
        for p, (breaks, values) in table.items():
            breaks = np.asarray(breaks, float)
            values = np.atleast_2d(np.asarray(values, float))
            if len(breaks) != values.shape[0] + 1 or np.any(np.diff(breaks) <= 0):
                raise ConfigurationError(f"bad piecewise covariate for {p}")
            tbl[tuple(p)] = (breaks, values)
        if q is None:
            q = next(iter(tbl.values()))[1].shape[1]
        return cls(q=q, kind="piecewise", bound=bound, table=tbl)

    @classmethod
    def from_callback(cls, q, fn, bound):
        return cls(q=q, kind="callback", bound=bound, fn=fn)

    def eval_many(self, pair, ts):
        ts = np.asarray(ts, dtype=np.float64)
        pair = tuple(pair)
        if self.kind == "static":
            x = self._static.get(pair, self.default)
            if x is None:
                raise ConfigurationError(f"no covariate value for pair {pair}")
            return np.broadcast_to(x, ts.shape + (self.q,)).copy()
        if self.kind == "piecewise":
            if pair not in self._table:
                raise ConfigurationError(f"no covariate pieces for pair {pair}")
            breaks, values = self._table[pair]
            idx = np.clip(np.searchsorted(breaks, ts, side="right") - 1,
                          0, values.shape[0] - 1)
            return values[idx]
        out = np.asarray(self._fn(pair, ts), dtype=np.float64)
        if out.shape != ts.shape + (self.q,):
            raise ConfigurationError(
                f"covariate callback returned shape {out.shape}")
        return out

    def eval(self, pair, t):
        return self.eval_many(pair, np.array([t]))[0]

    def breakpoints(self, pair):
        if self.kind == "piecewise":
            tbl = self._table.get(tuple(pair))
            return tbl[0] if tbl else np.empty(0)
        return np.empty(0)

    def pieces(self, pair, a, b):
        """Constant-value subpieces of [a, b); callback fields yield one
        piece with value None (quadrature samples values instead)."""
        if b <= a:
            return
        if self.kind == "static":
            yield (a, b, self.eval(pair, a))
            return
        if self.kind == "callback":
            yield (a, b, None)
            return
        breaks, values = self._table[tuple(pair)]
        cuts = [a] + [float(c) for c in breaks if a < c < b] + [b]
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            yield (lo, hi, self.eval(pair, lo))

    def check_bound(self, pairs, ts):
        """Spot-check the declared bound; raises on violation."""
        for pair in pairs:
            vals = self.eval_many(pair, np.asarray(ts, float))
            worst = float(np.max(np.abs(vals))) if vals.size else 0.0
            if worst > self.bound * (1 + 1e-9):
                raise ConfigurationError(
                    f"covariate bound {self.bound} violated at pair {pair}: {worst}")


def _exponent_breaks(theta, cov, pair, a, b):
    cuts = {a, b}
    cuts.update(float(c) for c in theta.breakpoints if a < c < b)
    cuts.update(float(c) for c in cov.breakpoints(pair) if a < c < b)
    return sorted(cuts)


def simulate_cox(net, cov, theta, seed):
    """Draw events with intensity C(t) exp(theta(t)'X(t)) by thinning.

    Each activity piece uses the dominating rate exp(max exponent) with a
    10% margin; the max is exact for constant/piecewise data and a grid
    max for callback covariates, and any proposal whose intensity exceeds
    the dominating rate aborts with a simulation error.
    """
    if theta.q != cov.q:
        raise ConfigurationError("parameter and covariate dimensions differ")
    times = {}
    for pair in net.pairs():
        i, j = pair
        rng = pair_stream(seed, TAG_EVENTS, i, j)
        evs = []
        for (a, b) in net.activity(pair):
            cuts = _exponent_breaks(theta, cov, pair, a, b)
            for lo, hi in zip(cuts[:-1], cuts[1:]):
                ts = np.linspace(lo, hi, 18)
                expo = np.einsum("tq,tq->t", theta.eval_many(ts),
                                 cov.eval_many(pair, ts))
                lam_max = DOMINATING_MARGIN * float(np.exp(np.max(expo)))
                if not np.isfinite(lam_max):
                    raise SimulationError(
                        f"non-finite dominating rate for {pair} on [{lo}, {hi})")
                t = lo
                while True:
                    t += rng.exponential(1.0 / lam_max)
                    if t >= hi:
                        break
                    lam = float(np.exp(theta(t) @ cov.eval(pair, t)))
                    if not np.isfinite(lam):
                        raise SimulationError(
                            f"non-finite intensity at pair {pair}, t={t}")
                    if lam > lam_max:
                        raise SimulationError(
                            f"dominating rate undercut at pair {pair}, t={t}")
                    if rng.random() < lam / lam_max:
                        evs.append(t)
        if evs:
            times[pair] = np.array(evs)
    return EventLog(net.horizon, times=times)


def compensator(net, cov, theta, pair, t):
    """Integral of the intensity for one pair over [0, t].

    Exact on pieces where the exponent is constant or affine in time;
    adaptive quadrature elsewhere.
    """
    if not (0.0 <= t <= net.horizon):
        raise DomainError(f"time {t} outside [0, {net.horizon}]")
    key = net.pair_key(pair)
    total = 0.0
    for (a, b) in net.activity(key):
        lo0, hi0 = a, min(b, t)
        if hi0 <= lo0:
            continue
        cuts = _exponent_breaks(theta, cov, key, lo0, hi0)
        for lo, hi in zip(cuts[:-1], cuts[1:]):
            x_lo = cov.eval(key, lo)
            if cov.kind == "callback":
                total += integrate.quad(
                    lambda s: float(np.exp(theta(s) @ cov.eval(key, s))),
                    lo, hi, limit=200)[0]
            elif theta.interpolation == "constant":
                total += (hi - lo) * float(np.exp(theta(lo) @ x_lo))
            else:
                e_lo = float(theta(lo) @ x_lo)
                e_hi = float(theta(hi) @ x_lo)
                slope = (e_hi - e_lo) / (hi - lo)
                if abs(slope) < 1e-12:
                    total += (hi - lo) * float(np.exp(0.5 * (e_lo + e_hi)))
                else:
                    total += (np.exp(e_hi) - np.exp(e_lo)) / slope
    return float(total)


@dataclass(frozen=True)
class BlockModel:
    """Stochastic block model: group law and link probabilities."""

    membership_probs: tuple
    link_probs: tuple

    def __post_init__(self):
        probs = np.asarray(self.membership_probs, dtype=np.float64)
        link = np.asarray(self.link_probs, dtype=np.float64)
        if probs.ndim != 1 or abs(probs.sum() - 1.0) > 1e-9 or np.any(probs < 0):
            raise ConfigurationError("membership probabilities must be a law")
        g = probs.shape[0]
        if link.shape != (g, g) or np.any(link < 0) or np.any(link > 1):
            raise ConfigurationError("link probabilities must be a GxG matrix in [0,1]")
        if not np.allclose(link, link.T):
            raise ConfigurationError("link probabilities must be symmetric")
        object.__setattr__(self, "membership_probs", tuple(probs))
        object.__setattr__(self, "link_probs", tuple(map(tuple, link)))

    @property
    def groups(self):
        return len(self.membership_probs)


def sample_block_network(n, block_model, horizon, seed):
    """Static SBM graph, every edge active on the whole window."""
    rng = pair_stream(seed, TAG_MEMBERSHIP)
    probs = np.asarray(block_model.membership_probs)
    groups = rng.choice(block_model.groups, size=n, p=probs)
    link = np.asarray(block_model.link_probs)
    activity = {}
    for i in range(n):
        for j in range(i + 1, n):
            if pair_stream(seed, TAG_NETWORK, i, j).random() < link[groups[i], groups[j]]:
                activity[(i, j)] = [(0.0, float(horizon))]
    net = DynamicNetwork(n, horizon, activity=activity)
    return net, groups


def _delay_of(delays, p1, p2):
    if isinstance(delays, dict):
        key = (min(p1, p2), max(p1, p2))
        if key not in delays:
            raise ConfigurationError(f"missing delay entry for {key}")
        return float(delays[key])
    return float(delays)


def adoption_times(net, perceptions, alpha0, theta0, delays, horizon=None):
    """Deterministic threshold cascade given perceptions.

    A pair adopts at the first time its perception plus alpha0 times the
    delayed accumulated adoption age of its vertex-sharing neighbours
    strictly exceeds theta0. Returns pair -> adoption time for adoptions
    inside [0, horizon).
    """
    if alpha0 < 0:
        raise ConfigurationError("influence strength must be >= 0")
    if horizon is None:
        horizon = net.horizon
    pairs = net.pairs()
    touch = {}
    for p in pairs:
        for v in p:
            touch.setdefault(v, []).append(p)
    neighbors = {p: sorted({q for v in p for q in touch[v]} - {p}) for p in pairs}
    if isinstance(delays, dict):
        for p in pairs:
            for nb in neighbors[p]:
                _delay_of(delays, p, nb)
    else:
        if float(delays) <= 0:
            raise ConfigurationError("delays must be positive")
    u = {p: float(perceptions[p]) for p in pairs}
    adopted = {}
    live = {p: [] for p in pairs}
    heap = []
    counter = 0

    def crossing(p):
        """Exact first time the piecewise-linear load reaches theta0 - u."""
        need = theta0 - u[p]
        starts = live[p]
        if alpha0 == 0.0 or not starts:
            return None
        acc = 0.0
        for k, s in enumerate(starts, start=1):
            acc += s
            t_k = (need / alpha0 + acc) / k
            nxt = starts[k] if k < len(starts) else np.inf
            if s - 1e-15 <= t_k <= nxt + 1e-15:
                return max(t_k, s)
        return None

    def adopt(p, t):
        nonlocal counter
        adopted[p] = t
        for nb in neighbors[p]:
            if nb in adopted:
                continue
            start = t + _delay_of(delays, p, nb)
            if start < horizon + 1e-12:
                counter += 1
                heapq.heappush(heap, (start, counter, "activate", nb))

    for p in pairs:
        if u[p] > theta0:
            adopt(p, 0.0)
    while heap:
        t, _, kind, p = heapq.heappop(heap)
        if p in adopted:
            continue
        if kind == "activate":
            live[p].append(t)
        t_c = crossing(p)
        if t_c is None or t_c >= horizon:
            continue
        if t_c <= t + 1e-12:
            adopt(p, t_c)
        else:
            counter += 1
            heapq.heappush(heap, (t_c, counter, "candidate", p))
    return adopted


def simulate_adoption(n, block_model, alpha0, theta0, delays, horizon, seed,
                      u_override=None):
    """Threshold adoption cascade on a sampled block-model network.

    Perceptions are iid Uniform(0, 1) per pair unless u_override supplies
    explicit values. Returns the network and the one-event-per-adopter
    log.
    """
    net, _ = sample_block_network(n, block_model, horizon, seed)
    perceptions = {}
    for pair in net.pairs():
        if u_override is not None and pair in u_override:
            perceptions[pair] = float(u_override[pair])
        else:
            perceptions[pair] = float(
                pair_stream(seed, TAG_PERCEPTION, *pair).random())
    times = adoption_times(net, perceptions, alpha0, theta0, delays, horizon)
    log = EventLog(horizon, times={p: [t] for p, t in times.items() if t < horizon})
    return net, log


class TorusField:
    """Edges of a side x side torus with the 6-regular edge adjacency.

    The autoregression A = (I - alpha0 * adj)^{-1} eps with iid standard
    normal eps has covariance (I - alpha0 adj)^{-2}; the contraction
    condition 6 * alpha0 < 1 is enforced.
    """

    def __init__(self, side, alpha0):
        if int(side) < 3:
            raise DomainError("torus side must be >= 3")
        if not (0.0 <= alpha0) or 6.0 * alpha0 >= 1.0:
            raise ConfigurationError("need 0 <= alpha0 and 6*alpha0 < 1")
        self.side = int(side)
        self.alpha0 = float(alpha0)
        side = self.side
        edges = []
        for r in range(side):
            for c in range(side):
                u = r * side + c
                right = r * side + (c + 1) % side
                down = ((r + 1) % side) * side + c
                edges.append((min(u, right), max(u, right)))
                edges.append((min(u, down), max(u, down)))
        self.edges = edges
        self.index = {e: k for k, e in enumerate(edges)}
        m = len(edges)
        touch = {}
        for k, (i, j) in enumerate(edges):
            touch.setdefault(i, []).append(k)
            touch.setdefault(j, []).append(k)
        rows, cols = [], []
        for ks in touch.values():
            for a in ks:
                for b in ks:
                    if a != b:
                        rows.append(a)
                        cols.append(b)
        data = np.ones(len(rows))
        self.adjacency = sparse.csr_matrix(
            (data, (rows, cols)), shape=(m, m))
        degrees = np.asarray(self.adjacency.sum(axis=1)).ravel()
        if not np.all(degrees == 6):
            raise SimulationError("torus edge adjacency is not 6-regular")
        self._solver = None

    @property
    def edge_count(self):
        return len(self.edges)

    def _lu(self):
        if self._solver is None:
            m = self.edge_count
            mat = sparse.identity(m, format="csc") - self.alpha0 * self.adjacency.tocsc()
            self._solver = splu(mat)
        return self._solver

    def network(self, horizon=1.0):
        """The torus as a DynamicNetwork with all edges active."""
        activity = {e: [(0.0, float(horizon))] for e in self.edges}
        return DynamicNetwork(self.side * self.side, horizon, activity=activity)


def simulate_torus_ar(field, t, seed, theta0=None, size=None):
    """Snapshot draws of the edge autoregression at a fixed time t > 0.

    Returns (A, N) where A has shape (size, edges) (or (edges,) when size
    is None) and N = 1(A >= theta0), or None when no threshold is given.
    The marginal law of the stationary rescaled field does not depend on
    t, so only this fixed-time snapshot is simulated.
    """
    if not (t > 0):
        raise DomainError("snapshot time must be positive")
    rng = pair_stream(seed, TAG_TORUS)
    m = field.edge_count
    reps = 1 if size is None else int(size)
    eps = rng.standard_normal((reps, m))
    a = field._lu().solve(eps.T).T
    if size is None:
        a = a[0]
    n = None if theta0 is None else (a >= theta0).astype(np.int8)
    return a, n


@dataclass(frozen=True, eq=False)
class TorusCovariance:
    """Exact covariance of the edge field plus its distance profile."""

    cov: np.ndarray
    distances: np.ndarray
    max_abs_by_distance: np.ndarray
    cstar: float
    alpha0: float

    def bound_at(self, d):
        return self.cstar * (6.0 * self.alpha0) ** (np.asarray(d) / 2.0)


def torus_covariance(field):
    """Exact covariance (I - alpha0 adj)^{-2} and its decay profile.

    cstar is calibrated as the largest ratio of |cov| to the geometric
    envelope (6 alpha0)^{d/2}, so the reported bound holds by
    construction; the profile itself is what the tests check.
    """
    from scipy.sparse.csgraph import shortest_path

    m = field.edge_count
    dense = np.eye(m) - field.alpha0 * field.adjacency.toarray()
    inv = np.linalg.inv(dense)
    cov = inv @ inv.T
    dist = shortest_path(field.adjacency, method="D", unweighted=True)
    dmax = int(dist.max())
    prof = np.zeros(dmax + 1)
    for d in range(dmax + 1):
        mask = dist == d
        prof[d] = np.max(np.abs(cov[mask])) if mask.any() else 0.0
    base = (6.0 * field.alpha0) ** (np.arange(dmax + 1) / 2.0)
    with np.errstate(divide="ignore"):
        ratios = np.where(base > 0, prof / base, np.inf)
    cstar = float(np.max(ratios[np.isfinite(ratios)]))
    return TorusCovariance(cov=cov, distances=dist,
                           max_abs_by_distance=prof, cstar=cstar,
                           alpha0=field.alpha0)
