"""Event simulation: thinning law, compensators, cascades, torus field."""

import numpy as np
import pytest
from scipy import integrate, stats

from netcox.errors import ConfigurationError, DomainError, SimulationError
from netcox.netcore import DynamicNetwork
from netcox.simulate import (
    TAG_EVENTS,
    TAG_NETWORK,
    BlockModel,
    CovariateField,
    EventLog,
    ParameterPath,
    TorusField,
    adoption_times,
    compensator,
    pair_stream,
    sample_block_network,
    simulate_adoption,
    simulate_cox,
    simulate_torus_ar,
    torus_covariance,
)


def one_pair_net(horizon=1.0, intervals=None):
    net = DynamicNetwork(2, horizon)
    net.set_activity((0, 1), intervals or [(0.0, horizon)])
    return net


# ------------------------------------------------------------- streams


def test_pair_stream_reproducible_and_separated():
    a = pair_stream(123, TAG_EVENTS, 0, 1).random(5)
    b = pair_stream(123, TAG_EVENTS, 0, 1).random(5)
    np.testing.assert_array_equal(a, b)
    c = pair_stream(123, TAG_EVENTS, 0, 2).random(5)
    d = pair_stream(123, TAG_NETWORK, 0, 1).random(5)
    e = pair_stream(124, TAG_EVENTS, 0, 1).random(5)
    assert not np.array_equal(a, c)
    assert not np.array_equal(a, d)
    assert not np.array_equal(a, e)


def test_pair_stream_accepts_composite_seed():
    a = pair_stream((9, 4), TAG_EVENTS, 1, 2).random(3)
    b = pair_stream([9, 4], TAG_EVENTS, 1, 2).random(3)
    np.testing.assert_array_equal(a, b)
    c = pair_stream((9, 5), TAG_EVENTS, 1, 2).random(3)
    assert not np.array_equal(a, c)


# ------------------------------------------------------------ event log


def test_event_log_sorts_and_validates():
    log = EventLog(2.0, times={(0, 1): [1.5, 0.5, 1.0]})
    np.testing.assert_array_equal(log.events((0, 1)), [0.5, 1.0, 1.5])
    assert log.total == 3
    with pytest.raises(DomainError):
        EventLog(2.0, times={(0, 1): [2.5]})
    with pytest.raises(DomainError):
        EventLog(0.0)


def test_event_log_flat_is_time_sorted():
    log = EventLog(1.0, times={(0, 2): [0.9, 0.1], (0, 1): [0.5]})
    times, pairs = log.flat()
    np.testing.assert_array_equal(times, [0.1, 0.5, 0.9])
    assert pairs == [(0, 2), (0, 1), (0, 2)]


def test_event_log_empty_assignment_clears():
    log = EventLog(1.0, times={(0, 1): [0.5]})
    log.set_events((0, 1), [])
    assert log.pairs() == []
    assert log.events((0, 1)).size == 0


# -------------------------------------------------------------- paths


def test_parameter_path_constant_holds_left_value():
    path = ParameterPath(grid=[0.0, 0.5], values=[[1.0], [2.0]])
    assert path(0.25)[0] == 1.0
    assert path(0.5)[0] == 2.0  # right-continuous at the break
    assert path(0.75)[0] == 2.0
    assert path(-1.0)[0] == 1.0  # clamped ends


def test_parameter_path_linear_interpolates():
    path = ParameterPath(grid=[0.0, 1.0], values=[[0.0, 2.0], [1.0, 0.0]],
                         interpolation="linear")
    np.testing.assert_allclose(path(0.25), [0.25, 1.5])
    np.testing.assert_allclose(path.eval_many([0.0, 0.5, 1.0]),
                               [[0.0, 2.0], [0.5, 1.0], [1.0, 0.0]])


def test_parameter_path_constant_classmethod_and_sup_norm():
    path = ParameterPath.constant([0.5, -1.5])
    np.testing.assert_array_equal(path(17.0), [0.5, -1.5])
    assert path.sup_norm == 1.5  # largest absolute entry over time


def test_parameter_path_validation():
    with pytest.raises(ConfigurationError):
        ParameterPath(grid=[0.0, 0.0], values=[[1.0], [2.0]])
    with pytest.raises(ConfigurationError):
        ParameterPath(grid=[0.0], values=[[1.0], [2.0]])
    with pytest.raises(ConfigurationError):
        ParameterPath(grid=[0.0], values=[[1.0]], interpolation="cubic")


# ------------------------------------------------------------ covariates


def test_static_covariates_and_default():
    cov = CovariateField.static({(0, 1): [1.0, 2.0]}, default=[1.0, 0.0])
    np.testing.assert_array_equal(cov.eval((0, 1), 0.3), [1.0, 2.0])
    np.testing.assert_array_equal(cov.eval((5, 9), 0.3), [1.0, 0.0])
    out = cov.eval_many((0, 1), np.linspace(0, 1, 4))
    assert out.shape == (4, 2)
    assert cov.bound >= 2.0


def test_piecewise_covariates_hold_left_value():
    cov = CovariateField.piecewise(
        {(0, 1): ([0.0, 0.5, 1.0], np.array([[1.0], [3.0]]))}, bound=3.0)
    assert cov.eval((0, 1), 0.49)[0] == 1.0
    assert cov.eval((0, 1), 0.5)[0] == 3.0
    pieces = list(cov.pieces((0, 1), 0.0, 1.0))
    assert [(a, b) for a, b, _ in pieces] == [(0.0, 0.5), (0.5, 1.0)]


def test_callback_covariates_shape_checked():
    good = CovariateField.from_callback(
        2, lambda pair, ts: np.stack([np.ones_like(ts), ts], axis=-1), bound=5.0)
    assert good.eval((0, 1), 0.25)[1] == 0.25
    bad = CovariateField.from_callback(2, lambda pair, ts: ts, bound=5.0)
    with pytest.raises(ConfigurationError):
        bad.eval_many((0, 1), np.array([0.1, 0.2]))


def test_check_bound_flags_violations():
    cov = CovariateField.static({(0, 1): [2.0]}, bound=1.0)
    with pytest.raises(ConfigurationError):
        cov.check_bound([(0, 1)], [0.0, 0.5])
    cov2 = CovariateField.static({(0, 1): [0.5]}, bound=1.0)
    cov2.check_bound([(0, 1)], [0.0, 0.5])  # no raise


# ----------------------------------------------------------- compensator


def test_compensator_constant_rate_hand_values():
    cov = CovariateField.static({(0, 1): [1.0]})
    # rate 1 active on [0, 1) only
    net = one_pair_net(horizon=2.0, intervals=[(0.0, 1.0)])
    theta = ParameterPath.constant([0.0])
    assert compensator(net, cov, theta, (0, 1), 2.0) == pytest.approx(1.0)
    # rate 2 active on [0, 1) and [2, 3)
    net2 = one_pair_net(horizon=3.0, intervals=[(0.0, 1.0), (2.0, 3.0)])
    theta2 = ParameterPath.constant([np.log(2.0)])
    assert compensator(net2, cov, theta2, (0, 1), 2.5) == pytest.approx(3.0)
    assert compensator(net2, cov, theta2, (0, 1), 0.0) == 0.0
    with pytest.raises(DomainError):
        compensator(net2, cov, theta2, (0, 1), 3.5)


def test_compensator_linear_path_closed_form():
    # exponent 2t on [0, 1]: integral (e^2 - 1) / 2
    net = one_pair_net(horizon=1.0)
    cov = CovariateField.static({(0, 1): [2.0]})
    theta = ParameterPath(grid=[0.0, 1.0], values=[[0.0], [1.0]],
                          interpolation="linear")
    want = (np.exp(2.0) - 1.0) / 2.0
    assert compensator(net, cov, theta, (0, 1), 1.0) == pytest.approx(
        want, rel=1e-10)


def test_compensator_callback_matches_quadrature():
    net = one_pair_net(horizon=1.0, intervals=[(0.2, 0.9)])
    cov = CovariateField.from_callback(
        2, lambda pair, ts: np.stack([np.ones_like(ts), ts], axis=-1), bound=2.0)
    theta = ParameterPath.constant([0.3, 0.7])
    got = compensator(net, cov, theta, (0, 1), 1.0)
    want = (np.exp(0.3 + 0.7 * 0.9) - np.exp(0.3 + 0.7 * 0.2)) / 0.7
    assert got == pytest.approx(want, rel=1e-8)


def test_compensator_piecewise_is_additive_in_t():
    net = one_pair_net(horizon=1.0)
    cov = CovariateField.piecewise(
        {(0, 1): ([0.0, 0.4, 1.0], np.array([[0.5], [1.5]]))}, bound=1.5)
    theta = ParameterPath.constant([1.0])
    want = 0.4 * np.exp(0.5) + 0.6 * np.exp(1.5)
    assert compensator(net, cov, theta, (0, 1), 1.0) == pytest.approx(want)


# -------------------------------------------------------------- thinning


def test_thinning_counts_follow_poisson_law():
    """Constant rate 3 over [0, 2]: counts are Poisson(6); chi-square GoF."""
    net = one_pair_net(horizon=2.0)
    cov = CovariateField.static({(0, 1): [1.0]})
    theta = ParameterPath.constant([np.log(3.0)])
    mean = 6.0
    counts = np.array([
        simulate_cox(net, cov, theta, seed=(505, rep)).total
        for rep in range(2000)
    ])
    kmax = int(counts.max())
    observed = np.bincount(counts, minlength=kmax + 1).astype(float)
    expected = stats.poisson.pmf(np.arange(kmax + 1), mean) * len(counts)
    expected[-1] += (1 - stats.poisson.cdf(kmax, mean)) * len(counts)
    # merge sparse tails so every expected cell has mass >= 5
    lo = np.searchsorted(np.cumsum(expected), 5.0)
    hi = len(expected) - np.searchsorted(np.cumsum(expected[::-1]), 5.0)
    obs = np.concatenate([[observed[: lo + 1].sum()],
                          observed[lo + 1 : hi - 1],
                          [observed[hi - 1 :].sum()]])
    exp = np.concatenate([[expected[: lo + 1].sum()],
                          expected[lo + 1 : hi - 1],
                          [expected[hi - 1 :].sum()]])
    _, p = stats.chisquare(obs, exp * obs.sum() / exp.sum())
    assert p > 0.01


def test_thinning_time_varying_martingale_residual():
    """Observed minus compensated counts average to ~0 across replicates."""
    net = one_pair_net(horizon=2.0)
    cov = CovariateField.static({(0, 1): [1.0]})
    theta = ParameterPath(grid=[0.0, 2.0], values=[[0.0], [1.0]],
                          interpolation="linear")
    lam_total = compensator(net, cov, theta, (0, 1), 2.0)
    resid = np.array([
        simulate_cox(net, cov, theta, seed=(606, rep)).total - lam_total
        for rep in range(300)
    ])
    se = resid.std(ddof=1) / np.sqrt(len(resid))
    assert abs(resid.mean()) <= 3.0 * se + 1e-9


def test_simulate_respects_activity_gaps():
    net = one_pair_net(horizon=3.0, intervals=[(0.0, 1.0), (2.0, 3.0)])
    cov = CovariateField.static({(0, 1): [1.0]})
    theta = ParameterPath.constant([1.5])
    log = simulate_cox(net, cov, theta, seed=7)
    ts = log.events((0, 1))
    assert np.all((ts < 1.0) | (ts >= 2.0))


def test_simulate_deterministic_per_seed():
    net = one_pair_net(horizon=1.0)
    cov = CovariateField.static({(0, 1): [1.0]})
    theta = ParameterPath.constant([1.0])
    a = simulate_cox(net, cov, theta, seed=3).events((0, 1))
    b = simulate_cox(net, cov, theta, seed=3).events((0, 1))
    np.testing.assert_array_equal(a, b)


@pytest.mark.filterwarnings("ignore:overflow encountered:RuntimeWarning")
def test_simulate_rejects_nonfinite_rate():
    net = one_pair_net(horizon=1.0)
    cov = CovariateField.static({(0, 1): [1.0]})
    theta = ParameterPath.constant([1e4])
    with pytest.raises(SimulationError):
        simulate_cox(net, cov, theta, seed=1)


def test_simulate_rejects_dimension_mismatch():
    net = one_pair_net()
    cov = CovariateField.static({(0, 1): [1.0, 0.5]})
    with pytest.raises(ConfigurationError):
        simulate_cox(net, cov, ParameterPath.constant([1.0]), seed=1)


# -------------------------------------------------------------- cascades


def _cascade_net(pairs, horizon=5.0):
    n = max(max(p) for p in pairs) + 1
    net = DynamicNetwork(n, horizon)
    for p in pairs:
        net.set_activity(p, [(0.0, horizon)])
    return net


def test_adoption_single_neighbour_hand_oracle():
    net = _cascade_net([(0, 1), (1, 2)])
    got = adoption_times(net, {(0, 1): 0.9, (1, 2): 0.5},
                         alpha0=0.5, theta0=0.8, delays=0.1)
    assert got[(0, 1)] == 0.0
    # influence starts at 0.1; 0.5 + 0.5 (t - 0.1) reaches 0.8 at t = 0.7
    assert got[(1, 2)] == pytest.approx(0.7)


def test_adoption_two_neighbours_accumulate():
    net = _cascade_net([(0, 1), (1, 2), (2, 3)])
    got = adoption_times(
        net, {(0, 1): 0.95, (2, 3): 0.95, (1, 2): 0.2},
        alpha0=1.0, theta0=0.9, delays=0.2)
    # both ends adopt at 0; joint load 2 (t - 0.2) reaches 0.7 at 0.55
    assert got[(1, 2)] == pytest.approx(0.55)


def test_adoption_threshold_is_strict_and_horizon_clips():
    net = _cascade_net([(0, 1), (1, 2)])
    got = adoption_times(net, {(0, 1): 0.8, (1, 2): 0.1},
                         alpha0=1.0, theta0=0.8, delays=0.1)
    assert got == {}  # perception equal to the threshold never adopts
    slow = adoption_times(net, {(0, 1): 0.9, (1, 2): 0.0},
                          alpha0=0.01, theta0=0.8, delays=0.1, horizon=2.0)
    assert (1, 2) not in slow  # crossing would land past the horizon


def test_adoption_validation():
    net = _cascade_net([(0, 1), (1, 2)])
    u = {(0, 1): 0.9, (1, 2): 0.5}
    with pytest.raises(ConfigurationError):
        adoption_times(net, u, alpha0=-0.1, theta0=0.5, delays=0.1)
    with pytest.raises(ConfigurationError):
        adoption_times(net, u, alpha0=0.5, theta0=0.5, delays=0.0)
    with pytest.raises(ConfigurationError):
        adoption_times(net, u, alpha0=0.5, theta0=0.5,
                       delays={((0, 1), (0, 2)): 0.1})  # missing entry


def test_adoption_monotone_in_influence_strength():
    """Stronger influence: no adopter lost, no adoption later."""
    model = BlockModel(membership_probs=[1.0], link_probs=[[0.45]])
    net, _ = sample_block_network(12, model, horizon=6.0, seed=88)
    u = {p: float(pair_stream(88, 2, *p).random()) for p in net.pairs()}
    weak = adoption_times(net, u, alpha0=0.2, theta0=0.7, delays=0.3)
    strong = adoption_times(net, u, alpha0=0.8, theta0=0.7, delays=0.3)
    assert set(weak) <= set(strong)
    for p, t in weak.items():
        assert strong[p] <= t + 1e-12


def test_simulate_adoption_u_override_and_log():
    model = BlockModel(membership_probs=[1.0], link_probs=[[1.0]])
    net, log = simulate_adoption(
        4, model, alpha0=0.5, theta0=0.99, delays=0.1, horizon=4.0, seed=5,
        u_override={p: 0.0 for p in [(0, 1), (0, 2), (0, 3), (1, 2),
                                     (1, 3), (2, 3)]})
    assert log.total == 0  # nobody clears the threshold without a seed adopter
    net2, log2 = simulate_adoption(
        4, model, alpha0=0.5, theta0=0.5, delays=0.1, horizon=4.0, seed=5,
        u_override={(0, 1): 0.9})
    assert log2.events((0, 1))[0] == 0.0
    assert log2.total >= 2  # cascade spreads to vertex-sharing pairs


def test_block_model_validation():
    with pytest.raises(ConfigurationError):
        BlockModel(membership_probs=[0.7, 0.7], link_probs=[[0.1, 0.2],
                                                            [0.2, 0.1]])
    with pytest.raises(ConfigurationError):
        BlockModel(membership_probs=[0.5, 0.5], link_probs=[[0.1, 0.9],
                                                            [0.2, 0.1]])


# ----------------------------------------------------------------- torus


def test_torus_field_shape_and_validation():
    field = TorusField(4, alpha0=0.12)
    assert field.edge_count == 2 * 16
    adj = field.adjacency.toarray()
    assert np.array_equal(adj, adj.T)
    np.testing.assert_array_equal(adj.sum(axis=1), np.full(32, 6.0))
    assert len(field.network(horizon=2.0).pairs()) == 32
    with pytest.raises(DomainError):
        TorusField(2, alpha0=0.1)
    with pytest.raises(ConfigurationError):
        TorusField(4, alpha0=0.2)  # 6 alpha0 >= 1


def test_torus_covariance_matches_neumann_series():
    """(I - a C)^{-1} checked against the truncated geometric series."""
    field = TorusField(4, alpha0=0.12)
    adj = field.adjacency.toarray()
    m = field.edge_count
    series = np.zeros((m, m))
    power = np.eye(m)
    for _ in range(80):
        series += power
        power = field.alpha0 * (power @ adj)
    cov_want = series @ series.T
    got = torus_covariance(field)
    np.testing.assert_allclose(got.cov, cov_want, atol=1e-8)
    assert np.all(np.diag(got.cov) >= 1.0 - 1e-12)


def test_torus_covariance_profile_decays_under_envelope():
    field = TorusField(6, alpha0=0.1)
    tc = torus_covariance(field)
    prof = tc.max_abs_by_distance
    assert np.all(np.diff(prof) <= 1e-12)  # nonincreasing in distance
    d = np.arange(len(prof))
    assert np.all(prof <= tc.bound_at(d) + 1e-12)


def test_torus_ar_snapshot_reproducible_and_indicators():
    field = TorusField(4, alpha0=0.1)
    a1, n1 = simulate_torus_ar(field, t=1.0, seed=31, theta0=0.0, size=50)
    a2, n2 = simulate_torus_ar(field, t=1.0, seed=31, theta0=0.0, size=50)
    np.testing.assert_array_equal(a1, a2)
    np.testing.assert_array_equal(n1, n2)
    np.testing.assert_array_equal(n1, (a1 >= 0.0).astype(np.int8))
    single, none = simulate_torus_ar(field, t=0.5, seed=31)
    assert single.shape == (32,) and none is None
    with pytest.raises(DomainError):
        simulate_torus_ar(field, t=0.0, seed=31)


def test_torus_ar_empirical_covariance_near_exact():
    field = TorusField(4, alpha0=0.1)
    a, _ = simulate_torus_ar(field, t=1.0, seed=77, size=20000)
    emp = np.cov(a, rowvar=False)
    exact = torus_covariance(field).cov
    assert np.max(np.abs(emp - exact)) < 0.06


def test_torus_ar_edges_exchangeable_proxy():
    """Vertex transitivity: per-edge adoption rates look interchangeable."""
    field = TorusField(4, alpha0=0.1)
    _, n = simulate_torus_ar(field, t=1.0, seed=99, theta0=0.5, size=4000)
    rates = n.mean(axis=0)
    rng = np.random.default_rng(1)
    perm = rng.permutation(field.edge_count)
    half = field.edge_count // 2
    _, p = stats.ks_2samp(rates[perm[:half]], rates[perm[half:]])
    assert p > 0.01
