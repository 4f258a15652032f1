from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from oracles import (
    dense_loglik,
    dense_observed_loglik,
    dense_posterior,
    monthly_mask,
    random_spd,
    random_stable_var,
)

from mfvar.calendar import MixedPanel, WeekStamp, build_calendar
from mfvar.statespace import (
    StateSpaceError,
    _sym_inverse,
    build_companion,
    build_observation_map,
    kalman_filter,
    observation_map_from_mask,
    panel_to_states,
    simulation_smoother,
    smoothed_mean,
    states_to_panel,
)


def simulate_panel(rng, A_list, sigma, h, T):
    M, P = sigma.shape[0], len(A_list)
    y = np.zeros((T, M))
    y[:P] = rng.normal(scale=np.sqrt(10.0), size=(P, M))
    L = np.linalg.cholesky(sigma)
    for t in range(P, T):
        y[t] = sum(A @ y[t - j] for j, A in enumerate(A_list, start=1))
        y[t] += np.exp(h[t] / 2) * (L @ rng.standard_normal(M))
    return y


def observed(y, active, n_monthly):
    x = np.where(active, y, np.nan)
    for i in range(n_monthly):
        for t in np.flatnonzero(active[:, i]):
            x[t, i] = y[max(t - 3, 0) : t + 1, i].mean()
    return x


def small_system(seed=0, M=3, n_monthly=1, P=4, T=40, h_scale=0.3):
    rng = np.random.default_rng(seed)
    A_list = random_stable_var(rng, M, P, 0.8)
    sigma = random_spd(rng, M)
    h = h_scale * rng.standard_normal(T)
    y = simulate_panel(rng, A_list, sigma, h, T)
    active = monthly_mask(T, M, n_monthly)
    x = observed(y, active, n_monthly)
    return A_list, sigma, h, x, active


# --- companion form ----------------------------------------------------------


def test_companion_p1_is_a1():
    A = np.array([[0.5, 0.1], [0.2, 0.3]])
    np.testing.assert_array_equal(build_companion([A]).F, A)


def test_companion_univariate_two_lags():
    sys = build_companion([np.array([[0.5]]), np.array([[0.2]])])
    np.testing.assert_array_equal(sys.F, [[0.5, 0.2], [1.0, 0.0]])


def test_identity_transition_radius():
    assert build_companion([np.eye(2)]).spectral_radius() == pytest.approx(1.0)


def test_companion_structure():
    rng = np.random.default_rng(3)
    A = random_stable_var(rng, 3, 4)
    sys = build_companion(A)
    K, M = sys.K, sys.M
    np.testing.assert_array_equal(sys.F[M:, : K - M], np.eye(K - M))
    np.testing.assert_array_equal(sys.F[M:, K - M :], 0.0)
    G = sys.innovation_loading
    assert G.shape == (K, M) and np.count_nonzero(G) == M and np.all(G[:M] == np.eye(M))
    np.testing.assert_array_equal(sys.selector @ sys.F[:, :M], A[0])


def test_companion_dimension_mismatch():
    with pytest.raises(StateSpaceError):
        build_companion([np.eye(2), np.eye(3)])
    with pytest.raises(StateSpaceError):
        build_companion(np.zeros((2, 5)))


@given(st.integers(1, 4), st.integers(1, 5), st.integers(0, 2**31))
def test_companion_round_trip(M, P, seed):
    rng = np.random.default_rng(seed)
    A = [rng.normal(size=(M, M)) for _ in range(P)]
    back = build_companion(A).coefficients()
    assert len(back) == P
    for a, b in zip(A, back):
        np.testing.assert_array_equal(a, b)
    np.testing.assert_array_equal(build_companion(np.hstack(A)).F, build_companion(A).F)


@given(st.integers(1, 4), st.integers(1, 4), st.integers(2, 12), st.integers(0, 2**31))
def test_state_stacking_round_trip(M, P, T_extra, seed):
    y = np.random.default_rng(seed).normal(size=(P + T_extra, M))
    np.testing.assert_array_equal(states_to_panel(panel_to_states(y, P), P, M), y)


# --- observation map ---------------------------------------------------------


def two_variable_panel(T=12, weekly_missing=()):
    stamps = build_calendar(WeekStamp(2012, 1), WeekStamp(2012, T))
    vals = np.arange(2 * T, dtype=float).reshape(T, 2)
    vals[[t for t in range(T) if stamps[t].week % 4], 0] = np.nan
    for t in weekly_missing:
        vals[t, 1] = np.nan
    return MixedPanel(vals, stamps, ["m", "w"], 1)


def test_loading_rows_two_variables():
    obs = build_observation_map(two_variable_panel(), 4)
    assert obs.Lambda.shape == (2, 8)
    np.testing.assert_array_equal(obs.Lambda[0], [0.25, 0, 0.25, 0, 0.25, 0, 0.25, 0])
    np.testing.assert_array_equal(obs.Lambda[1], [0, 1, 0, 0, 0, 0, 0, 0])


def test_only_weekly_rows_off_month_end():
    obs = build_observation_map(two_variable_panel(), 4)
    for t in range(obs.T):
        expect = [t % 4 == 3, True]
        assert list(obs.active[t]) == expect
        np.testing.assert_array_equal(obs.selection(t), np.eye(2)[expect])


def test_ragged_edge_row_inactive():
    obs = build_observation_map(two_variable_panel(weekly_missing=(10, 11)), 4)
    assert not obs.active[10, 1] and not obs.active[11, 1]
    assert obs.steps[-1][0].shape[0] == 1  # only the month-end monthly row at t=11


def test_short_lag_order_rejected_with_monthly_data():
    with pytest.raises(StateSpaceError, match="four-week"):
        build_observation_map(two_variable_panel(), 3)


@given(st.integers(1, 5), st.integers(0, 4), st.integers(4, 6))
def test_loading_invariants(M_H, M_L, P):
    M = M_L + M_H
    obs = observation_map_from_mask(monthly_mask(8, M, M_L), M_L, P)
    for i in range(M):
        nz = obs.Lambda[i][obs.Lambda[i] != 0]
        if i < M_L:
            np.testing.assert_array_equal(nz, [0.25] * 4)
        else:
            np.testing.assert_array_equal(nz, [1.0])


def test_early_monthly_observation_dropped():
    # a month-end in week 2 would need y_{-1}: it cannot be represented
    active = monthly_mask(12, 2, 1, first_week=3)
    obs = observation_map_from_mask(active, 1, 4)
    assert obs.dropped == [(1, 0)]
    assert not obs.active[1, 0]


# --- Kalman filter -------------------------------------------------------------


def test_no_observations_pure_prediction():
    A_list, sigma, h, x, active = small_system()
    obs = observation_map_from_mask(np.zeros_like(active), 1, 4)
    f = kalman_filter(build_companion(A_list), obs, x, sigma, h)
    np.testing.assert_array_equal(f.filt_mean, f.pred_mean)
    np.testing.assert_array_equal(f.filt_cov, f.pred_cov)
    assert f.loglik == 0.0


def test_fully_observed_weekly_var1_is_exact():
    rng = np.random.default_rng(4)
    A = np.array([[0.5, 0.1], [0.0, 0.3]])
    x = rng.normal(size=(20, 2))
    obs = observation_map_from_mask(np.ones((20, 2), bool), 0, 1)
    f = kalman_filter(build_companion([A]), obs, x, np.eye(2))
    np.testing.assert_allclose(f.filt_mean, x, atol=1e-12)
    np.testing.assert_allclose(f.filt_cov, 0.0, atol=1e-12)


def test_univariate_one_step_forecast():
    x = np.array([[1.0], [np.nan], [np.nan]])
    obs = observation_map_from_mask(np.isfinite(x), 0, 1)
    f = kalman_filter(build_companion([np.array([[0.5]])]), obs, x, np.eye(1))
    assert f.filt_mean[0, 0] == pytest.approx(1.0)
    assert f.pred_mean[1, 0] == pytest.approx(0.5)


@pytest.mark.parametrize("seed", range(3))
def test_loglik_matches_direct_density_fully_observed(seed):
    rng = np.random.default_rng(seed)
    A_list, sigma = random_stable_var(rng, 3, 4), random_spd(rng, 3)
    T = 30
    h = np.zeros(T)
    y = simulate_panel(rng, A_list, sigma, h, T)
    obs = observation_map_from_mask(np.ones((T, 3), bool), 0, 4)
    ll = kalman_filter(build_companion(A_list), obs, y, sigma, h).loglik
    assert ll == pytest.approx(dense_loglik(A_list, sigma, h, y), rel=1e-8)


@pytest.mark.parametrize("seed", range(3))
def test_loglik_matches_dense_mixed_frequency(seed):
    A_list, sigma, h, x, active = small_system(seed)
    obs = observation_map_from_mask(active, 1, 4)
    ll = kalman_filter(build_companion(A_list), obs, x, sigma, h).loglik
    active = obs.active
    assert ll == pytest.approx(dense_observed_loglik(A_list, sigma, h, x, active, 1), rel=1e-8)


@given(st.integers(0, 2**31))
def test_loglik_invariant_to_row_order(seed):
    A_list, sigma, h, x, active = small_system(seed % 1000, M=4, n_monthly=2, T=24)
    obs = observation_map_from_mask(active, 2, 4)
    sys = build_companion(A_list)
    base = kalman_filter(sys, obs, x, sigma, h).loglik
    rng = np.random.default_rng(seed)
    steps = []
    for H, ts, cs in obs.steps:
        p = rng.permutation(H.shape[0])
        steps.append((H[p], ts[p], cs[p]))
    obs.steps = steps
    assert kalman_filter(sys, obs, x, sigma, h).loglik == pytest.approx(base, rel=1e-10)


def test_singular_innovation_guarded():
    S = np.array([[1.0, 1.0], [1.0, 1.0]])
    inv, logdet, guarded = _sym_inverse(S)
    assert guarded
    np.testing.assert_allclose(inv, np.linalg.pinv(S), atol=1e-12)
    # the same observation twice: the filter must survive and stay finite
    A = np.array([[0.5]])
    x = np.array([[1.0], [0.4], [0.2]])
    obs = observation_map_from_mask(np.ones((3, 1), bool), 0, 1)
    H, ts, cs = obs.steps[1]
    obs.steps[1] = (np.vstack([H, H]), np.r_[ts, ts], np.r_[cs, cs])
    f = kalman_filter(build_companion([A]), obs, x, np.eye(1))
    assert f.guarded_steps == [1]
    assert np.all(np.isfinite(f.filt_mean)) and f.filt_mean[1, 0] == pytest.approx(0.4)


def test_filter_csv_dump(tmp_path):
    A_list, sigma, h, x, active = small_system()
    obs = observation_map_from_mask(active, 1, 4)
    f = kalman_filter(build_companion(A_list), obs, x, sigma, h)
    f.to_csv(tmp_path / "filt.csv", 4)
    lines = (tmp_path / "filt.csv").read_text().splitlines()
    assert len(lines) == 1 + obs.n_steps
    assert lines[1].startswith("3,")


# --- smoothing -------------------------------------------------------------------


@pytest.mark.parametrize("seed, M, n_monthly", [(0, 3, 1), (1, 4, 2), (2, 2, 1)])
def test_smoothed_mean_matches_dense_conditioning(seed, M, n_monthly):
    A_list, sigma, h, x, active = small_system(seed, M=M, n_monthly=n_monthly, T=36)
    obs = observation_map_from_mask(active, n_monthly, 4)
    got = smoothed_mean(build_companion(A_list), obs, x, sigma, h)
    want, _ = dense_posterior(A_list, sigma, h, x, obs.active, n_monthly)
    np.testing.assert_allclose(got, want, atol=1e-9)


def test_fully_observed_draw_is_the_data():
    rng = np.random.default_rng(5)
    A_list, sigma = random_stable_var(rng, 2, 4), random_spd(rng, 2)
    x = rng.normal(size=(20, 2))
    obs = observation_map_from_mask(np.ones((20, 2), bool), 0, 4)
    draws = [simulation_smoother(build_companion(A_list), obs, x, sigma, None, rng).y for _ in range(5)]
    for d in draws:
        np.testing.assert_array_equal(d, x)


@given(st.integers(0, 2**31))
def test_draws_honour_observations(seed):
    A_list, sigma, h, x, active = small_system(seed % 997, M=3, n_monthly=2, T=30)
    obs = observation_map_from_mask(active, 2, 4)
    path = simulation_smoother(build_companion(A_list), obs, x, sigma, h, np.random.default_rng(seed))
    weekly = obs.active.copy()
    weekly[:, :2] = False
    np.testing.assert_array_equal(path.y[weekly], x[weekly])
    assert path.aggregation_residual(obs, x) < 1e-8
    np.testing.assert_array_equal(states_to_panel(path.z, 4, 3), path.y)


def test_draw_moments_match_exact_posterior():
    A_list, sigma, h, x, active = small_system(7, M=2, n_monthly=1, T=24)
    obs = observation_map_from_mask(active, 1, 4)
    sys = build_companion(A_list)
    rng = np.random.default_rng(0)
    n = 3000
    draws = np.array([simulation_smoother(sys, obs, x, sigma, h, rng).y for _ in range(n)])
    mean, cov = dense_posterior(A_list, sigma, h, x, obs.active, 1)
    sd = np.sqrt(np.clip(np.diag(cov), 0, None)).reshape(mean.shape)
    free = sd > 1e-6
    z = (draws.mean(axis=0) - mean)[free] / (sd[free] / np.sqrt(n))
    assert np.max(np.abs(z)) < 4.5
    ratio = draws.std(axis=0)[free] / sd[free]
    # sd of a sample sd is about 1/sqrt(2n)
    assert np.max(np.abs(ratio - 1)) < 5 / np.sqrt(2 * n)


def test_reused_filter_gives_same_draw():
    A_list, sigma, h, x, active = small_system(3)
    obs = observation_map_from_mask(active, 1, 4)
    sys = build_companion(A_list)
    zero = np.where(obs.active, 0.0, np.nan)
    filt = kalman_filter(sys, obs, np.nan_to_num(zero), sigma, h)
    a = simulation_smoother(sys, obs, x, sigma, h, np.random.default_rng(1))
    b = simulation_smoother(sys, obs, x, sigma, h, np.random.default_rng(1), filt=filt)
    np.testing.assert_allclose(a.y, b.y, atol=1e-10)
