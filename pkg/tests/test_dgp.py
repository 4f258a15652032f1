from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfvar.calendar import MixedPanel, WeekStamp, read_panel_csv
from mfvar.dgp import DgpError, DgpSpec, load_spec, simulate, var_autocovariance, write_simulation

from oracles import random_spd, random_stable_var


def spec(**kw):
    M = kw.pop("M", 3)
    kw.setdefault("A", np.zeros((M, 4 * M)))
    kw.setdefault("Sigma", np.eye(M))
    kw.setdefault("n_monthly", 1)
    kw.setdefault("T", 200)
    return DgpSpec(**kw)


def test_white_noise_covariance_converges():
    s = spec(sigma_h=0.0, mu_h=0.0, T=10000, seed=1)
    y = simulate(s).y
    cov = np.cov(y.T)
    # sd of a sample (co)variance of N(0,1) entries is about sqrt(2/T)
    np.testing.assert_allclose(cov, np.eye(3), atol=4 * np.sqrt(2 / 10000))


def test_monthly_values_are_exact_four_week_means():
    rng = np.random.default_rng(0)
    s = spec(A=np.hstack(random_stable_var(rng, 3, 4)), n_monthly=2, seed=2)
    res = simulate(s)
    x = res.panel.values
    obs = np.flatnonzero(~np.isnan(x[:, 0]))
    assert obs.size == 50 and all(res.panel.stamps[t].is_month_end for t in obs)
    for t in obs:
        for i in range(2):
            assert x[t, i] == np.mean(res.y[t - 3 : t + 1, i])
    np.testing.assert_array_equal(x[:, 2], res.y[:, 2])


def test_zero_volatility_noise_gives_constant_h():
    res = simulate(spec(sigma_h=0.0, mu_h=0.7))
    assert np.all(np.exp(res.h) == np.exp(0.7))


@given(st.integers(0, 2**32 - 1))
def test_same_seed_same_output(seed):
    a, b = simulate(spec(seed=seed, T=60)), simulate(spec(seed=seed, T=60))
    np.testing.assert_array_equal(a.y, b.y)
    np.testing.assert_array_equal(a.h, b.h)
    np.testing.assert_array_equal(a.panel.values, b.panel.values)


@given(st.integers(0, 10_000), st.integers(0, 2), st.integers(50, 150))
def test_generated_panel_is_valid(seed, n_monthly, T):
    rng = np.random.default_rng(seed)
    s = spec(A=np.hstack(random_stable_var(rng, 3, 4)), Sigma=random_spd(rng, 3), n_monthly=n_monthly, T=T, seed=seed)
    p = simulate(s).panel
    MixedPanel(p.values, p.stamps, p.names, p.n_monthly)  # re-validates
    assert p.T == T and p.stamps[0] == WeekStamp(2000, 1)


def test_autocovariance_matches_lyapunov():
    rng = np.random.default_rng(3)
    A = np.hstack(random_stable_var(rng, 2, 4, 0.7))
    Sigma = random_spd(rng, 2)
    gamma = var_autocovariance(A, Sigma, 2)
    reps, T = 200, 400
    est = np.empty((reps, 3, 2, 2))
    for r in range(reps):
        y = simulate(DgpSpec(A=A, Sigma=Sigma, n_monthly=0, T=T, sigma_h=0.0, seed=100 + r)).y
        # known zero mean, so no demeaning
        for k in range(3):
            est[r, k] = y[k:].T @ y[: T - k] / (T - k)
    mean = est.mean(axis=0)
    se = est.std(axis=0, ddof=1) / np.sqrt(reps)
    assert np.all(np.abs(mean - gamma) < 3 * se + 1e-12)


def test_lyapunov_solution_is_a_fixed_point():
    rng = np.random.default_rng(4)
    A = np.hstack(random_stable_var(rng, 2, 1, 0.8))
    S = random_spd(rng, 2)
    g = var_autocovariance(A, S, 1)
    np.testing.assert_allclose(g[0], A @ g[0] @ A.T + S, atol=1e-10)
    np.testing.assert_allclose(g[1], A @ g[0], atol=1e-10)


def test_invalid_specs_rejected():
    with pytest.raises(DgpError, match="explosive"):
        spec(A=np.hstack([1.01 * np.eye(3), np.zeros((3, 9))]))
    with pytest.raises(DgpError, match="positive definite"):
        spec(Sigma=-np.eye(3))
    with pytest.raises(DgpError):
        spec(rho_h=1.0)
    with pytest.raises(DgpError):
        spec(n_monthly=3)
    with pytest.raises(DgpError, match="first week"):
        spec(start=WeekStamp(2000, 2))


def test_ragged_edge_masks_trailing_weeks():
    res = simulate(spec(M=4, n_monthly=1, ragged_weeks={3: 5}))
    x = res.panel.values
    assert np.isnan(x[-5:, 3]).all() and not np.isnan(x[:-5, 3]).any()
    assert not np.isnan(x[:, 2]).any()


def test_spec_file_round_trip(tmp_path):
    path = tmp_path / "dgp.toml"
    path.write_text(
        "[dgp]\n"
        "A = [[0.5, 0.0, 0, 0, 0, 0, 0, 0], [0.1, 0.4, 0, 0, 0, 0, 0, 0]]\n"
        "Sigma = [[1.0, 0.2], [0.2, 1.0]]\n"
        "n_monthly = 1\nT = 96\nseed = 7\nstart = [2019, 1]\n"
        'names = ["INDPRO", "M2"]\n'
        "[dgp.ragged_weeks]\n1 = 2\n"
    )
    s = load_spec(path)
    assert s.P == 4 and s.names == ["INDPRO", "M2"] and s.ragged_weeks == {1: 2}
    res = simulate(s)
    write_simulation(res, tmp_path / "out")
    panel = read_panel_csv(tmp_path / "out" / "panel.csv", n_monthly=1)
    np.testing.assert_array_equal(panel.values, res.panel.values)
    assert panel.stamps == res.panel.stamps
    truth = json.loads((tmp_path / "out" / "truth.json").read_text())
    assert truth["seed"] == 7 and np.allclose(truth["weekly"], res.y)
    with pytest.raises(DgpError, match="not found"):
        load_spec(tmp_path / "missing.toml")
    (tmp_path / "bad.toml").write_text("A = [[0.5]]\nSigma = [[1.0]]\nn_monthly = 0\nT = 10\nbogus = 1\n")
    with pytest.raises(DgpError, match="bad DGP spec"):
        load_spec(tmp_path / "bad.toml")
