from __future__ import annotations

import csv

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mfvar.diagnostics import chain_diagnostics, effective_sample_size, monitored_scalars, split_rhat
from mfvar.sampler import Chain

from oracles import ar1_ess


def ar1(rng, n, rho, chains=1):
    x = np.empty((chains, n))
    x[:, 0] = rng.standard_normal(chains) / np.sqrt(1 - rho**2)
    e = rng.standard_normal((chains, n))
    for t in range(1, n):
        x[:, t] = rho * x[:, t - 1] + e[:, t]
    return x


def test_iid_draws_have_unit_rhat():
    x = np.random.default_rng(0).standard_normal((4, 5000))
    assert split_rhat(x) < 1.02
    assert effective_sample_size(x) == pytest.approx(20000, rel=0.1)


def test_constant_chain_has_ess_at_most_one():
    assert effective_sample_size(np.full(1000, 3.0)) <= 1
    assert effective_sample_size(np.full((3, 100), 3.0)) <= 1
    assert split_rhat(np.full((2, 100), 3.0)) == 1.0
    assert split_rhat(np.array([np.zeros(50), np.ones(50)])) == np.inf


def test_ar1_ess_closed_form():
    n = 20000
    x = ar1(np.random.default_rng(1), n, 0.5)
    assert effective_sample_size(x) == pytest.approx(ar1_ess(n, 0.5), rel=0.2)
    assert ar1_ess(n, 0.5) == pytest.approx(n / 3)


@given(st.floats(0.0, 0.9), st.integers(0, 10_000))
def test_ess_never_exceeds_antithetic_bound(rho, seed):
    x = ar1(np.random.default_rng(seed), 400, rho, chains=2)
    ess = effective_sample_size(x)
    assert 0 < ess <= 800 * np.log10(800)


def test_separated_chains_are_flagged():
    rng = np.random.default_rng(2)
    x = rng.standard_normal((2, 500))
    x[1] += 3.0
    assert split_rhat(x) > 1.1


def test_trending_single_chain_is_flagged_by_splitting():
    x = np.linspace(0, 10, 1000) + np.random.default_rng(3).standard_normal(1000) * 0.1
    assert split_rhat(x) > 1.1


def test_too_short_input_rejected():
    with pytest.raises(ValueError):
        split_rhat(np.array([1.0]))
    with pytest.raises(ValueError):
        effective_sample_size(np.zeros((2, 2, 2)))


def fake_chain(rng, n=200, M=2, P=4, shift=0.0):
    return Chain(
        A=rng.normal(size=(n, M, M * P)) + shift,
        Sigma=np.tile(np.eye(M), (n, 1, 1)) * np.exp(rng.normal(size=(n, 1, 1)) * 0.1),
        h=rng.normal(size=(n, 30)),
        mu_h=rng.normal(size=n),
        rho_h=rng.uniform(0.8, 0.9, n),
        sigma_h=rng.uniform(0.1, 0.2, n),
        y=np.zeros((n, 30, M)),
        P=P,
        names=["a", "b"],
    )


def test_monitored_scalars_cover_all_parameters():
    s = monitored_scalars(fake_chain(np.random.default_rng(0)))
    assert {"rho_h", "sigma_h", "log_sigma[a]", "log_sigma[b]", "A1[a,b]", "A4[b,a]"} <= set(s)
    assert len(s) == 2 + 2 + 4 * 4


def test_chain_diagnostics_and_csv(tmp_path):
    rng = np.random.default_rng(4)
    good = chain_diagnostics([fake_chain(rng), fake_chain(rng)])
    assert good.ok
    bad = chain_diagnostics([fake_chain(rng), fake_chain(rng, shift=2.0)])
    assert not bad.ok
    assert {r.name for r in bad.failed} == {r.name for r in bad.rows if r.name.startswith("A")}
    path = tmp_path / "d.csv"
    bad.write_csv(path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["parameter", "ess", "rhat", "flagged"]
    assert len(rows) == 1 + len(bad.rows)
    assert sum(int(r[3]) for r in rows[1:]) == len(bad.failed)


def test_threshold_is_configurable():
    rng = np.random.default_rng(5)
    chains = [fake_chain(rng), fake_chain(rng, shift=0.2)]
    assert chain_diagnostics(chains, rhat_threshold=10.0).ok
