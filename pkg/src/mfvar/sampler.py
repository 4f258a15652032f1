"""Gibbs sampler for the mixed-frequency VAR with common stochastic volatility.

One sweep draws, in order: the latent weekly panel (simulation smoother),
the log-volatility path, the volatility parameters (followed by an
interweaving step), ``(A, Sigma)``, and finally a joint shift of the
volatility level against the scale of ``Sigma``.
"""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import dataclass, field

import numpy as np

from .calendar import MixedPanel
from .priors import Priors, conjugate_row_variances, minnesota_moments, prior_mean, scale_estimates
from .statespace import (
    ObservationMap,
    StatePath,
    build_companion,
    build_observation_map,
    simulation_smoother,
)
from .volatility import SvParams, draw_h_path_aux, draw_sv_params, interweave

log = logging.getLogger(__name__)


class SamplerError(RuntimeError):
    pass


@dataclass(frozen=True)
class ChainConfig:
    """``volatility="fixed"`` pins ``h_t`` at ``fixed_h`` and skips the SV blocks."""

    n_draws: int = 1000
    n_burn: int = 500
    thin: int = 1
    seed: int = 0
    P: int = 4
    volatility: str = "csv"
    fixed_h: float = 0.0

    def __post_init__(self) -> None:
        if self.n_draws <= 0:
            raise SamplerError("n_draws must be positive")
        if self.thin < 1 or self.n_burn < 0:
            raise SamplerError("thin must be >= 1 and n_burn >= 0")
        if self.P < 4:
            raise SamplerError(f"lag order P={self.P} < 4 cannot hold the four-week average")
        if self.volatility not in ("csv", "fixed"):
            raise SamplerError(f"unknown volatility mode {self.volatility!r}")


@dataclass
class PosteriorDraw:
    A: np.ndarray
    Sigma: np.ndarray
    h: np.ndarray
    mu_h: float
    rho_h: float
    sigma_h: float
    states: StatePath

    @property
    def P(self) -> int:
        return self.A.shape[1] // self.A.shape[0]

    def coefficients(self) -> list[np.ndarray]:
        M = self.A.shape[0]
        return [self.A[:, j * M : (j + 1) * M] for j in range(self.P)]

    def normalized(self) -> tuple[np.ndarray, np.ndarray]:
        """``(h - mean(h), exp(mean(h)) Sigma)``, the scale-identified pair."""
        hbar = float(np.mean(self.h))
        return self.h - hbar, np.exp(hbar) * self.Sigma


@dataclass
class Chain:
    """Retained draws of one chain, stored as stacked arrays."""

    A: np.ndarray
    Sigma: np.ndarray
    h: np.ndarray
    mu_h: np.ndarray
    rho_h: np.ndarray
    sigma_h: np.ndarray
    y: np.ndarray
    P: int
    names: list[str] = field(default_factory=list)

    def __len__(self) -> int:
        return self.A.shape[0]

    def __getitem__(self, i: int) -> PosteriorDraw:
        return PosteriorDraw(
            A=self.A[i],
            Sigma=self.Sigma[i],
            h=self.h[i],
            mu_h=float(self.mu_h[i]),
            rho_h=float(self.rho_h[i]),
            sigma_h=float(self.sigma_h[i]),
            states=StatePath(y=self.y[i], P=self.P),
        )

    def __iter__(self):
        return (self[i] for i in range(len(self)))

    @classmethod
    def concatenate(cls, chains: list["Chain"]) -> "Chain":
        first = chains[0]
        cat = {k: np.concatenate([getattr(c, k) for c in chains]) for k in
               ("A", "Sigma", "h", "mu_h", "rho_h", "sigma_h", "y")}
        return cls(**cat, P=first.P, names=first.names)


# --- regression helpers ------------------------------------------------------


def lagged_design(y: np.ndarray, P: int) -> tuple[np.ndarray, np.ndarray]:
    """``Y`` (rows ``t = P..T-1``) and ``X`` with row ``t`` = ``(y_{t-1}, ..., y_{t-P})``."""
    T = y.shape[0]
    X = np.hstack([y[P - j : T - j] for j in range(1, P + 1)])
    return y[P:], X


def residuals(y: np.ndarray, A: np.ndarray, P: int) -> np.ndarray:
    """``T x M`` reduced-form residuals; the first ``P`` rows are NaN."""
    Y, X = lagged_design(y, P)
    out = np.full(y.shape, np.nan)
    out[P:] = Y - X @ A.T
    return out


def draw_inverse_wishart(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """``IW(df, scale)`` by the Bartlett decomposition of the Wishart precision."""
    M = scale.shape[0]
    C = np.linalg.cholesky(np.linalg.inv(scale))
    B = np.zeros((M, M))
    B[np.diag_indices(M)] = np.sqrt(rng.chisquare(df - np.arange(M)))
    B[np.tril_indices(M, -1)] = rng.standard_normal(M * (M - 1) // 2)
    CB = C @ B
    inv = np.linalg.inv(CB)
    out = inv.T @ inv
    return 0.5 * (out + out.T)


def _chol(S: np.ndarray, what: str) -> np.ndarray:
    try:
        return np.linalg.cholesky(0.5 * (S + S.T))
    except np.linalg.LinAlgError:
        raise SamplerError(f"{what} is numerically singular") from None


def draw_coefficients_and_sigma(
    y: np.ndarray,
    h: np.ndarray,
    priors: Priors,
    rng: np.random.Generator,
    P: int,
    A_current: np.ndarray | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``Sigma`` then ``A | Sigma`` from a complete weekly panel.

    Rows of the regression are scaled by ``exp(-h_t / 2)``.  No
    stationarity restriction is imposed on ``A``.
    """
    M = y.shape[1]
    Y, X = lagged_design(np.asarray(y, dtype=float), P)
    w = np.exp(-0.5 * np.asarray(h, dtype=float)[P:])
    Yw, Xw = Y * w[:, None], X * w[:, None]
    hyper, csv_prior = priors.minnesota, priors.csv
    df0 = csv_prior.wishart_df(M)
    S0 = csv_prior.wishart_scale(M)
    B0 = prior_mean(hyper, M, P).T  # MP x M
    if hyper.form == "natural_conjugate":
        omega_inv = 1.0 / conjugate_row_variances(hyper, M, P)
        prec = Xw.T @ Xw + np.diag(omega_inv)
        Lp = _chol(prec, "posterior Gram matrix")
        Bn = np.linalg.solve(prec, omega_inv[:, None] * B0 + Xw.T @ Yw)
        E = Yw - Xw @ Bn
        D = Bn - B0
        Sn = S0 + E.T @ E + D.T @ (omega_inv[:, None] * D)
        Sigma = draw_inverse_wishart(df0 + Y.shape[0], 0.5 * (Sn + Sn.T), rng)
        Z = rng.standard_normal(Bn.shape)
        # B = Bn + chol(prec)^-T Z chol(Sigma)'
        B = Bn + np.linalg.solve(Lp.T, Z) @ np.linalg.cholesky(Sigma).T
        return B.T.copy(), Sigma
    # independent normal / inverse-Wishart
    mom = minnesota_moments(hyper, M, P)
    A_cur = mom.mean if A_current is None else A_current
    E = Yw - Xw @ A_cur.T
    Sigma = draw_inverse_wishart(df0 + Y.shape[0], S0 + E.T @ E, rng)
    Sinv = np.linalg.inv(Sigma)
    v0 = mom.variance.ravel(order="F")  # vec(A), column-major
    prec = np.kron(Xw.T @ Xw, Sinv) + np.diag(1.0 / v0)
    lin = (Sinv @ Yw.T @ Xw).ravel(order="F") + mom.mean.ravel(order="F") / v0
    Lp = _chol(prec, "posterior coefficient precision")
    mean = np.linalg.solve(prec, lin)
    a = mean + np.linalg.solve(Lp.T, rng.standard_normal(mean.size))
    return a.reshape((M, M * P), order="F"), Sigma


def _slice_sample(logf, x0: float, width: float, rng: np.random.Generator, max_steps: int = 60) -> float:
    """One univariate slice-sampling update (stepping out, then shrinkage)."""
    level = logf(x0) - rng.exponential()
    lo = x0 - width * rng.random()
    hi = lo + width
    for _ in range(max_steps):
        if logf(lo) <= level:
            break
        lo -= width
    for _ in range(max_steps):
        if logf(hi) <= level:
            break
        hi += width
    while True:
        x = lo + (hi - lo) * rng.random()
        if logf(x) > level:
            return x
        if x < x0:
            lo = x
        else:
            hi = x


def draw_level_shift(
    h: np.ndarray,
    sv: SvParams,
    A: np.ndarray,
    Sigma: np.ndarray,
    priors: Priors,
    rng: np.random.Generator,
) -> tuple[np.ndarray, SvParams, np.ndarray]:
    """Move along ``(h + c, mu_h + c, exp(-c) Sigma)``, which leaves ``exp(h_t) Sigma`` alone.

    Only the priors of ``mu_h``, ``Sigma`` and (in the conjugate form)
    ``A | Sigma`` vary along this path, so ``c`` has the log-concave density
    ``a c - b exp(c) - (mu_h + c - m)^2 / (2 v)``, including the Jacobian of
    the ``Sigma`` rescaling.  Without the move the volatility level and the
    scale of ``Sigma`` only exchange information through their priors and
    mix very slowly.
    """
    M = Sigma.shape[0]
    P = A.shape[1] // M
    csv, hyper = priors.csv, priors.minnesota
    Sinv = np.linalg.inv(Sigma)
    a = 0.5 * M * csv.wishart_df(M)
    b = 0.5 * float(np.sum(csv.wishart_scale(M) * Sinv))
    if hyper.form == "natural_conjugate":
        D = A - prior_mean(hyper, M, P)
        a += 0.5 * M * M * P
        b += 0.5 * float(np.sum(Sinv * ((D / conjugate_row_variances(hyper, M, P)) @ D.T)))
    m, v = csv.mu_mean, csv.mu_var

    def logf(c: float) -> float:
        return a * c - b * np.exp(c) - (sv.mu + c - m) ** 2 / (2 * v)

    c = _slice_sample(logf, 0.0, 2.0 / np.sqrt(b + 1.0 / v), rng)
    return h + c, SvParams(sv.mu + c, sv.rho, sv.sigma), np.exp(-c) * Sigma


# --- the chain ---------------------------------------------------------------


@dataclass
class GibbsState:
    A: np.ndarray
    Sigma: np.ndarray
    h: np.ndarray
    sv: SvParams
    y: np.ndarray | None = None


@contextmanager
def _block(name: str, iteration: int):
    try:
        yield
    except SamplerError:
        raise
    except (np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        raise SamplerError(f"block '{name}' failed at iteration {iteration}: {exc}") from exc


def initial_state(M: int, T: int, priors: Priors, config: ChainConfig) -> GibbsState:
    scales = np.asarray(priors.minnesota.scale_estimates, dtype=float)
    a = priors.csv.rho_a / (priors.csv.rho_a + priors.csv.rho_b)
    if config.volatility == "fixed":
        sv = SvParams(config.fixed_h, 0.0, 0.0)
        h = np.full(T, config.fixed_h)
    else:
        sv = SvParams(priors.csv.mu_mean, 2 * a - 1, 0.1)
        h = np.full(T, priors.csv.mu_mean)
    return GibbsState(
        A=prior_mean(priors.minnesota, M, config.P),
        Sigma=np.diag(scales**2),
        h=h,
        sv=sv,
    )


def gibbs_sweep(
    state: GibbsState,
    x: np.ndarray,
    obs: ObservationMap,
    priors: Priors,
    config: ChainConfig,
    rng: np.random.Generator,
    iteration: int = 0,
) -> GibbsState:
    P = config.P
    with _block("states", iteration):
        system = build_companion(state.A)
        path = simulation_smoother(system, obs, x, state.Sigma, state.h, rng)
        y = path.y
    h, sv = state.h, state.sv
    if config.volatility == "csv":
        with _block("volatility path", iteration):
            eps = residuals(y, state.A, P)
            h, aux = draw_h_path_aux(eps, state.Sigma, state.h, state.sv, rng)
        with _block("volatility parameters", iteration):
            sv = draw_sv_params(h, priors.csv, state.sv, rng)
            h, sv = interweave(h, aux, sv, priors.csv, rng)
    with _block("coefficients", iteration):
        A, Sigma = draw_coefficients_and_sigma(y, h, priors, rng, P, state.A)
    if config.volatility == "csv":
        with _block("volatility level", iteration):
            h, sv, Sigma = draw_level_shift(h, sv, A, Sigma, priors, rng)
    return GibbsState(A=A, Sigma=Sigma, h=h, sv=sv, y=y)


def run_chain(
    x: np.ndarray,
    obs: ObservationMap,
    priors: Priors,
    config: ChainConfig,
    rng: np.random.Generator | None = None,
    names: list[str] | None = None,
    state: GibbsState | None = None,
) -> Chain:
    x = np.asarray(x, dtype=float)
    T, M = x.shape
    if priors.minnesota.scale_estimates is None:
        raise SamplerError("priors need scale estimates; use gibbs_run or Priors.with_scales")
    rng = np.random.default_rng(config.seed) if rng is None else rng
    state = initial_state(M, T, priors, config) if state is None else state
    n, P = config.n_draws, config.P
    out = dict(
        A=np.empty((n, M, M * P)),
        Sigma=np.empty((n, M, M)),
        h=np.empty((n, T)),
        mu_h=np.empty(n),
        rho_h=np.empty(n),
        sigma_h=np.empty(n),
        y=np.empty((n, T, M)),
    )
    total = config.n_burn + n * config.thin
    kept = 0
    for it in range(total):
        state = gibbs_sweep(state, x, obs, priors, config, rng, it)
        if it >= config.n_burn and (it - config.n_burn) % config.thin == 0:
            out["A"][kept] = state.A
            out["Sigma"][kept] = state.Sigma
            out["h"][kept] = state.h
            out["mu_h"][kept] = state.sv.mu
            out["rho_h"][kept] = state.sv.rho
            out["sigma_h"][kept] = state.sv.sigma
            out["y"][kept] = state.y
            kept += 1
        if (it + 1) % 500 == 0:
            log.info("iteration %d/%d", it + 1, total)
    return Chain(**out, P=P, names=list(names or []))


def gibbs_run(
    panel: MixedPanel,
    priors: Priors,
    config: ChainConfig,
    rng: np.random.Generator | None = None,
) -> Chain:
    """Run one chain on a panel; missing scale estimates are computed from it."""
    if priors.minnesota.scale_estimates is None:
        priors = priors.with_scales(scale_estimates(panel))
    obs = build_observation_map(panel, config.P)
    return run_chain(panel.values, obs, priors, config, rng, names=panel.names)
