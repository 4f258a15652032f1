"""Companion-form state space with exact (noise-free) mixed-frequency observations.

The latent weekly vector ``y_t`` follows a VAR(P).  Stacking
``z_t = (y_t, ..., y_{t-P+1})`` gives ``z_t = F z_{t-1} + G eps_t`` with
``eps_t ~ N(0, exp(h_t) Sigma)``.  The observation at ``t`` is the subset of
``Lambda z_t`` flagged active: monthly rows average the current and three
previous weeks, weekly rows pick the current value.

The filter runs over the steps ``t = P-1, ..., T-1`` (zero-based).  The first
step's state ``z_{P-1}`` holds the first ``P`` weeks of the sample and gets
the initial distribution; observations dated before ``P-1`` are folded into
that first step by shifting their loading rows into the right lag block.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .calendar import MixedPanel

log = logging.getLogger(__name__)

EIG_FLOOR = 1e-12
INIT_VARIANCE = 10.0


class StateSpaceError(ValueError):
    pass


@dataclass(frozen=True)
class CompanionSystem:
    F: np.ndarray
    M: int
    P: int

    @property
    def K(self) -> int:
        return self.M * self.P

    @property
    def A(self) -> np.ndarray:
        """Stacked coefficients ``(A_1, ..., A_P)`` as an ``M x MP`` array."""
        return self.F[: self.M]

    def coefficients(self) -> list[np.ndarray]:
        return [self.F[: self.M, j * self.M : (j + 1) * self.M].copy() for j in range(self.P)]

    @property
    def innovation_loading(self) -> np.ndarray:
        G = np.zeros((self.K, self.M))
        G[: self.M] = np.eye(self.M)
        return G

    @property
    def selector(self) -> np.ndarray:
        """``J`` with ``y_t = J z_t``."""
        return self.innovation_loading.T

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.F))))


def build_companion(A: np.ndarray | Sequence[np.ndarray]) -> CompanionSystem:
    """Companion matrix from ``A_1..A_P`` (a list, or a stacked ``M x MP`` array)."""
    if isinstance(A, np.ndarray) and A.ndim == 2:
        M = A.shape[0]
        if A.shape[1] % M or A.shape[1] == 0:
            raise StateSpaceError(f"stacked coefficients must be M x MP, got {A.shape}")
        stacked = np.asarray(A, dtype=float)
    else:
        mats = [np.atleast_2d(np.asarray(a, dtype=float)) for a in A]
        if not mats:
            raise StateSpaceError("need at least one lag matrix")
        M = mats[0].shape[0]
        if any(m.shape != (M, M) for m in mats):
            raise StateSpaceError("all lag matrices must be M x M")
        stacked = np.hstack(mats)
    P = stacked.shape[1] // M
    K = M * P
    F = np.zeros((K, K))
    F[:M] = stacked
    F[M:, : K - M] = np.eye(K - M)
    return CompanionSystem(F=F, M=M, P=P)


def companion_shift(A: np.ndarray, X: np.ndarray) -> np.ndarray:
    """``F @ X`` for a companion matrix with top block ``A`` (X is K x n or K)."""
    M = A.shape[0]
    return np.concatenate([A @ X, X[: X.shape[0] - M]], axis=0)


@dataclass
class ObservationMap:
    """Loading ``Lambda`` plus the schedule of active rows.

    ``active[t, i]`` says whether row ``i`` of ``Lambda`` is observed at
    ``t``.  ``steps`` holds, per filter step, the stacked loading rows and
    the ``(t, i)`` coordinates of the observations they explain.
    """

    Lambda: np.ndarray
    active: np.ndarray
    P: int
    n_monthly: int
    steps: list[tuple[np.ndarray, np.ndarray, np.ndarray]] = field(repr=False)
    dropped: list[tuple[int, int]] = field(default_factory=list)

    @property
    def M(self) -> int:
        return self.Lambda.shape[0]

    @property
    def T(self) -> int:
        return self.active.shape[0]

    @property
    def n_steps(self) -> int:
        return len(self.steps)

    def selection(self, t: int) -> np.ndarray:
        """The selection matrix ``M_t`` (rows of the identity that are active)."""
        return np.eye(self.M)[self.active[t]]


def loading_matrix(M: int, n_monthly: int, P: int) -> np.ndarray:
    """Rows of ``Lambda``; monthly rows need ``P >= 4`` to hold the four-week average."""
    if n_monthly > 0 and P < 4:
        raise StateSpaceError(
            f"lag order P={P} < 4: the four-week average needs y_(t-3) inside the state"
        )
    Lam = np.zeros((M, M * P))
    for i in range(M):
        if i < n_monthly:
            for lag in range(4):
                Lam[i, lag * M + i] = 0.25
        else:
            Lam[i, i] = 1.0
    return Lam


def build_observation_map(panel: MixedPanel, P: int) -> ObservationMap:
    M, T = panel.M, panel.T
    if T < P:
        raise StateSpaceError(f"sample of {T} weeks is shorter than the lag order {P}")
    Lam = loading_matrix(M, panel.n_monthly, P)
    month_end = np.array([s.is_month_end for s in panel.stamps])
    active = panel.observed.copy()
    active[:, : panel.n_monthly] &= month_end[:, None]
    return _schedule(Lam, active, P, panel.n_monthly)


def observation_map_from_mask(active: np.ndarray, n_monthly: int, P: int) -> ObservationMap:
    """Observation map from a raw ``T x M`` activity mask (no calendar)."""
    active = np.asarray(active, dtype=bool)
    Lam = loading_matrix(active.shape[1], n_monthly, P)
    return _schedule(Lam, active, P, n_monthly)


def _schedule(Lam: np.ndarray, active: np.ndarray, P: int, n_monthly: int) -> ObservationMap:
    T, M = active.shape
    K = M * P
    steps = []
    dropped = []
    # first step: everything dated 0..P-1, shifted into the lag block of z_{P-1}
    rows, ts, cs = [], [], []
    for t in range(min(P, T)):
        shift = (P - 1 - t) * M
        for i in np.flatnonzero(active[t]):
            row = np.zeros(K)
            nz = np.flatnonzero(Lam[i])
            if nz.max() + shift >= K:
                dropped.append((t, int(i)))
                continue
            row[nz + shift] = Lam[i, nz]
            rows.append(row)
            ts.append(t)
            cs.append(int(i))
    steps.append((np.array(rows).reshape(len(rows), K), np.array(ts, dtype=int), np.array(cs, dtype=int)))
    for t in range(P, T):
        idx = np.flatnonzero(active[t])
        steps.append((Lam[idx], np.full(idx.size, t, dtype=int), idx.astype(int)))
    if dropped:
        log.info("dropped %d observations that reference pre-sample weeks", len(dropped))
        active = active.copy()
        for t, i in dropped:
            active[t, i] = False
    return ObservationMap(Lambda=Lam, active=active, P=P, n_monthly=n_monthly, steps=steps, dropped=dropped)


@dataclass
class FilterResult:
    """Predictive/filtered moments per step (step ``k`` is week ``P-1+k``)."""

    pred_mean: np.ndarray
    pred_cov: np.ndarray
    filt_mean: np.ndarray
    filt_cov: np.ndarray
    loglik: float
    guarded_steps: list[int]
    # quantities reused by the backward pass
    gains: list[np.ndarray] = field(repr=False)
    innov_inv: list[np.ndarray] = field(repr=False)
    scaled_innov: list[np.ndarray] = field(repr=False)

    def to_csv(self, path: str | Path, P: int) -> None:
        """Dump filtered means and variances (debugging aid)."""
        n, K = self.filt_mean.shape
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", *[f"mean_{j}" for j in range(K)], *[f"var_{j}" for j in range(K)]])
            for k in range(n):
                w.writerow([P - 1 + k, *self.filt_mean[k], *np.diag(self.filt_cov[k])])


def _sym_inverse(S: np.ndarray) -> tuple[np.ndarray, float, bool]:
    """Inverse and log-determinant of a symmetric PSD matrix.

    Falls back to an eigenvalue-floored pseudo-inverse when Cholesky fails.
    """
    try:
        L = np.linalg.cholesky(S)
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(S)
        keep = w > EIG_FLOOR
        inv = (V[:, keep] / w[keep]) @ V[:, keep].T
        return inv, float(np.sum(np.log(w[keep]))), True
    Linv = np.linalg.inv(L)
    return Linv.T @ Linv, 2.0 * float(np.sum(np.log(np.diag(L)))), False


def _init_moments(K: int, init) -> tuple[np.ndarray, np.ndarray]:
    if init is None:
        return np.zeros(K), INIT_VARIANCE * np.eye(K)
    mean, cov = init
    return np.asarray(mean, dtype=float).reshape(K), np.asarray(cov, dtype=float).reshape(K, K)


def _vol_path(h, T: int) -> np.ndarray:
    if h is None:
        return np.ones(T)
    h = np.asarray(h, dtype=float)
    if h.shape != (T,):
        raise StateSpaceError(f"volatility path must have length {T}, got {h.shape}")
    return np.exp(h)


def kalman_filter(
    system: CompanionSystem,
    obs: ObservationMap,
    x: np.ndarray,
    sigma: np.ndarray,
    h: np.ndarray | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> FilterResult:
    """Kalman filter under exact observation.

    ``x`` is the ``T x M`` observation matrix (entries outside the active
    schedule are ignored).  The innovation covariance at ``t`` is
    ``exp(h_t) * sigma`` placed on the first ``M`` state coordinates.
    Covariance updates use the Joseph form.
    """
    M, K, A = system.M, system.K, system.A
    x = np.asarray(x, dtype=float)
    T = obs.T
    scale = _vol_path(h, T)
    sigma = np.asarray(sigma, dtype=float)
    n = obs.n_steps
    a, Pm = _init_moments(K, init)
    pred_mean = np.empty((n, K))
    pred_cov = np.empty((n, K, K))
    filt_mean = np.empty((n, K))
    filt_cov = np.empty((n, K, K))
    gains, inverses, scaled = [], [], []
    guarded = []
    loglik = 0.0
    I = np.eye(K)
    for k in range(n):
        t = obs.P - 1 + k
        if k > 0:
            a = companion_shift(A, filt_mean[k - 1])
            FP = companion_shift(A, filt_cov[k - 1])
            Pm = companion_shift(A, FP.T).T
            Pm[:M, :M] += scale[t] * sigma
        pred_mean[k] = a
        pred_cov[k] = Pm
        H, ts, cs = obs.steps[k]
        if H.shape[0] == 0:
            filt_mean[k] = a
            filt_cov[k] = Pm
            gains.append(np.zeros((K, 0)))
            inverses.append(np.zeros((0, 0)))
            scaled.append(np.zeros(0))
            continue
        v = x[ts, cs] - H @ a
        PHt = Pm @ H.T
        S = H @ PHt
        S = 0.5 * (S + S.T)
        Sinv, logdet, was_guarded = _sym_inverse(S)
        if was_guarded:
            guarded.append(t)
            log.debug("innovation covariance singular at t=%d; using pseudo-inverse", t)
        Kg = PHt @ Sinv
        u = Sinv @ v
        filt_mean[k] = a + PHt @ u
        IKH = I - Kg @ H
        Pf = IKH @ Pm @ IKH.T
        filt_cov[k] = 0.5 * (Pf + Pf.T)
        loglik -= 0.5 * (H.shape[0] * np.log(2.0 * np.pi) + logdet + float(v @ u))
        gains.append(Kg)
        inverses.append(Sinv)
        scaled.append(u)
    return FilterResult(pred_mean, pred_cov, filt_mean, filt_cov, loglik, guarded, gains, inverses, scaled)


def _backward_mean(system: CompanionSystem, obs: ObservationMap, filt: FilterResult) -> np.ndarray:
    """Smoothed state means by the ``r_t`` backward recursion.

    Only the innovation covariances are inverted, never the (singular)
    predictive state covariance.
    """
    A = system.A
    n, K = filt.pred_mean.shape
    out = np.empty((n, K))
    r = np.zeros(K)
    for k in range(n - 1, -1, -1):
        H = obs.steps[k][0]
        Fr = _companion_T_times(A, r)
        if H.shape[0]:
            r = H.T @ (filt.scaled_innov[k] - filt.gains[k].T @ Fr) + Fr
        else:
            r = Fr
        out[k] = filt.pred_mean[k] + filt.pred_cov[k] @ r
    return out


def _companion_T_times(A: np.ndarray, r: np.ndarray) -> np.ndarray:
    """``F.T @ r`` for the companion matrix with top block ``A``."""
    M = A.shape[0]
    out = A.T @ r[:M]
    out[: out.size - M] += r[M:]
    return out


def states_to_panel(z: np.ndarray, P: int, M: int) -> np.ndarray:
    """Recover the ``T x M`` weekly panel from step states ``z`` (n x K)."""
    n = z.shape[0]
    first = z[0].reshape(P, M)[::-1]  # rows y_0 .. y_{P-1}
    return np.vstack([first, z[1:, :M]]) if n > 1 else first


def panel_to_states(y: np.ndarray, P: int) -> np.ndarray:
    """Inverse of :func:`states_to_panel`: lag-stack ``y`` into step states."""
    T, M = y.shape
    return np.stack([y[t - P + 1 : t + 1][::-1].reshape(-1) for t in range(P - 1, T)])


@dataclass
class StatePath:
    """One draw of the latent weekly panel.

    ``y`` is ``T x M``; ``z`` holds the companion states for weeks
    ``P-1 .. T-1``.
    """

    y: np.ndarray
    P: int

    @property
    def z(self) -> np.ndarray:
        return panel_to_states(self.y, self.P)

    def aggregation_residual(self, obs: ObservationMap, x: np.ndarray) -> float:
        """Largest absolute gap between active observations and the implied ones."""
        y = self.y
        implied = y.copy()
        for i in range(obs.n_monthly):
            implied[3:, i] = 0.25 * (y[3:, i] + y[2:-1, i] + y[1:-2, i] + y[:-3, i])
        gaps = np.abs(np.where(obs.active, implied - np.asarray(x, dtype=float), 0.0))
        return float(gaps.max()) if gaps.size else 0.0


def smoothed_mean(
    system: CompanionSystem,
    obs: ObservationMap,
    x: np.ndarray,
    sigma: np.ndarray,
    h: np.ndarray | None = None,
    init: tuple[np.ndarray, np.ndarray] | None = None,
) -> np.ndarray:
    """Posterior mean of the weekly panel given all active observations (T x M)."""
    filt = kalman_filter(system, obs, x, sigma, h, init)
    return states_to_panel(_backward_mean(system, obs, filt), system.P, system.M)


def _simulate_states(
    system: CompanionSystem,
    scale: np.ndarray,
    chol_sigma: np.ndarray,
    init_mean: np.ndarray,
    init_chol: np.ndarray,
    n_steps: int,
    rng: np.random.Generator,
) -> np.ndarray:
    M, K, A, P = system.M, system.K, system.A, system.P
    z = np.empty((n_steps, K))
    z[0] = init_mean + init_chol @ rng.standard_normal(K)
    shocks = rng.standard_normal((n_steps, M))
    for k in range(1, n_steps):
        t = P - 1 + k
        z[k] = companion_shift(A, z[k - 1])
        z[k, :M] += np.sqrt(scale[t]) * (chol_sigma @ shocks[k])
    return z


def simulation_smoother(
    system: CompanionSystem,
    obs: ObservationMap,
    x: np.ndarray,
    sigma: np.ndarray,
    h: np.ndarray | None,
    rng: np.random.Generator,
    init: tuple[np.ndarray, np.ndarray] | None = None,
    filt: FilterResult | None = None,
) -> StatePath:
    """Draw the latent weekly path from its conditional distribution.

    Mean-correction scheme: simulate an unconditional path ``z*`` with its
    observations ``x*``, then add the smoothed mean of ``z - z*`` given
    ``x - x*``.  Active weekly observations are copied into the draw
    exactly; monthly averages hold up to rounding.
    """
    M, K, P = system.M, system.K, system.P
    x = np.asarray(x, dtype=float)
    T = obs.T
    scale = _vol_path(h, T)
    mean0, cov0 = _init_moments(K, init)
    try:
        chol_sigma = np.linalg.cholesky(sigma)
        chol0 = np.linalg.cholesky(cov0)
    except np.linalg.LinAlgError as exc:
        raise StateSpaceError(f"covariance not positive definite: {exc}") from None
    zs = _simulate_states(system, scale, chol_sigma, mean0, chol0, obs.n_steps, rng)
    ys = states_to_panel(zs, P, M)
    xs = _implied_observations(obs, zs, ys)
    gap = np.where(obs.active, x - xs, 0.0)
    if filt is None:
        filt = kalman_filter(system, obs, gap, sigma, h, (np.zeros(K), cov0))
    else:
        filt = _refilter_means(system, obs, filt, gap, np.zeros(K))
    zhat = _backward_mean(system, obs, filt)
    y = ys + states_to_panel(zhat, P, M)
    weekly = obs.active.copy()
    weekly[:, : obs.n_monthly] = False
    y[weekly] = x[weekly]
    return StatePath(y=y, P=P)


def _implied_observations(obs: ObservationMap, z: np.ndarray, y: np.ndarray) -> np.ndarray:
    xs = np.zeros((obs.T, obs.M))
    for k, (H, ts, cs) in enumerate(obs.steps):
        if H.shape[0]:
            xs[ts, cs] = H @ z[k]
    return xs


def _refilter_means(
    system: CompanionSystem, obs: ObservationMap, filt: FilterResult, x: np.ndarray, mean0: np.ndarray
) -> FilterResult:
    """Rerun only the mean recursion of a filter whose covariances are known."""
    A = system.A
    n, K = filt.pred_mean.shape
    pred_mean = np.empty((n, K))
    filt_mean = np.empty((n, K))
    scaled = []
    a = mean0
    for k in range(n):
        if k > 0:
            a = companion_shift(A, filt_mean[k - 1])
        pred_mean[k] = a
        H, ts, cs = obs.steps[k]
        if H.shape[0] == 0:
            filt_mean[k] = a
            scaled.append(np.zeros(0))
            continue
        u = filt.innov_inv[k] @ (x[ts, cs] - H @ a)
        filt_mean[k] = a + filt.pred_cov[k] @ (H.T @ u)
        scaled.append(u)
    return FilterResult(
        pred_mean, filt.pred_cov, filt_mean, filt.filt_cov, np.nan, filt.guarded_steps,
        filt.gains, filt.innov_inv, scaled,
    )
