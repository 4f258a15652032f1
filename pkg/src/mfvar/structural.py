"""Recursive identification, impulse responses, historical decompositions
and zero-shock counterfactuals.

Structural shocks relate to the reduced-form residuals through
``eps_t = exp(h_t / 2) B0 u_t`` with ``B0`` the lower Cholesky factor of
``exp(mu_h) Sigma``, so the variable order fixes the recursive scheme.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .calendar import WeekStamp
from .sampler import PosteriorDraw, residuals
from .statespace import companion_shift

log = logging.getLogger(__name__)

QUANTILES = (0.05, 0.5, 0.95)


class IdentificationError(ValueError):
    pass


@dataclass
class IdentifiedDraw:
    B0: np.ndarray
    shocks: np.ndarray  # T x M, NaN for the first P weeks
    A: np.ndarray
    h: np.ndarray
    y: np.ndarray

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> int:
        return self.A.shape[1] // self.M

    def impulses(self, t: int) -> np.ndarray:
        """Columns ``exp(h_t/2) B0 e_j``: the impact of a unit ``u_{j,t}``."""
        return np.exp(0.5 * self.h[t]) * self.B0

    def reconstruct_residuals(self) -> np.ndarray:
        return np.exp(0.5 * self.h)[:, None] * (self.shocks @ self.B0.T)


def identify(draw: PosteriorDraw, impact_week: int | None = None) -> IdentifiedDraw:
    """Cholesky identification of one posterior draw.

    By default the impact matrix uses the average volatility level
    ``exp(mu_h)``; ``impact_week`` switches to ``exp(h_t)`` at that week.
    """
    level = draw.mu_h if impact_week is None else float(draw.h[impact_week])
    try:
        B0 = np.linalg.cholesky(np.exp(level) * draw.Sigma)
    except np.linalg.LinAlgError:
        raise IdentificationError("Sigma is not positive definite") from None
    P = draw.P
    eps = residuals(draw.states.y, draw.A, P)
    u = np.full_like(eps, np.nan)
    u[P:] = np.exp(-0.5 * draw.h[P:])[:, None] * np.linalg.solve(B0, eps[P:].T).T
    return IdentifiedDraw(B0=B0, shocks=u, A=draw.A, h=np.asarray(draw.h), y=draw.states.y)


def identify_all(draws: Iterable[PosteriorDraw], impact_week: int | None = None) -> tuple[list[IdentifiedDraw], int]:
    """Identify every draw; returns the identified ones and how many failed."""
    out, failed = [], 0
    for d in draws:
        try:
            out.append(identify(d, impact_week))
        except IdentificationError:
            failed += 1
    if failed:
        log.warning("excluded %d draws whose covariance could not be factorized", failed)
    return out, failed


def irf(ident: IdentifiedDraw, shock_index: int, horizons: int) -> np.ndarray:
    """Responses to a one-standard-deviation shock, horizons ``0..horizons-1`` (rows)."""
    if horizons < 0:
        raise ValueError("horizons must be >= 0")
    M, K = ident.M, ident.M * ident.P
    out = np.empty((horizons, M))
    z = np.zeros(K)
    z[:M] = ident.B0[:, shock_index]
    for h in range(horizons):
        out[h] = z[:M]
        z = companion_shift(ident.A, z)
    return out


@dataclass
class IrfResult:
    responses: np.ndarray  # draws x horizons x M
    quantiles: np.ndarray  # len(levels) x horizons x M
    levels: tuple[float, ...]
    shock_index: int


def summarize_irf(responses: np.ndarray, shock_index: int = 0, levels: Sequence[float] = QUANTILES) -> IrfResult:
    responses = np.asarray(responses, dtype=float)
    if responses.shape[0] < 2:
        raise ValueError("need at least 2 draws to summarize")
    q = np.quantile(responses, levels, axis=0)
    return IrfResult(responses=responses, quantiles=q, levels=tuple(levels), shock_index=shock_index)


@dataclass
class DecompositionResult:
    contributions: np.ndarray  # T x M x (M + 1); last slice = initial condition

    @property
    def initial(self) -> np.ndarray:
        return self.contributions[..., -1]

    def total(self) -> np.ndarray:
        return self.contributions.sum(axis=-1)


def historical_decomposition(ident: IdentifiedDraw) -> DecompositionResult:
    """Split the latent panel into per-shock contributions plus an initial term.

    The initial-condition slice carries the first ``P`` weeks and their
    propagation; shock ``j`` contributes
    ``sum_{s<=t} J F^(t-s) J' exp(h_s/2) B0 e_j u_{j,s}`` from week ``P`` on.
    """
    y, A, P, M = ident.y, ident.A, ident.P, ident.M
    T, K = y.shape[0], M * P
    out = np.zeros((T, M, M + 1))
    out[:P, :, M] = y[:P]
    z0 = y[:P][::-1].reshape(-1)
    C = np.zeros((K, M))
    for t in range(P, T):
        z0 = companion_shift(A, z0)
        C = companion_shift(A, C)
        C[:M] += ident.impulses(t) * ident.shocks[t][None, :]
        out[t, :, :M] = C[:M]
        out[t, :, M] = z0[:M]
    return DecompositionResult(out)


def shock_contribution(ident: IdentifiedDraw, shock_indices: Sequence[int], start: int, end: int) -> np.ndarray:
    """Contribution (T x M) of the given shocks dated ``start..end`` (inclusive)."""
    y, A, P, M = ident.y, ident.A, ident.P, ident.M
    T, K = y.shape[0], M * P
    out = np.zeros((T, M))
    idx = list(shock_indices)
    c = np.zeros(K)
    for t in range(max(start, P), T):
        c = companion_shift(A, c)
        if t <= end and idx:
            c[:M] += ident.impulses(t)[:, idx] @ ident.shocks[t, idx]
        out[t] = c[:M]
    return out


@dataclass(frozen=True)
class ScenarioSpec:
    shock_indices: tuple[int, ...]
    start: WeekStamp
    end: WeekStamp | None = None

    def window(self, stamps: Sequence[WeekStamp], P: int) -> tuple[int, int]:
        """Zero-based inclusive index window in a sample with these stamps."""
        first, last = stamps[0], stamps[-1]
        end = self.end or last
        if self.start < first or end > last or end < self.start:
            raise ValueError(f"scenario window {self.start}..{end} is outside the sample {first}..{last}")
        i0 = self.start.ordinal - first.ordinal
        i1 = end.ordinal - first.ordinal
        if i0 < P:
            raise ValueError(f"scenario must start after the first {P} weeks (no shocks before)")
        return i0, i1


def counterfactual(ident: IdentifiedDraw, shock_indices: Sequence[int], start: int, end: int) -> np.ndarray:
    """Latent panel re-simulated with ``u_{j,s} = 0`` for ``j`` in the set, ``start <= s <= end``."""
    y, A, P, M = ident.y, ident.A, ident.P, ident.M
    idx = sorted(set(int(j) for j in shock_indices))
    if any(not 0 <= j < M for j in idx):
        raise ValueError(f"shock indices {idx} outside 0..{M - 1}")
    if not P <= start <= end < y.shape[0]:
        raise ValueError(f"window {start}..{end} outside {P}..{y.shape[0] - 1}")
    if not idx:
        return y.copy()
    cf = y.copy()
    z = y[start - P : start][::-1].reshape(-1)
    for t in range(start, y.shape[0]):
        u = ident.shocks[t].copy()
        if t <= end:
            u[idx] = 0.0
        z = companion_shift(A, z)
        z[:M] += ident.impulses(t) @ u
        cf[t] = z[:M]
    return cf


@dataclass
class CounterfactualBands:
    actual: np.ndarray  # len(levels) x T x M
    counterfactual: np.ndarray
    difference: np.ndarray
    levels: tuple[float, ...]


def summarize_counterfactual(
    actual: np.ndarray, cf: np.ndarray, levels: Sequence[float] = QUANTILES
) -> CounterfactualBands:
    """Pointwise bands; the difference bands come from per-draw differences."""
    actual = np.asarray(actual, dtype=float)
    cf = np.asarray(cf, dtype=float)
    if actual.shape[0] < 2:
        raise ValueError("need at least 2 draws to summarize")
    q = lambda a: np.quantile(a, levels, axis=0)  # noqa: E731
    return CounterfactualBands(q(actual), q(cf), q(actual - cf), tuple(levels))


EXPECTED_SIGNS = {"INDPRO": 1, "NASDAQCOM": 1, "WGS10YR": -1}


def sign_check(result: IrfResult, names: Sequence[str], expected: dict[str, int] = EXPECTED_SIGNS,
               max_horizon: int = 48) -> dict[str, bool]:
    """Whether the median response has the expected sign at some horizon."""
    median = result.quantiles[list(result.levels).index(0.5)]
    out = {}
    for name, sign in expected.items():
        if name not in names:
            continue
        path = median[: max_horizon + 1, list(names).index(name)]
        out[name] = bool(np.any(sign * path > 0))
    return out
