"""Synthetic mixed-frequency VAR data with common stochastic volatility."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.linalg import solve_discrete_lyapunov

from .calendar import MixedPanel, WeekStamp, _load_toml, build_calendar, write_panel_csv
from .statespace import build_companion
from .volatility import SvParams, simulate_h

BURN_IN = 500


class DgpError(ValueError):
    pass


@dataclass
class DgpSpec:
    A: np.ndarray  # M x MP
    Sigma: np.ndarray
    n_monthly: int
    T: int
    mu_h: float = 0.0
    rho_h: float = 0.9
    sigma_h: float = 0.2
    seed: int = 0
    start: WeekStamp = field(default_factory=lambda: WeekStamp(2000, 1))
    ragged_weeks: dict[int, int] = field(default_factory=dict)
    names: list[str] | None = None

    def __post_init__(self) -> None:
        self.A = np.atleast_2d(np.asarray(self.A, dtype=float))
        self.Sigma = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        M = self.M
        if self.A.shape[1] % M:
            raise DgpError(f"A must be M x MP, got {self.A.shape}")
        if self.Sigma.shape != (M, M):
            raise DgpError("Sigma must be M x M")
        try:
            np.linalg.cholesky(self.Sigma)
        except np.linalg.LinAlgError:
            raise DgpError("Sigma is not positive definite") from None
        if not 0 <= self.n_monthly < M:
            raise DgpError("need 0 <= n_monthly < M")
        if abs(self.rho_h) >= 1 or self.sigma_h < 0:
            raise DgpError("volatility process must be stationary with sigma_h >= 0")
        if self.start.week % 4 != 1:
            raise DgpError("sample must start in the first week of a month")
        radius = build_companion(self.A).spectral_radius()
        if radius >= 1:
            raise DgpError(f"explosive DGP: companion spectral radius {radius:.4f} >= 1")
        if self.names is None:
            self.names = [f"m{i + 1}" for i in range(self.n_monthly)] + [
                f"w{i + 1}" for i in range(M - self.n_monthly)
            ]

    @property
    def M(self) -> int:
        return self.A.shape[0]

    @property
    def P(self) -> int:
        return self.A.shape[1] // self.M

    @property
    def sv(self) -> SvParams:
        return SvParams(self.mu_h, self.rho_h, self.sigma_h)


@dataclass
class SimulationResult:
    y: np.ndarray  # true weekly panel, T x M
    panel: MixedPanel
    h: np.ndarray
    shocks: np.ndarray  # reduced-form innovations eps_t, T x M
    spec: DgpSpec


def simulate_var(A: np.ndarray, Sigma: np.ndarray, h: np.ndarray, y0: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    """Run ``y_t = sum_j A_j y_{t-j} + exp(h_t/2) L e_t`` forward.

    ``y0`` holds the ``P`` starting rows (oldest first); the output excludes
    them.
    """
    M = A.shape[0]
    P = A.shape[1] // M
    T = h.size
    L = np.linalg.cholesky(Sigma)
    y = np.vstack([y0, np.zeros((T, M))])
    eps = np.exp(h / 2)[:, None] * (rng.standard_normal((T, M)) @ L.T)
    for t in range(T):
        lags = y[t : t + P][::-1].reshape(-1)
        y[t + P] = A @ lags + eps[t]
    return y[P:], eps


def observe(y: np.ndarray, n_monthly: int, stamps, ragged_weeks=None) -> np.ndarray:
    """Observed panel: exact four-week means at month ends for monthly columns."""
    T, M = y.shape
    x = y.copy()
    month_end = np.array([s.is_month_end for s in stamps])
    for i in range(n_monthly):
        col = np.full(T, np.nan)
        for t in np.flatnonzero(month_end):
            if t >= 3:
                col[t] = np.mean(y[t - 3 : t + 1, i])
        x[:, i] = col
    for j, n in (ragged_weeks or {}).items():
        if n > 0:
            x[T - n :, int(j)] = np.nan
    return x


def simulate(spec: DgpSpec) -> SimulationResult:
    rng = np.random.default_rng(spec.seed)
    M, P, T = spec.M, spec.P, spec.T
    total = BURN_IN + T
    h = simulate_h(total, spec.sv, rng)
    y, eps = simulate_var(spec.A, spec.Sigma, h, np.zeros((P, M)), rng)
    y, eps, h = y[BURN_IN:], eps[BURN_IN:], h[BURN_IN:]
    stamps = build_calendar(spec.start, spec.start.shift(T - 1))
    x = observe(y, spec.n_monthly, stamps, spec.ragged_weeks)
    panel = MixedPanel(values=x, stamps=stamps, names=list(spec.names), n_monthly=spec.n_monthly)
    return SimulationResult(y=y, panel=panel, h=h, shocks=eps, spec=spec)


def var_autocovariance(A: np.ndarray, Sigma: np.ndarray, lags: int) -> np.ndarray:
    """Autocovariances ``Gamma_0..Gamma_lags`` of a stationary VAR(P).

    Solves the discrete Lyapunov equation for the companion state.
    """
    comp = build_companion(A)
    M, K = comp.M, comp.K
    Q = np.zeros((K, K))
    Q[:M, :M] = Sigma
    V = solve_discrete_lyapunov(comp.F, Q)
    out = [V[:M, :M]]
    C = V
    for _ in range(lags):
        C = comp.F @ C
        out.append(C[:M, :M])
    return np.array(out)


def load_spec(path: str | Path) -> DgpSpec:
    """Read a DGP spec from TOML.

    Keys: ``A`` (M x MP nested list), ``Sigma``, ``n_monthly``, ``T``,
    optional ``mu_h``, ``rho_h``, ``sigma_h``, ``seed``, ``start = [y, w]``,
    ``names`` and ``ragged_weeks`` (table of column index -> trailing NaNs).
    """
    path = Path(path)
    if not path.exists():
        raise DgpError(f"DGP spec not found: {path}")
    doc = _load_toml(path)
    doc = doc.get("dgp", doc)
    kwargs = dict(doc)
    if "start" in kwargs:
        kwargs["start"] = WeekStamp(*kwargs["start"])
    if "ragged_weeks" in kwargs:
        kwargs["ragged_weeks"] = {int(k): int(v) for k, v in kwargs["ragged_weeks"].items()}
    try:
        return DgpSpec(**kwargs)
    except TypeError as exc:
        raise DgpError(f"bad DGP spec: {exc}") from None


def write_simulation(result: SimulationResult, out: str | Path) -> None:
    """Write ``panel.csv`` and ``truth.json`` into ``out``."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    write_panel_csv(result.panel, out / "panel.csv")
    spec = result.spec
    truth = {
        "names": spec.names,
        "n_monthly": spec.n_monthly,
        "P": spec.P,
        "T": spec.T,
        "seed": spec.seed,
        "A": spec.A.tolist(),
        "Sigma": spec.Sigma.tolist(),
        "mu_h": spec.mu_h,
        "rho_h": spec.rho_h,
        "sigma_h": spec.sigma_h,
        "h": result.h.tolist(),
        "weekly": result.y.tolist(),
        "shocks": result.shocks.tolist(),
    }
    (out / "truth.json").write_text(json.dumps(truth, indent=1) + "\n")
