"""Minnesota prior on the VAR coefficients and the volatility/covariance priors."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .calendar import MixedPanel


class PriorError(ValueError):
    pass


@dataclass(frozen=True)
class MinnesotaHyper:
    """Minnesota hyperparameters.

    ``form`` picks how the coefficient prior enters the sampler:
    ``"natural_conjugate"`` (Kronecker, ``A | Sigma`` matric-variate normal)
    or ``"independent"`` (diagonal normal, independent of ``Sigma``).
    ``lambda_cross`` only has an effect in the independent form; the
    Kronecker structure ties cross-variable scaling to ``Sigma``.
    """

    lambda_overall: float = 0.2
    lambda_cross: float = 0.5
    lambda_lag_decay: float = 1.0
    prior_mean_own_first_lag: float | np.ndarray = 0.0
    scale_estimates: np.ndarray | None = None
    form: str = "natural_conjugate"

    def __post_init__(self) -> None:
        if not self.lambda_overall > 0:
            raise PriorError("lambda_overall must be > 0")
        if not 0 < self.lambda_cross <= 1:
            raise PriorError("lambda_cross must be in (0, 1]")
        if self.lambda_lag_decay < 0:
            raise PriorError("lambda_lag_decay must be >= 0")
        if self.form not in ("natural_conjugate", "independent"):
            raise PriorError(f"unknown Minnesota form {self.form!r}")


@dataclass(frozen=True)
class CsvPrior:
    """Priors of the common-volatility block and of ``Sigma``.

    ``(rho_h + 1) / 2 ~ Beta(rho_a, rho_b)``; ``mu_h ~ N(mu_mean, mu_var)``;
    ``sigma_h^2 ~ Gamma(shape, rate)`` (or inverse-Gamma(shape, scale) when
    ``sigma2_family == "inverse_gamma"``); ``Sigma ~ IW(iw_df, iw_scale * I)``
    with ``iw_df`` defaulting to ``M + 2``.
    """

    rho_a: float = 25.0
    rho_b: float = 5.0
    mu_mean: float = 0.0
    mu_var: float = 10.0
    sigma2_shape: float = 0.5
    sigma2_rate: float = 0.5
    sigma2_family: str = "gamma"
    iw_df: float | None = None
    iw_scale: float | np.ndarray = 0.1

    def __post_init__(self) -> None:
        for name in ("rho_a", "rho_b", "mu_var", "sigma2_shape", "sigma2_rate"):
            if not getattr(self, name) > 0:
                raise PriorError(f"{name} must be > 0")
        if self.sigma2_family not in ("gamma", "inverse_gamma"):
            raise PriorError(f"unknown sigma2 family {self.sigma2_family!r}")

    def wishart_df(self, M: int) -> float:
        df = M + 2.0 if self.iw_df is None else float(self.iw_df)
        if not df > M + 1:
            raise PriorError(f"inverse-Wishart df {df} must exceed M + 1 = {M + 1}")
        return df

    def wishart_scale(self, M: int) -> np.ndarray:
        S = np.asarray(self.iw_scale, dtype=float)
        S = S * np.eye(M) if S.ndim == 0 else S
        if S.shape != (M, M):
            raise PriorError(f"inverse-Wishart scale must be {M}x{M}")
        try:
            np.linalg.cholesky(S)
        except np.linalg.LinAlgError:
            raise PriorError("inverse-Wishart scale is not positive definite") from None
        return S


@dataclass(frozen=True)
class MinnesotaMoments:
    """Prior mean and variance per coefficient, laid out like ``(A_1..A_P)``."""

    mean: np.ndarray
    variance: np.ndarray

    def vec_covariance(self) -> np.ndarray:
        """Diagonal covariance of ``vec`` of the ``M x MP`` coefficient matrix."""
        return np.diag(self.variance.ravel(order="F"))


def _scales(hyper: MinnesotaHyper, M: int) -> np.ndarray:
    if hyper.scale_estimates is None:
        raise PriorError("Minnesota prior needs scale estimates for every variable")
    s = np.asarray(hyper.scale_estimates, dtype=float).reshape(-1)
    if s.size != M:
        raise PriorError(f"expected {M} scale estimates, got {s.size}")
    if np.any(~np.isfinite(s)) or np.any(s <= 0):
        raise PriorError(f"scale estimates must be finite and positive, got {s}")
    return s


def prior_mean(hyper: MinnesotaHyper, M: int, P: int) -> np.ndarray:
    mean = np.zeros((M, M * P))
    mean[:, :M] = np.diag(np.broadcast_to(np.asarray(hyper.prior_mean_own_first_lag, dtype=float), (M,)))
    return mean


def minnesota_moments(hyper: MinnesotaHyper, M: int, P: int) -> MinnesotaMoments:
    """Prior moments of coefficient ``(i, j, lag)``.

    Variance is ``lambda_overall^2 / lag^(2 decay)`` for own lags, times
    ``lambda_cross^2 s_i^2 / s_j^2`` off the diagonal.
    """
    s = _scales(hyper, M)
    var = np.empty((M, M * P))
    ratio = (s[:, None] / s[None, :]) ** 2 * hyper.lambda_cross**2
    np.fill_diagonal(ratio, 1.0)
    for lag in range(1, P + 1):
        var[:, (lag - 1) * M : lag * M] = hyper.lambda_overall**2 / lag ** (2 * hyper.lambda_lag_decay) * ratio
    return MinnesotaMoments(mean=prior_mean(hyper, M, P), variance=var)


def conjugate_row_variances(hyper: MinnesotaHyper, M: int, P: int) -> np.ndarray:
    """Diagonal of ``Omega_0`` in ``B | Sigma ~ MN(B_0, Omega_0, Sigma)``, ``B = A'``.

    Row ``(lag, j)`` gets ``lambda_overall^2 / (lag^(2 decay) s_j^2)``, so that
    ``Var(A_ij,lag | Sigma) = Sigma_ii * lambda_overall^2 / (lag^(2 decay) s_j^2)``.
    """
    s = _scales(hyper, M)
    lags = np.repeat(np.arange(1, P + 1), M)
    return hyper.lambda_overall**2 / lags ** (2 * hyper.lambda_lag_decay) / np.tile(s, P) ** 2


def ar_residual_scale(series: np.ndarray, order: int = 4) -> float:
    """Residual s.d. of an OLS AR(order) with intercept on the finite values."""
    y = np.asarray(series, dtype=float)
    y = y[np.isfinite(y)]
    if y.size <= 2 * order + 2:
        if y.size < 2:
            raise PriorError("too few observations for a scale estimate")
        return float(np.std(y, ddof=1))
    Y = y[order:]
    X = np.column_stack([np.ones(Y.size)] + [y[order - j : y.size - j] for j in range(1, order + 1)])
    coef, *_ = np.linalg.lstsq(X, Y, rcond=None)
    resid = Y - X @ coef
    return float(np.sqrt(resid @ resid / (Y.size - X.shape[1])))


def scale_estimates(panel: MixedPanel, order: int = 4) -> np.ndarray:
    """Per-variable AR(order) residual s.d.

    Monthly columns are fitted on their month-end observations, i.e. as a
    monthly AR.
    """
    return np.array([ar_residual_scale(panel.values[:, j], order) for j in range(panel.M)])


@dataclass(frozen=True)
class Priors:
    minnesota: MinnesotaHyper = field(default_factory=MinnesotaHyper)
    csv: CsvPrior = field(default_factory=CsvPrior)

    def with_scales(self, scales: np.ndarray) -> "Priors":
        return replace(self, minnesota=replace(self.minnesota, scale_estimates=np.asarray(scales, dtype=float)))
