"""Common stochastic volatility block.

``Sigma_t = exp(h_t) Sigma`` with ``h_t - mu = rho (h_{t-1} - mu) + sigma_h v_t``.
The path is drawn with the 10-component normal mixture approximation of
``log chi^2_1`` (Omori, Chib, Shephard and Nakajima, 2007), the parameters
by Gibbs/Metropolis-Hastings steps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special
from scipy.linalg import cho_solve_banded, cholesky_banded, solve_banded

from .priors import CsvPrior

MIX_PROB = np.array([0.00609, 0.04775, 0.13057, 0.20674, 0.22715, 0.18842, 0.12047, 0.05591, 0.01575, 0.00115])
MIX_MEAN = np.array([1.92677, 1.34744, 0.73504, 0.02266, -0.85173, -1.97278, -3.46788, -5.55246, -8.68384, -14.65000])
MIX_VAR = np.array([0.11265, 0.17788, 0.26768, 0.40611, 0.62699, 0.98583, 1.57469, 2.54498, 4.16591, 7.33342])

LOG_OFFSET = 1e-10


@dataclass(frozen=True)
class SvParams:
    mu: float
    rho: float
    sigma: float


def mixture_moments() -> tuple[float, float]:
    mean = float(MIX_PROB @ MIX_MEAN)
    var = float(MIX_PROB @ (MIX_VAR + MIX_MEAN**2) - mean**2)
    return mean, var


def ar1_precision_bands(T: int, rho: float, sigma: float) -> np.ndarray:
    """Upper banded form (2 x T) of the stationary AR(1) precision matrix."""
    diag = np.full(T, 1.0 + rho**2)
    diag[0] = diag[-1] = 1.0
    if T == 1:
        diag[0] = 1.0 - rho**2
    ab = np.zeros((2, T))
    ab[1] = diag / sigma**2
    ab[0, 1:] = -rho / sigma**2
    return ab


def _banded_matvec(ab: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = ab[1] * x
    out[:-1] += ab[0, 1:] * x[1:]
    out[1:] += ab[0, 1:] * x[:-1]
    return out


def draw_indicators(ystar: np.ndarray, h: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Mixture component per measurement given the current log-volatility."""
    dev = (ystar - h[:, None])[..., None] - MIX_MEAN
    logw = np.log(MIX_PROB) - 0.5 * np.log(MIX_VAR) - 0.5 * dev**2 / MIX_VAR
    logw -= logw.max(axis=-1, keepdims=True)
    w = np.exp(logw)
    cdf = np.cumsum(w, axis=-1)
    u = rng.random(ystar.shape)[..., None] * cdf[..., -1:]
    return np.minimum((cdf < u).sum(axis=-1), MIX_PROB.size - 1)


def log_squared_shocks(residuals: np.ndarray, sigma: np.ndarray) -> np.ndarray:
    """``log(e^2 + offset)`` with ``e = L^-1 eps`` for the Cholesky factor ``L`` of ``Sigma``."""
    L = np.linalg.cholesky(sigma)
    e = np.linalg.solve(L, np.asarray(residuals, dtype=float).T).T
    return np.log(e**2 + LOG_OFFSET)


@dataclass
class MixtureAux:
    """Measurements ``log e^2`` and their mixture components, for rows ``rows``."""

    ystar: np.ndarray
    s: np.ndarray
    rows: np.ndarray


def draw_h_path_aux(
    residuals: np.ndarray,
    sigma: np.ndarray,
    h: np.ndarray,
    params: SvParams,
    rng: np.random.Generator,
) -> tuple[np.ndarray, MixtureAux]:
    """Like :func:`draw_h_path`, also returning the mixture augmentation used."""
    residuals = np.asarray(residuals, dtype=float)
    T = residuals.shape[0]
    h = np.asarray(h, dtype=float)
    rows = np.all(np.isfinite(residuals), axis=1)
    prec = np.zeros(T)
    lin = np.zeros(T)
    ystar = log_squared_shocks(residuals[rows], sigma) if rows.any() else np.zeros((0, residuals.shape[1]))
    s = draw_indicators(ystar, h[rows], rng)
    if rows.any():
        prec[rows] = (1.0 / MIX_VAR[s]).sum(axis=1)
        lin[rows] = ((ystar - MIX_MEAN[s]) / MIX_VAR[s]).sum(axis=1)

    ab = ar1_precision_bands(T, params.rho, params.sigma)
    lin = lin + _banded_matvec(ab, np.full(T, params.mu))
    ab[1] += prec
    U = cholesky_banded(ab, lower=False)
    mean = cho_solve_banded((U, False), lin)
    return mean + solve_banded((0, 1), U, rng.standard_normal(T)), MixtureAux(ystar, s, rows)


def draw_h_path(
    residuals: np.ndarray,
    sigma: np.ndarray,
    h: np.ndarray,
    params: SvParams,
    rng: np.random.Generator,
) -> np.ndarray:
    """Draw ``h_{1:T}`` given residuals, ``Sigma`` and the AR(1) parameters.

    ``residuals`` is ``T x M``; rows containing NaN (weeks without a
    residual, e.g. the first ``P``) carry no measurement and are drawn
    from the AR(1) prior alone.  ``h`` is the current path, used for the
    mixture indicators.
    """
    return draw_h_path_aux(residuals, sigma, h, params, rng)[0]


def _ar_sums(h: np.ndarray, mu: float, rho: float) -> float:
    d = h - mu
    return (1.0 - rho**2) * d[0] ** 2 + float(np.sum((d[1:] - rho * d[:-1]) ** 2))


def _draw_mu(h, rho, sigma, prior: CsvPrior, rng, likelihood: bool) -> float:
    prec = 1.0 / prior.mu_var
    lin = prior.mu_mean / prior.mu_var
    if likelihood:
        T = h.size
        prec += ((1.0 - rho**2) + (T - 1) * (1.0 - rho) ** 2) / sigma**2
        lin += ((1.0 - rho**2) * h[0] + (1.0 - rho) * np.sum(h[1:] - rho * h[:-1])) / sigma**2
    return float(lin / prec + rng.standard_normal() / np.sqrt(prec))


def _log_rho_prior(rho: float, prior: CsvPrior) -> float:
    u = (rho + 1.0) / 2.0
    return float((prior.rho_a - 1.0) * np.log(u) + (prior.rho_b - 1.0) * np.log1p(-u))


def _log_normal(x: float, sd: float) -> float:
    return float(-np.log(sd) - 0.5 * (x / sd) ** 2)


def _truncnorm(loc: float, scale: float, rng) -> float:
    """Normal restricted to ``(-1, 1)``, by inverting the CDF."""
    a, b = (-1.0 - loc) / scale, (1.0 - loc) / scale
    if a > 0:  # work in the upper tail by symmetry
        return -_truncnorm(-loc, scale, rng)
    lo, hi = special.ndtr(a), special.ndtr(b)
    x = loc + scale * float(special.ndtri(lo + rng.random() * (hi - lo)))
    return min(max(x, -1.0 + 1e-12), 1.0 - 1e-12)


def _truncnorm_mass(loc: float, scale: float) -> float:
    return float(special.ndtr((1.0 - loc) / scale) - special.ndtr((-1.0 - loc) / scale))


RHO_WALK = 0.1


def _draw_rho(h, mu, rho, sigma, prior: CsvPrior, rng, likelihood: bool) -> float:
    d = h - mu
    ss = float(np.sum(d[:-1] ** 2)) if likelihood else 0.0
    if ss > 1e-12 * sigma**2:
        # independence proposal from the AR(1) regression; its likelihood part
        # cancels, leaving the prior and the stationary density of h_1
        rho_hat = float(np.sum(d[1:] * d[:-1])) / ss
        prop = _truncnorm(rho_hat, sigma / np.sqrt(ss), rng)

        def log_target(r):
            return _log_rho_prior(r, prior) + _log_normal(d[0], sigma / np.sqrt(1.0 - r**2))

        log_ratio = log_target(prop) - log_target(rho)
    else:
        prop = _truncnorm(rho, RHO_WALK, rng)
        log_ratio = _log_rho_prior(prop, prior) - _log_rho_prior(rho, prior)
        log_ratio += np.log(_truncnorm_mass(rho, RHO_WALK)) - np.log(_truncnorm_mass(prop, RHO_WALK))
        if likelihood:
            log_ratio += _log_normal(d[0], sigma / np.sqrt(1.0 - prop**2))
            log_ratio -= _log_normal(d[0], sigma / np.sqrt(1.0 - rho**2))
    return prop if np.log(rng.random()) < log_ratio else rho


def _draw_sigma2(h, mu, rho, sigma2, prior: CsvPrior, rng, likelihood: bool) -> float:
    n = h.size if likelihood else 0
    ssr = _ar_sums(h, mu, rho) if likelihood else 0.0
    if prior.sigma2_family == "inverse_gamma":
        shape = prior.sigma2_shape + 0.5 * n
        scale = prior.sigma2_rate + 0.5 * ssr
        return float(scale / rng.gamma(shape))
    # random walk on log sigma^2; target includes the Jacobian sigma^2
    step = 2.38 * np.sqrt(2.0 / n) if n > 8 else 1.0

    def log_target(w):
        s2 = np.exp(w)
        return (
            (prior.sigma2_shape - 0.5 * n) * w
            - prior.sigma2_rate * s2
            - 0.5 * ssr / s2
        )

    w0 = np.log(sigma2)
    w1 = w0 + step * rng.standard_normal()
    return float(np.exp(w1)) if np.log(rng.random()) < log_target(w1) - log_target(w0) else float(sigma2)


def draw_sv_params(
    h: np.ndarray,
    prior: CsvPrior,
    current: SvParams,
    rng: np.random.Generator,
    likelihood: bool = True,
) -> SvParams:
    """One sweep over ``mu_h``, ``rho_h`` and ``sigma_h^2``.

    With ``likelihood=False`` the path is ignored and the sweep targets the
    prior, which is how the prior-sampling check exercises the MH kernels.
    """
    h = np.asarray(h, dtype=float)
    rho, sigma = current.rho, current.sigma
    if not abs(rho) < 1:
        raise ValueError(f"current rho_h={rho} is not stationary")
    mu = _draw_mu(h, rho, sigma, prior, rng, likelihood)
    rho = _draw_rho(h, mu, rho, sigma, prior, rng, likelihood)
    sigma2 = _draw_sigma2(h, mu, rho, sigma**2, prior, rng, likelihood)
    return SvParams(mu=mu, rho=rho, sigma=float(np.sqrt(sigma2)))


def _log_sigma_prior(sigma: float, prior: CsvPrior) -> float:
    """Log density of the signed ``sigma_h`` implied by the prior on ``sigma_h^2`` (up to a constant)."""
    a = abs(sigma)
    if prior.sigma2_family == "inverse_gamma":
        return (-2.0 * prior.sigma2_shape - 1.0) * np.log(a) - prior.sigma2_rate / a**2
    return (2.0 * prior.sigma2_shape - 1.0) * np.log(a) - prior.sigma2_rate * a**2


def interweave(
    h: np.ndarray,
    aux: MixtureAux,
    params: SvParams,
    prior: CsvPrior,
    rng: np.random.Generator,
) -> tuple[np.ndarray, SvParams]:
    """Redraw ``(mu_h, sigma_h)`` in the non-centered form ``h = mu + sigma * h_tilde``.

    Given ``h_tilde`` and the mixture components, the measurements are a
    linear regression on ``(1, h_tilde_t)``.  The proposal uses a normal
    prior ``N(0, tau^2)`` on the signed ``sigma``; the Metropolis-Hastings
    ratio then only involves the true prior over that normal.  Under the
    default ``Gamma(1/2, rate)`` prior on ``sigma^2`` the two coincide and
    every proposal is accepted.
    """
    if params.sigma <= 0 or not aux.rows.any():
        return h, params
    h = np.asarray(h, dtype=float)
    ht = (h - params.mu) / params.sigma
    tau2 = 0.5 / prior.sigma2_rate if prior.sigma2_family == "gamma" else 1.0
    w = 1.0 / MIX_VAR[aux.s]
    r = aux.ystar - MIX_MEAN[aux.s]
    x = ht[aux.rows][:, None]
    XtWX = np.array([[w.sum(), (w * x).sum()], [(w * x).sum(), (w * x**2).sum()]])
    XtWr = np.array([(w * r).sum(), (w * x * r).sum()])
    prec = XtWX + np.diag([1.0 / prior.mu_var, 1.0 / tau2])
    lin = XtWr + np.array([prior.mu_mean / prior.mu_var, 0.0])
    L = np.linalg.cholesky(prec)
    mean = np.linalg.solve(prec, lin)
    mu_new, sig_new = mean + np.linalg.solve(L.T, rng.standard_normal(2))

    def excess(sig):
        return _log_sigma_prior(sig, prior) + 0.5 * sig**2 / tau2

    if np.log(rng.random()) >= excess(sig_new) - excess(params.sigma):
        return h, params
    return mu_new + sig_new * ht, SvParams(mu=float(mu_new), rho=params.rho, sigma=float(abs(sig_new)))


def simulate_h(T: int, params: SvParams, rng: np.random.Generator) -> np.ndarray:
    """Stationary AR(1) path of length ``T``."""
    h = np.empty(T)
    sd0 = params.sigma / np.sqrt(1.0 - params.rho**2) if abs(params.rho) < 1 else 0.0
    h[0] = params.mu + sd0 * rng.standard_normal()
    v = rng.standard_normal(T)
    for t in range(1, T):
        h[t] = params.mu + params.rho * (h[t - 1] - params.mu) + params.sigma * v[t]
    return h
