"""Brute-force reference computations shared by the tests.

Nothing here imports the filtering/sampling code it is used to check.
"""

from __future__ import annotations

import numpy as np
from scipy import stats
from scipy.linalg import block_diag


def panel_loading(A_list, T, init_var=10.0):
    """Linear map D with vec_rows(Y) = D @ w.

    ``w`` stacks the first P weeks (prior N(0, init_var I)) and the
    innovations of weeks P..T-1.
    """
    P = len(A_list)
    M = A_list[0].shape[0]
    n_w = P * M + (T - P) * M
    D = np.zeros((T * M, n_w))
    for t in range(P):
        D[t * M : (t + 1) * M, t * M : (t + 1) * M] = np.eye(M)
    for t in range(P, T):
        rows = slice(t * M, (t + 1) * M)
        for j, A in enumerate(A_list, start=1):
            D[rows] += A @ D[(t - j) * M : (t - j + 1) * M]
        D[rows, P * M + (t - P) * M : P * M + (t - P + 1) * M] += np.eye(M)
    return D


def weight_cov(sigma, h, P, T, init_var=10.0):
    M = sigma.shape[0]
    blocks = [init_var * np.eye(P * M)] + [np.exp(h[t]) * sigma for t in range(P, T)]
    return block_diag(*blocks)


def observation_rows(active, n_monthly):
    """Selection/averaging matrix C with x_active = C @ vec_rows(Y)."""
    T, M = active.shape
    rows, coords = [], []
    for t in range(T):
        for i in range(M):
            if not active[t, i]:
                continue
            r = np.zeros(T * M)
            if i < n_monthly:
                if t < 3:
                    continue
                for lag in range(4):
                    r[(t - lag) * M + i] = 0.25
            else:
                r[t * M + i] = 1.0
            rows.append(r)
            coords.append((t, i))
    return np.array(rows), coords


def dense_posterior(A_list, sigma, h, x, active, n_monthly, init_var=10.0):
    """Exact E[Y | x] and Cov[Y | x] by dense Gaussian conditioning."""
    T, M = active.shape
    P = len(A_list)
    D = panel_loading(A_list, T, init_var)
    W = weight_cov(sigma, h, P, T, init_var)
    SY = D @ W @ D.T
    C, coords = observation_rows(active, n_monthly)
    xv = np.array([x[t, i] for t, i in coords])
    SxY = C @ SY
    Sxx = SxY @ C.T
    gain = np.linalg.solve(Sxx, SxY).T
    mean = gain @ xv
    cov = SY - gain @ SxY
    return mean.reshape(T, M), cov


def dense_loglik(A_list, sigma, h, y, init_var=10.0):
    """Log density of a fully observed panel by direct evaluation."""
    P = len(A_list)
    T, M = y.shape
    ll = stats.multivariate_normal(np.zeros(P * M), init_var * np.eye(P * M)).logpdf(y[:P].ravel())
    for t in range(P, T):
        mean = sum(A @ y[t - j] for j, A in enumerate(A_list, start=1))
        ll += stats.multivariate_normal(mean, np.exp(h[t]) * sigma).logpdf(y[t])
    return ll


def ar1_ess(n, rho):
    return n * (1 - rho) / (1 + rho)


def dense_observed_loglik(A_list, sigma, h, x, active, n_monthly, init_var=10.0):
    """Log density of the active observations under the implied joint Gaussian."""
    T, M = active.shape
    P = len(A_list)
    D = panel_loading(A_list, T, init_var)
    SY = D @ weight_cov(sigma, h, P, T, init_var) @ D.T
    C, coords = observation_rows(active, n_monthly)
    xv = np.array([x[t, i] for t, i in coords])
    return stats.multivariate_normal(np.zeros(len(xv)), C @ SY @ C.T).logpdf(xv)


def random_stable_var(rng, M, P, radius=0.9):
    """Random VAR(P) coefficients (list of M x M) with companion spectral radius ``radius``."""
    A = rng.normal(scale=0.3, size=(M, M * P))
    K = M * P
    F = np.zeros((K, K))
    F[:M] = A
    F[M:, : K - M] = np.eye(K - M)
    r = np.max(np.abs(np.linalg.eigvals(F)))
    # scaling lag j by c^j scales every companion eigenvalue by c
    c = radius / r
    A = np.hstack([A[:, j * M : (j + 1) * M] * c ** (j + 1) for j in range(P)])
    return [A[:, j * M : (j + 1) * M] for j in range(P)]


def random_spd(rng, M, scale=1.0):
    G = rng.normal(size=(M, M))
    return scale * (G @ G.T / M + 0.5 * np.eye(M))


def monthly_mask(T, M, n_monthly, first_week=1):
    """Activity mask: weekly columns always active, monthly columns every fourth week."""
    active = np.ones((T, M), dtype=bool)
    weeks = (np.arange(T) + first_week - 1) % 4 == 3
    active[:, :n_monthly] = weeks[:, None]
    return active
