"""Convergence diagnostics: effective sample size and split-R-hat."""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


def _as_chains(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("expected draws shaped (n,) or (chains, n)")
    return x


def _autocov(x: np.ndarray) -> np.ndarray:
    """Biased autocovariance of each row, via FFT."""
    n = x.shape[-1]
    d = x - x.mean(axis=-1, keepdims=True)
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.rfft(d, size, axis=-1)
    ac = np.fft.irfft(f * np.conj(f), size, axis=-1)[..., :n]
    return ac / n


def effective_sample_size(draws) -> float:
    """Multi-chain ESS with Geyer's initial monotone sequence.

    A chain without any variation has an ESS of 1.
    """
    x = _as_chains(draws)
    m, n = x.shape
    if n < 2:
        return float(m * n)
    acov = _autocov(x)
    chain_var = acov[:, 0] * n / (n - 1)
    W = chain_var.mean()
    var_plus = W * (n - 1) / n
    if m > 1:
        var_plus += x.mean(axis=1).var(ddof=1)
    if not var_plus > 0:
        return 1.0
    rho = 1.0 - (W - acov.mean(axis=0)) / var_plus
    rho[0] = 1.0
    # sum consecutive pairs while positive, enforcing monotonicity
    total = 0.0
    prev = np.inf
    t = 0
    while t + 1 < n:
        pair = rho[t] + rho[t + 1]
        if pair < 0:
            break
        pair = min(pair, prev)
        total += pair
        prev = pair
        t += 2
    tau = -1.0 + 2.0 * total
    return float(m * n / max(tau, 1.0 / np.log10(max(m * n, 10))))


def split_rhat(draws) -> float:
    """Split-R-hat (each chain halved).

    Chains that are constant and identical give 1; constant but different
    chains give ``inf``.
    """
    x = _as_chains(draws)
    n = x.shape[1] // 2
    if n < 1:
        raise ValueError("need at least 2 draws per chain")
    halves = np.vstack([x[:, :n], x[:, -n:]])
    means = halves.mean(axis=1)
    W = halves.var(axis=1, ddof=1).mean() if n > 1 else 0.0
    B = n * means.var(ddof=1)
    if W == 0:
        return 1.0 if B == 0 else float("inf")
    var_plus = (n - 1) / n * W + B / n
    return float(np.sqrt(var_plus / W))


@dataclass(frozen=True)
class ParameterDiagnostic:
    name: str
    ess: float
    rhat: float
    flagged: bool


@dataclass
class Diagnostics:
    rows: list[ParameterDiagnostic]
    rhat_threshold: float

    @property
    def failed(self) -> list[ParameterDiagnostic]:
        return [r for r in self.rows if r.flagged]

    @property
    def ok(self) -> bool:
        return not self.failed

    def write_csv(self, path: str | Path) -> None:
        with Path(path).open("w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["parameter", "ess", "rhat", "flagged"])
            for r in self.rows:
                w.writerow([r.name, f"{r.ess:.6g}", f"{r.rhat:.6g}", int(r.flagged)])


def monitored_scalars(chain, names: Sequence[str] | None = None) -> dict[str, np.ndarray]:
    """Scalar functionals tracked for convergence.

    The volatility level and the scale of ``Sigma`` trade off against each
    other, so ``Sigma`` is monitored through its diagonal after folding in
    ``exp(mean h)``.
    """
    M = chain.A.shape[1]
    names = list(names or chain.names or [f"y{i + 1}" for i in range(M)])
    out = {
        "rho_h": chain.rho_h,
        "sigma_h": chain.sigma_h,
    }
    scale = np.exp(chain.h.mean(axis=1))
    for i in range(M):
        out[f"log_sigma[{names[i]}]"] = np.log(scale * chain.Sigma[:, i, i])
    P = chain.A.shape[2] // M
    for lag in range(P):
        for i in range(M):
            for j in range(M):
                out[f"A{lag + 1}[{names[i]},{names[j]}]"] = chain.A[:, i, lag * M + j]
    return out


def chain_diagnostics(chains: Sequence, rhat_threshold: float = 1.1) -> Diagnostics:
    """ESS and split-R-hat for every monitored scalar across chains."""
    per_chain = [monitored_scalars(c) for c in chains]
    if any(len(c) < 2 for c in chains):
        raise ValueError("diagnostics need at least 2 retained draws per chain")
    n = min(len(c) for c in chains)
    rows = []
    for key in per_chain[0]:
        x = np.vstack([pc[key][:n] for pc in per_chain])
        ess = effective_sample_size(x)
        rhat = split_rhat(x)
        rows.append(ParameterDiagnostic(key, ess, rhat, bool(rhat > rhat_threshold)))
    return Diagnostics(rows=rows, rhat_threshold=rhat_threshold)
