"""Run configuration (TOML) and its reproducibility hash.

Every constant the model needs but the data cannot supply lives here with
its default::

    output = "out"

    [data]
    manifest = "panel.toml"      # or: panel = "panel.csv" plus n_monthly = 3

    [model]
    lags = 4

    [prior.minnesota]            # lambda_overall = 0.2, lambda_cross = 0.5,
                                 # lambda_lag_decay = 1, own_lag_mean = 0,
                                 # form = "natural_conjugate"
    [prior.volatility]           # rho_a = 25, rho_b = 5, mu_mean = 0, mu_var = 10,
                                 # sigma2_shape = 0.5, sigma2_rate = 0.5,
                                 # sigma2_family = "gamma", iw_df = M + 2, iw_scale = 0.1

    [chain]                      # chains = 2, draws = 1000, burn = 500, thin = 1,
                                 # seed = 0, volatility = "csv"
    [diagnostics]                # rhat_threshold = 1.1

    [irf]                        # shock = <policy variable>, horizons = 48,
                                 # quantiles = [0.05, 0.5, 0.95], impact = "average"
    [scenario]                   # shocks = [<policy variable>], start = [2020, 9],
                                 # end = <sample end>, context_weeks = 0
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .calendar import (
    MixedPanel,
    WeekStamp,
    _load_toml,
    _parse_stamp,
    format_panel_csv,
    ingest_manifest,
    read_panel_csv,
)
from .priors import CsvPrior, MinnesotaHyper, Priors
from .sampler import ChainConfig


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    output: Path
    manifest: Path | None = None
    panel_csv: Path | None = None
    n_monthly: int | None = None
    lags: int = 4
    minnesota: dict = field(default_factory=dict)
    volatility_prior: dict = field(default_factory=dict)
    chains: int = 2
    draws: int = 1000
    burn: int = 500
    thin: int = 1
    seed: int = 0
    volatility: str = "csv"
    rhat_threshold: float = 1.1
    shock: str | None = None
    horizons: int = 48
    quantiles: tuple[float, ...] = (0.05, 0.5, 0.95)
    impact: str | WeekStamp = "average"
    scenario_shocks: list[str] | None = None
    scenario_start: WeekStamp = field(default_factory=lambda: WeekStamp(2020, 9))
    scenario_end: WeekStamp | None = None
    context_weeks: int = 0

    def __post_init__(self) -> None:
        if (self.manifest is None) == (self.panel_csv is None):
            raise ConfigError("[data] needs exactly one of 'manifest' or 'panel'")
        if self.panel_csv is not None and self.n_monthly is None:
            raise ConfigError("[data] panel = ... also needs n_monthly")
        for p in (self.manifest, self.panel_csv):
            if p is not None and not Path(p).exists():
                raise ConfigError(f"data file not found: {p}")
        if self.horizons < 1:
            raise ConfigError("irf horizons must be >= 1")
        if self.chains < 1:
            raise ConfigError("need at least one chain")
        if 0.5 not in self.quantiles:
            raise ConfigError("quantiles must include the median 0.5")

    def load_panel(self) -> MixedPanel:
        if self.manifest is not None:
            return ingest_manifest(self.manifest)
        return read_panel_csv(self.panel_csv, self.n_monthly)

    def priors(self) -> Priors:
        mn = dict(self.minnesota)
        if "own_lag_mean" in mn:
            mn["prior_mean_own_first_lag"] = mn.pop("own_lag_mean")
        try:
            return Priors(minnesota=MinnesotaHyper(**mn), csv=CsvPrior(**self.volatility_prior))
        except TypeError as exc:
            raise ConfigError(f"bad prior settings: {exc}") from None

    def chain_config(self) -> ChainConfig:
        return ChainConfig(
            n_draws=self.draws, n_burn=self.burn, thin=self.thin, seed=self.seed, P=self.lags,
            volatility=self.volatility,
        )

    def estimation_hash(self, panel: MixedPanel) -> str:
        """Fingerprint of everything that determines the draw store."""
        payload = {
            "data": hashlib.sha256(format_panel_csv(panel).encode()).hexdigest(),
            "n_monthly": panel.n_monthly,
            "lags": self.lags,
            "minnesota": self.minnesota,
            "volatility_prior": self.volatility_prior,
            "chain": {
                "chains": self.chains, "draws": self.draws, "burn": self.burn, "thin": self.thin,
                "seed": self.seed, "volatility": self.volatility,
            },
        }
        blob = json.dumps(payload, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()


def load_config(path: str | Path, **overrides) -> RunConfig:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    doc = _load_toml(path)
    base = path.parent

    def resolve(p):
        p = Path(p)
        return p if p.is_absolute() else base / p

    data = doc.get("data", {})
    chain = doc.get("chain", {})
    irf = doc.get("irf", {})
    scen = doc.get("scenario", {})
    prior = doc.get("prior", {})
    impact = irf.get("impact", "average")
    kwargs = dict(
        output=resolve(doc.get("output", "out")),
        manifest=resolve(data["manifest"]) if "manifest" in data else None,
        panel_csv=resolve(data["panel"]) if "panel" in data else None,
        n_monthly=data.get("n_monthly"),
        lags=int(doc.get("model", {}).get("lags", 4)),
        minnesota=dict(prior.get("minnesota", {})),
        volatility_prior=dict(prior.get("volatility", {})),
        chains=int(chain.get("chains", 2)),
        draws=int(chain.get("draws", 1000)),
        burn=int(chain.get("burn", 500)),
        thin=int(chain.get("thin", 1)),
        seed=int(chain.get("seed", 0)),
        volatility=chain.get("volatility", "csv"),
        rhat_threshold=float(doc.get("diagnostics", {}).get("rhat_threshold", 1.1)),
        shock=irf.get("shock"),
        horizons=int(irf.get("horizons", 48)),
        quantiles=tuple(float(q) for q in irf.get("quantiles", (0.05, 0.5, 0.95))),
        impact=impact if impact == "average" else _parse_stamp(impact),
        scenario_shocks=scen.get("shocks"),
        scenario_start=_parse_stamp(scen["start"]) if "start" in scen else WeekStamp(2020, 9),
        scenario_end=_parse_stamp(scen["end"]) if "end" in scen else None,
        context_weeks=int(scen.get("context_weeks", 0)),
    )
    kwargs.update({k: v for k, v in overrides.items() if v is not None})
    if "output" in overrides and overrides["output"] is not None:
        kwargs["output"] = Path(overrides["output"])
    return RunConfig(**kwargs)
