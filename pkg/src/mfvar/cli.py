"""Command-line frontend.

::

    mfvar ingest         --config run.toml [--out DIR]
    mfvar estimate       --config run.toml [--out DIR] [--jobs N] [--seed N]
    mfvar diagnostics    --config run.toml [--out DIR]
    mfvar irf            --config run.toml [--out DIR]
    mfvar counterfactual --config run.toml [--out DIR]
    mfvar simulate       --spec dgp.toml --out DIR [--seed N]

Exit status is 0 on success, 1 on any error and 2 when the convergence
diagnostics flag a monitored scalar.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .calendar import MixedPanel, write_panel_csv
from .config import RunConfig, load_config
from .dgp import load_spec, simulate, write_simulation
from .diagnostics import Diagnostics, chain_diagnostics
from .plotting import plot_counterfactual, plot_irf
from .priors import scale_estimates
from .sampler import Chain, SamplerError, run_chain
from .statespace import build_observation_map
from .store import DrawStore, load_store, save_store
from .structural import (
    ScenarioSpec,
    counterfactual,
    identify_all,
    irf,
    summarize_counterfactual,
    summarize_irf,
)

log = logging.getLogger("mfvar")

EXIT_OK, EXIT_ERROR, EXIT_DIAGNOSTICS = 0, 1, 2


class CliError(ValueError):
    pass


def _qlabel(q: float) -> str:
    return f"q{round(q * 100):02d}"


def _num(v: float) -> str:
    return repr(float(v))


def _record_output(out: Path, path: Path, config_hash: str) -> None:
    """Register an output file and its config hash in ``outputs.json``."""
    index = out / "outputs.json"
    doc = json.loads(index.read_text()) if index.exists() else {}
    doc[path.name] = {
        "config_hash": config_hash,
        "sha256": hashlib.sha256(path.read_bytes()).hexdigest(),
    }
    index.write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _config(args) -> RunConfig:
    if args.config is None:
        raise CliError("--config is required for this command")
    return load_config(args.config, output=args.out, seed=getattr(args, "seed", None))


def _open_store(cfg: RunConfig, panel: MixedPanel) -> DrawStore:
    return load_store(cfg.output / "draws", expected_hash=cfg.estimation_hash(panel))


def _shock_index(panel: MixedPanel, name: str | None) -> int:
    if name is None:
        return panel.policy_index
    if name not in panel.names:
        raise CliError(f"shock variable {name!r} is not in the panel {panel.names}")
    return panel.names.index(name)


def _impact_week(cfg: RunConfig, panel: MixedPanel) -> int | None:
    return None if cfg.impact == "average" else panel.index_of(cfg.impact)


# --- commands ----------------------------------------------------------------


def cmd_ingest(args) -> int:
    cfg = _config(args)
    panel = cfg.load_panel()
    cfg.output.mkdir(parents=True, exist_ok=True)
    path = cfg.output / "panel.csv"
    write_panel_csv(panel, path)
    print(f"wrote {path} ({panel.T} weeks x {panel.M} variables, {panel.n_monthly} monthly)")
    return EXIT_OK


def estimate_chains(cfg: RunConfig, panel: MixedPanel, jobs: int = 1) -> list[Chain]:
    """Run ``cfg.chains`` independent chains; chain ``c`` is seeded by ``[seed, c]``."""
    priors = cfg.priors()
    if priors.minnesota.scale_estimates is None:
        priors = priors.with_scales(scale_estimates(panel))
    chain_cfg = cfg.chain_config()
    obs = build_observation_map(panel, chain_cfg.P)

    def one(c: int) -> Chain:
        rng = np.random.default_rng([cfg.seed, c])
        log.info("chain %d: %d burn-in + %d draws", c, chain_cfg.n_burn, chain_cfg.n_draws)
        return run_chain(panel.values, obs, priors, chain_cfg, rng, names=panel.names)

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        return list(pool.map(one, range(cfg.chains)))


def _report(diag: Diagnostics, path: Path) -> int:
    diag.write_csv(path)
    worst = max(diag.rows, key=lambda r: r.rhat)
    low = min(diag.rows, key=lambda r: r.ess)
    print(f"wrote {path}: max R-hat {worst.rhat:.4f} ({worst.name}), min ESS {low.ess:.1f} ({low.name})")
    if not diag.ok:
        names = ", ".join(r.name for r in diag.failed[:5])
        more = "" if len(diag.failed) <= 5 else f" and {len(diag.failed) - 5} more"
        print(f"diagnostics: R-hat above {diag.rhat_threshold} for {names}{more}", file=sys.stderr)
        return EXIT_DIAGNOSTICS
    return EXIT_OK


def cmd_estimate(args) -> int:
    cfg = _config(args)
    panel = cfg.load_panel()
    chains = estimate_chains(cfg, panel, args.jobs)
    root = cfg.output / "draws"
    save_store(root, chains, cfg.estimation_hash(panel), panel.stamps, panel.n_monthly, cfg.seed)
    print(f"wrote {cfg.chains} chain(s) x {cfg.draws} draws to {root}")
    return _report(chain_diagnostics(chains, cfg.rhat_threshold), cfg.output / "diagnostics.csv")


def cmd_diagnostics(args) -> int:
    cfg = _config(args)
    store = _open_store(cfg, cfg.load_panel())
    return _report(chain_diagnostics(store.chains, cfg.rhat_threshold), cfg.output / "diagnostics.csv")


def compute_irf(cfg: RunConfig, panel: MixedPanel, store: DrawStore):
    shock = _shock_index(panel, cfg.shock)
    idents, _ = identify_all(store.pooled(), _impact_week(cfg, panel))
    responses = np.array([irf(d, shock, cfg.horizons) for d in idents])
    result = summarize_irf(responses, shock, cfg.quantiles)
    if shock >= panel.n_monthly and np.any(responses[:, 0, : panel.n_monthly] != 0.0):
        raise CliError("monthly variables respond on impact to a weekly shock; variable order is wrong")
    return result


def cmd_irf(args) -> int:
    cfg = _config(args)
    panel = cfg.load_panel()
    store = _open_store(cfg, panel)
    result = compute_irf(cfg, panel, store)
    path = cfg.output / "irf.csv"
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["horizon", "variable", *(_qlabel(q) for q in result.levels)])
        for h in range(cfg.horizons):
            for i, name in enumerate(panel.names):
                w.writerow([h, name, *(_num(v) for v in result.quantiles[:, h, i])])
    svg = plot_irf(result, panel.names, cfg.output / "irf.svg", panel.names[result.shock_index])
    for p in (path, svg):
        _record_output(cfg.output, p, store.config_hash)
    print(f"wrote {path} and {svg} ({result.responses.shape[0]} draws)")
    return EXIT_OK


def compute_counterfactual(cfg: RunConfig, panel: MixedPanel, store: DrawStore):
    names = [panel.names[panel.policy_index]] if cfg.scenario_shocks is None else cfg.scenario_shocks
    idx = tuple(_shock_index(panel, n) for n in names)
    scenario = ScenarioSpec(idx, cfg.scenario_start, cfg.scenario_end)
    start, end = scenario.window(panel.stamps, store.P)
    idents, _ = identify_all(store.pooled(), _impact_week(cfg, panel))
    actual = np.array([d.y for d in idents])
    cf = np.array([counterfactual(d, idx, start, end) for d in idents])
    return summarize_counterfactual(actual, cf, cfg.quantiles), start


def cmd_counterfactual(args) -> int:
    cfg = _config(args)
    panel = cfg.load_panel()
    store = _open_store(cfg, panel)
    bands, start = compute_counterfactual(cfg, panel, store)
    first = max(0, start - cfg.context_weeks)
    rows = range(first, panel.T)
    path = cfg.output / "counterfactual.csv"
    series = {"actual": bands.actual, "cf": bands.counterfactual, "diff": bands.difference}
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["year", "week", "variable", "series", *(_qlabel(q) for q in bands.levels)])
        for t in rows:
            stamp = panel.stamps[t]
            for i, name in enumerate(panel.names):
                for label, arr in series.items():
                    w.writerow([stamp.year, stamp.week, name, label, *(_num(v) for v in arr[:, t, i])])
    sub = type(bands)(
        bands.actual[:, first:], bands.counterfactual[:, first:], bands.difference[:, first:], bands.levels
    )
    svg = plot_counterfactual(
        sub, panel.stamps[first:], panel.names, cfg.output / "counterfactual.svg", start - first
    )
    for p in (path, svg):
        _record_output(cfg.output, p, store.config_hash)
    print(f"wrote {path} and {svg} ({len(rows)} weeks from {panel.stamps[first]})")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.spec is None:
        raise CliError("simulate needs --spec <file>")
    if args.out is None:
        raise CliError("simulate needs --out <dir>")
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    result = simulate(spec)
    write_simulation(result, args.out)
    print(f"wrote {Path(args.out) / 'panel.csv'} and truth.json ({spec.T} weeks, seed {spec.seed})")
    return EXIT_OK


COMMANDS = {
    "ingest": cmd_ingest,
    "estimate": cmd_estimate,
    "irf": cmd_irf,
    "counterfactual": cmd_counterfactual,
    "simulate": cmd_simulate,
    "diagnostics": cmd_diagnostics,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mfvar", description="Mixed-frequency BVAR with common stochastic volatility")
    parser.add_argument("-v", "--verbose", action="store_true", help="log sampler progress")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="run configuration (TOML)")
        p.add_argument("--out", type=Path, help="output directory (overrides the config)")
        p.add_argument("--jobs", type=int, default=1, help="worker threads for chains")
        p.add_argument("--seed", type=int, help="master seed (overrides the config)")
        if name == "simulate":
            p.add_argument("--spec", type=Path, help="DGP specification (TOML)")
    return parser


def _qualified(exc: BaseException) -> str:
    module = type(exc).__module__.rsplit(".", 1)[-1]
    return f"{module}: {type(exc).__name__}: {exc}"


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(name)s: %(message)s")
    if args.jobs < 1:
        print("mfvar: --jobs must be >= 1", file=sys.stderr)
        return EXIT_ERROR
    try:
        return COMMANDS[args.command](args)
    except (ValueError, OSError, SamplerError, KeyError) as exc:
        print(f"mfvar {args.command}: {_qualified(exc)}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
