"""On-disk draw store: one ``.npy`` file per array per chain plus a JSON manifest.

The manifest records the estimation hash and a SHA-256 of every array file,
so a store produced under a different configuration, or damaged on disk, is
refused on load.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from .calendar import WeekStamp, _parse_stamp
from .sampler import Chain

ARRAYS = ("A", "Sigma", "h", "mu_h", "rho_h", "sigma_h", "y")
MANIFEST = "manifest.json"


class StoreError(ValueError):
    pass


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


@dataclass
class DrawStore:
    root: Path
    chains: list[Chain]
    config_hash: str
    stamps: list[WeekStamp]
    n_monthly: int
    seed: int

    @property
    def names(self) -> list[str]:
        return self.chains[0].names

    @property
    def P(self) -> int:
        return self.chains[0].P

    def pooled(self) -> Chain:
        return Chain.concatenate(self.chains)


def save_store(
    root: str | Path,
    chains: Sequence[Chain],
    config_hash: str,
    stamps: Sequence[WeekStamp],
    n_monthly: int,
    seed: int,
) -> Path:
    root = Path(root)
    root.mkdir(parents=True, exist_ok=True)
    files = {}
    for c, chain in enumerate(chains):
        sub = root / f"chain_{c:02d}"
        sub.mkdir(exist_ok=True)
        for key in ARRAYS:
            path = sub / f"{key}.npy"
            np.save(path, np.ascontiguousarray(getattr(chain, key)), allow_pickle=False)
            files[path.relative_to(root).as_posix()] = _sha256(path)
    manifest = {
        "config_hash": config_hash,
        "seed": int(seed),
        "n_chains": len(chains),
        "P": int(chains[0].P),
        "n_monthly": int(n_monthly),
        "names": list(chains[0].names),
        "stamps": [str(s) for s in stamps],
        "files": files,
    }
    (root / MANIFEST).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return root / MANIFEST


def load_store(root: str | Path, expected_hash: str | None = None) -> DrawStore:
    root = Path(root)
    mpath = root / MANIFEST
    if not mpath.exists():
        raise StoreError(f"no draw store at {root} (missing {MANIFEST}); run 'mfvar estimate' first")
    manifest = json.loads(mpath.read_text())
    if expected_hash is not None and manifest["config_hash"] != expected_hash:
        raise StoreError(
            f"draw store at {root} was produced by a different configuration "
            f"(hash {manifest['config_hash'][:12]} != {expected_hash[:12]})"
        )
    for rel, digest in manifest["files"].items():
        path = root / rel
        if not path.exists():
            raise StoreError(f"draw store file missing: {path}")
        if _sha256(path) != digest:
            raise StoreError(f"checksum mismatch for {path}")
    chains = []
    for c in range(manifest["n_chains"]):
        sub = root / f"chain_{c:02d}"
        arrays = {k: np.load(sub / f"{k}.npy", allow_pickle=False) for k in ARRAYS}
        chains.append(Chain(**arrays, P=manifest["P"], names=list(manifest["names"])))
    return DrawStore(
        root=root,
        chains=chains,
        config_hash=manifest["config_hash"],
        stamps=[_parse_stamp(s) for s in manifest["stamps"]],
        n_monthly=manifest["n_monthly"],
        seed=manifest["seed"],
    )
