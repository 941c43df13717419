"""EP and OMP on i.i.d. versus correlated sensing matrices.

For each matrix family and alpha, reports the EP success rate (MSE below a
threshold) and the median OMP MSE over the same instances.

    python scripts/correlated_comparison.py --n 50 --rho 0.5 --k -1 1 5 --trials 20
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field

import numpy as np

from epsense.cli import COMPARE_FIELDS, compare_trial
from epsense.ep import EPConfig
from epsense.io import write_csv
from epsense.phase import derive_seed


@dataclass
class Config:
    n: int = 50
    rho: float = 0.5
    k: list[int] = field(default_factory=lambda: [-1, 1, 5])  # -1 means i.i.d.
    alpha: list[float] = field(default_factory=lambda: [0.5, 0.6, 0.7, 0.8, 0.9, 1.0])
    trials: int = 20
    success_mse: float = 1e-8
    seed: int = 0
    out: str = "correlated.csv"


def main(cfg: Config) -> None:
    config = EPConfig()
    rows = []
    for k in cfg.k:
        label = "iid" if k < 0 else f"k={k}"
        line = []
        for i, alpha in enumerate(cfg.alpha):
            chunk = [r for t in range(cfg.trials)
                     for r in compare_trial((alpha, cfg.n, cfg.rho, k, t,
                                             derive_seed(cfg.seed, i, t), 1.0, config, False))]
            rows.extend(chunk)
            ep = [r["mse"] for r in chunk if r["solver"] == "ep-finite-t"]
            omp = [r["mse"] for r in chunk if r["solver"] == "omp"]
            rate = np.mean([e < cfg.success_mse for e in ep])
            line.append(f"a={alpha:.2f}: EP {rate:4.2f} OMP {np.nanmedian(omp):.1e}")
        print(f"{label:>5}  " + " | ".join(line))
    write_csv(cfg.out, rows, COMPARE_FIELDS)


def parse() -> Config:
    d = Config()
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--rho", type=float, default=d.rho)
    p.add_argument("--k", type=int, nargs="+", default=d.k)
    p.add_argument("--alpha", type=float, nargs="+", default=d.alpha)
    p.add_argument("--trials", type=int, default=d.trials)
    p.add_argument("--success-mse", type=float, default=d.success_mse)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default=d.out)
    return Config(**vars(p.parse_args()))


if __name__ == "__main__":
    main(parse())
