"""Success map of EP over a (rho, alpha) grid.

Writes every trial to a CSV and prints the fraction of trials per cell
with MSE below a threshold, next to the L0 and L1 lines for reference.

    python scripts/phase_diagram.py --n 100 --step 0.1 --trials 5 --out phase.csv
"""

from __future__ import annotations

import argparse
from collections import defaultdict
from dataclasses import dataclass

import numpy as np

from epsense.ep import EPConfig
from epsense.io import write_csv
from epsense.phase import PHASE_FIELDS, PhaseGridSpec, l0_line, l1_line, phase_sweep


@dataclass
class Config:
    n: int = 100
    step: float = 0.1
    trials: int = 3
    mode: str = "finite-t"
    correlated_k: int | None = None
    success_mse: float = 1e-8
    seed: int = 0
    jobs: int = 1
    out: str = "phase.csv"


def grid(step: float) -> list[float]:
    return [round(v, 10) for v in np.arange(step, 1.0 + 1e-9, step)]


def main(cfg: Config) -> None:
    spec = PhaseGridSpec(cfg.n, grid(cfg.step), grid(cfg.step), cfg.trials, cfg.seed,
                         cfg.mode, cfg.correlated_k)
    rows = phase_sweep(spec, config=EPConfig(), jobs=cfg.jobs)
    write_csv(cfg.out, rows, PHASE_FIELDS)

    hits = defaultdict(list)
    for p in rows:
        hits[p.rho, p.alpha].append(bool(p.mse < cfg.success_mse))
    print("rho    L0     L1     success fraction per alpha " + " ".join(f"{a:5.2f}" for a in spec.alpha_grid))
    for rho in spec.rho_grid:
        cells = " ".join(f"{np.mean(hits[rho, a]):5.2f}" for a in spec.alpha_grid)
        print(f"{rho:4.2f}  {l0_line(rho):5.3f}  {l1_line(rho):5.3f}  {' ' * 26}{cells}")
    print(f"wrote {len(rows)} trials to {cfg.out}")


def parse() -> Config:
    d = Config()
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--step", type=float, default=d.step)
    p.add_argument("--trials", type=int, default=d.trials)
    p.add_argument("--mode", choices=["finite-t", "zero-t"], default=d.mode)
    p.add_argument("--correlated-k", type=int, default=d.correlated_k)
    p.add_argument("--success-mse", type=float, default=d.success_mse)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--jobs", type=int, default=d.jobs)
    p.add_argument("--out", default=d.out)
    return Config(**vars(p.parse_args()))


if __name__ == "__main__":
    main(parse())
