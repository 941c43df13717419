"""EP transition located by bisection, compared with the L0 and L1 lines.

    python scripts/transition_line.py --n 200 --rho 0.2 0.4 0.6 --repeats 3 --out line.csv
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass, field

import numpy as np

from epsense.io import write_csv
from epsense.phase import BisectionSpec, bisect_transition, derive_seed, l0_line, l1_line


@dataclass
class Config:
    n: int = 200
    rho: list[float] = field(default_factory=lambda: [0.2, 0.4, 0.6])
    repeats: int = 3
    dalpha_min: float = 0.005
    delta: float = 1e-5
    probes: int = 1
    mode: str = "finite-t"
    seed: int = 0
    out: str = "line.csv"


def main(cfg: Config) -> None:
    rows = []
    for i, rho in enumerate(cfg.rho):
        lo, hi = l0_line(rho), l1_line(rho)
        found = []
        for r in range(cfg.repeats):
            spec = BisectionSpec(cfg.n, rho, delta=cfg.delta, dalpha_min=cfg.dalpha_min,
                                 probes=cfg.probes, seed=derive_seed(cfg.seed, i, r))
            a = bisect_transition(spec, solver=cfg.mode)
            found.append(a)
            rows.append({"rho": rho, "repeat": r, "alpha_ep": a, "alpha_l0": lo, "alpha_l1": hi})
        sd = np.std(found, ddof=1) if len(found) > 1 else float("nan")
        print(f"rho={rho:.3f}  L0={lo:.4f}  EP={np.mean(found):.4f} (sd {sd:.4f})  L1={hi:.4f}")
    write_csv(cfg.out, rows, ["rho", "repeat", "alpha_ep", "alpha_l0", "alpha_l1"])


def parse() -> Config:
    d = Config()
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=d.n)
    p.add_argument("--rho", type=float, nargs="+", default=d.rho)
    p.add_argument("--repeats", type=int, default=d.repeats)
    p.add_argument("--dalpha-min", type=float, default=d.dalpha_min)
    p.add_argument("--delta", type=float, default=d.delta)
    p.add_argument("--probes", type=int, default=d.probes)
    p.add_argument("--mode", choices=["finite-t", "zero-t"], default=d.mode)
    p.add_argument("--seed", type=int, default=d.seed)
    p.add_argument("--out", default=d.out)
    return Config(**vars(p.parse_args()))


if __name__ == "__main__":
    main(parse())
