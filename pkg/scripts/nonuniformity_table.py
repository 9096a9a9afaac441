"""Fitted ``A_0(eps)`` at ``C = 0`` for the naive affine chart of ``eps**2 / x``.

The growth ``A_0(eps) ~ 1/eps`` is what the power substitution removes; the
table lists ``A_0``, ``eps * A_0`` and the derivative order used per ``eps``.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from fractions import Fraction

from mildkit import parametrize as pz
from mildkit.mildness import GridSpec


@dataclass(frozen=True)
class Config:
    exponents: tuple = tuple(range(2, 21, 2))
    n_max: int | None = None
    grid_points: int = 512


def run(cfg: Config) -> pz.ProbeReport:
    eps = [Fraction(1, 2 ** k) for k in cfg.exponents]
    rep = pz.nonuniformity_probe(eps, cfg.n_max, GridSpec(points=cfg.grid_points))
    print(f"{'eps':>10}  {'order':>5}  {'A0':>14}  {'eps*A0':>8}  A0 >= 1/(2 eps)")
    for r in rep.rows:
        n = cfg.n_max if cfg.n_max is not None else pz.probe_order(r.epsilon)
        print(f"{str(r.epsilon):>10}  {n:>5}  {float(r.A0):14.6g}  {float(r.A0 * r.epsilon):8.4f}  {r.holds}")
    print(f"monotone in 1/eps: {rep.monotone}")
    return rep


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--max-exponent", type=int, default=20)
    ap.add_argument("--step", type=int, default=2)
    ap.add_argument("--nmax", type=int, default=None, help="fixed order for every eps")
    ap.add_argument("--grid-points", type=int, default=512)
    a = ap.parse_args()
    run(Config(tuple(range(2, a.max_exponent + 1, a.step)), a.nmax, a.grid_points))


if __name__ == "__main__":
    main()
