"""Derived versus fitted constants for ``P_alpha``.

For each alpha: the derived certificate and its smallest relative margin up
to ``n_max``, then the fitted ``A`` for several assumed ``C``.  Fitted values
below the derived ``A`` show how much slack the closed-form constant carries.
"""

from __future__ import annotations

import argparse
from dataclasses import dataclass
from fractions import Fraction

from mildkit import mildness as ml
from mildkit.ratcalc import p_alpha


@dataclass(frozen=True)
class Config:
    alphas: tuple = (Fraction(1, 2), Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3))
    n_max: int = 20
    grid_points: int = 512


def run(cfg: Config) -> list[dict]:
    grid = ml.GridSpec(points=cfg.grid_points)
    out = []
    for alpha in cfg.alphas:
        f = p_alpha(alpha)
        c = ml.p_alpha_cert(alpha)
        rep = ml.verify_cert(f, c, cfg.n_max, grid)
        rel = min(float(r.margin / r.bound) for r in rep.records)
        fits = {C: float(ml.fit_constants(f, C, cfg.n_max, grid).A_fitted)
                for C in (1 / alpha, Fraction(1) + 1 / alpha)}
        row = {"alpha": str(alpha), "A": float(c.A), "C": str(c.C), "pass": rep.passed,
               "min_rel_margin": rel, **{f"A_fit(C={C})": v for C, v in fits.items()}}
        out.append(row)
        fit_txt = "  ".join(f"A_fit(C={C})={v:.4g}" for C, v in fits.items())
        print(f"alpha={str(alpha):>4}  A={float(c.A):8.4f}  C={str(c.C):>4}  pass={rep.passed}  "
              f"min rel margin={rel:.4f}  {fit_txt}")
    return out


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--alpha", type=Fraction, action="append")
    ap.add_argument("--nmax", type=int, default=20)
    ap.add_argument("--grid-points", type=int, default=512)
    a = ap.parse_args()
    cfg = Config(tuple(a.alpha) if a.alpha else Config.alphas, a.nmax, a.grid_points)
    run(cfg)


if __name__ == "__main__":
    main()
