#!/usr/bin/env python3
"""Quantify the memory-to-friction limit on first and second moments.

Rescales the memory (lam/eps, A/eps^2), simulates the interacting ensemble
for each eps, and tabulates the worst (q, p) moment error against the exact
underdamped Gaussian law with gamma = lam^T A^-1 lam.

Usage:
    python scripts/whitenoise_study.py [--epsilons 0.5,0.25,0.125]
        [--n 10000] [--t-final 2.0] [--seed 2024]
"""

import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1] / "src"))

from glekit import limits
from glekit.model import CurieWeiss, Kind, MemorySpec, ModelSpec, Quadratic, validate


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--epsilons", default="0.5,0.25,0.125")
    ap.add_argument("--n", type=int, default=10_000)
    ap.add_argument("--t-final", type=float, default=2.0)
    ap.add_argument("--seed", type=int, default=2024)
    args = ap.parse_args()

    model = validate(
        ModelSpec(
            d=1,
            beta=1.0,
            potential=Quadratic(1.0),
            interaction=CurieWeiss(1.0),
            memory=MemorySpec.diagonal([1.0], [1.0]),
            kind=Kind.GENERALIZED,
        )
    )
    study = limits.ScalingStudy(
        base_model=model,
        epsilons=tuple(float(e) for e in args.epsilons.split(",")),
        N=args.n,
        T=args.t_final,
        seed=args.seed,
    )
    result = limits.run_study(study)
    print(f"effective friction gamma = {result.gamma}")
    print("epsilon    error        se           steps    wallclock_s")
    for r in result.rows:
        print(f"{r.epsilon:<10g} {r.error:<12.6f} {r.se:<12.6f} {r.steps:<8d} {r.wallclock_s:.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
