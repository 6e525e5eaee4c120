"""Phase-grid gradient readout on a one-parameter raw-PQC policy."""
import argparse
import sys

import numpy as np

from qpgrad import load_asset_mdp, load_asset_policy
from qpgrad.mdp import exact_policy_gradient
from qpgrad.quantum import jordan_gradient, jordan_mdp_distribution, plan_grid


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, default=0.1)
    ap.add_argument("--runs", type=int, default=30)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    mdp = load_asset_mdp("chain2_long.json")
    pol = load_asset_policy("raw_pqc_1param.json")
    plan = plan_grid(mdp, args.eps)
    dist = jordan_mdp_distribution(mdp, pol, plan)
    exact = exact_policy_gradient(mdp, pol)
    tol = max(args.eps, plan.resolution)
    seeds = np.random.SeedSequence(args.seed).spawn(args.runs)
    reports = [jordan_gradient(mdp, pol, eps=args.eps, seed=np.random.default_rng(s),
                               exact=exact, distribution=dist) for s in seeds]
    hits = sum(r.realized_linf_error <= tol for r in reports)

    print(f"grid points        {plan.grid.N}")
    print(f"box edge           {plan.grid.box_edge:.4g}")
    print(f"ladder half-width  {plan.grid.ladder_m}")
    print(f"resolution         {plan.resolution:.4g}")
    print(f"exact gradient     {exact[0]:.6f}")
    print(f"most probable      {dist.most_probable()[0]:.6f}")
    print(f"P(|err| <= {tol:.3g})  {dist.success_probability(exact, tol):.4f}")
    print(f"seeded readouts    {hits}/{args.runs} within tolerance")
    print(f"modelled episodes  {plan.episodes()}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
