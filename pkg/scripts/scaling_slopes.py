"""Episode counts of the four estimator families against 1/eps, with log-log slopes."""
import argparse
import csv
import sys

from qpgrad import load_asset_mdp, load_asset_policy
from qpgrad.classical import plan_numerical_gradient, plan_reinforce_episodes
from qpgrad.quantum import (analytical_payoff_amplitudes, loglog_slope, plan_grid,
                            quantum_analytical_gradient_toy)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.4, 0.2, 0.1])
    ap.add_argument("--delta", type=float, default=0.1)
    args = ap.parse_args(argv)
    eps = sorted(args.eps, reverse=True)

    chain = load_asset_mdp("chain2.json")
    tab = load_asset_policy("tabular_softmax.json")
    variant = chain.with_gamma(1 - 1e-5).with_horizon(3)
    longer = load_asset_mdp("chain2_long.json")
    ref = plan_grid(longer, min(eps))
    amps = analytical_payoff_amplitudes(chain, tab)

    counts = {
        "classical-numerical": [plan_numerical_gradient(variant, 2, e, args.delta).episodes
                                for e in eps],
        "classical-analytical": [plan_reinforce_episodes(chain, tab, e, args.delta) for e in eps],
        "quantum-numerical": [plan_grid(longer, e, box_edge=ref.grid.box_edge,
                                        ladder_m=ref.grid.ladder_m).episodes() for e in eps],
        "quantum-analytical": [quantum_analytical_gradient_toy(chain, tab, e, args.delta,
                                                               amplitudes=amps).episodes_used
                               for e in eps],
    }
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["family", *[f"eps={e}" for e in eps], "slope"])
    for fam, c in counts.items():
        w.writerow([fam, *c, f"{loglog_slope(eps, c):.3f}"])
    return 0


if __name__ == "__main__":
    sys.exit(main())
