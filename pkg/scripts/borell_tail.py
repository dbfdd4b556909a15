"""Empirical tail of the shear supremum against the Gaussian concentration bound."""

import argparse
import json

from frontspeed.gaussian_shear import CovarianceModel, borell_check


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--kind", default="ornstein_uhlenbeck")
    ap.add_argument("--corr-len", type=float, default=1.0)
    ap.add_argument("--n-samples", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=9)
    ap.add_argument("--lambdas", type=float, nargs="+", default=[0.5, 1.0, 1.5, 2.0, 2.5, 3.0])
    ap.add_argument("--out", default="borell.json")
    args = ap.parse_args()

    rep = borell_check(CovarianceModel(args.kind, 1.0, args.corr_len, 1), args.lambdas,
                       args.n_samples, args.seed)
    for lam, p, bnd, se in zip(rep.lambda_grid, rep.empirical_prob, rep.borell_bound, rep.std_err):
        print(f"lambda={lam:<4g} P={p:.5f} +- {se:.5f}  bound={bnd:.5f}")
    with open(args.out, "w") as fh:
        json.dump(rep.to_dict(), fh, indent=2)


if __name__ == "__main__":
    main()
