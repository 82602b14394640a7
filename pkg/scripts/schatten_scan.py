"""Relative change of sum s_i^p for the discretized Cauchy operator across grid pairs and weights.

Usage: python scripts/schatten_scan.py [--grids 32 48 64] [--weights -2 -3] [--box 2 3]
"""
import argparse

from ncindex.conformal_lefschetz import TestFunction, schatten_decay_check, schatten_refinement_ratios

PS = (2.0, 2.5, 3.0, 4.0)


def main() -> None:
    ap = argparse.ArgumentParser()
    ap.add_argument("--grids", type=int, nargs="+", default=[32, 48, 64])
    ap.add_argument("--weights", type=float, nargs="+", default=[-2.0])
    ap.add_argument("--box", type=float, nargs="+", default=[2.0])
    ap.add_argument("--alpha-g", type=float, default=1.0, help="Gaussian exponent of the test function")
    args = ap.parse_args()
    a = TestFunction.gaussian(args.alpha_g)
    print("weight  box  grids    " + "  ".join(f"p={p:<4g}" for p in PS))
    for w in args.weights:
        for box in args.box:
            reports = schatten_decay_check(None, a, w, grids=tuple(args.grids), ps=PS, box=box)
            for lo, hi in zip(reports, reports[1:]):
                r = schatten_refinement_ratios([lo, hi])
                cols = "  ".join(f"{100 * r[p]:+6.2f}%" for p in PS)
                print(f"{w:6g} {box:4g}  {lo.grid}->{hi.grid}  {cols}", flush=True)


if __name__ == "__main__":
    main()
