"""Mean delay against the number of meters at gamma = 2000, for two noise levels."""
import argparse
from pathlib import Path

from pqmon.experiments import CURVE_COLUMNS, meters_scaling_curve
from pqmon.io import results_csv, write_atomic
from pqmon.simnet import DetectorSpec


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--Ls", default="1,2,3,4,6,8")
    ap.add_argument("--sigma-nu2s", default="0.5,1.0")
    ap.add_argument("--specs", default="cgllr,elts,lts,ugllr")
    ap.add_argument("--gamma", type=float, default=2000.0)
    ap.add_argument("--trials", type=int, default=500)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="results/meters_scaling.csv")
    args = ap.parse_args()

    rows = meters_scaling_curve([DetectorSpec.from_name(n) for n in args.specs.split(",")],
                                [int(x) for x in args.Ls.split(",")],
                                [float(x) for x in args.sigma_nu2s.split(",")],
                                args.gamma, args.trials, args.seed)
    Path(args.out).parent.mkdir(parents=True, exist_ok=True)
    write_atomic(args.out, results_csv(rows, CURVE_COLUMNS + ("sigma_nu2",)))
    for r in rows:
        print(f"{r['spec']:6s} L={r['L']:2d} sigma_nu2={r['sigma_nu2']:.2f} delay={r['mean_delay']:7.2f}")


if __name__ == "__main__":
    main()
