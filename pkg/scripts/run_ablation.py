"""Full model vs boundary-only ablation on the synthetic task, several seeds.

    python3 scripts/run_ablation.py --seeds 0 1 2 --out runs/ablation
"""

import argparse

from mpverify.experiments import run_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    ap.add_argument("--out", default="runs/ablation")
    ap.add_argument("--epochs", type=int)
    args = ap.parse_args()

    overrides = {"epochs": args.epochs} if args.epochs else {}
    report = run_comparison(args.seeds, args.out, **overrides)
    print(f"{'seed':>4}  {'arm':<14} {'dev exact':>9} {'dev rouge-l':>11} {'epoch':>5} {'sec':>6}")
    for r in report["rows"]:
        print(f"{r['seed']:>4}  {r['arm']:<14} {r['dev_exact']:>9.3f} {r['dev_rouge_l']:>11.3f} "
              f"{r['best_epoch']:>5} {r['seconds']:>6.0f}")
    mean = report["mean_dev_exact"]
    print(f"mean dev exact: full {mean['full']:.3f}, boundary-only {mean['boundary_only']:.3f}")


if __name__ == "__main__":
    main()
