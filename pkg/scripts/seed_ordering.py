"""Compare fig1 and fig2 stacked ranks across seeds."""
import argparse
from dataclasses import replace

from koopman_pe.evaluation import fig_preset, run_basin_experiment


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seeds", type=int, default=10)
    args = ap.parse_args()
    wins = 0
    print("seed,fig1_rank,fig2_rank,fig1_error,fig2_error")
    for s in range(args.seeds):
        a, b = (run_basin_experiment(replace(fig_preset(w, s), delta_input_certificate=False))
                for w in ("fig1", "fig2"))
        wins += a.stacked_rank > b.stacked_rank
        print(f"{s},{a.stacked_rank},{b.stacked_rank},{a.mean_test_error:.6g},{b.mean_test_error:.6g}")
    print(f"fig1 > fig2 in {wins}/{args.seeds} seeds")


if __name__ == "__main__":
    main()
