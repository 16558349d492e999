#!/usr/bin/env python3
"""Summarize node occupancy and day-to-day transitions on the plane.

A dated planar series is simulated from the constant-matrix model, a model
of the same form is fit to it, and the empirical transition frequencies are
put side by side with the model-implied ones. Occupancy is tabulated by
season, daily step lengths are summarized by quantiles, and a short lag
scan checks that one lag of memory is enough.

Run:
    python demos/04_transitions.py --days 1600 --seed 7
"""

import argparse
import datetime as dt

import numpy as np

from stvar import (
    McmcConfig,
    ModelSpec,
    default_tessellation,
    empirical_transitions,
    ladder_truth,
    model_transitions,
    node_frequencies,
    node_table,
    run_chain,
    simulate_var,
    transition_distances,
    var_lag_aic,
)


def print_matrix(tag, probs):
    print(tag)
    for row in probs:
        print("  " + " ".join(f"{p:5.3f}" for p in row))


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--days", type=int, default=1600)
    parser.add_argument("--seed", type=int, default=7)
    args = parser.parse_args()

    tess = default_tessellation()
    truth = ladder_truth(ModelSpec("constant"))
    series = simulate_var(
        truth, args.days, tess=tess, seed=args.seed,
        start_date=dt.date(2001, 1, 1),
    )
    print(f"simulated {series.n_days} dated days")

    # occupancy, overall and by season
    counts = node_frequencies(series.node_assignment, tess.n_cells)
    print("\noccupancy shares on the node lattice (top row first):")
    for row in node_table(counts / counts.sum(), n_nodes=tess.n_cells):
        print("  " + " ".join(f"{v:6.4f}" for v in row))

    seasonal = node_frequencies(
        series.node_assignment, tess.n_cells, dates=series.dates, by="season"
    )
    print("\nper-season share of days in the busiest cell:")
    busiest = int(np.argmax(counts))
    for season, season_counts in seasonal.items():
        print(f"  {season}: {season_counts[busiest] / season_counts.sum():.4f}")

    # empirical vs model-implied transitions
    emp = empirical_transitions(series.node_assignment, tess.n_cells)
    chain = run_chain(
        series, ModelSpec("constant"),
        McmcConfig(n_iter=2500, burn_in=800, seed=args.seed + 1),
    )
    imp = model_transitions(chain, series, tess=tess, n_draws=200, seed=11)
    print_matrix("\nempirical transitions (first four rows):", emp.probs[:4])
    print_matrix("model-implied transitions (first four rows):", imp.probs[:4])
    gap = np.abs(emp.probs[emp.defined] - imp.probs[emp.defined]).max()
    print(f"largest per-entry gap on defined rows: {gap:.3f}")

    # step lengths and memory
    steps = transition_distances(series)
    qs = np.quantile(steps, [0.05, 0.25, 0.5, 0.75, 0.95])
    print("\ndaily step length quantiles (5/25/50/75/95):")
    print("  " + " ".join(f"{q:.3f}" for q in qs))

    scan = var_lag_aic(series, max_lag=4)
    print(f"\nlag scan: best lag {scan.best_lag} "
          f"(aic by lag: {', '.join(f'{a:.4f}' for a in scan.aic)})")


if __name__ == "__main__":
    main()
