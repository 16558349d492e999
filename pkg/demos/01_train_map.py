#!/usr/bin/env python3
"""Train a self-organizing map on a synthetic daily circulation field.

The field is built from two slow latent factors mixed through fixed spatial
patterns, so the day-to-day states live near a low-dimensional sheet inside
the high-dimensional grid space. Batch and online training are run on the
same standardized data and compared on quantization error and node
occupancy.

Run:
    python demos/01_train_map.py --days 4000 --seed 0
"""

import argparse

import numpy as np

from stvar import (
    GridSpec,
    RawSeries,
    SomConfig,
    assign,
    quantization_error,
    standardize,
    train_batch,
    train_online,
)


def synthetic_field(n_days, grid, seed=0):
    """Two AR(1) latent factors through smooth spatial loadings plus noise."""
    rng = np.random.default_rng(seed)
    rows, cols = np.meshgrid(
        np.arange(grid.n_rows), np.arange(grid.n_cols), indexing="ij"
    )
    loadings = np.empty((2, grid.n_variables, grid.n_cells))
    for v in range(grid.n_variables):
        phase = 2.0 * np.pi * v / grid.n_variables
        loadings[0, v] = np.cos(rows / 2.0 + phase).ravel()
        loadings[1, v] = np.sin(cols / 3.0 - phase).ravel()

    z = np.zeros((n_days, 2))
    for t in range(1, n_days):
        z[t] = 0.92 * z[t - 1] + rng.standard_normal(2)
    fields = np.einsum("tk,kvc->tvc", z, loadings)
    fields += 0.4 * rng.standard_normal(fields.shape)
    return RawSeries(values=fields, grid=grid)


def occupancy_line(labels, n_nodes):
    counts = np.bincount(labels, minlength=n_nodes)
    shares = counts / counts.sum()
    return f"min {shares.min():.3f}  max {shares.max():.3f}  counts {counts.tolist()}"


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--days", type=int, default=4000)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    grid = GridSpec(n_rows=6, n_cols=8, variables=("height", "wind_u", "wind_v"))
    raw = synthetic_field(args.days, grid, seed=args.seed)
    state = standardize(raw)
    print(f"data: {state.n_days} days, state dimension {state.grid.d}")

    config = SomConfig(n_nodes=12, rng_seed=args.seed)

    batch_model, batch_trace = train_batch(state.matrix, config)
    report = quantization_error(state.matrix, batch_model)
    labels = assign(state.matrix, batch_model)
    print(f"\nbatch training: {batch_trace.n_epochs} epochs "
          f"(converged={batch_trace.converged})")
    print(f"  quantization error {report.overall:.4f}")
    print(f"  occupancy {occupancy_line(labels, config.n_nodes)}")

    online_model, _ = train_online(state.matrix, config)
    report = quantization_error(state.matrix, online_model)
    labels = assign(state.matrix, online_model)
    print("\nonline training:")
    print(f"  quantization error {report.overall:.4f}")
    print(f"  occupancy {occupancy_line(labels, config.n_nodes)}")

    # the two node sets should describe the same sheet even though the
    # individual node positions differ
    cross = quantization_error(batch_model.nodes, online_model)
    print(f"\nbatch nodes quantized by the online map: {cross.overall:.4f}")


if __name__ == "__main__":
    main()
