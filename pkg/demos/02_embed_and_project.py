#!/usr/bin/env python3
"""Embed trained nodes in the plane and project daily states onto it.

A map is trained on a synthetic field, its nodes are laid out in two
dimensions by stress minimization over the inter-node distances, and every
day is then placed on the plane by the greedy rank-agreement rule. The key
property checked at the end: each day lands in the planar cell of its own
winning node, so the continuous trajectory and the discrete node sequence
tell the same story.

Run:
    python demos/02_embed_and_project.py --days 3000 --seed 1
"""

import argparse

import numpy as np
from scipy.spatial.distance import cdist, pdist, squareform

from stvar import (
    GridSpec,
    RawSeries,
    SomConfig,
    SomModel,
    Tessellation,
    assign,
    sammon_embed,
    standardize,
    train_batch,
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


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--days", type=int, default=3000)
    parser.add_argument("--seed", type=int, default=1)
    args = parser.parse_args()

    grid = GridSpec(n_rows=6, n_cols=8, variables=("height", "wind_u", "wind_v"))
    state = standardize(synthetic_field(args.days, grid, seed=args.seed))
    config = SomConfig(n_nodes=12, rng_seed=args.seed)
    model, _ = train_batch(state.matrix, config)

    # replace the lattice layout with a stress-minimizing one
    distances = squareform(pdist(model.nodes))
    result = sammon_embed(distances)
    model = SomModel(
        nodes=model.nodes, planar=result.coords, config=config,
        provenance=model.provenance,
    )
    print(
        f"embedding: stress {result.stress:.5f} after {result.n_iter} iterations"
        f" (converged={result.converged})"
    )
    planar_d = squareform(pdist(result.coords))
    corr = np.corrcoef(distances[np.triu_indices(12, 1)],
                       planar_d[np.triu_indices(12, 1)])[0, 1]
    print(f"planar vs original distance correlation: {corr:.4f}")

    # project the days with the module-level convenience wrapper
    from stvar import project_series

    series = project_series(state, model)
    print(f"\nprojected {series.n_days} days onto the plane")
    print(f"first five positions:\n{np.array_str(series.points[:5], precision=3)}")

    winners = assign(state.matrix, model)
    tess = Tessellation.from_som(model)
    landed = tess.assign(series.points)
    agree = float((landed == winners).mean())
    print(f"\nwinner agreement (planar cell == high-dimensional winner): "
          f"{100.0 * agree:.1f}%")

    occupancy = np.bincount(series.node_assignment, minlength=tess.n_cells)
    print(f"cell occupancy: {occupancy.tolist()}")

    # nodes themselves must sit at their own cell centers
    own = np.argmin(cdist(model.planar, tess.sites), axis=1)
    print(f"nodes map to their own cells: {bool(np.array_equal(own, np.arange(12)))}")


if __name__ == "__main__":
    main()
