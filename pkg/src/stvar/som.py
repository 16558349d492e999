"""Self-organizing maps over daily state vectors.

Nodes live on a fixed near-square planar lattice (unit spacing, centered at
the origin) and carry codebook vectors in the data space. Two trainers are
provided:

* ``train_online``: one random day per step, winner ``c`` by smallest
  Euclidean distance, update ``w_m += alpha(t) * K(m, c) * (x - w_m)``.
* ``train_batch``: one pass per epoch; every node becomes the
  neighborhood-weighted mean of the days won by each center,
  ``w_m = sum_i h(m, c(i)) x_i / sum_i h(m, c(i))`` with ``h = alpha * K``
  (the learning rate cancels in the ratio).

Both anneal alpha and the kernel width sigma linearly inside two phases: a
coarse ordering phase and a fine tuning phase. The batch trainer keeps
iterating at the final values until node movement falls below tolerance.

Neighborhoods can be measured on the lattice (``"map"``) or between codebook
vectors (``"data"``). The Gaussian kernel is ``exp(-D^2 / (2 sigma^2))``; the
bubble kernel is the indicator of ``D <= sigma``. At ``sigma = 0`` both
collapse to the winner-only update.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .data_model import as_matrix
from .errors import DataError, EmptyData, MalformedHeader, NonFiniteUpdate

KERNELS = ("gaussian", "bubble")
SPACES = ("map", "data")

Pair = tuple[float, float]


def lattice_coords(n_nodes: int) -> np.ndarray:
    """Near-square lattice positions, unit spacing, centered at the origin.

    Node k sits at row ``k // n_cols``, column ``k % n_cols``, rows counted
    upward, so node 0 is the bottom-left corner.
    """
    if n_nodes < 1:
        raise DataError("need at least one node")
    n_cols = max(1, int(math.floor(math.sqrt(n_nodes))))
    rows = np.arange(n_nodes) // n_cols
    cols = np.arange(n_nodes) % n_cols
    coords = np.column_stack([cols, rows]).astype(float)
    return coords - coords.mean(axis=0)


def lattice_shape(n_nodes: int) -> tuple[int, int]:
    """(n_rows, n_cols) of the lattice used by lattice_coords."""
    n_cols = max(1, int(math.floor(math.sqrt(n_nodes))))
    return math.ceil(n_nodes / n_cols), n_cols


def _interp(i: int, n: int, start: float, end: float) -> float:
    if n <= 1:
        return start
    return start + (end - start) * (i / (n - 1))


@dataclass(frozen=True)
class SomConfig:
    """Training hyperparameters.

    ``phase_steps=None`` picks the defaults: (10*T, 40*T) sample steps for the
    online trainer, (10, 40) epochs for the batch trainer. ``sigma=None``
    starts phase 1 at half the lattice diameter (at least one spacing) and
    ends both phases at one spacing.
    """

    n_nodes: int
    kernel: str = "gaussian"
    neighborhood_space: str = "map"
    alpha: tuple[Pair, Pair] = ((0.5, 0.05), (0.05, 0.01))
    sigma: tuple[Pair, Pair] | None = None
    phase_steps: tuple[int, int] | None = None
    rng_seed: int = 0
    convergence_tol: float = 1e-6
    max_epochs: int = 1000

    def __post_init__(self):
        if self.n_nodes < 1:
            raise DataError("n_nodes must be >= 1")
        if self.kernel not in KERNELS:
            raise DataError(f"kernel must be one of {KERNELS}, got {self.kernel!r}")
        if self.neighborhood_space not in SPACES:
            raise DataError(
                f"neighborhood_space must be one of {SPACES}, got {self.neighborhood_space!r}"
            )
        for phase in self.alpha:
            for a in phase:
                if not 0.0 < a <= 1.0:
                    raise DataError("alpha values must be in (0, 1]")
        if self.sigma is not None:
            for phase in self.sigma:
                for s in phase:
                    if s < 0.0:
                        raise DataError("sigma values must be >= 0")
        if self.phase_steps is not None and any(n < 0 for n in self.phase_steps):
            raise DataError("phase step counts must be >= 0")
        if self.convergence_tol <= 0.0:
            raise DataError("convergence_tol must be positive")
        if self.max_epochs < 1:
            raise DataError("max_epochs must be >= 1")

    def sigma_pairs(self) -> tuple[Pair, Pair]:
        if self.sigma is not None:
            return self.sigma
        coords = lattice_coords(self.n_nodes)
        diameter = 0.0
        if self.n_nodes > 1:
            diameter = float(np.max(cdist(coords, coords)))
        start = max(diameter / 2.0, 1.0)
        return ((start, 1.0), (1.0, 1.0))

    def alpha_at(self, i: int, n1: int, n2: int) -> float:
        (s1, e1), (s2, e2) = self.alpha
        if i < n1:
            return _interp(i, n1, s1, e1)
        if i < n1 + n2:
            return _interp(i - n1, n2, s2, e2)
        return e2

    def sigma_at(self, i: int, n1: int, n2: int) -> float:
        (s1, e1), (s2, e2) = self.sigma_pairs()
        if i < n1:
            return _interp(i, n1, s1, e1)
        if i < n1 + n2:
            return _interp(i - n1, n2, s2, e2)
        return e2


@dataclass(frozen=True)
class SomModel:
    """Trained map: codebook vectors plus their fixed lattice positions."""

    nodes: np.ndarray
    planar: np.ndarray
    config: SomConfig
    provenance: str = ""

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        planar = np.asarray(self.planar, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "planar", planar)
        if nodes.ndim != 2:
            raise DataError(f"nodes must be (M, d), got shape {nodes.shape}")
        if planar.shape != (nodes.shape[0], 2):
            raise DataError(
                f"planar must be ({nodes.shape[0]}, 2), got shape {planar.shape}"
            )

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def dim(self) -> int:
        return self.nodes.shape[1]


@dataclass(frozen=True)
class OnlineTrace:
    """Per-epoch (block of T steps) maximum node displacement."""

    displacements: np.ndarray
    n_steps: int


@dataclass(frozen=True)
class BatchTrace:
    displacements: np.ndarray
    empty_neighborhoods: tuple[tuple[int, int], ...]
    n_epochs: int
    converged: bool


def _data_hash(data: np.ndarray) -> str:
    return hashlib.sha256(np.ascontiguousarray(data, dtype="<f8").tobytes()).hexdigest()


def _checked_matrix(data) -> np.ndarray:
    x = as_matrix(data)
    if x.shape[0] == 0 or x.shape[1] == 0:
        raise EmptyData(f"nothing to train on, data shape {x.shape}")
    return x


def _init(rng: np.random.Generator, data: np.ndarray, n_nodes: int) -> np.ndarray:
    lo = data.min(axis=0)
    hi = data.max(axis=0)
    return lo + rng.random((n_nodes, data.shape[1])) * (hi - lo)


def init_nodes(data, config: SomConfig) -> np.ndarray:
    """Seeded uniform draws inside the per-component data range."""
    x = _checked_matrix(data)
    return _init(np.random.default_rng(config.rng_seed), x, config.n_nodes)


def find_winner(x: np.ndarray, nodes: np.ndarray) -> int:
    """Index of the nearest codebook vector; ties take the smallest index."""
    x = np.asarray(x, dtype=float)
    d2 = ((nodes - x) ** 2).sum(axis=1)
    return int(np.argmin(d2))


def _kernel_row(d2_row: np.ndarray, sigma: float, kernel: str) -> np.ndarray:
    """Neighborhood weights from squared distances to the winner."""
    if sigma <= 0.0:
        return (d2_row == 0.0).astype(float)
    if kernel == "gaussian":
        return np.exp(-d2_row / (2.0 * sigma * sigma))
    return (d2_row <= sigma * sigma).astype(float)


def kernel_value(m: int, c: int, model: SomModel, sigma: float,
                 kernel: str | None = None, space: str | None = None) -> float:
    """Neighborhood weight K(m, c) at width sigma."""
    kernel = kernel or model.config.kernel
    space = space or model.config.neighborhood_space
    if kernel not in KERNELS or space not in SPACES:
        raise DataError(f"unknown kernel {kernel!r} or space {space!r}")
    pts = model.planar if space == "map" else model.nodes
    d2 = float(((pts[m] - pts[c]) ** 2).sum())
    return float(_kernel_row(np.array([d2]), sigma, kernel)[0])


def train_online(data, config: SomConfig) -> tuple[SomModel, OnlineTrace]:
    """Sequential trainer; runs exactly its two-phase step budget."""
    x = _checked_matrix(data)
    T = x.shape[0]
    n1, n2 = config.phase_steps if config.phase_steps is not None else (10 * T, 40 * T)
    rng = np.random.default_rng(config.rng_seed)
    nodes = _init(rng, x, config.n_nodes)
    planar = lattice_coords(config.n_nodes)
    planar_d2 = cdist(planar, planar, "sqeuclidean")
    use_map = config.neighborhood_space == "map"

    total = n1 + n2
    picks = rng.integers(0, T, size=total) if total else np.empty(0, dtype=int)
    displacements = []
    snapshot = nodes.copy()
    with np.errstate(invalid="ignore", over="ignore"):
        for i in range(total):
            alpha = config.alpha_at(i, n1, n2)
            sigma = config.sigma_at(i, n1, n2)
            xi = x[picks[i]]
            diff = xi - nodes
            c = int(np.argmin((diff * diff).sum(axis=1)))
            if use_map:
                d2 = planar_d2[c]
            else:
                d2 = ((nodes - nodes[c]) ** 2).sum(axis=1)
            k = _kernel_row(d2, sigma, config.kernel)
            nodes += alpha * k[:, None] * diff
            if (i + 1) % T == 0 or i + 1 == total:
                if not np.all(np.isfinite(nodes)):
                    raise NonFiniteUpdate(f"non-finite node after step {i + 1}")
                displacements.append(float(np.linalg.norm(nodes - snapshot, axis=1).max()))
                snapshot = nodes.copy()

    model = SomModel(nodes=nodes, planar=planar, config=config, provenance=_data_hash(x))
    return model, OnlineTrace(displacements=np.asarray(displacements), n_steps=total)


def train_batch(data, config: SomConfig) -> tuple[SomModel, BatchTrace]:
    """Epoch trainer; anneals through its phase budget, then iterates at the
    final alpha/sigma until max node displacement < convergence_tol."""
    x = _checked_matrix(data)
    n1, n2 = config.phase_steps if config.phase_steps is not None else (10, 40)
    rng = np.random.default_rng(config.rng_seed)
    nodes = _init(rng, x, config.n_nodes)
    planar = lattice_coords(config.n_nodes)
    planar_d2 = cdist(planar, planar, "sqeuclidean")
    use_map = config.neighborhood_space == "map"
    M = config.n_nodes

    displacements = []
    empty = []
    converged = False
    epoch = 0
    while epoch < config.max_epochs:
        sigma = config.sigma_at(epoch, n1, n2)
        winners = np.argmin(cdist(x, nodes, "sqeuclidean"), axis=1)
        counts = np.bincount(winners, minlength=M).astype(float)
        sums = np.zeros_like(nodes)
        np.add.at(sums, winners, x)
        if use_map:
            d2 = planar_d2
        else:
            d2 = cdist(nodes, nodes, "sqeuclidean")
        k = np.vstack([_kernel_row(d2[m], sigma, config.kernel) for m in range(M)])
        numer = k @ sums
        denom = k @ counts
        new_nodes = nodes.copy()
        hit = denom > 0
        with np.errstate(invalid="ignore", over="ignore"):
            new_nodes[hit] = numer[hit] / denom[hit, None]
        for m in np.flatnonzero(~hit):
            empty.append((epoch, int(m)))
        if not np.all(np.isfinite(new_nodes)):
            raise NonFiniteUpdate(f"non-finite node in epoch {epoch}")
        move = float(np.linalg.norm(new_nodes - nodes, axis=1).max())
        displacements.append(move)
        nodes = new_nodes
        epoch += 1
        if epoch >= n1 + n2 and move < config.convergence_tol:
            converged = True
            break

    model = SomModel(nodes=nodes, planar=planar, config=config, provenance=_data_hash(x))
    trace = BatchTrace(
        displacements=np.asarray(displacements),
        empty_neighborhoods=tuple(empty),
        n_epochs=epoch,
        converged=converged,
    )
    return model, trace


@dataclass(frozen=True)
class QuantizationReport:
    overall: float
    per_node_mean: np.ndarray
    counts: np.ndarray


def quantization_error(data, model: SomModel) -> QuantizationReport:
    """Mean distance from each day to its winning node, overall and per node."""
    x = _checked_matrix(data)
    if x.shape[1] != model.dim:
        raise DataError(f"data dim {x.shape[1]} != model dim {model.dim}")
    d2 = cdist(x, model.nodes, "sqeuclidean")
    winners = np.argmin(d2, axis=1)
    dists = np.sqrt(d2[np.arange(x.shape[0]), winners])
    M = model.n_nodes
    counts = np.bincount(winners, minlength=M)
    per_node = np.full(M, np.nan)
    for m in range(M):
        if counts[m]:
            per_node[m] = dists[winners == m].mean()
    return QuantizationReport(
        overall=float(dists.mean()), per_node_mean=per_node, counts=counts
    )


def assign(data, model: SomModel) -> np.ndarray:
    """Winning node index for every row of data."""
    x = _checked_matrix(data)
    return np.argmin(cdist(x, model.nodes, "sqeuclidean"), axis=1)


def som_to_dict(model: SomModel) -> dict:
    cfg = model.config
    return {
        "format": "STVAR-SOM",
        "version": 1,
        "n_nodes": model.n_nodes,
        "dim": model.dim,
        "config": {
            "kernel": cfg.kernel,
            "neighborhood_space": cfg.neighborhood_space,
            "alpha": [list(p) for p in cfg.alpha],
            "sigma": None if cfg.sigma is None else [list(p) for p in cfg.sigma],
            "phase_steps": None if cfg.phase_steps is None else list(cfg.phase_steps),
            "rng_seed": cfg.rng_seed,
            "convergence_tol": cfg.convergence_tol,
            "max_epochs": cfg.max_epochs,
        },
        "planar": model.planar.tolist(),
        "nodes": model.nodes.tolist(),
        "provenance": model.provenance,
    }


def som_from_dict(doc: dict) -> SomModel:
    if not isinstance(doc, dict) or doc.get("format") != "STVAR-SOM":
        raise MalformedHeader("not a map document")
    if doc.get("version") != 1:
        raise MalformedHeader(f"unsupported map version {doc.get('version')!r}")
    c = doc["config"]
    config = SomConfig(
        n_nodes=int(doc["n_nodes"]),
        kernel=c["kernel"],
        neighborhood_space=c["neighborhood_space"],
        alpha=tuple(tuple(p) for p in c["alpha"]),
        sigma=None if c["sigma"] is None else tuple(tuple(p) for p in c["sigma"]),
        phase_steps=None if c["phase_steps"] is None else tuple(c["phase_steps"]),
        rng_seed=int(c["rng_seed"]),
        convergence_tol=float(c["convergence_tol"]),
        max_epochs=int(c["max_epochs"]),
    )
    nodes = np.asarray(doc["nodes"], dtype=float)
    planar = np.asarray(doc["planar"], dtype=float)
    if nodes.shape != (doc["n_nodes"], doc["dim"]):
        raise MalformedHeader(
            f"nodes shape {nodes.shape} disagrees with header "
            f"({doc['n_nodes']}, {doc['dim']})"
        )
    return SomModel(nodes=nodes, planar=planar, config=config,
                    provenance=doc.get("provenance", ""))


def save_som(model: SomModel, path) -> None:
    Path(path).write_text(json.dumps(som_to_dict(model)))


def load_som(path) -> SomModel:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise MalformedHeader(f"map file is not JSON: {e}") from None
    return som_from_dict(doc)


def replace_planar(model: SomModel, planar: np.ndarray) -> SomModel:
    """New model with the lattice positions swapped for an embedding."""
    return replace(model, planar=np.asarray(planar, dtype=float))
