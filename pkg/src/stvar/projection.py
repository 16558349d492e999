"""Planar embedding of codebook nodes and rank-agreement projection of days.

``sammon_embed`` lays out the M nodes in the plane by minimizing Sammon
stress,

    E = (1 / sum d_ij) * sum_{i<j} (d_ij - |y_i - y_j|)^2 / d_ij,

with a diagonal-Newton step (factor 0.35) plus step halving, so the stress of
accepted iterates never increases. Initialization is classical scaling.

``GreedyProjector`` drops a d-dimensional day onto the embedded plane: every
candidate position on a dense grid over the padded node bounding box ranks
the planar nodes by distance, the day ranks the codebook vectors in data
space, and a candidate scores the length of the leading run on which the two
rankings agree. The projected position is the average of the top-scoring
candidates. Rank ties in the day's own distances form groups: a candidate
agrees at position k when its k-th nearest node belongs to the day's tie
group for that position. By construction the projected point always agrees
with the day's data-space winner at rank one, so it falls inside the winner's
planar tessellation cell.
"""

from __future__ import annotations

import datetime as _dt
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.spatial.distance import cdist

from .data_model import StateSeries, _check_dates, as_matrix
from .errors import (
    DataError,
    DegenerateDistances,
    DimensionMismatch,
    MalformedHeader,
    ShortRead,
)
from .som import SomModel, assign

_PLANAR_HEADER_RE = re.compile(r"^STVAR-PLANAR v1 T=(\d+)$")


# ---------------------------------------------------------------------------
# Sammon embedding


@dataclass(frozen=True)
class SammonConfig:
    max_iter: int = 500
    step_factor: float = 0.35
    tol: float = 1e-10
    max_halvings: int = 20

    def __post_init__(self):
        if self.max_iter < 1 or self.max_halvings < 0:
            raise DataError("iteration limits must be positive")
        if not 0.0 < self.step_factor <= 1.0:
            raise DataError("step_factor must be in (0, 1]")
        if self.tol <= 0.0:
            raise DataError("tol must be positive")


@dataclass(frozen=True)
class SammonResult:
    coords: np.ndarray
    stress: float
    stress_history: np.ndarray
    n_iter: int
    converged: bool


def _checked_distances(distances: np.ndarray) -> np.ndarray:
    D = np.asarray(distances, dtype=float)
    if D.ndim != 2 or D.shape[0] != D.shape[1]:
        raise DimensionMismatch(f"distance matrix must be square, got {D.shape}")
    if D.shape[0] < 2:
        raise DataError("need at least two items to embed")
    if not np.all(np.isfinite(D)):
        raise DataError("distances contain non-finite values")
    if not np.allclose(D, D.T, rtol=0.0, atol=1e-9 * max(1.0, float(np.abs(D).max()))):
        raise DataError("distance matrix is not symmetric")
    if np.any(np.abs(np.diag(D)) > 0.0):
        raise DataError("distance matrix diagonal must be zero")
    off = D[~np.eye(D.shape[0], dtype=bool)]
    if np.any(off <= 0.0):
        raise DegenerateDistances("off-diagonal target distances must be positive")
    return 0.5 * (D + D.T)


def sammon_stress(distances: np.ndarray, coords: np.ndarray) -> float:
    """Sammon stress of a configuration against target distances."""
    D = _checked_distances(distances)
    Y = np.asarray(coords, dtype=float)
    if Y.ndim != 2 or Y.shape[0] != D.shape[0]:
        raise DimensionMismatch(
            f"coords shape {Y.shape} does not match {D.shape[0]} items"
        )
    iu = np.triu_indices(D.shape[0], k=1)
    d = D[iu]
    delta = cdist(Y, Y)[iu]
    return float(((d - delta) ** 2 / d).sum() / d.sum())


def classical_scaling(distances: np.ndarray, n_components: int = 2) -> np.ndarray:
    """Principal-coordinate layout used to start the Sammon iteration."""
    D = _checked_distances(distances)
    M = D.shape[0]
    J = np.eye(M) - np.full((M, M), 1.0 / M)
    B = -0.5 * J @ (D * D) @ J
    vals, vecs = np.linalg.eigh(B)
    order = np.argsort(vals)[::-1][:n_components]
    vals = np.clip(vals[order], 0.0, None)
    vecs = vecs[:, order]
    # fix eigenvector signs so the layout does not depend on LAPACK internals
    for j in range(vecs.shape[1]):
        k = int(np.argmax(np.abs(vecs[:, j])))
        if vecs[k, j] < 0:
            vecs[:, j] = -vecs[:, j]
    coords = np.zeros((M, n_components))
    coords[:, : len(order)] = vecs * np.sqrt(vals)
    return coords - coords.mean(axis=0)


def _stress_raw(d_off: np.ndarray, c_norm: float, Y: np.ndarray, iu) -> float:
    delta = cdist(Y, Y)[iu]
    return float(((d_off - delta) ** 2 / d_off).sum() / c_norm)


def sammon_embed(
    distances: np.ndarray,
    n_components: int = 2,
    config: SammonConfig = SammonConfig(),
) -> SammonResult:
    """Minimize Sammon stress; accepted iterates never increase it."""
    D = _checked_distances(distances)
    M = D.shape[0]
    iu = np.triu_indices(M, k=1)
    d_off = D[iu]
    c_norm = float(d_off.sum())
    offdiag = ~np.eye(M, dtype=bool)

    Y = classical_scaling(D, n_components)
    stress = _stress_raw(d_off, c_norm, Y, iu)
    history = [stress]
    converged = False
    eps = 1e-12

    for _ in range(config.max_iter):
        delta = cdist(Y, Y)
        np.fill_diagonal(delta, 1.0)
        delta = np.maximum(delta, eps)
        # pairwise helpers, zeroed on the diagonal
        inv_dd = np.zeros((M, M))
        inv_dd[offdiag] = 1.0 / (D[offdiag] * delta[offdiag])
        resid = np.where(offdiag, D - delta, 0.0)

        R = inv_dd * resid
        grad = (-2.0 / c_norm) * (R.sum(axis=1)[:, None] * Y - R @ Y)

        W = inv_dd * (1.0 + resid / delta) / delta
        Y2 = Y * Y
        quad = W.sum(axis=1)[:, None] * Y2 - 2.0 * Y * (W @ Y) + W @ Y2
        hess = (-2.0 / c_norm) * ((inv_dd * resid).sum(axis=1)[:, None] - quad)

        denom = np.maximum(np.abs(hess), eps)
        step = config.step_factor * grad / denom

        accepted = None
        for _h in range(config.max_halvings + 1):
            cand = Y - step
            s_new = _stress_raw(d_off, c_norm, cand, iu)
            if s_new < stress:
                accepted = (cand, s_new)
                break
            step = 0.5 * step
        if accepted is None:
            converged = True
            break
        Y, s_new = accepted
        improvement = stress - s_new
        stress = s_new
        history.append(stress)
        if improvement <= config.tol * max(stress, eps):
            converged = True
            break

    return SammonResult(
        coords=Y - Y.mean(axis=0),
        stress=stress,
        stress_history=np.asarray(history),
        n_iter=len(history) - 1,
        converged=converged,
    )


# ---------------------------------------------------------------------------
# Tessellation of the plane by nearest node


@dataclass(frozen=True)
class Tessellation:
    """Nearest-site partition of the plane; ties take the smallest index."""

    sites: np.ndarray

    def __post_init__(self):
        sites = np.asarray(self.sites, dtype=float)
        object.__setattr__(self, "sites", sites)
        if sites.ndim != 2 or sites.shape[1] != 2 or sites.shape[0] < 1:
            raise DimensionMismatch(f"sites must be (M, 2), got {sites.shape}")
        if not np.all(np.isfinite(sites)):
            raise DataError("sites must be finite")

    @classmethod
    def from_som(cls, model: SomModel) -> "Tessellation":
        return cls(sites=model.planar)

    @property
    def n_cells(self) -> int:
        return self.sites.shape[0]

    def assign(self, points: np.ndarray) -> np.ndarray:
        pts = np.atleast_2d(np.asarray(points, dtype=float))
        if pts.shape[1] != 2:
            raise DimensionMismatch(f"points must be (N, 2), got {pts.shape}")
        return np.argmin(cdist(pts, self.sites, "sqeuclidean"), axis=1)

    def assign_one(self, point) -> int:
        return int(self.assign(np.asarray(point, dtype=float)[None, :])[0])

    def validate_assignments(self, series: "PlanarSeries") -> None:
        """Check the relational invariant that stored assignments are the
        nearest sites of the stored points."""
        if series.node_assignment is None:
            raise DataError("series carries no node assignments")
        want = self.assign(series.points)
        if not np.array_equal(want, series.node_assignment):
            bad = int(np.flatnonzero(want != series.node_assignment)[0])
            raise DataError(
                f"assignment at step {bad} is {series.node_assignment[bad]}, "
                f"nearest site is {want[bad]}"
            )


# ---------------------------------------------------------------------------
# Planar trajectory container and file format


@dataclass(frozen=True)
class PlanarSeries:
    """Daily positions on the embedded plane plus winning-node indices."""

    points: np.ndarray
    node_assignment: np.ndarray | None = None
    dates: tuple[_dt.date, ...] | None = None

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DimensionMismatch(f"points must be (T, 2), got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise DataError("points contain non-finite values")
        if self.node_assignment is not None:
            idx = np.asarray(self.node_assignment, dtype=int)
            object.__setattr__(self, "node_assignment", idx)
            if idx.shape != (pts.shape[0],):
                raise DimensionMismatch(
                    f"{idx.shape} assignments for {pts.shape[0]} points"
                )
            if np.any(idx < 0):
                raise DataError("node assignments must be non-negative")
        object.__setattr__(self, "dates", _check_dates(self.dates, pts.shape[0]))

    @property
    def n_days(self) -> int:
        return self.points.shape[0]


def save_planar(series: PlanarSeries, path) -> None:
    """Text format: header line, then one ``x y node [date]`` row per day at
    17 significant digits (lossless for float64)."""
    if series.node_assignment is None:
        raise DataError("cannot save a planar series without node assignments")
    lines = [f"STVAR-PLANAR v1 T={series.n_days}"]
    for t in range(series.n_days):
        row = f"{series.points[t, 0]:.17g} {series.points[t, 1]:.17g} {series.node_assignment[t]}"
        if series.dates is not None:
            row += f" {series.dates[t].isoformat()}"
        lines.append(row)
    Path(path).write_text("\n".join(lines) + "\n")


def load_planar(path) -> PlanarSeries:
    text = Path(path).read_text()
    lines = [ln for ln in text.split("\n") if ln.strip()]
    if not lines:
        raise MalformedHeader("empty planar file")
    m = _PLANAR_HEADER_RE.match(lines[0])
    if m is None:
        raise MalformedHeader(f"unrecognized header {lines[0]!r}")
    T = int(m.group(1))
    body = lines[1:]
    if len(body) < T:
        raise ShortRead(f"header declares {T} rows, file has {len(body)}")
    if len(body) > T:
        raise DimensionMismatch(f"header declares {T} rows, file has {len(body)}")
    points = np.empty((T, 2))
    nodes = np.empty(T, dtype=int)
    dates: list[_dt.date] | None = None
    for t, line in enumerate(body):
        parts = line.split()
        if len(parts) not in (3, 4):
            raise MalformedHeader(f"row {t} has {len(parts)} fields")
        points[t, 0] = float(parts[0])
        points[t, 1] = float(parts[1])
        nodes[t] = int(parts[2])
        if len(parts) == 4:
            if t == 0:
                dates = []
            if dates is None:
                raise DataError("some rows carry dates and some do not")
            dates.append(_dt.date.fromisoformat(parts[3]))
        elif dates is not None:
            raise DataError("some rows carry dates and some do not")
    return PlanarSeries(
        points=points,
        node_assignment=nodes,
        dates=None if dates is None else tuple(dates),
    )


# ---------------------------------------------------------------------------
# Greedy rank-agreement projection


class GreedyProjector:
    """Caches the candidate grid and its node rankings for one model."""

    def __init__(self, model: SomModel, padding: float = 0.25, resolution: int = 201):
        if resolution < 2:
            raise DataError("resolution must be >= 2")
        if padding < 0.0:
            raise DataError("padding must be >= 0")
        self.model = model
        self.nodes = model.nodes
        self.planar = model.planar
        lo = self.planar.min(axis=0)
        hi = self.planar.max(axis=0)
        span = np.where(hi - lo > 0.0, hi - lo, 1.0)
        lo = lo - padding * span
        hi = hi + padding * span
        xs = np.linspace(lo[0], hi[0], resolution)
        ys = np.linspace(lo[1], hi[1], resolution)
        gx, gy = np.meshgrid(xs, ys)
        self.candidates = np.column_stack([gx.ravel(), gy.ravel()])
        d2 = cdist(self.candidates, self.planar, "sqeuclidean")
        self.cand_order = np.argsort(d2, axis=1, kind="stable")

    def _prefix_lengths(self, x: np.ndarray) -> np.ndarray:
        d2 = ((self.nodes - x) ** 2).sum(axis=1)
        order = np.argsort(d2, kind="stable")
        sorted_d2 = d2[order]
        # group ids advance on strict increase, so exact ties share a group
        group_at_pos = np.concatenate([[0], np.cumsum(sorted_d2[1:] > sorted_d2[:-1])])
        group_of_node = np.empty(len(order), dtype=int)
        group_of_node[order] = group_at_pos
        cand_groups = group_of_node[self.cand_order]
        match = cand_groups == group_at_pos[None, :]
        return np.cumprod(match, axis=1).sum(axis=1)

    def project(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.nodes.shape[1],):
            raise DimensionMismatch(
                f"point has shape {x.shape}, model dimension is {self.nodes.shape[1]}"
            )
        plen = self._prefix_lengths(x)
        sel = plen == plen.max()
        return self.candidates[sel].mean(axis=0)

    def project_many(self, X: np.ndarray) -> np.ndarray:
        X = as_matrix(X)
        if X.shape[1] != self.nodes.shape[1]:
            raise DimensionMismatch(
                f"data dim {X.shape[1]} does not match model dim {self.nodes.shape[1]}"
            )
        out = np.empty((X.shape[0], 2))
        for t in range(X.shape[0]):
            plen = self._prefix_lengths(X[t])
            sel = plen == plen.max()
            out[t] = self.candidates[sel].mean(axis=0)
        return out


def project_point(
    x: np.ndarray, model: SomModel, padding: float = 0.25, resolution: int = 201
) -> np.ndarray:
    """One-off projection; build a GreedyProjector for repeated use."""
    return GreedyProjector(model, padding=padding, resolution=resolution).project(
        np.asarray(x, dtype=float)
    )


def project_series(
    series: StateSeries | np.ndarray,
    model: SomModel,
    padding: float = 0.25,
    resolution: int = 201,
) -> PlanarSeries:
    """Project every day and record its data-space winning node."""
    X = as_matrix(series)
    if X.shape[1] != model.dim:
        raise DimensionMismatch(f"data dim {X.shape[1]} != model dim {model.dim}")
    projector = GreedyProjector(model, padding=padding, resolution=resolution)
    points = projector.project_many(X)
    winners = assign(X, model)
    dates = series.dates if isinstance(series, StateSeries) else None
    return PlanarSeries(points=points, node_assignment=winners, dates=dates)
