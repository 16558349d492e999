"""Synthetic planar trajectories with known truth, for calibration studies.

Truth coefficients are deterministic functions of the block index (damped
rotations with varying contraction and angle), so every fixture is stable
across runs and documented by its own source: block i of K gets

    A_i = rho_i * [[cos w_i, -sin w_i], [sin w_i, cos w_i]],
    rho_i = 0.55 + 0.35 * i / max(K-1, 1),  w_i = -0.5 + 1.0 * i / max(K-1, 1)

and intercept block j of K' gets 0.8 * (cos(2 pi j / K'), sin(2 pi j / K')).
"""

from __future__ import annotations

import datetime as _dt
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .data_model import GridSpec, StateSeries
from .errors import DataError, EmptySeries, ExplosiveWarning, UnlabeledDate
from .models import (
    DesignInfo,
    ModelSpec,
    SEASONS,
    SpatialAdjust,
    chol_spd,
    exp_corr,
    resolve_spec,
)
from .projection import PlanarSeries, Tessellation
from .som import lattice_coords


@dataclass(frozen=True)
class TruthBundle:
    """A model spec, a coefficient layout, and the generating parameters."""

    info: DesignInfo
    phi: np.ndarray
    sigma: np.ndarray
    adjust: SpatialAdjust | None = None
    stationary: bool = True

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        sigma = np.asarray(self.sigma, dtype=float)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "sigma", sigma)
        if phi.shape != (self.info.n_columns, 2):
            raise DataError(
                f"phi shape {phi.shape} does not match layout "
                f"({self.info.n_columns} columns)"
            )
        if sigma.shape != (2, 2) or not np.allclose(sigma, sigma.T):
            raise DataError("sigma must be symmetric 2x2")
        if np.linalg.eigvalsh(sigma).min() <= 0.0:
            raise DataError("sigma must be positive definite")
        if (self.adjust is not None) != (self.info.spec.eta_structure == "spatial"):
            raise DataError("spatial adjustment given iff eta_structure is spatial")
        if self.stationary:
            rho = self.spectral_radii()
            if rho.size and rho.max() >= 1.0:
                raise DataError(
                    f"stationary truth has a block with spectral radius {rho.max():.3f}"
                )

    @property
    def spec(self) -> ModelSpec:
        return self.info.spec

    def a_block(self, i: int) -> np.ndarray:
        """Transition matrix of block i (Phi rows transposed back)."""
        return self.phi[2 * i : 2 * i + 2, :].T

    def spectral_radii(self) -> np.ndarray:
        return np.array(
            [np.abs(np.linalg.eigvals(self.a_block(i))).max() for i in range(self.info.n_a)]
        )


def simulate_var(
    truth: TruthBundle,
    n_days: int,
    s0=(0.0, 0.0),
    tess: Tessellation | None = None,
    start_date: _dt.date | str | None = None,
    seed: int = 0,
) -> PlanarSeries:
    """Roll the recursion s_{t+1} = A s_t + eta + eps forward from s0."""
    if n_days < 2:
        raise EmptySeries("need at least 2 days to simulate")
    spec = truth.spec
    if spec.needs_cells and tess is None:
        raise DataError("cell-dependent truth needs a tessellation")
    dates = None
    if start_date is not None:
        d0 = start_date if isinstance(start_date, _dt.date) else _dt.date.fromisoformat(start_date)
        dates = tuple(d0 + _dt.timedelta(days=i) for i in range(n_days))
    if spec.needs_dates and dates is None:
        raise UnlabeledDate(f"{spec.a_structure}/{spec.eta_structure} needs a start date")

    rho = truth.spectral_radii()
    if rho.size and rho.max() >= 1.0:
        warnings.warn(
            f"transition block with spectral radius {rho.max():.3f} >= 1",
            ExplosiveWarning,
            stacklevel=2,
        )

    rng = np.random.default_rng(seed)
    L = np.linalg.cholesky(truth.sigma)
    noise = rng.standard_normal((n_days - 1, 2)) @ L.T

    # spatial intercept: fold C*^{-1} into the knot values once, then each
    # step only needs the cross-correlation vector
    spatial = None
    if truth.adjust is not None:
        adj = truth.adjust
        v = []
        for k in range(2):
            cstar = exp_corr(adj.knots, adj.knots, float(adj.theta[k]))
            Lk, _ = chol_spd(cstar, adj.jitter)
            v.append(scipy.linalg.cho_solve((Lk, True), adj.wstar[k]))
        spatial = (adj, v)

    info = truth.info
    is_rw = spec.a_structure == "random_walk"
    n_a = info.n_a
    pts = np.empty((n_days, 2))
    pts[0] = np.asarray(s0, dtype=float)
    for t in range(n_days - 1):
        s = pts[t]
        date = dates[t] if dates is not None else None
        cell = tess.assign_one(s) if spec.needs_cells else None
        if is_rw:
            mean = s.copy()
        else:
            i = info.a_index(cell, date)
            mean = truth.a_block(i) @ s
        j = info.eta_index(date)
        if j is not None:
            mean = mean + truth.phi[2 * n_a + j]
        if spatial is not None:
            adj, v = spatial
            eta = np.empty(2)
            for k in range(2):
                c = exp_corr(s[None, :], adj.knots, float(adj.theta[k]))[0]
                eta[k] = c @ v[k]
            mean = mean + adj.q @ eta
        pts[t + 1] = mean + noise[t]

    assignment = tess.assign(pts) if tess is not None else None
    return PlanarSeries(points=pts, node_assignment=assignment, dates=dates)


def simulate_uniform_cloud(n: int, rect=(0.0, 1.0, 0.0, 1.0), seed: int = 0) -> StateSeries:
    """n independent uniform draws over (xmin, xmax, ymin, ymax)."""
    if n < 1:
        raise EmptySeries("need at least one point")
    xmin, xmax, ymin, ymax = (float(v) for v in rect)
    if not (xmax > xmin and ymax > ymin):
        raise DataError("rectangle must have positive width and height")
    rng = np.random.default_rng(seed)
    pts = np.column_stack([rng.uniform(xmin, xmax, n), rng.uniform(ymin, ymax, n)])
    grid = GridSpec(n_rows=1, n_cols=1, variables=("x", "y"))
    return StateSeries(matrix=pts, grid=grid)


def default_tessellation(n_nodes: int = 12, scale: float = 1.0) -> Tessellation:
    """Lattice-site tessellation matching an untrained map's layout."""
    return Tessellation(sites=scale * lattice_coords(n_nodes))


def _rotation_block(i: int, k: int) -> np.ndarray:
    frac = i / max(k - 1, 1)
    rho = 0.55 + 0.35 * frac
    w = -0.5 + 1.0 * frac
    return rho * np.array([[np.cos(w), -np.sin(w)], [np.sin(w), np.cos(w)]])


def _intercept_block(j: int, k: int) -> np.ndarray:
    ang = 2.0 * np.pi * j / max(k, 1)
    return 0.8 * np.array([np.cos(ang), np.sin(ang)])


DEFAULT_SIGMA = np.array([[0.8, 0.2], [0.2, 0.6]])


def ladder_truth(
    spec,
    tess: Tessellation | None = None,
    start_date: _dt.date | str | None = None,
    n_days: int | None = None,
    sigma: np.ndarray | None = None,
) -> TruthBundle:
    """Deterministic truth for any ladder spec.

    Time-blocked structures declare every season/year the simulated span
    (start_date, n_days) will visit, so the layout never runs out of labels.
    """
    spec = resolve_spec(spec)
    cells = range(tess.n_cells) if (tess is not None and spec.needs_cells) else ()
    years: tuple[int, ...] = ()
    season_years: tuple[int, ...] = ()
    needs_years = (
        spec.a_structure in ("year", "quarter_by_year", "tessellation_by_year")
        or spec.eta_structure == "year"
    )
    if needs_years:
        if start_date is None or n_days is None:
            raise DataError("year-blocked truth needs start_date and n_days")
        d0 = start_date if isinstance(start_date, _dt.date) else _dt.date.fromisoformat(start_date)
        d1 = d0 + _dt.timedelta(days=n_days - 1)
        years = tuple(range(d0.year, d1.year + 1))
        season_years = tuple(range(d0.year, d1.year + 2))
    info = DesignInfo.from_declared(
        spec, cells=cells, seasons=SEASONS, years=years, season_years=season_years
    )

    phi = np.zeros((info.n_columns, 2))
    for i in range(info.n_a):
        phi[2 * i : 2 * i + 2, :] = _rotation_block(i, info.n_a).T
    for j in range(info.n_eta):
        phi[2 * info.n_a + j, :] = _intercept_block(j, info.n_eta)

    adjust = None
    if spec.eta_structure == "spatial":
        base = tess.sites if tess is not None else lattice_coords(12)
        knots = spec.knot_grid.build(base)
        kx, ky = knots[:, 0], knots[:, 1]
        wstar = np.vstack([np.sin(kx) * np.cos(ky), np.cos(0.7 * kx + 0.3 * ky)])
        adjust = SpatialAdjust(
            knots=knots,
            theta=np.array([0.5, 0.8]),
            q=np.array([[0.6, 0.0], [0.2, 0.5]]),
            wstar=wstar,
            jitter=spec.jitter,
        )

    return TruthBundle(
        info=info,
        phi=phi,
        sigma=DEFAULT_SIGMA.copy() if sigma is None else np.asarray(sigma, dtype=float),
        adjust=adjust,
    )
