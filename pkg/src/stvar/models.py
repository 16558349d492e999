"""Space-time VAR model structures, design matrices, closed-form estimates,
and the kriging pieces behind the spatially adjusted intercept.

A fitted day moves as s_{t+1} = A_{b(t)} s_t + eta_{c(t)}(s_t) + eps_t with
eps_t ~ N(0, Sigma). The transition block b(t) can depend on the tessellation
cell of s_t, the season, the year, or products of those; the intercept eta can
be absent, constant, seasonal, yearly, or a smooth function of position built
from a predictive-process field at a knot grid.

Stacking rows gives Y = X Phi + E: the row for day t puts s_t's coordinates in
the two columns of its transition block (so Phi stores each 2x2 block A
transposed) and a 1 in its intercept block column, if any. The random-walk
model has an empty X and carries s_t as a fixed offset instead.

Named ladder (aliases accepted everywhere a model spec is):

    model0  random walk                  model6  A(quarter) + eta(year)
    model1  constant A                   model7  A(quarter x year)
    model2  A(cell)                      model8  A(year)
    model3  A(cell) + eta(quarter)       model9  A(cell x year)
    model4  A(quarter)                   model10 A(cell x quarter)
    model5  A(quarter) + eta(constant)   model11 constant A + spatial eta
"""

from __future__ import annotations

import datetime as _dt
import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg
from scipy.spatial.distance import cdist

from .errors import (
    DataError,
    EmptySeries,
    IllConditioned,
    NonPDSigma,
    NonPositiveDecay,
    RankWarning,
    SingularDesign,
    UnlabeledDate,
)
from .projection import PlanarSeries, Tessellation

A_STRUCTURES = (
    "random_walk",
    "constant",
    "tessellation",
    "quarter",
    "quarter_by_year",
    "year",
    "tessellation_by_year",
    "tessellation_by_quarter",
)
ETA_STRUCTURES = ("none", "constant", "quarter", "year", "spatial")

SEASONS = ("DJF", "MAM", "JJA", "SON")
_SEASON_OF_MONTH = {
    12: "DJF", 1: "DJF", 2: "DJF",
    3: "MAM", 4: "MAM", 5: "MAM",
    6: "JJA", 7: "JJA", 8: "JJA",
    9: "SON", 10: "SON", 11: "SON",
}

MODEL_ALIASES = {
    "model0": ("random_walk", "none"),
    "model1": ("constant", "none"),
    "model2": ("tessellation", "none"),
    "model3": ("tessellation", "quarter"),
    "model4": ("quarter", "none"),
    "model5": ("quarter", "constant"),
    "model6": ("quarter", "year"),
    "model7": ("quarter_by_year", "none"),
    "model8": ("year", "none"),
    "model9": ("tessellation_by_year", "none"),
    "model10": ("tessellation_by_quarter", "none"),
    "model11": ("constant", "spatial"),
}


@dataclass(frozen=True)
class Calendar:
    """Meteorological seasons. December belongs to the following year's
    winter when seasons and years are crossed; the plain yearly blocks use
    the calendar year unchanged."""

    name: str = "meteorological"

    def season(self, date: _dt.date) -> str:
        return _SEASON_OF_MONTH[date.month]

    def year(self, date: _dt.date) -> int:
        return date.year

    def season_year(self, date: _dt.date) -> int:
        return date.year + 1 if date.month == 12 else date.year


@dataclass(frozen=True)
class KnotGrid:
    """Regular grid of predictive-process knots over the padded data box."""

    n_x: int = 8
    n_y: int = 8
    padding: float = 0.10

    def __post_init__(self):
        if self.n_x < 2 or self.n_y < 2:
            raise DataError("knot grid needs at least 2 knots per axis")
        if self.padding < 0.0:
            raise DataError("knot padding must be >= 0")

    def build(self, points: np.ndarray) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2:
            raise DataError(f"points must be (n, 2), got {pts.shape}")
        lo = pts.min(axis=0)
        hi = pts.max(axis=0)
        span = np.where(hi - lo > 0.0, hi - lo, 1.0)
        lo = lo - self.padding * span
        hi = hi + self.padding * span
        xs = np.linspace(lo[0], hi[0], self.n_x)
        ys = np.linspace(lo[1], hi[1], self.n_y)
        gx, gy = np.meshgrid(xs, ys)
        return np.column_stack([gx.ravel(), gy.ravel()])


@dataclass(frozen=True)
class JitterPolicy:
    """Diagonal jitter ladder for barely-non-PD correlation matrices."""

    initial: float = 1e-10
    factor: float = 10.0
    max: float = 1e-6

    def __post_init__(self):
        if self.initial <= 0.0 or self.max < self.initial or self.factor <= 1.0:
            raise DataError("jitter ladder must increase from a positive start")

    def ladder(self) -> list[float]:
        out = []
        j = self.initial
        while j <= self.max * (1.0 + 1e-12):
            out.append(j)
            j *= self.factor
        return out


@dataclass(frozen=True)
class ModelSpec:
    a_structure: str
    eta_structure: str = "none"
    calendar: Calendar = field(default_factory=Calendar)
    knot_grid: KnotGrid = field(default_factory=KnotGrid)
    jitter: JitterPolicy = field(default_factory=JitterPolicy)

    def __post_init__(self):
        if self.a_structure not in A_STRUCTURES:
            raise DataError(
                f"a_structure must be one of {A_STRUCTURES}, got {self.a_structure!r}"
            )
        if self.eta_structure not in ETA_STRUCTURES:
            raise DataError(
                f"eta_structure must be one of {ETA_STRUCTURES}, got {self.eta_structure!r}"
            )
        if self.a_structure == "random_walk" and self.eta_structure != "none":
            raise DataError("the random walk takes no intercept structure")

    @classmethod
    def from_name(cls, name: str, **kwargs) -> "ModelSpec":
        if name not in MODEL_ALIASES:
            raise DataError(f"unknown model name {name!r}")
        a, eta = MODEL_ALIASES[name]
        return cls(a_structure=a, eta_structure=eta, **kwargs)

    @property
    def name(self) -> str | None:
        """Ladder alias when this spec matches one."""
        for alias, (a, eta) in MODEL_ALIASES.items():
            if (a, eta) == (self.a_structure, self.eta_structure):
                return alias
        return None

    @property
    def needs_cells(self) -> bool:
        return self.a_structure.startswith("tessellation")

    @property
    def needs_dates(self) -> bool:
        return (
            self.a_structure in ("quarter", "quarter_by_year", "year",
                                 "tessellation_by_year", "tessellation_by_quarter")
            or self.eta_structure in ("quarter", "year")
        )


def spec_to_dict(spec: ModelSpec) -> dict:
    return {
        "a_structure": spec.a_structure,
        "eta_structure": spec.eta_structure,
        "season_calendar": spec.calendar.name,
        "knot_grid": {
            "n_x": spec.knot_grid.n_x,
            "n_y": spec.knot_grid.n_y,
            "padding": spec.knot_grid.padding,
        },
        "jitter_policy": {
            "initial": spec.jitter.initial,
            "factor": spec.jitter.factor,
            "max": spec.jitter.max,
        },
    }


def spec_from_dict(doc: dict) -> ModelSpec:
    if not isinstance(doc, dict):
        raise DataError("model spec document must be a JSON object")
    allowed = {"a_structure", "eta_structure", "season_calendar", "knot_grid", "jitter_policy"}
    unknown = set(doc) - allowed
    if unknown:
        raise DataError(f"unknown model spec keys {sorted(unknown)}")
    if "a_structure" not in doc:
        raise DataError("model spec needs a_structure")
    cal = doc.get("season_calendar", "meteorological")
    if cal != "meteorological":
        raise DataError(f"unknown season calendar {cal!r}")
    kg = doc.get("knot_grid", {})
    jp = doc.get("jitter_policy", {})
    return ModelSpec(
        a_structure=doc["a_structure"],
        eta_structure=doc.get("eta_structure", "none"),
        calendar=Calendar(),
        knot_grid=KnotGrid(
            n_x=int(kg.get("n_x", 8)),
            n_y=int(kg.get("n_y", 8)),
            padding=float(kg.get("padding", 0.10)),
        ),
        jitter=JitterPolicy(
            initial=float(jp.get("initial", 1e-10)),
            factor=float(jp.get("factor", 10.0)),
            max=float(jp.get("max", 1e-6)),
        ),
    )


def resolve_spec(source) -> ModelSpec:
    """Accept a ModelSpec, a ladder alias, or a path to a spec JSON file."""
    if isinstance(source, ModelSpec):
        return source
    if isinstance(source, dict):
        return spec_from_dict(source)
    name = str(source)
    if name in MODEL_ALIASES:
        return ModelSpec.from_name(name)
    path = Path(name)
    if path.exists():
        try:
            return spec_from_dict(json.loads(path.read_text()))
        except json.JSONDecodeError as e:
            raise DataError(f"model spec file is not JSON: {e}") from None
    raise DataError(f"{name!r} is neither a model alias nor a spec file")


# ---------------------------------------------------------------------------
# Block labeling and design matrices


def _season_order(season: str) -> int:
    return SEASONS.index(season)


class DesignInfo:
    """Maps (cell, date) to transition-block and intercept-block columns.

    Block labels are canonical: cells ascending, seasons in DJF/MAM/JJA/SON
    order, years ascending, crossed structures sorted major key first.
    """

    def __init__(self, spec: ModelSpec, a_keys, eta_keys):
        self.spec = spec
        self.a_keys = tuple(a_keys)
        self.eta_keys = tuple(eta_keys)
        self._a_lookup = {k: i for i, k in enumerate(self.a_keys)}
        self._eta_lookup = {k: i for i, k in enumerate(self.eta_keys)}

    def __eq__(self, other):
        return (
            isinstance(other, DesignInfo)
            and self.spec == other.spec
            and self.a_keys == other.a_keys
            and self.eta_keys == other.eta_keys
        )

    @property
    def n_a(self) -> int:
        return len(self.a_keys)

    @property
    def n_eta(self) -> int:
        return len(self.eta_keys)

    @property
    def n_columns(self) -> int:
        return 2 * self.n_a + self.n_eta

    @staticmethod
    def _label(key) -> str:
        if key == ():
            return "all"
        return "/".join(str(part) for part in key)

    @property
    def a_labels(self) -> tuple[str, ...]:
        return tuple(self._label(k) for k in self.a_keys)

    @property
    def eta_labels(self) -> tuple[str, ...]:
        return tuple(self._label(k) for k in self.eta_keys)

    @property
    def column_map(self) -> tuple[str, ...]:
        cols = []
        for lab in self.a_labels:
            cols.append(f"A[{lab}].sx")
            cols.append(f"A[{lab}].sy")
        for lab in self.eta_labels:
            cols.append(f"eta[{lab}]")
        return tuple(cols)

    def a_key(self, cell: int | None, date: _dt.date | None):
        s = self.spec
        cal = s.calendar
        kind = s.a_structure
        if kind == "random_walk":
            raise DataError("the random walk has no transition blocks")
        if kind == "constant":
            return ()
        if kind == "tessellation":
            self._need_cell(cell)
            return (int(cell),)
        self._need_date(date, kind)
        if kind == "quarter":
            return (cal.season(date),)
        if kind == "year":
            return (cal.year(date),)
        if kind == "quarter_by_year":
            return (cal.season_year(date), cal.season(date))
        if kind == "tessellation_by_year":
            self._need_cell(cell)
            return (cal.year(date), int(cell))
        # tessellation_by_quarter
        self._need_cell(cell)
        return (cal.season(date), int(cell))

    def eta_key(self, date: _dt.date | None):
        kind = self.spec.eta_structure
        if kind in ("none", "spatial"):
            return None
        if kind == "constant":
            return ()
        self._need_date(date, f"eta {kind}")
        if kind == "quarter":
            return (self.spec.calendar.season(date),)
        return (self.spec.calendar.year(date),)

    @staticmethod
    def _need_cell(cell):
        if cell is None:
            raise DataError("a tessellation-dependent block needs a cell index")

    @staticmethod
    def _need_date(date, kind):
        if date is None:
            raise UnlabeledDate(f"structure {kind!r} needs dated observations")

    def a_index(self, cell: int | None, date: _dt.date | None) -> int:
        key = self.a_key(cell, date)
        try:
            return self._a_lookup[key]
        except KeyError:
            raise UnlabeledDate(f"no fitted transition block for {key}") from None

    def eta_index(self, date: _dt.date | None) -> int | None:
        key = self.eta_key(date)
        if key is None:
            return None
        try:
            return self._eta_lookup[key]
        except KeyError:
            raise UnlabeledDate(f"no fitted intercept block for {key}") from None

    def row(self, point: np.ndarray, cell: int | None, date: _dt.date | None) -> np.ndarray:
        """One design row for a day at `point` (random walk rows are empty)."""
        x = np.zeros(self.n_columns)
        if self.spec.a_structure != "random_walk":
            i = self.a_index(cell, date)
            x[2 * i] = point[0]
            x[2 * i + 1] = point[1]
        j = self.eta_index(date)
        if j is not None:
            x[2 * self.n_a + j] = 1.0
        return x

    @classmethod
    def from_observations(cls, spec, source_dates, source_cells) -> "DesignInfo":
        """Labels drawn from the blocks actually visited by the source days."""
        if spec.needs_cells and source_cells is None:
            raise DataError("cell-dependent blocks need cell assignments")
        if spec.needs_dates and source_dates is None:
            raise UnlabeledDate(
                f"{spec.a_structure}/{spec.eta_structure} needs dated observations"
            )
        n = None
        if source_cells is not None:
            source_cells = np.asarray(source_cells, dtype=int)
            n = len(source_cells)
        if source_dates is not None:
            if n is not None and len(source_dates) != n:
                raise DataError(
                    f"{len(source_dates)} dates for {n} cell assignments"
                )
            n = len(source_dates)
        probe = cls(spec, (), ())
        a_keys: set = set()
        eta_keys: set = set()
        if spec.a_structure == "constant":
            a_keys.add(())
        if spec.eta_structure == "constant":
            eta_keys.add(())
        if n is not None:
            for t in range(n):
                cell = None if source_cells is None else int(source_cells[t])
                date = None if source_dates is None else source_dates[t]
                if spec.a_structure != "random_walk":
                    a_keys.add(probe.a_key(cell, date))
                ek = probe.eta_key(date)
                if ek is not None:
                    eta_keys.add(ek)
        return cls(spec, _sort_keys(spec.a_structure, a_keys),
                   _sort_keys_eta(spec.eta_structure, eta_keys))

    @classmethod
    def from_declared(cls, spec, *, cells=(), seasons=(), years=(),
                      season_years=()) -> "DesignInfo":
        """Labels declared up front (used to lay out simulation truths)."""
        kind = spec.a_structure
        if kind == "random_walk":
            a_keys = []
        elif kind == "constant":
            a_keys = [()]
        elif kind == "tessellation":
            a_keys = [(int(c),) for c in cells]
        elif kind == "quarter":
            a_keys = [(s,) for s in seasons]
        elif kind == "year":
            a_keys = [(int(y),) for y in years]
        elif kind == "quarter_by_year":
            a_keys = [(int(y), s) for y in season_years for s in seasons]
        elif kind == "tessellation_by_year":
            a_keys = [(int(y), int(c)) for y in years for c in cells]
        else:
            a_keys = [(s, int(c)) for s in seasons for c in cells]
        ek = spec.eta_structure
        if ek in ("none", "spatial"):
            eta_keys = []
        elif ek == "constant":
            eta_keys = [()]
        elif ek == "quarter":
            eta_keys = [(s,) for s in seasons]
        else:
            eta_keys = [(int(y),) for y in years]
        return cls(spec, _sort_keys(kind, set(a_keys)), _sort_keys_eta(ek, set(eta_keys)))


def _sort_keys(kind: str, keys: set) -> tuple:
    if kind in ("random_walk",):
        return ()
    if kind == "constant":
        return tuple(keys)
    if kind == "quarter":
        return tuple(sorted(keys, key=lambda k: _season_order(k[0])))
    if kind in ("tessellation", "year"):
        return tuple(sorted(keys))
    if kind == "quarter_by_year":
        return tuple(sorted(keys, key=lambda k: (k[0], _season_order(k[1]))))
    if kind == "tessellation_by_year":
        return tuple(sorted(keys))
    # tessellation_by_quarter
    return tuple(sorted(keys, key=lambda k: (_season_order(k[0]), k[1])))


def _sort_keys_eta(kind: str, keys: set) -> tuple:
    if kind in ("none", "spatial"):
        return ()
    if kind == "constant":
        return tuple(keys)
    if kind == "quarter":
        return tuple(sorted(keys, key=lambda k: _season_order(k[0])))
    return tuple(sorted(keys))


@dataclass(frozen=True)
class DesignPair:
    """Stacked one-step regression: Y = offset + X Phi + E."""

    Y: np.ndarray
    X: np.ndarray
    offset: np.ndarray
    source_points: np.ndarray
    source_cells: np.ndarray | None
    source_dates: tuple[_dt.date, ...] | None
    info: DesignInfo
    rank_deficient: bool

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


def build_design(
    series: PlanarSeries, spec: ModelSpec | str, tess: Tessellation | None = None
) -> DesignPair:
    """Lay out the one-step design for a planar trajectory."""
    spec = resolve_spec(spec)
    T = series.n_days
    if T < 3:
        raise EmptySeries(f"need at least 3 days to regress, got {T}")
    Y = series.points[1:]
    S = series.points[:-1]
    n = T - 1

    cells = None
    if spec.needs_cells:
        if tess is not None:
            cells = tess.assign(S)
        elif series.node_assignment is not None:
            cells = series.node_assignment[:-1]
        else:
            raise DataError("cell-dependent blocks need a tessellation or assignments")
    dates = None if series.dates is None else series.dates[:-1]
    if spec.needs_dates and dates is None:
        raise UnlabeledDate(f"{spec.a_structure}/{spec.eta_structure} needs dated days")

    info = DesignInfo.from_observations(spec, dates, cells)
    X = np.zeros((n, info.n_columns))
    offset = np.zeros((n, 2))
    if spec.a_structure == "random_walk":
        offset = S.copy()
    else:
        rows = np.arange(n)
        a_idx = np.array([
            info.a_index(None if cells is None else int(cells[t]),
                         None if dates is None else dates[t])
            for t in range(n)
        ])
        X[rows, 2 * a_idx] = S[:, 0]
        X[rows, 2 * a_idx + 1] = S[:, 1]
        if info.n_eta:
            eta_idx = np.array([info.eta_index(dates[t] if dates else None) for t in range(n)])
            X[rows, 2 * info.n_a + eta_idx] = 1.0

    rank_deficient = False
    if X.shape[1]:
        rank_deficient = np.linalg.matrix_rank(X) < X.shape[1]
        if rank_deficient:
            warnings.warn(
                f"design is rank deficient ({X.shape[1]} columns)", RankWarning,
                stacklevel=2,
            )
    return DesignPair(
        Y=Y, X=X, offset=offset, source_points=S, source_cells=cells,
        source_dates=dates, info=info, rank_deficient=rank_deficient,
    )


# ---------------------------------------------------------------------------
# Closed-form estimates and likelihood


def mle_var(design: DesignPair) -> tuple[np.ndarray, np.ndarray]:
    """Least-squares Phi and the 1/n residual covariance."""
    Yc = design.Y - design.offset
    n = design.n
    if design.p == 0:
        phi = np.zeros((0, 2))
        resid = Yc
    else:
        xtx = design.X.T @ design.X
        try:
            factor = scipy.linalg.cho_factor(xtx)
        except scipy.linalg.LinAlgError:
            raise SingularDesign("X'X is singular") from None
        phi = scipy.linalg.cho_solve(factor, design.X.T @ Yc)
        resid = Yc - design.X @ phi
    sigma = resid.T @ resid / n
    return phi, 0.5 * (sigma + sigma.T)


def rw_sigma_mle(series: PlanarSeries) -> np.ndarray:
    """Uncentered covariance of the daily increments."""
    if series.n_days < 2:
        raise EmptySeries("need at least 2 days of increments")
    d = series.points[1:] - series.points[:-1]
    sigma = d.T @ d / d.shape[0]
    return 0.5 * (sigma + sigma.T)


def log_likelihood(
    design: DesignPair,
    phi: np.ndarray,
    sigma: np.ndarray,
    adjust: "SpatialAdjust | None" = None,
) -> float:
    """Exact Gaussian log likelihood (2*pi constant included)."""
    sigma = np.asarray(sigma, dtype=float)
    try:
        L = np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        raise NonPDSigma("innovation covariance is not positive definite") from None
    mean = design.offset.copy()
    if design.p:
        mean += design.X @ np.asarray(phi, dtype=float)
    if adjust is not None:
        mean += coregional_eta(design.source_points, adjust)
    resid = design.Y - mean
    z = scipy.linalg.solve_triangular(L, resid.T, lower=True)
    n = design.n
    logdet = 2.0 * float(np.log(np.diag(L)).sum())
    return float(-n * np.log(2.0 * np.pi) - 0.5 * n * logdet - 0.5 * (z * z).sum())


# ---------------------------------------------------------------------------
# Kriging pieces: exponential correlation, predictive-process basis


def exp_corr(a: np.ndarray, b: np.ndarray, theta: float) -> np.ndarray:
    """exp(-theta * distance), elementwise over two point sets."""
    if theta <= 0.0 or not np.isfinite(theta):
        raise NonPositiveDecay(f"decay rate must be positive, got {theta}")
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return np.exp(-theta * cdist(a, b))


def chol_spd(mat: np.ndarray, jitter: JitterPolicy = JitterPolicy()) -> tuple[np.ndarray, float]:
    """Cholesky factor with an escalating diagonal jitter fallback.

    Returns (L, jitter_used); raises IllConditioned when even the largest
    allowed jitter cannot make the matrix factorizable.
    """
    mat = np.asarray(mat, dtype=float)
    try:
        return np.linalg.cholesky(mat), 0.0
    except np.linalg.LinAlgError:
        pass
    eye = np.eye(mat.shape[0])
    for j in jitter.ladder():
        try:
            return np.linalg.cholesky(mat + j * eye), j
        except np.linalg.LinAlgError:
            continue
    raise IllConditioned(
        f"correlation matrix not factorizable even with jitter {jitter.max}"
    )


def _check_knots(knots: np.ndarray) -> np.ndarray:
    knots = np.asarray(knots, dtype=float)
    if knots.ndim != 2 or knots.shape[1] != 2 or knots.shape[0] < 1:
        raise DataError(f"knots must be (m, 2), got {knots.shape}")
    if knots.shape[0] > 1:
        d = cdist(knots, knots)
        d[np.diag_indices_from(d)] = np.inf
        if d.min() == 0.0:
            raise DataError("knots must be distinct")
    return knots


def pp_basis(
    points: np.ndarray,
    knots: np.ndarray,
    theta: float,
    jitter: JitterPolicy = JitterPolicy(),
) -> np.ndarray:
    """Predictive-process interpolation weights, shape (n, m).

    Row s solves w(s) = c(s)' C*^{-1}, so a field value at s is w(s) @ wstar.
    At a knot the weights reduce to that knot's unit vector.
    """
    knots = _check_knots(knots)
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    cstar = exp_corr(knots, knots, theta)
    L, _ = chol_spd(cstar, jitter)
    cross = exp_corr(knots, pts, theta)
    return scipy.linalg.cho_solve((L, True), cross).T


def induced_corr(
    a: np.ndarray,
    b: np.ndarray,
    knots: np.ndarray,
    theta: float,
    jitter: JitterPolicy = JitterPolicy(),
) -> np.ndarray:
    """Low-rank correlation c*(a)' C*^{-1} c*(b) induced by the knot field."""
    knots = _check_knots(knots)
    cstar = exp_corr(knots, knots, theta)
    L, _ = chol_spd(cstar, jitter)
    ca = exp_corr(knots, np.atleast_2d(np.asarray(a, dtype=float)), theta)
    cb = exp_corr(knots, np.atleast_2d(np.asarray(b, dtype=float)), theta)
    return ca.T @ scipy.linalg.cho_solve((L, True), cb)


@dataclass(frozen=True)
class SpatialAdjust:
    """Coregionalized two-field intercept: eta(s) = Q (w1(s), w2(s))'.

    Q is lower triangular with positive diagonal; w_k(s) interpolates the
    knot values wstar[k] with decay theta[k].
    """

    knots: np.ndarray
    theta: np.ndarray
    q: np.ndarray
    wstar: np.ndarray
    jitter: JitterPolicy = field(default_factory=JitterPolicy)

    def __post_init__(self):
        knots = _check_knots(self.knots)
        theta = np.asarray(self.theta, dtype=float)
        q = np.asarray(self.q, dtype=float)
        wstar = np.asarray(self.wstar, dtype=float)
        object.__setattr__(self, "knots", knots)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "wstar", wstar)
        if theta.shape != (2,):
            raise DataError(f"theta must hold two decay rates, got shape {theta.shape}")
        if np.any(theta <= 0.0):
            raise NonPositiveDecay("decay rates must be positive")
        if q.shape != (2, 2) or q[0, 1] != 0.0:
            raise DataError("q must be 2x2 lower triangular")
        if q[0, 0] <= 0.0 or q[1, 1] <= 0.0:
            raise DataError("q must have a positive diagonal")
        if wstar.shape != (2, knots.shape[0]):
            raise DataError(
                f"wstar must be (2, {knots.shape[0]}), got shape {wstar.shape}"
            )


def coregional_eta(points: np.ndarray, adjust: SpatialAdjust) -> np.ndarray:
    """Spatial intercept at each point, shape (n, 2)."""
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    w1 = pp_basis(pts, adjust.knots, float(adjust.theta[0]), adjust.jitter) @ adjust.wstar[0]
    w2 = pp_basis(pts, adjust.knots, float(adjust.theta[1]), adjust.jitter) @ adjust.wstar[1]
    q = adjust.q
    return np.column_stack([q[0, 0] * w1, q[1, 0] * w1 + q[1, 1] * w2])


def domain_diameter(points: np.ndarray) -> float:
    """Diagonal length of the bounding box of a point set."""
    pts = np.asarray(points, dtype=float)
    return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))


def phi_blocks(info: DesignInfo, phi: np.ndarray) -> dict[str, np.ndarray]:
    """Per-label 2x2 transition matrices A (rows of Phi transposed back)."""
    phi = np.asarray(phi, dtype=float)
    out = {}
    for i, lab in enumerate(info.a_labels):
        out[lab] = phi[2 * i : 2 * i + 2, :].T.copy()
    return out


def eta_blocks(info: DesignInfo, phi: np.ndarray) -> dict[str, np.ndarray]:
    """Per-label intercept vectors."""
    phi = np.asarray(phi, dtype=float)
    out = {}
    for j, lab in enumerate(info.eta_labels):
        out[lab] = phi[2 * info.n_a + j, :].copy()
    return out
