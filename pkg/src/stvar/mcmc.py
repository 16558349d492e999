"""Metropolis-within-Gibbs sampling for the planar VAR ladder.

Conditionals:
  Phi   | Sigma, eta   matrix normal around the current least-squares fit
  Sigma | Phi,  eta    inverse Wishart ("full_conditional": scale from the
                       current residuals, df = n, the exact conditional under
                       a Jeffreys prior; "fixed_scale": scale frozen at the
                       least-squares residuals, df = n + 1 - p)
  theta_k              random-walk Metropolis on the log scale, uniform prior
                       on (0, upper], proposal step tuned during burn-in
  w*_k                 joint Gaussian over both knot-value vectors
  q_ij                 scalar Gaussians, diagonal entries truncated positive
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy.spatial.distance import pdist
from scipy.stats import invwishart, truncnorm

from .errors import (
    DataError,
    DimensionMismatch,
    InsufficientDf,
    MalformedHeader,
    NonConvergenceWarning,
    NonPDScale,
    NumericalError,
    ShortRead,
    SingularDesign,
    UnlabeledDate,
)
from .models import (
    DesignInfo,
    DesignPair,
    ModelSpec,
    SpatialAdjust,
    build_design,
    chol_spd,
    coregional_eta,
    domain_diameter,
    exp_corr,
    mle_var,
    resolve_spec,
    spec_from_dict,
    spec_to_dict,
)
from .projection import PlanarSeries, Tessellation

SIGMA_MODES = ("full_conditional", "fixed_scale")


@dataclass(frozen=True)
class McmcConfig:
    """Sweep counts, seeding, and tuning knobs for one chain."""

    n_iter: int = 10000
    burn_in: int = 2000
    thin: int = 1
    seed: int = 0
    sigma_mode: str = "full_conditional"
    theta_upper: float | None = None
    proposal_scale: float = 0.5
    target_accept: float = 0.30
    adapt_interval: int = 50
    q_prior_sd: float = 10.0
    rhat_threshold: float = 1.2

    def __post_init__(self):
        if self.n_iter <= self.burn_in or self.burn_in < 0:
            raise DataError("need n_iter > burn_in >= 0")
        if self.thin < 1:
            raise DataError("thin must be at least 1")
        if self.sigma_mode not in SIGMA_MODES:
            raise DataError(f"sigma_mode must be one of {SIGMA_MODES}")
        if self.theta_upper is not None and self.theta_upper <= 0:
            raise DataError("theta_upper must be positive")
        if self.proposal_scale <= 0 or self.adapt_interval < 1:
            raise DataError("bad proposal tuning parameters")
        if not 0.0 < self.target_accept < 1.0:
            raise DataError("target_accept must be in (0, 1)")
        if self.q_prior_sd <= 0:
            raise DataError("q_prior_sd must be positive")

    @property
    def n_kept(self) -> int:
        return (self.n_iter - self.burn_in + self.thin - 1) // self.thin


@dataclass(frozen=True)
class PosteriorDraw:
    """One joint draw, packaged for likelihood and prediction calls."""

    phi: np.ndarray
    sigma: np.ndarray
    adjust: SpatialAdjust | None = None


@dataclass
class Chain:
    """Retained posterior draws plus everything needed to predict from them."""

    spec: ModelSpec
    a_keys: tuple
    eta_keys: tuple
    phi: np.ndarray
    sigma: np.ndarray
    theta: np.ndarray | None
    q: np.ndarray | None
    wstar: np.ndarray | None
    knots: np.ndarray | None
    tess_sites: np.ndarray | None
    n_obs: int
    config: McmcConfig
    acceptance: dict = field(default_factory=dict)
    rhat_max: float = float("nan")
    converged: bool = True

    @property
    def n_draws(self) -> int:
        return self.phi.shape[0]

    @property
    def is_spatial(self) -> bool:
        return self.spec.eta_structure == "spatial"

    @property
    def info(self) -> DesignInfo:
        return DesignInfo(self.spec, self.a_keys, self.eta_keys)

    @property
    def column_map(self) -> tuple[str, ...]:
        return self.info.column_map

    def tessellation(self) -> Tessellation | None:
        return None if self.tess_sites is None else Tessellation(sites=self.tess_sites)

    def draw(self, i: int) -> PosteriorDraw:
        adjust = None
        if self.is_spatial:
            adjust = SpatialAdjust(
                knots=self.knots,
                theta=self.theta[i],
                q=self.q[i],
                wstar=self.wstar[i],
                jitter=self.spec.jitter,
            )
        return PosteriorDraw(phi=self.phi[i], sigma=self.sigma[i], adjust=adjust)

    def draw_indices(self, n_draws: int | None) -> np.ndarray:
        """Evenly spaced draw indices; all of them when n_draws is None."""
        if n_draws is None or n_draws >= self.n_draws:
            return np.arange(self.n_draws)
        if n_draws < 1:
            raise DataError("need at least one draw")
        return np.unique(np.linspace(0, self.n_draws - 1, n_draws).round().astype(int))

    def posterior_mean(self) -> PosteriorDraw:
        """Parameter-wise posterior means (covariances symmetrized)."""
        sig = self.sigma.mean(axis=0)
        adjust = None
        if self.is_spatial:
            adjust = SpatialAdjust(
                knots=self.knots,
                theta=self.theta.mean(axis=0),
                q=np.tril(self.q.mean(axis=0)),
                wstar=self.wstar.mean(axis=0),
                jitter=self.spec.jitter,
            )
        return PosteriorDraw(
            phi=self.phi.mean(axis=0), sigma=0.5 * (sig + sig.T), adjust=adjust
        )


def _pd2(mat: np.ndarray) -> bool:
    """Exact positive-definiteness test for a symmetric 2x2 matrix."""
    return mat[0, 0] > 0.0 and mat[0, 0] * mat[1, 1] - mat[0, 1] * mat[1, 0] > 0.0


def _corr_factor(knots, points, theta, jitter):
    """Cholesky of C*(theta) and the interpolation weights at `points`."""
    cstar = exp_corr(knots, knots, theta)
    L, _ = chol_spd(cstar, jitter)
    W = scipy.linalg.cho_solve((L, True), exp_corr(knots, points, theta)).T
    return L, W


class _Sampler:
    """Mutable sweep state. Public code goes through run_chain."""

    def __init__(self, design: DesignPair, config: McmcConfig, rng,
                 knots: np.ndarray | None, theta_upper: float | None):
        self.design = design
        self.config = config
        self.rng = rng
        self.n = design.n
        self.p = design.p
        self.Yc = design.Y - design.offset
        self.spatial = knots is not None

        if self.p:
            xtx = design.X.T @ design.X
            try:
                self.xtx_factor = scipy.linalg.cho_factor(xtx)
            except scipy.linalg.LinAlgError:
                raise SingularDesign("X'X is singular; cannot sample Phi") from None
            inv_xtx = scipy.linalg.cho_solve(self.xtx_factor, np.eye(self.p))
            self.L_xx = np.linalg.cholesky(0.5 * (inv_xtx + inv_xtx.T))

        if config.sigma_mode == "fixed_scale":
            self.df = self.n + 1 - self.p
            if self.df < 2:
                raise InsufficientDf(
                    f"fixed_scale needs n + 1 - p >= 2, got {self.df}"
                )
            phi0, sig0 = mle_var(design)
            self.fixed_scale = sig0 * self.n
            if not _pd2(self.fixed_scale):
                raise NonPDScale("least-squares residual scale is singular")
        else:
            self.df = self.n
            phi0, sig0 = mle_var(design)

        self.phi = phi0
        self.sigma = self._pd_init(sig0)
        self.eta = np.zeros_like(self.Yc)

        if self.spatial:
            self.knots = np.asarray(knots, dtype=float)
            self.m = self.knots.shape[0]
            self.upper = float(theta_upper)
            d_med = float(np.median(pdist(self.knots)))
            t0 = min(3.0 / d_med, self.upper)
            self.theta = np.array([t0, t0])
            self.q = np.eye(2)
            self.wstar = np.zeros((2, self.m))
            self.jitter = design.info.spec.jitter
            self._log_step = np.log([config.proposal_scale] * 2)
            self._window_acc = np.zeros(2, dtype=int)
            self._window_n = np.zeros(2, dtype=int)
            self._kept_acc = np.zeros(2, dtype=int)
            self._kept_n = np.zeros(2, dtype=int)
            self._refresh_field(0)
            self._refresh_field(1)
            self._refresh_eta()

    @staticmethod
    def _pd_init(sigma: np.ndarray) -> np.ndarray:
        """Initialization-only ridge so the first Phi draw can factor Sigma."""
        lo = float(np.linalg.eigvalsh(sigma).min())
        if lo <= 0.0:
            sigma = sigma + (abs(lo) + 1e-10) * np.eye(2)
        return sigma

    # -- spatial caches ------------------------------------------------

    def _refresh_field(self, k: int):
        L, W = _corr_factor(self.knots, self.design.source_points, float(self.theta[k]), self.jitter)
        if k == 0:
            self.L1, self.W1 = L, W
        else:
            self.L2, self.W2 = L, W
        self._grams = None

    def _gram(self):
        if self._grams is None:
            eye = np.eye(self.m)
            self._grams = (
                self.W1.T @ self.W1,
                self.W2.T @ self.W2,
                self.W1.T @ self.W2,
                scipy.linalg.cho_solve((self.L1, True), eye),
                scipy.linalg.cho_solve((self.L2, True), eye),
            )
        return self._grams

    def _refresh_eta(self):
        w1 = self.W1 @ self.wstar[0]
        w2 = self.W2 @ self.wstar[1]
        self.eta = np.column_stack(
            [self.q[0, 0] * w1, self.q[1, 0] * w1 + self.q[1, 1] * w2]
        )

    # -- conditional updates -------------------------------------------

    def update_phi(self):
        if not self.p:
            return
        Yeff = self.Yc - self.eta if self.spatial else self.Yc
        phi_hat = scipy.linalg.cho_solve(self.xtx_factor, self.design.X.T @ Yeff)
        z = self.rng.standard_normal((self.p, 2))
        L_sig = np.linalg.cholesky(self.sigma)
        self.phi = phi_hat + self.L_xx @ z @ L_sig.T

    def update_sigma(self):
        if self.config.sigma_mode == "fixed_scale":
            scale = self.fixed_scale
        else:
            resid = self.Yc - self.eta if self.spatial else self.Yc.copy()
            if self.p:
                resid = resid - self.design.X @ self.phi
            scale = resid.T @ resid
            if not _pd2(scale):
                raise NonPDScale("residual scale matrix is singular")
        sig = invwishart.rvs(df=self.df, scale=scale, random_state=self.rng)
        self.sigma = 0.5 * (sig + sig.T)

    def _omega(self) -> np.ndarray:
        s = self.sigma
        det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
        return np.array([[s[1, 1], -s[0, 1]], [-s[0, 1], s[0, 0]]]) / det

    def _resid_no_eta(self) -> np.ndarray:
        R = self.Yc
        if self.p:
            R = R - self.design.X @ self.phi
        return R

    def _field_logpost(self, k, L, W, R, omega):
        """Joint log density terms that move with theta_k (constants dropped)."""
        w1 = (W if k == 0 else self.W1) @ self.wstar[0]
        w2 = (W if k == 1 else self.W2) @ self.wstar[1]
        eta = np.column_stack(
            [self.q[0, 0] * w1, self.q[1, 0] * w1 + self.q[1, 1] * w2]
        )
        e = R - eta
        loglik = -0.5 * float(np.einsum("ni,ij,nj->", e, omega, e))
        v = scipy.linalg.solve_triangular(L, self.wstar[k], lower=True)
        logprior = -0.5 * float(v @ v) - float(np.log(np.diag(L)).sum())
        return loglik + logprior

    def update_theta(self, k: int, adapting: bool):
        cur = float(self.theta[k])
        step = float(np.exp(self._log_step[k]))
        prop = cur * float(np.exp(step * self.rng.standard_normal()))
        self._window_n[k] += 1
        if not adapting:
            self._kept_n[k] += 1
        accepted = False
        if 0.0 < prop <= self.upper:
            R = self._resid_no_eta()
            omega = self._omega()
            L_cur = self.L1 if k == 0 else self.L2
            W_cur = self.W1 if k == 0 else self.W2
            try:
                L_prop, W_prop = _corr_factor(
                    self.knots, self.design.source_points, prop, self.jitter
                )
            except NumericalError:
                L_prop = None
            if L_prop is not None:
                lp_prop = self._field_logpost(k, L_prop, W_prop, R, omega)
                lp_cur = self._field_logpost(k, L_cur, W_cur, R, omega)
                # log-normal proposal: Hastings term log(prop/cur)
                log_alpha = lp_prop - lp_cur + np.log(prop) - np.log(cur)
                if np.log(self.rng.uniform()) < log_alpha:
                    self.theta[k] = prop
                    if k == 0:
                        self.L1, self.W1 = L_prop, W_prop
                    else:
                        self.L2, self.W2 = L_prop, W_prop
                    self._grams = None
                    self._refresh_eta()
                    accepted = True
        if accepted:
            self._window_acc[k] += 1
            if not adapting:
                self._kept_acc[k] += 1
        if adapting and self._window_n[k] >= self.config.adapt_interval:
            rate = self._window_acc[k] / self._window_n[k]
            self._log_step[k] += 0.8 * (rate - self.config.target_accept)
            self._log_step[k] = float(np.clip(self._log_step[k], np.log(1e-3), np.log(100.0)))
            self._window_acc[k] = 0
            self._window_n[k] = 0

    def update_wstar(self):
        omega = self._omega()
        u = self.q[:, 0]
        v = self.q[:, 1]
        a11 = float(u @ omega @ u)
        a12 = float(u @ omega @ v)
        a22 = float(v @ omega @ v)
        g11, g22, g12, c1inv, c2inv = self._gram()
        R = self._resid_no_eta()
        m = self.m
        P = np.empty((2 * m, 2 * m))
        P[:m, :m] = a11 * g11 + c1inv
        P[:m, m:] = a12 * g12
        P[m:, :m] = a12 * g12.T
        P[m:, m:] = a22 * g22 + c2inv
        b = np.concatenate([self.W1.T @ (R @ (omega @ u)), self.W2.T @ (R @ (omega @ v))])
        Lp, _ = chol_spd(P, self.jitter)
        mean = scipy.linalg.cho_solve((Lp, True), b)
        z = self.rng.standard_normal(2 * m)
        draw = mean + scipy.linalg.solve_triangular(Lp.T, z, lower=False)
        self.wstar = draw.reshape(2, m)
        self._refresh_eta()

    def update_q(self):
        omega = self._omega()
        o00, o01, o11 = omega[0, 0], omega[0, 1], omega[1, 1]
        tau2 = self.config.q_prior_sd**2
        w1 = self.W1 @ self.wstar[0]
        w2 = self.W2 @ self.wstar[1]
        R = self._resid_no_eta()
        rx, ry = R[:, 0], R[:, 1]
        tiny = np.finfo(float).tiny

        e_y = ry - self.q[1, 0] * w1 - self.q[1, 1] * w2
        prec = o00 * float(w1 @ w1) + 1.0 / tau2
        lin = o00 * float(w1 @ rx) + o01 * float(w1 @ e_y)
        mean, sd = lin / prec, 1.0 / np.sqrt(prec)
        q00 = truncnorm.rvs((0.0 - mean) / sd, np.inf, loc=mean, scale=sd,
                            random_state=self.rng)
        self.q[0, 0] = max(float(q00), tiny)

        e_x = rx - self.q[0, 0] * w1
        prec = o11 * float(w1 @ w1) + 1.0 / tau2
        lin = o11 * float(w1 @ (ry - self.q[1, 1] * w2)) + o01 * float(w1 @ e_x)
        self.q[1, 0] = lin / prec + np.sqrt(1.0 / prec) * self.rng.standard_normal()

        prec = o11 * float(w2 @ w2) + 1.0 / tau2
        lin = o11 * float(w2 @ (ry - self.q[1, 0] * w1)) + o01 * float(w2 @ e_x)
        mean, sd = lin / prec, 1.0 / np.sqrt(prec)
        q11 = truncnorm.rvs((0.0 - mean) / sd, np.inf, loc=mean, scale=sd,
                            random_state=self.rng)
        self.q[1, 1] = max(float(q11), tiny)
        self._refresh_eta()

    def sweep(self, adapting: bool):
        self.update_phi()
        self.update_sigma()
        if self.spatial:
            self.update_theta(0, adapting)
            self.update_theta(1, adapting)
            self.update_wstar()
            self.update_q()

    def acceptance_rates(self) -> dict:
        if not self.spatial:
            return {}
        out = {}
        for k, name in enumerate(("theta1", "theta2")):
            n = self._kept_n[k]
            out[name] = float(self._kept_acc[k] / n) if n else float("nan")
        return out


def split_rhat(x: np.ndarray) -> float:
    """Potential scale reduction from the two halves of one chain."""
    x = np.asarray(x, dtype=float)
    half = x.size // 2
    if half < 2:
        return float("nan")
    a = x[:half]
    b = x[x.size - half :]
    w = 0.5 * (a.var(ddof=1) + b.var(ddof=1))
    if w == 0.0:
        return float("nan")
    mu = 0.5 * (a.mean() + b.mean())
    bvar = half * ((a.mean() - mu) ** 2 + (b.mean() - mu) ** 2)
    var_plus = (half - 1) / half * w + bvar / half
    return float(np.sqrt(var_plus / w))


def _chain_rhat(chain: Chain) -> float:
    series = [chain.phi.reshape(chain.n_draws, -1), chain.sigma.reshape(chain.n_draws, -1)[:, [0, 1, 3]]]
    if chain.is_spatial:
        series.append(chain.theta)
        series.append(chain.q.reshape(chain.n_draws, -1)[:, [0, 2, 3]])
        series.append(chain.wstar.reshape(chain.n_draws, -1))
    worst = float("nan")
    for block in series:
        for j in range(block.shape[1]):
            r = split_rhat(block[:, j])
            if np.isfinite(r) and not (r <= worst):
                worst = r
    return worst


def run_chain(
    series: PlanarSeries,
    spec: ModelSpec | str | dict,
    config: McmcConfig = McmcConfig(),
    tess: Tessellation | None = None,
) -> Chain:
    """Fit one model to one trajectory and keep the post-burn-in draws."""
    spec = resolve_spec(spec)
    design = build_design(series, spec, tess=tess)
    spatial = spec.eta_structure == "spatial"
    knots = upper = None
    if spatial:
        knots = spec.knot_grid.build(series.points)
        upper = config.theta_upper
        if upper is None:
            upper = 300.0 / domain_diameter(series.points)

    rng = np.random.default_rng(config.seed)
    sampler = _Sampler(design, config, rng, knots, upper)

    kept = config.n_kept
    phi = np.empty((kept, design.p, 2))
    sigma = np.empty((kept, 2, 2))
    theta = np.empty((kept, 2)) if spatial else None
    q = np.empty((kept, 2, 2)) if spatial else None
    wstar = np.empty((kept, 2, sampler.m)) if spatial else None

    j = 0
    for i in range(config.n_iter):
        sampler.sweep(adapting=i < config.burn_in)
        if i >= config.burn_in and (i - config.burn_in) % config.thin == 0:
            phi[j] = sampler.phi
            sigma[j] = sampler.sigma
            if spatial:
                theta[j] = sampler.theta
                q[j] = sampler.q
                wstar[j] = sampler.wstar
            j += 1

    sites = None if tess is None else np.asarray(tess.sites, dtype=float)

    chain = Chain(
        spec=spec,
        a_keys=design.info.a_keys,
        eta_keys=design.info.eta_keys,
        phi=phi,
        sigma=sigma,
        theta=theta,
        q=q,
        wstar=wstar,
        knots=knots,
        tess_sites=sites,
        n_obs=design.n,
        config=config,
        acceptance=sampler.acceptance_rates(),
    )
    chain.rhat_max = _chain_rhat(chain)
    chain.converged = not (chain.rhat_max > config.rhat_threshold)
    if not chain.converged:
        warnings.warn(
            f"worst split scale-reduction {chain.rhat_max:.3f} exceeds "
            f"{config.rhat_threshold}",
            NonConvergenceWarning,
            stacklevel=2,
        )
    return chain


# ---------------------------------------------------------------------------
# Posterior prediction


@dataclass(frozen=True)
class SeriesPrediction:
    """Per-draw one-step-ahead paths aligned with the actual next days."""

    draws: np.ndarray
    actual: np.ndarray
    dates: tuple | None

    @property
    def mean(self) -> np.ndarray:
        return self.draws.mean(axis=0)


def chain_design(chain: Chain, series: PlanarSeries, tess: Tessellation | None = None):
    """Design rows for `series` in the CHAIN's fitted column layout."""
    info = chain.info
    spec = chain.spec
    S = series.points[:-1]
    n = S.shape[0]
    cells = None
    if spec.needs_cells:
        t = tess if tess is not None else chain.tessellation()
        if t is None:
            raise DataError("cell-dependent prediction needs a tessellation")
        cells = t.assign(S)
    dates = series.dates[:-1] if series.dates is not None else None
    if spec.needs_dates and dates is None:
        raise UnlabeledDate(f"{spec.a_structure}/{spec.eta_structure} needs dates")
    X = np.zeros((n, info.n_columns))
    for t_i in range(n):
        X[t_i] = info.row(
            S[t_i],
            None if cells is None else int(cells[t_i]),
            None if dates is None else dates[t_i],
        )
    offset = S if spec.a_structure == "random_walk" else np.zeros((n, 2))
    return X, offset, S


def predict_series(
    chain: Chain,
    series: PlanarSeries,
    tess: Tessellation | None = None,
    n_draws: int | None = 500,
    seed: int = 0,
    include_noise: bool = True,
) -> SeriesPrediction:
    """One-step-ahead draws for every transition in `series`.

    Day t's prediction uses the observed day t-1, so draws[:, i] targets
    series.points[i + 1].
    """
    X, offset, S = chain_design(chain, series, tess)
    idx = chain.draw_indices(n_draws)
    B, n = idx.size, S.shape[0]
    out = np.empty((B, n, 2))
    rng = np.random.default_rng(seed)
    for b, i in enumerate(idx):
        mean = offset + (X @ chain.phi[i] if chain.phi.shape[1] else 0.0)
        if chain.is_spatial:
            mean = mean + coregional_eta(S, chain.draw(int(i)).adjust)
        if include_noise:
            L = np.linalg.cholesky(chain.sigma[i])
            mean = mean + rng.standard_normal((n, 2)) @ L.T
        out[b] = mean
    dates = series.dates[1:] if series.dates is not None else None
    return SeriesPrediction(draws=out, actual=series.points[1:].copy(), dates=dates)


def predict_one_step(
    chain: Chain,
    point,
    date=None,
    cell: int | None = None,
    tess: Tessellation | None = None,
    n_draws: int | None = None,
    seed: int = 0,
    include_noise: bool = True,
) -> np.ndarray:
    """Draws of the next day's position given today's, shape (B, 2)."""
    point = np.asarray(point, dtype=float).reshape(2)
    info = chain.info
    spec = chain.spec
    if spec.needs_cells and cell is None:
        t = tess if tess is not None else chain.tessellation()
        if t is None:
            raise DataError("cell-dependent prediction needs a cell or tessellation")
        cell = int(t.assign_one(point))
    x = info.row(point, cell, date)
    idx = chain.draw_indices(n_draws)
    rng = np.random.default_rng(seed)
    out = np.empty((idx.size, 2))
    for b, i in enumerate(idx):
        mean = point.copy() if spec.a_structure == "random_walk" else x @ chain.phi[i]
        if chain.is_spatial:
            mean = mean + coregional_eta(point[None, :], chain.draw(int(i)).adjust)[0]
        if include_noise:
            L = np.linalg.cholesky(chain.sigma[i])
            mean = mean + L @ rng.standard_normal(2)
        out[b] = mean
    return out


# ---------------------------------------------------------------------------
# Chain files: magic line, one JSON metadata line, one line per draw


_CHAIN_MAGIC = "STVAR-CHAIN v1"


def _fmt(values) -> str:
    return " ".join(f"{v:.17g}" for v in np.asarray(values, dtype=float).ravel())


def save_chain(chain: Chain, path) -> None:
    meta = {
        "spec": spec_to_dict(chain.spec),
        "a_keys": [list(k) for k in chain.a_keys],
        "eta_keys": [list(k) for k in chain.eta_keys],
        "n_obs": chain.n_obs,
        "n_draws": chain.n_draws,
        "acceptance": chain.acceptance,
        "rhat_max": chain.rhat_max,
        "converged": chain.converged,
        "config": {
            "n_iter": chain.config.n_iter,
            "burn_in": chain.config.burn_in,
            "thin": chain.config.thin,
            "seed": chain.config.seed,
            "sigma_mode": chain.config.sigma_mode,
            "theta_upper": chain.config.theta_upper,
            "proposal_scale": chain.config.proposal_scale,
            "target_accept": chain.config.target_accept,
            "adapt_interval": chain.config.adapt_interval,
            "q_prior_sd": chain.config.q_prior_sd,
            "rhat_threshold": chain.config.rhat_threshold,
        },
        "knots": None if chain.knots is None else chain.knots.tolist(),
        "tess_sites": None if chain.tess_sites is None else chain.tess_sites.tolist(),
    }
    lines = [_CHAIN_MAGIC, json.dumps(meta, sort_keys=True)]
    for i in range(chain.n_draws):
        parts = [chain.phi[i], chain.sigma[i]]
        if chain.is_spatial:
            parts += [chain.theta[i], chain.q[i], chain.wstar[i]]
        lines.append(" ".join(s for s in (_fmt(p) for p in parts) if s))
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _tuple_keys(raw) -> tuple:
    return tuple(tuple(part for part in key) for key in raw)


def load_chain(path) -> Chain:
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines or lines[0].strip() != _CHAIN_MAGIC:
        raise MalformedHeader(f"expected {_CHAIN_MAGIC!r} on the first line")
    if len(lines) < 2:
        raise MalformedHeader("missing metadata line")
    try:
        meta = json.loads(lines[1])
    except json.JSONDecodeError as exc:
        raise MalformedHeader(f"bad metadata line: {exc}") from None
    spec = spec_from_dict(meta["spec"])
    config = McmcConfig(**meta["config"])
    a_keys = _tuple_keys(meta["a_keys"])
    eta_keys = _tuple_keys(meta["eta_keys"])
    n_draws = int(meta["n_draws"])
    p = 2 * len(a_keys) + len(eta_keys)
    spatial = spec.eta_structure == "spatial"
    knots = None if meta["knots"] is None else np.asarray(meta["knots"], dtype=float)
    m = 0 if knots is None else knots.shape[0]
    want = p * 2 + 4 + (2 + 4 + 2 * m if spatial else 0)

    body = lines[2 : 2 + n_draws]
    if len(body) < n_draws:
        raise ShortRead(f"expected {n_draws} draw lines, found {len(body)}")
    phi = np.empty((n_draws, p, 2))
    sigma = np.empty((n_draws, 2, 2))
    theta = np.empty((n_draws, 2)) if spatial else None
    q = np.empty((n_draws, 2, 2)) if spatial else None
    wstar = np.empty((n_draws, 2, m)) if spatial else None
    for i, line in enumerate(body):
        tokens = line.split()
        try:
            vals = np.array([float(t) for t in tokens], dtype=float)
        except ValueError:
            raise DimensionMismatch(f"draw line {i + 1}: non-numeric token") from None
        if vals.size != want:
            raise DimensionMismatch(
                f"draw line {i + 1}: expected {want} numbers, found {vals.size}"
            )
        pos = p * 2
        phi[i] = vals[:pos].reshape(p, 2)
        sigma[i] = vals[pos : pos + 4].reshape(2, 2)
        pos += 4
        if spatial:
            theta[i] = vals[pos : pos + 2]
            q[i] = vals[pos + 2 : pos + 6].reshape(2, 2)
            wstar[i] = vals[pos + 6 :].reshape(2, m)

    tess_sites = (
        None if meta["tess_sites"] is None else np.asarray(meta["tess_sites"], dtype=float)
    )
    return Chain(
        spec=spec,
        a_keys=a_keys,
        eta_keys=eta_keys,
        phi=phi,
        sigma=sigma,
        theta=theta,
        q=q,
        wstar=wstar,
        knots=knots,
        tess_sites=tess_sites,
        n_obs=int(meta["n_obs"]),
        config=config,
        acceptance=dict(meta["acceptance"]),
        rhat_max=float(meta["rhat_max"]),
        converged=bool(meta["converged"]),
    )
