"""Inhomogeneous Poisson point-process models with effort and detection.

The modeled intensity at cell i factorizes on the log scale as

    log eta_i = beta' x_i  +  log g(gamma1' w1_i)  +  gamma2' w2_i  +  off_i

where x are environment covariates (with optional intercept), w1 feeds a
logistic-link detection component g, w2 are log-linear effort covariates,
and ``off`` is a fixed log-effort offset (coefficient pinned to 1).
Covariates are piecewise constant per cell.

The point-pattern log likelihood uses a Riemann approximation of the
intensity integral with per-cell weights alpha (cell areas by default):

    ll = sum_points log eta(point) - sum_cells alpha_i * eta_i

Cells with zero weight or zero effort (offset -inf) drop out of the sum;
an observed point in such a cell contradicts the model and raises.
Two derived data resolutions share the same eta:

    counts:   N_i ~ Poisson(alpha_i eta_i)
    presence: O_i ~ Bernoulli(1 - exp(-alpha_i eta_i))
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit, gammaln

from .errors import (
    DataInconsistencyError,
    GridMismatchError,
    MissingDataError,
)
from .geometry import Grid, Raster, cells_of

_RCOND = 1e-12


@dataclass
class CovariateBlock:
    """Named covariate rasters sharing one grid."""

    names: list[str]
    rasters: list[Raster]

    def __post_init__(self) -> None:
        if len(self.names) != len(self.rasters):
            raise ValueError("names and rasters must align")
        if len(set(self.names)) != len(self.names):
            raise ValueError(f"duplicate covariate names in block: {self.names}")
        if not self.rasters:
            raise ValueError("empty covariate block; use None instead")
        g = self.rasters[0].grid
        for r in self.rasters[1:]:
            if r.grid != g:
                raise GridMismatchError("covariates in one block on different grids")

    @property
    def grid(self) -> Grid:
        return self.rasters[0].grid

    def matrix(self) -> np.ndarray:
        return np.column_stack([r.flat for r in self.rasters])


@dataclass
class IntensityModel:
    """Model structure: which components exist and their covariates."""

    grid: Grid
    env: CovariateBlock | None = None
    detection: CovariateBlock | None = None
    effort: CovariateBlock | None = None
    log_effort_offset: Raster | None = None
    intercept: bool = True
    link: str = "logistic"
    mark: str | None = None

    def __post_init__(self) -> None:
        if self.link != "logistic":
            raise ValueError(f"unsupported detection link {self.link!r}")
        for blk in (self.env, self.detection, self.effort):
            if blk is not None and blk.grid != self.grid:
                raise GridMismatchError("covariate block grid differs from model grid")
        if self.env is not None and self.intercept and "intercept" in self.env.names:
            raise ValueError("covariate name 'intercept' is reserved")
        if self.log_effort_offset is not None and self.log_effort_offset.grid != self.grid:
            raise GridMismatchError("offset grid differs from model grid")

    def parameter_names(self) -> list[str]:
        """Qualified coefficient names, concatenation order of theta."""
        names = []
        if self.intercept:
            names.append("env:intercept")
        if self.env is not None:
            names += [f"env:{n}" for n in self.env.names]
        if self.detection is not None:
            names += [f"det:{n}" for n in self.detection.names]
        if self.effort is not None:
            names += [f"eff:{n}" for n in self.effort.names]
        return names

    @property
    def n_parameters(self) -> int:
        return len(self.parameter_names())


@dataclass
class LikelihoodData:
    """Observed data in one of three resolutions on a grid.

    kind "points": exact locations; "counts": per-cell totals;
    "presence": per-cell detected-or-not. ``weights`` are the Riemann
    integration weights alpha (default: cell area everywhere).
    """

    kind: str
    grid: Grid
    weights: np.ndarray
    points: np.ndarray | None = None
    counts: np.ndarray | None = None
    presence: np.ndarray | None = None

    def __post_init__(self) -> None:
        if self.kind not in ("points", "counts", "presence"):
            raise ValueError(f"unknown data kind {self.kind!r}")
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape != (self.grid.ncells,):
            raise ValueError(f"weights must have {self.grid.ncells} entries")
        if np.any(~np.isfinite(w)) or np.any(w < 0):
            raise ValueError("weights must be finite and nonnegative")
        self.weights = w

    @classmethod
    def from_points(cls, grid: Grid, points: np.ndarray, weights: np.ndarray | None = None):
        pts = np.asarray(points, dtype=float).reshape(-1, 2)
        return cls(kind="points", grid=grid, weights=_default_weights(grid, weights), points=pts)

    @classmethod
    def from_counts(cls, grid: Grid, counts, weights: np.ndarray | None = None):
        c = counts.flat if isinstance(counts, Raster) else np.asarray(counts, dtype=float).reshape(-1)
        c = np.asarray(c, dtype=float)
        if c.shape != (grid.ncells,):
            raise ValueError(f"counts must have {grid.ncells} entries")
        if np.any(c < 0):
            raise ValueError("negative counts")
        if np.any(c != np.floor(c)):
            raise ValueError("counts must be integers")
        return cls(kind="counts", grid=grid, weights=_default_weights(grid, weights), counts=c)

    @classmethod
    def from_presence(cls, grid: Grid, presence, weights: np.ndarray | None = None):
        o = presence.flat if isinstance(presence, Raster) else np.asarray(presence).reshape(-1)
        o = np.asarray(o, dtype=float)
        if o.shape != (grid.ncells,):
            raise ValueError(f"presence must have {grid.ncells} entries")
        if not np.all((o == 0) | (o == 1)):
            raise ValueError("presence must be 0/1")
        return cls(kind="presence", grid=grid, weights=_default_weights(grid, weights), presence=o.astype(bool))


def _default_weights(grid: Grid, weights: np.ndarray | None) -> np.ndarray:
    if weights is None:
        return np.full(grid.ncells, grid.cell_area)
    return np.asarray(weights, dtype=float).reshape(-1)


@dataclass
class FitResult:
    """Maximum-likelihood estimate and curvature summary."""

    names: list[str]
    theta: np.ndarray
    loglik: float
    converged: bool
    iterations: int
    covariance: np.ndarray | None = None
    singular_information: bool = False
    gradient_max_norm: float = float("nan")

    @property
    def coefficients(self) -> dict[str, float]:
        return {n: float(v) for n, v in zip(self.names, self.theta)}

    def coefficient(self, name: str) -> float:
        return self.coefficients[name]

    def stderr(self) -> dict[str, float]:
        if self.covariance is None:
            return {n: float("nan") for n in self.names}
        sd = np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))
        return {n: float(s) for n, s in zip(self.names, sd)}


class _Design:
    """Precomputed matrices binding one model to one dataset."""

    def __init__(self, model: IntensityModel, data: LikelihoodData):
        if model.grid != data.grid:
            raise GridMismatchError("model and data grids differ")
        self.model = model
        self.data = data
        grid = model.grid
        n = grid.ncells

        cols = []
        if model.intercept:
            cols.append(np.ones(n))
        if model.env is not None:
            cols.append(model.env.matrix())
        self.A = np.column_stack(cols) if cols else np.zeros((n, 0))
        self.W1 = model.detection.matrix() if model.detection is not None else np.zeros((n, 0))
        self.W2 = model.effort.matrix() if model.effort is not None else np.zeros((n, 0))
        self.off = (
            model.log_effort_offset.flat.astype(float)
            if model.log_effort_offset is not None
            else np.zeros(n)
        )
        if np.any(self.off == np.inf):
            raise ValueError("log-effort offset contains +inf")

        cov_ok = (
            np.isfinite(self.A).all(axis=1)
            & np.isfinite(self.W1).all(axis=1)
            & np.isfinite(self.W2).all(axis=1)
            & ~np.isnan(self.off)
        )
        # excluded: zero weight, zero effort (offset -inf), or missing covariates
        self.active = (data.weights > 0) & cov_ok & (self.off > -np.inf)
        self.w_act = data.weights[self.active]

        self.p_env = self.A.shape[1]
        self.p_det = self.W1.shape[1]
        self.p_eff = self.W2.shape[1]

        if data.kind == "points":
            pts = data.points
            idx = cells_of(grid, pts[:, 0], pts[:, 1])
            bad_cov = ~cov_ok[idx]
            if np.any(bad_cov):
                i = int(np.argmax(bad_cov))
                raise MissingDataError(
                    f"point {tuple(pts[i])} falls in a cell with missing covariates"
                )
            inactive = ~self.active[idx]
            if np.any(inactive):
                i = int(np.argmax(inactive))
                raise DataInconsistencyError(
                    f"observed point {tuple(pts[i])} lies in a cell with zero "
                    "effort or zero integration weight"
                )
            self.idx = idx
            self.Ap = self.A[idx]
            self.W1p = self.W1[idx]
            self.W2p = self.W2[idx]
            self.offp = self.off[idx]
        elif data.kind == "counts":
            bad = (data.counts > 0) & ~self.active
            if np.any(bad):
                raise DataInconsistencyError(
                    f"{int(bad.sum())} cells have positive counts but zero effort/weight"
                )
            self.N_act = data.counts[self.active]
        else:
            bad = data.presence & ~self.active
            if np.any(bad):
                raise DataInconsistencyError(
                    f"{int(bad.sum())} cells are occupied but have zero effort/weight"
                )
            self.O_act = data.presence[self.active]

    def split(self, theta: np.ndarray):
        b = theta[: self.p_env]
        g1 = theta[self.p_env : self.p_env + self.p_det]
        g2 = theta[self.p_env + self.p_det :]
        return b, g1, g2

    def _cell_parts(self, theta: np.ndarray):
        """log eta on active cells plus the detection linear predictor."""
        b, g1, g2 = self.split(theta)
        act = self.active
        le = self.off[act].copy()
        if self.p_env:
            le += self.A[act] @ b
        t = None
        if self.p_det:
            t = self.W1[act] @ g1
            le += -np.logaddexp(0.0, -t)  # log logistic(t)
        if self.p_eff:
            le += self.W2[act] @ g2
        return le, t

    def _point_parts(self, theta: np.ndarray):
        b, g1, g2 = self.split(theta)
        le = self.offp.copy()
        if self.p_env:
            le += self.Ap @ b
        t = None
        if self.p_det:
            t = self.W1p @ g1
            le += -np.logaddexp(0.0, -t)
        if self.p_eff:
            le += self.W2p @ g2
        return le, t

    def _u_matrix(self, A, W1, W2, t):
        """d log eta / d theta rows; detection columns carry 1 - g(t)."""
        parts = []
        if self.p_env:
            parts.append(A)
        if self.p_det:
            parts.append(expit(-t)[:, None] * W1)
        if self.p_eff:
            parts.append(W2)
        if not parts:
            return np.zeros((A.shape[0], 0))
        return np.column_stack(parts)

    def loglik_grad(self, theta: np.ndarray):
        kind = self.data.kind
        le, t = self._cell_parts(theta)
        with np.errstate(over="ignore"):
            eta_act = np.exp(le)
        mu = self.w_act * eta_act
        if not np.all(np.isfinite(mu)):
            p = len(theta)
            return -np.inf, np.full(p, np.nan)
        act = self.active
        U = self._u_matrix(self.A[act], self.W1[act], self.W2[act], t)

        if kind == "points":
            le_p, t_p = self._point_parts(theta)
            ll = float(le_p.sum() - mu.sum())
            Up = self._u_matrix(self.Ap, self.W1p, self.W2p, t_p)
            grad = Up.sum(axis=0) - mu @ U
            return ll, grad
        if kind == "counts":
            N = self.N_act
            logw = np.log(self.w_act)
            terms = np.where(N > 0, N * (logw + le), 0.0) - mu - gammaln(N + 1.0)
            ll = float(terms.sum())
            grad = (N - mu) @ U
            return ll, grad
        # presence
        O = self.O_act
        with np.errstate(over="ignore"):
            r = np.where(O, mu / np.expm1(np.where(O, mu, 1.0)), 0.0)
        occ = np.log(-np.expm1(-mu[O])) if np.any(O) else np.zeros(0)
        ll = float(occ.sum() - mu[~O].sum())
        coef = np.where(O, r, -mu)
        grad = coef @ U
        return ll, grad


def eta(model: IntensityModel, theta: np.ndarray) -> Raster:
    """Cellwise modeled intensity exp(log eta) as a raster.

    Zero-effort cells evaluate to 0; cells with missing covariates to NaN.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_parameters,):
        raise ValueError(f"theta must have {model.n_parameters} entries, got {theta.shape}")
    grid = model.grid
    n = grid.ncells
    cols = []
    if model.intercept:
        cols.append(np.ones(n))
    if model.env is not None:
        cols.append(model.env.matrix())
    A = np.column_stack(cols) if cols else np.zeros((n, 0))
    W1 = model.detection.matrix() if model.detection is not None else np.zeros((n, 0))
    W2 = model.effort.matrix() if model.effort is not None else np.zeros((n, 0))
    off = model.log_effort_offset.flat if model.log_effort_offset is not None else np.zeros(n)
    p_env = A.shape[1]
    b = theta[:p_env]
    g1 = theta[p_env : p_env + W1.shape[1]]
    g2 = theta[p_env + W1.shape[1] :]
    le = np.asarray(off, dtype=float).copy()
    if p_env:
        le += A @ b
    if W1.shape[1]:
        le += -np.logaddexp(0.0, -(W1 @ g1))
    if W2.shape[1]:
        le += W2 @ g2
    with np.errstate(over="ignore"):
        vals = np.exp(le)
    return Raster(grid, vals.reshape(grid.ny, grid.nx))


def _checked_design(model: IntensityModel, data: LikelihoodData, kind: str) -> _Design:
    if data.kind != kind:
        raise ValueError(f"expected {kind} data, got {data.kind}")
    return _Design(model, data)


def riemann_loglik(model: IntensityModel, theta: np.ndarray, data: LikelihoodData) -> float:
    """Point-pattern log likelihood under the Riemann approximation."""
    d = _checked_design(model, data, "points")
    return d.loglik_grad(np.asarray(theta, dtype=float))[0]


def count_loglik(model: IntensityModel, theta: np.ndarray, data: LikelihoodData) -> float:
    """Per-cell Poisson count log likelihood."""
    d = _checked_design(model, data, "counts")
    return d.loglik_grad(np.asarray(theta, dtype=float))[0]


def presence_loglik(model: IntensityModel, theta: np.ndarray, data: LikelihoodData) -> float:
    """Per-cell Bernoulli presence log likelihood."""
    d = _checked_design(model, data, "presence")
    return d.loglik_grad(np.asarray(theta, dtype=float))[0]


def loglik_gradient(model: IntensityModel, theta: np.ndarray, data: LikelihoodData) -> np.ndarray:
    """Analytic gradient of the data's log likelihood in theta."""
    d = _Design(model, data)
    return d.loglik_grad(np.asarray(theta, dtype=float))[1]


@dataclass
class JointComponent:
    """One (model, data) pair of a joint fit.

    Coefficients are shared across components by qualified name: two
    components using the same name in the same block namespace estimate
    one common coefficient. Rename (e.g. intercepts) to keep them apart.
    """

    model: IntensityModel
    data: LikelihoodData
    rename: dict[str, str] = field(default_factory=dict)

    def qualified_names(self) -> list[str]:
        return [self.rename.get(n, n) for n in self.model.parameter_names()]


def _joint_maps(components: Sequence[JointComponent]):
    names: list[str] = []
    maps = []
    for comp in components:
        local = comp.qualified_names()
        if len(set(local)) != len(local):
            raise ValueError(f"duplicate parameter names within a component: {local}")
        idx = []
        for nm in local:
            if nm not in names:
                names.append(nm)
            idx.append(names.index(nm))
        maps.append(np.asarray(idx, dtype=int))
    return names, maps


def joint_loglik(components: Sequence[JointComponent], theta: np.ndarray) -> float:
    """Sum of component log likelihoods under shared coefficients."""
    if not components:
        raise ValueError("no components")
    names, maps = _joint_maps(components)
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (len(names),):
        raise ValueError(f"theta must have {len(names)} entries ({names})")
    total = 0.0
    for comp, m in zip(components, maps):
        d = _Design(comp.model, comp.data)
        total += d.loglik_grad(theta[m])[0]
    return float(total)


def _fd_hessian(grad_fn, x: np.ndarray, rel: float = 1e-6) -> np.ndarray:
    p = len(x)
    H = np.zeros((p, p))
    for k in range(p):
        h = rel * max(1.0, abs(float(x[k])))
        e = np.zeros(p)
        e[k] = h
        H[:, k] = (grad_fn(x + e) - grad_fn(x - e)) / (2.0 * h)
    return 0.5 * (H + H.T)


def _covariance_from_info(info: np.ndarray) -> tuple[np.ndarray, bool]:
    """Invert the observed information; flag rank deficiency.

    Eigenvalues at or below rcond * max are treated as zero, so the
    returned matrix is always symmetric positive semidefinite.
    """
    if info.size == 0:
        return np.zeros((0, 0)), False
    w, V = np.linalg.eigh(info)
    wmax = float(np.max(w)) if len(w) else 0.0
    cut = max(wmax, 0.0) * _RCOND
    good = w > cut
    singular = not bool(np.all(good)) or wmax <= 0.0
    inv_w = np.where(good, 1.0 / np.where(good, w, 1.0), 0.0)
    cov = (V * inv_w) @ V.T
    return 0.5 * (cov + cov.T), singular


def fit_joint(
    components: Sequence[JointComponent],
    gtol: float = 1e-8,
    maxiter: int = 500,
    start: np.ndarray | None = None,
) -> FitResult:
    """Quasi-Newton maximum likelihood over shared coefficients.

    Starts from zero (unless ``start`` is given) and stops when the
    gradient max-norm falls below ``gtol`` or after ``maxiter``
    iterations. The coefficient covariance is the inverse observed
    information (finite differences of the analytic gradient).
    """
    if not components:
        raise ValueError("no components")
    names, maps = _joint_maps(components)
    designs = [_Design(c.model, c.data) for c in components]
    p = len(names)

    def negll_grad(theta: np.ndarray):
        ll = 0.0
        g = np.zeros(p)
        for d, m in zip(designs, maps):
            li, gi = d.loglik_grad(theta[m])
            if not np.isfinite(li):
                return np.inf, np.zeros(p)
            ll += li
            np.add.at(g, m, gi)
        return -ll, -g

    x0 = np.zeros(p) if start is None else np.asarray(start, dtype=float).copy()
    if x0.shape != (p,):
        raise ValueError(f"start must have {p} entries")
    res = minimize(
        negll_grad,
        x0,
        jac=True,
        method="BFGS",
        options={"gtol": gtol, "maxiter": maxiter, "norm": np.inf},
    )
    theta_hat = res.x
    nll, ngrad = negll_grad(theta_hat)
    gmax = float(np.max(np.abs(ngrad))) if p else 0.0

    def grad_only(theta: np.ndarray) -> np.ndarray:
        return -negll_grad(theta)[1]

    H = _fd_hessian(grad_only, theta_hat)
    # Line searches can stall on rounding noise just short of gtol; Newton
    # steps with the observed information finish the climb. Only engage when
    # the iteration budget was not the reason the ascent stopped.
    polish = 0
    while np.isfinite(nll) and gmax >= gtol and res.nit < maxiter and polish < 8:
        try:
            step = np.linalg.solve(H, -ngrad)
        except np.linalg.LinAlgError:
            break
        nll_c, ngrad_c = negll_grad(theta_hat - step)
        gmax_c = float(np.max(np.abs(ngrad_c)))
        if not np.isfinite(nll_c) or gmax_c >= gmax:
            break
        theta_hat = theta_hat - step
        nll, ngrad, gmax = nll_c, ngrad_c, gmax_c
        H = _fd_hessian(grad_only, theta_hat)
        polish += 1

    converged = bool(np.isfinite(nll)) and gmax < gtol
    cov, singular = _covariance_from_info(-H)
    return FitResult(
        names=names,
        theta=theta_hat,
        loglik=float(-nll),
        converged=converged,
        iterations=int(res.nit) + polish,
        covariance=cov,
        singular_information=singular,
        gradient_max_norm=gmax,
    )


def fit_mle(
    model: IntensityModel,
    data: LikelihoodData,
    gtol: float = 1e-8,
    maxiter: int = 500,
    start: np.ndarray | None = None,
) -> FitResult:
    """Single-component maximum likelihood; see fit_joint."""
    return fit_joint([JointComponent(model, data)], gtol=gtol, maxiter=maxiter, start=start)


def predict_intensity(
    model: IntensityModel,
    theta: np.ndarray,
    fix_detection: float | Sequence[float] = 0.0,
    fix_effort: float | Sequence[float] = 0.0,
) -> Raster:
    """Environment-driven intensity with nuisance components pinned.

    Detection and effort covariates are held at the given constants
    (scalar broadcast or one value per covariate) and the effort offset
    is dropped, so spatial variation comes from the environment block
    alone. This is the estimate of the animal's own intensity surface.
    """
    theta = np.asarray(theta, dtype=float)
    if theta.shape != (model.n_parameters,):
        raise ValueError(f"theta must have {model.n_parameters} entries")
    grid = model.grid
    n = grid.ncells
    cols = []
    if model.intercept:
        cols.append(np.ones(n))
    if model.env is not None:
        cols.append(model.env.matrix())
    A = np.column_stack(cols) if cols else np.zeros((n, 0))
    p_env = A.shape[1]
    p_det = len(model.detection.names) if model.detection is not None else 0
    b = theta[:p_env]
    g1 = theta[p_env : p_env + p_det]
    g2 = theta[p_env + p_det :]
    le = A @ b if p_env else np.zeros(n)
    if p_det:
        c1 = np.broadcast_to(np.asarray(fix_detection, dtype=float), (p_det,))
        le = le - np.logaddexp(0.0, -float(c1 @ g1))
    if g2.size:
        c2 = np.broadcast_to(np.asarray(fix_effort, dtype=float), (g2.size,))
        le = le + float(c2 @ g2)
    return Raster(grid, np.exp(le).reshape(grid.ny, grid.nx))
