"""Regression estimators for the relative-outflow and driver-behavior analyses.

Three estimators cover every specification in the pipeline:

* ``ols_fe`` -- least squares with arbitrary categorical fixed effects,
  absorbed either by iterated within-group demeaning or by explicit dummy
  columns (the two paths agree and are cross-checked in the tests);
* ``logit_mle`` -- binary logit by Newton-Raphson with step halving;
* ``nls_kink`` -- kinked least squares with a satiation size ``a_max``,
  estimated by concentration: for a fixed kink the model is linear, so the
  kink is profiled over a log-spaced grid and refined by golden section.

Standard errors are classical throughout (no clustering).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Mapping, Optional, Sequence

import numpy as np
import scipy.linalg

from .errors import (
    ConvergenceError,
    DomainError,
    EstimationError,
    RankDeficientError,
    SeparationError,
    UnidentifiedKinkError,
)

__all__ = [
    "PanelRow",
    "TurnoffObservation",
    "FitResult",
    "ols_fe",
    "logit_mle",
    "nls_kink",
]

DEMEAN_TOL = 1e-10
DEMEAN_MAX_SWEEPS = 10_000
DUMMY_GROUP_LIMIT = 1000
LOGIT_GRAD_TOL = 1e-8
SEPARATION_BOUND = 30.0


@dataclass(frozen=True)
class PanelRow:
    """One estimation row: named numeric columns plus categorical keys."""

    values: Mapping[str, float]
    fe_keys: Mapping[str, str] = field(default_factory=dict)

    def value(self, name: str) -> float:
        try:
            v = float(self.values[name])
        except KeyError:
            raise DomainError(f"row is missing numeric column {name!r}") from None
        if not math.isfinite(v):
            raise DomainError(f"column {name!r} has non-finite value {v!r}")
        return v

    def key(self, name: str) -> str:
        try:
            return str(self.fe_keys[name])
        except KeyError:
            raise DomainError(f"row is missing fixed-effect key {name!r}") from None


@dataclass(frozen=True)
class TurnoffObservation:
    """A post-ride app-turnoff decision with the driver's expected conditions."""

    turned_off: int
    surge: float
    expected_idle: float
    expected_pickup: float
    fe_keys: Mapping[str, str] = field(default_factory=dict)

    def __post_init__(self):
        if self.turned_off not in (0, 1):
            raise DomainError("turned_off must be 0 or 1")
        for name in ("surge", "expected_idle", "expected_pickup"):
            if not math.isfinite(getattr(self, name)):
                raise DomainError(f"{name} must be finite")

    def as_row(self) -> PanelRow:
        return PanelRow(
            values={
                "turned_off": float(self.turned_off),
                "surge": self.surge,
                "idle": self.expected_idle,
                "pickup": self.expected_pickup,
            },
            fe_keys=dict(self.fe_keys),
        )


@dataclass(frozen=True)
class FitResult:
    """Estimates with classical standard errors and fit diagnostics."""

    coefficients: dict[str, float]
    std_errors: dict[str, float]
    residual_variance: float
    r_squared: float
    n_obs: int
    dof: int
    method: str
    converged: bool = True
    iterations: int = 0
    gradient_norm: float = 0.0
    log_likelihood: Optional[float] = None
    aic: Optional[float] = None
    a_max: Optional[float] = None
    profile: Optional[tuple[tuple[float, float], ...]] = None

    def t_stat(self, name: str) -> float:
        se = self.std_errors[name]
        return self.coefficients[name] / se if se > 0 else math.inf


def _fe_labels(rows: Sequence[PanelRow], spec: str) -> list[str]:
    """Category label per row for a fixed-effect spec ('key' or 'a:b' interaction)."""
    parts = spec.split(":")
    return ["|".join(f"{p}={row.key(p)}" for p in parts) for row in rows]


def _design(
    rows: Sequence[PanelRow], regressors: Sequence[str]
) -> tuple[np.ndarray, list[str]]:
    X = np.array([[row.value(name) for name in regressors] for row in rows], dtype=float)
    return X, list(regressors)


def _dummy_columns(
    rows: Sequence[PanelRow], fe: Sequence[str]
) -> tuple[np.ndarray, list[str]]:
    """Dummy matrix: full set for the first dimension, drop-first for the rest."""
    cols: list[np.ndarray] = []
    names: list[str] = []
    for d, spec in enumerate(fe):
        labels = _fe_labels(rows, spec)
        cats = sorted(set(labels))
        keep = cats if d == 0 else cats[1:]
        for cat in keep:
            cols.append(np.array([1.0 if lbl == cat else 0.0 for lbl in labels]))
            names.append(f"{spec}[{cat}]")
    if not cols:
        return np.empty((len(rows), 0)), []
    return np.column_stack(cols), names


def _check_rank(X: np.ndarray, names: Sequence[str]) -> None:
    if X.shape[1] == 0:
        return
    _, r, piv = scipy.linalg.qr(X, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = max(X.shape) * np.finfo(float).eps * (diag[0] if diag.size else 0.0)
    rank = int(np.sum(diag > tol))
    if rank < X.shape[1]:
        offending = [names[j] for j in piv[rank:]]
        raise RankDeficientError(sorted(offending))


def _demean(
    y: np.ndarray, X: np.ndarray, groups: list[np.ndarray]
) -> tuple[np.ndarray, np.ndarray, int]:
    """Alternating within-group demeaning over several fixed-effect dimensions."""
    y = y.copy()
    X = X.copy()
    index_sets = []
    for g in groups:
        cats, inv = np.unique(g, return_inverse=True)
        index_sets.append((len(cats), inv))
    scale = max(1.0, float(np.max(np.abs(y))) if y.size else 1.0)
    for sweep in range(1, DEMEAN_MAX_SWEEPS + 1):
        largest = 0.0
        for n_cats, inv in index_sets:
            counts = np.bincount(inv, minlength=n_cats).astype(float)
            ym = np.bincount(inv, weights=y, minlength=n_cats) / counts
            y -= ym[inv]
            largest = max(largest, float(np.max(np.abs(ym))) if ym.size else 0.0)
            for j in range(X.shape[1]):
                xm = np.bincount(inv, weights=X[:, j], minlength=n_cats) / counts
                X[:, j] -= xm[inv]
                largest = max(largest, float(np.max(np.abs(xm))) if xm.size else 0.0)
        if largest <= DEMEAN_TOL * scale:
            return y, X, sweep
    raise ConvergenceError(
        "fixed-effect demeaning did not converge",
        {"sweeps": DEMEAN_MAX_SWEEPS, "residual": largest},
    )


def ols_fe(
    rows: Sequence[PanelRow],
    response: str,
    regressors: Sequence[str],
    fe: Sequence[str] = (),
    method: str = "auto",
) -> FitResult:
    """OLS with fixed effects absorbed by demeaning or explicit dummies.

    ``fe`` entries are fixed-effect keys, with ``"a:b"`` denoting an
    interacted dimension.  Without fixed effects a constant is included.
    ``method`` is ``"auto"`` (dummies when the total dummy count is at most
    1000, demeaning otherwise), ``"demean"``, or ``"dummies"``.
    """
    if not rows:
        raise DomainError("no rows")
    y = np.array([row.value(response) for row in rows], dtype=float)
    X, names = _design(rows, regressors)
    n = len(rows)

    if not fe:
        X = np.column_stack([X, np.ones(n)]) if X.size else np.ones((n, 1))
        names = names + ["const"]
        return _ols_plain(y, X, names, n, method="dummies")

    groups = [np.array(_fe_labels(rows, spec)) for spec in fe]
    n_dummy_cols = sum(
        len(set(g)) - (0 if d == 0 else 1) for d, g in enumerate(groups)
    )
    if method == "auto":
        method = "dummies" if n_dummy_cols <= DUMMY_GROUP_LIMIT else "demean"

    if method == "dummies":
        D, dnames = _dummy_columns(rows, fe)
        Xd = np.column_stack([X, D]) if X.size else D
        fit = _ols_plain(y, Xd, names + dnames, n, method="dummies")
        slopes = {k: fit.coefficients[k] for k in names}
        ses = {k: fit.std_errors[k] for k in names}
        return FitResult(
            coefficients=slopes,
            std_errors=ses,
            residual_variance=fit.residual_variance,
            r_squared=fit.r_squared,
            n_obs=n,
            dof=fit.dof,
            method="dummies",
            iterations=fit.iterations,
        )

    if method != "demean":
        raise DomainError(f"unknown method {method!r}")
    y_w, X_w, sweeps = _demean(y, X, groups)
    absorbed = sum(len(set(g)) for g in groups) - (len(groups) - 1)
    dof = n - len(names) - absorbed
    if dof <= 0:
        raise DomainError(f"not enough rows: dof = {dof}")
    _check_rank(X_w, names)
    beta, _, _, _ = np.linalg.lstsq(X_w, y_w, rcond=None)
    resid = y_w - X_w @ beta
    ssr = float(resid @ resid)
    sigma2 = ssr / dof
    xtx_inv = np.linalg.inv(X_w.T @ X_w)
    ses = np.sqrt(np.clip(sigma2 * np.diag(xtx_inv), 0.0, None))
    sst = float(np.sum((y - y.mean()) ** 2))
    return FitResult(
        coefficients=dict(zip(names, beta.tolist())),
        std_errors=dict(zip(names, ses.tolist())),
        residual_variance=sigma2,
        r_squared=1.0 - ssr / sst if sst > 0 else math.nan,
        n_obs=n,
        dof=dof,
        method="demean",
        iterations=sweeps,
    )


def _ols_plain(
    y: np.ndarray, X: np.ndarray, names: list[str], n: int, method: str
) -> FitResult:
    dof = n - X.shape[1]
    if dof <= 0:
        raise DomainError(f"not enough rows: dof = {dof}")
    _check_rank(X, names)
    beta, _, _, _ = np.linalg.lstsq(X, y, rcond=None)
    resid = y - X @ beta
    ssr = float(resid @ resid)
    sigma2 = ssr / dof
    xtx_inv = np.linalg.inv(X.T @ X)
    ses = np.sqrt(np.clip(sigma2 * np.diag(xtx_inv), 0.0, None))
    sst = float(np.sum((y - y.mean()) ** 2))
    return FitResult(
        coefficients=dict(zip(names, beta.tolist())),
        std_errors=dict(zip(names, ses.tolist())),
        residual_variance=sigma2,
        r_squared=1.0 - ssr / sst if sst > 0 else math.nan,
        n_obs=n,
        dof=dof,
        method=method,
    )


def _log_likelihood(y: np.ndarray, eta: np.ndarray) -> float:
    # log sigma(eta) = -log(1 + exp(-eta)), computed stably for both signs
    return float(np.sum(y * eta - np.logaddexp(0.0, eta)))


def logit_mle(
    rows: Sequence[PanelRow],
    response: str,
    regressors: Sequence[str],
    fe: Sequence[str] = (),
    max_iterations: int = 100,
) -> FitResult:
    """Binary logit by Newton-Raphson with step-halving line search.

    Fixed effects enter as dummy columns (full set for the first dimension,
    drop-first afterwards); without fixed effects a constant is included.
    Standard errors come from the observed information at the optimum.
    Raises :class:`SeparationError` when a standardized coefficient runs
    past 30 (numerically saturated probabilities).
    """
    if not rows:
        raise DomainError("no rows")
    y = np.array([row.value(response) for row in rows], dtype=float)
    if not np.all((y == 0.0) | (y == 1.0)):
        raise DomainError("logit response must be binary 0/1")
    if y.min() == y.max():
        raise SeparationError("response is constant")
    X, names = _design(rows, regressors)
    if fe:
        D, dnames = _dummy_columns(rows, fe)
        X = np.column_stack([X, D]) if X.size else D
        names = names + dnames
    else:
        X = np.column_stack([X, np.ones(len(rows))]) if X.size else np.ones((len(rows), 1))
        names = names + ["const"]
    _check_rank(X, names)
    n, p = X.shape
    scales = np.maximum(X.std(axis=0), 1e-12)

    beta = np.zeros(p)
    eta = X @ beta
    ll = _log_likelihood(y, eta)
    grad_norm = math.inf
    for iteration in range(1, max_iterations + 1):
        prob = 1.0 / (1.0 + np.exp(-eta))
        grad = X.T @ (y - prob)
        grad_norm = float(np.max(np.abs(grad)))
        if grad_norm <= LOGIT_GRAD_TOL:
            break
        w = prob * (1.0 - prob)
        hess = X.T @ (X * w[:, None])
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise EstimationError("singular observed information") from None
        scale = 1.0
        for _ in range(40):
            cand = beta + scale * step
            cand_ll = _log_likelihood(y, X @ cand)
            if cand_ll >= ll:
                break
            scale *= 0.5
        else:
            raise ConvergenceError("logit line search stalled", {"iteration": iteration})
        beta, ll = cand, cand_ll
        eta = X @ beta
        if np.max(np.abs(beta) * scales) > SEPARATION_BOUND:
            raise SeparationError(
                "coefficient diverged: the data are (quasi-)separable"
            )
    else:
        raise ConvergenceError(
            "logit did not converge", {"gradient_norm": grad_norm, "iterations": max_iterations}
        )

    prob = 1.0 / (1.0 + np.exp(-eta))
    w = prob * (1.0 - prob)
    hess = X.T @ (X * w[:, None])
    try:
        cov = np.linalg.inv(hess)
    except np.linalg.LinAlgError:
        raise EstimationError("singular observed information at the optimum") from None
    ses = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    keep = list(regressors) if fe else names
    return FitResult(
        coefficients={k: float(b) for k, b in zip(names, beta) if k in keep},
        std_errors={k: float(s) for k, s in zip(names, ses) if k in keep},
        residual_variance=math.nan,
        r_squared=math.nan,
        n_obs=n,
        dof=n - p,
        method="logit-newton",
        converged=True,
        iterations=iteration,
        gradient_norm=grad_norm,
        log_likelihood=ll,
        aic=2.0 * p - 2.0 * ll,
    )


def _kink_design(
    size: np.ndarray, density: np.ndarray, a_max: float, form: str
) -> np.ndarray:
    clipped = np.minimum(size, a_max)
    z = np.log(clipped) if form == "log" else clipped
    return np.column_stack([np.ones(size.shape[0]), density, z, z * density])


def nls_kink(
    rows: Sequence[PanelRow],
    form: str = "log",
    response: str = "ro",
    density: str = "log_pop_density",
    size: str = "size",
) -> FitResult:
    """Kinked least squares: response on density, h(min(a_max, size)), and
    their interaction, with ``h = log`` or identity.

    Concentrated estimation: for a fixed kink the model is linear in the four
    slope parameters, so the residual sum of squares is profiled over a
    200-point log-spaced kink grid spanning the observed sizes and the
    minimum refined by golden section to relative width 1e-6.  Standard
    errors come from the numerical Jacobian at the joint optimum.
    """
    if form not in ("log", "linear"):
        raise DomainError(f"form must be 'log' or 'linear', got {form!r}")
    if len(rows) < 6:
        raise DomainError("need at least 6 rows to fit 5 parameters")
    y = np.array([row.value(response) for row in rows], dtype=float)
    S = np.array([row.value(size) for row in rows], dtype=float)
    d = np.array([row.value(density) for row in rows], dtype=float)
    if np.any(S <= 0.0):
        raise DomainError("sizes must be > 0")

    s_min, s_max = float(S.min()), float(S.max())
    if s_max <= s_min:
        raise UnidentifiedKinkError("all sizes identical; kink location meaningless")

    def ssr_at(a: float) -> float:
        Z = _kink_design(S, d, a, form)
        beta, _, _, _ = np.linalg.lstsq(Z, y, rcond=None)
        r = y - Z @ beta
        return float(r @ r)

    grid = np.geomspace(s_min, s_max, 200)
    profile = [(float(a), ssr_at(float(a))) for a in grid]
    ssrs = np.array([v for _, v in profile])
    if float(ssrs.max() - ssrs.min()) <= 1e-12 * max(1.0, float(ssrs.max())):
        raise UnidentifiedKinkError("flat profile objective: kink is not identified")
    k = int(np.argmin(ssrs))

    lo = float(grid[max(k - 1, 0)])
    hi = float(grid[min(k + 1, len(grid) - 1)])
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    x1 = hi - invphi * (hi - lo)
    x2 = lo + invphi * (hi - lo)
    f1, f2 = ssr_at(x1), ssr_at(x2)
    while (hi - lo) / lo > 1e-6:
        if f1 > f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + invphi * (hi - lo)
            f2 = ssr_at(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - invphi * (hi - lo)
            f1 = ssr_at(x1)
    a_hat = 0.5 * (lo + hi)
    # A kink at either end of the observed size range is vacuous (the clip
    # never binds, or always binds); the tolerance exceeds the refinement
    # resolution so boundary convergence is reliably caught.
    if a_hat >= s_max * (1.0 - 1e-5) or a_hat <= s_min * (1.0 + 1e-5):
        raise UnidentifiedKinkError(
            f"kink estimate {a_hat:.6g} lies on the boundary of observed sizes"
        )

    Z = _kink_design(S, d, a_hat, form)
    beta, _, _, _ = np.linalg.lstsq(Z, y, rcond=None)
    resid = y - Z @ beta
    ssr = float(resid @ resid)
    n = len(rows)
    dof = n - 5

    def residuals(theta: np.ndarray) -> np.ndarray:
        a = theta[4]
        Zt = _kink_design(S, d, a, form)
        return y - Zt @ theta[:4]

    theta = np.concatenate([beta, [a_hat]])
    J = np.empty((n, 5))
    for j in range(5):
        h = max(1e-7 * abs(theta[j]), 1e-9)
        up = theta.copy()
        dn = theta.copy()
        up[j] += h
        dn[j] -= h
        J[:, j] = (residuals(up) - residuals(dn)) / (2.0 * h)
    sigma2 = ssr / dof
    try:
        cov = sigma2 * np.linalg.inv(J.T @ J)
    except np.linalg.LinAlgError:
        raise UnidentifiedKinkError("singular Jacobian at the kink optimum") from None
    ses = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    names = ["const", density, "size_term", "size_density_interaction", "a_max"]
    sst = float(np.sum((y - y.mean()) ** 2))
    return FitResult(
        coefficients=dict(zip(names, np.concatenate([beta, [a_hat]]).tolist())),
        std_errors=dict(zip(names, ses.tolist())),
        residual_variance=sigma2,
        r_squared=1.0 - ssr / sst if sst > 0 else math.nan,
        n_obs=n,
        dof=dof,
        method=f"nls-kink-{form}",
        a_max=a_hat,
        profile=tuple(profile),
    )
