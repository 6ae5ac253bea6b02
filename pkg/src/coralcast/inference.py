"""Weighted Beta regression on a latent Gaussian field.

The observation model: each adjusted cell observation y in (0,1) is a Beta
draw with mean mu and common precision phi, a = mu*phi, b = (1-mu)*phi, and
its log density enters the posterior multiplied by the observation's
normalized weight.  The logit of mu is

    eta = X beta + A u + v_t + eps

with fixed effects beta, the mesh field u under the SPDE precision, a
random-walk year effect v constrained to sum to zero, and an independent
nugget eps per observation.

Inference is empirical-Bayes Laplace: for fixed hyperparameters
theta = (log phi, log rw1 precision, log nugget precision, log kappa,
log tau) the latent mode is found by damped Newton iteration, the marginal
posterior of theta is approximated by the Laplace determinant correction,
and a Nelder-Mead search maximizes it.  The model is reported as a Gaussian
approximation centred at the latent mode with the negative Hessian as
precision.

The sum-to-zero constraint is enforced by optimizing the year effect in the
reduced coordinates z with v = B z, where B spans the zero-sum subspace;
the constraint therefore holds to machine precision.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
import scipy.optimize
import scipy.sparse as sp
from scipy.special import expit, gammaln, logit, polygamma, psi

from .ingestion import DESIGN_COLUMNS
from .linalg import CholeskySolver, NotPositiveDefiniteError
from .spde import (Mesh, assemble_fem, build_mesh, project, rw1_precision,
                   spde_precision, sum_to_zero_basis, SpdeParams)

__all__ = [
    "ModelSpec",
    "HyperParams",
    "LatentState",
    "ModelData",
    "FitResult",
    "Summaries",
    "NonFiniteError",
    "FitError",
    "beta_loglik",
    "linear_predictor",
    "joint_log_posterior",
    "optimize_latent",
    "laplace_log_marginal",
    "fit",
    "fit_at",
    "fitted_mu_draws",
    "posterior_summaries",
    "build_model_data",
    "write_fit_report",
]

# Hyperparameters proposed outside this log-scale box score -inf.
_THETA_BOX = 40.0

_RIDGES = (0.0, 1e-8, 1e-7, 1e-6, 1e-5, 1e-4, 1e-3, 1e-2)


class NonFiniteError(ValueError):
    """A non-finite intermediate, tagged with the offending component."""


class FitError(RuntimeError):
    """Latent or hyperparameter optimization failed to converge."""


@dataclass(frozen=True)
class ModelSpec:
    """Priors, initial hyperparameters, and optimizer settings."""

    coef_names: tuple[str, ...] = DESIGN_COLUMNS
    beta_precision: float = 0.001
    phi_prior: tuple[float, float] = (1.0, 0.1)        # gamma shape, rate
    rw1_prior: tuple[float, float] = (1.0, 0.00005)
    nugget_prior: tuple[float, float] = (1.0, 0.00005)
    spde_prior_sd: float = 10.0
    spde_prior_mean_kappa: float = -0.872
    spde_prior_mean_tau: float = -0.394
    init_log_phi: float = 3.0
    init_log_rw1_prec: float = 1.5
    init_log_nugget_prec: float = 3.0
    init_log_kappa: float = -0.872
    init_log_tau: float = -0.394
    newton_tol: float = 1e-8
    newton_max_iter: int = 100
    max_fn_evals: int = 500
    simplex_xatol: float = 0.05
    simplex_fatol: float = 0.01
    simplex_step: float = 0.5

    def __post_init__(self):
        for name in ("beta_precision",):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        for name in ("phi_prior", "rw1_prior", "nugget_prior"):
            shape, rate = getattr(self, name)
            if shape <= 0 or rate <= 0:
                raise ValueError(f"{name} must have positive parameters")

    def initial_theta(self) -> "HyperParams":
        return HyperParams(
            log_phi=self.init_log_phi,
            log_rw1_prec=self.init_log_rw1_prec,
            log_nugget_prec=self.init_log_nugget_prec,
            log_kappa=self.init_log_kappa,
            log_tau=self.init_log_tau,
        )


@dataclass(frozen=True)
class HyperParams:
    log_phi: float
    log_rw1_prec: float
    log_nugget_prec: float
    log_kappa: float
    log_tau: float

    def __post_init__(self):
        if not all(map(math.isfinite, self.to_array())):
            raise ValueError("hyperparameters must be finite")

    def to_array(self) -> np.ndarray:
        return np.array([self.log_phi, self.log_rw1_prec,
                         self.log_nugget_prec, self.log_kappa, self.log_tau])

    @classmethod
    def from_array(cls, arr) -> "HyperParams":
        return cls(*(float(v) for v in arr))

    @property
    def phi(self) -> float:
        return math.exp(self.log_phi)


@dataclass(frozen=True)
class LatentState:
    """User-facing view of the latent vector (year effect on the full scale)."""

    beta: np.ndarray
    u: np.ndarray
    v: np.ndarray
    eps: np.ndarray


@dataclass(frozen=True)
class ModelData:
    """Everything the likelihood needs, one row per (cell, year, source)."""

    y: np.ndarray
    w: np.ndarray
    x: np.ndarray
    coef_names: tuple[str, ...]
    a: sp.csr_matrix
    years: tuple[int, ...]
    year_index: np.ndarray
    mesh: Mesh
    sites: np.ndarray
    sources: np.ndarray | None = None
    cells: tuple | None = None

    def __post_init__(self):
        n = self.y.shape[0]
        if np.any(self.y <= 0) or np.any(self.y >= 1):
            raise ValueError("responses must lie strictly inside (0, 1)")
        if np.any(self.w < 0):
            raise ValueError("weights must be non-negative")
        for name, arr, rows in (("w", self.w, n), ("x", self.x, n),
                                ("year_index", self.year_index, n)):
            if arr.shape[0] != rows:
                raise ValueError(f"{name} must have {rows} rows")
        if self.a.shape[0] != n:
            raise ValueError("projection matrix row count mismatch")

    @property
    def n(self) -> int:
        return self.y.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]

    @property
    def n_years(self) -> int:
        return len(self.years)

    def subset(self, idx) -> "ModelData":
        idx = np.asarray(idx)
        return replace(
            self,
            y=self.y[idx],
            w=self.w[idx],
            x=self.x[idx],
            a=self.a[idx],
            year_index=self.year_index[idx],
            sites=self.sites[idx],
            sources=None if self.sources is None else self.sources[idx],
            cells=None if self.cells is None else
            tuple(self.cells[i] for i in np.atleast_1d(idx)),
        )

    def with_weights(self, w: np.ndarray) -> "ModelData":
        return replace(self, w=np.asarray(w, dtype=float))


def build_model_data(
    y,
    w,
    x,
    coef_names,
    sites,
    years_per_obs,
    mesh: Mesh | None = None,
    mesh_resolution: float = 0.25,
    mesh_extension: float = 0.5,
    sources=None,
    cells=None,
) -> ModelData:
    """Assemble a ModelData, building the mesh and projection if needed."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    sites = np.asarray(sites, dtype=float)
    w = np.ones_like(y) if w is None else np.asarray(w, dtype=float)
    years_per_obs = np.asarray(years_per_obs, dtype=int)
    years = tuple(sorted(set(int(t) for t in years_per_obs)))
    if len(years) < 2:
        raise ValueError("the year random walk needs at least two years")
    year_index = np.searchsorted(np.array(years), years_per_obs)
    if mesh is None:
        mesh = build_mesh(sites, extension=mesh_extension,
                          resolution=mesh_resolution)
    a = project(mesh, sites).a
    return ModelData(
        y=y, w=w, x=x, coef_names=tuple(coef_names), a=a, years=years,
        year_index=year_index, mesh=mesh, sites=sites,
        sources=None if sources is None else np.asarray(sources),
        cells=None if cells is None else tuple(cells),
    )


# ---------------------------------------------------------------------------
# likelihoods
# ---------------------------------------------------------------------------

_MU_LO = 1e-12
_MU_HI = 1.0 - 1e-12


def beta_loglik(y, mu, phi, w):
    """Weighted Beta log density in the mean/precision parameterization.

    a = mu*phi, b = (1-mu)*phi; the weight multiplies the whole log density,
    so contributions are linear in the weight and a zero weight annihilates
    the term.
    """
    y = np.asarray(y, dtype=float)
    mu = np.asarray(mu, dtype=float)
    w = np.asarray(w, dtype=float)
    if np.any(y <= 0) or np.any(y >= 1):
        raise ValueError("y must lie strictly inside (0, 1)")
    if np.any(mu <= 0) or np.any(mu >= 1):
        raise ValueError("mu must lie strictly inside (0, 1)")
    if np.any(np.asarray(phi) <= 0):
        raise ValueError("phi must be positive")
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    a = mu * phi
    b = (1.0 - mu) * phi
    core = (gammaln(phi) - gammaln(a) - gammaln(b)
            + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y))
    out = w * core
    return float(out) if np.ndim(out) == 0 else out


def linear_predictor(x_row, beta, proj_u, v_t, eps):
    """eta = x.beta + projected field + year effect + nugget; mu = expit(eta)."""
    x_row = np.asarray(x_row, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if x_row.shape[-1] != beta.shape[0]:
        raise ValueError("design row and coefficient dimensions differ")
    eta = x_row @ beta + proj_u + v_t + eps
    return eta, expit(eta)


class BetaLikelihood:
    """Value and eta-derivatives of the weighted Beta log likelihood.

    Also reports the magnitude of the cancelling terms inside the first
    derivative; the Newton solver uses it as the gradient's rounding floor.
    """

    def evaluate(self, y, eta, w, phi):
        mu = np.clip(expit(eta), _MU_LO, _MU_HI)
        a = mu * phi
        b = (1.0 - mu) * phi
        ystar = logit(y)
        core = (gammaln(phi) - gammaln(a) - gammaln(b)
                + (a - 1.0) * np.log(y) + (b - 1.0) * np.log1p(-y))
        m = mu * (1.0 - mu)
        psi_a = psi(a)
        psi_b = psi(b)
        resid = ystar - (psi_a - psi_b)
        d1 = phi * m * resid
        d2 = (phi * (1.0 - 2.0 * mu) * m * resid
              - phi * phi * m * m * (polygamma(1, a) + polygamma(1, b)))
        d1_scale = w * phi * m * (np.abs(ystar) + np.abs(psi_a)
                                  + np.abs(psi_b))
        return w * core, w * d1, w * d2, d1_scale


class GaussianLikelihood:
    """Gaussian stand-in with identity link; makes the Laplace step exact.

    Used by tests to compare the Laplace marginal against the closed-form
    conjugate answer.
    """

    def __init__(self, sigma: float):
        self.sigma = sigma

    def evaluate(self, y, eta, w, phi):
        r = y - eta
        s2 = self.sigma ** 2
        core = -0.5 * r * r / s2 - 0.5 * math.log(2.0 * math.pi * s2)
        d1 = r / s2
        d2 = np.full_like(eta, -1.0 / s2)
        d1_scale = w * (np.abs(y) + np.abs(eta)) / s2
        return w * core, w * d1, w * d2, d1_scale


# ---------------------------------------------------------------------------
# joint posterior machinery
# ---------------------------------------------------------------------------


def _loggamma_logpdf(theta: float, shape: float, rate: float) -> float:
    # density of log X when X ~ Gamma(shape, rate), Jacobian included
    return (shape * theta - rate * math.exp(theta)
            + shape * math.log(rate) - gammaln(shape))


def _normal_logpdf(theta: float, mean: float, sd: float) -> float:
    z = (theta - mean) / sd
    return -0.5 * z * z - math.log(sd) - 0.5 * math.log(2.0 * math.pi)


class _Objective:
    """Shared state for repeated joint-posterior evaluations on one dataset."""

    def __init__(self, data: ModelData, spec: ModelSpec, likelihood=None):
        self.data = data
        self.spec = spec
        self.likelihood = likelihood or BetaLikelihood()
        self.fem = assemble_fem(data.mesh)
        t = data.n_years
        self.b = sum_to_zero_basis(t)                       # t x (t-1)
        structure, _ = rw1_precision(data.years, 1.0)
        r = structure.r.toarray()
        self.k = self.b.T @ r @ self.b                      # (t-1) x (t-1)
        sign, self.logdet_k = np.linalg.slogdet(self.k)
        if sign <= 0:
            raise ValueError("reduced RW1 structure must be positive definite")
        n, p, m = data.n, data.p, self.fem.n_nodes
        self.n, self.p, self.m, self.t = n, p, m, t
        self.dim = p + m + (t - 1) + n
        self.sl_beta = slice(0, p)
        self.sl_u = slice(p, p + m)
        self.sl_z = slice(p + m, p + m + t - 1)
        self.sl_eps = slice(p + m + t - 1, self.dim)
        s = sp.csr_matrix(self.b[data.year_index, :])       # n x (t-1)
        self.m_mat = sp.hstack(
            [sp.csr_matrix(data.x), data.a, s, sp.eye(n, format="csr")],
            format="csr",
        )
        self._abs_mt = sp.csr_matrix(abs(self.m_mat.T))
        self._f_scale = 0.0
        self._g_scale = 1.0
        self._warm: np.ndarray | None = None

    # -- per-theta quantities ------------------------------------------------

    def context(self, theta: HyperParams) -> dict:
        spec, data = self.spec, self.data
        phi = math.exp(theta.log_phi)
        theta_v = math.exp(theta.log_rw1_prec)
        theta_e = math.exp(theta.log_nugget_prec)
        q = spde_precision(self.fem, SpdeParams(theta.log_kappa,
                                                theta.log_tau))
        logdet_q = CholeskySolver(q).logdet()
        p_mat = sp.block_diag(
            [sp.eye(self.p) * spec.beta_precision,
             q,
             sp.csc_matrix(theta_v * self.k),
             sp.eye(self.n) * theta_e],
            format="csc",
        )
        abs_p = sp.csc_matrix(abs(p_mat))
        prior_const = 0.5 * (
            self.p * math.log(spec.beta_precision)
            + logdet_q
            + (self.t - 1) * math.log(theta_v) + self.logdet_k
            + self.n * math.log(theta_e)
            - self.dim * math.log(2.0 * math.pi)
        )
        hyper = (
            _loggamma_logpdf(theta.log_phi, *spec.phi_prior)
            + _loggamma_logpdf(theta.log_rw1_prec, *spec.rw1_prior)
            + _loggamma_logpdf(theta.log_nugget_prec, *spec.nugget_prior)
            + _normal_logpdf(theta.log_kappa, spec.spde_prior_mean_kappa,
                             spec.spde_prior_sd)
            + _normal_logpdf(theta.log_tau, spec.spde_prior_mean_tau,
                             spec.spde_prior_sd)
        )
        return {"theta": theta, "phi": phi, "p_mat": p_mat,
                "abs_p": abs_p, "prior_const": prior_const,
                "hyper": hyper}

    # -- evaluations -----------------------------------------------------

    def value_grad(self, x: np.ndarray, ctx: dict, want_grad: bool = True):
        data = self.data
        eta = self.m_mat @ x
        lik, d1, d2, d1_scale = self.likelihood.evaluate(
            data.y, eta, data.w, ctx["phi"])
        lik_sum = float(np.sum(lik))
        if not math.isfinite(lik_sum):
            bad = int(np.flatnonzero(~np.isfinite(lik))[0])
            raise NonFiniteError(f"likelihood at observation {bad}")
        with np.errstate(over="ignore"):
            px = ctx["p_mat"] @ x
            quad = float(x @ px)
        if not math.isfinite(quad):
            raise NonFiniteError("latent Gaussian prior quadratic form")
        f = lik_sum - 0.5 * quad + ctx["prior_const"] + ctx["hyper"]
        # magnitude of the cancelling terms inside f: the resolution floor
        # for comparisons of f values (used by the Newton line search)
        self._f_scale = (float(np.sum(np.abs(lik))) + 0.5 * abs(quad)
                         + abs(ctx["prior_const"]) + abs(ctx["hyper"]))
        if not want_grad:
            return f, None, None
        grad = self.m_mat.T @ d1 - px
        # cancellation scale of the gradient components: its noise floor
        self._g_scale = float(np.max(self._abs_mt @ d1_scale
                                     + ctx["abs_p"] @ np.abs(x)))
        return f, grad, d2

    def neg_hessian(self, d2: np.ndarray, ctx: dict) -> sp.csc_matrix:
        w_mat = self.m_mat.T @ sp.diags(-d2) @ self.m_mat
        return (w_mat + ctx["p_mat"]).tocsc()

    def factor(self, h: sp.csc_matrix):
        """Cholesky with escalating ridge repair."""
        for ridge in _RIDGES:
            try:
                hr = h if ridge == 0 else (
                    h + sp.eye(self.dim, format="csc") * ridge)
                return CholeskySolver(hr), ridge
            except NotPositiveDefiniteError:
                continue
        raise FitError("negative Hessian is indefinite even after "
                       f"ridge repair up to {_RIDGES[-1]}")


def _pack(state: LatentState, obj: _Objective) -> np.ndarray:
    v = np.asarray(state.v, dtype=float)
    if abs(float(np.sum(v))) > 1e-8:
        raise ValueError("year effect must sum to zero")
    return np.concatenate([state.beta, state.u, v[:-1], state.eps])


def _unpack(x: np.ndarray, obj: _Objective) -> LatentState:
    z = x[obj.sl_z]
    return LatentState(
        beta=x[obj.sl_beta].copy(),
        u=x[obj.sl_u].copy(),
        v=obj.b @ z,
        eps=x[obj.sl_eps].copy(),
    )


def joint_log_posterior(latent, theta: HyperParams, data: ModelData,
                        spec: ModelSpec, likelihood=None) -> float:
    """Log posterior of the full latent vector at fixed hyperparameters.

    ``latent`` is either a LatentState or the packed coordinate vector
    (beta, u, z, eps).  Includes every normalizing constant that depends on
    theta, plus the hyperpriors, so Laplace values are comparable across
    theta.
    """
    obj = _Objective(data, spec, likelihood)
    x = latent if isinstance(latent, np.ndarray) else _pack(latent, obj)
    if x.shape[0] != obj.dim:
        raise ValueError(f"latent vector must have length {obj.dim}")
    f, _, _ = obj.value_grad(x, obj.context(theta), want_grad=False)
    return f


@dataclass(frozen=True)
class _Inner:
    x: np.ndarray
    f: float
    h: sp.csc_matrix
    solver: CholeskySolver
    ridge: float
    iterations: int
    grad_norm: float


def _newton(obj: _Objective, ctx: dict, x: np.ndarray, max_iter: int):
    """Damped Newton ascent; returns (x, f, grad, d2, iterations, converged)."""
    spec = obj.spec
    f, grad, d2 = obj.value_grad(x, ctx)
    eps = np.finfo(float).eps
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # the absolute tolerance governs at ordinary weight scales; under
        # extreme weight multipliers the gradient's rounding floor rises
        # above it and rules instead
        tol = max(spec.newton_tol, 64.0 * eps * obj._g_scale)
        gnorm = float(np.max(np.abs(grad)))
        if gnorm < tol:
            return x, f, grad, d2, iterations, True
        h = obj.neg_hessian(d2, ctx)
        try:
            solver = CholeskySolver(h)
        except NotPositiveDefiniteError:
            # away from the mode the Beta likelihood can contribute negative
            # curvature; dropping it (Fisher-style) keeps the step an ascent
            # direction and the factorization positive definite
            solver, _ = obj.factor(
                obj.neg_hessian(np.minimum(d2, 0.0), ctx))
        step = solver.solve(grad)
        slope = float(grad @ step)
        # Near the mode the predicted gain drops below the rounding noise
        # of f (a sum of large cancelling terms); a guarded line search
        # would reject sound steps there, so take the pure Newton step
        # unguarded in that regime.
        noise = 64.0 * np.finfo(float).eps * (1.0 + obj._f_scale)
        refinement = float(np.max(np.abs(step))) <= \
            1e-2 * (1.0 + float(np.max(np.abs(x))))
        if refinement and 0.0 <= slope <= noise:
            try:
                x_new = x + step
                f, grad, d2 = obj.value_grad(x_new, ctx)
                x = x_new
                continue
            except NonFiniteError:
                pass
        alpha = 1.0
        accepted = False
        stag = 4.0 * np.finfo(float).eps * (1.0 + float(np.max(np.abs(x))))
        step_max = float(np.max(np.abs(step)))
        while alpha > 1e-12 and alpha * step_max > stag:
            try:
                f_new, _, _ = obj.value_grad(x + alpha * step, ctx,
                                             want_grad=False)
            except NonFiniteError:
                alpha *= 0.5
                continue
            if f_new >= f + 1e-4 * alpha * slope or f_new > f:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            break  # no visible ascent left along the Newton direction
        x = x + alpha * step
        f, grad, d2 = obj.value_grad(x, ctx)
    gnorm = float(np.max(np.abs(grad)))
    tol = max(spec.newton_tol, 64.0 * eps * obj._g_scale)
    return x, f, grad, d2, iterations, gnorm < tol


def _optimize_latent(obj: _Objective, ctx: dict,
                     x0: np.ndarray | None) -> _Inner:
    """Find the latent mode, falling back to a cold start if a warm start
    from another theta's mode leaves Newton in a non-concave pocket."""
    spec = obj.spec
    attempts: list[tuple[np.ndarray, int]] = []
    if x0 is not None:
        attempts.append((x0.copy(), min(50, spec.newton_max_iter)))
    attempts.append((np.zeros(obj.dim), spec.newton_max_iter))
    x = f = grad = d2 = None
    iterations = 0
    converged = False
    for start, budget in attempts:
        try:
            x, f, grad, d2, iterations, converged = _newton(
                obj, ctx, start, budget)
        except NonFiniteError:
            continue
        if converged:
            break
    if not converged:
        gnorm = math.inf if grad is None else float(np.max(np.abs(grad)))
        raise FitError(
            f"latent optimization stalled: gradient max-norm {gnorm:.3e} "
            f"after {iterations} iterations"
        )
    gnorm = float(np.max(np.abs(grad)))
    h = obj.neg_hessian(d2, ctx)
    solver, ridge = obj.factor(h)
    if ridge > 0:
        h = (h + sp.eye(obj.dim, format="csc") * ridge).tocsc()
    return _Inner(x=x, f=f, h=h, solver=solver, ridge=ridge,
                  iterations=iterations, grad_norm=gnorm)


def optimize_latent(theta: HyperParams, data: ModelData, spec: ModelSpec,
                    x0: np.ndarray | None = None, likelihood=None):
    """Newton mode of the joint log posterior for fixed theta.

    Returns (mode vector, sparse negative Hessian at the mode).  Raises
    FitError when the gradient max-norm cannot be brought under the
    tolerance within the iteration budget.
    """
    obj = _Objective(data, spec, likelihood)
    inner = _optimize_latent(obj, obj.context(theta), x0)
    return inner.x, inner.h


def laplace_log_marginal(theta: HyperParams, data: ModelData,
                         spec: ModelSpec, x0: np.ndarray | None = None,
                         likelihood=None) -> float:
    """Laplace approximation of the log marginal posterior of theta."""
    obj = _Objective(data, spec, likelihood)
    inner = _optimize_latent(obj, obj.context(theta), x0)
    return (inner.f + 0.5 * obj.dim * math.log(2.0 * math.pi)
            - 0.5 * inner.solver.logdet())


@dataclass(frozen=True)
class FitResult:
    theta: HyperParams
    x_hat: np.ndarray
    latent: LatentState
    precision: sp.csc_matrix
    solver: CholeskySolver
    log_marginal: float
    n_evaluations: int
    newton_iterations: int
    grad_norm: float
    data: ModelData
    spec: ModelSpec

    @property
    def beta(self) -> np.ndarray:
        return self.latent.beta

    @property
    def phi(self) -> float:
        return self.theta.phi


def fit(data: ModelData, spec: ModelSpec | None = None,
        likelihood=None) -> FitResult:
    """Maximize the Laplace marginal over the five hyperparameters.

    Nelder-Mead from the configured initials; each proposal runs the inner
    Newton solve warm-started at the previous mode.  Deterministic: no
    randomness enters anywhere.
    """
    spec = spec or ModelSpec()
    if data.n < data.p + 2:
        raise ValueError(
            f"need at least p+2 = {data.p + 2} observations, got {data.n}")
    obj = _Objective(data, spec, likelihood)
    theta0 = spec.initial_theta().to_array()
    state: dict = {"warm": None, "evals": 0}

    def negative_marginal(arr: np.ndarray) -> float:
        state["evals"] += 1
        if np.any(np.abs(arr) > _THETA_BOX):
            return np.inf
        try:
            theta = HyperParams.from_array(arr)
            inner = _optimize_latent(obj, obj.context(theta), state["warm"])
        except (FitError, NotPositiveDefiniteError, NonFiniteError):
            return np.inf
        state["warm"] = inner.x
        lm = (inner.f + 0.5 * obj.dim * math.log(2.0 * math.pi)
              - 0.5 * inner.solver.logdet())
        return -lm

    simplex = np.vstack(
        [theta0] + [theta0 + spec.simplex_step * row for row in np.eye(5)])
    res = scipy.optimize.minimize(
        negative_marginal,
        theta0,
        method="Nelder-Mead",
        options={
            "maxfev": spec.max_fn_evals,
            "xatol": spec.simplex_xatol,
            "fatol": spec.simplex_fatol,
            "adaptive": True,
            "initial_simplex": simplex,
        },
    )
    if not res.success or not math.isfinite(res.fun):
        raise FitError(
            f"hyperparameter search did not converge after {state['evals']} "
            f"evaluations: {res.message}"
        )
    theta_hat = HyperParams.from_array(res.x)
    inner = _optimize_latent(obj, obj.context(theta_hat), state["warm"])
    lm = (inner.f + 0.5 * obj.dim * math.log(2.0 * math.pi)
          - 0.5 * inner.solver.logdet())
    return FitResult(
        theta=theta_hat,
        x_hat=inner.x,
        latent=_unpack(inner.x, obj),
        precision=inner.h,
        solver=inner.solver,
        log_marginal=lm,
        n_evaluations=state["evals"],
        newton_iterations=inner.iterations,
        grad_norm=inner.grad_norm,
        data=data,
        spec=spec,
    )


def fit_at(theta: HyperParams, data: ModelData,
           spec: ModelSpec | None = None, likelihood=None) -> FitResult:
    """Gaussian approximation at fixed hyperparameters (no outer search)."""
    spec = spec or ModelSpec()
    obj = _Objective(data, spec, likelihood)
    inner = _optimize_latent(obj, obj.context(theta), None)
    lm = (inner.f + 0.5 * obj.dim * math.log(2.0 * math.pi)
          - 0.5 * inner.solver.logdet())
    return FitResult(
        theta=theta, x_hat=inner.x, latent=_unpack(inner.x, obj),
        precision=inner.h, solver=inner.solver, log_marginal=lm,
        n_evaluations=0, newton_iterations=inner.iterations,
        grad_norm=inner.grad_norm, data=data, spec=spec)


# ---------------------------------------------------------------------------
# posterior summaries
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Summaries:
    coef_names: tuple[str, ...]
    beta_mean: np.ndarray
    beta_sd: np.ndarray
    beta_lower: np.ndarray
    beta_upper: np.ndarray
    phi: float
    fitted_mean: np.ndarray
    fitted_sd: np.ndarray
    fitted_lower: np.ndarray
    fitted_upper: np.ndarray


def sample_latent(fit_result: FitResult, n_draws: int,
                  seed) -> np.ndarray:
    """Draws (dim x n_draws) from the Gaussian approximation at the mode."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((fit_result.x_hat.shape[0], n_draws))
    return fit_result.x_hat[:, None] + fit_result.solver.sample(z)


def fitted_mu_draws(fit_result: FitResult, n_draws: int = 2000,
                    seed: int = 0) -> np.ndarray:
    """In-sample fitted-mean draws (n_obs x n_draws), own nugget included."""
    obj = _Objective(fit_result.data, fit_result.spec)
    draws = sample_latent(fit_result, n_draws, seed)
    return expit(obj.m_mat @ draws)


def posterior_summaries(fit_result: FitResult, n_draws: int = 2000,
                        seed: int = 0) -> Summaries:
    """Moment and percentile summaries from Gaussian-approximation draws.

    Fitted values are in-sample: each observation's own nugget coordinate is
    part of its linear predictor draw.  phi is the empirical-Bayes point
    estimate and is reported without spread.
    """
    obj = _Objective(fit_result.data, fit_result.spec)
    draws = sample_latent(fit_result, n_draws, seed)
    beta = draws[obj.sl_beta]
    eta = obj.m_mat @ draws
    mu = expit(eta)
    lo, hi = np.percentile(mu, [2.5, 97.5], axis=1)
    blo, bhi = np.percentile(beta, [2.5, 97.5], axis=1)
    return Summaries(
        coef_names=fit_result.data.coef_names,
        beta_mean=beta.mean(axis=1),
        beta_sd=beta.std(axis=1, ddof=1),
        beta_lower=blo,
        beta_upper=bhi,
        phi=fit_result.phi,
        fitted_mean=mu.mean(axis=1),
        fitted_sd=mu.std(axis=1, ddof=1),
        fitted_lower=lo,
        fitted_upper=hi,
    )


def write_fit_report(path, fit_result: FitResult, summaries: Summaries,
                     comment: str | None = None) -> None:
    """Coefficient table plus a scalar diagnostics block."""
    with open(path, "w", newline="") as fh:
        if comment:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh)
        writer.writerow(["coefficient", "mean", "sd", "q2.5", "q97.5"])
        for i, name in enumerate(summaries.coef_names):
            writer.writerow([
                name,
                f"{summaries.beta_mean[i]:.8g}",
                f"{summaries.beta_sd[i]:.8g}",
                f"{summaries.beta_lower[i]:.8g}",
                f"{summaries.beta_upper[i]:.8g}",
            ])
        fh.write("# diagnostics\n")
        theta = fit_result.theta
        for key, val in [
            ("log_marginal", fit_result.log_marginal),
            ("phi", fit_result.phi),
            ("log_phi", theta.log_phi),
            ("log_rw1_prec", theta.log_rw1_prec),
            ("log_nugget_prec", theta.log_nugget_prec),
            ("log_kappa", theta.log_kappa),
            ("log_tau", theta.log_tau),
            ("n_evaluations", fit_result.n_evaluations),
            ("newton_iterations", fit_result.newton_iterations),
            ("gradient_norm", fit_result.grad_norm),
        ]:
            writer.writerow([key, f"{val:.10g}" if isinstance(val, float)
                             else val])
