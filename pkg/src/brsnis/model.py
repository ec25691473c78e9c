"""Target/proposal model abstraction and the built-in benchmark models.

A model couples an unnormalized log importance weight with a proposal
sampler.  Points are always ``(n, dim)`` float arrays and all densities are
evaluated in log space.  The built-in models are a two-mode Gaussian mixture
targeted through a multivariate Student proposal, and a Bayesian logistic
posterior targeted through a Gaussian proposal centered at the posterior
mode (Newton-fitted, diagonal curvature).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.optimize import minimize
from scipy.special import gammaln, logsumexp, ndtr


class UnboundedWeightError(RuntimeError):
    """Raised when weight maximization diverges (unbounded weight function)."""


class NewtonConvergenceError(RuntimeError):
    """Raised when the Newton mode search fails; carries the last iterate."""

    def __init__(self, message: str, last_iterate: np.ndarray):
        super().__init__(message)
        self.last_iterate = last_iterate


@dataclass(frozen=True)
class ModelSpec:
    """A target/proposal pair.

    Parameters
    ----------
    dim : int
        Point dimension.
    log_weight : callable
        Maps points ``(n, dim)`` to the log of the unnormalized importance
        weight, shape ``(n,)``.  Finite on proposal draws; ``-inf`` is only
        allowed where the target has zero density.
    propose : callable
        ``propose(rng, n)`` draws ``n`` i.i.d. proposal points.
    target_sample : callable, optional
        ``target_sample(rng, n)`` draws exact target samples when the target
        is directly samplable.
    """

    dim: int
    log_weight: Callable[[np.ndarray], np.ndarray]
    propose: Callable[[np.random.Generator, int], np.ndarray]
    target_sample: Optional[Callable[[np.random.Generator, int], np.ndarray]] = None

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError("dim must be a positive integer")


@dataclass(frozen=True)
class TestFunction:
    """A bounded test function with a declared sup bound.

    Every evaluation checks the declared bound, because the closed-form
    bound evaluators rescale by it and silently exceeding it would void
    every comparison downstream.
    """

    __test__ = False  # keep pytest from collecting this as a test case

    fn: Callable[[np.ndarray], np.ndarray]
    sup_bound: float

    def __post_init__(self):
        if not self.sup_bound > 0:
            raise ValueError("sup_bound must be positive")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        values = self.fn(points)
        if np.size(values) and np.max(np.abs(values)) > self.sup_bound * (1.0 + 1e-12):
            raise ValueError("test function exceeded its declared sup bound")
        return values


class CountingModel:
    """Wraps a model and counts proposal draws and weight evaluations.

    Used for budget accounting: ``proposal_draws`` accumulates the number of
    points requested from ``propose``, ``weight_evals`` the number of points
    passed to ``log_weight``.
    """

    def __init__(self, base: ModelSpec):
        self.base = base
        self.dim = base.dim
        self.proposal_draws = 0
        self.weight_evals = 0

    def log_weight(self, points: np.ndarray) -> np.ndarray:
        self.weight_evals += len(points)
        return self.base.log_weight(points)

    def propose(self, rng: np.random.Generator, n: int) -> np.ndarray:
        self.proposal_draws += n
        return self.base.propose(rng, n)

    @property
    def target_sample(self):
        return self.base.target_sample


def indicator_difference(rect_a: np.ndarray, rect_b: np.ndarray) -> TestFunction:
    """Test function 1_A(x) - 1_B(x) for two axis-aligned boxes.

    Boxes are ``(dim, 2)`` arrays of per-coordinate [low, high] bounds.
    """
    rect_a = np.asarray(rect_a, dtype=float)
    rect_b = np.asarray(rect_b, dtype=float)

    def fn(points):
        points = np.atleast_2d(points)
        in_a = np.all((points >= rect_a[:, 0]) & (points <= rect_a[:, 1]), axis=1)
        in_b = np.all((points >= rect_b[:, 0]) & (points <= rect_b[:, 1]), axis=1)
        return in_a.astype(float) - in_b.astype(float)

    return TestFunction(fn=fn, sup_bound=1.0)


# ---------------------------------------------------------------------------
# Gaussian mixture target with multivariate Student proposal
# ---------------------------------------------------------------------------


def _validate_rect(rect: np.ndarray, dim: int, name: str):
    rect = np.asarray(rect, dtype=float)
    if rect.shape != (dim, 2):
        raise ValueError(f"{name} must have shape ({dim}, 2)")
    if not np.all(rect[:, 1] > rect[:, 0]):
        raise ValueError(f"{name} must have positive volume")
    return rect


@dataclass(frozen=True)
class MixtureSpec:
    """Two-component diagonal Gaussian mixture with a Student proposal.

    The target is ``weight * N(means[0], cov_scale I) +
    (1 - weight) * N(means[1], cov_scale I)``; the proposal is a centered
    multivariate Student distribution with ``student_dof`` degrees of freedom
    and identity scale.  ``rect_a``/``rect_b`` define the benchmark test
    function 1_A - 1_B.
    """

    means: np.ndarray
    cov_scale: float
    weight: float
    student_dof: float
    rect_a: np.ndarray
    rect_b: np.ndarray

    def __post_init__(self):
        means = np.atleast_2d(np.asarray(self.means, dtype=float))
        if means.shape[0] != 2:
            raise ValueError("means must hold exactly two component centers")
        object.__setattr__(self, "means", means)
        if not self.cov_scale > 0:
            raise ValueError("cov_scale must be positive")
        if not 0.0 < self.weight < 1.0:
            raise ValueError("weight must lie in (0, 1)")
        if not self.student_dof > 0:
            raise ValueError("student_dof must be positive")
        dim = means.shape[1]
        object.__setattr__(self, "rect_a", _validate_rect(self.rect_a, dim, "rect_a"))
        object.__setattr__(self, "rect_b", _validate_rect(self.rect_b, dim, "rect_b"))

    @property
    def dim(self) -> int:
        return self.means.shape[1]


def benchmark_mixture(dim: int) -> MixtureSpec:
    """The built-in two-mode benchmark configuration in a given dimension.

    Centers at (1, ..., 1) and (-2, 0, ..., 0), per-coordinate variance
    1/dim, first-component mass 1/3, Student proposal with 3 degrees of
    freedom.  Box A spans [-2, 6] x [-1, 1]^(d-1); box B spans
    [0.75, 1.25] x [1, 2] x [-0.1, 0.1]^(d-2).
    """
    if dim < 2:
        raise ValueError("benchmark_mixture requires dim >= 2")
    means = np.vstack([np.ones(dim), np.r_[-2.0, np.zeros(dim - 1)]])
    rect_a = np.vstack([[-2.0, 6.0], np.tile([-1.0, 1.0], (dim - 1, 1))])
    rect_b = np.vstack([[0.75, 1.25], [1.0, 2.0], np.tile([-0.1, 0.1], (dim - 2, 1))])
    return MixtureSpec(
        means=means,
        cov_scale=1.0 / dim,
        weight=1.0 / 3.0,
        student_dof=3.0,
        rect_a=rect_a,
        rect_b=rect_b,
    )


def _student_logpdf(points: np.ndarray, dof: float) -> np.ndarray:
    # Centered multivariate Student with identity scale.
    n, dim = points.shape
    sq = np.einsum("ij,ij->i", points, points)
    const = (
        gammaln((dof + dim) / 2.0)
        - gammaln(dof / 2.0)
        - 0.5 * dim * np.log(dof * np.pi)
    )
    return const - 0.5 * (dof + dim) * np.log1p(sq / dof)


def _mixture_logpdf(points: np.ndarray, spec: MixtureSpec) -> np.ndarray:
    dim = spec.dim
    log_norm = -0.5 * dim * np.log(2.0 * np.pi * spec.cov_scale)
    comp = np.empty((2, len(points)))
    for j, mass in enumerate((spec.weight, 1.0 - spec.weight)):
        sq = ((points - spec.means[j]) ** 2).sum(axis=1)
        comp[j] = np.log(mass) + log_norm - sq / (2.0 * spec.cov_scale)
    return logsumexp(comp, axis=0)


def make_gaussian_mixture(spec: MixtureSpec) -> ModelSpec:
    """Build the mixture-target model.

    ``log_weight`` is the difference of normalized target and proposal log
    densities.  The proposal sampler consumes, in order, ``(n, dim)``
    standard normals followed by ``n`` chi-square draws; the target sampler
    consumes ``n`` uniforms (component choice) followed by ``(n, dim)``
    standard normals.
    """
    dim = spec.dim
    dof = spec.student_dof
    sd = np.sqrt(spec.cov_scale)

    def log_weight(points):
        points = np.atleast_2d(np.asarray(points, dtype=float))
        return _mixture_logpdf(points, spec) - _student_logpdf(points, dof)

    def propose(rng, n):
        z = rng.standard_normal((n, dim))
        g = rng.chisquare(dof, n)
        return z * np.sqrt(dof / g)[:, None]

    def target_sample(rng, n):
        comp = (rng.random(n) >= spec.weight).astype(int)
        z = rng.standard_normal((n, dim))
        return spec.means[comp] + sd * z

    return ModelSpec(dim=dim, log_weight=log_weight, propose=propose,
                     target_sample=target_sample)


def mixture_rectangle_probability(spec: MixtureSpec, rect: np.ndarray) -> float:
    """Exact probability of an axis-aligned box under the mixture target.

    Product of one-dimensional Gaussian CDF differences per component, mixed
    by the component masses.
    """
    rect = np.asarray(rect, dtype=float)
    sd = np.sqrt(spec.cov_scale)
    total = 0.0
    for j, mass in enumerate((spec.weight, 1.0 - spec.weight)):
        hi = ndtr((rect[:, 1] - spec.means[j]) / sd)
        lo = ndtr((rect[:, 0] - spec.means[j]) / sd)
        total += mass * float(np.prod(hi - lo))
    return total


def mixture_truth(spec: MixtureSpec) -> float:
    """Exact value of pi(1_A - 1_B) for the spec's boxes."""
    return mixture_rectangle_probability(spec, spec.rect_a) - \
        mixture_rectangle_probability(spec, spec.rect_b)


def mixture_test_function(spec: MixtureSpec) -> TestFunction:
    return indicator_difference(spec.rect_a, spec.rect_b)


# ---------------------------------------------------------------------------
# Bayesian logistic posterior with a mode-centered Gaussian proposal
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LogisticPosteriorSpec:
    """Logistic regression posterior with a Gaussian N(0, 1/prior_precision I) prior.

    ``covariates`` is ``(n_obs, dim)``, ``responses`` takes values in
    {-1, +1}, and ``prior_precision`` is the prior precision tau^2.
    """

    covariates: np.ndarray
    responses: np.ndarray
    prior_precision: float

    def __post_init__(self):
        x = np.atleast_2d(np.asarray(self.covariates, dtype=float))
        y = np.asarray(self.responses, dtype=float).ravel()
        if x.shape[0] != y.shape[0]:
            raise ValueError("covariates and responses must have matching length")
        if y.size and not np.all(np.isin(y, (-1.0, 1.0))):
            raise ValueError("responses must take values in {-1, +1}")
        if not self.prior_precision > 0:
            raise ValueError("prior_precision must be positive")
        object.__setattr__(self, "covariates", x)
        object.__setattr__(self, "responses", y)

    @property
    def dim(self) -> int:
        return self.covariates.shape[1]

    @property
    def n_obs(self) -> int:
        return self.covariates.shape[0]


def synthetic_logistic_data(rng: np.random.Generator, dim: int, n_obs: int,
                            theta_star: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Draw a synthetic dataset from the logistic model at ``theta_star``.

    Covariates are i.i.d. standard normal; responses are +/-1 with
    P(y=+1 | x) = sigmoid(x . theta_star).
    """
    theta_star = np.asarray(theta_star, dtype=float)
    if theta_star.shape != (dim,):
        raise ValueError("theta_star must have shape (dim,)")
    x = rng.standard_normal((n_obs, dim))
    p1 = 1.0 / (1.0 + np.exp(-(x @ theta_star)))
    y = np.where(rng.random(n_obs) < p1, 1.0, -1.0)
    return x, y


def _log_posterior(spec: LogisticPosteriorSpec, theta: np.ndarray) -> np.ndarray:
    # Unnormalized: log-likelihood plus normalized Gaussian prior log density.
    theta = np.atleast_2d(theta)
    dim = spec.dim
    tau2 = spec.prior_precision
    if spec.n_obs:
        z = spec.responses[None, :] * (theta @ spec.covariates.T)
        ll = -np.logaddexp(0.0, -z).sum(axis=1)
    else:
        ll = np.zeros(len(theta))
    lp = 0.5 * dim * np.log(tau2 / (2.0 * np.pi)) - 0.5 * tau2 * (theta ** 2).sum(axis=1)
    return ll + lp


def laplace_proposal(spec: LogisticPosteriorSpec,
                     grad_tol: float = 1e-8,
                     max_iter: int = 100) -> tuple[np.ndarray, np.ndarray]:
    """Newton mode and diagonal curvature of the logistic posterior.

    Returns ``(mean, var_diag)`` where ``mean`` is the posterior mode and
    ``var_diag`` is the elementwise inverse of the negative log posterior's
    Hessian diagonal at the mode.  The objective is strictly concave, so the
    iteration converges from the origin; failure to reach ``grad_tol`` within
    ``max_iter`` raises ``NewtonConvergenceError``.
    """
    x, y, tau2 = spec.covariates, spec.responses, spec.prior_precision
    dim = spec.dim
    theta = np.zeros(dim)
    eye = np.eye(dim)
    for _ in range(max_iter):
        if spec.n_obs:
            z = y * (x @ theta)
            s = 1.0 / (1.0 + np.exp(z))          # sigmoid(-z)
            grad = (y * s) @ x - tau2 * theta
            hess = (x * (s * (1.0 - s))[:, None]).T @ x + tau2 * eye
        else:
            grad = -tau2 * theta
            hess = tau2 * eye
        if np.linalg.norm(grad) <= grad_tol:
            return theta, 1.0 / np.diag(hess)
        theta = theta + np.linalg.solve(hess, grad)
    if spec.n_obs:
        z = y * (x @ theta)
        s = 1.0 / (1.0 + np.exp(z))
        grad = (y * s) @ x - tau2 * theta
    else:
        grad = -tau2 * theta
    if np.linalg.norm(grad) <= grad_tol:
        if spec.n_obs:
            hess = (x * (s * (1.0 - s))[:, None]).T @ x + tau2 * eye
        else:
            hess = tau2 * eye
        return theta, 1.0 / np.diag(hess)
    raise NewtonConvergenceError(
        f"mode search did not reach gradient tolerance {grad_tol} "
        f"within {max_iter} iterations", theta)


def make_logistic_posterior(spec: LogisticPosteriorSpec) -> ModelSpec:
    """Build the logistic-posterior model with its mode-centered proposal.

    The proposal is Gaussian with mean at the Newton mode and diagonal
    covariance from ``laplace_proposal``; the proposal sampler consumes
    ``(n, dim)`` standard normals.  No exact target sampler exists.
    """
    mean, var_diag = laplace_proposal(spec)
    sd_diag = np.sqrt(var_diag)
    dim = spec.dim
    prop_const = -0.5 * dim * np.log(2.0 * np.pi) - 0.5 * np.log(var_diag).sum()

    def proposal_logpdf(theta):
        z = (theta - mean) / sd_diag
        return prop_const - 0.5 * (z ** 2).sum(axis=1)

    def log_weight(theta):
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return _log_posterior(spec, theta) - proposal_logpdf(theta)

    def propose(rng, n):
        return mean + rng.standard_normal((n, dim)) * sd_diag

    return ModelSpec(dim=dim, log_weight=log_weight, propose=propose)


def logistic_predictive(theta: np.ndarray, covariates: np.ndarray) -> np.ndarray:
    """Class-1 probabilities sigmoid(x . theta), shape (n_theta, n_points)."""
    theta = np.atleast_2d(theta)
    return 1.0 / (1.0 + np.exp(-(theta @ np.asarray(covariates, dtype=float).T)))


# ---------------------------------------------------------------------------
# Monte Carlo estimators for the weight constants
# ---------------------------------------------------------------------------


def estimate_kappa(model: ModelSpec, draws: int, rng: np.random.Generator) -> float:
    """Plug-in estimate of the chi-square weight constant lambda(w^2)/lambda(w)^2.

    Computed in log space from i.i.d. proposal draws, so the result is
    invariant to any constant shift of ``log_weight``.
    """
    if draws < 2:
        raise ValueError("draws must be at least 2")
    lw = model.log_weight(model.propose(rng, draws))
    return float(np.exp(logsumexp(2.0 * lw) - 2.0 * logsumexp(lw) + np.log(draws)))


def estimate_omega(model: ModelSpec, restarts: int = 32, draws: int = 10 ** 6,
                   rng: Optional[np.random.Generator] = None) -> float:
    """Plug-in estimate of sup w / lambda(w).

    The numerator is maximized by Nelder-Mead from ``restarts`` proposal
    draws (the weight surface of the built-in mixture is multimodal, so a
    derivative-free multistart is used); the denominator is the log-space
    sample mean of the weight over ``draws`` proposal points.  The result is
    a lower estimate of the true constant.
    """
    if restarts < 1:
        raise ValueError("restarts must be at least 1")
    if rng is None:
        rng = np.random.default_rng()
    starts = model.propose(rng, restarts)
    # A finite-weight surface gains at most a few nats over a random start;
    # a runaway optimum signals an unbounded weight function.
    ceiling = float(model.log_weight(starts).max()) + 500.0

    def objective(v):
        return -float(model.log_weight(v[None, :])[0])

    best = -np.inf
    for start in starts:
        res = minimize(objective, start, method="Nelder-Mead",
                       options={"maxiter": 2000, "xatol": 1e-8, "fatol": 1e-10})
        val = -res.fun
        if not np.isfinite(val) or val > ceiling:
            raise UnboundedWeightError(
                "weight maximization diverged; the bounded-weight assumption "
                "appears violated")
        best = max(best, val)
    lw = model.log_weight(model.propose(rng, draws))
    log_mean_weight = logsumexp(lw) - np.log(draws)
    return float(np.exp(best - log_mean_weight))
