"""Multinomial mixture over discrete ratings, fit by MAP EM.

Each user draws a latent component z with probability theta[z]; given z,
the rating of item m is drawn from the multinomial beta[:, m, z] over the
values 1..V. Missing entries are ignored by the fitting routines here,
which is the correct treatment only when missingness does not depend on
the rating values themselves. Dirichlet smoothing on theta and beta keeps
every estimate strictly interior, and the objective maximised is the log
of (likelihood x priors).
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp

from .data import RatingDataset
from .errors import ConfigurationError

# Relative convergence test uses max(|L|, _TINY) to survive L == 0.
_TINY = 1e-300


@dataclass
class MixtureParams:
    """Mixture parameters plus the smoothing they were fit under.

    Attributes
    ----------
    theta : ndarray, shape (K,)
        Component weights, a simplex.
    beta : ndarray, shape (V, M, K)
        Per item and component rating distributions; each beta[:, m, z]
        is a simplex over values 1..V.
    alpha : ndarray, shape (K,), optional
        Dirichlet smoothing on theta, entries > 1. None on parameters
        that were not produced by a smoothed fit (e.g. ground truth).
    phi : ndarray, shape (V, M, K), optional
        Dirichlet smoothing on each rating distribution, entries > 1.
    """

    theta: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray | None = None
    phi: np.ndarray | None = None

    @property
    def n_components(self) -> int:
        return self.theta.shape[0]

    @property
    def n_items(self) -> int:
        return self.beta.shape[1]

    @property
    def n_values(self) -> int:
        return self.beta.shape[0]


@dataclass
class FitConfig:
    """Settings for one EM run."""

    n_components: int
    alpha: float = 2.0
    phi: float = 2.0
    max_iters: int = 1000
    rel_tol: float = 1e-5
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if self.n_components < 1:
            raise ConfigurationError(f"n_components must be >= 1, got {self.n_components}")
        if self.alpha <= 1.0 or self.phi <= 1.0:
            raise ConfigurationError(
                "alpha and phi must be > 1 so maximum-posterior updates stay"
                f" interior, got alpha={self.alpha}, phi={self.phi}")
        if self.max_iters < 1:
            raise ConfigurationError(f"max_iters must be >= 1, got {self.max_iters}")
        if self.rel_tol < 0:
            raise ConfigurationError(f"rel_tol must be >= 0, got {self.rel_tol}")
        if self.threads < 1:
            raise ConfigurationError(f"threads must be >= 1, got {self.threads}")


@dataclass
class FitResult:
    """Outcome of an EM run.

    log_posterior_trace[t] is the objective after M-step t+1, so the
    trace is non-decreasing up to round-off. For models with a
    missingness component, `cptv` and `mu_mode` are set, and
    `missing_value_attribution[v-1]` gives the fraction of the hidden
    entries the fitted model attributes to rating value v (entries sum
    to 1; None when nothing is hidden).
    """

    params: MixtureParams
    log_posterior_trace: np.ndarray
    converged: bool
    iterations: int
    cptv: object = None
    mu_mode: str | None = None
    missing_value_attribution: np.ndarray | None = None


def init_params(n_items: int, n_values: int, config: FitConfig) -> MixtureParams:
    """Draw starting parameters from their smoothing Dirichlets."""
    if n_items < 1 or n_values < 1:
        raise ConfigurationError(
            f"need n_items >= 1 and n_values >= 1, got {n_items}, {n_values}")
    rng = np.random.default_rng(config.seed)
    K = config.n_components
    theta = rng.dirichlet(np.full(K, config.alpha))
    beta = rng.dirichlet(np.full(n_values, config.phi), size=(n_items, K))
    beta = np.ascontiguousarray(beta.transpose(2, 0, 1))
    alpha = np.full(K, float(config.alpha))
    phi = np.full((n_values, n_items, K), float(config.phi))
    return MixtureParams(theta=theta, beta=beta, alpha=alpha, phi=phi)


def _chunk_bounds(n_users: int, threads: int):
    if threads <= 1 or n_users == 0:
        return [(0, n_users)]
    edges = np.linspace(0, n_users, min(threads, n_users) + 1).astype(np.int64)
    return [(int(a), int(b)) for a, b in zip(edges[:-1], edges[1:]) if a < b]


def _log_weights_mar(params: MixtureParams, dataset: RatingDataset,
                     threads: int = 1) -> np.ndarray:
    """Unnormalised per-user log component weights, shape (N, K).

    Row i holds log theta_z + sum over observed items of
    log beta[x, m, z]. Users are chunked on index boundaries, so each
    row is accumulated in the same order regardless of thread count.
    """
    N, K = dataset.n_users, params.n_components
    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta)
        log_beta = np.log(params.beta)
    row_ptr = dataset.row_ptr()
    out = np.empty((N, K))

    def fill(bounds):
        u0, u1 = bounds
        a, b = row_ptr[u0], row_ptr[u1]
        acc = np.zeros((u1 - u0, K))
        entry = log_beta[dataset.values[a:b] - 1, dataset.items[a:b], :]
        np.add.at(acc, dataset.users[a:b] - u0, entry)
        out[u0:u1] = log_theta + acc

    chunks = _chunk_bounds(N, threads)
    if len(chunks) == 1:
        fill(chunks[0])
    else:
        with ThreadPoolExecutor(max_workers=len(chunks)) as pool:
            list(pool.map(fill, chunks))
    return out


def _normalize_log_weights(log_w: np.ndarray):
    log_z = logsumexp(log_w, axis=1)
    q = np.exp(log_w - log_z[:, None])
    return q, log_z


def e_step_mar(params: MixtureParams, dataset: RatingDataset,
               threads: int = 1) -> np.ndarray:
    """Posterior component responsibilities, shape (N, K); rows sum to 1."""
    q, _ = _normalize_log_weights(_log_weights_mar(params, dataset, threads))
    return q


def _scatter_value_item(dataset: RatingDataset, q: np.ndarray,
                        n_values: int, n_items: int) -> np.ndarray:
    """Sum responsibility rows into (value, item) cells, shape (V, M, K)."""
    acc = np.zeros((n_values, n_items, q.shape[1]))
    np.add.at(acc, (dataset.values - 1, dataset.items), q[dataset.users])
    return acc


def m_step_mar(params: MixtureParams, dataset: RatingDataset,
               q: np.ndarray) -> MixtureParams:
    """Maximise the smoothed expected complete-data objective.

    Both simplex constraints are met exactly because each denominator is
    computed as the sum of its own numerators.
    """
    if params.alpha is None or params.phi is None:
        raise ConfigurationError("maximum-posterior updates need smoothing arrays")
    theta_num = params.alpha - 1.0 + q.sum(axis=0)
    theta = theta_num / theta_num.sum()
    beta_num = params.phi - 1.0 + _scatter_value_item(
        dataset, q, params.n_values, params.n_items)
    beta = beta_num / beta_num.sum(axis=0, keepdims=True)
    return MixtureParams(theta=theta, beta=beta, alpha=params.alpha, phi=params.phi)


def _log_dirichlet_prior(params: MixtureParams) -> float:
    """Log density of theta and every beta[:, m, z] under their smoothing."""
    if params.alpha is None or params.phi is None:
        raise ConfigurationError("log posterior needs smoothing arrays")
    with np.errstate(divide="ignore"):
        log_theta = np.log(params.theta)
        log_beta = np.log(params.beta)
    lp = (gammaln(params.alpha.sum()) - gammaln(params.alpha).sum()
          + ((params.alpha - 1.0) * log_theta).sum())
    lp += (gammaln(params.phi.sum(axis=0)) - gammaln(params.phi).sum(axis=0)
           + ((params.phi - 1.0) * log_beta).sum(axis=0)).sum()
    return float(lp)


def log_posterior_mar(params: MixtureParams, dataset: RatingDataset,
                      threads: int = 1) -> float:
    """Log of (observed-data likelihood x smoothing priors), up to the
    normalising constant of the data."""
    log_z = logsumexp(_log_weights_mar(params, dataset, threads), axis=1)
    return float(log_z.sum()) + _log_dirichlet_prior(params)


def _relative_change(cur: float, prev: float) -> float:
    return abs(cur - prev) / max(abs(cur), _TINY)


def fit_mar(dataset: RatingDataset, config: FitConfig) -> FitResult:
    """Fit the mixture to the observed entries by MAP EM.

    Parameters
    ----------
    dataset : RatingDataset
    config : FitConfig

    Returns
    -------
    FitResult
        With the objective evaluated after every update; the run stops
        once the relative change falls below ``config.rel_tol``.
    """
    params = init_params(dataset.n_items, dataset.n_values, config)
    q, _ = _normalize_log_weights(
        _log_weights_mar(params, dataset, config.threads))
    trace = []
    converged = False
    iterations = 0
    for _ in range(config.max_iters):
        params = m_step_mar(params, dataset, q)
        log_w = _log_weights_mar(params, dataset, config.threads)
        q, log_z = _normalize_log_weights(log_w)
        trace.append(float(log_z.sum()) + _log_dirichlet_prior(params))
        iterations += 1
        if iterations >= 2 and _relative_change(trace[-1], trace[-2]) < config.rel_tol:
            converged = True
            break
    return FitResult(params=params, log_posterior_trace=np.array(trace),
                     converged=converged, iterations=iterations)
