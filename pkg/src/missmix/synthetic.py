"""Synthetic rating studies with value-dependent missingness.

The generator draws a complete N x M rating table from a multinomial
mixture, then hides entries according to per-value observation
probabilities mu: the rating v is kept with probability mu[v-1],
independently per cell. A uniformly sampled held-out set (chosen without
looking at the values) plays the role of an unbiased probe of the same
table. A small exact-enumeration routine computes per-user evidence by
brute force for cross-checking the fitted models.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .data import RatingDataset, SplitPair, min_ratings_filter, remap_users
from .errors import ConfigurationError, GenerationError, OracleLimitError
from .mixture import MixtureParams

# Enumerating V ** n_missing joint assignments beyond this is refused.
ORACLE_ASSIGNMENT_LIMIT = 1_000_000


@dataclass
class GroundTruth:
    """A fully known synthetic population.

    Attributes
    ----------
    params : MixtureParams
        Generating mixture (no smoothing attached).
    mu : ndarray, shape (V,)
        Observation probability of each rating value, in [0, 1].
    z : ndarray, shape (N,)
        Component assignment of each user.
    complete : ndarray, shape (N, M)
        The full rating table, values 1..V.
    """

    params: MixtureParams
    mu: np.ndarray
    z: np.ndarray
    complete: np.ndarray

    @property
    def n_users(self) -> int:
        return self.complete.shape[0]

    @property
    def n_items(self) -> int:
        return self.complete.shape[1]

    @property
    def n_values(self) -> int:
        return self.params.n_values


def sample_ground_truth(n_users: int, n_items: int, n_values: int,
                        n_components: int, mu, seed,
                        concentration: float = 1.0) -> GroundTruth:
    """Draw mixture parameters, assignments, and a complete rating table.

    Component weights and every per-item rating distribution are drawn
    from symmetric Dirichlets with the given concentration. ``mu`` may
    touch 0 or 1; those values make a rating always hidden or always
    kept.
    """
    if min(n_users, n_items, n_values, n_components) < 1:
        raise ConfigurationError("all dimensions must be >= 1")
    if concentration <= 0:
        raise ConfigurationError(f"concentration must be > 0, got {concentration}")
    mu = np.asarray(mu, dtype=float)
    if mu.shape != (n_values,):
        raise ConfigurationError(
            f"mu must have one entry per rating value ({n_values}), got shape {mu.shape}")
    if (mu < 0).any() or (mu > 1).any():
        raise ConfigurationError("mu entries must lie in [0, 1]")

    rng = np.random.default_rng(seed)
    theta = rng.dirichlet(np.full(n_components, concentration))
    beta = rng.dirichlet(np.full(n_values, concentration), size=(n_items, n_components))
    beta = np.ascontiguousarray(beta.transpose(2, 0, 1))
    z = rng.choice(n_components, size=n_users, p=theta)

    # Invert each per-cell CDF at one uniform draw; u < 1 keeps the
    # count of passed thresholds in 0..V-1.
    u = rng.random((n_users, n_items))
    cdf_by_user = np.cumsum(beta, axis=0)[:, :, z]
    complete = 1 + (cdf_by_user < u.T[None, :, :]).sum(axis=0).T.astype(np.int16)

    params = MixtureParams(theta=theta, beta=beta, alpha=None, phi=None)
    return GroundTruth(params=params, mu=mu, z=z, complete=complete)


def apply_cptv_missingness(truth: GroundTruth, seed, mu=None) -> RatingDataset:
    """Hide table entries value-dependently, returning the observed part.

    Cell (i, m) with rating v stays observed with probability mu[v-1].
    ``mu`` defaults to the truth's own vector.
    """
    mu = truth.mu if mu is None else np.asarray(mu, dtype=float)
    rng = np.random.default_rng(seed)
    keep = rng.random(truth.complete.shape) < mu[truth.complete - 1]
    users, items = np.nonzero(keep)
    return RatingDataset.from_arrays(
        truth.n_users, truth.n_items, truth.n_values,
        users, items, truth.complete[keep])


def sample_mcar_test(truth: GroundTruth, per_user: int, seed) -> RatingDataset:
    """Pick ``per_user`` cells per user uniformly, ignoring their values.

    Items are drawn without replacement within each user, so the
    selection frequency of every item is identical by symmetry.
    """
    if not 0 < per_user <= truth.n_items:
        raise ConfigurationError(
            f"per_user must be in 1..{truth.n_items}, got {per_user}")
    rng = np.random.default_rng(seed)
    keys = rng.random((truth.n_users, truth.n_items))
    idx = np.argsort(keys, axis=1)[:, :per_user]
    users = np.repeat(np.arange(truth.n_users), per_user)
    items = idx.ravel()
    values = truth.complete[users, items]
    return RatingDataset.from_arrays(
        truth.n_users, truth.n_items, truth.n_values, users, items, values)


def build_study_dataset(truth: GroundTruth, seed, per_user_test: int = 10,
                        min_train: int = 10):
    """Assemble a train/test pair from one ground truth.

    The test set is a uniform probe of ``per_user_test`` cells per user;
    training data is the value-dependently observed remainder, with any
    probed cells removed so the two sets never share a pair. Users left
    with fewer than ``min_train`` training entries are dropped from both
    sides and the survivors re-indexed densely.

    Returns
    -------
    split : SplitPair
    kept_users : ndarray
        Original user index of each retained user.
    """
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(seed)
    seed_missing, seed_test = seed.spawn(2)
    observed = apply_cptv_missingness(truth, seed_missing)
    test = sample_mcar_test(truth, per_user_test, seed_test)

    in_test = np.isin(observed.pair_keys(), test.pair_keys())
    train = RatingDataset.from_arrays(
        truth.n_users, truth.n_items, truth.n_values,
        observed.users[~in_test], observed.items[~in_test],
        observed.values[~in_test])

    train, kept = min_ratings_filter(train, min_train)
    if len(kept) == 0:
        raise GenerationError(
            f"no users kept at least {min_train} training entries")
    test = remap_users(test, kept)
    return SplitPair(train=train, test=test), kept


def brute_force_user_evidence(params: MixtureParams, mu, observed_items,
                              observed_values) -> float:
    """Joint probability of one user's observed values and response
    pattern, by exact enumeration over the hidden entries.

    Every assignment of the missing ratings is enumerated; for each, the
    mixture-and-observation probability is accumulated with exact
    summation. Intended for small instances only: raises once
    V ** n_missing exceeds ORACLE_ASSIGNMENT_LIMIT.
    """
    M, V = params.n_items, params.n_values
    mu = np.asarray(mu, dtype=float)
    observed_items = np.asarray(observed_items, dtype=np.int64)
    observed_values = np.asarray(observed_values, dtype=np.int64)
    is_observed = np.zeros(M, dtype=bool)
    is_observed[observed_items] = True
    missing_items = np.flatnonzero(~is_observed)
    if V ** len(missing_items) > ORACLE_ASSIGNMENT_LIMIT:
        raise OracleLimitError(
            f"{V} ** {len(missing_items)} assignments exceed the"
            f" enumeration limit {ORACLE_ASSIGNMENT_LIMIT}")

    theta, beta = params.theta, params.beta
    full = np.zeros(M, dtype=np.int64)
    full[observed_items] = observed_values
    terms = []
    for assignment in itertools.product(range(1, V + 1), repeat=len(missing_items)):
        full[missing_items] = assignment
        obs_prob = np.where(is_observed, mu[full - 1], 1.0 - mu[full - 1])
        for z in range(params.n_components):
            cell = beta[full - 1, np.arange(M), z] * obs_prob
            terms.append(theta[z] * math.prod(cell.tolist()))
    return math.fsum(terms)
