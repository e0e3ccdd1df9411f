"""Rating prediction from fitted mixtures and error measurement.

Predictions are made per (user, item) pair: the user's component
posterior (from their training row) mixes the item's per-component
rating distributions, and the reported rating is the median of that
mixture, which is the Bayes-optimal point prediction under absolute
error.
"""

from __future__ import annotations

import numpy as np

from .cptv import CptvParams, _log_weights_nmar
from .data import RatingDataset
from .errors import EvaluationError
from .mixture import MixtureParams, _log_weights_mar, _normalize_log_weights


def posterior_z(params: MixtureParams, dataset: RatingDataset,
                cptv: CptvParams | None = None, threads: int = 1) -> np.ndarray:
    """Per-user component posteriors, shape (N, K).

    With ``cptv`` the posterior conditions on the full response pattern
    (which cells are hidden carries information); without it, only on
    the observed values.
    """
    if cptv is None:
        log_w = _log_weights_mar(params, dataset, threads)
    else:
        log_w = _log_weights_nmar(params, cptv, dataset, threads)
    q, _ = _normalize_log_weights(log_w)
    return q


def predictive_distribution(params: MixtureParams, q: np.ndarray,
                            users, items) -> np.ndarray:
    """Predicted rating distribution for each (user, item) pair.

    Returns shape (n_pairs, V); row j is sum_z q[users[j], z] *
    beta[:, items[j], z].
    """
    users = np.asarray(users, dtype=np.int64)
    items = np.asarray(items, dtype=np.int64)
    return np.einsum("vnk,nk->nv", params.beta[:, items, :], q[users])


def predict_median(dist: np.ndarray) -> np.ndarray:
    """Smallest value whose cumulative probability reaches one half.

    ``dist`` has one distribution over values 1..V per row; returns an
    int array of predictions.
    """
    dist = np.atleast_2d(dist)
    cdf = np.cumsum(dist, axis=1)
    return np.argmax(cdf >= 0.5, axis=1).astype(np.int64) + 1


def mae(predicted, actual) -> float:
    """Mean absolute error between two rating vectors."""
    predicted = np.asarray(predicted, dtype=float)
    actual = np.asarray(actual, dtype=float)
    if predicted.shape != actual.shape:
        raise EvaluationError(
            f"shape mismatch: {predicted.shape} vs {actual.shape}")
    if predicted.size == 0:
        raise EvaluationError("cannot average over zero predictions")
    return float(np.abs(predicted - actual).mean())


def empirical_median_value(dataset: RatingDataset) -> int:
    """Smallest rating value at which the observed CDF reaches one half."""
    counts = dataset.value_counts()
    if counts.sum() == 0:
        raise EvaluationError("dataset has no observations")
    cdf = np.cumsum(counts) / counts.sum()
    return int(np.argmax(cdf >= 0.5)) + 1
