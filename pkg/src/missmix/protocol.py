"""Train/test evaluation runs over a grid of model settings.

A protocol run fits each requested model on the training set once per
seed, scores mean absolute error on both sides of the split, and emits
one row per (model, seed) plus one aggregate row per model with the
across-seed mean and standard error. Rows are plain dicts so they can
be serialised or inspected directly; `write_report` renders them as CSV
with full-precision floats.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .cptv import MuMode, build_mu_prior, fit_nmar
from .data import SplitPair
from .errors import ConfigurationError, MissmixError
from .mixture import FitConfig, fit_mar
from .predict import (empirical_median_value, mae, posterior_z,
                      predict_median, predictive_distribution)

REPORT_COLUMNS = ["model", "K", "mu_mode", "S", "seed", "train_mae",
                  "test_mae", "train_mae_se", "test_mae_se", "iterations",
                  "converged", "agg"]

_FAMILIES = ("mm-none", "mm-cptv", "constant")


@dataclass
class ModelSpec:
    """One model configuration to evaluate.

    family "mm-none" ignores the response pattern, "mm-cptv" models it,
    and "constant" predicts the training median everywhere (no fit).
    For mm-cptv, mu_mode "fixed" uses ``mu`` as is, while "learn" treats
    ``mu`` as a prior mean with pseudo-count budget ``strength``.
    """

    family: str
    n_components: int = 1
    alpha: float = 2.0
    phi: float = 2.0
    mu_mode: str | None = None
    mu: np.ndarray | None = None
    strength: float | None = None

    def __post_init__(self):
        if self.family not in _FAMILIES:
            raise ConfigurationError(
                f"family must be one of {_FAMILIES}, got {self.family!r}")
        if self.family == "mm-cptv":
            if self.mu_mode not in ("fixed", "learn"):
                raise ConfigurationError(
                    "mm-cptv needs mu_mode 'fixed' or 'learn'")
            if self.mu is None:
                raise ConfigurationError("mm-cptv needs a mu vector")
            self.mu = np.asarray(self.mu, dtype=float)
            if self.mu_mode == "learn" and not self.strength:
                raise ConfigurationError("learn mode needs a prior strength")

    def label(self) -> str:
        return self.family


@dataclass
class ProtocolConfig:
    """Fit settings shared by every model in a run."""

    max_iters: int = 1000
    rel_tol: float = 1e-5
    threads: int = 1
    seeds: tuple = field(default_factory=lambda: (0, 1, 2, 3, 4))


def _fit_and_score(split: SplitPair, spec: ModelSpec, seed: int,
                   config: ProtocolConfig):
    """Returns (train_mae, test_mae, iterations, converged)."""
    train, test = split.train, split.test
    if spec.family == "constant":
        value = empirical_median_value(train)
        return (mae(np.full(train.n_obs, value), train.values),
                mae(np.full(test.n_obs, value), test.values), 0, True)

    fit_config = FitConfig(n_components=spec.n_components, alpha=spec.alpha,
                           phi=spec.phi, max_iters=config.max_iters,
                           rel_tol=config.rel_tol, seed=seed,
                           threads=config.threads)
    if spec.family == "mm-none":
        result = fit_mar(train, fit_config)
    else:
        if spec.mu_mode == "fixed":
            mode = MuMode.fixed(spec.mu)
        else:
            xi1, xi0 = build_mu_prior(spec.mu, spec.strength)
            mode = MuMode.learn(xi1, xi0)
        result = fit_nmar(train, fit_config, mode)

    q = posterior_z(result.params, train, cptv=result.cptv,
                    threads=config.threads)
    train_pred = predict_median(
        predictive_distribution(result.params, q, train.users, train.items))
    test_pred = predict_median(
        predictive_distribution(result.params, q, test.users, test.items))
    return (mae(train_pred, train.values), mae(test_pred, test.values),
            result.iterations, result.converged)


def run_protocol(split: SplitPair, specs, config: ProtocolConfig | None = None):
    """Fit and score every spec under every seed.

    Returns a list of dict rows in REPORT_COLUMNS order: per-seed rows
    first for each model (agg 0), then its aggregate row (agg 1) with
    across-seed means and standard errors. A failed fit leaves its
    error columns empty and is excluded from the aggregate.
    """
    config = config or ProtocolConfig()
    problems = split.violations()
    if problems:
        raise ConfigurationError("; ".join(problems))

    rows = []
    for spec in specs:
        per_seed = []
        for seed in config.seeds:
            row = {c: "" for c in REPORT_COLUMNS}
            row.update(model=spec.label(), seed=seed, agg=0)
            if spec.family != "constant":
                row["K"] = spec.n_components
            if spec.family == "mm-cptv":
                row["mu_mode"] = spec.mu_mode
                if spec.mu_mode == "learn":
                    row["S"] = spec.strength
            try:
                tr, te, iters, conv = _fit_and_score(split, spec, seed, config)
            except MissmixError as exc:
                warnings.warn(f"{spec.label()} seed {seed} failed: {exc}",
                              stacklevel=2)
                rows.append(row)
                continue
            row.update(train_mae=tr, test_mae=te, iterations=iters,
                       converged=int(conv))
            per_seed.append((tr, te, iters, conv))
            rows.append(row)

        agg = {c: "" for c in REPORT_COLUMNS}
        agg.update(model=spec.label(), agg=1)
        if spec.family != "constant":
            agg["K"] = spec.n_components
        if spec.family == "mm-cptv":
            agg["mu_mode"] = spec.mu_mode
            if spec.mu_mode == "learn":
                agg["S"] = spec.strength
        if per_seed:
            tr = np.array([p[0] for p in per_seed])
            te = np.array([p[1] for p in per_seed])
            agg["train_mae"] = tr.mean()
            agg["test_mae"] = te.mean()
            if len(per_seed) > 1:
                agg["train_mae_se"] = tr.std(ddof=1) / np.sqrt(len(tr))
                agg["test_mae_se"] = te.std(ddof=1) / np.sqrt(len(te))
            agg["iterations"] = float(np.mean([p[2] for p in per_seed]))
            agg["converged"] = float(np.mean([float(p[3]) for p in per_seed]))
        rows.append(agg)
    return rows


def format_cell(value) -> str:
    """Full-precision, locale-free rendering of one report cell."""
    if value is None or value == "":
        return ""
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return "%.17g" % value
    return str(value)


def write_report(fh, rows) -> None:
    """Write protocol rows as CSV to an open text file."""
    fh.write(",".join(REPORT_COLUMNS) + "\n")
    for row in rows:
        fh.write(",".join(format_cell(row.get(c, "")) for c in REPORT_COLUMNS) + "\n")
