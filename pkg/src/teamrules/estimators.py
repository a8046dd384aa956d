"""Estimator-style wrappers so region discovery composes with the usual
fit/predict ecosystem. Parameters mirror the config dataclasses; fitted
state lives in trailing-underscore attributes."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .dataset import StudyDataset
from .errors import ValidationError
from .gradient_discovery import DiscoveryConfig, discover
from .regions import PriorRule
from .selection_discovery import SelectionConfig, discover_select
from .validation import ensure_dataset

PRIOR_NAMES = ("recorded", "random", "const0", "const1")


def prior_from_name(name, seed: int = 0) -> PriorRule:
    if isinstance(name, PriorRule):
        return name
    if name == "recorded":
        return PriorRule(mode="recorded")
    if name == "random":
        return PriorRule(mode="random", seed=seed)
    if name == "const0":
        return PriorRule(mode="constant", value=0)
    if name == "const1":
        return PriorRule(mode="constant", value=1)
    raise ValidationError(f"prior must be one of {PRIOR_NAMES} or a PriorRule")


class _DiscoveryMixin:
    def _check_fitted(self):
        if not hasattr(self, "regions_"):
            raise NotFittedError(
                f"this {type(self).__name__} instance is not fitted yet")

    def predict(self, dataset: StudyDataset) -> np.ndarray:
        """Per-example reliance decision (0 = human, 1 = AI)."""
        self._check_fitted()
        ensure_dataset(dataset)
        return self.integrator_.decisions(dataset)

    def score(self, dataset: StudyDataset) -> float:
        """Team accuracy (1 - mean decision loss); higher is better."""
        self._check_fitted()
        ensure_dataset(dataset)
        return 1.0 - self.integrator_.team_loss(dataset)


class RegionDiscovery(_DiscoveryMixin, BaseEstimator):
    """Gradient-based discovery of reliance regions.

    Parameters
    ----------
    T : maximum number of accepted regions
    alpha : required fraction of members sharing the region's decision
    beta_l, beta_u : soft member-count window as fractions of the dataset
    delta : minimum realized gain for acceptance
    lam : penalty weight in the relaxed objective
    c1 : sharpness of the soft membership sigmoid
    prior : "recorded", "random", "const0", "const1", or a PriorRule

    Attributes
    ----------
    regions_ : accepted regions in acceptance order
    integrator_ : prior plus accepted regions
    log_ : one entry per search round
    """

    def __init__(self, T=10, alpha=0.0, beta_l=0.01, beta_u=0.5, delta=2.0,
                 lam=5.0, c1=20.0, learning_rate=1e-3, epochs=2000,
                 trial_epochs=200, n_starts=20, patience=100, lr_decay=0.5,
                 lr_floor=1e-5, weight_decay=0.0, prior="recorded", seed=0):
        self.T = T
        self.alpha = alpha
        self.beta_l = beta_l
        self.beta_u = beta_u
        self.delta = delta
        self.lam = lam
        self.c1 = c1
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.trial_epochs = trial_epochs
        self.n_starts = n_starts
        self.patience = patience
        self.lr_decay = lr_decay
        self.lr_floor = lr_floor
        self.weight_decay = weight_decay
        self.prior = prior
        self.seed = seed

    def _config(self) -> DiscoveryConfig:
        return DiscoveryConfig(
            T=self.T, alpha=self.alpha, beta_l=self.beta_l, beta_u=self.beta_u,
            delta=self.delta, lam=self.lam, c1=self.c1,
            learning_rate=self.learning_rate, epochs=self.epochs,
            trial_epochs=self.trial_epochs, n_starts=self.n_starts,
            patience=self.patience, lr_decay=self.lr_decay,
            lr_floor=self.lr_floor, weight_decay=self.weight_decay,
            seed=self.seed).validate()

    def fit(self, dataset: StudyDataset, y=None):
        ensure_dataset(dataset)
        result = discover(dataset, prior_from_name(self.prior, self.seed),
                          self._config())
        self.regions_ = result.regions
        self.integrator_ = result.integrator
        self.log_ = result.log
        return self


class SelectionDiscovery(_DiscoveryMixin, BaseEstimator):
    """Point-centered selection search over candidate regions."""

    def __init__(self, T=10, alpha=0.0, beta_l=0.01, beta_u=0.5, delta=2.0,
                 prior="recorded", seed=0):
        self.T = T
        self.alpha = alpha
        self.beta_l = beta_l
        self.beta_u = beta_u
        self.delta = delta
        self.prior = prior
        self.seed = seed

    def _config(self) -> SelectionConfig:
        return SelectionConfig(T=self.T, alpha=self.alpha, beta_l=self.beta_l,
                               beta_u=self.beta_u, delta=self.delta).validate()

    def fit(self, dataset: StudyDataset, y=None):
        ensure_dataset(dataset)
        result = discover_select(dataset, prior_from_name(self.prior, self.seed),
                                 self._config())
        self.regions_ = result.regions
        self.integrator_ = result.integrator
        self.log_ = result.log
        return self
