"""Supervised evaluation protocol: crossvalidated 1-NN classification in the
learned coefficient space, parameter sweeps, and per-label prevalence
diagnostics.

Labels double as the groups of the sparsity prior during fitting (identity
map); the classifier itself never sees the prior. Train-time features are
the posterior coefficient means of the fitted model, test-time features are
nonnegative least-squares projections onto the fitted dictionary.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from .engine import FitConfig, fit
from .model import (
    DEFAULT_A_LARGE,
    DEFAULT_A_SMALL,
    DEFAULT_A_T,
    DEFAULT_B_LAMBDA,
    DEFAULT_B_T,
    GroupAssignment,
    Hyperparameters,
    as_data_matrix,
    build_group_hyperprior,
)
from .projection import project_matrix

__all__ = [
    "LabeledDataset",
    "CvConfig",
    "AccuracyReport",
    "PriorSettings",
    "knn_cosine_classify",
    "stratified_folds",
    "evaluate",
    "parameter_sweep",
    "group_prevalence",
]

HyperBuilder = Callable[[np.ndarray], tuple[Hyperparameters, GroupAssignment]]


@dataclass(frozen=True)
class LabeledDataset:
    """Observation matrix plus one class index per column.

    Labels are 0-based consecutive integers; every class needs at least two
    samples so folds can separate train and test occurrences.
    """

    data: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        data = as_data_matrix(self.data)
        labels = np.asarray(self.labels, dtype=int)
        if labels.ndim != 1 or labels.size != data.shape[1]:
            raise ValueError("need exactly one label per data column")
        if labels.min() < 0:
            raise ValueError("labels must be nonnegative integers")
        counts = np.bincount(labels, minlength=labels.max() + 1)
        if (counts < 2).any():
            raise ValueError("every class needs at least 2 samples")
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "labels", labels)

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


@dataclass(frozen=True)
class CvConfig:
    """Crossvalidation protocol: runs x folds x restarts, seeded."""

    folds: int = 10
    runs: int = 5
    restarts: int = 10
    seed: int = 0
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.runs < 1 or self.restarts < 1:
            raise ValueError("runs and restarts must be >= 1")


@dataclass(frozen=True)
class AccuracyReport:
    """Accuracy statistics over the full run x fold x restart tensor.

    ``max_accuracy`` averages the per-fold maximum over restarts (the
    restart-selection estimate); ``max_of_restart_means`` is the alternative
    aggregation that first averages each restart over all cells and then
    takes the best restart.
    """

    max_accuracy: float
    mean_accuracy: float
    variance: float
    per_fold: np.ndarray
    subspace_dimension: int

    @property
    def max_of_restart_means(self) -> float:
        return float(self.per_fold.mean(axis=(0, 1)).max())


def knn_cosine_classify(train_features, train_labels, test_features) -> np.ndarray:
    """Label of the cosine-nearest training column for each test column.

    Ties go to the lowest train index; all-zero feature columns sit at
    distance 1 from everything.
    """
    A = np.asarray(train_features, dtype=float)
    B = np.asarray(test_features, dtype=float)
    y = np.asarray(train_labels)
    if A.ndim != 2 or B.ndim != 2 or A.shape[0] != B.shape[0]:
        raise ValueError("train and test features must share the feature dimension")
    if y.shape != (A.shape[1],):
        raise ValueError("need one label per training column")
    if A.shape[1] == 0:
        raise ValueError("training set is empty")
    na = np.linalg.norm(A, axis=0)
    nb = np.linalg.norm(B, axis=0)
    safe_na = np.where(na > 0.0, na, np.inf)
    safe_nb = np.where(nb > 0.0, nb, np.inf)
    similarity = (A.T @ B) / safe_na[:, None] / safe_nb[None, :]
    nearest = np.argmin(1.0 - similarity, axis=0)
    return y[nearest]


def stratified_folds(labels, folds: int, seed: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Disjoint, exhaustive folds preserving class proportions.

    Classes with fewer samples than folds simply appear in fewer test
    folds (with a warning); the partition stays valid. Deterministic per
    seed.
    """
    y = np.asarray(labels, dtype=int)
    if y.ndim != 1 or y.size == 0:
        raise ValueError("labels must form a nonempty vector")
    counts = np.bincount(y)
    if (counts == 0).any():
        raise ValueError("empty classes are not allowed")
    if (counts < folds).any():
        warnings.warn(
            "some classes have fewer samples than folds; they will be absent "
            "from some test folds",
            stacklevel=2,
        )
    rng = np.random.default_rng(seed)
    assignment = np.empty(y.size, dtype=int)
    offset = 0
    for cls in range(counts.size):
        idx = np.flatnonzero(y == cls)
        idx = idx[rng.permutation(idx.size)]
        # Rotate the starting fold per class so fold sizes stay balanced.
        assignment[idx] = (np.arange(idx.size) + offset) % folds
        offset += idx.size
    out = []
    everything = np.arange(y.size)
    for f in range(folds):
        test = everything[assignment == f]
        train = everything[assignment != f]
        out.append((train, test))
    return out


def _cell_seeds(seed: int, runs: int, folds: int, restarts: int) -> np.ndarray:
    """Pre-assigned seeds: one partition seed per run plus one per cell."""
    n = runs * (1 + folds * restarts)
    return np.random.SeedSequence(seed).generate_state(n, dtype=np.uint32)


def evaluate(dataset: LabeledDataset, hyper_builder: HyperBuilder, config: CvConfig) -> AccuracyReport:
    """Crossvalidated 1-NN accuracy of the label-driven factorization.

    Per run x fold x restart: fit on the training columns with labels as
    groups, project the held-out columns onto the fitted dictionary, and
    classify them against the training coefficients. Seeds are pre-assigned
    per cell, so the result does not depend on execution order.
    """
    X = dataset.data
    y = dataset.labels
    seeds = _cell_seeds(config.seed, config.runs, config.folds, config.restarts)
    acc = np.zeros((config.runs, config.folds, config.restarts))
    subspace = None
    pos = 0
    for r in range(config.runs):
        partition_seed = int(seeds[pos])
        pos += 1
        folds = stratified_folds(y, config.folds, partition_seed)
        for f, (train_idx, test_idx) in enumerate(folds):
            hyper, groups = hyper_builder(y[train_idx])
            subspace = hyper.dims[1]
            # The report never reads bound traces, so compute the bound only
            # as often as early stopping demands.
            every = (
                config.fit.compute_bound_every
                if config.fit.bound_tol > 0.0
                else config.fit.max_sweeps
            )
            for k in range(config.restarts):
                cell_seed = int(seeds[pos])
                pos += 1
                try:
                    result = fit(
                        X[:, train_idx],
                        hyper,
                        groups,
                        replace(config.fit, seed=cell_seed, compute_bound_every=every),
                    )
                except Exception as exc:
                    raise RuntimeError(
                        f"fit failed at run {r}, fold {f}, restart {k}"
                    ) from exc
                train_features = result.state.E_v
                test_features = project_matrix(result.state.E_t, X[:, test_idx])
                predicted = knn_cosine_classify(train_features, y[train_idx], test_features)
                acc[r, f, k] = float(np.mean(predicted == y[test_idx]))
    return AccuracyReport(
        max_accuracy=float(acc.max(axis=2).mean()),
        mean_accuracy=float(acc.mean()),
        variance=float(acc.var()),
        per_fold=acc,
        subspace_dimension=int(subspace),
    )


@dataclass(frozen=True)
class PriorSettings:
    """One point of a hyperparameter grid for the label-driven prior."""

    per_group: int = 1
    a_small: float = DEFAULT_A_SMALL
    a_large: float = DEFAULT_A_LARGE
    b_lambda: float = DEFAULT_B_LAMBDA
    a_t: float = DEFAULT_A_T
    b_t: float = DEFAULT_B_T
    single_group: bool = False

    def subspace_dimension(self, n_classes: int) -> int:
        return self.per_group * (1 if self.single_group else n_classes)

    def builder(self, n_rows: int, n_classes: int) -> HyperBuilder:
        """Hyperparameters + groups for a training subset's label vector.

        With ``single_group`` the sparsity prior collapses to one group for
        every sample (the label-blind baseline); classification still uses
        the real labels.
        """

        def build(train_labels: np.ndarray) -> tuple[Hyperparameters, GroupAssignment]:
            t = train_labels.size
            if self.single_group:
                groups = GroupAssignment(1, np.zeros(t, dtype=int))
                A_l, B_l = build_group_hyperprior(
                    1, self.per_group, self.a_small, self.a_small, self.b_lambda
                )
            else:
                groups = GroupAssignment(n_classes, train_labels)
                A_l, B_l = build_group_hyperprior(
                    n_classes, self.per_group, self.a_small, self.a_large, self.b_lambda
                )
            n_features = A_l.shape[0]
            hyper = Hyperparameters(
                A_t=np.full((n_rows, n_features), self.a_t),
                B_t=np.full((n_rows, n_features), self.b_t),
                A_lambda=A_l,
                B_lambda=B_l,
                U=np.ones((t, A_l.shape[1])),
            )
            return hyper, groups

        return build


def parameter_sweep(
    dataset: LabeledDataset,
    grid: Sequence[PriorSettings],
    config: CvConfig,
) -> tuple[int, list[AccuracyReport]]:
    """Evaluate every grid setting; pick the highest max-accuracy estimate.

    Ties break toward the smaller subspace dimension, then grid order.
    Returns the winning index plus one report per setting.
    """
    if not grid:
        raise ValueError("grid must be nonempty")
    reports = []
    for setting in grid:
        builder = setting.builder(dataset.data.shape[0], dataset.n_classes)
        reports.append(evaluate(dataset, builder, config))
    ranked = sorted(
        range(len(grid)),
        key=lambda k: (-reports[k].max_accuracy, reports[k].subspace_dimension, k),
    )
    return ranked[0], reports


def group_prevalence(E_v, labels, normalize: bool = False) -> np.ndarray:
    """Per-label accumulated coefficient mass: (C, I) matrix.

    Entry (c, i) is the l1 mass of feature i over samples of label c,
    divided by the label's sample count. ``normalize`` rescales each row to
    sum to 1.
    """
    coeffs = np.asarray(E_v, dtype=float)
    y = np.asarray(labels, dtype=int)
    if coeffs.ndim != 2 or y.shape != (coeffs.shape[1],):
        raise ValueError("coefficients must be (I, T) with one label per column")
    n_classes = int(y.max()) + 1
    counts = np.bincount(y, minlength=n_classes)
    if (counts == 0).any():
        raise ValueError("empty labels are not allowed")
    out = np.zeros((n_classes, coeffs.shape[0]))
    for c in range(n_classes):
        out[c] = np.abs(coeffs[:, y == c]).sum(axis=1) / counts[c]
    if normalize:
        sums = out.sum(axis=1, keepdims=True)
        out = out / np.where(sums > 0.0, sums, 1.0)
    return out
