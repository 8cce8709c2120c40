"""Classifiers and how they are evaluated.

Labels are +1 for ALS (positive) and -1 for healthy controls. Models are
immutable after training, so predicting from several threads is fine.
"""
from __future__ import annotations

import dataclasses
import itertools
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Optional, Sequence, Union

import numpy as np
import scipy.linalg
from scipy.spatial import distance

from sustain.features import Dataset, feature_indices
from sustain.utils import AnalysisError, format_mean_sd

log = logging.getLogger(__name__)

MODEL_NAMES = ("lda", "knn", "majority")
MAX_SEARCH_FEATURES = 20
_MAX_CONDITION = 1e12
_RIDGE_SCALE = 1e-6


class ClassifierError(AnalysisError):
    stage = "ml"


@dataclasses.dataclass(frozen=True)
class CvConfig:
    folds: int = 7
    repetitions: int = 40
    seed: int = 0
    stratified: bool = True

    def __post_init__(self) -> None:
        if self.folds < 2:
            raise ValueError(f"need at least 2 folds, not {self.folds}")
        if self.repetitions < 1:
            raise ValueError("need at least 1 repetition")


@dataclasses.dataclass(frozen=True)
class KnnConfig:
    k: int = 3

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError(f"k must be at least 1, not {self.k}")


def _check_training_data(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2 or len(x) != len(y):
        raise ClassifierError("training data must be an (n_samples, n_features) array")
    if len(x) < 2:
        raise ClassifierError("need at least 2 training samples")
    if not np.all(np.isin(y, (-1, 1))):
        raise ClassifierError("labels must be +1 or -1")
    if len(np.unique(y)) != 2:
        raise ClassifierError("training data contains only one class")
    return x, y


def _check_queries(x: np.ndarray, dimensions: int) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[None, :] if dimensions > 1 or len(x) == 1 else x[:, None]
    if x.ndim != 2 or x.shape[1] != dimensions:
        raise ClassifierError(f"expected {dimensions} features, got data of shape {x.shape}")
    return x


def _regularize(matrix: np.ndarray, what: str) -> np.ndarray:
    """Add a small ridge to a nearly singular symmetric matrix."""
    condition = np.linalg.cond(matrix)
    if np.isfinite(condition) and condition <= _MAX_CONDITION:
        return matrix
    dimensions = matrix.shape[0]
    ridge = _RIDGE_SCALE * np.trace(matrix) / dimensions
    if ridge <= 0:
        ridge = _RIDGE_SCALE
    log.info(
        f"{what} is ill-conditioned (condition number {condition:.3g}), adding ridge {ridge:.3g}"
    )
    return matrix + ridge * np.eye(dimensions)


@dataclasses.dataclass(frozen=True, eq=False)
class LdaModel:
    w: np.ndarray
    b: float


def lda_train(x: np.ndarray, y: np.ndarray) -> LdaModel:
    """Fisher's linear discriminant with the threshold halfway between the projected class means."""
    x, y = _check_training_data(x, y)
    positive, negative = x[y == 1], x[y == -1]
    mean_pos, mean_neg = positive.mean(axis=0), negative.mean(axis=0)

    scatter = (positive - mean_pos).T @ (positive - mean_pos)
    scatter += (negative - mean_neg).T @ (negative - mean_neg)
    scatter = _regularize(scatter, "within-class scatter")

    w = scipy.linalg.solve(scatter, mean_pos - mean_neg, assume_a="sym")
    if not np.any(w):
        raise ClassifierError("class means are identical, there is no discriminant direction")
    b = -float(w @ (mean_pos + mean_neg)) / 2
    return LdaModel(w, b)


def lda_scores(m: LdaModel, x: np.ndarray) -> np.ndarray:
    return _check_queries(x, len(m.w)) @ m.w + m.b


def lda_predict(m: LdaModel, x: np.ndarray) -> np.ndarray:
    """Sign of the discriminant score for each row of *x*. A score of exactly 0 gives +1."""
    return np.where(lda_scores(m, x) >= 0, 1, -1)


def _check_spd(inverse_covariance: np.ndarray) -> None:
    if not np.allclose(inverse_covariance, inverse_covariance.T):
        raise ClassifierError("inverse covariance matrix is not symmetric")
    try:
        scipy.linalg.cholesky(inverse_covariance)
    except np.linalg.LinAlgError:
        raise ClassifierError("inverse covariance matrix is not positive definite") from None


def mahalanobis(x: np.ndarray, y: np.ndarray, inverse_covariance: np.ndarray) -> float:
    """Distance between two points, measured with an inverse covariance matrix.

    >>> mahalanobis(np.array([0, 0]), np.array([3, 4]), np.eye(2))
    5.0
    """
    inverse_covariance = np.atleast_2d(np.asarray(inverse_covariance, dtype=np.float64))
    x = np.atleast_1d(np.asarray(x, dtype=np.float64))
    y = np.atleast_1d(np.asarray(y, dtype=np.float64))
    if not (x.shape == y.shape == inverse_covariance.shape[:1]):
        raise ClassifierError("dimensions of points and covariance don't match")
    _check_spd(inverse_covariance)
    return float(distance.mahalanobis(x, y, inverse_covariance))


@dataclasses.dataclass(frozen=True, eq=False)
class KnnModel:
    x: np.ndarray
    y: np.ndarray
    inverse_covariance: np.ndarray
    k: int = 3


def knn_train(x: np.ndarray, y: np.ndarray, k: int = 3) -> KnnModel:
    """Store the training data and the inverse of its covariance (both classes pooled)."""
    x, y = _check_training_data(x, y)
    for sign in (1, -1):
        if np.count_nonzero(y == sign) < k:
            raise ClassifierError(
                f"class {sign:+d} has {np.count_nonzero(y == sign)} training samples, need {k}"
            )
    covariance = np.atleast_2d(np.cov(x, rowvar=False))
    covariance = _regularize(covariance, "feature covariance")
    inverse = scipy.linalg.inv(covariance)
    inverse = (inverse + inverse.T) / 2
    _check_spd(inverse)
    return KnnModel(x, y, inverse, k)


def knn_predict(m: KnnModel, x: np.ndarray) -> np.ndarray:
    """Distance-weighted vote of the *k* nearest samples of each class.

    The vote is the sum of ``1/distance`` over the positive neighbours minus
    the same sum over the negative ones. A query that coincides with a
    training sample gets that sample's label. A vote of exactly 0 gives +1.
    """
    queries = _check_queries(x, m.x.shape[1])
    distances = distance.cdist(queries, m.x, "mahalanobis", VI=m.inverse_covariance)

    result = np.empty(len(queries), dtype=np.int64)
    for row, d in enumerate(distances):
        if np.any(d == 0):
            result[row] = m.y[np.argmin(d)]
            continue
        votes = [(1 / np.sort(d[m.y == sign])[: m.k]).sum() for sign in (1, -1)]
        result[row] = 1 if votes[0] >= votes[1] else -1
    return result


@dataclasses.dataclass(frozen=True)
class MajorityModel:
    label: int


def majority_train(y: np.ndarray) -> MajorityModel:
    """A baseline that ignores the features and always predicts the most common training label."""
    y = np.asarray(y)
    positives = int(np.count_nonzero(y == 1))
    return MajorityModel(1 if positives * 2 >= len(y) else -1)


_Model = Union[LdaModel, KnnModel, MajorityModel]


def train(model: str, x: np.ndarray, y: np.ndarray, knn: KnnConfig = KnnConfig()) -> _Model:
    if model == "lda":
        return lda_train(x, y)
    if model == "knn":
        return knn_train(x, y, knn.k)
    if model == "majority":
        return majority_train(y)
    raise ValueError(f"unknown model {model!r}, choose from {', '.join(MODEL_NAMES)}")


def predict(m: _Model, x: np.ndarray) -> np.ndarray:
    if isinstance(m, LdaModel):
        return lda_predict(m, x)
    if isinstance(m, KnnModel):
        return knn_predict(m, x)
    return np.full(len(np.atleast_1d(x)), m.label)


@dataclasses.dataclass(frozen=True)
class ConfusionMetrics:
    """Rates in percent. ``None`` means that the rate is undefined."""

    accuracy: float
    sensitivity: Optional[float]
    specificity: Optional[float]
    r_avg: Optional[float]


def confusion_metrics(tp: int, tn: int, fp: int, fn: int) -> ConfusionMetrics:
    """Accuracy, sensitivity, specificity and their average (averaged recall).

    >>> m = confusion_metrics(13, 36, 3, 2)
    >>> round(m.accuracy, 2), round(m.sensitivity, 2), round(m.specificity, 2), round(m.r_avg, 2)
    (90.74, 86.67, 92.31, 89.49)
    """
    if min(tp, tn, fp, fn) < 0:
        raise ClassifierError("confusion counts can't be negative")
    total = tp + tn + fp + fn
    if total == 0:
        raise ClassifierError("confusion matrix is empty")

    sensitivity = 100 * tp / (tp + fn) if tp + fn else None
    specificity = 100 * tn / (tn + fp) if tn + fp else None
    if sensitivity is None or specificity is None:
        r_avg = None
    else:
        r_avg = (sensitivity + specificity) / 2
    return ConfusionMetrics(100 * (tp + tn) / total, sensitivity, specificity, r_avg)


def fold_assignment(
    y: np.ndarray, folds: int, rng: np.random.Generator, stratified: bool = True
) -> np.ndarray:
    """Fold number of each sample.

    The samples are shuffled (each class separately, one class after the
    other, when *stratified*) and dealt to the folds like cards, so fold sizes
    differ by at most one and so do the class counts of the folds.
    """
    y = np.asarray(y)
    if folds > len(y):
        raise ClassifierError(f"can't split {len(y)} samples into {folds} folds")
    if stratified:
        order_parts = []
        for sign in np.unique(y):
            members = np.flatnonzero(y == sign)
            if len(members) < folds:
                raise ClassifierError(
                    f"class {sign:+d} has {len(members)} samples,"
                    f" too few for {folds} stratified folds"
                )
            order_parts.append(rng.permutation(members))
        order = np.concatenate(order_parts)
    else:
        order = rng.permutation(len(y))

    assignment = np.empty(len(y), dtype=np.int64)
    assignment[order] = np.arange(len(y)) % folds
    return assignment


@dataclasses.dataclass(frozen=True)
class MeanSd:
    mean: Optional[float]
    sd: Optional[float]

    @classmethod
    def of(cls, values: Sequence[float]) -> MeanSd:
        if not values:
            return cls(None, None)
        array = np.asarray(values, dtype=np.float64)
        sd = float(array.std(ddof=1)) if len(array) > 1 else None
        return cls(float(array.mean()), sd)

    def __str__(self) -> str:
        return format_mean_sd(self.mean, self.sd)


@dataclasses.dataclass(frozen=True)
class EvalReport:
    model: str
    features: tuple[str, ...]
    confusions: tuple[tuple[int, int, int, int], ...]  # (TP, TN, FP, FN) of each repetition
    accuracy: MeanSd
    sensitivity: MeanSd
    specificity: MeanSd
    r_avg: Optional[float]
    undefined_repetitions: int = 0

    def to_json(self) -> dict[str, Any]:
        return {
            "model": self.model,
            "features": list(self.features),
            "r_avg": self.r_avg,
            "accuracy": dataclasses.asdict(self.accuracy),
            "sensitivity": dataclasses.asdict(self.sensitivity),
            "specificity": dataclasses.asdict(self.specificity),
            "undefined_repetitions": self.undefined_repetitions,
            "confusions": [
                dict(zip(("tp", "tn", "fp", "fn"), counts)) for counts in self.confusions
            ],
        }


def _run_repetition(
    x: np.ndarray, y: np.ndarray, model: str, cfg: CvConfig, knn: KnnConfig, repetition: int
) -> tuple[int, int, int, int]:
    rng = np.random.default_rng(cfg.seed + repetition)
    assignment = fold_assignment(y, cfg.folds, rng, cfg.stratified)
    predictions = np.empty(len(y), dtype=np.int64)
    for fold in range(cfg.folds):
        test = assignment == fold
        trained = train(model, x[~test], y[~test], knn)
        predictions[test] = predict(trained, x[test])

    tp = int(np.count_nonzero((predictions == 1) & (y == 1)))
    tn = int(np.count_nonzero((predictions == -1) & (y == -1)))
    fp = int(np.count_nonzero((predictions == 1) & (y == -1)))
    fn = int(np.count_nonzero((predictions == -1) & (y == 1)))
    return (tp, tn, fp, fn)


def cross_validate(
    d: Dataset,
    model: str,
    subset: Optional[Sequence[str]] = None,
    cfg: CvConfig = CvConfig(),
    knn: KnnConfig = KnnConfig(),
) -> EvalReport:
    """Repeated k-fold cross-validation.

    Repetition ``r`` shuffles with seed ``cfg.seed + r``. Every sample is
    tested exactly once per repetition, and one confusion matrix is
    accumulated per repetition. Means and standard deviations are taken over
    repetitions, and the averaged recall comes from the mean sensitivity and
    specificity.
    """
    if model not in MODEL_NAMES:
        raise ValueError(f"unknown model {model!r}, choose from {', '.join(MODEL_NAMES)}")
    names = d.feature_names if subset is None else subset
    columns = feature_indices(names, d.feature_names)
    x = d.matrix()[:, columns]
    y = d.signs()

    confusions = tuple(
        _run_repetition(x, y, model, cfg, knn, repetition) for repetition in range(cfg.repetitions)
    )
    metrics = [confusion_metrics(*counts) for counts in confusions]
    undefined = sum(m.sensitivity is None or m.specificity is None for m in metrics)
    if undefined:
        log.warning(f"{undefined} repetitions had undefined rates, leaving them out of the means")

    sensitivity = MeanSd.of([m.sensitivity for m in metrics if m.sensitivity is not None])
    specificity = MeanSd.of([m.specificity for m in metrics if m.specificity is not None])
    if sensitivity.mean is None or specificity.mean is None:
        r_avg = None
    else:
        r_avg = (sensitivity.mean + specificity.mean) / 2

    return EvalReport(
        model=model,
        features=tuple(d.feature_names[i] for i in columns),
        confusions=confusions,
        accuracy=MeanSd.of([m.accuracy for m in metrics]),
        sensitivity=sensitivity,
        specificity=specificity,
        r_avg=r_avg,
        undefined_repetitions=undefined,
    )


@dataclasses.dataclass(frozen=True)
class SubsetResult:
    features: tuple[str, ...]
    report: EvalReport


def _ranking_key(result: SubsetResult) -> tuple[float, float, int]:
    r_avg = result.report.r_avg
    accuracy = result.report.accuracy.mean
    return (
        -(r_avg if r_avg is not None else -np.inf),
        -(accuracy if accuracy is not None else -np.inf),
        len(result.features),
    )


def subset_search(
    d: Dataset,
    model: str,
    cfg: CvConfig = CvConfig(),
    knn: KnnConfig = KnnConfig(),
    *,
    candidates: Optional[Sequence[str]] = None,
    jobs: int = 1,
) -> list[SubsetResult]:
    """Cross-validate every non-empty subset of the features and rank them.

    Best averaged recall comes first. Ties go to higher accuracy, then to
    fewer features. *candidates* limits the search to some of the features.
    """
    pool = tuple(d.feature_names) if candidates is None else tuple(candidates)
    indices = feature_indices(pool, d.feature_names)
    if len(indices) > MAX_SEARCH_FEATURES:
        raise ClassifierError(
            f"{len(indices)} features would mean {2 ** len(indices) - 1} subsets,"
            f" at most {MAX_SEARCH_FEATURES} features can be searched"
        )
    names = [d.feature_names[i] for i in indices]
    subsets = [
        combination
        for size in range(1, len(names) + 1)
        for combination in itertools.combinations(names, size)
    ]
    log.info(f"evaluating {len(subsets)} feature subsets with {model}")

    def evaluate(subset: tuple[str, ...]) -> SubsetResult:
        return SubsetResult(subset, cross_validate(d, model, subset, cfg, knn))

    if jobs <= 1:
        results = [evaluate(subset) for subset in subsets]
    else:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(evaluate, subsets))
    return sorted(results, key=_ranking_key)


def format_table(results: Sequence[SubsetResult], top: Optional[int] = None) -> str:
    """Text table of search results, best first, one row per subset."""
    shown = results if top is None else results[:top]
    rows = [("Features", "R_avg", "Acc", "Sens", "Spec")]
    for result in shown:
        report = result.report
        rows.append(
            (
                ",".join(result.features),
                format_mean_sd(report.r_avg, None),
                str(report.accuracy),
                str(report.sensitivity),
                str(report.specificity),
            )
        )
    widths = [max(len(row[column]) for row in rows) for column in range(len(rows[0]))]
    return "\n".join(
        "  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows
    )
