"""Feature vectors, datasets of them, and what is done to datasets before classification."""
from __future__ import annotations

import csv
import dataclasses
import enum
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import stats

from sustain import utils
from sustain.periods import SegmentationConfig, segment
from sustain.perturbation import PerturbationConfig, perturbation_report
from sustain.pitch import F0Config, estimate_f0
from sustain.signal_io import TrimConfig, Waveform, load_wav, trim_edges
from sustain.utils import AnalysisError
from sustain.vibrato import VibratoConfig, compute_pvi

log = logging.getLogger(__name__)

FEATURE_NAMES = ("J1", "J3", "J5", "S1", "S3", "S5", "S11", "PVI")
METADATA_COLUMNS = ("id", "label", "age", "sex")
KDE_GRID_SIZE = 200


class DatasetError(AnalysisError):
    stage = "features"


class Label(enum.Enum):
    r"""
    Diagnosis of a speaker.

    .. data:: ALS

        The positive class.

    .. data:: HC

        Healthy control, the negative class.

    Use :meth:`parse` for strings coming from files or the command line, it
    doesn't care about case.
    """
    ALS = "ALS"
    HC = "HC"

    @classmethod
    def parse(cls, text: str) -> Label:
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown label {text!r}, should be ALS or HC") from None

    @property
    def sign(self) -> int:
        return 1 if self == Label.ALS else -1


class Sex(enum.Enum):
    M = "M"
    F = "F"

    @classmethod
    def parse(cls, text: str) -> Sex:
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ValueError(f"unknown sex {text!r}, should be M or F") from None


@dataclasses.dataclass(frozen=True)
class FeatureVector:
    id: str
    label: Optional[Label]
    age: Optional[float]
    sex: Optional[Sex]
    features: tuple[float, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("feature vector id can't be empty")
        if not all(math.isfinite(value) for value in self.features):
            raise ValueError(f"{self.id}: feature values must be finite")


@dataclasses.dataclass(frozen=True)
class Dataset:
    vectors: tuple[FeatureVector, ...]
    provenance: str = "raw"  # or "age-corrected"
    feature_names: tuple[str, ...] = FEATURE_NAMES

    def __post_init__(self) -> None:
        ids = [v.id for v in self.vectors]
        duplicates = sorted({i for i in ids if ids.count(i) > 1})
        if duplicates:
            raise DatasetError(f"duplicate ids: {', '.join(duplicates)}")
        for v in self.vectors:
            if len(v.features) != len(self.feature_names):
                raise DatasetError(
                    f"{v.id} has {len(v.features)} features, expected {len(self.feature_names)}"
                )

    def __len__(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        return np.array([v.features for v in self.vectors], dtype=np.float64).reshape(
            len(self.vectors), len(self.feature_names)
        )

    def signs(self) -> np.ndarray:
        """Labels as +1 (ALS) and -1 (HC)."""
        missing = [v.id for v in self.vectors if v.label is None]
        if missing:
            raise DatasetError(f"no label for {', '.join(missing)}")
        return np.array([v.label.sign for v in self.vectors if v.label is not None])


def feature_indices(
    names: Iterable[str], available: Sequence[str] = FEATURE_NAMES
) -> tuple[int, ...]:
    """Positions of feature names, ignoring case.

    >>> feature_indices(["s1", "S3", "PVI"])
    (3, 4, 7)
    """
    lookup = {name.upper(): index for index, name in enumerate(available)}
    result = []
    for name in names:
        if name.strip().upper() not in lookup:
            raise DatasetError(f"unknown feature {name!r}, choose from {', '.join(available)}")
        result.append(lookup[name.strip().upper()])
    if not result:
        raise DatasetError("feature subset is empty")
    if len(set(result)) != len(result):
        raise DatasetError("feature subset contains the same feature twice")
    return tuple(result)


def extract_features(
    w: Waveform,
    *,
    pitch: F0Config = F0Config(),
    segmentation: SegmentationConfig = SegmentationConfig(),
    perturbation: PerturbationConfig = PerturbationConfig(),
    vibrato: VibratoConfig = VibratoConfig(),
    method: str = "wm-pc",
) -> tuple[float, ...]:
    """Compute the feature values of one recording, in :data:`FEATURE_NAMES` order."""
    start = time.perf_counter()
    contour = estimate_f0(w, pitch)
    cycles = segment(w, contour, method, segmentation, pitch)
    report = perturbation_report(cycles.periods, cycles.amplitudes, perturbation)
    pvi = compute_pvi(contour, vibrato).pvi
    log.debug(f"extracted features in {time.perf_counter() - start:.3f} seconds")
    return (*report.as_list(), pvi)


def _extract_file(path: Path, trim: TrimConfig, kwargs: dict[str, object]) -> tuple[float, ...]:
    try:
        w = trim_edges(load_wav(path), trim.head_s, trim.tail_s)
        return extract_features(w, **kwargs)  # type: ignore[arg-type]
    except AnalysisError as e:
        # keep the class, so that the stage stays correct
        raise type(e)(f"{path}: {e}") from e


def extract_many(
    paths: Sequence[Path],
    *,
    trim: TrimConfig = TrimConfig(),
    jobs: int = 1,
    pitch: F0Config = F0Config(),
    segmentation: SegmentationConfig = SegmentationConfig(),
    perturbation: PerturbationConfig = PerturbationConfig(),
    vibrato: VibratoConfig = VibratoConfig(),
    method: str = "wm-pc",
) -> list[tuple[float, ...]]:
    """Extract features from several files, in a thread pool if *jobs* > 1.

    The result is in the same order as *paths*.
    """
    kwargs: dict[str, object] = dict(
        pitch=pitch,
        segmentation=segmentation,
        perturbation=perturbation,
        vibrato=vibrato,
        method=method,
    )
    if jobs <= 1 or len(paths) <= 1:
        return [_extract_file(path, trim, kwargs) for path in paths]

    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda path: _extract_file(path, trim, kwargs), paths))


def age_correct(d: Dataset) -> Dataset:
    """Remove the linear age trend of each feature, as seen in the healthy group.

    For each feature, a line is fitted to the healthy speakers' values against
    age, and every speaker's value ``x`` becomes
    ``x - slope * (age - mean healthy age)``. The mean of the healthy group
    doesn't change.
    """
    no_age = [v.id for v in d.vectors if v.age is None]
    if no_age:
        raise DatasetError(f"age correction needs every age, missing for {', '.join(no_age)}")
    labels = d.signs()
    ages = np.array([v.age for v in d.vectors], dtype=np.float64)
    healthy = labels == Label.HC.sign
    if healthy.sum() < 2:
        raise DatasetError("age correction needs at least 2 healthy speakers")
    if np.ptp(ages[healthy]) == 0:
        raise DatasetError("all healthy speakers have the same age, can't fit an age trend")

    x = d.matrix()
    mean_age = ages[healthy].mean()
    slopes = np.array(
        [stats.linregress(ages[healthy], x[healthy, j]).slope for j in range(x.shape[1])]
    )
    log.info(
        "age slopes per year: "
        + ", ".join(f"{name}={slope:.4g}" for name, slope in zip(d.feature_names, slopes))
    )
    corrected = x - np.outer(ages - mean_age, slopes)

    vectors = tuple(
        dataclasses.replace(v, features=tuple(float(value) for value in row))
        for v, row in zip(d.vectors, corrected)
    )
    return Dataset(vectors, "age-corrected", d.feature_names)


def write_csv(d: Dataset, path: Path) -> None:
    utils.write_csv(
        path,
        [*METADATA_COLUMNS, *d.feature_names],
        (
            [
                v.id,
                "" if v.label is None else v.label.value,
                None if v.age is None else float(v.age),
                "" if v.sex is None else v.sex.value,
                *v.features,
            ]
            for v in d.vectors
        ),
    )


def _parse_optional_float(text: str) -> Optional[float]:
    return float(text) if text.strip() else None


def read_csv(path: Path, provenance: str = "raw") -> Dataset:
    """Read a dataset written by :func:`write_csv` (or by hand, or by another program).

    Labels and sexes are case-insensitive. Label, age and sex may be left empty.
    """
    try:
        with path.open(encoding="utf-8", newline="") as file:
            rows = list(csv.reader(file))
    except FileNotFoundError:
        raise DatasetError(f"no such file: {path}") from None

    if not rows:
        raise DatasetError(f"{path} is empty")
    header = [cell.strip() for cell in rows[0]]
    if tuple(header[:4]) != METADATA_COLUMNS or len(header) < 5:
        raise DatasetError(
            f"{path}, line 1: header must start with {','.join(METADATA_COLUMNS)}"
            " and name at least one feature"
        )
    feature_names = tuple(header[4:])

    vectors = []
    seen: set[str] = set()
    for line_number, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        where = f"{path}, line {line_number}"
        if len(row) != len(header):
            raise DatasetError(f"{where}: expected {len(header)} columns, got {len(row)}")
        id_, label, age, sex, *values = row
        if id_ in seen:
            raise DatasetError(f"{where}: duplicate id {id_!r}")
        seen.add(id_)
        try:
            vectors.append(
                FeatureVector(
                    id=id_,
                    label=Label.parse(label) if label.strip() else None,
                    age=_parse_optional_float(age),
                    sex=Sex.parse(sex) if sex.strip() else None,
                    features=tuple(float(value) for value in values),
                )
            )
        except ValueError as e:
            raise DatasetError(f"{where}: {e}") from e

    log.debug(f"read {len(vectors)} feature vectors from {path}")
    return Dataset(tuple(vectors), provenance, feature_names)


@dataclasses.dataclass(frozen=True, eq=False)
class GroupSummary:
    n: int
    mean: float
    sd: float
    median: float
    q1: float
    q3: float
    minimum: float
    maximum: float
    grid: np.ndarray
    density: np.ndarray

    def to_json(self) -> dict[str, float]:
        return {
            field.name: getattr(self, field.name)
            for field in dataclasses.fields(self)
            if field.name not in ("grid", "density")
        }


def _bandwidth(values: np.ndarray) -> float:
    if len(values) < 2 or np.ptp(values) == 0:
        return 0.0
    kde = stats.gaussian_kde(values, bw_method="silverman")
    return float(np.sqrt(kde.covariance[0, 0]))


def group_stats(d: Dataset, feature_index: int) -> dict[Label, GroupSummary]:
    """Summary statistics and a kernel density estimate of one feature, per label.

    Both densities are sampled on the same grid, which covers all values of
    both groups plus three kernel bandwidths on each side. A group whose
    values are all equal gets a spike with unit area at that value.
    """
    if not 0 <= feature_index < len(d.feature_names):
        raise DatasetError(f"no feature at index {feature_index}")
    column = d.matrix()[:, feature_index]
    signs = d.signs()
    groups = {label: column[signs == label.sign] for label in Label}
    for label, values in groups.items():
        if len(values) == 0:
            raise DatasetError(f"no {label.value} samples in the dataset")

    margin = 3 * max(_bandwidth(values) for values in groups.values())
    low, high = column.min() - margin, column.max() + margin
    if high == low:
        low, high = low - 0.5, high + 0.5
    grid = np.linspace(low, high, KDE_GRID_SIZE)

    result = {}
    for label, values in groups.items():
        if _bandwidth(values) > 0:
            density = stats.gaussian_kde(values, bw_method="silverman")(grid)
        else:
            density = np.zeros(KDE_GRID_SIZE)
            density[np.argmin(np.abs(grid - values[0]))] = 1 / (grid[1] - grid[0])
        q1, median, q3 = np.percentile(values, [25, 50, 75])
        result[label] = GroupSummary(
            n=len(values),
            mean=float(values.mean()),
            sd=float(values.std(ddof=1)) if len(values) > 1 else 0.0,
            median=float(median),
            q1=float(q1),
            q3=float(q3),
            minimum=float(values.min()),
            maximum=float(values.max()),
            grid=grid,
            density=density,
        )
    return result
