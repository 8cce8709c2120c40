"""Synthetic datasets shaped like a small clinical cohort.

Real patient recordings are not distributed with this package. For testing
the classifiers, :func:`make_cohort` produces feature vectors with the same
group sizes and age distributions as a 54-speaker study (39 healthy, 15 ALS),
with a tunable difference between the groups.
"""
from __future__ import annotations

import dataclasses
import logging
import textwrap

import numpy as np

from sustain.features import FEATURE_NAMES, Dataset, FeatureVector, Label, Sex, feature_indices
from sustain.utils import AnalysisError

log = logging.getLogger(__name__)

PUBLIC_DATASET_URL = "https://github.com/Mak-Sim/Troparion/tree/master/SPA2019"

# typical values of healthy voices, per feature in FEATURE_NAMES order
BASE_MEANS = (0.45, 0.25, 0.27, 3.2, 1.6, 1.9, 2.6, 0.010)
BASE_SDS = (0.20, 0.12, 0.12, 1.1, 0.55, 0.65, 0.9, 0.004)


class CohortSpecError(AnalysisError):
    stage = "cohort"


@dataclasses.dataclass(frozen=True)
class GroupSpec:
    count: int
    age_mean: float
    age_sd: float
    age_min: float
    age_max: float
    males: int  # out of males_of
    males_of: int


@dataclasses.dataclass(frozen=True)
class CohortSpec:
    n_healthy: int = 39
    n_als: int = 15
    healthy_age_mean: float = 41.9
    healthy_age_sd: float = 16.3
    healthy_age_range: tuple[float, float] = (18, 82)
    als_age_mean: float = 57.7
    als_age_sd: float = 9.0
    als_age_range: tuple[float, float] = (40, 70)
    separation: float = 0.0  # ALS shift of informative features, in units of their SD
    informative: tuple[str, ...] = FEATURE_NAMES
    age_slope: float = 0.0  # feature SDs per year, added to both groups

    def check(self) -> None:
        if self.n_healthy <= 0 or self.n_als <= 0:
            raise CohortSpecError("both groups need at least one speaker")
        if self.healthy_age_sd <= 0 or self.als_age_sd <= 0:
            raise CohortSpecError("age standard deviations must be positive")
        for low, high in (self.healthy_age_range, self.als_age_range):
            if not low < high:
                raise CohortSpecError(f"bad age range: {low} to {high}")
        if self.separation < 0:
            raise CohortSpecError("separation can't be negative")
        feature_indices(self.informative)

    def groups(self) -> dict[Label, GroupSpec]:
        # sex ratios of the recorded groups: 23 of 39 healthy and 6 of 15 ALS speakers are male
        healthy_low, healthy_high = self.healthy_age_range
        als_low, als_high = self.als_age_range
        return {
            Label.HC: GroupSpec(
                self.n_healthy,
                self.healthy_age_mean,
                self.healthy_age_sd,
                healthy_low,
                healthy_high,
                males=23,
                males_of=39,
            ),
            Label.ALS: GroupSpec(
                self.n_als,
                self.als_age_mean,
                self.als_age_sd,
                als_low,
                als_high,
                males=6,
                males_of=15,
            ),
        }


def make_cohort(spec: CohortSpec = CohortSpec(), seed: int = 0) -> Dataset:
    """Generate a dataset following *spec*. The same seed always gives the same dataset.

    Healthy speakers' features are normally distributed around
    :data:`BASE_MEANS`. ALS speakers get ``separation`` standard deviations
    added to the informative features.
    """
    spec.check()
    rng = np.random.default_rng(seed)
    means = np.array(BASE_MEANS)
    sds = np.array(BASE_SDS)
    shift = np.zeros(len(FEATURE_NAMES))
    shift[list(feature_indices(spec.informative))] = spec.separation

    vectors = []
    for label, group in spec.groups().items():
        ages = np.clip(
            rng.normal(group.age_mean, group.age_sd, group.count), group.age_min, group.age_max
        ).round()
        n_males = round(group.count * group.males / group.males_of)
        sexes = rng.permutation([Sex.M] * n_males + [Sex.F] * (group.count - n_males))

        noise = rng.standard_normal((group.count, len(FEATURE_NAMES)))
        values = means + sds * noise
        if label == Label.ALS:
            values += sds * shift
        values += spec.age_slope * sds * (ages - spec.healthy_age_mean)[:, None]

        for index in range(group.count):
            vectors.append(
                FeatureVector(
                    id=f"{label.value}{index + 1:02d}",
                    label=label,
                    age=float(ages[index]),
                    sex=sexes[index],
                    features=tuple(float(value) for value in values[index]),
                )
            )

    log.debug(f"generated a cohort of {len(vectors)} speakers with seed {seed}")
    return Dataset(tuple(vectors))


def describe_public_dataset() -> str:
    """Instructions for getting the real recordings. Nothing is downloaded."""
    return textwrap.dedent(
        f"""\
        The recordings of a 54-speaker cohort (39 healthy, 15 with ALS; sustained
        /a/, 16-bit PCM at 44.1 kHz, recorded with a smartphone headset) are
        published at:

            {PUBLIC_DATASET_URL}

        They are not redistributed with this package. To use them:

          1. Clone or download the repository and locate the WAV files.
          2. Run 'sustain extract --input FILE --id ID --label ALS|HC --age AGE --sex M|F
             --out ID.csv' for every recording, or give several --input options and
             fill in the label, age and sex columns of the resulting CSV afterwards.
          3. Run 'sustain age-correct' on the combined CSV, then 'sustain classify'
             or 'sustain search' on the result.
        """
    )
