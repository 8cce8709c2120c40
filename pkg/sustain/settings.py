"""Configuration files.

The configuration is built from these, later ones winning:

1. ``default_config.toml`` shipped with Sustain
2. ``config.toml`` in the user's config directory
3. a file given with ``--config``
4. the ``SUSTAIN_SEED`` environment variable (only ``cv.seed``)
5. command line options

The result is a :class:`Config`, made of the frozen config dataclasses of the
analysis modules.
"""
from __future__ import annotations

import dataclasses
import logging
import os
from pathlib import Path
from typing import Any, Mapping, Optional

import dacite
import tomli

from sustain import dirs
from sustain.ml import CvConfig, KnnConfig
from sustain.periods import SegmentationConfig
from sustain.perturbation import PerturbationConfig
from sustain.pitch import F0Config
from sustain.signal_io import TrimConfig
from sustain.utils import merge_settings
from sustain.vibrato import VibratoConfig

log = logging.getLogger(__name__)

DEFAULTS_PATH = Path(__file__).absolute().parent / "default_config.toml"
SEED_ENV_VAR = "SUSTAIN_SEED"

_USER_FILE_PLACEHOLDER = """\
# Values in this file override Sustain's defaults. The defaults, with comments,
# are in default_config.toml inside the installed sustain package. For example:
#
#    [pitch]
#    f_min = 70.0
#
#    [cv]
#    repetitions = 100
"""


class ConfigError(Exception):
    """A configuration file or value is invalid."""


@dataclasses.dataclass(frozen=True)
class Config:
    pitch: F0Config = F0Config()
    segmentation: SegmentationConfig = SegmentationConfig()
    perturbation: PerturbationConfig = PerturbationConfig()
    vibrato: VibratoConfig = VibratoConfig()
    trim: TrimConfig = TrimConfig()
    cv: CvConfig = CvConfig()
    knn: KnnConfig = KnnConfig()


def user_config_path() -> Path:
    # not a global variable because tests monkeypatch dirs
    return Path(dirs.user_config_dir) / "config.toml"


def _read_toml(path: Path) -> dict[str, Any]:
    with path.open("rb") as file:
        return tomli.load(file)


def _load_user_file() -> dict[str, Any]:
    path = user_config_path()
    try:
        return _read_toml(path)
    except FileNotFoundError:
        log.info(f"'{path}' not found, creating")
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            with path.open("x", encoding="utf-8") as file:  # error if exists
                file.write(_USER_FILE_PLACEHOLDER)
        except OSError:
            log.exception(f"creating '{path}' failed")
    except (OSError, UnicodeError, tomli.TOMLDecodeError):
        log.exception(f"reading '{path}' failed, using defaults")
    return {}


def from_dict(data: Mapping[str, Any]) -> Config:
    """Convert nested dicts (as read from TOML) to a :class:`Config`.

    Unknown keys and values of the wrong type are errors.
    """
    try:
        return dacite.from_dict(
            Config, dict(data), config=dacite.Config(strict=True, type_hooks={float: float})
        )
    except (dacite.DaciteError, ValueError, TypeError) as e:
        raise ConfigError(str(e)) from e


def seed_from_environment() -> Optional[int]:
    text = os.environ.get(SEED_ENV_VAR, "").strip()
    if not text:
        return None
    try:
        return int(text)
    except ValueError:
        raise ConfigError(f"{SEED_ENV_VAR} must be an integer, not {text!r}") from None


def load(
    config_file: Optional[Path] = None, overrides: Mapping[str, Mapping[str, Any]] = {}
) -> Config:
    """Load the configuration, see the module docstring for the order.

    A broken user config file is logged and ignored. A broken *config_file*
    raises :class:`ConfigError`, and so do invalid *overrides*.
    """
    merged = _read_toml(DEFAULTS_PATH)

    user = _load_user_file()
    if user:
        try:
            from_dict(merge_settings(merged, user))
        except ConfigError:
            log.exception(f"invalid values in '{user_config_path()}', using defaults")
        else:
            merged = merge_settings(merged, user)

    if config_file is not None:
        try:
            merged = merge_settings(merged, _read_toml(config_file))
        except (OSError, UnicodeError, tomli.TOMLDecodeError) as e:
            raise ConfigError(f"reading '{config_file}' failed: {e}") from e

    seed = seed_from_environment()
    if seed is not None:
        merged = merge_settings(merged, {"cv": {"seed": seed}})

    merged = merge_settings(merged, {key: dict(value) for key, value in overrides.items()})
    return from_dict(merged)
