"""Sustain analyses sustained vowel phonations.

It segments a recording into fundamental periods, measures jitter, shimmer and
the pathological vibrato index, and evaluates LDA and k-NN classifiers that
separate speakers with bulbar ALS from healthy controls. Most people use it
through the ``sustain`` command, see ``sustain --help``.
"""

import sys

import appdirs

version_info = (2023, 2, 14)
__version__ = "%d.%02d.%02d" % version_info
__license__ = "MIT"

if sys.platform in {"win32", "darwin"}:
    # these platforms like path names like "Program Files" or "Application Support"
    dirs = appdirs.AppDirs("Sustain")
else:
    dirs = appdirs.AppDirs("sustain")
