import os
import sys

sys.path.insert(0, os.path.abspath(".."))
import sustain

extensions = ["sphinx.ext.intersphinx", "sphinx.ext.coverage", "sphinx.ext.autodoc"]

source_suffix = ".rst"

master_doc = "index"

project = "Sustain"
author = "the Sustain developers"

nitpicky = False

# The version info for the project you're documenting, acts as replacement for
# |version| and |release|, also used in various other places throughout the
# built documents.
version = sustain.__version__
release = sustain.__version__

language = None
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = "sphinx"

html_theme = "alabaster"

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable/", None),
    "scipy": ("https://docs.scipy.org/doc/scipy/", None),
}

autodoc_member_order = "bysource"
