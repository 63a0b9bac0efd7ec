"""Error taxonomy shared across the package.

The command-line layer maps these onto process exit codes:

* ``UsageError``          -> 1 (bad flags, bad config values)
* ``DataError``           -> 2 (missing/malformed input files, empty corpora)
* ``CompatibilityError``  -> 3 (artifacts that do not belong together,
  e.g. a model trained on one detector applied to features of another)
"""


class UsageError(Exception):
    """Invalid command-line usage or configuration."""


class DataError(Exception):
    """Input data is missing, malformed, or insufficient."""


class CompatibilityError(Exception):
    """Two artifacts (model/features/pattern) do not match."""
