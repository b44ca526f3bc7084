"""Exception types shared across the package.

The CLI maps these onto distinct exit codes, so library code should raise
the most specific one that applies rather than bare ValueError where the
failure concerns user-supplied configs, files, or numeric health.
"""


class ConfigError(Exception):
    """Bad or unknown configuration key, value, or flag."""


class DataFormatError(Exception):
    """Malformed or incompatible on-disk artifact (dataset, checkpoint, dump)."""


class GenerationError(Exception):
    """Scene synthesis could not satisfy its constraints."""


class NumericError(Exception):
    """Non-finite value where a finite one is required (e.g. training loss)."""


class DegenerateRotationError(ValueError):
    """6D rotation parameters too close to linearly dependent to orthonormalize."""
