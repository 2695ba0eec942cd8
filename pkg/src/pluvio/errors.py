"""Exception hierarchy shared by all pluvio modules.

The CLI maps these onto exit codes: ConfigError -> 1, DataError -> 2.
"""


class PluvioError(Exception):
    pass


class ConfigError(PluvioError, ValueError):
    """Bad configuration file, unknown key, or out-of-range parameter."""


class DataError(PluvioError):
    """Unreadable or inconsistent input data."""


class FrameDecodeError(DataError):
    def __init__(self, index, reason):
        super().__init__(f"cannot decode frame {index}: {reason}")
        self.index = index
        self.reason = reason


class IsotropicBlobError(ValueError):
    """Blob with m20 == m02 and m11 == 0: orientation is undefined."""


class NoEvidenceError(ValueError):
    """Histogram carries zero mass, so no mixture can be fitted."""
