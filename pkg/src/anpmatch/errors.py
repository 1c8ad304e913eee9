"""Exception types carrying machine-readable error codes.

Every error raised by the library has a ``code`` (e.g. ``"DIM_MISMATCH"``)
and belongs to one of three families, which the CLI maps to exit codes.
"""


class AnpError(Exception):
    exit_code = 1

    def __init__(self, code, message="", **details):
        super().__init__(f"{code}: {message}" if message else code)
        self.code = code
        self.message = message
        self.details = details

    def to_dict(self):
        out = {"error": self.code, "message": self.message}
        if self.details:
            out["details"] = self.details
        return out


class ConfigError(AnpError):
    exit_code = 2


class DataError(AnpError):
    exit_code = 3


class NumericError(AnpError):
    exit_code = 4
