"""Exception types raised across the package."""


class SeastitchError(Exception):
    """Base class for all package errors."""


class NoIntersection(SeastitchError, ValueError):
    """A pixel ray is horizontal or points upward and never reaches the sea plane."""


class BehindCamera(SeastitchError, ValueError):
    """A world point lies outside the forward half-space of the camera."""


class EmptyInput(SeastitchError, ValueError):
    pass


class MetadataGap(SeastitchError, KeyError):
    """An observation references a frame without a metadata record."""

    def __init__(self, frame):
        self.frame = frame
        super().__init__(f"no metadata record for frame {frame}")

    def __str__(self):
        return self.args[0]


class ParseError(SeastitchError, ValueError):
    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where += f"{path}:"
        if line is not None:
            where += f"{line}:"
        super().__init__(f"{where} {message}" if where else message)


class MissingField(ParseError):
    def __init__(self, field, frame=None, path=None):
        self.field = field
        self.frame = frame
        msg = f"missing field {field!r}"
        if frame is not None:
            msg += f" in record for frame {frame}"
        super().__init__(msg, path=path)


class RangeError(ParseError):
    pass


class UnknownKey(SeastitchError, KeyError):
    def __init__(self, key):
        self.key = key
        super().__init__(f"unknown configuration key {key!r}")

    def __str__(self):
        return self.args[0]


class ConfigTypeError(SeastitchError, TypeError):
    pass


class FrameRangeMismatch(SeastitchError, ValueError):
    pass


class InvalidSpec(SeastitchError, ValueError):
    pass
