"""Exception hierarchy shared by all tagrank modules."""


class TagrankError(Exception):
    """Base class for every error raised by tagrank."""


class ValidationError(TagrankError, ValueError):
    """Input data violates a schema or record invariant."""


class MalformedTreeError(TagrankError, ValueError):
    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class FormatError(TagrankError, ValueError):
    """Binary file is corrupt. ``offset`` is a byte or element offset."""

    def __init__(self, message, offset=None):
        if offset is not None:
            message = f"{message} (offset {offset})"
        super().__init__(message)
        self.offset = offset


class PreconditionError(TagrankError, ValueError):
    pass


class DataError(TagrankError, ValueError):
    """Required data (importance, scene features, ...) is missing."""


class NumericError(TagrankError, ArithmeticError):
    pass
