"""Exception types shared across the package."""


class DataFormatError(ValueError):
    """A file or byte stream does not conform to one of the on-disk formats.

    The message names the offending file region (offset, record index or
    field) so that truncation and corruption are diagnosable.
    """
