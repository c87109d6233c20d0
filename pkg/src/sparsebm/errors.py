"""Exception types shared across the package."""


class SparsebmError(Exception):
    """Base class for errors raised by this package."""


class FileFormatError(SparsebmError):
    """A text input (docword, vocab, model, skeleton, embedding file) could
    not be parsed; the message names the offending line where possible."""


class StructureError(SparsebmError):
    """Inputs parsed fine but violate a structural contract, e.g. mismatched
    dimensions between files, overlapping skeleton groups, or a hidden graph
    that is not a forest."""
