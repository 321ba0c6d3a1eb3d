"""Exception hierarchy shared by all regionnet modules."""


class RegionNetError(Exception):
    """Base class for every error raised by regionnet."""


class FormatError(RegionNetError, ValueError):
    """An input file does not match its declared format."""

    def __init__(self, message, path=None, line=None):
        self.path = path
        self.line = line
        where = ""
        if path is not None:
            where = f"{path}"
            if line is not None:
                where += f":{line}"
            where += ": "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)


class IngestError(FormatError):
    """A record refers to an unknown node or carries an invalid value."""


class EmptyGraphError(RegionNetError, ValueError):
    """The graph has no weight (W = 0) or no nodes, so it cannot be partitioned."""


class PartitionMismatchError(RegionNetError, ValueError):
    """A partition does not cover exactly the node set it is used with."""


class DegeneratePartitionError(RegionNetError, ValueError):
    """An index is undefined for the given partition (e.g. Fowlkes-Mallows on all singletons)."""


class GeometryError(RegionNetError, ValueError):
    """Spatial information is missing or degenerate."""
