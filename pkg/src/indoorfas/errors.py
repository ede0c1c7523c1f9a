"""Exception types shared across the package."""


class DomainError(ValueError):
    """An argument lies outside the domain where a formula is defined."""


class GeometryError(ValueError):
    """Degenerate geometry, e.g. a point lying on a wall line."""


class LayoutError(ValueError):
    """A layout description is malformed (non-rectilinear, self-intersecting, ...).

    ``corner`` is the offending corner index when known; ``line`` is the
    1-based line of the source document, filled in by the file parser.
    """

    def __init__(self, message, *, corner=None, line=None):
        self.reason = message
        self.corner = corner
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
