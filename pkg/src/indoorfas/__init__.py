"""Layout-specific ray tracing and antenna-position optimization for indoor fluid antenna systems."""

from indoorfas.errors import DomainError, GeometryError, LayoutError

__version__ = "0.1.0"

__all__ = ["DomainError", "GeometryError", "LayoutError", "__version__"]
