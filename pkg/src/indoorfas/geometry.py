"""Rectilinear room layouts, fluid-antenna polar angles and wall distances.

Walls are indexed from zero: ``layout.walls[i]`` runs from ``corners[i]`` to
``corners[i + 1]`` (the last wall closes back to the first corner), so
``walls[0]`` is the wall leaving the first corner.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import NamedTuple, Sequence

from indoorfas.errors import DomainError, GeometryError, LayoutError


class Point(NamedTuple):
    x: float
    y: float


@dataclass(frozen=True)
class Wall:
    index: int
    start: Point
    end: Point
    permittivity: float

    @property
    def vertical(self) -> bool:
        """True when the wall is perpendicular to the x-axis (constant x)."""
        return self.start.x == self.end.x

    @property
    def coord(self) -> float:
        """The constant coordinate of the wall line (x for vertical walls, y otherwise)."""
        return self.start.x if self.vertical else self.start.y

    @property
    def extent(self) -> tuple[float, float]:
        """Closed interval covered by the wall along its own direction."""
        if self.vertical:
            a, b = self.start.y, self.end.y
        else:
            a, b = self.start.x, self.end.x
        return (a, b) if a <= b else (b, a)

    @property
    def length(self) -> float:
        lo, hi = self.extent
        return hi - lo

    def signed_offset(self, p: Point) -> float:
        """Signed distance of ``p`` from the wall line (positive above / right)."""
        return (p.x - self.coord) if self.vertical else (p.y - self.coord)


class AngleDistances(NamedTuple):
    """Perpendicular distances of Tx (d1) and Rx (d2) to a wall, and their separation along it (d3)."""

    d1: float
    d2: float
    d3: float


@dataclass(frozen=True)
class FasLine:
    """Horizontal line ``y = y0`` along which the fluid antennas slide.

    Polar angles are measured at the antenna position towards ``reference_rx``.
    """

    y0: float
    reference_rx: Point

    def __post_init__(self):
        object.__setattr__(self, "reference_rx", Point(*self.reference_rx))
        if self.reference_rx.y == self.y0:
            raise GeometryError("reference receiver lies on the FAS line")


@dataclass(frozen=True)
class Layout:
    corners: tuple[Point, ...]
    permittivity: tuple[float, ...]

    def __post_init__(self):
        corners = tuple(Point(float(x), float(y)) for x, y in self.corners)
        eps = tuple(float(e) for e in self.permittivity)
        object.__setattr__(self, "corners", corners)
        object.__setattr__(self, "permittivity", eps)
        _validate(corners, eps)

    @classmethod
    def uniform(cls, corners: Sequence[Sequence[float]], permittivity: float = 5.24) -> "Layout":
        return cls(tuple(corners), (permittivity,) * len(corners))

    @classmethod
    def rectangle(cls, width: float, height: float, permittivity: float = 5.24) -> "Layout":
        return cls.uniform([(0, 0), (0, height), (width, height), (width, 0)], permittivity)

    @cached_property
    def walls(self) -> tuple[Wall, ...]:
        m = len(self.corners)
        return tuple(
            Wall(i, self.corners[i], self.corners[(i + 1) % m], self.permittivity[i]) for i in range(m)
        )

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        xs = [c.x for c in self.corners]
        ys = [c.y for c in self.corners]
        return min(xs), min(ys), max(xs), max(ys)

    def area(self) -> float:
        return -_signed_area(self.corners)

    def on_boundary(self, p: Point) -> bool:
        return any(_on_segment(w.start, w.end, p) for w in self.walls)

    def contains(self, p: Sequence[float]) -> bool:
        """Strict interior test; points on a wall are outside."""
        p = Point(*p)
        if self.on_boundary(p):
            return False
        inside = False
        for w in self.walls:
            if not w.vertical:
                continue
            (lo, hi) = w.extent
            # half-open rule so a ray through a corner is counted once
            if lo <= p.y < hi and w.coord > p.x:
                inside = not inside
        return inside

    def to_dict(self) -> dict:
        return {"corners": [list(c) for c in self.corners], "permittivity": list(self.permittivity)}


def _signed_area(corners: Sequence[Point]) -> float:
    s = 0.0
    for i, a in enumerate(corners):
        b = corners[(i + 1) % len(corners)]
        s += a.x * b.y - b.x * a.y
    return 0.5 * s


def _validate(corners: tuple[Point, ...], eps: tuple[float, ...]) -> None:
    m = len(corners)
    if m < 4:
        raise LayoutError(f"a rectilinear layout needs at least 4 corners, got {m}")
    if len(eps) != m:
        raise LayoutError(f"expected {m} permittivity values (one per wall), got {len(eps)}")
    for i, e in enumerate(eps):
        if not math.isfinite(e) or e < 1.0:
            raise LayoutError(f"wall {i} permittivity {e} must be >= 1", corner=i)
    for i, c in enumerate(corners):
        if not (math.isfinite(c.x) and math.isfinite(c.y)):
            raise LayoutError(f"corner {i} is not finite", corner=i)
    for i in range(m):
        a, b = corners[i], corners[(i + 1) % m]
        if a == b:
            raise LayoutError(f"wall {i} has zero length (corner {i} repeated)", corner=(i + 1) % m)
        if a.x != b.x and a.y != b.y:
            raise LayoutError(
                f"wall {i} from {tuple(a)} to {tuple(b)} is not axis-aligned", corner=(i + 1) % m
            )
    for i in range(m):
        a1, a2 = corners[i], corners[(i + 1) % m]
        for j in range(i + 1, m):
            b1, b2 = corners[j], corners[(j + 1) % m]
            adjacent = j == i + 1 or (i == 0 and j == m - 1)
            if adjacent:
                # consecutive walls may only share their common corner
                shared = a2 if j == i + 1 else a1
                other_a = a1 if j == i + 1 else a2
                other_b = b2 if j == i + 1 else b1
                if _on_segment(b1, b2, other_a) or _on_segment(a1, a2, other_b):
                    raise LayoutError(f"walls {i} and {j} fold back onto each other", corner=corners.index(shared))
                continue
            if _closed_segments_touch(a1, a2, b1, b2):
                raise LayoutError(f"walls {i} and {j} intersect; polygon is not simple", corner=j)
    if _signed_area(corners) >= 0:
        raise LayoutError("corners must be listed in clockwise order")


def _orient(a: Point, b: Point, c: Point) -> float:
    return (b.x - a.x) * (c.y - a.y) - (b.y - a.y) * (c.x - a.x)


def _on_segment(a: Point, b: Point, p: Point) -> bool:
    if _orient(a, b, p) != 0:
        return False
    return min(a.x, b.x) <= p.x <= max(a.x, b.x) and min(a.y, b.y) <= p.y <= max(a.y, b.y)


def _closed_segments_touch(a1: Point, a2: Point, b1: Point, b2: Point) -> bool:
    d1, d2 = _orient(b1, b2, a1), _orient(b1, b2, a2)
    d3, d4 = _orient(a1, a2, b1), _orient(a1, a2, b2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    return (
        _on_segment(b1, b2, a1) or _on_segment(b1, b2, a2) or _on_segment(a1, a2, b1) or _on_segment(a1, a2, b2)
    )


def segment_intersects(a1, a2, b1, b2) -> bool:
    """Does the open segment (a1, a2) meet the closed segment [b1, b2]?

    Endpoints of ``a`` are excluded, so a ray ending on its reflecting wall is
    not blocked by it. Touching a wall corner or running along a wall counts
    as an intersection. Zero-length segments never intersect.
    """
    a1, a2, b1, b2 = Point(*a1), Point(*a2), Point(*b1), Point(*b2)
    if a1 == a2 or b1 == b2:
        return False
    d1, d2 = _orient(b1, b2, a1), _orient(b1, b2, a2)
    d3, d4 = _orient(a1, a2, b1), _orient(a1, a2, b2)
    if ((d1 > 0 > d2) or (d1 < 0 < d2)) and ((d3 > 0 > d4) or (d3 < 0 < d4)):
        return True
    dx, dy = a2.x - a1.x, a2.y - a1.y
    norm2 = dx * dx + dy * dy

    def param(p: Point) -> float:
        return ((p.x - a1.x) * dx + (p.y - a1.y) * dy) / norm2

    if d1 == 0 and d2 == 0:
        lo, hi = sorted((param(b1), param(b2)))
        return hi > 0.0 and lo < 1.0
    # a wall endpoint lying strictly inside the open segment
    if d3 == 0 and 0.0 < param(b1) < 1.0:
        return True
    if d4 == 0 and 0.0 < param(b2) < 1.0:
        return True
    return False


def theta_to_position(theta: float, fas: FasLine) -> Point:
    """Antenna position on the FAS line whose polar angle to the reference Rx is ``theta``."""
    if not 0.0 < theta < math.pi:
        raise DomainError(f"polar angle {theta} outside (0, pi)")
    ref = fas.reference_rx
    if theta == math.pi / 2:
        return Point(ref.x, fas.y0)
    return Point(ref.x - (ref.y - fas.y0) / math.tan(theta), fas.y0)


def position_to_theta(p: Sequence[float], fas: FasLine) -> float:
    """Inverse of :func:`theta_to_position`; ``p`` must lie on the FAS line."""
    p = Point(*p)
    if p.y != fas.y0:
        raise DomainError(f"point {tuple(p)} is not on the FAS line y = {fas.y0}")
    ref = fas.reference_rx
    if p.x == ref.x:
        return math.pi / 2
    # cot(theta) = (x_ref - x) / (y_ref - y0), theta in (0, pi)
    return math.pi / 2 - math.atan((ref.x - p.x) / (ref.y - fas.y0))


def wall_distances(wall: Wall, tx: Point, rx: Point) -> AngleDistances:
    if wall.vertical:
        d = AngleDistances(abs(tx.x - wall.coord), abs(rx.x - wall.coord), abs(rx.y - tx.y))
    else:
        d = AngleDistances(abs(tx.y - wall.coord), abs(rx.y - wall.coord), abs(rx.x - tx.x))
    if d.d1 == 0 or d.d2 == 0:
        raise GeometryError(f"point lies on the line of wall {wall.index}")
    return d


def angle_distances(layout: Layout, wall_index: int, tx, rx) -> AngleDistances:
    """Perpendicular distances to wall ``wall_index`` and the along-wall Tx-Rx separation."""
    if not 0 <= wall_index < len(layout.walls):
        raise IndexError(f"wall index {wall_index} out of range for {len(layout.walls)} walls")
    return wall_distances(layout.walls[wall_index], Point(*tx), Point(*rx))


# ---------------------------------------------------------------- file format

_PAIR = re.compile(r"\[\s*[-+0-9.eE]+\s*,\s*[-+0-9.eE]+\s*\]")


def _corner_lines(text: str) -> list[int]:
    key = text.find('"corners"')
    if key < 0:
        return []
    return [text.count("\n", 0, m.start()) + 1 for m in _PAIR.finditer(text, key)]


def layout_from_dict(doc: dict, text: str | None = None) -> Layout:
    """Build a :class:`Layout` from ``{"corners": [[x, y], ...], "permittivity": ...}``.

    ``permittivity`` may be a list (one value per wall) or a single number.
    When ``text`` is the source document, errors cite the offending line.
    """
    lines = _corner_lines(text) if text else []
    if "corners" not in doc:
        raise LayoutError("missing 'corners'")
    raw = doc["corners"]
    corners = []
    for i, c in enumerate(raw):
        if not (isinstance(c, (list, tuple)) and len(c) == 2):
            raise LayoutError(f"corner {i} must be an [x, y] pair", line=lines[i] if i < len(lines) else None)
        corners.append((float(c[0]), float(c[1])))
    eps = doc.get("permittivity", 5.24)
    if isinstance(eps, (int, float)):
        eps = [float(eps)] * len(corners)
    try:
        return Layout(tuple(corners), tuple(eps))
    except LayoutError as err:
        line = lines[err.corner] if err.corner is not None and err.corner < len(lines) else None
        if line is None and text is not None:
            key = text.find('"corners"')
            line = text.count("\n", 0, key) + 1 if key >= 0 else None
        raise LayoutError(err.reason, corner=err.corner, line=line) from None


def load_layout(path: str | Path) -> Layout:
    text = Path(path).read_text()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as err:
        raise LayoutError(f"invalid JSON: {err.msg}", line=err.lineno) from None
    return layout_from_dict(doc, text)


BUILTIN_LAYOUTS = ("rectangle5", "rectangle10", "lshape")


def builtin_layout(name: str) -> Layout:
    """Layouts shipped with the package (see ``indoorfas/data/layouts``)."""
    path = Path(__file__).parent / "data" / "layouts" / f"{name}.json"
    if not path.exists():
        raise LayoutError(f"unknown built-in layout {name!r}; choose from {', '.join(BUILTIN_LAYOUTS)}")
    return load_layout(path)
