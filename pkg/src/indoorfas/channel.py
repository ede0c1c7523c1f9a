"""First-order layout-specific ray tracing.

Every wall contributes at most one specular reflection; the direct path
contributes the line-of-sight term. :func:`image_method_reference` is an
independent multi-bounce image-source tracer used to validate the model.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from enum import Enum
from itertools import product
from typing import Sequence

import numpy as np

from indoorfas.errors import DomainError, GeometryError
from indoorfas.geometry import (
    AngleDistances,
    FasLine,
    Layout,
    Point,
    Wall,
    segment_intersects,
    theta_to_position,
    wall_distances,
)

SPEED_OF_LIGHT = 3e8


class Polarization(str, Enum):
    TE = "TE"
    TM = "TM"


@dataclass(frozen=True)
class RadioParams:
    frequency: float = 5e9
    gt: float = 1.0
    gr: float = 1.0
    noise_power: float = 1e-12
    polarization: Polarization = Polarization.TE

    def __post_init__(self):
        object.__setattr__(self, "polarization", Polarization(self.polarization))
        if not self.frequency > 0:
            raise ValueError("frequency must be positive")
        if not (self.gt > 0 and self.gr > 0):
            raise ValueError("antenna gains must be positive")
        if not self.noise_power > 0:
            raise ValueError("noise power must be positive")

    @property
    def wavelength(self) -> float:
        return SPEED_OF_LIGHT / self.frequency

    @property
    def amplitude_scale(self) -> float:
        """The common factor sqrt(Gt Gr) * lambda / (4 pi)."""
        return math.sqrt(self.gt * self.gr) * self.wavelength / (4 * math.pi)


@dataclass(frozen=True)
class RayIndicators:
    wall_nlos: tuple[bool, ...]
    los: bool


@dataclass(frozen=True)
class Ray:
    """One candidate ray of the first-order model.

    ``wall`` is None for the direct ray. Geometry fields are None when the
    reflection does not exist geometrically (points on opposite sides of the
    wall line).
    """

    wall: int | None
    present: bool
    length: float | None
    reflection_point: Point | None = None
    incidence_angle: float | None = None
    gamma: float | None = None
    value: complex = 0j


@dataclass(frozen=True)
class RayTrace:
    indicators: RayIndicators
    rays: tuple[Ray, ...]
    coefficient: complex


def reflection_point(wall: Wall, tx, rx) -> Point:
    """Specular point on the (infinite) line of ``wall`` for the Tx-Rx pair."""
    tx, rx = Point(*tx), Point(*rx)
    s_tx, s_rx = wall.signed_offset(tx), wall.signed_offset(rx)
    if s_tx * s_rx < 0:
        raise GeometryError(f"Tx and Rx are on opposite sides of wall {wall.index}")
    d1, d2 = abs(s_tx), abs(s_rx)
    if d1 + d2 == 0:
        raise GeometryError(f"Tx and Rx both lie on the line of wall {wall.index}")
    if wall.vertical:
        d3 = rx.y - tx.y
        u = d1 * abs(d3) / (d1 + d2)
        return Point(wall.coord, tx.y + math.copysign(u, d3))
    d3 = rx.x - tx.x
    u = d1 * abs(d3) / (d1 + d2)
    return Point(tx.x + math.copysign(u, d3), wall.coord)


def fresnel_gamma(alpha: float, epsilon: float, polarization=Polarization.TE) -> float:
    """Fresnel reflection coefficient; ``alpha`` is the grazing angle (pi/2 = normal incidence)."""
    if not 0.0 < alpha <= math.pi / 2:
        raise DomainError(f"incidence angle {alpha} outside (0, pi/2]")
    if epsilon < 1.0:
        raise DomainError(f"relative permittivity {epsilon} < 1")
    s = math.sin(alpha)
    # epsilon - cos^2 written as (epsilon - 1) + sin^2: no cancellation near grazing or in vacuum
    root = math.sqrt((epsilon - 1.0) + s * s)
    if Polarization(polarization) is Polarization.TM:
        return (-epsilon * s + root) / (epsilon * s + root)
    return (s - root) / (s + root)


def nlos_length(d: AngleDistances) -> float:
    return math.hypot(d.d3, d.d1 + d.d2)


def incidence_angle(d: AngleDistances) -> float:
    if d.d1 + d.d2 == 0 and d.d3 == 0:
        raise GeometryError("incidence angle undefined for coincident points on the wall")
    # atan2 returns exactly pi/2 when d3 == 0
    return math.atan2(d.d1 + d.d2, d.d3)


def los_length(theta: float, y0: float, y1: float) -> float:
    """Direct-path length from the FAS line y0 to a receiver at height y1 > y0."""
    if not 0.0 < theta < math.pi:
        raise DomainError(f"polar angle {theta} outside (0, pi)")
    if not y1 > y0:
        raise DomainError("receiver must lie above the FAS line")
    return (y1 - y0) / math.sin(theta)


def _ray_term(length: float, wavelength: float) -> complex:
    return cmath.exp(-2j * math.pi * length / wavelength) / length


def _blocked(layout: Layout, a: Point, b: Point) -> bool:
    return any(segment_intersects(a, b, w.start, w.end) for w in layout.walls)


def _specular_exists(layout: Layout, wall: Wall, tx: Point, rx: Point) -> bool:
    s_tx, s_rx = wall.signed_offset(tx), wall.signed_offset(rx)
    if s_tx == 0 or s_rx == 0 or (s_tx > 0) != (s_rx > 0):
        return False
    s = reflection_point(wall, tx, rx)
    lo, hi = wall.extent
    along = s.y if wall.vertical else s.x
    # the specular point must hit the finite wall, not its extension
    if not lo <= along <= hi:
        return False
    return not (_blocked(layout, tx, s) or _blocked(layout, s, rx))


def indicator_functions(layout: Layout, tx, rx) -> RayIndicators:
    """Which first-order reflections and whether the direct ray exist for a Tx-Rx pair."""
    tx, rx = Point(*tx), Point(*rx)
    walls = tuple(_specular_exists(layout, w, tx, rx) for w in layout.walls)
    return RayIndicators(walls, not _blocked(layout, tx, rx))


def trace_rays(layout: Layout, params: RadioParams, tx, rx, indicators: RayIndicators | None = None) -> RayTrace:
    """Full per-ray breakdown of :func:`channel_coefficient`.

    ``indicators`` overrides the visibility computation, which is how a
    single-wall two-ray channel is carved out of a layout.
    """
    tx, rx = Point(*tx), Point(*rx)
    if indicators is None:
        indicators = indicator_functions(layout, tx, rx)
    elif len(indicators.wall_nlos) != len(layout.walls):
        raise ValueError("indicator count does not match wall count")
    lam = params.wavelength
    rays = []
    total = 0j
    for wall, on in zip(layout.walls, indicators.wall_nlos):
        try:
            d = wall_distances(wall, tx, rx)
        except GeometryError:
            if on:
                raise
            rays.append(Ray(wall.index, False, None))
            continue
        length = nlos_length(d)
        alpha = incidence_angle(d)
        gamma = fresnel_gamma(alpha, wall.permittivity, params.polarization)
        s_tx, s_rx = wall.signed_offset(tx), wall.signed_offset(rx)
        s = reflection_point(wall, tx, rx) if s_tx * s_rx > 0 else None
        value = gamma * _ray_term(length, lam) if on else 0j
        total += value
        rays.append(Ray(wall.index, on, length, s, alpha, gamma, value))
    d_los = math.dist(tx, rx)
    if d_los == 0:
        raise GeometryError("Tx and Rx coincide")
    los_value = _ray_term(d_los, lam) if indicators.los else 0j
    total += los_value
    rays.append(Ray(None, indicators.los, d_los, value=los_value))
    scale = params.amplitude_scale
    rays = [
        Ray(r.wall, r.present, r.length, r.reflection_point, r.incidence_angle, r.gamma, scale * r.value)
        for r in rays
    ]
    return RayTrace(indicators, tuple(rays), scale * total)


def channel_coefficient(
    layout: Layout, params: RadioParams, tx, rx, indicators: RayIndicators | None = None
) -> complex:
    """Complex baseband channel between one Tx antenna and one Rx (LoS + first-order reflections)."""
    return trace_rays(layout, params, tx, rx, indicators).coefficient


def channel_vector(layout: Layout, params: RadioParams, thetas: Sequence[float], fas: FasLine, rx) -> np.ndarray:
    """Per-antenna channel to ``rx`` for antennas at polar angles ``thetas`` on ``fas``."""
    return np.array(
        [channel_coefficient(layout, params, theta_to_position(t, fas), rx) for t in thetas], dtype=complex
    )


def spatial_correlation(h1: complex, h2: complex) -> complex:
    """Normalized correlation h1 h2* / (|h1| |h2|) between two antenna channels."""
    if h1 == 0 or h2 == 0:
        raise DomainError("correlation undefined for a zero channel")
    return h1 * h2.conjugate() / (abs(h1) * abs(h2))


# ------------------------------------------------------------ image method


def _mirror(p: Point, wall: Wall) -> Point:
    if wall.vertical:
        return Point(2 * wall.coord - p.x, p.y)
    return Point(p.x, 2 * wall.coord - p.y)


def _image_path(layout: Layout, seq: tuple[int, ...], tx: Point, rx: Point):
    """Bounce points for wall sequence ``seq`` or None if the path is invalid."""
    walls = layout.walls
    images = [tx]
    for i in seq:
        images.append(_mirror(images[-1], walls[i]))
    target = rx
    bounces = []
    for k in range(len(seq), 0, -1):
        wall = walls[seq[k - 1]]
        src = images[k]
        a = wall.signed_offset(src)
        b = wall.signed_offset(target)
        # the image and the target must straddle the wall line
        if not a * b < 0:
            return None
        t = a / (a - b)
        hit = Point(src.x + t * (target.x - src.x), src.y + t * (target.y - src.y))
        if wall.vertical:
            hit = Point(wall.coord, hit.y)
            along = hit.y
        else:
            hit = Point(hit.x, wall.coord)
            along = hit.x
        lo, hi = wall.extent
        if not lo <= along <= hi:
            return None
        bounces.append(hit)
        target = hit
    bounces.reverse()
    return images[-1], bounces


def image_method_reference(layout: Layout, params: RadioParams, tx, rx, max_order: int) -> complex:
    """Image-source channel with all valid specular paths up to ``max_order`` bounces."""
    if max_order < 0:
        raise ValueError("max_order must be non-negative")
    tx, rx = Point(*tx), Point(*rx)
    lam = params.wavelength
    m = len(layout.walls)
    total = 0j
    if not _blocked(layout, tx, rx):
        total += _ray_term(math.dist(tx, rx), lam)
    for order in range(1, max_order + 1):
        for seq in product(range(m), repeat=order):
            if any(seq[i] == seq[i + 1] for i in range(order - 1)):
                continue
            found = _image_path(layout, seq, tx, rx)
            if found is None:
                continue
            last_image, bounces = found
            nodes = [tx, *bounces, rx]
            if any(nodes[i] == nodes[i + 1] for i in range(len(nodes) - 1)):
                continue
            if any(_blocked(layout, nodes[i], nodes[i + 1]) for i in range(len(nodes) - 1)):
                continue
            amp = 1.0
            for j, wall_index in enumerate(seq):
                wall = layout.walls[wall_index]
                a, b = nodes[j], nodes[j + 1]
                perp = abs(b.x - a.x) if wall.vertical else abs(b.y - a.y)
                alpha = math.asin(min(1.0, perp / math.dist(a, b)))
                if alpha == 0:
                    amp = 0.0
                    break
                amp *= fresnel_gamma(alpha, wall.permittivity, params.polarization)
            if amp:
                total += amp * _ray_term(math.dist(last_image, rx), lam)
    return params.amplitude_scale * total
