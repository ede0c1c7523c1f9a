"""Single-wall two-ray SNR and the closed-form antenna-angle optimizer.

Geometry: the reflecting wall is the line x = 0, the receiver sits at
(x1, y1) and the antenna slides along y = y0 < y1. The antenna at polar angle
theta is at x0 = x1 - (y1 - y0) / tan(theta).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np

from indoorfas.channel import RadioParams, fresnel_gamma
from indoorfas.errors import DomainError


class Case(str, Enum):
    CASE1 = "Case1"  # whole interval left of pi/2
    CASE2 = "Case2"  # interval straddles pi/2
    CASE3 = "Case3"  # whole interval right of pi/2


@dataclass(frozen=True)
class TwoRayInstance:
    x1: float
    y1: float
    y0: float
    epsilon: float
    params: RadioParams
    theta_l: float
    theta_r: float
    power: float = 1.0  # transmit power multiplier applied to the SNR

    def __post_init__(self):
        if not self.y1 > self.y0:
            raise DomainError("receiver must lie above the FAS line (y1 > y0)")
        if not self.x1 > 0:
            raise DomainError("receiver must lie to the right of the wall (x1 > 0)")
        if not self.lower_bound < self.theta_l <= self.theta_r < math.pi:
            raise DomainError(
                f"need {self.lower_bound:.6f} < theta_l <= theta_r < pi, got [{self.theta_l}, {self.theta_r}]"
            )
        if not self.power > 0:
            raise DomainError("power must be positive")

    @property
    def height(self) -> float:
        return self.y1 - self.y0

    @property
    def lower_bound(self) -> float:
        """Smallest admissible angle: the antenna reaches the wall."""
        return math.atan((self.y1 - self.y0) / self.x1)

    @property
    def wavelength(self) -> float:
        return self.params.wavelength

    @property
    def case(self) -> Case:
        if self.theta_r < math.pi / 2:
            return Case.CASE1
        if self.theta_l < math.pi / 2:
            return Case.CASE2
        return Case.CASE3


@dataclass(frozen=True)
class TwoRaySolution:
    theta_star: float
    snr: float
    rate: float
    case_id: Case
    candidates: tuple[tuple[float, float], ...]
    notes: tuple[str, ...] = field(default=())


def _cot(theta: float) -> float:
    return 0.0 if theta == math.pi / 2 else math.cos(theta) / math.sin(theta)


def _check_theta(theta: float, inst: TwoRayInstance) -> None:
    if not inst.lower_bound < theta < math.pi:
        raise DomainError(f"theta {theta} outside ({inst.lower_bound}, pi)")


def nlos_length(theta: float, inst: TwoRayInstance) -> float:
    h = inst.height
    return math.hypot(h, 2 * inst.x1 - h * _cot(theta))


def los_length(theta: float, inst: TwoRayInstance) -> float:
    return inst.height / math.sin(theta)


def path_difference(theta: float, inst: TwoRayInstance) -> float:
    """d_NLoS - d_LoS; increases monotonically from 0 to 2 x1 over the domain."""
    return nlos_length(theta, inst) - los_length(theta, inst)


def gamma(theta: float, inst: TwoRayInstance) -> float:
    """Reflection coefficient at the wall for the antenna at ``theta``."""
    alpha = math.atan(2 * inst.x1 / inst.height - _cot(theta))
    return fresnel_gamma(alpha, inst.epsilon, inst.params.polarization)


def snr_two_ray(theta: float, inst: TwoRayInstance) -> float:
    """Two-ray SNR as the NLoS, LoS and interaction terms (times ``inst.power``)."""
    _check_theta(theta, inst)
    p = inst.params
    lam = p.wavelength
    h = inst.height
    g = gamma(theta, inst)
    d_nlos = nlos_length(theta, inst)
    d_los = los_length(theta, inst)
    nlos_term = g * g / d_nlos**2
    los_term = math.sin(theta) ** 2 / h**2
    interaction = 2 * g * math.cos(2 * math.pi * (d_nlos - d_los) / lam) / (d_los * d_nlos)
    scale = p.gt * p.gr * lam**2 / (p.noise_power * (4 * math.pi) ** 2)
    return inst.power * scale * (nlos_term + los_term + interaction)


def rate(theta: float, inst: TwoRayInstance) -> float:
    return math.log2(1 + snr_two_ray(theta, inst))


def f_of_n(n: int, inst: TwoRayInstance) -> float | None:
    """Angle where the path difference equals n * lambda / 2, or None if unreachable.

    Solves A sin(theta) - B cos(theta) = n lambda h with A = 4 x1^2 - n^2 lambda^2 / 4
    and B = 4 x1 h. The printed arcsin/arctan form is tried first; when A < 0
    the arctan lands on the wrong branch, so the remaining roots of
    R sin(theta + phi) are checked as well.
    """
    if n < 1:
        raise DomainError("n must be a positive integer")
    lam = inst.wavelength
    h, x1 = inst.height, inst.x1
    a = 4 * x1 * x1 - n * n * lam * lam / 4
    b = 4 * x1 * h
    radius = math.hypot(a, b)
    s = n * lam * h / radius
    if abs(s) > 1:
        return None
    target = n * lam / 2
    candidates = []
    if a != 0:
        candidates.append(math.asin(s) - math.atan(-b / a))
    phi = math.atan2(-b, a)
    for base in (math.asin(s), math.pi - math.asin(s)):
        for k in (-1, 0, 1):
            candidates.append(base - phi + 2 * math.pi * k)
    for theta in candidates:
        if not inst.lower_bound < theta < math.pi:
            continue
        if abs(path_difference(theta, inst) - target) <= 1e-9 * max(1.0, target):
            return theta
    return None


def _round_half_even(x: float) -> int:
    return int(round(x))


def _n_values(case: Case, delta_over_lam: float, positive: bool) -> list[int]:
    """Interference orders for a case, given the path difference at the anchor in wavelengths."""
    x = delta_over_lam
    if case is Case.CASE1:
        return [2 * math.floor(x)] if positive else [2 * _round_half_even(x) - 1]
    if case is Case.CASE3:
        return [2 * math.ceil(x)] if positive else [2 * _round_half_even(x) + 1]
    if positive:
        return [2 * math.floor(x), 2 * math.ceil(x)]
    return [2 * _round_half_even(x) - 1, 2 * _round_half_even(x) + 1]


def _anchor(inst: TwoRayInstance) -> float:
    return {Case.CASE1: inst.theta_r, Case.CASE2: math.pi / 2, Case.CASE3: inst.theta_l}[inst.case]


def solve_closed_form(inst: TwoRayInstance) -> TwoRaySolution:
    """Closed-form optimal angle on [theta_l, theta_r].

    The case fixes an anchor (theta_r, pi/2 or theta_l); the candidates are the
    constructive-interference angles f(n) next to the anchor, clamped to
    [theta_l, theta_r], plus the anchor.
    The sign of the reflection coefficient selects even (Gamma > 0) or odd
    (Gamma < 0) n. Gamma is re-evaluated at every candidate; if its sign
    disagrees with the anchor's, the other parity is tried as well.
    """
    case = inst.case
    anchor = _anchor(inst)
    lam = inst.wavelength
    notes = []
    thetas = [anchor]
    g_anchor = gamma(anchor, inst)
    if g_anchor != 0:
        x = path_difference(anchor, inst) / lam
        signs = [g_anchor > 0]
        tried = set()
        while signs:
            positive = signs.pop()
            tried.add(positive)
            for n in _n_values(case, x, positive):
                if n < 1:
                    continue
                theta = f_of_n(n, inst)
                if theta is None:
                    continue
                # a peak just outside the interval pulls the optimum to the nearer endpoint
                theta = min(max(theta, inst.theta_l), inst.theta_r)
                thetas.append(theta)
                g = gamma(theta, inst)
                if g != 0 and (g > 0) != positive and (not positive) not in tried:
                    notes.append(f"Gamma changes sign between anchor and f({n}); trying the other parity")
                    signs.append(not positive)
    candidates = tuple((t, snr_two_ray(t, inst)) for t in thetas)
    best_theta, best_snr = max(candidates, key=lambda c: c[1])
    return TwoRaySolution(best_theta, best_snr, math.log2(1 + best_snr), case, candidates, tuple(notes))


def _golden_max(fun, lo: float, hi: float, tol: float = 1e-13) -> float:
    inv_phi = (math.sqrt(5) - 1) / 2
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fun(c), fun(d)
    while b - a > tol:
        if fc > fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fun(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fun(d)
    return (a + b) / 2


_POLISHED_PEAKS = 8


def exhaustive_search(inst: TwoRayInstance, grid_points: int = 4000) -> TwoRaySolution:
    """Brute-force optimum: dense uniform grid, then golden-section polishing of its best peaks.

    ``grid_points`` is a floor; the grid is densified to at least 64 points per
    interference fringe so that no fringe is skipped at high frequencies.
    """
    if grid_points < 1000:
        raise ValueError("grid_points must be at least 1000")
    fringes = (path_difference(inst.theta_r, inst) - path_difference(inst.theta_l, inst)) / inst.wavelength
    n = max(grid_points, int(64 * fringes) + 1)
    grid = np.linspace(inst.theta_l, inst.theta_r, n)
    values = np.array([snr_two_ray(t, inst) for t in grid])
    i = int(np.argmax(values))
    best_theta, best_snr = float(grid[i]), float(values[i])
    # polish the strongest grid peaks: neighbouring fringes can tie to within the grid error
    interior = (values[1:-1] >= values[:-2]) & (values[1:-1] >= values[2:])
    peaks = np.concatenate([[0], np.flatnonzero(interior) + 1, [n - 1]])
    for j in peaks[np.argsort(values[peaks])[::-1][:_POLISHED_PEAKS]]:
        lo, hi = float(grid[max(j - 1, 0)]), float(grid[min(j + 1, n - 1)])
        if hi <= lo:
            continue
        t = _golden_max(lambda th: snr_two_ray(th, inst), lo, hi)
        v = snr_two_ray(t, inst)
        if v > best_snr:
            best_theta, best_snr = t, v
    return TwoRaySolution(
        best_theta, best_snr, math.log2(1 + best_snr), inst.case, ((best_theta, best_snr),)
    )


def with_params(inst: TwoRayInstance, **changes) -> TwoRayInstance:
    return replace(inst, **changes)
