"""Multi-user sum-rate objective, feasibility checks and classical baselines.

Channels are stacked as a ``(K, N)`` complex matrix whose row ``k`` is
``h_k`` (so the received amplitude at Rx k for beam ``w`` is ``h_k^H w``);
beamformers are stacked the same way, row ``k`` being ``w_k``.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from itertools import combinations
from typing import Sequence

import numpy as np

from indoorfas.channel import RadioParams, channel_coefficient
from indoorfas.errors import DomainError
from indoorfas.geometry import FasLine, Layout, Point, position_to_theta, theta_to_position

COMBINATION_CAP = 10**6


@dataclass(frozen=True)
class FasConstraints:
    theta_l: float
    theta_r: float
    delta: float = 0.0  # minimum gap between adjacent antennas, radians
    p_max: float = 1.0

    def __post_init__(self):
        if not self.theta_l < self.theta_r:
            raise DomainError("need theta_l < theta_r")
        if self.delta < 0:
            raise DomainError("delta must be non-negative")
        if not self.p_max > 0:
            raise DomainError("p_max must be positive")


@dataclass(frozen=True)
class BeamformingSet:
    """K beamformers of length N, stored as a ``(K, N)`` complex array."""

    vectors: np.ndarray
    p_max: float | None = None

    def __post_init__(self):
        v = np.atleast_2d(np.asarray(self.vectors, dtype=complex))
        object.__setattr__(self, "vectors", v)

    @property
    def power(self) -> float:
        return float(np.sum(np.abs(self.vectors) ** 2))

    @property
    def feasible(self) -> bool:
        return self.p_max is None or self.power <= self.p_max


def _as_matrix(x) -> np.ndarray:
    if isinstance(x, BeamformingSet):
        return x.vectors
    return np.atleast_2d(np.asarray(x, dtype=complex))


def _gains(H: np.ndarray, W: np.ndarray) -> np.ndarray:
    """G[k, j] = |h_k^H w_j|^2."""
    return np.abs(H.conj() @ W.T) ** 2


def sinr(k: int, H, W, sigma2: float, printed_form: bool = False) -> float:
    """SINR at receiver ``k``.

    The default interference is the downlink form sum_{j != k} |h_k^H w_j|^2.
    ``printed_form`` switches to sum_{j != k} |h_j^H w_k|^2 (channel indexed
    by the other receivers, beam by ``k``).
    """
    H, W = _as_matrix(H), _as_matrix(W)
    if H.shape != W.shape:
        raise ValueError(f"channel shape {H.shape} does not match beamformer shape {W.shape}")
    g = _gains(H, W)
    if printed_form:
        interference = g[:, k].sum() - g[k, k]
    else:
        interference = g[k, :].sum() - g[k, k]
    return float(g[k, k] / (interference + sigma2))


def sum_rate(H, W, sigma2: float, printed_form: bool = False) -> float:
    H = _as_matrix(H)
    return float(sum(math.log2(1 + sinr(k, H, W, sigma2, printed_form)) for k in range(H.shape[0])))


# ------------------------------------------------------------ feasibility


@dataclass(frozen=True)
class ConstraintReport:
    feasible: bool
    violations: tuple[str, ...] = ()
    details: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.feasible


_ANGLE_TOL = 1e-12


def check_constraints(thetas: Sequence[float], W, c: FasConstraints) -> ConstraintReport:
    """Feasibility of antenna angles and beamformers.

    Violation tags: ``power``, ``ordering``, ``bounds``, ``separation``. Angle
    comparisons allow 1e-12 rad of rounding so that gaps of exactly ``delta``
    pass; the power budget is compared exactly.
    """
    thetas = np.asarray(thetas, dtype=float)
    tags, details = [], []
    power = float(np.sum(np.abs(_as_matrix(W)) ** 2))
    if not power <= c.p_max:
        tags.append("power")
        details.append(f"power {power!r} exceeds p_max {c.p_max!r}")
    if not np.all(np.isfinite(thetas)):
        tags.append("bounds")
        details.append("non-finite angle")
        return ConstraintReport(False, tuple(tags), tuple(details))
    gaps = np.diff(thetas)
    if np.any(gaps < 0):
        tags.append("ordering")
        details.append("angles are not sorted")
    if np.any(thetas < c.theta_l - _ANGLE_TOL) or np.any(thetas > c.theta_r + _ANGLE_TOL):
        tags.append("bounds")
        details.append(f"angles outside [{c.theta_l}, {c.theta_r}]")
    if np.any(np.abs(gaps) < c.delta - _ANGLE_TOL):
        tags.append("separation")
        details.append(f"adjacent gap below {c.delta}")
    return ConstraintReport(not tags, tuple(tags), tuple(details))


# ------------------------------------------------------------ WMMSE


@dataclass(frozen=True)
class WmmseResult:
    beams: BeamformingSet
    sum_rate: float
    history: tuple[float, ...]
    iterations: int
    regularized: bool = False


def _beam_update(A: np.ndarray, B: np.ndarray, p_max: float) -> tuple[np.ndarray, bool]:
    """Minimize tr(X^H A X) - 2 Re tr(B^H X) subject to ||X||_F^2 <= p_max.

    Works in the eigenbasis of the Hermitian ``A``, where the power for a dual
    multiplier mu is sum_i m_i / (lam_i + mu)^2. When the unconstrained
    solution is too strong, mu solves 1/sqrt(power(mu)) = 1/sqrt(p_max) by
    Newton's method, which approaches the root monotonically from the left
    (the function is concave and nearly linear). Returns the solution and
    whether a singular ``A`` forced the minimum-norm (pseudo-inverse) solution.
    """
    lam, Q = np.linalg.eigh(A)
    C = Q.conj().T @ B
    mass = np.sum(np.abs(C) ** 2, axis=1)
    floor = 1e-12 * max(float(lam[-1]), 1e-300)
    null = lam <= floor
    lam = np.where(null, 0.0, lam)
    regularized = bool(np.any(null))
    free = float(np.sum(mass[~null] / lam[~null] ** 2))
    null_mass = float(np.sum(mass[null]))
    if free <= p_max:
        # minimum-norm solution; components in the null space of A get nothing
        scale = np.where(null, 0.0, 1.0 / np.where(null, 1.0, lam))
        return Q @ (C * scale[:, None]), regularized
    # power(mu) >= null_mass / mu^2, so any mu below sqrt(null_mass / p_max) is left of the root
    mu = 0.5 * math.sqrt(null_mass / p_max) if null_mass > 0 else 0.0
    target = 1.0 / math.sqrt(p_max)
    # massless null directions contribute nothing and would divide 0 by 0 at mu = 0
    live = mass > 0
    lam_live, mass_live = lam[live], mass[live]
    for _ in range(100):
        d = lam_live + mu
        power = float(np.sum(mass_live / d**2))
        slope = float(np.sum(mass_live / d**3)) * power**-1.5
        step = (power**-0.5 - target) / slope
        mu_next = mu - step
        if not mu_next > mu:
            break
        converged = mu_next - mu <= 1e-15 * mu_next
        mu = mu_next
        if converged:
            break
    d = lam + mu
    scale = np.where(d > 0, 1.0 / np.where(d > 0, d, 1.0), 0.0)
    return Q @ (C * scale[:, None]), False


def _clip_power(W: np.ndarray, p_max: float) -> np.ndarray:
    power = float(np.sum(np.abs(W) ** 2))
    while power > p_max:
        W = W * math.sqrt(p_max / power) * (1 - 1e-15)
        power = float(np.sum(np.abs(W) ** 2))
    return W


def matched_filter_init(H, p_max: float) -> np.ndarray:
    """Matched-filter beams with the budget split equally across receivers."""
    H = _as_matrix(H)
    k = H.shape[0]
    norms = np.linalg.norm(H, axis=1, keepdims=True)
    W = np.divide(H, norms, out=np.zeros_like(H), where=norms > 0)
    return _clip_power(W * math.sqrt(p_max / k), p_max)


def _extra_inits(H: np.ndarray, p_max: float) -> list[np.ndarray]:
    """Zero-forcing beams and each single-user matched filter at full power."""
    K, _ = H.shape
    inits = []
    Z = np.linalg.pinv(H.conj()).T
    zp = float(np.sum(np.abs(Z) ** 2))
    if np.isfinite(zp) and zp > 0:
        inits.append(Z * math.sqrt(p_max / zp))
    for k in range(K):
        nk = np.linalg.norm(H[k])
        if K > 1 and nk > 0:
            W = np.zeros_like(H)
            W[k] = H[k] / nk * math.sqrt(p_max)
            inits.append(W)
    return [_clip_power(W, p_max) for W in inits]


def _wmmse_run(H: np.ndarray, W: np.ndarray, p_max: float, sigma2: float, max_iters: int, tol: float):
    history = [sum_rate(H, W, sigma2)]
    regularized = False
    iterations = 0
    for _ in range(max_iters):
        amp = H.conj() @ W.T  # amp[k, j] = h_k^H w_j
        total = np.sum(np.abs(amp) ** 2, axis=1) + sigma2
        own = np.diag(amp)
        u = own / total
        e = np.maximum(1 - np.real(np.conj(u) * own), 1e-300)
        v = 1 / e
        A = (H.T * (v * np.abs(u) ** 2)) @ H.conj()  # sum_k v_k |u_k|^2 h_k h_k^H
        B = H.T * (v * u)  # column k: v_k u_k h_k
        X, reg = _beam_update(A, B, p_max)
        regularized |= reg
        W = _clip_power(X.T, p_max)
        history.append(sum_rate(H, W, sigma2))
        iterations += 1
        if history[-1] - history[-2] < tol:
            break
    return W, history, iterations, regularized


def wmmse(
    H, p_max: float, sigma2: float, max_iters: int = 500, tol: float = 1e-6, init=None, multistart: bool = True
) -> WmmseResult:
    """Weighted MMSE block-coordinate ascent on the downlink sum-rate.

    Each sweep updates the receive scalars u_k, the MSE weights v_k = 1/e_k
    and then the beams under the total power budget. A sweep never lowers the
    sum-rate; iteration stops when it gains less than ``tol`` bits/s/Hz.

    The first run starts from equal-power matched filters (or ``init``). With
    ``multistart`` the algorithm is also started from zero-forcing and from
    every single-user beam, and the best run is returned: on near rank-one
    channels the matched-filter start creeps towards the single-user optimum
    over tens of thousands of sweeps.
    """
    H = _as_matrix(H)
    K, N = H.shape
    if K > N:
        raise DomainError(f"need K <= N, got K={K}, N={N}")
    if not p_max > 0 or not sigma2 > 0:
        raise DomainError("p_max and sigma2 must be positive")
    first = matched_filter_init(H, p_max) if init is None else _clip_power(_as_matrix(init).copy(), p_max)
    starts = [first] + (_extra_inits(H, p_max) if multistart else [])
    best = None
    for W0 in starts:
        run = _wmmse_run(H, W0, p_max, sigma2, max_iters, tol)
        if best is None or run[1][-1] > best[1][-1]:
            best = run
    W, history, iterations, regularized = best
    return WmmseResult(BeamformingSet(W, p_max), history[-1], tuple(history), iterations, regularized)


def random_search_sum_rate(H, p_max: float, sigma2: float, samples: int, seed: int = 0, chunk: int = 100_000) -> float:
    """Best sum-rate over random full-power beamformers (a brute-force oracle)."""
    H = _as_matrix(H)
    K, N = H.shape
    rng = np.random.default_rng(seed)
    best = -math.inf
    done = 0
    while done < samples:
        m = min(chunk, samples - done)
        W = rng.standard_normal((m, K, N)) + 1j * rng.standard_normal((m, K, N))
        W *= np.sqrt(p_max / np.sum(np.abs(W) ** 2, axis=(1, 2)))[:, None, None]
        amp = np.einsum("kn,mjn->mkj", H.conj(), W)
        g = np.abs(amp) ** 2
        own = np.einsum("mkk->mk", g)
        rates = np.log2(1 + own / (g.sum(axis=2) - own + sigma2)).sum(axis=1)
        best = max(best, float(rates.max()))
        done += m
    return best


# ------------------------------------------------------------ position baselines


@dataclass(frozen=True)
class PositionResult:
    positions: tuple[Point, ...]
    thetas: tuple[float, ...]
    beams: BeamformingSet
    sum_rate: float
    evaluated: int = 1


@dataclass(frozen=True)
class FixedPositionsResult:
    mean_sum_rate: float
    rates: tuple[float, ...] = field(repr=False)


def channel_matrix(layout: Layout, params: RadioParams, positions: Sequence[Point], rxs: Sequence[Point]) -> np.ndarray:
    """(K, N) matrix with entry [k, n] = channel from antenna n to receiver k."""
    return np.array([[channel_coefficient(layout, params, p, rx) for p in positions] for rx in rxs], dtype=complex)


def grid_positions(fas: FasLine, c: FasConstraints, spacing: float, count: int) -> list[Point]:
    """Grid points x_l, x_l + spacing, ... on the FAS line, starting at the theta_l position."""
    start = theta_to_position(c.theta_l, fas)
    return [Point(start.x + i * spacing, fas.y0) for i in range(count)]


def _evaluate_combos(args):
    gains, combos, p_max, sigma2, thetas, c = args
    best = (-math.inf, None, None)
    for combo in combos:
        H = gains[:, list(combo)]
        res = wmmse(H, p_max, sigma2)
        W = res.beams.vectors
        if not check_constraints([thetas[i] for i in combo], W, c):
            continue
        if res.sum_rate > best[0]:
            best = (res.sum_rate, combo, W)
    return best


def grid_search_positions(
    layout: Layout,
    params: RadioParams,
    rxs: Sequence[Point],
    n_antennas: int,
    c: FasConstraints,
    fas: FasLine,
    grid_spacing: float = 0.03,
    grid_count: int = 26,
    cap: int = COMBINATION_CAP,
    workers: int = 1,
) -> PositionResult:
    """Enumerate every ``n_antennas``-subset of a uniform grid and keep the best WMMSE sum-rate.

    The grid spacing is the (meter-space) minimum separation, so the angular
    ``delta`` is not re-imposed; grid points outside [theta_l, theta_r] are
    rejected through the bounds check.
    """
    if not 1 <= n_antennas <= grid_count:
        raise DomainError("need 1 <= n_antennas <= grid_count")
    total = math.comb(grid_count, n_antennas)
    if total > cap:
        raise DomainError(f"{total} combinations exceed the cap of {cap}; use a smaller grid or fewer antennas")
    points = grid_positions(fas, c, grid_spacing, grid_count)
    thetas = [position_to_theta(p, fas) for p in points]
    gains = channel_matrix(layout, params, points, rxs)
    relaxed = replace(c, delta=0.0)
    combos = list(combinations(range(grid_count), n_antennas))
    workers = max(1, int(workers))
    size = math.ceil(len(combos) / workers)
    chunks = [combos[i : i + size] for i in range(0, len(combos), size)]
    jobs = [(gains, chunk, c.p_max, params.noise_power, thetas, relaxed) for chunk in chunks]
    if workers == 1:
        results = [_evaluate_combos(j) for j in jobs]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_evaluate_combos, jobs))
    # chunks are in enumeration order, so ties resolve to the first combination
    best = max(results, key=lambda r: r[0])
    if best[1] is None:
        raise DomainError("no grid combination satisfies the constraints")
    rate, combo, W = best
    return PositionResult(
        tuple(points[i] for i in combo), tuple(thetas[i] for i in combo), BeamformingSet(W, c.p_max), rate, total
    )


def sample_feasible_thetas(c: FasConstraints, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform sample of sorted angles in [theta_l, theta_r] with gaps >= delta."""
    slack = c.theta_r - c.theta_l - (n - 1) * c.delta
    if slack < 0:
        raise DomainError(f"{n} antennas with separation {c.delta} do not fit in [{c.theta_l}, {c.theta_r}]")
    base = np.sort(rng.uniform(0.0, slack, n))
    return c.theta_l + base + c.delta * np.arange(n)


def wmmse_fixed_positions(
    layout: Layout,
    params: RadioParams,
    rxs: Sequence[Point],
    n_antennas: int,
    c: FasConstraints,
    fas: FasLine,
    samples: int = 200,
    seed: int = 0,
) -> FixedPositionsResult:
    """Mean WMMSE sum-rate over ``samples`` random feasible antenna placements."""
    if samples < 1:
        raise ValueError("samples must be positive")
    rng = np.random.default_rng(seed)
    rates = []
    for _ in range(samples):
        thetas = sample_feasible_thetas(c, n_antennas, rng)
        positions = [theta_to_position(t, fas) for t in thetas]
        H = channel_matrix(layout, params, positions, rxs)
        rates.append(wmmse(H, c.p_max, params.noise_power).sum_rate)
    return FixedPositionsResult(float(np.mean(rates)), tuple(rates))
