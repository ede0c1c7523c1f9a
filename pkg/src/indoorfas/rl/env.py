"""The joint position/beamforming MDP and two toy environments for testing trainers.

Every environment exposes ``state_dim``, ``action_dim``, ``action_low``,
``action_high``, ``reset(rng) -> state`` and ``step(state, action) -> (state, reward)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from indoorfas.channel import RadioParams
from indoorfas.geometry import FasLine, Layout, Point, theta_to_position
from indoorfas.optim import FasConstraints, channel_matrix, check_constraints, sum_rate

PENALTY = -100.0


class Environment(Protocol):
    state_dim: int
    action_dim: int
    action_low: np.ndarray
    action_high: np.ndarray

    def reset(self, rng: np.random.Generator) -> np.ndarray: ...

    def step(self, state: np.ndarray, action: np.ndarray) -> tuple[np.ndarray, float]: ...


@dataclass
class FasEnv:
    """State: receiver coordinates, transmitter anchor, layout corners (2K + 2 + 2M reals).

    Action: N antenna angles followed by the real parts and then the imaginary
    parts of the K x N beamformer matrix (N + 2KN reals). The reward is the
    sum-rate when every constraint holds and ``penalty`` otherwise. The next
    state's anchor is the centroid of the chosen antenna positions.
    """

    layout: Layout
    params: RadioParams
    rxs: Sequence[Point]
    n_antennas: int
    constraints: FasConstraints
    fas: FasLine
    penalty: float = PENALTY
    printed_sinr: bool = False
    _corners: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.rxs = tuple(Point(*r) for r in self.rxs)
        if not 1 <= len(self.rxs) <= self.n_antennas:
            raise ValueError(f"need 1 <= K <= N, got K={len(self.rxs)}, N={self.n_antennas}")
        self._corners = np.asarray(self.layout.corners, dtype=float).ravel()
        amp = math.sqrt(self.constraints.p_max)
        n, kn = self.n_antennas, self.k * self.n_antennas
        self.action_low = np.concatenate([np.full(n, self.constraints.theta_l), np.full(2 * kn, -amp)])
        self.action_high = np.concatenate([np.full(n, self.constraints.theta_r), np.full(2 * kn, amp)])

    @property
    def k(self) -> int:
        return len(self.rxs)

    @property
    def state_dim(self) -> int:
        return 2 * self.k + 2 + len(self._corners)

    @property
    def action_dim(self) -> int:
        return self.n_antennas + 2 * self.k * self.n_antennas

    @property
    def anchor_range(self) -> tuple[float, float]:
        a = theta_to_position(self.constraints.theta_l, self.fas).x
        b = theta_to_position(self.constraints.theta_r, self.fas).x
        return a, b

    def observation(self, anchor: Point) -> np.ndarray:
        rx = np.asarray(self.rxs, dtype=float).ravel()
        return np.concatenate([rx, [anchor[0], anchor[1]], self._corners])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        """Random episode start: transmitter anchor uniform on the FAS segment."""
        lo, hi = self.anchor_range
        return self.observation(Point(float(rng.uniform(lo, hi)), self.fas.y0))

    def decode(self, action) -> tuple[np.ndarray, np.ndarray]:
        a = np.asarray(action, dtype=float)
        if a.shape != (self.action_dim,):
            raise ValueError(f"action must have shape ({self.action_dim},), got {a.shape}")
        n, kn = self.n_antennas, self.k * self.n_antennas
        thetas = a[:n]
        W = (a[n : n + kn] + 1j * a[n + kn :]).reshape(self.k, n)
        return thetas, W

    def encode(self, thetas, W) -> np.ndarray:
        W = np.asarray(W, dtype=complex)
        return np.concatenate([np.asarray(thetas, dtype=float), W.real.ravel(), W.imag.ravel()])

    def reward(self, action) -> float:
        thetas, W = self.decode(action)
        if not check_constraints(thetas, W, self.constraints):
            return self.penalty
        positions = [theta_to_position(t, self.fas) for t in thetas]
        H = channel_matrix(self.layout, self.params, positions, self.rxs)
        rate = sum_rate(H, W, self.params.noise_power, self.printed_sinr)
        return rate if math.isfinite(rate) else self.penalty

    def step(self, state: np.ndarray, action) -> tuple[np.ndarray, float]:
        thetas, _ = self.decode(action)
        r = self.reward(action)
        if np.all(np.isfinite(thetas)) and np.all((thetas > 0) & (thetas < math.pi)):
            xs = [theta_to_position(t, self.fas).x for t in thetas]
            anchor = Point(float(np.mean(xs)), self.fas.y0)
        else:
            anchor = Point(state[2 * self.k], state[2 * self.k + 1])
        return self.observation(anchor), r


@dataclass
class BanditEnv:
    """One-dimensional bandit with reward -(a - target)^2 on actions in [low, high]."""

    target: float = 0.7
    low: float = 0.0
    high: float = 1.0
    state_dim: int = 1
    action_dim: int = 1

    def __post_init__(self):
        self.action_low = np.array([self.low])
        self.action_high = np.array([self.high])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return np.zeros(1)

    def step(self, state, action):
        return np.zeros(1), -float((np.asarray(action)[0] - self.target) ** 2)


@dataclass
class ConstantRewardEnv:
    """Every action earns the same reward; the value function is known in closed form."""

    reward: float = 1.0
    state_dim: int = 2
    action_dim: int = 1

    def __post_init__(self):
        self.action_low = np.array([-1.0])
        self.action_high = np.array([1.0])

    def reset(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(-1, 1, self.state_dim)

    def step(self, state, action):
        return np.asarray(state, dtype=float), float(self.reward)
