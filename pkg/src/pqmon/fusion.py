"""Multi-meter GLLR: the centralized detector and the uniform-in-time baseline.

Both keep one :class:`~pqmon.detectors.GllrState` with a trailing meter axis.
The window counter is shared: a global reset restarts every meter's window at
the following sample.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .detectors import GllrState, advance


def _check_obs(obs, meters: GllrState) -> np.ndarray:
    obs = np.asarray(obs, dtype=float)
    if obs.shape != meters.shape:
        raise ValueError(f"expected observations of shape {meters.shape}, got {obs.shape}")
    return obs


@dataclass
class CentralizedState:
    meters: GllrState  # batch + (L,)
    h: float
    g: np.ndarray
    restart: np.ndarray
    local: np.ndarray

    @classmethod
    def fresh(cls, L: int, p: int, sigma_nu: float, b: float, h: float, batch=()) -> "CentralizedState":
        batch = (batch,) if isinstance(batch, (int, np.integer)) else tuple(batch)
        meters = GllrState.fresh(p, sigma_nu, b, batch + (L,))
        return cls(meters, float(h), np.zeros(batch), np.ones(batch, dtype=bool), np.zeros(batch + (L,)))

    @property
    def L(self) -> int:
        return self.meters.shape[-1]

    @property
    def N(self) -> np.ndarray:
        return self.meters.N[..., 0]


def centralized_update(state: CentralizedState, obs):
    """Process one sample per meter.  Returns ``(g, reset_flag, alarm_flag)``."""
    obs = _check_obs(obs, state.meters)
    restart = np.broadcast_to(state.restart[..., None], state.meters.shape)
    state.local = advance(state.meters, obs, restart)
    total = state.local.sum(axis=-1)
    state.g = np.maximum(total, 0.0)
    state.restart = total <= 0.0
    return state.g, state.restart, state.g >= state.h


@dataclass
class UniformState:
    """Meters send their exact local statistic every ``tau`` ticks.

    The centre only learns anything on refresh ticks (``tick % tau == 0``), so
    resets and alarms are decided there and nowhere else.
    """

    meters: GllrState
    tau: int
    h: float
    g: np.ndarray
    restart: np.ndarray
    local: np.ndarray
    sent: np.ndarray  # last transmitted local statistics
    tick: int = 0

    @classmethod
    def fresh(cls, L: int, p: int, sigma_nu: float, b: float, h: float, tau: int, batch=()) -> "UniformState":
        if tau < 1:
            raise ValueError("tau must be >= 1")
        batch = (batch,) if isinstance(batch, (int, np.integer)) else tuple(batch)
        meters = GllrState.fresh(p, sigma_nu, b, batch + (L,))
        return cls(meters, int(tau), float(h), np.zeros(batch), np.ones(batch, dtype=bool),
                   np.zeros(batch + (L,)), np.zeros(batch + (L,)))

    @property
    def L(self) -> int:
        return self.meters.shape[-1]

    def is_refresh(self, tick: int) -> bool:
        return tick % self.tau == 0


def uniform_update(state: UniformState, obs):
    """Returns ``(g, alarm_flag)``; ``g`` is held between refresh ticks."""
    obs = _check_obs(obs, state.meters)
    restart = np.broadcast_to(state.restart[..., None], state.meters.shape)
    state.local = advance(state.meters, obs, restart)
    refresh = state.is_refresh(state.tick)
    state.tick += 1
    if not refresh:
        state.restart = np.zeros_like(state.restart)
        return state.g, np.zeros(state.g.shape, dtype=bool)
    state.sent = state.local.copy()
    total = state.sent.sum(axis=-1)
    state.g = np.maximum(total, 0.0)
    state.restart = total <= 0.0
    return state.g, state.g >= state.h
