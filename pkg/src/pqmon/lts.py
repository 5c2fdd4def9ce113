"""Level-triggered sampling of local GLLR statistics with one-bit messages.

Each meter tracks its windowed statistic and sends a single sign bit whenever
the statistic leaves the band ``(lam - delta_down, lam + delta_up)`` around its
reference ``lam``.  In ``ORIGINAL`` mode the reference jumps to the current
statistic, so every overshoot past the band edge is lost for good.  In
``ENHANCED`` mode the reference moves by exactly the transmitted amount, which
keeps only the most recent overshoot outstanding.

The central meter rebuilds the global statistic by adding ``delta_up`` per +1
bit and subtracting ``delta_down`` per -1 bit.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, List, Union

import numpy as np

from .detectors import GllrState, advance


class Mode(str, enum.Enum):
    ORIGINAL = "original"
    ENHANCED = "enhanced"


@dataclass(frozen=True)
class BitMessage:
    meter_id: int
    tick: int
    bit: int

    def __post_init__(self):
        if self.bit not in (1, -1):
            raise ValueError(f"bit must be +1 or -1, got {self.bit}")


@dataclass
class LevelSampler:
    """Band test on an arbitrary statistic path (no GLLR inside)."""

    delta_up: float
    delta_down: float
    mode: Mode
    lam: np.ndarray

    @classmethod
    def fresh(cls, delta_up: float, delta_down: float, mode=Mode.ENHANCED, shape=()) -> "LevelSampler":
        if not (delta_up > 0 and delta_down > 0):
            raise ValueError("band half-widths must be positive")
        return cls(float(delta_up), float(delta_down), Mode(mode), np.zeros(shape))

    def reset(self, mask):
        self.lam = np.where(mask, 0.0, self.lam)

    def sample(self, stat) -> np.ndarray:
        """Returns bits in {-1, 0, +1} and moves the reference where a bit fired."""
        d = stat - self.lam
        up = d >= self.delta_up
        down = d <= -self.delta_down
        bits = up.astype(np.int8) - down.astype(np.int8)
        if self.mode is Mode.ORIGINAL:
            self.lam = np.where(bits != 0, stat, self.lam)
        else:
            self.lam = self.lam + up * self.delta_up - down * self.delta_down
        return bits


@dataclass
class LtsMeterState:
    inner: GllrState
    sampler: LevelSampler
    bits_sent: np.ndarray

    @classmethod
    def fresh(cls, p: int, sigma_nu: float, b: float, delta_up: float, delta_down: float,
              mode=Mode.ENHANCED, shape=()) -> "LtsMeterState":
        inner = GllrState.fresh(p, sigma_nu, b, shape)
        sampler = LevelSampler.fresh(delta_up, delta_down, mode, inner.shape)
        return cls(inner, sampler, np.zeros(inner.shape, dtype=np.int64))

    @property
    def lam(self):
        return self.sampler.lam

    @property
    def N(self):
        return self.inner.N


def lts_meter_step(state: LtsMeterState, y, reset_signal) -> np.ndarray:
    """One sample at the meter(s).  Returns bits (0 where nothing is sent).

    A pending reset broadcast restarts the window and zeroes the reference
    before the sample is processed.
    """
    reset_signal = np.asarray(reset_signal, dtype=bool) | state.inner.restart
    state.inner.restart = np.zeros_like(state.inner.restart)
    state.sampler.reset(reset_signal)
    stat = advance(state.inner, y, reset_signal)
    bits = state.sampler.sample(stat)
    state.bits_sent += bits != 0
    return bits


def bits_to_messages(bits, tick: int) -> List[BitMessage]:
    """Messages for one tick from a per-meter bit vector."""
    return [BitMessage(int(m), tick, int(b)) for m, b in enumerate(np.asarray(bits).ravel()) if b != 0]


@dataclass
class LtsCentralState:
    """Bit counters since the last clamp.

    The global statistic is rebuilt as ``n_up * delta_up - n_down * delta_down``
    rather than accumulated, so it sits exactly on the lattice of band widths
    and threshold comparisons do not drift with rounding.
    """

    h: float
    delta_up: float
    delta_down: float
    n_up: np.ndarray
    n_down: np.ndarray
    alarm: np.ndarray
    reset_pending: np.ndarray

    @classmethod
    def fresh(cls, h: float, delta_up: float, delta_down: float, shape=()) -> "LtsCentralState":
        z = np.zeros(shape, dtype=np.int64)
        return cls(float(h), float(delta_up), float(delta_down), z, z.copy(),
                   np.zeros(shape, dtype=bool), np.zeros(shape, dtype=bool))

    @property
    def s_global(self) -> np.ndarray:
        return _lattice(self.n_up, self.n_down, self.delta_up, self.delta_down)


def _lattice(n_up, n_down, delta_up, delta_down):
    if delta_up == delta_down:
        return (n_up - n_down) * delta_up
    return n_up * delta_up - n_down * delta_down


def lts_central_step(state: LtsCentralState, messages: Union[np.ndarray, Iterable[BitMessage]]):
    """Apply all bits received this tick.  Returns ``(broadcast_reset, alarm)``.

    ``messages`` is either an array of bits with meters on the last axis or an
    iterable of :class:`BitMessage` (scalar centre only).
    """
    if isinstance(messages, np.ndarray):
        r_up = np.sum(messages == 1, axis=-1)
        r_down = np.sum(messages == -1, axis=-1)
    else:
        msgs = list(messages)
        r_up = sum(m.bit == 1 for m in msgs)
        r_down = sum(m.bit == -1 for m in msgs)
    n_up = state.n_up + r_up
    n_down = state.n_down + r_down
    s = _lattice(n_up, n_down, state.delta_up, state.delta_down)
    clamp = ((r_up + r_down) != 0) & (s <= 0.0)
    state.n_up = np.where(clamp, 0, n_up)
    state.n_down = np.where(clamp, 0, n_down)
    state.alarm = state.s_global >= state.h
    state.reset_pending = clamp | state.alarm
    return state.reset_pending, state.alarm
