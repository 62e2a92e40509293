"""Fundamental-matrix integration by explicit Euler with history interpolation.

The fundamental matrix X satisfies the system's own equation with
X(t) = 0 for t < 0 and X(0) = I.  On the grid t_n = n h the recurrence is

    X_{n+1} = X_n + h (A0 X_n + sum_j Aj S_j(n)),

where the delayed sample S_j(n) approximates X(t_n - tau_j): zero while
the delayed time is negative, the identity when it is exactly zero, and
the linear interpolation (1 - frac) X_{n-lag} + frac X_{n-lag+1} once it
is positive.  Only the most recent max(lag) + 2 steps are retained; the
sequence is streamed to a sink instead of stored.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import _engine
from .linalg import frobenius_norm
from .system import DelaySystem

# Snap tau/h to an integer when within this relative distance; binary
# float quotients like 2/0.0001 would otherwise land a hair off an
# integer and flip both the lag and the interpolation weight.
INTEGER_RATIO_GUARD = 1e-9


class HistoryEvicted(RuntimeError):
    """A step needed history the ring no longer holds (capacity bug)."""


class Overflow(ArithmeticError):
    """A step produced a non-finite entry."""

    def __init__(self, step):
        super().__init__(f"non-finite entries at step {step}")
        self.step = step


class StepSizeWarning(UserWarning):
    """Explicit Euler may be unstable for this step size."""


@dataclass(frozen=True)
class GridSpec:
    """Uniform time grid: horizon, step size, and authoritative step count."""

    horizon: float
    step: float
    step_count: int

    def __post_init__(self):
        if not (self.step > 0 and math.isfinite(self.step)):
            raise ValueError(f"step must be positive and finite, got {self.step}")
        if not (self.horizon > 0 and math.isfinite(self.horizon)):
            raise ValueError(f"horizon must be positive and finite, got {self.horizon}")
        if self.step > self.horizon:
            raise ValueError("step exceeds horizon")
        if self.step_count < 1:
            raise ValueError("step count must be at least 1")
        if abs(self.step_count * self.step - self.horizon) > self.step / 2 + 1e-9 * self.horizon:
            raise ValueError(
                f"step count {self.step_count} is not horizon/step = "
                f"{self.horizon / self.step:.6f} rounded"
            )

    @classmethod
    def make(cls, horizon, step):
        """Grid with step_count = round(horizon / step)."""
        if step <= 0 or horizon <= 0:
            raise ValueError("horizon and step must be positive")
        return cls(float(horizon), float(step), int(round(horizon / step)))

    def time_at(self, n):
        return n * self.step


@dataclass(frozen=True)
class DelayIndex:
    """Grid offset of one delay: whole steps back, plus interpolation weight.

    lag = ceil(tau / h) and frac = lag - tau / h in [0, 1); the delayed
    time t_n - tau sits between grid points n - lag and n - lag + 1 with
    weight frac on the newer one.
    """

    lag: int
    frac: float

    def __post_init__(self):
        if self.lag < 1:
            raise ValueError("lag must be at least 1")
        if not (0.0 <= self.frac < 1.0):
            raise ValueError(f"frac must lie in [0, 1), got {self.frac}")


def delay_indices(sys: DelaySystem, grid: GridSpec):
    """Per-delay grid offsets, snapping near-integer tau/h ratios."""
    out = []
    for term in sys.terms:
        ratio = term.tau / grid.step
        nearest = round(ratio)
        if nearest >= 1 and abs(ratio - nearest) < INTEGER_RATIO_GUARD:
            out.append(DelayIndex(int(nearest), 0.0))
        else:
            lag = int(math.ceil(ratio))
            out.append(DelayIndex(lag, lag - ratio))
    return out


class HistoryRing:
    """Circular store of the most recent fundamental-matrix steps.

    Capacity max(lag) + 2 suffices: the step from n to n+1 reads logical
    indices n - lag and n - lag + 1 only, and both stay within the
    window (n - capacity, n] until they are never needed again.
    """

    def __init__(self, dim, capacity):
        if capacity < 2:
            raise ValueError("capacity must be at least 2")
        self.buffer = np.zeros((capacity, dim, dim))
        self.buffer[0] = np.eye(dim)
        self.latest = 0  # logical index of the newest stored step; X_0 = I

    @property
    def capacity(self):
        return self.buffer.shape[0]

    @property
    def dim(self):
        return self.buffer.shape[1]

    def push(self, x):
        self.latest += 1
        self.buffer[self.latest % self.capacity] = x

    def get(self, k):
        """X_k for any logical index k <= latest; negative k is the zero matrix."""
        if k < 0:
            return np.zeros((self.dim, self.dim))
        if k > self.latest:
            raise ValueError(f"step {k} not computed yet (latest is {self.latest})")
        if k <= self.latest - self.capacity:
            raise HistoryEvicted(f"step {k} evicted (capacity {self.capacity}, latest {self.latest})")
        return self.buffer[k % self.capacity].copy()


def ring_capacity(indices):
    """Sufficient ring capacity for the given delay offsets."""
    return max((idx.lag for idx in indices), default=0) + 2


def delayed_sample(ring: HistoryRing, n, idx: DelayIndex):
    """Delayed-state sample for the step from n, by integer classification.

    The sign of n - lag + frac decides the branch; with frac = 0 the
    delayed time hits a grid point exactly (zero matrix before it, the
    identity at it, plain history after it), and with frac > 0 the value
    is zero through n = lag - 1 and interpolated from n = lag on.
    """
    if idx.frac == 0.0:
        return ring.get(n - idx.lag)
    if n < idx.lag:
        return np.zeros((ring.dim, ring.dim))
    older = ring.get(n - idx.lag)
    newer = ring.get(n - idx.lag + 1)
    return (1.0 - idx.frac) * older + idx.frac * newer


def euler_step(sys: DelaySystem, ring: HistoryRing, n, indices, h):
    """One step of the recurrence: X_{n+1} from X_n and ring history."""
    x = ring.get(n)
    acc = sys.a0 @ x
    for term, idx in zip(sys.terms, indices):
        acc += term.a @ delayed_sample(ring, n, idx)
    nxt = x + h * acc
    if not np.isfinite(nxt).all():
        raise Overflow(n + 1)
    return nxt


@dataclass(frozen=True)
class RunSummary:
    """What a full integration produced, independent of any sink."""

    grid: GridSpec
    final_norm: float
    max_norm: float
    diverged: bool
    diverged_at: int | None = None

    @property
    def step_count(self):
        return self.grid.step_count


def _block_length(dim, step_count):
    # Cap the step buffer around 2 MB; small systems get large blocks.
    return int(max(64, min(step_count, 16384, 2_097_152 // (8 * dim * dim))))


def coefficient_norm_sum(sys: DelaySystem):
    """Frobenius norms of A0 and all delay matrices, summed."""
    return frobenius_norm(sys.a0) + sum(frobenius_norm(t.a) for t in sys.terms)


def run_fundamental(sys: DelaySystem, grid: GridSpec, sink=None) -> RunSummary:
    """Integrate X_1 .. X_N, streaming each step to `sink` in order.

    The sink may be a callable taking (n, X_n) per step, or expose
    ``consume_block(start_n, block)`` receiving consecutive steps
    start_n, start_n + 1, ... as rows of a (count, dim, dim) array.

    A non-finite step does not abort the run: the offending step is
    still delivered, the run stops, and the summary reports divergence
    and the step index.  That outcome is an instability signal, not an
    error.
    """
    stiffness = grid.step * coefficient_norm_sum(sys)
    if stiffness > 0.5:
        warnings.warn(
            f"h * (sum of coefficient norms) = {stiffness:.3g} > 0.5; "
            "explicit Euler may be inaccurate or unstable at this step size",
            StepSizeWarning,
            stacklevel=2,
        )

    d = sys.dim
    indices = delay_indices(sys, grid)
    ring = HistoryRing(d, ring_capacity(indices))
    lags = np.array([idx.lag for idx in indices], dtype=np.int64)
    fracs = np.array([idx.frac for idx in indices], dtype=np.float64)
    if sys.delay_count:
        ad = np.ascontiguousarray(np.stack([t.a for t in sys.terms]))
    else:
        ad = np.zeros((0, d, d))
    a0 = np.ascontiguousarray(sys.a0)
    h = grid.step
    n_total = grid.step_count

    consume_block = getattr(sink, "consume_block", None)
    per_step = sink if consume_block is None else None

    block = _block_length(d, n_total)
    out = np.empty((block, d, d))
    done = 0
    max_norm = math.sqrt(d)  # X_0 = I
    final_norm = max_norm
    diverged_at = None

    while done < n_total:
        count = min(block, n_total - done)
        bad = _engine.advance(a0, ad, lags, fracs, h, ring.buffer, done, count, out)
        good = count if bad < 0 else bad + 1
        ring.latest = done + good
        steps = out[:good].copy()
        norms = np.sqrt(np.einsum("ijk,ijk->i", steps, steps))
        finite = norms[np.isfinite(norms)]
        if finite.size:
            max_norm = max(max_norm, float(finite.max()))
        final_norm = float(norms[-1])
        if consume_block is not None:
            consume_block(done + 1, steps)
        elif per_step is not None:
            for i in range(good):
                per_step(done + 1 + i, steps[i])
        done += good
        if bad >= 0:
            diverged_at = done
            break

    return RunSummary(
        grid=grid,
        final_norm=final_norm,
        max_norm=max_norm,
        diverged=diverged_at is not None,
        diverged_at=diverged_at,
    )
