"""Right-endpoint Riemann sums over the streamed fundamental matrix.

Three running integrals are maintained from steps 1..N (the initial
identity is excluded by the right-endpoint rule):

    matrix_sum    ~ integral of X(t) dt            (a dim x dim matrix)
    norm_sum      ~ integral of ||X(t)||_F dt
    sq_norm_sum   ~ integral of ||X(t)||_F^2 dt

Snapshots of the scalar sums at configured checkpoint steps feed the
tail-convergence diagnostics.  Default summation is plain accumulation
in delivery order (batched deliveries are reduced pairwise by numpy);
``compensated=True`` switches to Kahan accumulation at the granularity
contributions arrive, which quantifies accumulation error when compared
against the default.
"""

from __future__ import annotations

from bisect import bisect_left, bisect_right
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class CheckpointSnapshot:
    step: int
    t: float
    norm_sum: float
    sq_norm_sum: float


def default_checkpoint_steps(step_count):
    """Quarter-horizon checkpoints: N/4, N/2, 3N/4, N (rounded, deduplicated)."""
    raw = [round(step_count * k / 4) for k in (1, 2, 3, 4)]
    return sorted({s for s in raw if s >= 1})


class IntegralAccumulators:
    """Running integral sums fed by a fundamental-matrix run.

    Acts as a sink for the integrator: call per step as ``acc(n, X_n)``
    or let the run deliver blocks via ``consume_block``.  A non-finite
    step marks the accumulator tainted; the sums freeze at their last
    finite values and later input is ignored.
    """

    def __init__(self, dim, step, checkpoint_steps=(), compensated=False):
        if dim < 1 or step <= 0:
            raise ValueError("dim must be positive and step > 0")
        self.dim = dim
        self.step = float(step)
        self.compensated = bool(compensated)
        self.matrix_sum = np.zeros((dim, dim))
        self.norm_sum = 0.0
        self.sq_norm_sum = 0.0
        self.steps_consumed = 0
        self.tainted = False
        self.checkpoints: list[CheckpointSnapshot] = []
        self._cp_steps = sorted(set(int(s) for s in checkpoint_steps))
        if any(s < 1 for s in self._cp_steps):
            raise ValueError("checkpoint steps must be >= 1")
        self._cp_set = set(self._cp_steps)
        self._c_matrix = np.zeros((dim, dim))
        self._c_norm = 0.0
        self._c_sq = 0.0

    def _add(self, d_matrix, d_norm, d_sq):
        if self.compensated:
            y = d_matrix - self._c_matrix
            t = self.matrix_sum + y
            self._c_matrix = (t - self.matrix_sum) - y
            self.matrix_sum = t
            y = d_norm - self._c_norm
            t = self.norm_sum + y
            self._c_norm = (t - self.norm_sum) - y
            self.norm_sum = t
            y = d_sq - self._c_sq
            t = self.sq_norm_sum + y
            self._c_sq = (t - self.sq_norm_sum) - y
            self.sq_norm_sum = t
        else:
            self.matrix_sum = self.matrix_sum + d_matrix
            self.norm_sum = self.norm_sum + d_norm
            self.sq_norm_sum = self.sq_norm_sum + d_sq

    def _snapshot_if_due(self, n):
        if n in self._cp_set:
            self.checkpoints.append(
                CheckpointSnapshot(n, n * self.step, self.norm_sum, self.sq_norm_sum)
            )

    def accumulate(self, n, x):
        """Consume step n (must be steps_consumed + 1; sums start at n = 1)."""
        if n != self.steps_consumed + 1:
            raise ValueError(f"expected step {self.steps_consumed + 1}, got {n}")
        if self.tainted:
            self.steps_consumed = n
            return
        x = np.asarray(x, dtype=float)
        if x.shape != (self.dim, self.dim):
            raise ValueError(f"step has shape {x.shape}, expected {(self.dim, self.dim)}")
        if not np.isfinite(x).all():
            self.tainted = True
            self.steps_consumed = n
            return
        sq = float((x * x).sum())
        self._add(x * self.step, np.sqrt(sq) * self.step, sq * self.step)
        self.steps_consumed = n
        self._snapshot_if_due(n)

    __call__ = accumulate

    def consume_block(self, start_n, block):
        """Consume consecutive steps start_n .. start_n + len(block) - 1."""
        if start_n != self.steps_consumed + 1:
            raise ValueError(f"expected step {self.steps_consumed + 1}, got block at {start_n}")
        block = np.asarray(block, dtype=float)
        count = block.shape[0]
        if count == 0:
            return
        if self.tainted:
            self.steps_consumed = start_n + count - 1
            return
        finite = np.isfinite(block).all(axis=(1, 2))
        good = int(count if finite.all() else np.argmin(finite))
        last = start_n + good - 1  # last finite step in this block, if any
        if good:
            # Split at checkpoint steps so snapshots see exact prefix sums.
            lo = bisect_left(self._cp_steps, start_n)
            hi = bisect_right(self._cp_steps, last)
            stops = sorted(set(self._cp_steps[lo:hi]) | {last})
            pos = start_n
            for stop in stops:
                seg = block[pos - start_n: stop - start_n + 1]
                sq = np.einsum("ijk,ijk->i", seg, seg)
                self._add(
                    seg.sum(axis=0) * self.step,
                    float(np.sqrt(sq).sum()) * self.step,
                    float(sq.sum()) * self.step,
                )
                pos = stop + 1
                self._snapshot_if_due(stop)
        if good < count:
            self.tainted = True
        self.steps_consumed = start_n + count - 1
