"""Stability verdict from the integral criteria.

For an asymptotically stable system three equivalent facts hold: the
coefficient sum A0 + sum(Aj) is invertible and the integral of X equals
minus its inverse; the integral of ||X||_F is finite; and the integral
of ||X||_F^2 is finite.  A finite-horizon run can only gather evidence,
so the verdict is three-way:

    Unstable      divergence observed, or the coefficient sum is
                  singular (a necessary condition fails; a singular sum
                  can at best be marginal, reported Unstable with an
                  annotation),
    Stable        the integral residual is small relative to the inverse
                  and both scalar integrals have stopped growing,
    Inconclusive  neither; usually the horizon is too short or the step
                  too coarse.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

from .integrator import GridSpec, RunSummary
from .linalg import SingularError, frobenius_norm, lu_invert
from .quadrature import IntegralAccumulators
from .system import DelaySystem, coefficient_sum

# Guard for ratios over an identically-zero integral (the zero system).
_ZERO_GUARD = 1e-300


class MissingCheckpoint(LookupError):
    """Tail diagnostics need half- and full-horizon checkpoints."""


class Verdict(str, enum.Enum):
    STABLE = "Stable"
    UNSTABLE = "Unstable"
    INCONCLUSIVE = "Inconclusive"

    def __str__(self):
        return self.value


@dataclass(frozen=True)
class CriteriaConfig:
    """Decision tolerances; all strictly positive.

    residual_tol is relative to the Frobenius norm of the inverse
    coefficient sum; tail_rel_tol bounds the fractional growth of the
    scalar integrals over the last half horizon; divergence_norm_cap is
    the trajectory norm beyond which the run counts as diverged.
    """

    residual_tol: float = 0.05
    tail_rel_tol: float = 1e-4
    divergence_norm_cap: float = 1e12

    def __post_init__(self):
        for name in ("residual_tol", "tail_rel_tol", "divergence_norm_cap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be strictly positive")


@dataclass(frozen=True)
class ResidualCheck:
    """How close the integral of X is to minus the inverse coefficient sum."""

    invertible: bool
    residual_abs: float | None
    residual_rel: float | None


@dataclass(frozen=True)
class TailGrowth:
    """Fractional growth of the scalar integrals over the last half horizon."""

    growth_norm: float
    growth_norm2: float


@dataclass(frozen=True)
class StabilityReport:
    verdict: Verdict
    residual_abs: float | None
    residual_rel: float | None
    coefficient_sum_invertible: bool
    tail_growth_norm: float | None
    tail_growth_norm2: float | None
    final_state_norm: float
    max_state_norm: float
    diverged: bool
    grid: GridSpec
    annotation: str = ""
    oracle_rhp_count: int | None = None


def residual_check(sys: DelaySystem, acc: IntegralAccumulators) -> ResidualCheck:
    """Residual of the integral identity, plus invertibility of the sum.

    A singular coefficient sum is data, not an error: it means the
    necessary condition for asymptotic stability already fails.  The
    residuals are None when the sum is singular or the run diverged.
    """
    total = coefficient_sum(sys)
    try:
        inverse = lu_invert(total)
    except SingularError:
        return ResidualCheck(False, None, None)
    if acc.tainted or not np.isfinite(acc.matrix_sum).all():
        return ResidualCheck(True, None, None)
    residual_abs = frobenius_norm(acc.matrix_sum + inverse)
    residual_rel = residual_abs / frobenius_norm(inverse)
    return ResidualCheck(True, residual_abs, residual_rel)


def tail_convergence(acc: IntegralAccumulators) -> TailGrowth:
    """Fractional growth of norm_sum and sq_norm_sum over the last half run.

    Uses the final checkpoint and the one at half its step count; raises
    MissingCheckpoint when either is absent (for example when the run
    diverged before the half-horizon snapshot).
    """
    if not acc.checkpoints:
        raise MissingCheckpoint("no checkpoints recorded")
    full = acc.checkpoints[-1]
    half_step = round(full.step / 2)
    half = next((c for c in acc.checkpoints if c.step == half_step), None)
    if half is None:
        raise MissingCheckpoint(f"no checkpoint at half-horizon step {half_step}")
    growth_norm = (full.norm_sum - half.norm_sum) / max(full.norm_sum, _ZERO_GUARD)
    growth_norm2 = (full.sq_norm_sum - half.sq_norm_sum) / max(full.sq_norm_sum, _ZERO_GUARD)
    return TailGrowth(growth_norm, growth_norm2)


def combine_verdict(
    residual: ResidualCheck,
    tails: TailGrowth | None,
    summary: RunSummary,
    cfg: CriteriaConfig = CriteriaConfig(),
) -> StabilityReport:
    """Merge the evidence into a single report.

    Precedence: observed divergence (including a norm beyond the cap)
    and a singular coefficient sum force Unstable; a small residual
    together with converged tails gives Stable; anything else is
    Inconclusive with a hint to enlarge the horizon or shrink the step.
    """
    annotation = ""
    cap = cfg.divergence_norm_cap
    blew_cap = (not math.isfinite(summary.final_norm)) or summary.final_norm > cap or summary.max_norm > cap

    if summary.diverged or blew_cap:
        verdict = Verdict.UNSTABLE
        annotation = (
            f"trajectory diverged at step {summary.diverged_at}"
            if summary.diverged
            else f"trajectory norm exceeded divergence cap {cap:g}"
        )
    elif not residual.invertible:
        verdict = Verdict.UNSTABLE
        annotation = "singular coefficient sum (necessary condition fails; at best marginal)"
    elif (
        residual.residual_rel is not None
        and residual.residual_rel <= cfg.residual_tol
        and tails is not None
        and tails.growth_norm <= cfg.tail_rel_tol
        and tails.growth_norm2 <= cfg.tail_rel_tol
    ):
        verdict = Verdict.STABLE
    else:
        verdict = Verdict.INCONCLUSIVE
        annotation = "criteria not met at this horizon; enlarge the horizon or shrink the step"

    return StabilityReport(
        verdict=verdict,
        residual_abs=residual.residual_abs,
        residual_rel=residual.residual_rel,
        coefficient_sum_invertible=residual.invertible,
        tail_growth_norm=tails.growth_norm if tails is not None else None,
        tail_growth_norm2=tails.growth_norm2 if tails is not None else None,
        final_state_norm=summary.final_norm,
        max_state_norm=summary.max_norm,
        diverged=summary.diverged,
        grid=summary.grid,
        annotation=annotation,
    )
