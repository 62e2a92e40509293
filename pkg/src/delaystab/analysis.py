"""One-call pipeline: integrate, accumulate, judge, optionally cross-check."""

from __future__ import annotations

from dataclasses import dataclass, replace

from .criteria import (
    CriteriaConfig,
    MissingCheckpoint,
    StabilityReport,
    combine_verdict,
    residual_check,
    tail_convergence,
)
from .integrator import GridSpec, RunSummary, run_fundamental
from .oracle import ContourTooCoarse, rhp_zero_count_refined
from .quadrature import IntegralAccumulators, default_checkpoint_steps
from .system import DelaySystem


@dataclass(frozen=True)
class AnalysisResult:
    report: StabilityReport
    accumulators: IntegralAccumulators
    summary: RunSummary
    oracle_error: str | None = None


def analyze_system(
    sys: DelaySystem,
    grid: GridSpec,
    cfg: CriteriaConfig = CriteriaConfig(),
    with_oracle: bool = False,
    compensated: bool = False,
) -> AnalysisResult:
    """Run the full stability analysis of one system on one grid.

    Streams the fundamental matrix through the integral accumulators,
    evaluates the residual and tail criteria, and merges them into a
    verdict.  With ``with_oracle`` the characteristic-function root
    count is attached to the report (or, if the contour cannot be
    certified, the failure reason is recorded instead).
    """
    acc = IntegralAccumulators(
        sys.dim,
        grid.step,
        default_checkpoint_steps(grid.step_count),
        compensated=compensated,
    )
    summary = run_fundamental(sys, grid, acc)
    residual = residual_check(sys, acc)
    tails = None
    if not summary.diverged and not acc.tainted:
        try:
            tails = tail_convergence(acc)
        except MissingCheckpoint:
            tails = None
    report = combine_verdict(residual, tails, summary, cfg)
    oracle_error = None
    if with_oracle:
        try:
            count = rhp_zero_count_refined(sys)
            report = replace(report, oracle_rhp_count=count)
        except ContourTooCoarse as e:
            oracle_error = str(e)
    return AnalysisResult(report, acc, summary, oracle_error)
