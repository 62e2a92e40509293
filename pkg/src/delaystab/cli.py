"""Command-line front end.

Three subcommands:

    analyze   full stability analysis of a system file; exit status
              encodes the verdict (0 Stable, 1 Unstable, 2 Inconclusive)
    trace     CSV of t versus ||X(t)||_F for external plotting
    sweep     re-analyze with all delays scaled by each factor on a grid

Error exits: 10 for system-file parse errors, 11 for configuration
violations, 12 for I/O failures.
"""

from __future__ import annotations

import argparse
import json
import math
import sys as _sys
from dataclasses import dataclass, field

import numpy as np

from .analysis import analyze_system
from .criteria import CriteriaConfig, StabilityReport, Verdict
from .integrator import GridSpec
from .system import DelaySystem, ParseError, load_system

EXIT_STABLE = 0
EXIT_UNSTABLE = 1
EXIT_INCONCLUSIVE = 2
EXIT_PARSE_ERROR = 10
EXIT_CONFIG_ERROR = 11
EXIT_IO_ERROR = 12

MAX_STEP_COUNT = 5e8

_VERDICT_EXIT = {
    Verdict.STABLE: EXIT_STABLE,
    Verdict.UNSTABLE: EXIT_UNSTABLE,
    Verdict.INCONCLUSIVE: EXIT_INCONCLUSIVE,
}


class ConfigError(ValueError):
    """Command configuration violates an invariant."""


def _checked_grid(horizon, step):
    if not (horizon > 0 and step > 0):
        raise ConfigError("horizon and step must be positive")
    if step > horizon:
        raise ConfigError("step exceeds horizon")
    if horizon / step > MAX_STEP_COUNT:
        raise ConfigError(
            f"horizon/step = {horizon / step:.3g} exceeds the {MAX_STEP_COUNT:.0e} step cap"
        )
    return GridSpec.make(horizon, step)


@dataclass(frozen=True)
class AnalyzeConfig:
    system_path: str
    horizon: float
    step: float
    criteria: CriteriaConfig = field(default_factory=CriteriaConfig)
    oracle_enabled: bool = False
    output_format: str = "human"

    def __post_init__(self):
        if self.output_format not in ("human", "json"):
            raise ConfigError(f"unknown output format {self.output_format!r}")
        _checked_grid(self.horizon, self.step)


@dataclass(frozen=True)
class TraceConfig:
    system_path: str
    horizon: float
    step: float
    output_path: str
    stride: int | None = None  # None: pick so the file stays near 10^4 rows

    def __post_init__(self):
        grid = _checked_grid(self.horizon, self.step)
        if self.stride is not None and self.stride < 1:
            raise ConfigError("stride must be at least 1")
        object.__setattr__(
            self, "stride", self.stride or max(1, grid.step_count // 10000)
        )


def _fmt9(x):
    return f"{x:.9g}"


class TraceWriter:
    """Sink that writes `t,frobenius_norm` rows for strided steps."""

    def __init__(self, handle, grid: GridSpec, dim, stride):
        self.handle = handle
        self.grid = grid
        self.stride = stride
        handle.write("t,frobenius_norm\n")
        handle.write(f"{_fmt9(0.0)},{_fmt9(math.sqrt(dim))}\n")

    def consume_block(self, start_n, block):
        last = self.grid.step_count
        count = block.shape[0]
        norms = np.sqrt(np.einsum("ijk,ijk->i", block, block))
        for i in range(count):
            n = start_n + i
            if n % self.stride == 0 or n == last:
                self.handle.write(f"{_fmt9(self.grid.time_at(n))},{_fmt9(norms[i])}\n")


def report_to_dict(report: StabilityReport, acc, oracle_error=None):
    """JSON-ready report document mirroring the StabilityReport fields."""

    def num(x):
        if x is None:
            return None
        x = float(x)
        return x if math.isfinite(x) else None

    doc = {
        "verdict": report.verdict.value,
        "residual_abs": num(report.residual_abs),
        "residual_rel": num(report.residual_rel),
        "coefficient_sum_invertible": report.coefficient_sum_invertible,
        "tail_growth_norm": num(report.tail_growth_norm),
        "tail_growth_norm2": num(report.tail_growth_norm2),
        "final_state_norm": num(report.final_state_norm),
        "max_state_norm": num(report.max_state_norm),
        "diverged": report.diverged,
        "grid": {
            "horizon": report.grid.horizon,
            "step": report.grid.step,
            "step_count": report.grid.step_count,
        },
        "annotation": report.annotation,
        "oracle_rhp_count": report.oracle_rhp_count,
        "integral_matrix": [[float(v) for v in row] for row in acc.matrix_sum],
        "norm_integral": num(acc.norm_sum),
        "sq_norm_integral": num(acc.sq_norm_sum),
    }
    if oracle_error is not None:
        doc["oracle_error"] = oracle_error
    return doc


def _print_human_report(sys_obj: DelaySystem, result, cfg: AnalyzeConfig, out):
    report = result.report
    acc = result.accumulators
    grid = report.grid

    def show(x, unit=""):
        return "n/a" if x is None else f"{x:.6g}{unit}"

    w = out.write
    w(f"system      {cfg.system_path}  (dim {sys_obj.dim}, delays {sys_obj.delay_count})\n")
    w(f"grid        horizon {grid.horizon:g}  step {grid.step:g}  steps {grid.step_count}\n")
    w(f"verdict     {report.verdict.value}\n")
    if report.annotation:
        w(f"note        {report.annotation}\n")
    w(f"residual    abs {show(report.residual_abs)}   rel {show(report.residual_rel)}"
      f"   [tol {cfg.criteria.residual_tol:g}]\n")
    w(f"tail growth norm {show(report.tail_growth_norm)}   "
      f"squared {show(report.tail_growth_norm2)}   [tol {cfg.criteria.tail_rel_tol:g}]\n")
    w(f"invertible  {'yes' if report.coefficient_sum_invertible else 'no'}\n")
    w(f"state norm  final {show(report.final_state_norm)}   max {show(report.max_state_norm)}"
      f"   diverged {'yes' if report.diverged else 'no'}\n")
    w(f"integrals   norm {acc.norm_sum:.6g}   squared-norm {acc.sq_norm_sum:.6g}\n")
    w("integral of X:\n")
    for row in acc.matrix_sum:
        w("    [" + "  ".join(f"{v: .6f}" for v in row) + "]\n")
    if report.oracle_rhp_count is not None:
        w(f"oracle      {report.oracle_rhp_count} right-half-plane root(s)\n")
    elif result.oracle_error is not None:
        w(f"oracle      failed: {result.oracle_error}\n")


def cmd_analyze(cfg: AnalyzeConfig, out=None) -> int:
    """Run the analysis pipeline and print the report; returns exit status."""
    out = out or _sys.stdout
    try:
        sys_obj = load_system(cfg.system_path)
    except ParseError as e:
        print(f"error: {cfg.system_path}: {e}", file=_sys.stderr)
        return EXIT_PARSE_ERROR
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_IO_ERROR
    grid = _checked_grid(cfg.horizon, cfg.step)
    result = analyze_system(sys_obj, grid, cfg.criteria, with_oracle=cfg.oracle_enabled)
    if cfg.output_format == "json":
        json.dump(report_to_dict(result.report, result.accumulators, result.oracle_error),
                  out, indent=2)
        out.write("\n")
    else:
        _print_human_report(sys_obj, result, cfg, out)
    return _VERDICT_EXIT[result.report.verdict]


def cmd_trace(cfg: TraceConfig) -> int:
    """Write the Frobenius-norm trace CSV; returns exit status."""
    from .integrator import run_fundamental

    try:
        sys_obj = load_system(cfg.system_path)
    except ParseError as e:
        print(f"error: {cfg.system_path}: {e}", file=_sys.stderr)
        return EXIT_PARSE_ERROR
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_IO_ERROR
    grid = _checked_grid(cfg.horizon, cfg.step)
    try:
        with open(cfg.output_path, "w", encoding="utf-8", newline="\n") as handle:
            writer = TraceWriter(handle, grid, sys_obj.dim, cfg.stride)
            run_fundamental(sys_obj, grid, writer)
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_IO_ERROR
    return 0


def cmd_sweep(
    system_path,
    horizon,
    step,
    scale_min,
    scale_max,
    scale_steps,
    criteria: CriteriaConfig = CriteriaConfig(),
    out=None,
) -> int:
    """Analyze the system with all delays scaled by each factor in turn.

    One row per factor, ascending; a failing row reports its error and
    the sweep continues.
    """
    out = out or _sys.stdout
    if not (0 < scale_min <= scale_max):
        raise ConfigError("need 0 < scale-min <= scale-max")
    if scale_steps < 1:
        raise ConfigError("need at least one sweep step")
    try:
        sys_obj = load_system(system_path)
    except ParseError as e:
        print(f"error: {system_path}: {e}", file=_sys.stderr)
        return EXIT_PARSE_ERROR
    except OSError as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_IO_ERROR
    grid = _checked_grid(horizon, step)
    if scale_steps == 1:
        factors = [scale_min]
    else:
        factors = [
            scale_min + (scale_max - scale_min) * i / (scale_steps - 1)
            for i in range(scale_steps)
        ]
    out.write(f"{'scale':>10}  {'verdict':<13} {'residual_rel':>13}  {'tail_growth_norm2':>18}\n")
    for c in factors:
        try:
            result = analyze_system(sys_obj.scale_delays(c), grid, criteria)
            rep = result.report
            rel = "n/a" if rep.residual_rel is None else f"{rep.residual_rel:.6g}"
            tail = "n/a" if rep.tail_growth_norm2 is None else f"{rep.tail_growth_norm2:.6g}"
            out.write(f"{c:>10.6g}  {rep.verdict.value:<13} {rel:>13}  {tail:>18}\n")
        except Exception as e:  # a row failure must not abort the sweep
            out.write(f"{c:>10.6g}  {'error':<13} {str(e)[:40]:>13}  {'':>18}\n")
    return 0


class _Parser(argparse.ArgumentParser):
    # argparse exits with status 2 on bad usage, which collides with the
    # Inconclusive verdict; surface usage problems as config errors.
    def error(self, message):
        raise ConfigError(message)


def build_parser():
    parser = _Parser(
        prog="delaystab",
        description="Stability analysis of linear delay differential systems "
        "from integrals of the fundamental matrix.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    pa = sub.add_parser("analyze", help="full stability analysis of a system file")
    pa.add_argument("--system", required=True, help="system description JSON file")
    pa.add_argument("--horizon", type=float, required=True, help="integration horizon T")
    pa.add_argument("--step", type=float, required=True, help="Euler step size h")
    pa.add_argument("--residual-tol", type=float, default=None,
                    help="relative residual tolerance (default 0.05)")
    pa.add_argument("--tail-tol", type=float, default=None,
                    help="tail growth tolerance (default 1e-4)")
    pa.add_argument("--oracle", action="store_true",
                    help="also count right-half-plane characteristic roots")
    pa.add_argument("--format", choices=("human", "json"), default="human")

    pt = sub.add_parser("trace", help="write t,frobenius_norm CSV of the run")
    pt.add_argument("--system", required=True)
    pt.add_argument("--horizon", type=float, required=True)
    pt.add_argument("--step", type=float, required=True)
    pt.add_argument("--stride", type=int, default=None,
                    help="emit every stride-th step (default: about 10^4 rows)")
    pt.add_argument("--out", required=True, help="output CSV path")

    ps = sub.add_parser("sweep", help="delay-scaling sweep")
    ps.add_argument("--system", required=True)
    ps.add_argument("--horizon", type=float, required=True)
    ps.add_argument("--step", type=float, required=True)
    ps.add_argument("--scale-min", type=float, required=True)
    ps.add_argument("--scale-max", type=float, required=True)
    ps.add_argument("--steps", type=int, required=True, help="number of scale factors")

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "analyze":
            crit = {}
            if args.residual_tol is not None:
                crit["residual_tol"] = args.residual_tol
            if args.tail_tol is not None:
                crit["tail_rel_tol"] = args.tail_tol
            cfg = AnalyzeConfig(
                system_path=args.system,
                horizon=args.horizon,
                step=args.step,
                criteria=CriteriaConfig(**crit),
                oracle_enabled=args.oracle,
                output_format=args.format,
            )
            return cmd_analyze(cfg)
        if args.command == "trace":
            return cmd_trace(
                TraceConfig(
                    system_path=args.system,
                    horizon=args.horizon,
                    step=args.step,
                    output_path=args.out,
                    stride=args.stride,
                )
            )
        if args.command == "sweep":
            return cmd_sweep(
                args.system, args.horizon, args.step,
                args.scale_min, args.scale_max, args.steps,
            )
        raise ConfigError(f"unknown command {args.command!r}")
    except (ConfigError, ValueError) as e:
        print(f"error: {e}", file=_sys.stderr)
        return EXIT_CONFIG_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
