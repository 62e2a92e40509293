"""Independent stability oracle via the characteristic function.

The characteristic function of the system is

    P(s) = det[ s I - A0 - sum_j Aj exp(-tau_j s) ],

an entire function whose zeros are the characteristic roots; asymptotic
stability is equivalent to every zero having negative real part.  Any
zero with Re s >= 0 satisfies |s| <= ||A0|| + sum ||Aj|| (the
exponentials have modulus at most one there), so the zeros in the
closed right half-plane can be counted exactly as the winding number of
P around 0 along the boundary of a half-disk that encloses them all.

The winding number is summed from phase increments between consecutive
contour samples.  Sampling is only trusted when every single increment
stays below pi/2 (well under the pi that aliasing needs) and no sample
comes close to a zero of P; otherwise ContourTooCoarse asks the caller
to refine.  Roots on the imaginary axis (marginal systems) are outside
the guarantee and surface as ContourTooCoarse rather than a guess.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import complex_det, frobenius_norm
from .system import DelaySystem

_EVAL_CHUNK = 65536


class ContourTooCoarse(RuntimeError):
    """Sampling cannot certify the winding number; refine samples_per_unit."""


@dataclass(frozen=True)
class ContourSpec:
    """Half-disk contour: |s| <= radius, Re s >= -margin.

    The radius must dominate the enclosure bound of the system under
    test (checked at use time).  margin > 0 shifts the vertical segment
    left so that roots sitting exactly on the imaginary axis fall inside
    the contour instead of on it.
    """

    radius: float
    samples_per_unit: int = 200
    margin: float = 0.0

    def __post_init__(self):
        if not (self.radius > 0 and math.isfinite(self.radius)):
            raise ValueError("radius must be positive and finite")
        if self.samples_per_unit < 50:
            raise ValueError("samples_per_unit must be at least 50")
        if not (0 <= self.margin < self.radius):
            raise ValueError("margin must satisfy 0 <= margin < radius")


def enclosure_radius(sys: DelaySystem):
    """Radius guaranteed to enclose every closed-right-half-plane root."""
    return 1.0 + frobenius_norm(sys.a0) + sum(frobenius_norm(t.a) for t in sys.terms)


def default_contour(sys: DelaySystem, samples_per_unit=200, margin=0.0) -> ContourSpec:
    return ContourSpec(enclosure_radius(sys), samples_per_unit, margin)


def characteristic_value(sys: DelaySystem, s):
    """P(s) for a complex scalar s, or elementwise for an array of them."""
    s_arr = np.asarray(s, dtype=complex)
    eye = np.eye(sys.dim)
    stack = s_arr[..., None, None] * eye - sys.a0
    for term in sys.terms:
        stack = stack - np.exp(-term.tau * s_arr)[..., None, None] * term.a
    det = complex_det(stack)
    if s_arr.ndim == 0:
        return complex(det)
    return det


def _contour_points(contour: ContourSpec):
    """Closed counterclockwise boundary of the half-disk, as a cyclic
    sample array (the last point's successor is the first point)."""
    r = contour.radius
    m = contour.margin
    y = math.sqrt(r * r - m * m)
    theta_top = math.atan2(y, -m)
    theta_bot = -theta_top
    arc_len = (theta_top - theta_bot) * r
    seg_len = 2.0 * y
    n_arc = max(2, math.ceil(arc_len * contour.samples_per_unit))
    n_seg = max(2, math.ceil(seg_len * contour.samples_per_unit))
    # Each piece contributes its start point; ends are the next piece's start.
    thetas = np.linspace(theta_bot, theta_top, n_arc, endpoint=False)
    arc = r * np.exp(1j * thetas)
    ts = np.linspace(0.0, 1.0, n_seg, endpoint=False)
    seg = (-m + 1j * y) + ts * (-2j * y)
    return np.concatenate([arc, seg])


def _char_values(sys: DelaySystem, points):
    vals = np.empty(points.shape[0], dtype=complex)
    for k in range(0, points.shape[0], _EVAL_CHUNK):
        vals[k:k + _EVAL_CHUNK] = characteristic_value(sys, points[k:k + _EVAL_CHUNK])
    return vals


def rhp_zero_count(sys: DelaySystem, contour: ContourSpec | None = None) -> int:
    """Number of characteristic roots inside the half-disk contour.

    With the default contour this is the number of roots with
    Re s >= 0, the exact count of stability violations.

    Raises
    ------
    ContourTooCoarse
        If any phase increment exceeds pi/2, if some |P| sample drops
        below 1e-12 times the contour median (a root on or near the
        contour), or if the summed phase fails to close on an integer
        multiple of 2 pi.
    ValueError
        If the contour radius is below the system's enclosure bound.
    """
    if contour is None:
        contour = default_contour(sys)
    bound = enclosure_radius(sys)
    if contour.radius < bound * (1.0 - 1e-12):
        raise ValueError(
            f"contour radius {contour.radius:g} is below the enclosure bound {bound:g}"
        )
    points = _contour_points(contour)
    vals = _char_values(sys, points)
    mags = np.abs(vals)
    median = float(np.median(mags))
    if median == 0.0 or mags.min() < 1e-12 * median:
        raise ContourTooCoarse(
            "characteristic value vanishes on or near the contour "
            "(possible root on the boundary)"
        )
    phases = np.angle(vals)
    steps = np.roll(phases, -1) - phases
    increments = (steps + math.pi) % (2.0 * math.pi) - math.pi
    worst = float(np.abs(increments).max())
    if worst > math.pi / 2:
        raise ContourTooCoarse(
            f"largest phase step {worst:.3f} rad exceeds pi/2; "
            "increase samples_per_unit"
        )
    winding = float(increments.sum()) / (2.0 * math.pi)
    count = round(winding)
    if abs(winding - count) > 0.25 or count < 0:
        raise ContourTooCoarse(
            f"phase sum {winding:.4f} turns does not close on a "
            "nonnegative integer; increase samples_per_unit"
        )
    return int(count)


def rhp_zero_count_refined(
    sys: DelaySystem,
    samples_per_unit=200,
    margin=0.0,
    max_doublings=5,
) -> int:
    """rhp_zero_count with automatic sampling refinement.

    Doubles samples_per_unit until the count certifies; re-raises
    ContourTooCoarse if max_doublings refinements are not enough (for
    example for a root essentially on the contour).
    """
    spu = samples_per_unit
    for attempt in range(max_doublings + 1):
        try:
            return rhp_zero_count(sys, default_contour(sys, spu, margin))
        except ContourTooCoarse:
            if attempt == max_doublings:
                raise
            spu *= 2
    raise AssertionError("unreachable")
