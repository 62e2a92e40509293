"""Step kernels for the explicit Euler recurrence.

The recurrence is strictly serial, so speed comes from compiling the
per-step loop rather than vectorizing across steps.  With numba present
the loop kernel is jitted (compiled once, cached on disk); without it a
numpy per-step fallback keeps everything functional at reduced speed.

Both kernels advance ``count`` steps starting from logical step ``n0``
(the ring must hold X_{n0} and all history the delays reach back to),
write each new step into the ring and into ``out``, and return the
relative index of the first non-finite step, or -1 if all steps stayed
finite.
"""

from __future__ import annotations

import numpy as np


def _advance_loops(a0, ad, lags, fracs, h, ring, n0, count, out):
    cap = ring.shape[0]
    d = a0.shape[0]
    m = lags.shape[0]
    for i in range(count):
        n = n0 + i
        cur = ring[n % cap]
        nxt = ring[(n + 1) % cap]
        # nxt accumulates A0 X_n + sum_j Aj X(t_n - tau_j), then is
        # overwritten with X_n + h * (that sum).  Slot (n+1) % cap never
        # aliases a slot the delays still read (capacity = max lag + 2).
        for r in range(d):
            for c in range(d):
                s = 0.0
                for k in range(d):
                    s += a0[r, k] * cur[k, c]
                nxt[r, c] = s
        for j in range(m):
            base = n - lags[j]
            if base < 0:
                continue
            frac = fracs[j]
            za = ring[base % cap]
            if frac == 0.0:
                for r in range(d):
                    for c in range(d):
                        s = 0.0
                        for k in range(d):
                            s += ad[j, r, k] * za[k, c]
                        nxt[r, c] += s
            else:
                zb = ring[(base + 1) % cap]
                w = 1.0 - frac
                for r in range(d):
                    for c in range(d):
                        s = 0.0
                        for k in range(d):
                            s += ad[j, r, k] * (w * za[k, c] + frac * zb[k, c])
                        nxt[r, c] += s
        ok = True
        for r in range(d):
            for c in range(d):
                v = cur[r, c] + h * nxt[r, c]
                nxt[r, c] = v
                out[i, r, c] = v
                if not np.isfinite(v):
                    ok = False
        if not ok:
            return i
    return -1


def _advance_numpy(a0, ad, lags, fracs, h, ring, n0, count, out):
    cap = ring.shape[0]
    m = lags.shape[0]
    for i in range(count):
        n = n0 + i
        cur = ring[n % cap]
        acc = a0 @ cur
        for j in range(m):
            base = n - lags[j]
            if base < 0:
                continue
            frac = fracs[j]
            if frac == 0.0:
                z = ring[base % cap]
            else:
                z = (1.0 - frac) * ring[base % cap] + frac * ring[(base + 1) % cap]
            acc += ad[j] @ z
        nxt = cur + h * acc
        ring[(n + 1) % cap] = nxt
        out[i] = nxt
        if not np.isfinite(nxt).all():
            return i
    return -1


try:
    from numba import njit

    advance = njit(cache=True)(_advance_loops)
    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - degraded environments only
    advance = _advance_numpy
    HAVE_NUMBA = False
