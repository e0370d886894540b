"""Vectorized adaptive Simpson quadrature.

All panels that still need refinement are evaluated in one call of the
integrand, so the integrand must accept a 1-d array and return an array of the
same shape.
"""

from __future__ import annotations

from typing import Callable, Iterable

import numpy as np

from .errors import EvaluationError

ArrayFn = Callable[[np.ndarray], np.ndarray]


def _checked(f: ArrayFn, x: np.ndarray) -> np.ndarray:
    y = np.asarray(f(x), dtype=float)
    if y.shape != x.shape:
        y = np.broadcast_to(y, x.shape).astype(float)
    bad = ~np.isfinite(y)
    if bad.any():
        raise EvaluationError(f"non-finite integrand value at x={x[bad][0]!r}")
    return y


def adaptive_simpson(
    f: ArrayFn,
    edges: Iterable[float],
    rtol: float = 1e-8,
    atol: float = 1e-15,
    initial_split: int = 8,
    max_depth: int = 48,
    max_panels: int = 1 << 18,
) -> float:
    """Integrate ``f`` over ``[min(edges), max(edges)]``.

    ``edges`` are breakpoints where ``f`` may be non-smooth; each gap between
    consecutive edges is split into ``initial_split`` equal panels before the
    adaptive refinement starts.
    """
    e = np.unique(np.asarray(list(edges), dtype=float))
    if e.size < 2:
        return 0.0
    seg_a, seg_b = e[:-1], e[1:]
    frac = np.linspace(0.0, 1.0, initial_split + 1)
    grid = seg_a[:, None] + (seg_b - seg_a)[:, None] * frac[None, :]
    a = grid[:, :-1].ravel()
    b = grid[:, 1:].ravel()
    keep = b > a
    a, b = a[keep], b[keep]
    if a.size == 0:
        return 0.0
    m = 0.5 * (a + b)
    vals = _checked(f, np.concatenate([a, m, b]))
    n = a.size
    fa, fm, fb = vals[:n], vals[n : 2 * n], vals[2 * n :]
    whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb)

    scale = float(np.sum((b - a) / 6.0 * (np.abs(fa) + 4.0 * np.abs(fm) + np.abs(fb))))
    total_tol = max(rtol * scale, atol)
    width = e[-1] - e[0]
    tol = total_tol * (b - a) / width

    comp = []
    for depth in range(max_depth + 1):
        lm = 0.5 * (a + m)
        rm = 0.5 * (m + b)
        n = a.size
        v = _checked(f, np.concatenate([lm, rm]))
        flm, frm = v[:n], v[n:]
        left = (m - a) / 6.0 * (fa + 4.0 * flm + fm)
        right = (b - m) / 6.0 * (fm + 4.0 * frm + fb)
        err = left + right - whole
        # a panel is settled once its error estimate meets its share of the
        # tolerance or sinks to round-off in the panel values themselves
        roundoff = 64 * np.finfo(float).eps * (np.abs(left) + np.abs(right))
        done = np.abs(err) <= np.maximum(15.0 * tol, roundoff)
        if depth == max_depth or a.size > max_panels:
            done[:] = True
        if done.any():
            comp.append(np.sum(left[done] + right[done] + err[done] / 15.0))
        todo = ~done
        if not todo.any():
            break
        a_t, m_t, b_t = a[todo], m[todo], b[todo]
        fa_t, fm_t, fb_t = fa[todo], fm[todo], fb[todo]
        flm_t, frm_t = flm[todo], frm[todo]
        t_half = tol[todo] / 2.0
        a = np.concatenate([a_t, m_t])
        b = np.concatenate([m_t, b_t])
        m = np.concatenate([lm[todo], rm[todo]])
        fa = np.concatenate([fa_t, fm_t])
        fb = np.concatenate([fm_t, fb_t])
        fm = np.concatenate([flm_t, frm_t])
        whole = np.concatenate([left[todo], right[todo]])
        tol = np.concatenate([t_half, t_half])
    return float(np.sum(comp)) if comp else 0.0
