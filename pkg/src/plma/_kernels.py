"""Compiled inner loops (numba)."""

import numba as nb
import numpy as np


@nb.njit(cache=True)
def hull_merge(xs, V, use, ys, kstar, kprev, knext):
    """Per-row lower convex hull and monotone-slope merge against ``ys``.

    For every row ``r`` the nodes with ``use[r, k]`` are reduced to their
    lower convex hull (monotone chain, collinear points dropped). Walking
    the sorted abscissae ``ys`` alongside the nondecreasing hull slopes
    gives the discrete maximiser of ``x*y - v`` in linear time; on exact
    ties the leftmost vertex wins. Outputs are node indices, -1 when absent.
    """
    nrows, n = V.shape
    m = ys.shape[0]
    hull = np.empty(n, dtype=np.int64)
    for r in range(nrows):
        top = 0
        for k in range(n):
            if not use[r, k]:
                continue
            while top >= 2:
                o = hull[top - 2]
                a = hull[top - 1]
                cross = (xs[a] - xs[o]) * (V[r, k] - V[r, o]) - (V[r, a] - V[r, o]) * (xs[k] - xs[o])
                if cross <= 0.0:
                    top -= 1
                else:
                    break
            hull[top] = k
            top += 1
        if top == 0:
            for q in range(m):
                kstar[r, q] = -1
                kprev[r, q] = -1
                knext[r, q] = -1
            continue
        p = 0
        for q in range(m):
            y = ys[q]
            while p < top - 1:
                a = hull[p]
                b = hull[p + 1]
                if y > (V[r, b] - V[r, a]) / (xs[b] - xs[a]):
                    p += 1
                else:
                    break
            kstar[r, q] = hull[p]
            kprev[r, q] = hull[p - 1] if p > 0 else -1
            knext[r, q] = hull[p + 1] if p < top - 1 else -1


@nb.njit(cache=True)
def sor_sweeps(v, a1, a2, rhs, unknown, inv_h1sq, inv_h2sq, omega, n_sweeps):
    """Red-black SOR for a1*D11 v + a2*D22 v = rhs on the ``unknown`` nodes.

    Colours are swept red (i+j even) then black; within a colour the nodes
    are independent, so the update order inside a colour does not matter.
    """
    n1, n2 = v.shape
    for _ in range(n_sweeps):
        for colour in range(2):
            for i in range(1, n1 - 1):
                start = 1 + ((i + 1 + colour) % 2)
                for j in range(start, n2 - 1, 2):
                    if not unknown[i, j]:
                        continue
                    c1 = a1[i, j] * inv_h1sq
                    c2 = a2[i, j] * inv_h2sq
                    diag = 2.0 * (c1 + c2)
                    gs = (c1 * (v[i + 1, j] + v[i - 1, j]) + c2 * (v[i, j + 1] + v[i, j - 1]) - rhs[i, j]) / diag
                    v[i, j] += omega * (gs - v[i, j])


@nb.njit(cache=True)
def linear_residual(v, a1, a2, rhs, unknown, inv_h1sq, inv_h2sq):
    """Sup of |a1*D11 v + a2*D22 v - rhs| over the ``unknown`` nodes."""
    n1, n2 = v.shape
    worst = 0.0
    for i in range(1, n1 - 1):
        for j in range(1, n2 - 1):
            if not unknown[i, j]:
                continue
            r = (a1[i, j] * (v[i + 1, j] - 2.0 * v[i, j] + v[i - 1, j]) * inv_h1sq
                 + a2[i, j] * (v[i, j + 1] - 2.0 * v[i, j] + v[i, j - 1]) * inv_h2sq - rhs[i, j])
            if not abs(r) <= worst:
                # NaN propagates so divergence cannot pass as convergence
                worst = abs(r)
                if worst != worst:
                    return worst
    return worst
