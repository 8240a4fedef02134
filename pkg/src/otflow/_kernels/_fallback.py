"""Pure-python/numpy kernels.

These are the reference implementations of the hot paths; the compiled
extension in ``_core.pyx`` mirrors them operation for operation so both
backends produce identical pivot sequences and identical floats.
"""

from __future__ import annotations

import numpy as np

BACKEND_NAME = "python"

_STALL_LIMIT_FACTOR = 20


def transport_simplex(cost, a, b, pivot_tol=1e-11, max_iter=200_000):
    """Dense transportation problem by primal network simplex.

    min <cost, gamma> over gamma >= 0 with row sums a and column sums b
    (sum(a) == sum(b) assumed, all entries positive).  Pivoting is
    Dantzig's rule (most negative reduced cost, lowest flat index on
    ties); after a long run of degenerate pivots it permanently switches
    to Bland's rule, which guarantees termination.

    Returns (gamma, u, v, iterations) where (u, v) are the final duals
    with u[0] = 0; reduced costs cost - u[:,None] - v[None,:] are
    >= -pivot_tol*scale everywhere.
    """
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    ns, nt = cost.shape
    nn = ns + nt
    tol = pivot_tol * max(1.0, float(np.max(np.abs(cost))))

    # northwest-corner initial basis (spanning tree, degenerate zeros kept)
    parent = np.full(nn, -1, dtype=np.int64)
    adj = [[] for _ in range(nn)]
    flow = {}

    def link(i, j, x):
        flow[(i, j)] = x
        adj[i].append(ns + j)
        adj[ns + j].append(i)

    ar = a.copy()
    br = b.copy()
    i = j = 0
    while True:
        x = ar[i] if ar[i] <= br[j] else br[j]
        link(i, j, x)
        ar[i] -= x
        br[j] -= x
        if i == ns - 1 and j == nt - 1:
            break
        if ar[i] == 0.0 and i < ns - 1:
            i += 1
        else:
            j += 1

    u = np.empty(ns)
    v = np.empty(nt)
    depth = np.empty(nn, dtype=np.int64)
    order = np.empty(nn, dtype=np.int64)

    def refresh_tree():
        """BFS from the root (source 0): parents, depths, duals."""
        parent[0] = -1
        depth[0] = 0
        u[0] = 0.0
        order[0] = 0
        seen = np.zeros(nn, dtype=bool)
        seen[0] = True
        head, tail = 0, 1
        while head < tail:
            node = order[head]
            head += 1
            for nb in adj[node]:
                if not seen[nb]:
                    seen[nb] = True
                    parent[nb] = node
                    depth[nb] = depth[node] + 1
                    if nb >= ns:
                        v[nb - ns] = cost[node, nb - ns] - u[node]
                    else:
                        u[nb] = cost[nb, order_sink(node)] - v[node - ns]
                    order[tail] = nb
                    tail += 1

    def order_sink(node):
        return node - ns

    bland = False
    stall = 0
    stall_limit = _STALL_LIMIT_FACTOR * nn
    iters = 0
    refresh_tree()

    while iters < max_iter:
        red = cost - u[:, None] - v[None, :]
        if not bland:
            flat = int(np.argmin(red))
            if red.flat[flat] >= -tol:
                break
        else:
            hits = np.flatnonzero(red.ravel() < -tol)
            if hits.size == 0:
                break
            flat = int(hits[0])
        ie, je = divmod(flat, nt)
        iters += 1

        # tree cycle between the entering arc's endpoints
        lca = _find_lca(parent, depth, ie, ns + je)
        side_s = _climb(parent, ie, lca)
        side_t = _climb(parent, ns + je, lca)

        theta = np.inf
        leave = -1  # index into combined minus-arc list
        minus_arcs = []
        k = 0
        for pos, node in enumerate(side_s):
            if pos % 2 == 0:  # gives up flow
                arc = _arc_of(parent, node, ns)
                fval = flow[arc]
                minus_arcs.append((node, arc))
                if fval < theta:
                    theta = fval
                    leave = k
                k += 1
        for pos, node in enumerate(side_t):
            if pos % 2 == 0:
                arc = _arc_of(parent, node, ns)
                fval = flow[arc]
                minus_arcs.append((node, arc))
                if fval < theta:
                    theta = fval
                    leave = k
                k += 1

        if theta <= tol:
            stall += 1
            if stall > stall_limit:
                bland = True
        else:
            stall = 0

        # apply flow change around the cycle
        for pos, node in enumerate(side_s):
            arc = _arc_of(parent, node, ns)
            flow[arc] = flow[arc] - theta if pos % 2 == 0 else flow[arc] + theta
        for pos, node in enumerate(side_t):
            arc = _arc_of(parent, node, ns)
            flow[arc] = flow[arc] - theta if pos % 2 == 0 else flow[arc] + theta

        leave_node, leave_arc = minus_arcs[leave]
        del flow[leave_arc]
        pnode = parent[leave_node]
        adj[leave_node].remove(pnode)
        adj[pnode].remove(leave_node)
        flow[(ie, je)] = theta
        adj[ie].append(ns + je)
        adj[ns + je].append(ie)
        refresh_tree()

    gamma = np.zeros((ns, nt))
    for (fi, fj), x in flow.items():
        gamma[fi, fj] = x
    return gamma, u.copy(), v.copy(), iters


def _find_lca(parent, depth, x, y):
    while depth[x] > depth[y]:
        x = parent[x]
    while depth[y] > depth[x]:
        y = parent[y]
    while x != y:
        x = parent[x]
        y = parent[y]
    return x


def _climb(parent, node, lca):
    out = []
    while node != lca:
        out.append(node)
        node = parent[node]
    return out


def _arc_of(parent, node, ns):
    p = parent[node]
    return (node, p - ns) if node < ns else (p, node - ns)


def hopf_lax_eval(dist, dist_sq, f, t, band_coeff=1e-12):
    """Exact finite Hopf-Lax evaluation.

    q[x] = min_y f[y] + d(x,y)^2 / (2t); d_minus/d_plus are the min/max
    distance over the argmin band {y : obj <= q[x] + band_coeff*(1+|q[x]|)}.
    """
    n = dist.shape[0]
    q = np.empty(n)
    d_minus = np.empty(n)
    d_plus = np.empty(n)
    inv2t = 1.0 / (2.0 * t)
    block = max(1, int(2**22 // max(n, 1)))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        obj = f[None, :] + dist_sq[lo:hi] * inv2t
        qb = obj.min(axis=1)
        band = obj <= (qb + band_coeff * (1.0 + np.abs(qb)))[:, None]
        dd = dist[lo:hi]
        d_minus[lo:hi] = np.where(band, dd, np.inf).min(axis=1)
        d_plus[lo:hi] = np.where(band, dd, -np.inf).max(axis=1)
        q[lo:hi] = qb
    return q, d_minus, d_plus


def slope_max_quotient(dist, f, h, mode):
    """Discrete slope at radius h.

    mode 0: max |f(y)-f(x)|/d over 0 < d <= h(1+1e-9)  (two_sided)
    mode 1: max (f(x)-f(y))+ / d  (descending)
    mode 2: max (f(y)-f(x))+ / d  (ascending)
    Points with no neighbor in the ball get slope 0.
    """
    n = dist.shape[0]
    out = np.zeros(n)
    cutoff = h * (1.0 + 1e-9)
    block = max(1, int(2**22 // max(n, 1)))
    for lo in range(0, n, block):
        hi = min(lo + block, n)
        d = dist[lo:hi]
        mask = (d > 0.0) & (d <= cutoff)
        diff = f[None, :] - f[lo:hi, None]
        if mode == 0:
            num = np.abs(diff)
        elif mode == 1:
            num = np.maximum(-diff, 0.0)
        else:
            num = np.maximum(diff, 0.0)
        quot = np.where(mask, num / np.where(mask, d, 1.0), 0.0)
        out[lo:hi] = quot.max(axis=1)
    return out
