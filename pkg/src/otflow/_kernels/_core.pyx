# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled twins of the fallback kernels.

Every arithmetic step mirrors _fallback.py (same pivot rule, same
operation order), so the two backends produce identical floats; the
parity test in tests/test_kernels.py holds them to that.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

BACKEND_NAME = "compiled"

DEF STALL_LIMIT_FACTOR = 20


def transport_simplex(cost, a, b, double pivot_tol=1e-11, long max_iter=200_000):
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    a = np.ascontiguousarray(a, dtype=np.float64)
    b = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] C = cost
    cdef long ns = C.shape[0]
    cdef long nt = C.shape[1]
    cdef long nn = ns + nt

    cdef double tol = pivot_tol
    cdef double cmax = 0.0
    cdef long i, j
    for i in range(ns):
        for j in range(nt):
            if C[i, j] > cmax:
                cmax = C[i, j]
            elif -C[i, j] > cmax:
                cmax = -C[i, j]
    if cmax < 1.0:
        cmax = 1.0
    tol = pivot_tol * cmax

    gamma_arr = np.zeros((ns, nt), dtype=np.float64)
    cdef double[:, ::1] gamma = gamma_arr
    # tree membership of arcs: basic[i, j] flag
    basic_arr = np.zeros((ns, nt), dtype=np.uint8)
    cdef unsigned char[:, ::1] basic = basic_arr

    # adjacency lists (tree degree can reach nn, but total slots 2*(nn-1))
    adj_arr = np.full((nn, nn), -1, dtype=np.int64)
    cdef long[:, ::1] adj = adj_arr
    deg_arr = np.zeros(nn, dtype=np.int64)
    cdef long[::1] deg = deg_arr

    cdef double[::1] ar = a.copy()
    cdef double[::1] br = b.copy()
    cdef double x

    # northwest-corner initial basis
    i = 0
    j = 0
    while True:
        x = ar[i] if ar[i] <= br[j] else br[j]
        gamma[i, j] = x
        basic[i, j] = 1
        adj[i, deg[i]] = ns + j
        deg[i] += 1
        adj[ns + j, deg[ns + j]] = i
        deg[ns + j] += 1
        ar[i] -= x
        br[j] -= x
        if i == ns - 1 and j == nt - 1:
            break
        if ar[i] == 0.0 and i < ns - 1:
            i += 1
        else:
            j += 1

    u_arr = np.empty(ns, dtype=np.float64)
    v_arr = np.empty(nt, dtype=np.float64)
    cdef double[::1] u = u_arr
    cdef double[::1] v = v_arr
    parent_arr = np.full(nn, -1, dtype=np.int64)
    cdef long[::1] parent = parent_arr
    depth_arr = np.zeros(nn, dtype=np.int64)
    cdef long[::1] depth = depth_arr
    order_arr = np.empty(nn, dtype=np.int64)
    cdef long[::1] order = order_arr
    seen_arr = np.zeros(nn, dtype=np.uint8)
    cdef unsigned char[::1] seen = seen_arr
    cycle_arr = np.empty(2 * nn, dtype=np.int64)
    cdef long[::1] cyc_s = cycle_arr[:nn]
    cdef long[::1] cyc_t = cycle_arr[nn:]

    cdef long head, tail, node, nb, k, pnode
    cdef long ie, je, flat, best_flat, lca, xx, yy
    cdef double best, red, theta, fval
    cdef long len_s, len_t, pos, leave_side, leave_pos, leave_node
    cdef bint bland = 0
    cdef long stall = 0
    cdef long stall_limit = STALL_LIMIT_FACTOR * nn
    cdef long iters = 0
    cdef long ci, cj

    # initial tree BFS
    _refresh(C, adj, deg, parent, depth, order, seen, u, v, ns, nn)

    while iters < max_iter:
        # entering arc
        best_flat = -1
        if not bland:
            best = -tol
            for i in range(ns):
                for j in range(nt):
                    red = (C[i, j] - u[i]) - v[j]
                    if red < best:
                        best = red
                        best_flat = i * nt + j
            if best_flat < 0:
                break
        else:
            for i in range(ns):
                if best_flat >= 0:
                    break
                for j in range(nt):
                    red = (C[i, j] - u[i]) - v[j]
                    if red < -tol:
                        best_flat = i * nt + j
                        break
            if best_flat < 0:
                break
        ie = best_flat // nt
        je = best_flat % nt
        iters += 1

        # lowest common ancestor of ie and ns+je
        xx = ie
        yy = ns + je
        while depth[xx] > depth[yy]:
            xx = parent[xx]
        while depth[yy] > depth[xx]:
            yy = parent[yy]
        while xx != yy:
            xx = parent[xx]
            yy = parent[yy]
        lca = xx

        len_s = 0
        node = ie
        while node != lca:
            cyc_s[len_s] = node
            len_s += 1
            node = parent[node]
        len_t = 0
        node = ns + je
        while node != lca:
            cyc_t[len_t] = node
            len_t += 1
            node = parent[node]

        # leaving arc: minimal flow among the minus-arcs, first wins
        theta = np.inf
        leave_side = -1
        leave_pos = -1
        for pos in range(0, len_s, 2):
            node = cyc_s[pos]
            _arc(parent, node, ns, &ci, &cj)
            fval = gamma[ci, cj]
            if fval < theta:
                theta = fval
                leave_side = 0
                leave_pos = pos
        for pos in range(0, len_t, 2):
            node = cyc_t[pos]
            _arc(parent, node, ns, &ci, &cj)
            fval = gamma[ci, cj]
            if fval < theta:
                theta = fval
                leave_side = 1
                leave_pos = pos

        if theta <= tol:
            stall += 1
            if stall > stall_limit:
                bland = 1
        else:
            stall = 0

        for pos in range(len_s):
            node = cyc_s[pos]
            _arc(parent, node, ns, &ci, &cj)
            if pos % 2 == 0:
                gamma[ci, cj] = gamma[ci, cj] - theta
            else:
                gamma[ci, cj] = gamma[ci, cj] + theta
        for pos in range(len_t):
            node = cyc_t[pos]
            _arc(parent, node, ns, &ci, &cj)
            if pos % 2 == 0:
                gamma[ci, cj] = gamma[ci, cj] - theta
            else:
                gamma[ci, cj] = gamma[ci, cj] + theta

        leave_node = cyc_s[leave_pos] if leave_side == 0 else cyc_t[leave_pos]
        _arc(parent, leave_node, ns, &ci, &cj)
        basic[ci, cj] = 0
        pnode = parent[leave_node]
        _adj_remove(adj, deg, leave_node, pnode)
        _adj_remove(adj, deg, pnode, leave_node)
        basic[ie, je] = 1
        gamma[ie, je] = theta
        adj[ie, deg[ie]] = ns + je
        deg[ie] += 1
        adj[ns + je, deg[ns + je]] = ie
        deg[ns + je] += 1
        _refresh(C, adj, deg, parent, depth, order, seen, u, v, ns, nn)

    # zero out anything nonbasic that may hold a stale exact-zero
    for i in range(ns):
        for j in range(nt):
            if not basic[i, j] and gamma[i, j] != 0.0:
                gamma[i, j] = 0.0
    return gamma_arr, u_arr.copy(), v_arr.copy(), iters


cdef inline void _arc(long[::1] parent, long node, long ns, long* ci, long* cj) noexcept:
    cdef long p = parent[node]
    if node < ns:
        ci[0] = node
        cj[0] = p - ns
    else:
        ci[0] = p
        cj[0] = node - ns


cdef inline void _adj_remove(long[:, ::1] adj, long[::1] deg, long node, long nb) noexcept:
    cdef long k
    for k in range(deg[node]):
        if adj[node, k] == nb:
            adj[node, k] = adj[node, deg[node] - 1]
            deg[node] -= 1
            return


cdef void _refresh(const double[:, ::1] C, long[:, ::1] adj, long[::1] deg,
                   long[::1] parent, long[::1] depth, long[::1] order,
                   unsigned char[::1] seen, double[::1] u, double[::1] v,
                   long ns, long nn) noexcept:
    cdef long head = 0, tail = 1, node, nb, k
    for k in range(nn):
        seen[k] = 0
    parent[0] = -1
    depth[0] = 0
    u[0] = 0.0
    order[0] = 0
    seen[0] = 1
    while head < tail:
        node = order[head]
        head += 1
        for k in range(deg[node]):
            nb = adj[node, k]
            if not seen[nb]:
                seen[nb] = 1
                parent[nb] = node
                depth[nb] = depth[node] + 1
                if nb >= ns:
                    v[nb - ns] = C[node, nb - ns] - u[node]
                else:
                    u[nb] = C[nb, node - ns] - v[node - ns]
                order[tail] = nb
                tail += 1


def hopf_lax_eval(dist, dist_sq, f, double t, double band_coeff=1e-12):
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=np.float64)
    cdef const double[:, ::1] DSQ = np.ascontiguousarray(dist_sq, dtype=np.float64)
    cdef const double[::1] F = np.ascontiguousarray(f, dtype=np.float64)
    cdef long n = D.shape[0]
    q_arr = np.empty(n, dtype=np.float64)
    dmin_arr = np.empty(n, dtype=np.float64)
    dmax_arr = np.empty(n, dtype=np.float64)
    cdef double[::1] q = q_arr
    cdef double[::1] dmin = dmin_arr
    cdef double[::1] dmax = dmax_arr
    cdef double inv2t = 1.0 / (2.0 * t)
    cdef long x, y
    cdef double obj, qb, band, dd, lo, hi, aq
    for x in range(n):
        qb = np.inf
        for y in range(n):
            obj = F[y] + DSQ[x, y] * inv2t
            if obj < qb:
                qb = obj
        aq = qb if qb >= 0 else -qb
        band = qb + band_coeff * (1.0 + aq)
        lo = np.inf
        hi = -np.inf
        for y in range(n):
            obj = F[y] + DSQ[x, y] * inv2t
            if obj <= band:
                dd = D[x, y]
                if dd < lo:
                    lo = dd
                if dd > hi:
                    hi = dd
        q[x] = qb
        dmin[x] = lo
        dmax[x] = hi
    return q_arr, dmin_arr, dmax_arr


def slope_max_quotient(dist, f, double h, long mode):
    cdef const double[:, ::1] D = np.ascontiguousarray(dist, dtype=np.float64)
    cdef const double[::1] F = np.ascontiguousarray(f, dtype=np.float64)
    cdef long n = D.shape[0]
    out_arr = np.zeros(n, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double cutoff = h * (1.0 + 1e-9)
    cdef long x, y
    cdef double d, diff, num, quot, best
    for x in range(n):
        best = 0.0
        for y in range(n):
            d = D[x, y]
            if d > 0.0 and d <= cutoff:
                diff = F[y] - F[x]
                if mode == 0:
                    num = diff if diff >= 0 else -diff
                elif mode == 1:
                    num = -diff if -diff > 0 else 0.0
                else:
                    num = diff if diff > 0 else 0.0
                quot = num / d
                if quot > best:
                    best = quot
        out[x] = best
    return out_arr
