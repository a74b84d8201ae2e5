# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels mirroring ``_pykernels`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

NAME = "cython"

cdef double _EPS = 1e-12

# arc kinds
DEF SRC = 0
DEF MID = 1
DEF SNK = 2


cdef int _ssp(long n, long* d, long* s, double* vc, double* k, bint aggregate,
              long* delta, long* out, long* inn,
              long* au, long* aw, double* ac, int* akind, long* akey, int* asign,
              double* dist, long* pred) nogil:
    cdef long i, j, x, left, na, it, idx, node, u, w, cap
    cdef long nv = 2 * n + 2
    cdef long sink = 2 * n + 1
    cdef bint changed
    cdef bint any_s = False, any_r = False
    for i in range(n * n):
        delta[i] = 0
    for i in range(n):
        out[i] = 0
        inn[i] = 0
        if d[i] > 0:
            any_s = True
        if s[i] > 0:
            any_r = True
    if not any_s or not any_r:
        return 0
    while True:
        na = 0
        for i in range(n):
            if d[i] <= 0:
                continue
            left = d[i] - out[i]
            if left > 0:
                au[na] = 0; aw[na] = 1 + i; ac[na] = -vc[i] * (2 * left - 1)
                akind[na] = SRC; akey[na] = i; asign[na] = 1; na += 1
            if out[i] > 0:
                au[na] = 1 + i; aw[na] = 0; ac[na] = vc[i] * (2 * left + 1)
                akind[na] = SRC; akey[na] = i; asign[na] = -1; na += 1
        for i in range(n):
            if d[i] <= 0:
                continue
            for j in range(n):
                if s[j] <= 0:
                    continue
                x = delta[i * n + j]
                cap = d[i] if d[i] < s[j] else s[j]
                if x < cap:
                    au[na] = 1 + i; aw[na] = 1 + n + j; ac[na] = k[i * n + j] * (2 * x + 1)
                    akind[na] = MID; akey[na] = i * n + j; asign[na] = 1; na += 1
                if x > 0:
                    au[na] = 1 + n + j; aw[na] = 1 + i; ac[na] = -k[i * n + j] * (2 * x - 1)
                    akind[na] = MID; akey[na] = i * n + j; asign[na] = -1; na += 1
        for j in range(n):
            if s[j] <= 0:
                continue
            if not aggregate or inn[j] < s[j]:
                au[na] = 1 + n + j; aw[na] = sink; ac[na] = 0.0
                akind[na] = SNK; akey[na] = j; asign[na] = 1; na += 1
            if inn[j] > 0:
                au[na] = sink; aw[na] = 1 + n + j; ac[na] = 0.0
                akind[na] = SNK; akey[na] = j; asign[na] = -1; na += 1
        for i in range(nv):
            dist[i] = INFINITY
            pred[i] = -1
        dist[0] = 0.0
        for it in range(nv - 1):
            changed = False
            for idx in range(na):
                u = au[idx]
                w = aw[idx]
                if dist[u] != INFINITY and dist[u] + ac[idx] < dist[w]:
                    dist[w] = dist[u] + ac[idx]
                    pred[w] = idx
                    changed = True
            if not changed:
                break
        if not dist[sink] < -_EPS:
            return 0
        node = sink
        while node != 0:
            idx = pred[node]
            if akind[idx] == SRC:
                out[akey[idx]] += asign[idx]
            elif akind[idx] == MID:
                delta[akey[idx]] += asign[idx]
            else:
                inn[akey[idx]] += asign[idx]
            node = au[idx]


def solve_batch(diffs, vcoef, kmat, aggregate):
    cdef cnp.int64_t[:, ::1] dv = np.ascontiguousarray(diffs, dtype=np.int64)
    cdef double[::1] vv = np.ascontiguousarray(vcoef, dtype=np.float64)
    cdef double[::1] kv = np.ascontiguousarray(np.asarray(kmat, dtype=np.float64).ravel())
    cdef long nb = dv.shape[0]
    cdef long n = dv.shape[1]
    deltas = np.zeros((nb, n, n), dtype=np.int64)
    ct = np.zeros(nb)
    cv = np.zeros(nb)
    cdef cnp.int64_t[:, :, ::1] deltas_v = deltas
    cdef double[::1] ct_v = ct
    cdef double[::1] cv_v = cv
    cdef bint agg = bool(aggregate)
    cdef long max_arcs = 2 * (n + n * n + n)
    cdef long nv = 2 * n + 2
    cdef long* d = <long*> malloc(n * sizeof(long))
    cdef long* s = <long*> malloc(n * sizeof(long))
    cdef long* delta = <long*> malloc(n * n * sizeof(long))
    cdef long* out = <long*> malloc(n * sizeof(long))
    cdef long* inn = <long*> malloc(n * sizeof(long))
    cdef long* au = <long*> malloc(max_arcs * sizeof(long))
    cdef long* aw = <long*> malloc(max_arcs * sizeof(long))
    cdef double* ac = <double*> malloc(max_arcs * sizeof(double))
    cdef int* akind = <int*> malloc(max_arcs * sizeof(int))
    cdef long* akey = <long*> malloc(max_arcs * sizeof(long))
    cdef int* asign = <int*> malloc(max_arcs * sizeof(int))
    cdef double* dist = <double*> malloc(nv * sizeof(double))
    cdef long* pred = <long*> malloc(nv * sizeof(long))
    cdef long r, i, j, x, left, rowsum
    cdef double t, v
    try:
        with nogil:
            for r in range(nb):
                for i in range(n):
                    x = dv[r, i]
                    d[i] = x if x > 0 else 0
                    s[i] = -x if x < 0 else 0
                _ssp(n, d, s, &vv[0], &kv[0], agg, delta, out, inn,
                     au, aw, ac, akind, akey, asign, dist, pred)
                t = 0.0
                for i in range(n):
                    for j in range(n):
                        if i != j:
                            t = t + kv[i * n + j] * <double>(delta[i * n + j] * delta[i * n + j])
                v = 0.0
                for i in range(n):
                    rowsum = 0
                    for j in range(n):
                        rowsum += delta[i * n + j]
                        deltas_v[r, i, j] = delta[i * n + j]
                    left = d[i] - rowsum
                    if left > 0:
                        v = v + vv[i] * <double>(left * left)
                ct_v[r] = t
                cv_v[r] = v
    finally:
        free(d); free(s); free(delta); free(out); free(inn)
        free(au); free(aw); free(ac); free(akind); free(akey); free(asign)
        free(dist); free(pred)
    return deltas, ct, cv


cdef inline long _level_to_action(long level, long n_levels, long n_actions) nogil:
    if n_levels <= 1:
        return 0
    if level < 0:
        level = 0
    if level > n_levels - 1:
        level = n_levels - 1
    return <long> floor(<double>(level * (n_actions - 1)) / <double>(n_levels - 1) + 0.5)


def level_to_action(level, n_levels, n_actions):
    return _level_to_action(level, n_levels, n_actions)


def back_process(double[:, ::1] critic, fired, phi, explore_u, rand_levels,
                 double eps, double alpha, rewards, long n_levels):
    cdef cnp.int64_t[::1] fv = np.ascontiguousarray(fired, dtype=np.int64)
    cdef double[::1] pv = np.ascontiguousarray(phi, dtype=np.float64)
    cdef double[:, ::1] uv = np.ascontiguousarray(explore_u, dtype=np.float64)
    cdef cnp.int64_t[:, ::1] lv = np.ascontiguousarray(rand_levels, dtype=np.int64)
    cdef double[::1] rv = np.ascontiguousarray(rewards, dtype=np.float64)
    cdef long n_fired = fv.shape[0]
    cdef long n_iter = uv.shape[0]
    cdef long n_cols = critic.shape[1]
    cdef long n_actions = rv.shape[0]
    cdef long it, f, c, best, action, row, col
    cdef double scalar, bestv, r, z
    cdef long* w = <long*> malloc(max(n_fired, 1) * sizeof(long))
    try:
        with nogil:
            for it in range(n_iter):
                scalar = 0.0
                for f in range(n_fired):
                    if uv[it, f] < eps:
                        w[f] = lv[it, f]
                    else:
                        row = fv[f]
                        best = 0
                        bestv = critic[row, 0]
                        for c in range(1, n_cols):
                            if critic[row, c] > bestv:
                                bestv = critic[row, c]
                                best = c
                        w[f] = best
                    scalar = scalar + pv[f] * <double> w[f]
                action = _level_to_action(<long> floor(scalar + 0.5), n_levels, n_actions)
                r = rv[action]
                for f in range(n_fired):
                    row = fv[f]
                    col = w[f]
                    z = critic[row, col]
                    critic[row, col] = z + alpha * pv[f] * (r - z)
    finally:
        free(w)
