# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: the coordinate-descent sweep and the full online
test-then-train loop. Operation order matches ``_pykernels`` exactly."""

import numpy as np

from libc.math cimport NAN, fabs, sqrt
from libc.stdint cimport int64_t, uint64_t
from libc.stdlib cimport free, malloc, qsort
from libc.string cimport memmove

NAME = "cython"

cdef enum:
    INC_ALL = 0
    INC_MIS = 1
    INC_MARGIN = 2

cdef enum:
    REM_OLDEST = 0
    REM_FARTHEST = 1
    REM_NON_BORDER = 2

cdef enum:
    BAL_NONE = 0
    BAL_KEEP = 1
    BAL_BALANCED = 2


cdef inline uint64_t _next(uint64_t* state) noexcept nogil:
    state[0] += <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


cdef inline double _dot(const double* a, const double* b, Py_ssize_t d) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t k
    for k in range(d):
        s += a[k] * b[k]
    return s


cdef long long _dcd(const double* X, const double* y, const double* q, const double* cbox,
                    double* alpha, double* w, double* b, Py_ssize_t n, Py_ssize_t d,
                    long long max_epochs, double tol, uint64_t* rng,
                    Py_ssize_t* order, double* viol_out) noexcept nogil:
    cdef long long epochs = 0
    cdef Py_ssize_t i, j, k, t, tmp
    cdef double viol = 1.0 / 0.0
    cdef double g, pg, ai, ci, a_new, dd, yi
    cdef const double* xi
    while epochs < max_epochs:
        for i in range(n):
            order[i] = i
        i = n - 1
        while i > 0:
            j = <Py_ssize_t>(_next(rng) % <uint64_t>(i + 1))
            tmp = order[i]
            order[i] = order[j]
            order[j] = tmp
            i -= 1
        viol = 0.0
        for t in range(n):
            i = order[t]
            xi = X + i * d
            yi = y[i]
            ai = alpha[i]
            ci = cbox[i]
            g = yi * (_dot(w, xi, d) + b[0]) - 1.0
            if ai == 0.0:
                pg = g if g < 0.0 else 0.0
            elif ai >= ci:
                pg = g if g > 0.0 else 0.0
            else:
                pg = g
            if pg < 0.0:
                pg = -pg
            if pg > viol:
                viol = pg
            # coordinates already within tolerance are left alone, so a
            # converged warm start is a zero-update sweep
            if pg >= tol:
                a_new = ai - g / q[i]
                if a_new < 0.0:
                    a_new = 0.0
                elif a_new > ci:
                    a_new = ci
                dd = (a_new - ai) * yi
                if dd != 0.0:
                    for k in range(d):
                        w[k] += dd * xi[k]
                    b[0] += dd
                alpha[i] = a_new
        epochs += 1
        if viol < tol:
            break
    viol_out[0] = viol
    return epochs


def dcd_solve(double[:, ::1] X, double[::1] y, double[::1] qdiag, double[::1] cbox,
              double[::1] alpha, double[::1] w, double b, long long max_epochs, double tol,
              rng_state):
    """Same contract as ``_pykernels.dcd_solve``."""
    cdef Py_ssize_t n = y.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef uint64_t rng = <uint64_t>int(rng_state)
    cdef double viol = 0.0
    cdef long long epochs
    cdef double bb = b
    if n == 0:
        return b, 0, 0.0, int(rng)
    cdef Py_ssize_t* order = <Py_ssize_t*>malloc(n * sizeof(Py_ssize_t))
    if order == NULL:
        raise MemoryError()
    try:
        with nogil:
            epochs = _dcd(&X[0, 0] if d > 0 else NULL, &y[0], &qdiag[0], &cbox[0], &alpha[0],
                          &w[0] if d > 0 else NULL, &bb, n, d, max_epochs, tol, &rng, order, &viol)
    finally:
        free(order)
    return bb, epochs, viol, int(rng)


cdef int _cmp_double(const void* a, const void* b) noexcept nogil:
    cdef double x = (<const double*>a)[0]
    cdef double y = (<const double*>b)[0]
    return (x > y) - (x < y)


cdef double _median(double* buf, Py_ssize_t m) noexcept nogil:
    qsort(buf, m, sizeof(double), _cmp_double)
    if m % 2 == 1:
        return buf[m // 2]
    return (buf[m // 2 - 1] + buf[m // 2]) / 2.0


cdef struct Store:
    double* X
    double* y
    double* q
    double* cbox
    double* alpha
    int64_t* arr
    Py_ssize_t n
    Py_ssize_t cap
    Py_ssize_t d


cdef void _remove(Store* s, Py_ssize_t k) noexcept nogil:
    cdef Py_ssize_t tail = s.n - k - 1
    if tail > 0:
        memmove(s.X + k * s.d, s.X + (k + 1) * s.d, tail * s.d * sizeof(double))
        memmove(s.y + k, s.y + k + 1, tail * sizeof(double))
        memmove(s.q + k, s.q + k + 1, tail * sizeof(double))
        memmove(s.cbox + k, s.cbox + k + 1, tail * sizeof(double))
        memmove(s.alpha + k, s.alpha + k + 1, tail * sizeof(double))
        memmove(s.arr + k, s.arr + k + 1, tail * sizeof(int64_t))
    s.n -= 1


cdef Py_ssize_t _choose(Store* s, int exclude, int balance, double incoming,
                        const double* w, double b, double* scratch, double* scratch2,
                        long long* fallback) noexcept nogil:
    cdef Py_ssize_t i, k, best = -1, n_pos = 0, m
    cdef double target = 0.0, v, best_v = -1.0
    cdef int restrict = 0
    cdef double cent[2][64]
    cdef double* cp
    cdef double med[2]
    cdef Py_ssize_t cnt[2]
    cdef int c
    cdef double diff, acc
    if balance == BAL_KEEP:
        for i in range(s.n):
            if s.y[i] == incoming:
                restrict = 1
                break
        if restrict:
            target = incoming
        else:
            fallback[0] += 1
    elif balance == BAL_BALANCED:
        for i in range(s.n):
            if s.y[i] > 0.0:
                n_pos += 1
        if 2 * n_pos != s.n:
            restrict = 1
            target = 1.0 if 2 * n_pos > s.n else -1.0

    if exclude == REM_OLDEST:
        for i in range(s.n):
            if not restrict or s.y[i] == target:
                return i
        return 0

    if exclude == REM_FARTHEST:
        for i in range(s.n):
            if restrict and s.y[i] != target:
                continue
            v = fabs(_dot(w, s.X + i * s.d, s.d) + b)
            if v > best_v:
                best = i
                best_v = v
        return best

    # non-border: distance to the class's median-radius ring
    for c in range(2):
        cnt[c] = 0
        for k in range(s.d):
            cent[c][k] = 0.0
    for i in range(s.n):
        c = 1 if s.y[i] > 0.0 else 0
        cnt[c] += 1
        for k in range(s.d):
            cent[c][k] += s.X[i * s.d + k]
    for c in range(2):
        if cnt[c] > 0:
            for k in range(s.d):
                cent[c][k] = cent[c][k] / cnt[c]
    for i in range(s.n):
        c = 1 if s.y[i] > 0.0 else 0
        cp = &cent[c][0]
        acc = 0.0
        for k in range(s.d):
            diff = s.X[i * s.d + k] - cp[k]
            acc += diff * diff
        scratch[i] = sqrt(acc)
    for c in range(2):
        m = 0
        for i in range(s.n):
            if (s.y[i] > 0.0) == (c == 1):
                scratch2[m] = scratch[i]
                m += 1
        med[c] = _median(scratch2, m) if m > 0 else 0.0
    for i in range(s.n):
        if restrict and s.y[i] != target:
            continue
        c = 1 if s.y[i] > 0.0 else 0
        v = fabs(scratch[i] - med[c])
        if v > best_v:
            best = i
            best_v = v
    return best


cdef inline double _ba(long long tp, long long fn, long long tn, long long fp) noexcept nogil:
    if tp + fn == 0 or tn + fp == 0:
        return NAN
    return 0.5 * (<double>tp / <double>(tp + fn) + <double>tn / <double>(tn + fp))


def run_stream(state, X, y, arrival, threshold, stride):
    """Same contract as ``_pykernels.run_stream``; ``state`` is updated in place."""
    from .basket import FLAG_KEEP_RATIO_FALLBACK, FLAG_KSV_KEPT_ONE, BasketEntry
    from .model import Sample

    basket = state.basket
    config = state.config
    model = state.model
    cdef Py_ssize_t d = model.dim
    cdef Py_ssize_t cap = basket.capacity
    cdef Py_ssize_t n0 = len(basket)
    if d > 64:
        # the non-border scorer keeps centroids on the stack
        raise ValueError("compiled kernel supports at most 64 features")

    cdef double[:, ::1] Xt = np.ascontiguousarray(X, dtype=np.float64)
    cdef double[::1] yt = np.ascontiguousarray(y, dtype=np.float64)
    cdef int64_t[::1] at = np.ascontiguousarray(arrival, dtype=np.int64)
    cdef Py_ssize_t m = yt.shape[0]

    Xb_arr = np.zeros((max(cap, 1), max(d, 1)))
    yb_arr = np.zeros(max(cap, 1))
    ab_arr = np.zeros(max(cap, 1))
    arr_arr = np.zeros(max(cap, 1), dtype=np.int64)
    if n0:
        Xb_arr[:n0, :d] = basket.features()
        yb_arr[:n0] = basket.labels()
        ab_arr[:n0] = basket.alphas()
        arr_arr[:n0] = basket.arrival_indices()
    qb_arr = np.zeros(max(cap, 1))
    cb_arr = np.zeros(max(cap, 1))
    w_arr = np.array(model.w, dtype=np.float64)
    if d == 0:
        w_arr = np.zeros(1)

    cdef double[:, ::1] Xb = Xb_arr
    cdef double[::1] yb = yb_arr
    cdef double[::1] ab = ab_arr
    cdef int64_t[::1] arrb = arr_arr
    cdef double[::1] qb = qb_arr
    cdef double[::1] cb = cb_arr
    cdef double[::1] w = w_arr
    cdef double b = model.b
    cdef double cpos = model.box(1)
    cdef double cneg = model.box(-1)
    cdef Py_ssize_t i, t, k, j
    for i in range(n0):
        qb[i] = _dot(&Xb[i, 0], &Xb[i, 0], d) + 1.0
        cb[i] = cpos if yb[i] > 0.0 else cneg

    cdef Store s
    s.X = &Xb[0, 0]
    s.y = &yb[0]
    s.q = &qb[0]
    s.cbox = &cb[0]
    s.alpha = &ab[0]
    s.arr = &arrb[0]
    s.n = n0
    s.cap = cap
    s.d = d

    codes = config.kernel_codes()
    cdef int inc_rule = codes[0]
    cdef int rem_rule = codes[1]
    cdef int bal_rule = codes[2]
    cdef bint ksv = config.keep_only_sv
    cdef bint relabel = config.relabel
    cdef double thr = threshold
    cdef double tol = state.tolerance
    cdef long long epochs_cap = state.online_epochs
    cdef Py_ssize_t st = stride
    cdef uint64_t rng = <uint64_t>int(state.rng.state)

    cdef Py_ssize_t n_traj = m // st if st > 0 else 0
    traj_idx_arr = np.zeros(n_traj, dtype=np.int64)
    traj_ba_arr = np.zeros(n_traj)
    cdef int64_t[::1] traj_idx = traj_idx_arr
    cdef double[::1] traj_ba = traj_ba_arr

    cdef long long tp = 0, fn = 0, tn = 0, fp = 0
    cdef long long updates = 0, retrains = 0, fallback = 0, ksv_kept = 0
    cdef double f, margin, ytv, removed_alpha, a, dd, viol, best_a
    cdef bint in_margin, has_removed, retrained, any_changed
    cdef Py_ssize_t victim, wpos, keep_i, ti = 0
    cdef const double* x

    cdef Py_ssize_t buf_n = max(cap, 1)
    cdef Py_ssize_t* order = <Py_ssize_t*>malloc(buf_n * sizeof(Py_ssize_t))
    cdef double* scratch = <double*>malloc(buf_n * sizeof(double))
    cdef double* scratch2 = <double*>malloc(buf_n * sizeof(double))
    cdef double* newlab = <double*>malloc(buf_n * sizeof(double))
    if order == NULL or scratch == NULL or scratch2 == NULL or newlab == NULL:
        free(order); free(scratch); free(scratch2); free(newlab)
        raise MemoryError()

    try:
        with nogil:
            for t in range(m):
                x = &Xt[t, 0]
                ytv = yt[t]
                f = _dot(&w[0], x, d) + b
                if ytv > 0.0:
                    if f >= thr:
                        tp += 1
                    else:
                        fn += 1
                else:
                    if f >= thr:
                        fp += 1
                    else:
                        tn += 1
                if st > 0 and (t + 1) % st == 0:
                    traj_idx[ti] = at[t]
                    traj_ba[ti] = _ba(tp, fn, tn, fp)
                    ti += 1

                margin = ytv * f
                if inc_rule == INC_MIS and not margin < 0.0:
                    continue
                if inc_rule == INC_MARGIN and not margin < 1.0:
                    continue
                in_margin = margin < 1.0

                has_removed = False
                removed_alpha = 0.0
                if s.n >= cap:
                    victim = _choose(&s, rem_rule, bal_rule, ytv, &w[0], b, scratch, scratch2, &fallback)
                    a = s.alpha[victim]
                    if a != 0.0:
                        dd = a * s.y[victim]
                        for k in range(d):
                            w[k] -= dd * s.X[victim * d + k]
                        b -= dd
                    removed_alpha = a
                    has_removed = True
                    _remove(&s, victim)

                j = s.n
                for k in range(d):
                    s.X[j * d + k] = x[k]
                s.y[j] = ytv
                s.alpha[j] = 0.0
                s.q[j] = _dot(x, x, d) + 1.0
                s.cbox[j] = cpos if ytv > 0.0 else cneg
                s.arr[j] = at[t]
                s.n += 1

                retrained = False
                if in_margin or (has_removed and removed_alpha > 0.0):
                    _dcd(s.X, s.y, s.q, s.cbox, s.alpha, &w[0], &b, s.n, d,
                         epochs_cap, tol, &rng, order, &viol)
                    retrains += 1
                    retrained = True

                if ksv:
                    wpos = 0
                    for i in range(s.n):
                        if s.alpha[i] != 0.0:
                            wpos += 1
                    if wpos == 0:
                        keep_i = 0
                        best_a = s.alpha[0]
                        for i in range(1, s.n):
                            if s.alpha[i] > best_a:
                                best_a = s.alpha[i]
                                keep_i = i
                        for i in range(s.n - 1, -1, -1):
                            if i != keep_i:
                                _remove(&s, i)
                        ksv_kept += 1
                    elif wpos != s.n:
                        for i in range(s.n - 1, -1, -1):
                            if s.alpha[i] == 0.0:
                                _remove(&s, i)

                if relabel:
                    any_changed = False
                    for i in range(s.n):
                        newlab[i] = 1.0 if _dot(&w[0], s.X + i * d, d) + b >= 0.0 else -1.0
                        if newlab[i] != s.y[i]:
                            any_changed = True
                    if any_changed:
                        for i in range(s.n):
                            if newlab[i] != s.y[i]:
                                a = s.alpha[i]
                                if a != 0.0:
                                    dd = a * s.y[i]
                                    for k in range(d):
                                        w[k] -= dd * s.X[i * d + k]
                                    b -= dd
                                s.alpha[i] = 0.0
                                s.y[i] = newlab[i]
                                s.cbox[i] = cpos if newlab[i] > 0.0 else cneg
                        _dcd(s.X, s.y, s.q, s.cbox, s.alpha, &w[0], &b, s.n, d,
                             epochs_cap, tol, &rng, order, &viol)
                        retrains += 1
                        retrained = True

                if retrained:
                    updates += 1
    finally:
        free(order)
        free(scratch)
        free(scratch2)
        free(newlab)

    # write the final basket back as entries
    old = {e.sample.arrival_index: e.sample for e in basket.entries}
    pos = {int(at[t]): t for t in range(m)}
    entries = []
    for i in range(s.n):
        key = int(arrb[i])
        sample = old.get(key)
        if sample is None:
            t = pos[key]
            sample = Sample(np.asarray(Xt[t, :]).copy(), int(yt[t]), key)
        entries.append(BasketEntry(sample, alpha=float(ab[i]), current_label=int(yb[i])))
    basket.entries = entries
    model.w = np.array(w_arr[:d])
    model.b = b
    state.rng.state = int(rng)
    state.update_count += updates
    state.retrain_count += retrains
    if fallback:
        state.flags[FLAG_KEEP_RATIO_FALLBACK] += fallback
    if ksv_kept:
        state.flags[FLAG_KSV_KEPT_ONE] += ksv_kept
    trajectory = [(int(traj_idx[i]), float(traj_ba[i])) for i in range(n_traj)]
    return [int(tp), int(fn), int(tn), int(fp)], trajectory
