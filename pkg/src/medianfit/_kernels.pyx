# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels; same contract as ``_pykernels``.

``train_step`` fuses forward, backward and the optimizer update for one
minibatch so the training loop makes a single call per batch. Matrix
products go through BLAS ``dgemm``; everything else is a flat C loop.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, expm1, fabs, log1p, sqrt, tanh, pow
from libc.stdlib cimport malloc, free
from libc.string cimport memcpy
from scipy.linalg.cython_blas cimport dgemm

from ._pykernels import workspace_size  # noqa: F401

cnp.import_array()

BACKEND = "compiled"

DEF RELU = 0
DEF SIGMOID = 1
DEF SOFTMAX = 2
DEF SOFTPLUS = 3
DEF SOFTSIGN = 4
DEF TANH = 5
DEF SELU = 6
DEF ELU = 7

DEF SGD = 0
DEF ADAM = 1
DEF NADAM = 2
DEF RMSPROP = 3
DEF ADAGRAD = 4
DEF ADADELTA = 5
DEF ADAMAX = 6

cdef double SELU_ALPHA = 1.6732632423543772
cdef double SELU_SCALE = 1.0507009873554805


cdef inline void _gemm_rm(char* ta, char* tb, int m, int n, int k,
                          double* A, int lda, double* B, int ldb,
                          double beta, double* C, int ldc) noexcept nogil:
    # column-major dgemm call; callers pass the row-major problem transposed
    cdef double one = 1.0
    dgemm(ta, tb, &m, &n, &k, &one, A, &lda, B, &ldb, &beta, C, &ldc)


cdef inline double _sign(double x) noexcept nogil:
    if x > 0:
        return 1.0
    if x < 0:
        return -1.0
    return 0.0


cdef void _activate_rows(int kind, double* z, double* a, int rows, int cols) noexcept nogil:
    # branch-free bodies so the compiler can use vector libm calls
    cdef Py_ssize_t i, j, base
    cdef double v, e, mx, s
    cdef Py_ssize_t total = <Py_ssize_t>rows * cols
    if kind == SOFTMAX:
        for i in range(rows):
            base = i * cols
            mx = z[base]
            for j in range(1, cols):
                if z[base + j] > mx:
                    mx = z[base + j]
            s = 0.0
            for j in range(cols):
                a[base + j] = exp(z[base + j] - mx)
                s += a[base + j]
            for j in range(cols):
                a[base + j] = a[base + j] / s
    elif kind == RELU:
        for i in range(total):
            a[i] = z[i] if z[i] > 0 else 0.0
    elif kind == SIGMOID:
        for i in range(total):
            a[i] = 0.5 * (1.0 + tanh(0.5 * z[i]))
    elif kind == SOFTPLUS:
        for i in range(total):
            v = z[i]
            a[i] = (v if v > 0 else 0.0) + log1p(exp(-fabs(v)))
    elif kind == SOFTSIGN:
        for i in range(total):
            a[i] = z[i] / (1.0 + fabs(z[i]))
    elif kind == TANH:
        for i in range(total):
            a[i] = tanh(z[i])
    elif kind == SELU:
        for i in range(total):
            v = z[i]
            e = expm1(v if v < 0 else 0.0)
            a[i] = SELU_SCALE * (v if v > 0 else SELU_ALPHA * e)
    else:
        for i in range(total):
            v = z[i]
            e = expm1(v if v < 0 else 0.0)
            a[i] = v if v > 0 else e


cdef void _activate_back_rows(int kind, double* z, double* a, double* g,
                              int rows, int cols) noexcept nogil:
    # g holds dL/da on entry and dL/dz on exit
    cdef Py_ssize_t i, j, base
    cdef double d, s
    cdef Py_ssize_t total = <Py_ssize_t>rows * cols
    if kind == SOFTMAX:
        for i in range(rows):
            base = i * cols
            s = 0.0
            for j in range(cols):
                s += g[base + j] * a[base + j]
            for j in range(cols):
                g[base + j] = a[base + j] * (g[base + j] - s)
    elif kind == RELU:
        for i in range(total):
            g[i] = g[i] if z[i] > 0 else 0.0
    elif kind == SIGMOID:
        for i in range(total):
            g[i] = g[i] * a[i] * (1.0 - a[i])
    elif kind == SOFTPLUS:
        for i in range(total):
            g[i] = g[i] * (0.5 * (1.0 + tanh(0.5 * z[i])))
    elif kind == SOFTSIGN:
        for i in range(total):
            d = 1.0 + fabs(z[i])
            g[i] = g[i] / (d * d)
    elif kind == TANH:
        for i in range(total):
            g[i] = g[i] * (1.0 - a[i] * a[i])
    elif kind == SELU:
        for i in range(total):
            g[i] = g[i] * (SELU_SCALE if z[i] > 0 else a[i] + SELU_SCALE * SELU_ALPHA)
    else:
        for i in range(total):
            g[i] = g[i] * (1.0 if z[i] > 0 else a[i] + 1.0)


cdef void _fill_bias(double* z, const double* b, int rows, int cols) noexcept nogil:
    # seeds a beta=1 gemm, which then skips zeroing its output
    cdef Py_ssize_t i
    for i in range(rows):
        memcpy(z + i * cols, b, cols * sizeof(double))


cdef void _sum_rows(double* out, double* g, int rows, int cols) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double* row
    for j in range(cols):
        out[j] = 0.0
    for i in range(rows):
        row = g + i * cols
        for j in range(cols):
            out[j] += row[j]


cdef void _mul_mask(double* out, double* src, const cnp.uint8_t* keep, Py_ssize_t mstride,
                    double scale, int rows, int cols) noexcept nogil:
    cdef Py_ssize_t i, j
    cdef double* o
    cdef double* s
    cdef const cnp.uint8_t* krow
    for i in range(rows):
        o = out + i * cols
        s = src + i * cols
        krow = keep + i * mstride
        for j in range(cols):
            o[j] = s[j] * (scale * krow[j])


cdef void _mul_mask_inplace(double* g, const cnp.uint8_t* keep, Py_ssize_t mstride,
                            double scale, int rows, int cols) noexcept nogil:
    # separate from _mul_mask so the loop is not versioned on aliasing
    cdef Py_ssize_t i, j
    cdef double* row
    cdef const cnp.uint8_t* krow
    for i in range(rows):
        row = g + i * cols
        krow = keep + i * mstride
        for j in range(cols):
            row[j] *= scale * krow[j]


def train_step(double[::1] theta, sizes, const double[:, ::1] X,
               const double[::1] y, int act, keep, double scale, double l1, double l2,
               int opt, double[:, ::1] state, const double[::1] hyper, long t,
               work=None):
    """One minibatch update in place; returns the pre-update batch loss.

    ``keep`` is a uint8 dropout mask over all hidden units (or None); kept
    units are multiplied by ``scale``.

    ``work`` is optional scratch of at least ``workspace_size(sizes, rows)``
    doubles, reused across calls to avoid per-step allocation.
    """
    cdef int L = len(sizes) - 1
    cdef int B = X.shape[0]
    cdef Py_ssize_t n = theta.shape[0]
    cdef int l, k, m
    cdef Py_ssize_t i, j, off, total_act, col
    cdef double loss = 0.0
    cdef double r, w
    cdef const cnp.uint8_t[:, ::1] mk
    cdef bint has_mask = keep is not None
    cdef Py_ssize_t* woff = <Py_ssize_t*>malloc(L * sizeof(Py_ssize_t))
    cdef Py_ssize_t* aoff = <Py_ssize_t*>malloc((L + 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* moff = <Py_ssize_t*>malloc((L + 1) * sizeof(Py_ssize_t))
    cdef int* sz = <int*>malloc((L + 1) * sizeof(int))
    cdef double* zbuf = NULL
    cdef double* hbuf = NULL
    cdef double* abuf = NULL
    cdef double* gbuf = NULL
    cdef double* grad = NULL
    cdef double* dz
    cdef double* dz2
    cdef double* p = &theta[0]
    cdef const double* xp = &X[0, 0]
    cdef const cnp.uint8_t* mp = NULL
    cdef Py_ssize_t mstride = 0
    cdef double[::1] wk
    cdef bint own = work is None

    if state.shape[1] != n:
        raise ValueError("optimizer state does not match parameter count")
    if hyper.shape[0] < 5:
        raise ValueError("hyper must hold lr, beta1, beta2, eps and rho")
    for l in range(L + 1):
        sz[l] = sizes[l]
    off = 0
    for l in range(L):
        woff[l] = off
        off += <Py_ssize_t>sz[l] * sz[l + 1] + sz[l + 1]
    if off != n:
        raise ValueError("layer sizes do not match parameter count")
    # aoff[l]: offset of layer-l activations (l >= 1); moff[l]: mask column
    total_act = 0
    col = 0
    for l in range(1, L + 1):
        aoff[l] = total_act
        total_act += <Py_ssize_t>B * sz[l]
        moff[l] = col
        col += sz[l]
    if has_mask:
        mk = keep
        if mk.shape[0] != B or mk.shape[1] < col - sz[L]:
            raise ValueError("dropout mask has the wrong shape")
        mp = &mk[0, 0]
        mstride = mk.shape[1]

    if own:
        zbuf = <double*>malloc((4 * total_act + n) * sizeof(double))
    else:
        wk = work
        if wk.shape[0] < 4 * total_act + n:
            raise ValueError("workspace is too small")
        zbuf = &wk[0]
    hbuf = zbuf + total_act
    gbuf = hbuf + total_act
    abuf = gbuf + total_act if has_mask else hbuf
    grad = gbuf + 2 * total_act
    try:
        with nogil:
            for l in range(L):
                k = sz[l]
                m = sz[l + 1]
                _fill_bias(zbuf + aoff[l + 1], p + woff[l] + <Py_ssize_t>k * m, B, m)
                _gemm_rm("N", "N", m, B, k, p + woff[l], m,
                         <double*>xp if l == 0 else abuf + aoff[l], k, 1.0, zbuf + aoff[l + 1], m)
                if l < L - 1:
                    _activate_rows(act, zbuf + aoff[l + 1], hbuf + aoff[l + 1], B, m)
                    if has_mask:
                        _mul_mask(abuf + aoff[l + 1], hbuf + aoff[l + 1], mp + moff[l + 1],
                                  mstride, scale, B, m)

            m = sz[L]
            dz = gbuf + aoff[L]
            for i in range(B):
                for j in range(m):
                    r = zbuf[aoff[L] + i * m + j] - y[i * m + j]
                    loss += fabs(r)
                    dz[i * m + j] = _sign(r) / (<double>B * m)
            loss /= (<double>B * m)

            for l in range(L - 1, -1, -1):
                k = sz[l]
                m = sz[l + 1]
                dz = gbuf + aoff[l + 1]
                _gemm_rm("N", "T", m, k, B, dz, m, <double*>xp if l == 0 else abuf + aoff[l], k,
                         0.0, grad + woff[l], m)
                _sum_rows(grad + woff[l] + <Py_ssize_t>k * m, dz, B, m)
                if l1 != 0.0:
                    for i in range(<Py_ssize_t>k * m):
                        w = p[woff[l] + i]
                        loss += l1 * fabs(w)
                        grad[woff[l] + i] += l1 * _sign(w)
                if l2 != 0.0:
                    for i in range(<Py_ssize_t>k * m):
                        w = p[woff[l] + i]
                        loss += l2 * (w * w)
                        grad[woff[l] + i] += (2.0 * l2) * w
                if l > 0:
                    dz2 = gbuf + aoff[l]
                    _gemm_rm("T", "N", k, B, m, p + woff[l], m, dz, m, 0.0, dz2, k)
                    if has_mask:
                        _mul_mask_inplace(dz2, mp + moff[l], mstride, scale, B, k)
                    _activate_back_rows(act, zbuf + aoff[l], hbuf + aoff[l], dz2, B, k)

            _update(opt, p, grad, &state[0, 0], n, &hyper[0], t)
    finally:
        if own:
            free(zbuf)
        free(sz)
        free(woff)
        free(aoff)
        free(moff)
    return loss


def predict(const double[::1] theta, sizes, const double[:, ::1] X, int act):
    """Inference-mode network output, shape (rows, outputs)."""
    cdef int L = len(sizes) - 1
    cdef int B = X.shape[0]
    cdef int l, k, m, widest = 0
    cdef Py_ssize_t off = 0
    cdef Py_ssize_t* woff = <Py_ssize_t*>malloc(L * sizeof(Py_ssize_t))
    cdef int* sz = <int*>malloc((L + 1) * sizeof(int))
    cdef double* za = NULL
    cdef double* zb = NULL
    cdef const double* p = &theta[0]
    cdef const double* xp = &X[0, 0] if B > 0 else NULL
    try:
        for l in range(L + 1):
            sz[l] = sizes[l]
            if l > 0 and sz[l] > widest:
                widest = sz[l]
        for l in range(L):
            woff[l] = off
            off += <Py_ssize_t>sz[l] * sz[l + 1] + sz[l + 1]
        if off != theta.shape[0]:
            raise ValueError("layer sizes do not match parameter count")
        if X.shape[1] != sz[0]:
            raise ValueError("input width does not match the network")
        out = np.empty((B, sz[L]))
        if B == 0:
            return out
        za = <double*>malloc(<Py_ssize_t>B * widest * sizeof(double))
        zb = <double*>malloc(<Py_ssize_t>B * widest * sizeof(double))
        with nogil:
            # pre-activations go to zb and activations to za, the next layer's input
            for l in range(L):
                k = sz[l]
                m = sz[l + 1]
                _fill_bias(zb, p + woff[l] + <Py_ssize_t>k * m, B, m)
                _gemm_rm("N", "N", m, B, k, <double*>p + woff[l], m,
                         <double*>xp if l == 0 else za, k, 1.0, zb, m)
                if l < L - 1:
                    _activate_rows(act, zb, za, B, m)
        memcpy(<void*>cnp.PyArray_DATA(out), zb, <Py_ssize_t>B * sz[L] * sizeof(double))
        return out
    finally:
        free(za)
        free(zb)
        free(sz)
        free(woff)


cdef void _update(int opt, double* p, double* g, double* st, Py_ssize_t stride,
                  const double* hyper, long t) noexcept nogil:
    cdef double lr = hyper[0]
    cdef double b1 = hyper[1]
    cdef double b2 = hyper[2]
    cdef double eps = hyper[3]
    cdef double rho = hyper[4]
    cdef double* s0 = st
    cdef double* s1 = st + stride
    cdef Py_ssize_t i
    cdef double gi, mhat, vhat, dx, u, c1, c2
    cdef Py_ssize_t n = stride
    if opt == SGD:
        for i in range(n):
            p[i] -= lr * g[i]
    elif opt == ADAM or opt == NADAM:
        c1 = 1.0 - pow(b1, <double>t)
        c2 = 1.0 - pow(b2, <double>t)
        for i in range(n):
            gi = g[i]
            s0[i] = s0[i] * b1 + (1.0 - b1) * gi
            s1[i] = s1[i] * b2 + (1.0 - b2) * (gi * gi)
            mhat = s0[i] / c1
            vhat = s1[i] / c2
            if opt == NADAM:
                mhat = b1 * mhat + (1.0 - b1) * gi / c1
            p[i] -= lr * mhat / (sqrt(vhat) + eps)
    elif opt == RMSPROP:
        for i in range(n):
            gi = g[i]
            s0[i] = s0[i] * rho + (1.0 - rho) * (gi * gi)
            p[i] -= lr * gi / (sqrt(s0[i]) + eps)
    elif opt == ADAGRAD:
        for i in range(n):
            gi = g[i]
            s0[i] += gi * gi
            p[i] -= lr * gi / sqrt(s0[i] + eps)
    elif opt == ADADELTA:
        for i in range(n):
            gi = g[i]
            s0[i] = s0[i] * rho + (1.0 - rho) * (gi * gi)
            dx = -sqrt(s1[i] + eps) / sqrt(s0[i] + eps) * gi
            s1[i] = s1[i] * rho + (1.0 - rho) * (dx * dx)
            p[i] += lr * dx
    else:
        c1 = lr / (1.0 - pow(b1, <double>t))
        for i in range(n):
            gi = g[i]
            s0[i] = s0[i] * b1 + (1.0 - b1) * gi
            u = b2 * s1[i]
            if fabs(gi) > u:
                u = fabs(gi)
            s1[i] = u
            p[i] -= c1 * s0[i] / (u + eps)


def nondominated_mask(F):
    cdef double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64).reshape(len(F), -1)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t m = f.shape[1]
    out = np.ones(n, dtype=bool)
    cdef cnp.uint8_t[::1] keep = out.view(np.uint8)
    cdef Py_ssize_t i, j, q
    cdef bint le, lt
    with nogil:
        for j in range(n):
            for i in range(n):
                if i == j:
                    continue
                le = True
                lt = False
                for q in range(m):
                    if f[i, q] > f[j, q]:
                        le = False
                        break
                    if f[i, q] < f[j, q]:
                        lt = True
                if le and lt:
                    keep[j] = 0
                    break
    return out


def eps_indicator(F):
    cdef double[:, ::1] f = np.ascontiguousarray(F, dtype=np.float64).reshape(len(F), -1)
    cdef Py_ssize_t n = f.shape[0]
    cdef Py_ssize_t m = f.shape[1]
    out = np.empty((n, n), dtype=np.float64)
    cdef double[:, ::1] o = out
    cdef Py_ssize_t i, j, q
    cdef double best, d
    with nogil:
        for i in range(n):
            for j in range(n):
                best = f[i, 0] - f[j, 0]
                for q in range(1, m):
                    d = f[i, q] - f[j, q]
                    if d > best:
                        best = d
                o[i, j] = best
    return out


def ibea_truncate(F, double kappa, Py_ssize_t n_survivors):
    cdef Py_ssize_t n = len(F)
    if n_survivors >= n:
        return np.arange(n)
    ind_arr = eps_indicator(F)
    cdef double[:, ::1] ind = ind_arr
    cdef double c = np.abs(ind_arr).max()
    if c == 0.0:
        c = 1.0
    E_arr = np.exp(-ind_arr / (c * kappa))
    np.fill_diagonal(E_arr, 0.0)
    cdef double[:, ::1] E = E_arr
    fit_arr = -E_arr.sum(axis=0)
    cdef double[::1] fit = fit_arr
    alive_arr = np.ones(n, dtype=bool)
    cdef cnp.uint8_t[::1] alive = alive_arr.view(np.uint8)
    cdef Py_ssize_t r, i, worst
    cdef double best
    with nogil:
        for r in range(n - n_survivors):
            worst = -1
            for i in range(n):
                if alive[i] and (worst < 0 or fit[i] < best):
                    worst = i
                    best = fit[i]
            alive[worst] = 0
            for i in range(n):
                fit[i] += E[worst, i]
    return np.flatnonzero(alive_arr)
