# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops. Mirrors ``_pykernels`` exactly in semantics."""
from libc.math cimport exp, log, isfinite, INFINITY
from libc.stdlib cimport malloc, free

ctypedef fused floating:
    float
    double


def gmm_posterior_mean(const double[:, ::1] x, double sqrt_ab,
                       const double[:, ::1] means, const double[::1] stds,
                       const double[::1] log_weights, double[:, ::1] out):
    cdef Py_ssize_t n_rows = x.shape[0], dim = x.shape[1], n_comp = means.shape[0]
    cdef Py_ssize_t n, k, d
    cdef double ab = sqrt_ab * sqrt_ab
    cdef double diff, d2, top, total, acc, r
    cdef double *var = <double *> malloc(n_comp * sizeof(double))
    cdef double *gain = <double *> malloc(n_comp * sizeof(double))
    cdef double *logit = <double *> malloc(n_comp * sizeof(double))
    cdef double *logdet = <double *> malloc(n_comp * sizeof(double))
    if var == NULL or gain == NULL or logit == NULL or logdet == NULL:
        free(var); free(gain); free(logit); free(logdet)
        raise MemoryError()
    try:
        for k in range(n_comp):
            var[k] = ab * stds[k] * stds[k] + (1.0 - ab)
            gain[k] = sqrt_ab * stds[k] * stds[k] / var[k]
            logdet[k] = 0.5 * dim * log(var[k])
        with nogil:
            for n in range(n_rows):
                top = -INFINITY
                for k in range(n_comp):
                    d2 = 0.0
                    for d in range(dim):
                        diff = x[n, d] - sqrt_ab * means[k, d]
                        d2 = d2 + diff * diff
                    logit[k] = log_weights[k] - 0.5 * d2 / var[k] - logdet[k]
                    if logit[k] > top:
                        top = logit[k]
                total = 0.0
                for k in range(n_comp):
                    logit[k] = exp(logit[k] - top)
                    total = total + logit[k]
                for d in range(dim):
                    acc = 0.0
                    for k in range(n_comp):
                        r = logit[k] / total
                        acc = acc + r * (means[k, d] + gain[k] * (x[n, d] - sqrt_ab * means[k, d]))
                    out[n, d] = acc
    finally:
        free(var); free(gain); free(logit); free(logdet)


def ddpm_update(const floating[::1] x_t, const floating[::1] eps_hat,
                const floating[::1] z, double inv_sqrt_alpha, double eps_coef,
                double sigma, floating[::1] out):
    """out = inv_sqrt_alpha * (x_t - eps_coef * eps_hat) + sigma * z.

    Returns False if any output element is non-finite.
    """
    cdef Py_ssize_t i, n = x_t.shape[0]
    cdef double v
    cdef bint ok = True
    with nogil:
        for i in range(n):
            v = inv_sqrt_alpha * (x_t[i] - eps_coef * eps_hat[i]) + sigma * z[i]
            out[i] = <floating> v
            if not isfinite(v):
                ok = False
    return ok
