# Compiled twins of the pointwise kernels in _kernels_py.py.
#
# Component sums and products are fused into single passes over memory.
# Fractional powers go through np.power on whole arrays, which is several
# times faster than a scalar libm pow call per point.
import numpy as np
cimport numpy as cnp
from libc.math cimport NAN

cnp.import_array()


cdef void _sqmag(const double[:, :, :, ::1] u, double[:, :, ::1] o) noexcept nogil:
    cdef Py_ssize_t n1 = u.shape[1], n2 = u.shape[2], n3 = u.shape[3]
    cdef Py_ssize_t i, j, k
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                o[i, j, k] = (u[0, i, j, k] * u[0, i, j, k]
                              + u[1, i, j, k] * u[1, i, j, k]
                              + u[2, i, j, k] * u[2, i, j, k])


cdef void _scale(const double[:, :, :, ::1] u, const double[:, :, ::1] f,
                 double[:, :, :, ::1] o) noexcept nogil:
    cdef Py_ssize_t n1 = u.shape[1], n2 = u.shape[2], n3 = u.shape[3]
    cdef Py_ssize_t i, j, k
    cdef double w
    for i in range(n1):
        for j in range(n2):
            for k in range(n3):
                w = f[i, j, k]
                o[0, i, j, k] = w * u[0, i, j, k]
                o[1, i, j, k] = w * u[1, i, j, k]
                o[2, i, j, k] = w * u[2, i, j, k]


def squared_magnitude(const double[:, :, :, ::1] u):
    out = np.empty((u.shape[1], u.shape[2], u.shape[3]), dtype=np.float64)
    _sqmag(u, out)
    return out


def damping_force(const double[:, :, :, ::1] u, double a, double alpha):
    s = squared_magnitude(u)
    np.power(s, alpha, out=s)
    s *= a
    out = np.empty((3, u.shape[1], u.shape[2], u.shape[3]), dtype=np.float64)
    _scale(u, s, out)
    return out


def exact_damping(const double[:, :, :, ::1] u, double a, double alpha, double tau):
    s = squared_magnitude(u)
    np.power(s, alpha, out=s)
    s *= 2.0 * alpha * a * tau
    s += 1.0
    np.power(s, -1.0 / (2.0 * alpha), out=s)
    out = np.empty((3, u.shape[1], u.shape[2], u.shape[3]), dtype=np.float64)
    _scale(u, s, out)
    return out


def power_sum(const double[:, :, :, ::1] u, double p):
    s = squared_magnitude(u)
    np.power(s, 0.5 * p, out=s)
    return float(np.sum(s))


def weighted_square_sum(const double[:, :, ::1] m2, const double[:, :, :, ::1] f,
                        double alpha):
    cdef Py_ssize_t n1 = f.shape[1], n2 = f.shape[2], n3 = f.shape[3]
    cdef Py_ssize_t i, j, k
    cdef double total = 0.0
    w_arr = np.power(m2, alpha)
    cdef double[:, :, ::1] w = w_arr
    with nogil:
        for i in range(n1):
            for j in range(n2):
                for k in range(n3):
                    total += w[i, j, k] * (f[0, i, j, k] * f[0, i, j, k]
                                           + f[1, i, j, k] * f[1, i, j, k]
                                           + f[2, i, j, k] * f[2, i, j, k])
    return total


def monotonicity_scan(const double[:, ::1] U, const double[:, ::1] V, double alpha):
    cdef Py_ssize_t m = U.shape[0]
    cdef Py_ssize_t i
    cdef double w0, w1, w2, d, denom
    su_arr = np.empty(m, dtype=np.float64)
    sv_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] su = su_arr
    cdef double[::1] sv = sv_arr
    cdef double[::1] sm
    with nogil:
        for i in range(m):
            su[i] = U[i, 0] * U[i, 0] + U[i, 1] * U[i, 1] + U[i, 2] * U[i, 2]
            sv[i] = V[i, 0] * V[i, 0] + V[i, 1] * V[i, 1] + V[i, 2] * V[i, 2]
    sm_arr = np.power(np.sqrt(su_arr) + np.sqrt(sv_arr), 2.0 * alpha)
    sm = sm_arr
    fu_arr = np.power(su_arr, alpha)
    fv_arr = np.power(sv_arr, alpha)
    cdef double[::1] fu = fu_arr
    cdef double[::1] fv = fv_arr
    D_arr = np.empty(m, dtype=np.float64)
    R_arr = np.empty(m, dtype=np.float64)
    cdef double[::1] D = D_arr
    cdef double[::1] R = R_arr
    with nogil:
        for i in range(m):
            w0 = U[i, 0] - V[i, 0]
            w1 = U[i, 1] - V[i, 1]
            w2 = U[i, 2] - V[i, 2]
            d = ((fu[i] * U[i, 0] - fv[i] * V[i, 0]) * w0
                 + (fu[i] * U[i, 1] - fv[i] * V[i, 1]) * w1
                 + (fu[i] * U[i, 2] - fv[i] * V[i, 2]) * w2)
            denom = (w0 * w0 + w1 * w1 + w2 * w2) * sm[i]
            D[i] = d
            R[i] = d / denom if denom > 0.0 else NAN
    return D_arr, R_arr
