# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled Maxwell-Bloch kernels; mirrors ``_kernels_py``."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef double complex cplx


cdef inline cplx _conj(cplx z) nogil:
    return z.real - 1j * z.imag


def sweep_fields(cplx[::1] s0, cplx[::1] sp, cplx[::1] sm, cplx om_p, cplx om_m,
                 cplx ein_p, cplx ein_m, double sqrt_d, double gamma_e,
                 double decay, double wa, double wb, bint include_sw):
    cdef Py_ssize_t n = s0.shape[0]
    ep_a = np.empty(n, dtype=np.complex128)
    em_a = np.empty(n, dtype=np.complex128)
    pp_a = np.empty(n, dtype=np.complex128)
    pm_a = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] ep = ep_a, em = em_a, pp = pp_a, pm = pm_a
    _sweep_into(s0, sp, sm, om_p, om_m, ein_p, ein_m, sqrt_d, gamma_e, decay, wa, wb,
                include_sw, ep, em, pp, pm)
    return ep_a, em_a, pp_a, pm_a


cdef void _sweep_into(cplx[::1] s0, cplx[::1] sp, cplx[::1] sm, cplx om_p, cplx om_m,
                      cplx ein_p, cplx ein_m, double sqrt_d, double gamma_e,
                      double decay, double wa, double wb, bint include_sw,
                      cplx[::1] ep, cplx[::1] em, cplx[::1] pp, cplx[::1] pm) noexcept nogil:
    cdef Py_ssize_t n = s0.shape[0]
    cdef Py_ssize_t j
    cdef cplx dp_prev, dp_cur, dm_prev, dm_cur
    cdef double inv_g = 1.0 / gamma_e
    # drive terms (Omega S)/Gamma stored in pp/pm, reused for P below
    for j in range(n):
        dp_cur = om_p * s0[j]
        dm_cur = om_m * s0[j]
        if include_sw:
            dp_cur = dp_cur + om_m * sp[j]
            dm_cur = dm_cur + om_p * sm[j]
        pp[j] = dp_cur * inv_g
        pm[j] = dm_cur * inv_g
    ep[0] = ein_p
    for j in range(n - 1):
        ep[j + 1] = decay * ep[j] - sqrt_d * (wa * pp[j] + wb * pp[j + 1])
    em[n - 1] = ein_m
    for j in range(n - 1, 0, -1):
        em[j - 1] = decay * em[j] - sqrt_d * (wa * pm[j] + wb * pm[j - 1])
    for j in range(n):
        pp[j] = 1j * (sqrt_d * ep[j] + pp[j])
        pm[j] = 1j * (sqrt_d * em[j] + pm[j])


def mb_rhs(cplx[::1] s0, cplx[::1] sp, cplx[::1] sm, cplx om_p, cplx om_m,
           cplx ein_p, cplx ein_m, double sqrt_d, double gamma_e, double gamma_s,
           double gamma_sw, double decay, double wa, double wb, bint include_sw):
    cdef Py_ssize_t n = s0.shape[0]
    cdef Py_ssize_t j
    ep_a = np.empty(n, dtype=np.complex128)
    em_a = np.empty(n, dtype=np.complex128)
    ds0_a = np.empty(n, dtype=np.complex128)
    dsp_a = np.zeros(n, dtype=np.complex128)
    dsm_a = np.zeros(n, dtype=np.complex128)
    cdef cplx[::1] ep = ep_a, em = em_a, ds0 = ds0_a, dsp = dsp_a, dsm = dsm_a
    cdef cplx[::1] pp = np.empty(n, dtype=np.complex128)
    cdef cplx[::1] pm = np.empty(n, dtype=np.complex128)
    cdef cplx cop = _conj(om_p), com = _conj(om_m)
    with nogil:
        _sweep_into(s0, sp, sm, om_p, om_m, ein_p, ein_m, sqrt_d, gamma_e, decay, wa, wb,
                    include_sw, ep, em, pp, pm)
        for j in range(n):
            ds0[j] = -gamma_s * s0[j] + 1j * (cop * pp[j] + com * pm[j])
        if include_sw:
            for j in range(n):
                dsp[j] = -gamma_sw * sp[j] + 1j * com * pp[j]
                dsm[j] = -gamma_sw * sm[j] + 1j * cop * pm[j]
    return ds0_a, dsp_a, dsm_a, ep_a, em_a
