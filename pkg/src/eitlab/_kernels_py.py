"""Pure numpy implementation of the Maxwell-Bloch hot kernels.

Same signatures as the compiled ``_kernels`` module; selected when the
extension is unavailable or ``EITLAB_PURE_PYTHON`` is set.
"""

import numpy as np
from scipy.signal import lfilter


def _sweep(source, e_in, decay, wa, wb):
    # e[j+1] = decay*e[j] + wa*f[j] + wb*f[j+1], e[0] = e_in
    out = np.empty(source.shape[0], dtype=complex)
    out[0] = e_in
    u = wa * source[:-1] + wb * source[1:]
    out[1:], _ = lfilter([1.0], [1.0, -decay], u, zi=np.array([decay * e_in], dtype=complex))
    return out


def sweep_fields(s0, sp, sm, om_p, om_m, ein_p, ein_m, sqrt_d, gamma_e, decay, wa, wb, include_sw):
    """Forward sweep for E+ from xi=0 and backward sweep for E- from xi=1.

    Returns ``(e_plus, e_minus, p_plus, p_minus)``.
    """
    drive_p = om_p * s0
    drive_m = om_m * s0
    if include_sw:
        drive_p = drive_p + om_m * sp
        drive_m = drive_m + om_p * sm
    drive_p = drive_p / gamma_e
    drive_m = drive_m / gamma_e
    ep = _sweep(-sqrt_d * drive_p, ein_p, decay, wa, wb)
    em = _sweep(-sqrt_d * drive_m[::-1], ein_m, decay, wa, wb)[::-1]
    pp = 1j * (sqrt_d * ep + drive_p)
    pm = 1j * (sqrt_d * em + drive_m)
    return ep, em, pp, pm


def mb_rhs(s0, sp, sm, om_p, om_m, ein_p, ein_m, sqrt_d, gamma_e, gamma_s, gamma_sw,
           decay, wa, wb, include_sw):
    """Time derivatives of (S0, S+, S-) with the fields slaved to S.

    Returns ``(ds0, dsp, dsm, e_plus, e_minus)``.
    """
    ep, em, pp, pm = sweep_fields(s0, sp, sm, om_p, om_m, ein_p, ein_m, sqrt_d, gamma_e,
                                  decay, wa, wb, include_sw)
    ds0 = -gamma_s * s0 + 1j * (np.conj(om_p) * pp + np.conj(om_m) * pm)
    if include_sw:
        dsp = -gamma_sw * sp + 1j * np.conj(om_m) * pp
        dsm = -gamma_sw * sm + 1j * np.conj(om_p) * pm
    else:
        dsp = np.zeros_like(s0)
        dsm = np.zeros_like(s0)
    return ds0, dsp, dsm, ep, em
