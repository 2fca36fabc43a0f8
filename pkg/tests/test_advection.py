import math
import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from eitlab.advection import (
    AdvectionCoefficients,
    BoundaryProximityWarning,
    analytic_gaussian,
    coefficients_from_schedule,
    gaussian_profile,
    run_reduced,
    step_advection,
)
from eitlab.core import ControlSchedule, Grid, PhysicalParams, Segment

P = PhysicalParams()
XI = np.linspace(0, 1, 400)
DXI = XI[1]


def _evolve(s, coeffs, t, dt=0.01):
    for _ in range(int(round(t / dt))):
        s = step_advection(s, coeffs, dt, DXI)
    return s


class TestCoefficients:
    def test_balanced_controls(self):
        om = P.rabi_for(0.01)
        c = coefficients_from_schedule(ControlSchedule((Segment(0, 5, om / math.sqrt(2), om / math.sqrt(2)),)), P, 1)
        assert c.v == pytest.approx(0, abs=1e-15)
        assert c.diffusion == pytest.approx(P.gamma_e * 0.01 / P.od)

    def test_storage(self):
        c = coefficients_from_schedule(ControlSchedule(), P, 1.0)
        assert c.v == 0 and c.diffusion == 0 and c.gamma_s == P.gamma_s

    def test_backward_dominant(self):
        c = coefficients_from_schedule(ControlSchedule((Segment(0, 5, 1.0, 2.0),)), P, 1)
        tan2 = 5.0 / (P.od * P.gamma_e**2)
        assert c.v < 0
        assert c.v == pytest.approx(-0.6 * P.gamma_e * tan2)

    def test_negative_diffusion_rejected(self):
        with pytest.raises(ValueError):
            AdvectionCoefficients(0.1, -1e-3, 0.0)


class TestStep:
    def test_identity(self):
        s = np.random.default_rng(0).normal(size=50)
        assert np.array_equal(step_advection(s, AdvectionCoefficients(0, 0, 0), 0.1, 0.02), s)

    def test_pure_decay(self):
        s = np.random.default_rng(0).normal(size=50) + 0j
        out = step_advection(s, AdvectionCoefficients(0, 0, 0.3), 0.1, 0.02)
        assert np.allclose(out, s * math.exp(-0.03), rtol=1e-15)

    def test_bad_steps(self):
        with pytest.raises(ValueError):
            step_advection(np.zeros(5), AdvectionCoefficients(0, 0, 0), 0.0, 0.1)

    def test_gaussian_matches_analytic(self):
        c = AdvectionCoefficients(v=0.02, diffusion=P.gamma_e * 0.0025 / P.od, gamma_s=P.gamma_s)
        s = gaussian_profile(XI, 0.4, 0.05, 1.0)
        out = _evolve(s.astype(complex), c, 10.0)
        cen, sig, amp = analytic_gaussian(0.05, 0.4, 1.0, c, 10.0)
        ref = gaussian_profile(XI, cen, sig, amp)
        assert np.linalg.norm(np.abs(out) - ref) / np.linalg.norm(ref) < 0.01

    def test_fast_advection_matches_analytic(self):
        c = AdvectionCoefficients(v=P.gamma_e * 0.01, diffusion=P.gamma_e * 0.01 / P.od, gamma_s=0.0)
        s = gaussian_profile(XI, 0.25, 0.04, 1.0)
        out = _evolve(s, c, 1.2)
        ref = gaussian_profile(XI, *analytic_gaussian(0.04, 0.25, 1.0, c, 1.2))
        assert np.linalg.norm(out - ref) / np.linalg.norm(ref) < 0.01

    def test_variance_grows_at_2d(self):
        d = 4e-4
        c = AdvectionCoefficients(0.0, d, 0.0)
        s = gaussian_profile(XI, 0.5, 0.05, 1.0)
        out = _evolve(s, c, 1.0)

        def var(u):
            return np.sum(u * (XI - np.sum(u * XI) / u.sum()) ** 2) / u.sum()

        assert var(out) - var(s) == pytest.approx(2 * d * 1.0, rel=0.01)

    @given(st.floats(-0.4, 0.4), st.floats(0.0, 2e-3), st.floats(0.35, 0.65))
    def test_mass_conserved_when_contained(self, v, d, x0):
        c = AdvectionCoefficients(v, d, 0.0)
        s = gaussian_profile(XI, x0, 0.04, 1.0)
        out = _evolve(s, c, 0.2, dt=0.02)
        assert out.sum() == pytest.approx(s.sum(), rel=1e-6)

    @given(st.floats(0.0, 0.4), st.floats(0.0, 2e-3))
    def test_mirror_symmetry(self, v, d):
        s = gaussian_profile(XI, 0.3, 0.05, 1.0) + 0.5 * gaussian_profile(XI, 0.6, 0.03, 1.0)
        a = _evolve(s, AdvectionCoefficients(v, d, 0.0), 0.3, dt=0.05)
        b = _evolve(s[::-1], AdvectionCoefficients(-v, d, 0.0), 0.3, dt=0.05)
        assert np.allclose(a, b[::-1], atol=1e-12)

    @given(st.floats(-0.4, 0.4), st.floats(0.0, 2e-3))
    def test_no_new_extrema(self, v, d):
        s = np.where(np.abs(XI - 0.5) < 0.1, 1.0, 0.0)
        out = _evolve(s, AdvectionCoefficients(v, d, 0.0), 0.2, dt=0.02)
        assert out.min() >= -1e-12 and out.max() <= 1.0 + 1e-12

    def test_outflow(self):
        s = gaussian_profile(XI, 0.8, 0.03, 1.0)
        out = _evolve(s, AdvectionCoefficients(0.5, 0.0, 0.0), 1.0, dt=0.01)
        assert np.abs(out).max() < 1e-6


class TestAnalytic:
    def test_closed_form(self):
        c = AdvectionCoefficients(0.1, 1e-3, 0.2)
        cen, sig, amp = analytic_gaussian(0.05, 0.3, 2.0, c, 1.5)
        assert cen == pytest.approx(0.45)
        assert sig == pytest.approx(math.sqrt(0.0025 + 0.003))
        assert amp == pytest.approx(2.0 * math.exp(-0.3) * 0.05 / sig)

    def test_boundary_warning(self):
        with pytest.warns(BoundaryProximityWarning):
            analytic_gaussian(0.05, 0.9, 1.0, AdvectionCoefficients(0.1, 0.0, 0.0), 1.0)

    def test_no_warning_when_contained(self):
        with warnings.catch_warnings():
            warnings.simplefilter("error")
            analytic_gaussian(0.05, 0.5, 1.0, AdvectionCoefficients(0.0, 1e-4, 0.0), 1.0)


class TestRunReduced:
    def test_layout_and_detectors(self):
        om = P.rabi_for(0.01)
        sched = ControlSchedule((Segment(0, 5, om, 0.0),))
        g = Grid(100, 0.01, 1.0, 0.1)
        init = gaussian_profile(np.linspace(0, 1, 100), 0.5, 0.05, 1.0)
        r = run_reduced(P, sched, init, g)
        assert r.s_mag.shape == (11, 100)
        assert r.diagnostics["model"] == "advection"
        op, _ = sched.evaluate(0.0)
        assert r.out_forward[0] == pytest.approx(-op * init[-1] / (math.sqrt(P.od) * P.gamma_e))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            run_reduced(P, ControlSchedule(), np.zeros(10), Grid(100, 0.01, 1.0, 0.1))
