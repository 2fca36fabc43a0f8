import math
import warnings
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import trapezoid

import oracles
from eitlab import kernels
from eitlab.core import ControlSchedule, FieldState, Grid, PhysicalParams, ProbePulse, Segment, TWO_PI
from eitlab.mb_solver import (
    SolverInstability,
    SolverOptions,
    StabilityWarning,
    analytic_velocity,
    compute_excited_coherence,
    run,
    solve_spatial_fields,
    stability_ok,
    step_spin,
)

P = PhysicalParams()


def _cplx(rng, n):
    return rng.normal(size=n) + 1j * rng.normal(size=n)


class TestExcitedCoherence:
    def test_vacuum(self):
        z = np.zeros(8, complex)
        pp, pm = compute_excited_coherence(z, z, z, z, z, 3.0, 2.0, P)
        assert not pp.any() and not pm.any()

    def test_bare_absorber(self):
        z = np.zeros(4, complex)
        a = np.full(4, 0.7 - 0.2j)
        pp, pm = compute_excited_coherence(a, z, z, z, z, 0.0, 0.0, P)
        assert np.allclose(pp, 1j * math.sqrt(P.od) * a)
        assert not pm.any()

    @given(st.integers(0, 1000))
    def test_pointwise_oracle(self, seed):
        rng = np.random.default_rng(seed)
        arrs = [_cplx(rng, 6) for _ in range(5)]
        op, om = complex(*rng.normal(size=2)) * 30, complex(*rng.normal(size=2)) * 30
        pp, pm = compute_excited_coherence(*arrs, op, om, P)
        for j in range(6):
            ref = oracles.excited_coherence_point(*(a[j] for a in arrs), op, om, P.od, P.gamma_e)
            assert pp[j] == pytest.approx(ref[0]) and pm[j] == pytest.approx(ref[1])

    def test_standing_wave_switch(self):
        rng = np.random.default_rng(0)
        e, s0, sp, sm = (_cplx(rng, 5) for _ in range(4))
        z = np.zeros(5)
        a = compute_excited_coherence(e, e, s0, sp, sm, 2.0, 3.0, P, include_standing_wave=False)
        b = compute_excited_coherence(e, e, s0, z, z, 2.0, 3.0, P)
        assert np.allclose(a, b)


class TestSpatialFields:
    @pytest.mark.parametrize("n", [17, 101, 400])
    def test_beer_law(self, n):
        p = PhysicalParams(od=5.0)
        z = np.zeros(n, complex)
        ep, em = solve_spatial_fields(z, z, z, 0, 0, 1.0, 0.0, p)
        assert np.allclose(ep, np.exp(-5.0 * np.linspace(0, 1, n)), rtol=1e-12, atol=0)
        assert not em.any()

    def test_backward_beer_law(self):
        p = PhysicalParams(od=5.0)
        z = np.zeros(50, complex)
        _, em = solve_spatial_fields(z, z, z, 0, 0, 0.0, 2.0, p)
        assert em[0] == pytest.approx(2 * math.exp(-5.0), rel=1e-12)

    def test_zero_in_zero_out(self):
        z = np.zeros(30, complex)
        ep, em = solve_spatial_fields(z, z, z, 5.0, 3.0, 0, 0, P)
        assert not ep.any() and not em.any()

    def test_dark_state_input_is_flat(self):
        n, omega, e_in = 200, 25.0 + 5j, 0.3 - 0.1j
        s0 = np.full(n, -math.sqrt(P.od) * P.gamma_e * e_in / omega)
        z = np.zeros(n, complex)
        ep, _ = solve_spatial_fields(s0, z, z, omega, 0.0, e_in, 0.0, P)
        assert np.allclose(ep, e_in, rtol=1e-12)

    def test_backend_choice_consistent(self):
        rng = np.random.default_rng(2)
        s = [_cplx(rng, 64) for _ in range(3)]
        a = solve_spatial_fields(*s, 3.0, 1.0, 0.5, 0.2, P, backend="python")
        b = solve_spatial_fields(*s, 3.0, 1.0, 0.5, 0.2, P)
        assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


class TestStep:
    def test_vacuum_stays_vacuum(self):
        sched = ControlSchedule((Segment(0, 10, 20.0, 10.0),))
        st_ = step_spin(FieldState.zeros(40), 1.0, 0.01, P, sched)
        assert not st_.s0.any() and not st_.e_plus.any()

    def test_dark_controls_pure_decay(self):
        rng = np.random.default_rng(1)
        s = [_cplx(rng, 32) for _ in range(3)]
        z = np.zeros(32, complex)
        state = FieldState(z, z, z, z, *s)
        out = step_spin(state, 0.0, 0.5, P, ControlSchedule())
        assert np.allclose(out.s0, s[0] * math.exp(-P.gamma_s * 0.5), rtol=1e-14)
        assert np.allclose(out.s_plus, s[1] * math.exp(-P.gamma_sw * 0.5), rtol=1e-14)

    def test_effective_decay_mode_rate(self):
        rng = np.random.default_rng(1)
        s = [_cplx(rng, 32) for _ in range(3)]
        z = np.zeros(32, complex)
        sched = ControlSchedule(detuning=TWO_PI * 4)
        out = step_spin(FieldState(z, z, z, z, *s), 0.0, 0.01, P, sched,
                        options=SolverOptions(bichromatic_mode="effective_decay"))
        rate = P.gamma_sw + TWO_PI * 8
        assert np.allclose(out.s_minus, s[2] * math.exp(-rate * 0.01), rtol=1e-13)

    def test_standing_wave_off_keeps_side_bands(self):
        rng = np.random.default_rng(4)
        s = [_cplx(rng, 32) for _ in range(3)]
        z = np.zeros(32, complex)
        sched = ControlSchedule((Segment(0, 10, 20.0, 10.0),))
        out = step_spin(FieldState(z, z, z, z, *s), 0.0, 0.01, P, sched,
                        options=SolverOptions(include_standing_wave=False))
        assert np.array_equal(out.s_plus, s[1])

    def test_options_validation(self):
        with pytest.raises(ValueError):
            SolverOptions(picard_iterations=0)
        with pytest.raises(ValueError):
            SolverOptions(bichromatic_mode="both")
        with pytest.raises(ValueError):
            SolverOptions(spin_integrator="euler")


def _mol_setup():
    p = PhysicalParams(od=20.0, gamma_sw=2.0)
    om = p.rabi_for(0.05)
    sched = ControlSchedule((Segment(0, 3, om, 0.5 * om),))
    probe = ProbePulse(1.0, 0.5, 0.3)
    return p, sched, probe


@pytest.fixture(scope="module")
def mol_reference():
    p, sched, probe = _mol_setup()
    return oracles.mol_reference(21, 1.0, p.od, p.gamma_e, p.gamma_s, p.gamma_sw,
                                 lambda t: sched.evaluate(t), lambda t: complex(probe.envelope(t)))


class TestTimeIntegration:
    def _final(self, dt, integrator="rk4"):
        p, sched, probe = _mol_setup()
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            r = run(p, sched, probe, Grid(21, dt, 1.0, 0.1), SolverOptions(spin_integrator=integrator))
        return r.diagnostics["final_state"]

    def test_rk4_matches_reference(self, mol_reference):
        fs = self._final(0.005)
        scale = np.abs(mol_reference[0]).max()
        assert np.abs(fs.s0 - mol_reference[0]).max() < 1e-6 * scale
        assert np.abs(fs.s_plus - mol_reference[1]).max() < 1e-6 * scale

    def test_rk4_fourth_order(self, mol_reference):
        e1 = np.abs(self._final(0.01).s0 - mol_reference[0]).max()
        e2 = np.abs(self._final(0.005).s0 - mol_reference[0]).max()
        assert math.log2(e1 / e2) > 3.5

    def test_semi_implicit_second_order(self, mol_reference):
        e1 = np.abs(self._final(0.01, "semi_implicit").s0 - mol_reference[0]).max()
        e2 = np.abs(self._final(0.005, "semi_implicit").s0 - mol_reference[0]).max()
        assert 1.7 < math.log2(e1 / e2) < 2.5


class TestRun:
    def test_zero_probe_zero_record(self):
        sched = ControlSchedule((Segment(0, 2, 20.0, 0.0),))
        r = run(P, sched, ProbePulse(0.0, 0.5, 0.2), Grid(32, 0.01, 1.0, 0.1))
        assert r.normalization == 0 and not r.s_mag.any()
        assert r.diagnostics["zero_record"]

    def test_record_layout(self):
        sched = ControlSchedule((Segment(0, 2, 20.0, 0.0),))
        r = run(P, sched, ProbePulse(1.0, 0.5, 0.2), Grid(32, 0.01, 1.0, 0.1))
        assert r.s_mag.shape == (11, 32)
        assert np.allclose(r.times, np.arange(11) * 0.1)
        assert len(r.out_forward) == len(r.detector_times) == 101
        assert r.s_mag.max() == pytest.approx(1.0)
        assert np.allclose(r.raw, np.abs(r.s0))

    def test_instability_raises(self):
        p = PhysicalParams()
        om = p.rabi_for(1.0)
        sched = ControlSchedule((Segment(0, 30, om, 0.0),))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", StabilityWarning)
            with pytest.raises(SolverInstability):
                run(p, sched, ProbePulse(1.0, 0.3, 0.2), Grid(64, 0.5, 20.0, 0.5))

    def test_stability_warning(self):
        om = P.rabi_for(0.01)
        sched = ControlSchedule((Segment(0, 2, om, 0.0),))
        g = Grid(400, 0.05, 0.1, 0.05)
        assert not stability_ok(P, sched, g)
        with pytest.warns(StabilityWarning):
            run(P, sched, None, g)

    def test_initial_state_continuation(self):
        om = P.rabi_for(0.01)
        sched = ControlSchedule((Segment(0, 3, om, 0.0),))
        probe = ProbePulse(1.0, 0.4, 0.3)
        full = run(P, sched, probe, Grid(64, 0.005, 1.0, 0.5))
        half = run(P, sched, probe, Grid(64, 0.005, 0.5, 0.5))
        rest = run(P, sched, probe, Grid(64, 0.005, 0.5, 0.5),
                   initial_state=half.diagnostics["final_state"], t0=0.5)
        assert np.allclose(rest.s0[-1], full.s0[-1], rtol=1e-12, atol=1e-14)

    def test_storage_shape_and_decay(self):
        rng = np.random.default_rng(0)
        s0 = np.exp(-((np.linspace(0, 1, 100) - 0.5) / 0.1) ** 2) * np.exp(1j * rng.normal(size=100) * 0.1)
        z = np.zeros(100, complex)
        init = FieldState(z, z, z, z, s0, z, z)
        r = run(P, ControlSchedule(), None, Grid(100, 0.01, 10.0, 1.0), initial_state=init)
        raw = r.raw
        expected = np.abs(s0)[None, :] * np.exp(-P.gamma_s * r.times)[:, None]
        assert np.abs(raw - expected).max() < 1e-12

    def test_mono_equals_explicit_phase_without_standing_wave(self):
        om = P.rabi_for(0.01)
        sched = ControlSchedule((Segment(0, 1.0, om, 0.0), Segment(1.0, 2.0, om, om)), detuning=TWO_PI * 4)
        probe = ProbePulse(1.0, 0.4, 0.3)
        g = Grid(64, 0.005, 2.0, 0.1)
        a = run(P, sched, probe, g, SolverOptions(include_standing_wave=False))
        b = run(P, sched, probe, g, SolverOptions(include_standing_wave=False, bichromatic_mode="explicit_phase"))
        assert np.abs(a.s_mag - b.s_mag).max() < 1e-9

    def test_flux_identity_second_order(self):
        errs = []
        for n in (400, 1600):
            xi = np.linspace(0, 1, n)
            s0 = (np.exp(-((xi - 0.4) / 0.1) ** 2) * (1 + 0.3j)).astype(complex)
            sp = (0.2 * np.exp(-((xi - 0.5) / 0.1) ** 2)).astype(complex)
            sm = 0.1j * sp
            op, om, ip, im = 20 + 1j, 8 - 2j, 0.3, 0.1j
            w = kernels.cell_weights(P.od, 1 / (n - 1))
            ds0, _, _, ep, em = kernels.mb_rhs(s0, sp, sm, op, om, ip, im, math.sqrt(P.od), P.gamma_e,
                                               P.gamma_s, 1.0, *w, True)
            lhs = trapezoid(ds0, xi)
            rhs = -P.gamma_s * trapezoid(s0, xi) + (
                np.conj(op) * (ep[-1] - ep[0]) - np.conj(om) * (em[-1] - em[0])) / math.sqrt(P.od)
            errs.append(abs(lhs - rhs) / abs(rhs))
        assert errs[0] < 0.03
        assert errs[0] / errs[1] > 12

    def test_analytic_velocity(self):
        om = P.rabi_for(0.01)
        assert analytic_velocity(P, om, 0) == pytest.approx(P.gamma_e * 0.01)
        assert analytic_velocity(P, om, om) == pytest.approx(0, abs=1e-15)


def test_effective_decay_approximates_explicit_phase():
    from eitlab import scenarios
    from eitlab.analysis import compare_records

    base = scenarios.stationary_from_slow(tan2_theta=0.01, hold_time=3.0, n_xi=100)
    _, bi = scenarios.bichromatic_pair(base)
    eff = replace(bi, options=replace(bi.options, bichromatic_mode="effective_decay"))
    ra, rb = (run(s.params, s.schedule, s.probe, s.grid, s.options) for s in (bi, eff))
    diff = compare_records(ra, rb, (base.marks["hold_start"], base.marks["hold_end"]))
    assert diff.rms <= 0.10
