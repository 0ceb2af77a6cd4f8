import json
import math

import numpy as np
import pytest

from pixdoherty import doherty as dt
from pixdoherty import loadpull as lp
from pixdoherty.errors import NonPositiveResistance, NoSolution, PowerMismatch
from pixdoherty.netalg import losslessness_residual

EXPECTED_Z2P = np.array([[1.35 + 6.94j, -5.37 + 14.02j], [-5.37 + 14.02j, 21.27 + 16.10j]])


@pytest.fixture
def ref_lp():
    return lp.input_from_dict(lp.REFERENCE_LOADPULL)


class TestAlpha:
    def test_reference_magnitude(self, ref_lp):
        a = lp.alpha_from_loadpull(ref_lp, 0.0)
        assert a.imag == 0
        assert a.real == pytest.approx(math.sqrt(10 ** (-0.06)), rel=1e-12)
        assert abs(a) == pytest.approx(0.933, abs=5e-4)

    def test_symmetric_devices(self, ref_lp):
        inp = ref_lp.replace(aux_peak=ref_lp.main_peak)
        a = lp.alpha_from_loadpull(inp, 0.7)
        assert a == pytest.approx(np.exp(-0.7j))

    def test_phase_at_design_theta(self, ref_lp):
        a = lp.alpha_from_loadpull(ref_lp, math.radians(133.4))
        assert abs(a) == pytest.approx(0.933, abs=5e-4)
        assert math.degrees(np.angle(a)) == pytest.approx(-133.4)

    def test_non_positive_resistance(self, ref_lp):
        inp = ref_lp.replace(aux_peak=lp.LoadPullPoint(complex(0, 3), 42.1))
        with pytest.raises(NonPositiveResistance):
            lp.alpha_from_loadpull(inp, 0.0)


class TestPowerConservation:
    def test_reference(self, ref_lp):
        bal = lp.check_power_conservation(ref_lp)
        assert bal.lhs_dbm == pytest.approx(45.4)
        assert bal.rhs_dbm == pytest.approx(45.42, abs=5e-3)
        assert abs(bal.delta_db) < 0.1

    def test_aux_absent(self, ref_lp):
        inp = ref_lp.replace(aux_peak=lp.LoadPullPoint(ref_lp.aux_peak.z_opt, -math.inf),
                             main_backoff=lp.LoadPullPoint(ref_lp.main_backoff.z_opt, 42.7 - 9.0))
        assert lp.check_power_conservation(inp).delta_db == pytest.approx(0.0, abs=1e-12)

    def test_perturbed(self, ref_lp):
        inp = ref_lp.replace(main_backoff=lp.LoadPullPoint(ref_lp.main_backoff.z_opt, 37.4))
        bal = lp.check_power_conservation(inp, raise_on_error=False)
        assert bal.delta_db == pytest.approx(1.0 + lp.check_power_conservation(ref_lp).delta_db)
        with pytest.raises(PowerMismatch):
            lp.check_power_conservation(inp)


class TestZ2P:
    def test_no_modulation(self, ref_lp):
        inp = ref_lp.replace(main_backoff=lp.LoadPullPoint(ref_lp.main_peak.z_opt, 36.4))
        z = lp.z2p_from_loadpull(inp, 1.2)
        assert z[0, 1] == 0
        assert z[0, 0] == pytest.approx(ref_lp.main_peak.z_opt)

    def test_expected_matrix(self, ref_lp):
        z = lp.z2p_from_loadpull(ref_lp, math.radians(133.4))
        assert np.max(np.abs(z.real - EXPECTED_Z2P.real)) < 0.05
        assert np.max(np.abs(z.imag - EXPECTED_Z2P.imag)) < 0.05

    def test_symmetric_random(self):
        for seed in range(100):
            r = np.random.default_rng(seed)
            pts = [lp.LoadPullPoint(complex(r.uniform(1, 40), r.uniform(-20, 20)), r.uniform(30, 45))
                   for _ in range(3)]
            inp = lp.SynthesisInput(*pts, complex(r.uniform(0, 5), r.uniform(-30, 30)), 6.0)
            z = lp.z2p_from_loadpull(inp, r.uniform(0, 2 * math.pi))
            assert z[0, 1] == z[1, 0]

    def test_periodic(self, ref_lp):
        a = lp.z2p_from_loadpull(ref_lp, 0.9)
        b = lp.z2p_from_loadpull(ref_lp, 0.9 + 2 * math.pi)
        assert np.max(np.abs(a - b)) < 1e-12

    def test_implied_loads_reproduce_reference(self, ref_lp):
        res = lp.synthesize(ref_lp)
        loads = lp.implied_loads(res.z2p, ref_lp, res.theta)
        assert loads["main_peak"] == pytest.approx(ref_lp.main_peak.z_opt, abs=1e-9)
        assert loads["aux_peak"] == pytest.approx(ref_lp.aux_peak.z_opt, abs=1e-9)
        assert loads["main_backoff"] == pytest.approx(ref_lp.main_backoff.z_opt, abs=1e-9)

    def test_literal_off_state_misses_expected(self, ref_lp):
        """Using the device-side off impedance unconjugated does not give the published matrix."""
        inp = ref_lp.replace(aux_off_convention="device")
        for variant in ("complex", "magnitude"):
            try:
                roots = lp.solve_theta(inp, alpha_square=variant)
            except NoSolution:
                continue
            best = min(np.max(np.abs(q.z2p - EXPECTED_Z2P)) for q in roots)
            assert best > 0.05


class TestSolveTheta:
    def test_reference_roots(self, ref_lp):
        roots = lp.solve_theta(ref_lp)
        degs = [q.theta_deg for q in roots]
        assert any(abs(d - 133.4) < 0.5 for d in degs)
        assert all(q.residual < 1e-8 for q in roots)
        assert degs == sorted(degs)

    def test_selection(self, ref_lp):
        res = lp.synthesize(ref_lp)
        assert math.degrees(res.theta) == pytest.approx(133.4, abs=0.5)

    @pytest.mark.parametrize("beta_b, alpha, k", [(0.5, 1.0, 0), (0.3, 1.2, 0), (0.3, 1.2, 1), (0.4, 0.9, 2)])
    def test_ideal_round_trip(self, beta_b, alpha, k):
        th = dt.theta_solutions(beta_b, alpha)[k]
        cfg = dt.IdealDohertyConfig(beta_b, alpha, th)
        inp = lp.loadpull_from_ideal(cfg)
        roots = lp.solve_theta(inp)
        best = min(roots, key=lambda q: lp._circ(q.theta, th))
        assert lp._circ(best.theta, th) < 1e-6
        want = dt.ideal_combiner_z(cfg)
        assert np.max(np.abs(best.z2p - want)) / np.max(np.abs(want)) < 1e-6

    def test_ideal_selection_lands_on_ideal_branch(self):
        cfg = dt.IdealDohertyConfig(0.3, 1.2, dt.theta_solutions(0.3, 1.2)[1])
        res = lp.synthesize(lp.loadpull_from_ideal(cfg), check_power=False)
        assert min(lp._circ(res.theta, t) for t in dt.theta_solutions(0.3, 1.2)) < 1e-6

    def test_degenerate_no_modulation(self, ref_lp):
        inp = ref_lp.replace(main_backoff=lp.LoadPullPoint(ref_lp.main_peak.z_opt, 36.4))
        with pytest.raises(NoSolution):
            lp.solve_theta(inp)

    def test_roots_realizable(self, ref_lp):
        for q in lp.solve_theta(ref_lp):
            assert losslessness_residual(q.z2p) < 1e-8

    def test_min_residual_strategy_is_available(self, ref_lp):
        res = lp.synthesize(ref_lp, strategy="min-residual")
        assert res.theta in [q.theta for q in res.roots]


class TestJson:
    def test_round_trip(self, tmp_path, ref_lp):
        p = tmp_path / "lp.json"
        p.write_text(json.dumps(lp.input_to_dict(ref_lp)))
        assert lp.load_input(p) == ref_lp
