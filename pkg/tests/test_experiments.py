import numpy as np
import pytest
from scipy.special import ndtr

from bohmlab import experiments as xp
from bohmlab.formalism import born_probability
from bohmlab.hilbert import SPIN_UP, tensor_product
from bohmlab.wavefield import FreeGaussian1D, GridSpec, SternGerlachPacket

Z = np.array([0.0, 0.0, 1.0])


def axis_at(deg):
    th = np.deg2rad(deg)
    return np.array([np.sin(th), 0.0, np.cos(th)])


class TestSternGerlach:
    def test_eigenstate_deterministic(self):
        # longer flight: the wrong-side mass drops to ~1e-5 and no tail
        # sample lands there
        spec = xp.stern_gerlach(points=2048, duration=2.2)
        rec = xp.run(spec, np.array([1.0, 0.0]), 150, seed=2)
        assert rec.frequencies() == {(1.0,): 1.0}

    def test_born_weights(self):
        spec = xp.stern_gerlach(points=1024)
        psi = np.array([np.sqrt(0.7), np.sqrt(0.3)], dtype=complex)
        rec = xp.run(spec, psi, 3000, seed=3)
        plus = rec.frequencies()[(1.0,)]
        assert abs(plus - 0.7) <= 0.03
        assert not rec.flagged

    def test_separation_warning(self):
        spec = xp.stern_gerlach(duration=0.2, points=1024)
        assert "insufficient separation" in spec.warning

    def test_reversed_polarity_matched_seeds(self):
        psi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
        up = xp.run(xp.stern_gerlach(points=1024, polarity=1), psi, 300, seed=17)
        down = xp.run(xp.stern_gerlach(points=1024, polarity=-1), psi, 300, seed=17)
        assert np.array_equal(up.initial, down.initial)
        assert np.all(up.labels[:, 0] == -down.labels[:, 0])

    def test_heisenberg_calibration_mean(self):
        # label mean estimates <sigma_z> at any T; its spread shrinks with T
        psi = np.array([np.sqrt(0.7), np.sqrt(0.3)], dtype=complex)
        sds = []
        for t_dur in (1.0, 2.0):
            spec = xp.stern_gerlach(points=1024, duration=t_dur, calibration="spin-z")
            rec = xp.run(spec, psi, 2000, seed=5)
            labs = rec.labels[:, 0]
            assert abs(labs.mean() - 0.4) <= 5 * labs.std() / np.sqrt(len(labs))
            sds.append(labs.std())
        assert sds[1] < sds[0]

    def test_run_matches_extracted_povm(self):
        spec = xp.stern_gerlach(points=1024)
        basis = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
        povm = xp.povm_of_experiment(spec, basis)
        psi = np.array([np.sqrt(0.4), np.sqrt(0.6)], dtype=complex)
        n = 3000
        rec = xp.run(spec, psi, n, seed=7)
        for lab, freq in rec.frequencies().items():
            p = born_probability(povm, psi, [lab])
            assert abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-3

    def test_povm_matches_gaussian_mass_oracle(self):
        spec = xp.stern_gerlach(points=2048)
        basis = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
        povm = xp.povm_of_experiment(spec, basis)
        o_plus = dict(povm.outcomes)[(1.0,)]
        pk = SternGerlachPacket(+1, 4.0, 0.0, 0.5)
        t = 1.6
        expected_up = ndtr(pk.mean(t) / pk.sigma(t))
        assert np.real(o_plus[0, 0]) == pytest.approx(expected_up, abs=2e-4)
        assert np.real(o_plus[1, 1]) == pytest.approx(1 - expected_up, abs=2e-4)

    def test_povm_limit_becomes_projective(self):
        basis = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
        p_up = []
        for t_dur in (0.45, 0.9, 1.8):
            spec = xp.stern_gerlach(points=2048, duration=t_dur)
            povm = xp.povm_of_experiment(spec, basis)
            o_plus = dict(povm.outcomes)[(1.0,)]
            p_up.append(float(np.real(o_plus[0, 0])))
        assert p_up[0] < p_up[1] < p_up[2]
        spec = xp.stern_gerlach(points=2048, duration=1.8)
        povm = xp.povm_of_experiment(spec, basis)
        o_plus = dict(povm.outcomes)[(1.0,)]
        assert np.max(np.abs(o_plus - np.diag([1.0, 0.0]))) <= 1e-3

    def test_trivial_extension_povm(self):
        basis2 = [np.array([1, 0], dtype=complex), np.array([0, 1], dtype=complex)]
        spec = xp.stern_gerlach(points=1024)
        povm = xp.povm_of_experiment(spec, basis2)
        spec_ext = xp.stern_gerlach(points=1024, spectator=True)
        basis4 = [e for e in np.eye(4, dtype=complex)]
        povm_ext = xp.povm_of_experiment(spec_ext, basis4)
        for lab in povm.labels:
            o = dict(povm.outcomes)[lab]
            o_ext = dict(povm_ext.outcomes)[lab]
            assert np.max(np.abs(o_ext - tensor_product(o, np.eye(2)))) <= 1e-4


class TestTimeOfFlight:
    def test_momentum_statistics(self):
        spec = xp.time_of_flight(points=2048)
        n = 5000
        rec = xp.run(spec, None, n, seed=5)
        psi0 = spec.prepare(None)
        edges = np.linspace(-2.0, 2.0, 65)
        truth = xp.momentum_bin_masses(psi0, edges)
        emp, _ = np.histogram(rec.labels[~rec.aborted, 0], bins=edges)
        emp = emp / emp.sum()
        assert 0.5 * np.abs(emp - truth).sum() <= 0.06

    def test_exact_lattice_distribution_and_convergence(self):
        # deterministic variant: transport a fine lattice of initial points
        # and bin the pushforward through its CDF (the flow is monotone)
        from bohmlab.bohm import SnapshotField, propagate_ensemble

        edges = np.linspace(-2.0, 2.0, 65)
        tvs = []
        for t_dur in (25.0, 50.0):
            spec = xp.time_of_flight(points=2048, duration=t_dur)
            psi0 = spec.prepare(None)
            source = FreeGaussian1D(width=1.0)
            x0 = np.linspace(-6.5, 6.5, 4096)
            w = source.density(x0, 0.0)
            w = w / w.sum()
            field = SnapshotField.from_evolution(
                psi0, spec.hamiltonian, spec.solver_dt, spec.steps
            )
            final, aborted = propagate_ensemble(
                field, x0[:, None], 0.0, spec.duration, tol=1e-8
            )
            labels = spec.calibration(final)
            order = np.argsort(labels)
            cdf = np.cumsum(w[order])
            at_edges = np.interp(edges, labels[order], cdf, left=0.0, right=1.0)
            emp = np.diff(at_edges)
            emp = emp / emp.sum()
            truth = xp.momentum_bin_masses(psi0, edges)
            tvs.append(0.5 * float(np.abs(emp - truth).sum()))
        assert tvs[1] <= 0.01
        assert tvs[1] < tvs[0]

    def test_even_state_even_labels(self):
        spec = xp.time_of_flight(points=2048, duration=25.0)
        rec = xp.run(spec, None, 4000, seed=9)
        labs = rec.labels[:, 0]
        edges = np.linspace(-2, 2, 33)
        h, _ = np.histogram(labs, bins=edges)
        h = h / h.sum()
        assert 0.5 * np.abs(h - h[::-1]).sum() <= 0.05


class TestCoupledOscillator:
    def test_exact_flow_reproduced(self):
        rep = xp.coupled_oscillator(n_initial=20, t_final=5.0, seed=4)
        assert rep["max_error"] <= 1e-4

    def test_symmetry_under_particle_exchange(self):
        from bohmlab.bohm import AnalyticVelocityField, propagate_ensemble
        from bohmlab.wavefield import TwoParticleGaussian

        st = TwoParticleGaussian()
        field = AnalyticVelocityField(st)
        q0 = np.array([[0.9, -0.2]])
        qa, _ = propagate_ensemble(field, q0, 0.0, 3.0, tol=1e-10)
        qb, _ = propagate_ensemble(field, q0[:, ::-1], 0.0, 3.0, tol=1e-10)
        assert np.max(np.abs(qa - qb[:, ::-1])) <= 1e-9


class TestOscillator2dParadox:
    def test_quick_run(self):
        rep = xp.oscillator2d_paradox(n=3000, seed=6)
        for chk in rep["angular_velocity_checks"]:
            assert abs(chk["from_grid_field"] - chk["exact"]) / chk["exact"] <= 1e-6
        assert rep["tv_x_marginal"] <= 0.05
        assert rep["median_displacement"] > 0.05
        assert rep["fraction_displaced_over_0p05"] > 0.5


class TestEprb:
    def test_same_axis_anticorrelated(self):
        spec = xp.eprb(Z, Z)
        rec = xp.run(spec, None, 400, seed=8)
        labs = rec.labels[~rec.aborted]
        anti = np.mean(labs[:, 0] == -labs[:, 1])
        assert anti >= 0.99

    def test_120_degrees(self):
        spec = xp.eprb(Z, axis_at(120.0))
        n = 2000
        rec = xp.run(spec, None, n, seed=13)
        labs = rec.labels[~rec.aborted]
        anti = np.mean(labs[:, 0] == -labs[:, 1])
        assert abs(anti - 0.25) <= 0.03

    def test_setting_swap_flips_some_wing1_outcomes(self):
        n = 400
        rec_b = xp.run(xp.eprb(Z, axis_at(120.0)), None, n, seed=21)
        rec_c = xp.run(xp.eprb(Z, axis_at(240.0)), None, n, seed=21)
        assert np.array_equal(rec_b.initial, rec_c.initial)
        flips = np.mean(rec_b.labels[:, 0] != rec_c.labels[:, 0])
        assert flips > 0.0

    def test_singlet_amplitudes_match_born_rule(self):
        for deg in (0.0, 60.0, 120.0):
            c = xp.singlet_amplitudes(Z, axis_at(deg))
            probs = np.abs(c) ** 2
            ab = float(Z @ axis_at(deg))
            for i, s1 in enumerate((1, -1)):
                for j, s2 in enumerate((1, -1)):
                    expected = (1 - s1 * s2 * ab) / 4
                    assert probs[i, j] == pytest.approx(expected, abs=1e-12)


class TestEquivarianceScenarios:
    def test_unknown_scenario(self):
        with pytest.raises(ValueError):
            xp.equivariance_scenario("nope")

    def test_control_is_time_zero(self):
        psi0, ham, t, dt, oracle = xp.equivariance_scenario("control")
        assert t == 0.0
        assert np.array_equal(oracle, psi0.density())


class TestRunRecord:
    def test_frequencies_sum_to_one(self):
        spec = xp.stern_gerlach(points=1024)
        psi = np.array([0.8, 0.6], dtype=complex)
        rec = xp.run(spec, psi, 500, seed=30)
        assert sum(rec.frequencies().values()) == pytest.approx(1.0)

    def test_csv_roundtrip_shape(self, tmp_path):
        spec = xp.stern_gerlach(points=1024)
        rec = xp.run(spec, np.array([1.0, 0.0]), 50, seed=31)
        path = tmp_path / "rec.csv"
        rec.write_csv(path)
        lines = path.read_text().strip().splitlines()
        assert len(lines) == 51
        assert lines[0].split(",") == ["trial", "q0_0", "label_0", "qT_0", "aborted"]
