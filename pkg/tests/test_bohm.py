import numpy as np
import pytest

from bohmlab.bohm import (
    AnalyticVelocityField,
    NearNodeError,
    SnapshotField,
    conditional_wavefunction,
    equivariance_check,
    integrate,
    propagate_ensemble,
    sample_equilibrium,
    tv_distance,
    velocity,
)
from bohmlab.experiments import equivariance_scenario
from bohmlab.wavefield import (
    FreeGaussian1D,
    GridSpec,
    GridWaveFunction,
    HamiltonianSpec,
    Oscillator2D11,
    TrapEigenstateSum,
    TwoParticleGaussian,
    harmonic_eigenfunction,
)


class TestVelocity:
    def test_real_state_zero(self):
        g = GridSpec(((-12.0, 12.0),), (512,))
        psi = FreeGaussian1D(width=1.0).evaluate(g, 0.0)
        ham = HamiltonianSpec(masses=(1.0,))
        v = velocity(psi, np.array([0.4]), ham)
        assert abs(v[0]) <= 1e-12

    def test_plane_wave(self):
        g = GridSpec(((-12.0, 12.0),), (512,))
        x = g.coordinates(0)
        k = float(g.wavenumbers(0)[7])
        psi = GridWaveFunction(g, np.exp(1j * k * x)[None, :]).normalized()
        ham = HamiltonianSpec(masses=(2.0,))
        v = velocity(psi, np.array([1.234]), ham)
        assert v[0] == pytest.approx(k / 2.0, abs=1e-10)

    def test_oscillator_angular_speed(self):
        g = GridSpec(((-6.0, 6.0), (-6.0, 6.0)), (512, 512))
        st = Oscillator2D11()
        psi = st.evaluate(g, 0.0)
        ham = st.hamiltonian(g)
        for r in (0.5, 1.0, 2.0):
            v = velocity(psi, np.array([r, 0.0]), ham)
            omega = v[1] / r
            assert abs(v[0]) <= 1e-6
            assert omega == pytest.approx(1.0 / r**2, rel=1e-6)

    def test_near_node_error(self):
        g = GridSpec(((-6.0, 6.0), (-6.0, 6.0)), (128, 128))
        st = Oscillator2D11()
        psi = st.evaluate(g, 0.0).normalized()
        ham = st.hamiltonian(g)
        with pytest.raises(NearNodeError):
            velocity(psi, np.array([5.9, 5.9]), ham)  # deep in the tail


class TestIntegrate:
    def test_two_particle_flow(self):
        st = TwoParticleGaussian()
        field = AnalyticVelocityField(st)
        for q0 in ([0.7, -0.3], [1.2, 0.5], [-0.4, -1.0]):
            tr = integrate(field, np.array(q0), (0.0, 5.0), tol=1e-10)
            assert tr.status == "completed"
            exact = st.trajectory(np.array([q0]), 5.0)[0]
            assert np.max(np.abs(tr.final - exact)) <= 1e-4

    def test_stationary_ground_state(self):
        g = GridSpec(((-12.0, 12.0),), (1024,))
        st = TrapEigenstateSum((1.0,))
        psi0 = st.evaluate(g, 0.0)
        ham = st.hamiltonian(g)
        field = SnapshotField.from_evolution(psi0, ham, 0.001, 400)
        tr = integrate(field, np.array([0.8]), (0.0, 0.4), tol=1e-8)
        assert abs(tr.final[0] - 0.8) <= 1e-6

    def test_symmetric_sg_never_crosses_plane(self):
        from bohmlab.experiments import stern_gerlach, run

        spec = stern_gerlach(points=1024)
        psi = np.array([1.0, 1.0], dtype=complex) / np.sqrt(2)
        rec = run(spec, psi, 400, seed=42)
        signs0 = np.sign(rec.initial[:, 0])
        signsT = np.sign(rec.final[:, 0])
        assert np.all(signs0 == signsT)

    def test_reversibility(self):
        g = GridSpec(((-16.0, 16.0),), (1024,))
        st = FreeGaussian1D(width=1.0, momentum=0.5)
        psi0 = st.evaluate(g, 0.0)
        ham = HamiltonianSpec(masses=(1.0,))
        field = SnapshotField.from_evolution(psi0, ham, 0.005, 400)
        tol = 1e-8
        q0 = np.array([0.6])
        forward = integrate(field, q0, (0.0, 2.0), tol=tol)
        back = integrate(field, forward.final, (2.0, 0.0), tol=tol)
        assert np.max(np.abs(back.final - q0)) <= 10 * tol


class TestSampleEquilibrium:
    def test_uniform_box(self):
        g = GridSpec(((-2.0, 2.0),), (64,))
        samples = np.full((1, 64), 0.5 + 0j)
        psi = GridWaveFunction(g, samples).normalized()
        ens = sample_equilibrium(psi, 64 * 500, seed=3)
        counts, _ = np.histogram(ens.members[:, 0], bins=np.linspace(-2, 2, 65))
        # per-cell multinomial: mean 500, sd ~ 22.3
        assert np.all(np.abs(counts - 500) <= 4 * np.sqrt(500))

    def test_gaussian_moments(self):
        g = GridSpec(((-16.0, 16.0),), (1024,))
        st = FreeGaussian1D(width=1.0, center=0.5)
        psi = st.evaluate(g, 0.0)
        n = 10000
        ens = sample_equilibrium(psi, n, seed=11)
        mean = ens.members[:, 0].mean()
        var = ens.members[:, 0].var()
        assert abs(mean - 0.5) <= 4.0 / np.sqrt(n)  # se = sigma/sqrt(n), sigma=1
        assert abs(var - 1.0) <= 4.0 * np.sqrt(2.0 / n)

    def test_two_bumps_branch_weights(self):
        g = GridSpec(((-16.0, 16.0),), (1024,))
        x = g.coordinates(0)
        w1, w2 = 0.36, 0.64
        raw = np.sqrt(w1) * np.exp(-((x + 5) ** 2) / 2) + np.sqrt(w2) * np.exp(
            -((x - 5) ** 2) / 2
        )
        psi = GridWaveFunction(g, raw.astype(complex)[None, :]).normalized()
        n = 10000
        ens = sample_equilibrium(psi, n, seed=12)
        frac = float(np.mean(ens.members[:, 0] > 0))
        assert abs(frac - w2) <= 3 * np.sqrt(w1 * w2 / n)

    def test_deterministic_per_seed(self):
        g = GridSpec(((-16.0, 16.0),), (256,))
        psi = FreeGaussian1D(width=1.0).evaluate(g, 0.0)
        e1 = sample_equilibrium(psi, 100, seed=5)
        e2 = sample_equilibrium(psi, 100, seed=5)
        assert np.array_equal(e1.members, e2.members)


class TestEquivariance:
    @pytest.mark.parametrize("scenario", ["control", "free", "trap"])
    def test_scenarios_quick(self, scenario):
        psi0, ham, t, dt, oracle = equivariance_scenario(scenario)
        rep = equivariance_check(psi0, ham, t, 4000, seed=7, dt=dt, oracle_density=oracle)
        assert rep["tv_distance"] <= 0.05
        assert not rep["flagged"]

    def test_threads_do_not_change_results(self):
        psi0, ham, t, dt, oracle = equivariance_scenario("free")
        ens = sample_equilibrium(psi0, 500, seed=9)
        field = SnapshotField.from_evolution(psi0, ham, dt, int(round(t / dt)))
        q1, a1 = propagate_ensemble(field, ens.members, 0.0, t, tol=1e-8, threads=0)
        q2, a2 = propagate_ensemble(field, ens.members, 0.0, t, tol=1e-8, threads=3)
        assert np.array_equal(q1, q2)
        assert np.array_equal(a1, a2)


class TestFundamentalConditionalProbability:
    def test_branch_conditionals(self):
        # branching state psi1(x) Phi1(y) + psi2(x) Phi2(y) with disjoint
        # y-supports: X given the Y-branch is distributed as |psi_branch|^2
        g = GridSpec(((-12.0, 12.0), (-12.0, 12.0)), (128, 128))
        x, y = g.mesh()
        w1, w2 = 0.42, 0.58
        psi1 = np.exp(-((x + 2.0) ** 2) / 2)
        psi2 = np.exp(-((x - 2.0) ** 2) / (2 * 0.49))
        phi1 = np.exp(-((y + 5.0) ** 2) / 2)
        phi2 = np.exp(-((y - 5.0) ** 2) / 2)
        dx = g.spacing(0)

        def norm1d(f):
            return f / np.sqrt((np.abs(f) ** 2).sum() * dx)

        samples = np.sqrt(w1) * norm1d(psi1) * norm1d(phi1) + np.sqrt(w2) * norm1d(
            psi2
        ) * norm1d(phi2)
        psi = GridWaveFunction(g, (samples * dx ** 0)[None, ...]).normalized()
        n = 20000
        ens = sample_equilibrium(psi, n, seed=21)
        for sign, marginal in ((-1, np.abs(norm1d(psi1)[:, 0]) ** 2),
                               (+1, np.abs(norm1d(psi2)[:, 0]) ** 2)):
            sel = np.sign(ens.members[:, 1]) == sign
            xs = ens.members[sel, 0]
            g1 = GridSpec((g.extents[0],), (g.shape[0],))
            tv = tv_distance(xs[:, None], marginal, g1, bins=64)
            assert tv <= 0.03


class TestMixtureCurrentCaveat:
    def test_density_matrix_velocity_is_not_a_branch_velocity(self):
        # equal mixture of two counter-boosted Gaussians: J_W / rho_W
        # vanishes where each actual branch velocity is +-k
        g = GridSpec(((-16.0, 16.0),), (1024,))
        k = 0.8
        st1 = FreeGaussian1D(width=1.0, momentum=+k)
        st2 = FreeGaussian1D(width=1.0, momentum=-k)
        psi1 = st1.evaluate(g, 0.0)
        psi2 = st2.evaluate(g, 0.0)
        ham = HamiltonianSpec(masses=(1.0,))
        from bohmlab.wavefield import probability_current

        j_w = 0.5 * (probability_current(psi1, ham)[0] + probability_current(psi2, ham)[0])
        rho_w = 0.5 * (psi1.density() + psi2.density())
        x = g.coordinates(0)
        core = np.abs(x) < 2.0
        v_mix = j_w[core] / rho_w[core]
        # branch velocities are +k and -k everywhere (boosted real packets)
        for v_branch in (+k, -k):
            assert np.max(np.abs(v_mix - v_branch)) > 0.1


class TestConditionalWavefunction:
    def test_product_state_returns_factor(self):
        g = GridSpec(((-12.0, 12.0), (-12.0, 12.0)), (128, 128))
        x, y = g.mesh()
        fx = np.exp(-((x - 1.0) ** 2) / 2) * np.exp(1j * 0.3 * x)
        fy = np.exp(-(y**2) / 8)
        psi = GridWaveFunction(g, (fx * fy)[None, ...]).normalized()
        for yv in (-1.0, 0.0, 2.0):
            cond, effective = conditional_wavefunction(psi, yv)
            assert effective
            target = fx[:, 0] / np.linalg.norm(fx[:, 0])
            got = cond.samples[0] / np.linalg.norm(cond.samples[0])
            phase = np.vdot(got, target)
            phase /= abs(phase)
            assert np.max(np.abs(got * phase - target)) <= 1e-6

    def test_two_particle_closed_form(self):
        g = GridSpec(((-12.0, 12.0), (-12.0, 12.0)), (256, 256))
        st = TwoParticleGaussian()
        t = 1.2
        psi = st.evaluate(g, t)
        yv = 0.8
        cond, effective = conditional_wavefunction(psi, yv)
        assert not effective  # entangled single-component support
        x = g.coordinates(0)
        ref = st.conditional(x, yv, t)
        ref = ref / np.sqrt((np.abs(ref) ** 2).sum() * g.spacing(0))
        got = cond.samples[0]
        phase = np.vdot(got, ref)
        phase /= abs(phase)
        assert np.max(np.abs(got * phase - ref)) <= 1e-6

    def test_branching_state_effective(self):
        g = GridSpec(((-12.0, 12.0), (-12.0, 12.0)), (128, 128))
        x, y = g.mesh()
        psi1 = np.exp(-((x + 2.0) ** 2) / 2)
        psi2 = np.exp(-((x - 2.0) ** 2) / 2) * np.exp(1j * x)
        phi1 = np.exp(-((y + 5.0) ** 2) / 2)
        phi2 = np.exp(-((y - 5.0) ** 2) / 2)
        psi = GridWaveFunction(g, (psi1 * phi1 + psi2 * phi2)[None, ...]).normalized()
        cond, effective = conditional_wavefunction(psi, -5.0)
        assert effective
        target = psi1[:, 0] / np.linalg.norm(psi1[:, 0])
        got = np.abs(cond.samples[0]) / np.linalg.norm(cond.samples[0])
        assert np.max(np.abs(got - target)) <= 1e-6

    def test_degenerate_section(self):
        g = GridSpec(((-12.0, 12.0), (-12.0, 12.0)), (128, 128))
        x, y = g.mesh()
        psi = GridWaveFunction(
            g, (np.exp(-(x**2) / 2) * np.exp(-(y**2) / 2))[None, ...]
        ).normalized()
        with pytest.raises(ValueError):
            conditional_wavefunction(psi, 11.5)


class TestTvDistance:
    def test_bins_must_divide(self):
        g = GridSpec(((-1.0, 1.0),), (64,))
        with pytest.raises(ValueError):
            tv_distance(np.zeros((10, 1)), np.ones(64), g, bins=48)

    def test_zero_for_matching_halves(self):
        g = GridSpec(((0.0, 1.0),), (64,))
        rho = np.ones(64)
        samples = (np.arange(6400) % 64 + 0.5)[:, None] / 64.0
        assert tv_distance(samples, rho, g, bins=64) <= 1e-12
