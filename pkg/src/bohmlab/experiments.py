"""Canonical pilot-wave scenarios wired as {ready state, evolution, calibration}.

Each builder returns an ExperimentSpec that knows how to combine a system
state with the apparatus ready wave, evolve the composite, and read a
numerical label off the final configuration.  ``run`` samples initial
configurations from the composite |Psi|^2, transports them along the
guiding flow, and applies the calibration; ``povm_of_experiment`` extracts
the operator content of the same arrangement by quadrature over
calibration cells.
"""

from dataclasses import dataclass, field

import csv
import json
import numpy as np

from .bohm import (
    AnalyticVelocityField,
    SnapshotField,
    propagate_ensemble,
    sample_equilibrium,
    tv_distance,
)
from .formalism import Povm, make_label
from .hilbert import dagger, spin_direction
from .wavefield import (
    FreeGaussian1D,
    GridSpec,
    GridWaveFunction,
    HamiltonianSpec,
    Oscillator2D11,
    SternGerlachPacket,
    TwoParticleGaussian,
    evolve,
)

__all__ = [
    "ExperimentSpec",
    "QuadratureError",
    "RunRecord",
    "coupled_oscillator",
    "eprb",
    "eprb_outcome_map",
    "equivariance_scenario",
    "oscillator2d_paradox",
    "povm_of_experiment",
    "run",
    "singlet_amplitudes",
    "stern_gerlach",
    "time_of_flight",
]

SINGLET = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)


class QuadratureError(RuntimeError):
    """POVM extraction failed its closure tolerance."""


@dataclass
class ExperimentSpec:
    """General experiment: ready state, norm-preserving evolution, calibration.

    ``prepare(psi)`` builds the initial composite GridWaveFunction from a
    system state (a spin vector, or a GridWaveFunction for experiments
    whose system is the particle itself).  ``calibration(q)`` maps final
    configurations (n, ndim) to labels (n, label_dim).
    """

    name: str
    grid: GridSpec
    hamiltonian: HamiltonianSpec
    prepare: callable
    calibration: callable
    duration: float
    solver_dt: float
    system_dim: int
    label_dim: int = 1
    discrete_labels: bool = True
    keep_history: bool = True
    segment_steps: int = 0  # >0: streaming propagation in segments
    params: dict = field(default_factory=dict)
    warning: str = ""

    @property
    def steps(self):
        return int(round(self.duration / self.solver_dt))


@dataclass
class RunRecord:
    """Per-trial record of one seeded experiment run."""

    name: str
    seed: int
    n: int
    initial: np.ndarray
    final: np.ndarray
    labels: np.ndarray
    aborted: np.ndarray
    params: dict
    warning: str = ""

    @property
    def flagged(self):
        return bool(self.aborted.sum() > 0.005 * self.n)

    def frequencies(self):
        """Label frequencies over completed trials (sum to 1)."""
        ok = ~self.aborted
        labs = [make_label(tuple(row)) for row in np.atleast_2d(self.labels[ok])]
        out = {}
        for lab in labs:
            out[lab] = out.get(lab, 0) + 1
        total = max(len(labs), 1)
        return {lab: cnt / total for lab, cnt in sorted(out.items())}

    def moments(self):
        ok = ~self.aborted
        labs = np.atleast_2d(self.labels[ok]).astype(float)
        return {
            "mean": labs.mean(axis=0).tolist(),
            "second_moment": (labs**2).mean(axis=0).tolist(),
        }

    def summary(self):
        return {
            "name": self.name,
            "seed": self.seed,
            "n": self.n,
            "aborted": int(self.aborted.sum()),
            "flagged": self.flagged,
            "frequencies": {str(k): v for k, v in self.frequencies().items()},
            "moments": self.moments(),
            "params": self.params,
            "warning": self.warning,
        }

    def write_csv(self, path):
        d = self.initial.shape[1]
        ld = np.atleast_2d(self.labels).shape[1]
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(
                ["trial"]
                + [f"q0_{i}" for i in range(d)]
                + [f"label_{i}" for i in range(ld)]
                + [f"qT_{i}" for i in range(d)]
                + ["aborted"]
            )
            for k in range(self.n):
                row = [k]
                row += [repr(float(v)) for v in self.initial[k]]
                row += [repr(float(v)) for v in np.atleast_1d(self.labels[k])]
                row += [repr(float(v)) for v in self.final[k]]
                row += [int(self.aborted[k])]
                w.writerow(row)


def run(spec, psi, n, seed, tol=1e-6, threads=0):
    """Execute the experiment on n equilibrium-sampled trials.

    Samples composite initial configurations from |psi (x) Phi_0|^2,
    evolves the field once, transports the ensemble, and applies the
    calibration.  Deterministic for a given seed.
    """
    psi0 = spec.prepare(psi)
    ens = sample_equilibrium(psi0, n, seed)
    steps = spec.steps
    t_end = steps * spec.solver_dt
    fieldobj = SnapshotField.from_evolution(
        psi0, spec.hamiltonian, spec.solver_dt, steps, keep_all=spec.keep_history
    )
    final, aborted = _propagate_segmented(
        fieldobj, ens.members, t_end, spec, tol=tol, threads=threads
    )
    labels = spec.calibration(final)
    return RunRecord(
        name=spec.name,
        seed=int(seed),
        n=int(n),
        initial=ens.members,
        final=final,
        labels=np.atleast_2d(labels.T).T if labels.ndim == 1 else labels,
        aborted=aborted,
        params=dict(spec.params),
        warning=spec.warning,
    )


def _propagate_segmented(fieldobj, members, t_end, spec, tol=1e-6, threads=0):
    """Transport an ensemble, optionally in streaming segments."""
    if spec.segment_steps and not spec.keep_history:
        q = np.array(members, dtype=float, copy=True)
        aborted = np.zeros(len(q), dtype=bool)
        seg = spec.segment_steps * spec.solver_dt
        t = 0.0
        while t < t_end - 1e-12:
            t_next = min(t + seg, t_end)
            live = ~aborted
            q_new, ab = propagate_ensemble(fieldobj, q[live], t, t_next, tol=tol)
            q[live] = q_new
            idx = np.flatnonzero(live)
            aborted[idx[ab]] = True
            fieldobj.trim_before(t_next)
            t = t_next
        return q, aborted
    return propagate_ensemble(fieldobj, members, 0.0, t_end, tol=tol, threads=threads)


def povm_of_experiment(spec, basis, closure_tol=1e-4, atol=1e-6):
    """Extract the POVM of the experiment in a given orthonormal system basis.

    Matrix elements are B(psi_i, psi_j)[label] = integral over the
    calibration cell of conj(U(psi_i (x) Phi_0)) U(psi_j (x) Phi_0); one
    field evolution per basis element, quadrature over grid cells.
    """
    finals = []
    for b in basis:
        psi0 = spec.prepare(b)
        out = evolve(psi0, spec.hamiltonian, spec.solver_dt, spec.steps)
        finals.append(out.samples)
    grid = spec.grid
    mesh = grid.mesh()
    pts = np.stack([m.reshape(-1) for m in mesh], axis=1)
    labels = np.atleast_2d(spec.calibration(pts).T).T
    rounded = np.array([make_label(tuple(row)) for row in labels])
    uniq, inverse = np.unique(rounded, axis=0, return_inverse=True)
    vol = grid.cell_volume
    d = len(basis)
    effects = []
    flat = [f.reshape(f.shape[0], -1) for f in finals]
    for k in range(len(uniq)):
        mask = inverse == k
        o = np.empty((d, d), dtype=complex)
        for i in range(d):
            for j in range(i, d):
                val = np.sum(np.conjugate(flat[i][:, mask]) * flat[j][:, mask]) * vol
                o[i, j] = val
                o[j, i] = np.conjugate(val)
        effects.append(o)
    closure = sum(effects)
    residual = float(np.max(np.abs(closure - np.eye(d))))
    if residual > closure_tol:
        raise QuadratureError(f"POVM closure residual {residual:.3e} exceeds {closure_tol}")
    labels_out = tuple(make_label(tuple(row)) for row in uniq)
    return Povm(labels_out, tuple(effects), atol=atol)


# ---------------------------------------------------------------------------
# equivariance scenarios


def equivariance_scenario(name, points=1024):
    """Named transport scenario: returns (psi0, ham, t, solver_dt, oracle).

    ``oracle`` is the exact |Psi_t|^2 on the grid (analytic evolution).
    Scenarios: "trap" (harmonic superposition, half a period), "free"
    (spreading Gaussian, t=2), "control" (t=0, sampling noise only).
    """
    from .wavefield import TrapEigenstateSum

    if name in ("trap", "control"):
        grid = GridSpec(((-12.0, 12.0),), (points,))
        state = TrapEigenstateSum((1.0 / np.sqrt(2.0), 1.0 / np.sqrt(2.0)))
        psi0 = state.evaluate(grid, 0.0)
        ham = state.hamiltonian(grid)
        if name == "control":
            return psi0, ham, 0.0, None, psi0.density()
        t = np.pi  # half the trap period
        dt = t / 2400
        return psi0, ham, t, dt, state.density(grid.coordinates(0), t)
    if name == "free":
        grid = GridSpec(((-16.0, 16.0),), (points,))
        state = FreeGaussian1D(width=1.0)
        psi0 = state.evaluate(grid, 0.0)
        ham = HamiltonianSpec(masses=(1.0,), hbar=1.0)
        t = 2.0
        dt = t / 400
        return psi0, ham, t, dt, state.density(grid.coordinates(0), t)
    raise ValueError(f"unknown equivariance scenario {name!r}")


# ---------------------------------------------------------------------------
# Stern-Gerlach


def stern_gerlach(gradient=4.0, offset=0.0, width=0.5, duration=1.6, mass=1.0,
                  hbar=1.0, points=2048, halfwidth=None, polarity=1,
                  calibration="sign", solver_dt=None, spectator=False):
    """Spin-1/2 packet in a constant-gradient spin-z coupling -(b + a z) sigma_z.

    ``polarity`` = -1 reverses the magnet (a -> -a) and, with it, the
    calibration sign (upper detection then means spin down).  The
    "spin-z" calibration returns the rescaled deflection 2 m z / (a T^2)
    whose mean estimates <sigma_z>.  ``spectator`` tensors a decoupled
    spin-1/2 onto the system (trivial extension; system dim becomes 4).
    """
    packet = SternGerlachPacket(+1, gradient, offset, width, mass, hbar)
    zbar = abs(packet.mean(duration))
    spread = packet.sigma(duration)
    warning = ""
    if zbar < 3.0 * spread:
        warning = (
            f"insufficient separation: |mean|(T) = {zbar:.3g} < 3 d(T) = {3 * spread:.3g}"
        )
    if halfwidth is None:
        halfwidth = zbar + 10.0 * spread
    grid = GridSpec(((-halfwidth, halfwidth),), (points,))
    z = grid.coordinates(0)
    spin_dim = 4 if spectator else 2
    diag = np.empty((spin_dim, points))
    up = -polarity * (offset + gradient * z)
    if spectator:
        diag[0] = up
        diag[1] = up
        diag[2] = -up
        diag[3] = -up
    else:
        diag[0] = up
        diag[1] = -up
    ham = HamiltonianSpec(masses=(mass,), coupling_diag=diag, hbar=hbar)
    vmax = float(np.max(np.abs(diag)))
    if solver_dt is None:
        solver_dt = min(0.095 * hbar / vmax, duration / 200.0)
    steps = max(1, round(duration / solver_dt))
    solver_dt = duration / steps

    phi0 = (2 * np.pi * width**2) ** -0.25 * np.exp(-(z**2) / (4 * width**2))

    def prepare(spin):
        spin = np.asarray(spin, dtype=complex)
        if spin.shape != (spin_dim,):
            raise ValueError(f"system state must have {spin_dim} spin components")
        spin = spin / np.linalg.norm(spin)
        samples = spin[:, None] * phi0[None, :]
        return GridWaveFunction(grid, samples, 0.0)

    if calibration == "sign":
        def calib(q):
            return np.where(q[:, 0] >= 0.0, 1.0, -1.0) * polarity
        discrete = True
    elif calibration == "spin-z":
        scale = 2.0 * mass / (gradient * duration**2)
        def calib(q):
            return q[:, 0] * scale * polarity
        discrete = False
    else:
        raise ValueError(f"unknown calibration {calibration!r}")

    return ExperimentSpec(
        name="stern-gerlach",
        grid=grid,
        hamiltonian=ham,
        prepare=prepare,
        calibration=calib,
        duration=duration,
        solver_dt=solver_dt,
        system_dim=spin_dim,
        discrete_labels=discrete,
        params={
            "gradient": gradient, "offset": offset, "width": width,
            "duration": duration, "mass": mass, "hbar": hbar,
            "points": points, "polarity": polarity, "calibration": calibration,
            "spectator": spectator,
        },
        warning=warning,
    )


# ---------------------------------------------------------------------------
# time of flight


def momentum_bin_masses(psi, edges, hbar=1.0):
    """Integrate |psi~(p)|^2 over momentum bins (trapezoid CDF, normalized)."""
    from .wavefield import momentum_density

    p_axes, dens = momentum_density(psi, hbar=hbar)
    p = p_axes[0]
    cdf = np.concatenate([[0.0], np.cumsum((dens[1:] + dens[:-1]) * 0.5 * np.diff(p))])
    cdf = cdf / cdf[-1]
    at_edges = np.interp(edges, p, cdf)
    masses = np.diff(at_edges)
    return masses / masses.sum()


def time_of_flight(width=1.0, duration=50.0, mass=1.0, hbar=1.0, points=4096,
                   halfwidth=None, solver_dt=None):
    """Free flight plus final position readout, calibrated as p = m x / T."""
    packet = FreeGaussian1D(width=width, mass=mass, hbar=hbar)
    spread = packet.sigma(duration)
    if halfwidth is None:
        halfwidth = 8.0 * spread
    grid = GridSpec(((-halfwidth, halfwidth),), (points,))
    ham = HamiltonianSpec(masses=(mass,), hbar=hbar)
    if solver_dt is None:
        solver_dt = duration / 1000.0

    def prepare(psi):
        if psi is None:
            return packet.evaluate(grid, 0.0)
        if not isinstance(psi, GridWaveFunction):
            raise ValueError("time-of-flight system state must be a GridWaveFunction")
        return psi.normalized()

    scale = mass / duration

    def calib(q):
        return q[:, 0] * scale

    return ExperimentSpec(
        name="time-of-flight",
        grid=grid,
        hamiltonian=ham,
        prepare=prepare,
        calibration=calib,
        duration=duration,
        solver_dt=solver_dt,
        system_dim=points,
        discrete_labels=False,
        params={"width": width, "duration": duration, "mass": mass,
                "hbar": hbar, "points": points},
    )


# ---------------------------------------------------------------------------
# coupled oscillator (two-particle analytic scenario)


def coupled_oscillator(n_initial=100, t_final=5.0, seed=1, tol=1e-9, checkpoints=26):
    """Integrate the coupled two-particle Gaussian and compare with the e
    xact flow X_t = a(t) X + b(t) Y.

    Returns a report with the worst deviation over all checkpoints in
    [0, t_final] plus the per-checkpoint maxima.
    """
    state = TwoParticleGaussian()
    grid = GridSpec(((-6.0, 6.0), (-6.0, 6.0)), (128, 128))
    psi0 = state.evaluate(grid, 0.0)
    ens = sample_equilibrium(psi0, n_initial, seed)
    fieldobj = AnalyticVelocityField(state)
    times = np.linspace(0.0, t_final, checkpoints)
    q = ens.members.copy()
    errs = []
    for t0, t1 in zip(times[:-1], times[1:]):
        q, aborted = propagate_ensemble(fieldobj, q, t0, t1, tol=tol)
        exact = state.trajectory(ens.members, t1)
        errs.append(float(np.max(np.abs(q - exact))))
    return {
        "seed": int(seed),
        "n": int(n_initial),
        "t_final": float(t_final),
        "checkpoint_times": times[1:].tolist(),
        "checkpoint_max_error": errs,
        "max_error": max(errs),
    }


# ---------------------------------------------------------------------------
# 2-d oscillator paradox (position-operator measurement that is not a
# position measurement)


def oscillator2d_paradox(n=20000, seed=1, mass=1.0, omega=1.0, hbar=1.0,
                         tol=1e-8, bins=64, radii=(0.5, 1.0, 2.0),
                         return_positions=False):
    """Run E (read X_0) and E' (transport to t = tau, read X_tau).

    The state is the rotating (1,1) oscillator eigenstate; |psi_t| is
    stationary, so X_0 and X_tau are identically distributed while
    individual trials end up far from where they started.
    """
    state = Oscillator2D11(mass=mass, omega=omega, hbar=hbar)
    grid = GridSpec(((-6.0, 6.0), (-6.0, 6.0)), (512, 512))
    psi0 = state.evaluate(grid, 0.0).normalized()
    ens = sample_equilibrium(psi0, n, seed)
    tau = 2.0 * np.pi / omega
    mw = mass * omega / hbar

    def rel_density(q, ts):
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        return mw * r2 * np.exp(-mw * r2 + 1.0)  # peaks at 1 (r^2 = 1/mw)

    fieldobj = AnalyticVelocityField(state, density_fn=rel_density)
    final, aborted = propagate_ensemble(fieldobj, ens.members, 0.0, tau, tol=tol)
    ok = ~aborted
    displacement = np.linalg.norm(final - ens.members, axis=1)
    rho = psi0.density()
    # angular velocity read off the full grid pipeline (spectral gradient +
    # spline interpolation), compared with hbar / (m r^2)
    from .bohm import velocity as grid_velocity

    ham = state.hamiltonian(grid)
    checks = []
    for r in radii:
        v = grid_velocity(psi0, np.array([float(r), 0.0]), ham)
        checks.append(
            {
                "radius": float(r),
                "exact": float(state.angular_velocity(r)),
                "from_grid_field": float(v[1] / r),
            }
        )
    report = {
        "seed": int(seed),
        "n": int(n),
        "tau": float(tau),
        "aborted": int(aborted.sum()),
        "tv_x_marginal": tv_distance(final[ok], rho, grid, bins=bins, axis=0),
        "tv_paired": _tv_two_samples(ens.members[ok, 0], final[ok, 0], grid.extents[0], bins),
        "median_displacement": float(np.median(displacement[ok])),
        "fraction_displaced_over_0p05": float(np.mean(displacement[ok] > 0.05)),
        "angular_velocity_checks": checks,
    }
    if return_positions:
        report["initial"] = ens.members
        report["final"] = final
        report["aborted_mask"] = aborted
    return report


def _tv_two_samples(a, b, extent, bins):
    edges = np.linspace(extent[0], extent[1], bins + 1)
    pa, _ = np.histogram(a, bins=edges)
    pb, _ = np.histogram(b, bins=edges)
    pa = pa / pa.sum()
    pb = pb / pb.sum()
    return 0.5 * float(np.abs(pa - pb).sum())


# ---------------------------------------------------------------------------
# EPRB


def singlet_amplitudes(axis1, axis2):
    """Singlet amplitudes in the product of local spin eigenbases.

    Columns of U_n are the +1 and -1 eigenvectors of sigma . n; the
    returned 2x2 array c[s1, s2] holds <s1_axis1, s2_axis2 | singlet>.
    """
    u1 = _eigenbasis(axis1)
    u2 = _eigenbasis(axis2)
    c = dagger(np.kron(u1, u2)) @ SINGLET
    return c.reshape(2, 2)


def _eigenbasis(axis):
    op = spin_direction(axis)
    vals, vecs = np.linalg.eigh(op)
    order = np.argsort(-vals)  # +1 first
    return vecs[:, order]


def eprb(axis1, axis2, gradient=2.2, width=1.0, duration=2.0, mass=1.0,
         hbar=1.0, points=128, halfwidth=16.0, polarity=(1, 1), solver_dt=None):
    """Two-wing Stern-Gerlach pair with simultaneous couplings.

    The spin state (given in the standard z (x) z basis; None means the
    antisymmetric singlet) is re-expressed in the product of local
    eigenbases of sigma . axis1 and sigma . axis2, where both couplings
    are diagonal.  Labels are (sign z1, sign z2) mapped to the measured
    spin values; field snapshots stream in segments to bound memory.
    """
    packet = SternGerlachPacket(+1, gradient, 0.0, width, mass, hbar)
    zbar = abs(packet.mean(duration))
    spread = packet.sigma(duration)
    warning = ""
    if zbar < 3.0 * spread:
        warning = f"insufficient separation: {zbar:.3g} < {3 * spread:.3g}"
    if halfwidth is None:
        halfwidth = zbar + 8.0 * spread
    grid = GridSpec(((-halfwidth, halfwidth), (-halfwidth, halfwidth)), (points, points))
    z1, z2 = grid.mesh()
    diag = np.empty((4,) + grid.shape)
    signs = [(+1, +1), (+1, -1), (-1, +1), (-1, -1)]
    for k, (s1, s2) in enumerate(signs):
        diag[k] = -s1 * polarity[0] * gradient * z1 - s2 * polarity[1] * gradient * z2
    ham = HamiltonianSpec(masses=(mass, mass), coupling_diag=diag, hbar=hbar)
    vmax = float(np.max(np.abs(diag)))
    if solver_dt is None:
        solver_dt = 0.095 * hbar / vmax
    steps = max(1, round(duration / solver_dt))
    solver_dt = duration / steps

    u_loc = np.kron(_eigenbasis(axis1), _eigenbasis(axis2))
    z = grid.coordinates(0)
    phi0 = (2 * np.pi * width**2) ** -0.25 * np.exp(-(z**2) / (4 * width**2))
    phi2d = phi0[:, None] * phi0[None, :]

    def prepare(spin):
        if spin is None:
            spin = SINGLET
        spin = np.asarray(spin, dtype=complex)
        if spin.shape != (4,):
            raise ValueError("system state must have 4 spin components")
        local = dagger(u_loc) @ (spin / np.linalg.norm(spin))
        samples = local[:, None, None] * phi2d[None, :, :]
        return GridWaveFunction(grid, samples, 0.0)

    def calib(q):
        l1 = np.where(q[:, 0] >= 0.0, 1.0, -1.0) * polarity[0]
        l2 = np.where(q[:, 1] >= 0.0, 1.0, -1.0) * polarity[1]
        return np.stack([l1, l2], axis=1)

    return ExperimentSpec(
        name="eprb",
        grid=grid,
        hamiltonian=ham,
        prepare=prepare,
        calibration=calib,
        duration=duration,
        solver_dt=solver_dt,
        system_dim=4,
        label_dim=2,
        keep_history=False,
        segment_steps=64,
        params={
            "axis1": list(np.asarray(axis1, dtype=float)),
            "axis2": list(np.asarray(axis2, dtype=float)),
            "gradient": gradient, "width": width, "duration": duration,
            "points": points, "polarity": list(polarity),
        },
        warning=warning,
    )


def eprb_outcome_map(spec, psi, grid_per_axis=64, tol=1e-6):
    """Deterministic outcome labels on a weighted lattice of initial configurations.

    Returns (lattice points, quantum-equilibrium weights, labels); used to
    derive expected flip fractions under setting changes without Monte
    Carlo noise.
    """
    psi0 = spec.prepare(psi)
    rho = psi0.density()
    g = spec.grid
    # aggregate density onto the coarse lattice, take cell centers
    per = [g.shape[a] // grid_per_axis for a in range(2)]
    coarse = rho.reshape(grid_per_axis, per[0], grid_per_axis, per[1]).sum(axis=(1, 3))
    weights = (coarse / coarse.sum()).reshape(-1)
    axes = [
        g.extents[a][0] + (np.arange(grid_per_axis) + 0.5) * (g.extents[a][1] - g.extents[a][0]) / grid_per_axis
        for a in range(2)
    ]
    mx, my = np.meshgrid(axes[0], axes[1], indexing="ij")
    pts = np.stack([mx.reshape(-1), my.reshape(-1)], axis=1)
    keep = weights > 1e-12
    pts, weights = pts[keep], weights[keep]
    weights = weights / weights.sum()
    steps = spec.steps
    fieldobj = SnapshotField.from_evolution(
        psi0, spec.hamiltonian, spec.solver_dt, steps, keep_all=spec.keep_history
    )
    q, aborted = _propagate_segmented(fieldobj, pts, steps * spec.solver_dt, spec, tol=tol)
    labels = spec.calibration(q)
    return pts, weights, labels, aborted
