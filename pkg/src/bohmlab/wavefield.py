"""Spinor wave functions on uniform periodic grids and their evolution.

The solver is classic Strang splitting: half a potential phase (pointwise,
diagonal or via batched Hermitian exponentials when a spin coupling is
present), a full kinetic phase in Fourier space, half a potential phase.
Both substeps are exactly unitary on the grid, so the norm is conserved to
roundoff.  Boundaries are periodic with a wrap-around guard: experiments
must choose boxes large enough that no appreciable density reaches the
edges.

Closed-form reference states live here too: free and trapped Gaussians,
the coupled two-particle Gaussian, the rotating 2-d oscillator state, and
the Stern-Gerlach packets under a constant-gradient coupling.
"""

from dataclasses import dataclass, field, replace

import csv
import json
import numpy as np

__all__ = [
    "GridSpec",
    "GridWaveFunction",
    "HamiltonianSpec",
    "WrapAroundError",
    "apply_hamiltonian",
    "evolve",
    "evolve_snapshots",
    "export_wavefunction",
    "import_wavefunction",
    "momentum_density",
    "probability_current",
    "spectral_gradient",
    "FreeGaussian1D",
    "TwoParticleGaussian",
    "Oscillator2D11",
    "SternGerlachPacket",
    "TrapEigenstateSum",
    "CoherentState1D",
    "harmonic_eigenfunction",
]


class WrapAroundError(RuntimeError):
    """Density reached the periodic boundary; results would be corrupted."""


def _is_power_of_two(n):
    return n >= 1 and (n & (n - 1)) == 0


@dataclass(frozen=True)
class GridSpec:
    """Uniform periodic rectangular grid, one or two axes.

    ``extents`` holds (min, max) per axis; points per axis must be a power
    of two, at least 32.  Grid coordinates are min + i * dx with
    dx = (max - min) / points, so max itself is excluded (periodic wrap).
    """

    extents: tuple
    points: tuple

    def __post_init__(self):
        if len(self.extents) != len(self.points) or len(self.points) not in (1, 2):
            raise ValueError("grid must have 1 or 2 axes with matching extents")
        for (lo, hi), n in zip(self.extents, self.points):
            if hi <= lo:
                raise ValueError("axis extent must be positive")
            if n < 32 or not _is_power_of_two(int(n)):
                raise ValueError("points per axis must be a power of two, >= 32")

    @property
    def ndim(self):
        return len(self.points)

    @property
    def shape(self):
        return tuple(int(n) for n in self.points)

    def spacing(self, axis):
        lo, hi = self.extents[axis]
        return (hi - lo) / self.points[axis]

    @property
    def cell_volume(self):
        v = 1.0
        for ax in range(self.ndim):
            v *= self.spacing(ax)
        return v

    def coordinates(self, axis):
        lo, _ = self.extents[axis]
        return lo + self.spacing(axis) * np.arange(self.points[axis])

    def mesh(self):
        return np.meshgrid(*[self.coordinates(ax) for ax in range(self.ndim)], indexing="ij")

    def wavenumbers(self, axis):
        return 2 * np.pi * np.fft.fftfreq(self.points[axis], d=self.spacing(axis))

    def to_fractional(self, q):
        """Map spatial points (n, d) to fractional grid indices for interpolation."""
        q = np.atleast_2d(np.asarray(q, dtype=float))
        out = np.empty_like(q)
        for ax in range(self.ndim):
            lo, _ = self.extents[ax]
            out[:, ax] = (q[:, ax] - lo) / self.spacing(ax)
        return out


@dataclass
class GridWaveFunction:
    """Complex samples with a leading spin axis: shape (spin_dim, *grid.shape)."""

    grid: GridSpec
    samples: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=complex)
        if self.samples.ndim == self.grid.ndim:
            self.samples = self.samples[None, ...]
        if self.samples.shape[1:] != self.grid.shape:
            raise ValueError(
                f"sample shape {self.samples.shape} does not match grid {self.grid.shape}"
            )
        if not np.all(np.isfinite(self.samples)):
            raise ValueError("wave function samples must be finite")

    @property
    def spin_dim(self):
        return self.samples.shape[0]

    def density(self):
        """Spin-summed position density on the grid."""
        return np.sum(np.abs(self.samples) ** 2, axis=0)

    def norm(self):
        return float(np.sqrt(np.sum(self.density()) * self.grid.cell_volume))

    def normalized(self):
        n = self.norm()
        if n == 0:
            raise ValueError("cannot normalize the zero wave function")
        return GridWaveFunction(self.grid, self.samples / n, self.time)

    def boundary_fraction(self):
        """Max density on the outermost cell layer relative to the peak."""
        rho = self.density()
        peak = rho.max()
        if peak == 0:
            return 0.0
        edge = 0.0
        for ax in range(rho.ndim):
            sl0 = [slice(None)] * rho.ndim
            sl1 = [slice(None)] * rho.ndim
            sl0[ax] = 0
            sl1[ax] = -1
            edge = max(edge, rho[tuple(sl0)].max(), rho[tuple(sl1)].max())
        return float(edge / peak)

    def check_guard(self, limit=1e-8):
        frac = self.boundary_fraction()
        if frac > limit:
            raise WrapAroundError(
                f"boundary density fraction {frac:.3e} exceeds {limit:.1e}; enlarge the box"
            )


@dataclass(frozen=True)
class HamiltonianSpec:
    """Kinetic masses per axis plus scalar and optional spin-coupling potentials.

    ``coupling_diag`` has shape (spin_dim, *grid.shape): a real diagonal
    matrix potential per grid point (enough for sigma_z-type couplings in
    the local eigenbasis).  ``coupling_full`` has shape
    (*grid.shape, s, s) and is exponentiated with a batched eigensolver.
    """

    masses: tuple
    potential: np.ndarray = None
    coupling_diag: np.ndarray = None
    coupling_full: np.ndarray = None
    hbar: float = 1.0

    def max_potential_scale(self, grid, spin_dim):
        m = 0.0
        if self.potential is not None:
            m += float(np.max(np.abs(self.potential)))
        if self.coupling_diag is not None:
            m += float(np.max(np.abs(self.coupling_diag)))
        if self.coupling_full is not None:
            m += float(np.max(np.sum(np.abs(self.coupling_full), axis=-1)))
        return m


def _kinetic_phase(grid, ham, dt):
    ks = [grid.wavenumbers(ax) for ax in range(grid.ndim)]
    mesh = np.meshgrid(*ks, indexing="ij")
    energy = sum(ham.hbar * k**2 / (2.0 * m) for k, m in zip(mesh, ham.masses))
    return np.exp(-1j * dt * energy)


def _potential_phase(grid, ham, spin_dim, dt_half):
    """Pointwise exp(-i dt/2 (V + coupling)/hbar); None when free."""
    shape = grid.shape
    v = ham.potential if ham.potential is not None else None
    if ham.coupling_full is not None:
        base = np.array(ham.coupling_full, dtype=complex)
        if v is not None:
            idx = np.arange(spin_dim)
            base[..., idx, idx] += v[..., None]
        w, u = np.linalg.eigh(base)
        phase = np.exp(-1j * dt_half * w / ham.hbar)
        mats = np.einsum("...ij,...j,...kj->...ik", u, phase, np.conjugate(u))

        def apply(samples):
            # samples (s, *shape) -> pointwise matrix multiply
            moved = np.moveaxis(samples, 0, -1)
            out = np.einsum("...ij,...j->...i", mats, moved)
            return np.moveaxis(out, -1, 0)

        return apply
    diag = None
    if ham.coupling_diag is not None:
        diag = np.asarray(ham.coupling_diag, dtype=float)
        if v is not None:
            diag = diag + v[None, ...]
    elif v is not None:
        diag = np.broadcast_to(v[None, ...], (spin_dim,) + shape)
    if diag is None:
        return None
    phase = np.exp(-1j * dt_half * diag / ham.hbar)

    def apply(samples):
        return samples * phase

    return apply


def evolve_snapshots(psi, ham, dt, steps, guard_every=200, guard_limit=1e-8,
                     dt_bound=0.1):
    """Generator of Strang split-step snapshots, including the initial state.

    Yields ``steps + 1`` GridWaveFunction objects at times t0 + i dt.  The
    precondition dt * max|V| / hbar <= ``dt_bound`` is enforced, and the
    wrap-around guard aborts when density reaches the boundary.
    """
    grid = psi.grid
    if len(ham.masses) != grid.ndim:
        raise ValueError("one mass per grid axis required")
    vmax = ham.max_potential_scale(grid, psi.spin_dim)
    if dt_bound is not None and dt * vmax / ham.hbar > dt_bound:
        raise ValueError(
            f"dt {dt} too large for potential scale {vmax:.3g} "
            f"(dt*Vmax/hbar = {dt * vmax / ham.hbar:.3g} > {dt_bound})"
        )
    kin = _kinetic_phase(grid, ham, dt)
    pot = _potential_phase(grid, ham, psi.spin_dim, dt / 2.0)
    axes = tuple(range(1, grid.ndim + 1))
    samples = psi.samples.copy()
    yield GridWaveFunction(grid, samples, psi.time)
    for step in range(1, steps + 1):
        if pot is not None:
            samples = pot(samples)
        samples = np.fft.ifftn(np.fft.fftn(samples, axes=axes) * kin, axes=axes)
        if pot is not None:
            samples = pot(samples)
        current = GridWaveFunction(grid, samples, psi.time + step * dt)
        if step % guard_every == 0 or step == steps:
            current.check_guard(guard_limit)
        yield current


def evolve(psi, ham, dt, steps, guard_every=200, guard_limit=1e-8, dt_bound=0.1):
    """Strang split-step evolution; returns the final GridWaveFunction."""
    out = psi
    for out in evolve_snapshots(psi, ham, dt, steps, guard_every, guard_limit, dt_bound):
        pass
    return out


def spectral_gradient(psi):
    """Gradient arrays, shape (ndim, spin_dim, *grid.shape)."""
    grid = psi.grid
    axes = tuple(range(1, grid.ndim + 1))
    ft = np.fft.fftn(psi.samples, axes=axes)
    out = np.empty((grid.ndim,) + psi.samples.shape, dtype=complex)
    for ax in range(grid.ndim):
        k = grid.wavenumbers(ax)
        shape = [1] * (grid.ndim + 1)
        shape[ax + 1] = len(k)
        out[ax] = np.fft.ifftn(ft * (1j * k.reshape(shape)), axes=axes)
    return out


def apply_hamiltonian(psi, ham):
    """H Psi evaluated spectrally; returns an array like psi.samples."""
    grid = psi.grid
    axes = tuple(range(1, grid.ndim + 1))
    ks = [grid.wavenumbers(ax) for ax in range(grid.ndim)]
    mesh = np.meshgrid(*ks, indexing="ij")
    energy = sum(ham.hbar**2 * k**2 / (2.0 * m) for k, m in zip(mesh, ham.masses))
    out = np.fft.ifftn(np.fft.fftn(psi.samples, axes=axes) * energy, axes=axes)
    if ham.potential is not None:
        out = out + psi.samples * ham.potential[None, ...]
    if ham.coupling_diag is not None:
        out = out + psi.samples * ham.coupling_diag
    if ham.coupling_full is not None:
        moved = np.moveaxis(psi.samples, 0, -1)
        out = out + np.moveaxis(
            np.einsum("...ij,...j->...i", ham.coupling_full, moved), -1, 0
        )
    return out


def momentum_density(psi, hbar=1.0):
    """Momentum-space density |FT psi|^2 on the conjugate grid p = hbar k.

    Returns (momentum_axes, density), both fftshifted, with the density
    normalized so that sum(density) * prod(dp) = 1.
    """
    grid = psi.grid
    axes = tuple(range(1, grid.ndim + 1))
    ft = np.fft.fftn(psi.samples, axes=axes)
    dens = np.sum(np.abs(ft) ** 2, axis=0)
    dens = np.fft.fftshift(dens)
    p_axes = []
    dp = 1.0
    for ax in range(grid.ndim):
        p = hbar * np.fft.fftshift(grid.wavenumbers(ax))
        p_axes.append(p)
        dp *= p[1] - p[0]
    total = float(np.sum(dens) * dp)
    if total <= 0:
        raise ValueError("cannot normalize a zero momentum density")
    dens = dens / total
    return p_axes, dens


def probability_current(psi, ham):
    """J_k = (hbar / m_k) Im(Psi† grad_k Psi), shape (ndim, *grid.shape)."""
    grads = spectral_gradient(psi)
    out = np.empty((psi.grid.ndim,) + psi.grid.shape)
    for ax in range(psi.grid.ndim):
        num = np.sum(np.conjugate(psi.samples) * grads[ax], axis=0)
        out[ax] = (ham.hbar / ham.masses[ax]) * np.imag(num)
    return out


# ---------------------------------------------------------------------------
# wave function export / import


def export_wavefunction(psi, json_path, csv_path):
    """Write metadata JSON and a CSV of (index..., spin, re, im) rows."""
    meta = {
        "extents": [list(e) for e in psi.grid.extents],
        "points": list(psi.grid.points),
        "spin_dim": psi.spin_dim,
        "time": psi.time,
    }
    with open(json_path, "w") as fh:
        json.dump(meta, fh, indent=2)
        fh.write("\n")
    with open(csv_path, "w", newline="") as fh:
        writer = csv.writer(fh)
        idx_cols = [f"i{ax}" for ax in range(psi.grid.ndim)]
        writer.writerow(idx_cols + ["spin", "re", "im"])
        flat = psi.samples.reshape(psi.spin_dim, -1)
        for s in range(psi.spin_dim):
            for flat_idx in range(flat.shape[1]):
                idx = np.unravel_index(flat_idx, psi.grid.shape)
                writer.writerow(list(idx) + [s, repr(float(flat[s, flat_idx].real)),
                                             repr(float(flat[s, flat_idx].imag))])


def import_wavefunction(json_path, csv_path, norm_tol=1e-6, guard_limit=1e-8):
    with open(json_path) as fh:
        meta = json.load(fh)
    grid = GridSpec(tuple(tuple(e) for e in meta["extents"]), tuple(meta["points"]))
    samples = np.zeros((meta["spin_dim"],) + grid.shape, dtype=complex)
    with open(csv_path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        nd = grid.ndim
        for row in reader:
            idx = tuple(int(v) for v in row[:nd])
            s = int(row[nd])
            samples[(s,) + idx] = complex(float(row[nd + 1]), float(row[nd + 2]))
    psi = GridWaveFunction(grid, samples, time=float(meta["time"]))
    if abs(psi.norm() - 1.0) > norm_tol:
        raise ValueError(f"imported wave function norm {psi.norm()!r} is not 1")
    psi.check_guard(guard_limit)
    return psi


# ---------------------------------------------------------------------------
# analytic reference states


def _eval_on_grid(grid, fn):
    mesh = grid.mesh()
    return fn(*mesh)


@dataclass(frozen=True)
class FreeGaussian1D:
    """Free Gaussian packet, initial e^{-(x-c)^2/(4 d^2) + i k x} normalized."""

    center: float = 0.0
    width: float = 1.0
    momentum: float = 0.0
    mass: float = 1.0
    hbar: float = 1.0

    def _tau(self, t):
        return self.hbar * t / (2.0 * self.mass * self.width**2)

    def evaluate(self, grid, t=0.0):
        d, k, m, hb = self.width, self.momentum, self.mass, self.hbar
        tau = self._tau(t)
        drift = self.center + hb * k * t / m
        w = 1.0 + 1j * tau

        def fn(x):
            xs = x - drift
            phase = k * (x - self.center) - hb * k**2 * t / (2 * m)
            return (
                (2 * np.pi * d**2) ** -0.25
                * w**-0.5
                * np.exp(-(xs**2) / (4 * d**2 * w) + 1j * phase)
            )

        return GridWaveFunction(grid, _eval_on_grid(grid, fn)[None, ...], time=t)

    def sigma(self, t):
        return self.width * np.sqrt(1.0 + self._tau(t) ** 2)

    def density(self, x, t):
        drift = self.center + self.hbar * self.momentum * t / self.mass
        s = self.sigma(t)
        return np.exp(-((x - drift) ** 2) / (2 * s**2)) / np.sqrt(2 * np.pi * s**2)

    def velocity(self, x, t):
        tau = self._tau(t)
        drift = self.center + self.hbar * self.momentum * t / self.mass
        spread = (self.hbar / (2 * self.mass * self.width**2)) * tau / (1.0 + tau**2)
        return spread * (x - drift) + self.hbar * self.momentum / self.mass

    def trajectory(self, x0, t):
        """Exact guiding-equation path started at x0 at t=0."""
        tau = self._tau(t)
        rel = x0 - self.center
        return self.center + rel * np.sqrt(1 + tau**2) + self.hbar * self.momentum * t / self.mass


@dataclass(frozen=True)
class TwoParticleGaussian:
    """Coupled two-particle Gaussian with a frozen relative coordinate.

    Hamiltonian (hbar = m = 1): H = -(dxx + dyy)/2 + (x - y)^2 / 4.  The
    center of mass spreads freely while the relative part is stationary:

        Psi_t = pi^(-1/2) (1+it)^(-1/2)
                exp(-[(x-y)^2 + (x+y)^2/(1+it)]/4) exp(-it/2)

    and the configuration flow is X_t = a(t) X + b(t) Y (and symmetrically
    for Y) with a = (sqrt(1+t^2)+1)/2, b = (sqrt(1+t^2)-1)/2.
    """

    def hamiltonian(self):
        return {"masses": (1.0, 1.0), "potential_fn": lambda x, y: 0.25 * (x - y) ** 2}

    def evaluate(self, grid, t=0.0):
        def fn(x, y):
            w = 1.0 + 1j * t
            return (
                np.pi**-0.5
                * w**-0.5
                * np.exp(-((x - y) ** 2 + (x + y) ** 2 / w) / 4.0 - 0.5j * t)
            )

        return GridWaveFunction(grid, _eval_on_grid(grid, fn)[None, ...], time=t)

    def velocity(self, q, t):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        s = (t / 2.0) * (q[:, 0] + q[:, 1]) / (1.0 + t * t)
        return np.stack([s, s], axis=1)

    @staticmethod
    def a_coeff(t):
        return 0.5 * (np.sqrt(1.0 + t * t) + 1.0)

    @staticmethod
    def b_coeff(t):
        return 0.5 * (np.sqrt(1.0 + t * t) - 1.0)

    def trajectory(self, q0, t):
        x0, y0 = q0[..., 0], q0[..., 1]
        a, b = self.a_coeff(t), self.b_coeff(t)
        return np.stack([a * x0 + b * y0, b * x0 + a * y0], axis=-1)

    def conditional(self, x, y_value, t):
        """Closed-form conditional wave at the second coordinate = y_value."""
        w = 1.0 + 1j * t
        raw = np.exp(-((x - y_value) ** 2 + (x + y_value) ** 2 / w) / 4.0)
        return raw


@dataclass(frozen=True)
class Oscillator2D11:
    """Rotating (n=1, m=1) eigenstate of the isotropic 2-d oscillator.

    psi_t = (m w / (hbar sqrt(pi))) r exp(-m w r^2 / (2 hbar)) e^{i phi}
            e^{-i (3/2) w t}; |psi| is time independent and the particle
    circulates with angular velocity hbar / (m r^2).
    """

    mass: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0

    def evaluate(self, grid, t=0.0):
        mw = self.mass * self.omega / self.hbar

        def fn(x, y):
            r2 = x**2 + y**2
            return (
                (mw / np.sqrt(np.pi))
                * np.sqrt(mw)
                * np.sqrt(r2)
                * np.exp(-mw * r2 / 2.0)
                * np.exp(1j * np.arctan2(y, x))
                * np.exp(-1.5j * self.omega * t)
            )

        return GridWaveFunction(grid, _eval_on_grid(grid, fn)[None, ...], time=t)

    def hamiltonian(self, grid):
        x, y = grid.mesh()
        v = 0.5 * self.mass * self.omega**2 * (x**2 + y**2)
        return HamiltonianSpec(masses=(self.mass, self.mass), potential=v, hbar=self.hbar)

    def angular_velocity(self, r):
        return self.hbar / (self.mass * np.asarray(r) ** 2)

    def velocity(self, q, t=0.0):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        r2 = q[:, 0] ** 2 + q[:, 1] ** 2
        return (self.hbar / self.mass) * np.stack([-q[:, 1] / r2, q[:, 0] / r2], axis=1)

    def trajectory(self, q0, t):
        q0 = np.atleast_2d(np.asarray(q0, dtype=float))
        r2 = q0[:, 0] ** 2 + q0[:, 1] ** 2
        theta = self.hbar * t / (self.mass * r2)
        c, s = np.cos(theta), np.sin(theta)
        return np.stack([c * q0[:, 0] - s * q0[:, 1], s * q0[:, 0] + c * q0[:, 1]], axis=1)

    def radial_density(self, r):
        mw = self.mass * self.omega / self.hbar
        return mw**2 * r**2 * np.exp(-mw * r**2) / np.pi


@dataclass(frozen=True)
class SternGerlachPacket:
    """Gaussian packet under the linear spin-z coupling -(b + a z) sigma_z.

    ``sign`` selects the spin component: the effective 1-d potential is
    V(z) = -sign (b + a z), a constant force F = sign * a.  The closed form
    comes from the exact propagator of linear-potential Hamiltonians.
    """

    sign: int
    gradient: float
    offset: float = 0.0
    width: float = 1.0
    mass: float = 1.0
    hbar: float = 1.0

    def force(self):
        return self.sign * self.gradient

    def evaluate_axis(self, z, t):
        d, m, hb = self.width, self.mass, self.hbar
        if t == 0.0:
            return (2 * np.pi * d**2) ** -0.25 * np.exp(-(z**2) / (4 * d**2))
        f = self.force()
        alpha = 1.0 / (4 * d**2) - 1j * m / (2 * hb * t)
        beta = -1j * m * z / (hb * t) + 1j * f * t / (2 * hb)
        const = (
            (1j * m / (2 * hb * t)) * z**2
            + 1j * f * t * z / (2 * hb)
            + (1j / hb) * (self.sign * self.offset * t - f**2 * t**3 / (24 * m))
        )
        pref = np.sqrt(m / (2j * np.pi * hb * t)) * (2 * np.pi * d**2) ** -0.25
        return pref * np.sqrt(np.pi / alpha) * np.exp(beta**2 / (4 * alpha) + const)

    def evaluate(self, grid, t=0.0):
        z = grid.coordinates(0)
        return GridWaveFunction(grid, self.evaluate_axis(z, t)[None, ...], time=t)

    def mean(self, t):
        return self.force() * t**2 / (2.0 * self.mass)

    def sigma(self, t):
        d = self.width
        return d * np.sqrt(1.0 + (self.hbar * t / (2.0 * self.mass * d**2)) ** 2)

    def density(self, z, t):
        s = self.sigma(t)
        return np.exp(-((z - self.mean(t)) ** 2) / (2 * s**2)) / np.sqrt(2 * np.pi * s**2)


def harmonic_eigenfunction(n, x, mass=1.0, omega=1.0, hbar=1.0):
    """Real n-th eigenfunction of the 1-d harmonic oscillator."""
    from math import factorial

    from numpy.polynomial.hermite import hermval

    xi = np.sqrt(mass * omega / hbar) * np.asarray(x, dtype=float)
    coeffs = np.zeros(n + 1)
    coeffs[n] = 1.0
    norm = (mass * omega / (np.pi * hbar)) ** 0.25 / np.sqrt(2.0**n * float(factorial(n)))
    return norm * hermval(xi, coeffs) * np.exp(-(xi**2) / 2.0)


@dataclass(frozen=True)
class TrapEigenstateSum:
    """Superposition sum c_n phi_n e^{-i E_n t / hbar} in a harmonic trap."""

    amplitudes: tuple
    mass: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0

    def evaluate_axis(self, x, t):
        out = np.zeros_like(np.asarray(x, dtype=complex))
        for n, c in enumerate(self.amplitudes):
            if c == 0:
                continue
            e_n = self.hbar * self.omega * (n + 0.5)
            out = out + c * harmonic_eigenfunction(n, x, self.mass, self.omega, self.hbar) * np.exp(
                -1j * e_n * t / self.hbar
            )
        return out

    def evaluate(self, grid, t=0.0):
        x = grid.coordinates(0)
        return GridWaveFunction(grid, self.evaluate_axis(x, t)[None, ...], time=t)

    def density(self, x, t):
        return np.abs(self.evaluate_axis(x, t)) ** 2

    def hamiltonian(self, grid):
        x = grid.coordinates(0)
        v = 0.5 * self.mass * self.omega**2 * x**2
        return HamiltonianSpec(masses=(self.mass,), potential=v, hbar=self.hbar)


@dataclass(frozen=True)
class CoherentState1D:
    """Displaced harmonic-trap ground state (period 2 pi / omega)."""

    displacement: float
    mass: float = 1.0
    omega: float = 1.0
    hbar: float = 1.0

    def evaluate(self, grid, t=0.0):
        d2 = self.hbar / (2 * self.mass * self.omega)
        xc = self.displacement * np.cos(self.omega * t)
        pc = -self.mass * self.omega * self.displacement * np.sin(self.omega * t)
        x = grid.coordinates(0)
        # standard coherent-state closed form up to a global phase
        phase = pc * (x - xc / 2.0) / self.hbar - self.omega * t / 2.0
        psi = (2 * np.pi * d2) ** -0.25 * np.exp(-((x - xc) ** 2) / (4 * d2) + 1j * phase)
        return GridWaveFunction(grid, psi[None, ...], time=t)

    def hamiltonian(self, grid):
        x = grid.coordinates(0)
        v = 0.5 * self.mass * self.omega**2 * x**2
        return HamiltonianSpec(masses=(self.mass,), potential=v, hbar=self.hbar)
