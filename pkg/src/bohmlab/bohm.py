"""Guiding-equation machinery.

The velocity field is v_k = (hbar / m_k) Im[(Psi, grad_k Psi) / (Psi, Psi)]
with spinor inner products.  On grids the two bilinears Im(Psi† grad Psi)
and Psi† Psi are formed spectrally at every field snapshot, interpolated
with periodic cubic splines in space and linearly in time, and combined at
the evaluation point.  Trajectories are integrated with an adaptive
embedded Runge-Kutta (Cash-Karp 4/5) scheme, batched over ensemble
members; steps that run into a node shrink 4x up to 20 times and then
abort, recording the member status.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import map_coordinates, spline_filter

from .streams import stream
from .wavefield import GridWaveFunction, evolve, evolve_snapshots, spectral_gradient

__all__ = [
    "Ensemble",
    "NearNodeError",
    "SnapshotField",
    "AnalyticVelocityField",
    "Trajectory",
    "conditional_wavefunction",
    "equivariance_check",
    "integrate",
    "propagate_ensemble",
    "sample_equilibrium",
    "tv_distance",
    "velocity",
]

NODE_FLOOR_REL = 1e-12
MAX_NODE_SHRINKS = 20

# Cash-Karp embedded Runge-Kutta tableau
_CK_C = np.array([0.0, 1 / 5, 3 / 10, 3 / 5, 1.0, 7 / 8])
_CK_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [3 / 10, -9 / 10, 6 / 5],
    [-11 / 54, 5 / 2, -70 / 27, 35 / 27],
    [1631 / 55296, 175 / 512, 575 / 13824, 44275 / 110592, 253 / 4096],
]
_CK_B5 = np.array([37 / 378, 0.0, 250 / 621, 125 / 594, 0.0, 512 / 1771])
_CK_B4 = np.array(
    [2825 / 27648, 0.0, 18575 / 48384, 13525 / 55296, 277 / 14336, 1 / 4]
)


class NearNodeError(RuntimeError):
    """Velocity requested inside the node floor."""


@dataclass(frozen=True)
class Trajectory:
    """Accepted integration steps of one configuration path."""

    times: np.ndarray
    points: np.ndarray
    status: str  # "completed" | "aborted-near-node"

    @property
    def final(self):
        return self.points[-1]


@dataclass(frozen=True)
class Ensemble:
    """Quantum-equilibrium sample of configurations."""

    seed: int
    members: np.ndarray
    source: str = ""

    @property
    def n(self):
        return self.members.shape[0]


def _bilinears(psi):
    """(Im(Psi† grad Psi), Psi† Psi) on the grid."""
    grads = spectral_gradient(psi)
    rho = psi.density()
    imn = np.empty((psi.grid.ndim,) + psi.grid.shape)
    for ax in range(psi.grid.ndim):
        imn[ax] = np.imag(np.sum(np.conjugate(psi.samples) * grads[ax], axis=0))
    return imn, rho


def _bspline3_weights(u):
    """Cubic B-spline kernel weights for fractional offsets u in [0, 1).

    Returns shape (4, len(u)) for stencil points floor(x)-1 .. floor(x)+2.
    """
    v = 1.0 - u
    w0 = v**3 / 6.0
    w1 = 2.0 / 3.0 - u**2 + 0.5 * u**3
    w2 = 2.0 / 3.0 - v**2 + 0.5 * v**3
    w3 = u**3 / 6.0
    return np.stack([w0, w1, w2, w3])


class SnapshotField:
    """Velocity field assembled from wave-function snapshots.

    Snapshots arrive from an iterator of GridWaveFunction objects at
    strictly increasing times.  With ``keep_all`` the whole history stays
    addressable (needed for backward integration); otherwise old snapshots
    can be trimmed once every ensemble member has passed them.

    Per snapshot the density and the guiding bilinears are prefiltered with
    periodic cubic splines along the grid axes and stacked, so evaluation is
    a pure gather: cubic spline in space, linear between snapshots in time.
    """

    _GROW = 64

    def __init__(self, grid, masses, hbar, source, keep_all=True):
        self.grid = grid
        self.masses = np.asarray(masses, dtype=float)
        self.hbar = float(hbar)
        self._source = iter(source)
        self.keep_all = keep_all
        nch = 1 + grid.ndim  # channel 0: rho, channels 1..: Im(Psi† grad Psi)
        self._data = np.empty((self._GROW, nch) + grid.shape)
        self._times = np.empty(self._GROW)
        self._start = 0
        self._used = 0
        self.rho_peak = 0.0
        self._pull()
        self._pull()

    @property
    def times(self):
        return self._times[self._start:self._used]

    @classmethod
    def from_evolution(cls, psi0, ham, dt, steps, keep_all=True, guard_every=200):
        """Evolve with the split-step solver, snapshot every solver step."""
        gen = evolve_snapshots(psi0, ham, dt, steps, guard_every=guard_every)
        return cls(psi0.grid, ham.masses, ham.hbar, gen, keep_all=keep_all)

    @classmethod
    def from_states(cls, states, masses, hbar=1.0, keep_all=True):
        """Wrap a list/iterator of precomputed GridWaveFunction snapshots."""
        states = list(states) if keep_all else iter(states)
        if isinstance(states, list):
            grid = states[0].grid
            return cls(grid, masses, hbar, iter(states), keep_all=True)
        first = next(states)

        def gen():
            yield first
            yield from states

        return cls(first.grid, masses, hbar, gen(), keep_all=keep_all)

    @classmethod
    def from_analytic(cls, state, grid, times, masses, hbar=1.0, keep_all=True):
        def gen():
            for t in times:
                yield state.evaluate(grid, t)

        return cls(grid, masses, hbar, gen(), keep_all=keep_all)

    def _pull(self):
        try:
            psi = next(self._source)
        except StopIteration:
            return False
        if self._used > self._start and psi.time <= self._times[self._used - 1]:
            raise ValueError("snapshots must arrive at strictly increasing times")
        imn, rho = _bilinears(psi)
        self.rho_peak = max(self.rho_peak, float(rho.max()))
        if self._used == self._data.shape[0]:
            grow = self._data.shape[0] * 2
            data = np.empty((grow,) + self._data.shape[1:])
            times = np.empty(grow)
            keep = slice(self._start, self._used)
            n_keep = self._used - self._start
            data[:n_keep] = self._data[keep]
            times[:n_keep] = self._times[keep]
            self._data, self._times = data, times
            self._used = n_keep
            self._start = 0
        k = self._used
        self._data[k, 0] = spline_filter(rho, order=3, mode="grid-wrap")
        for ax in range(self.grid.ndim):
            self._data[k, 1 + ax] = spline_filter(imn[ax], order=3, mode="grid-wrap")
        self._times[k] = float(psi.time)
        self._used += 1
        return True

    def ensure_time(self, t):
        while self._times[self._used - 1] < t - 1e-12:
            if not self._pull():
                raise ValueError(
                    f"field history ends at t={self._times[self._used - 1]} "
                    f"before requested t={t}"
                )

    def trim_before(self, t):
        if self.keep_all:
            return
        while self._used - self._start > 2 and self._times[self._start + 1] < t:
            self._start += 1

    @property
    def t_min(self):
        return float(self._times[self._start])

    @property
    def t_max(self):
        return float(self._times[self._used - 1])

    def _gather(self, snap, frac):
        """Evaluate all channels of the given snapshots at fractional coords.

        ``snap`` (npts,) are absolute snapshot rows; ``frac`` is (npts, ndim).
        Returns (npts, nch).
        """
        base = np.floor(frac).astype(np.int64)
        u = frac - base
        if self.grid.ndim == 1:
            n = self.grid.shape[0]
            w = _bspline3_weights(u[:, 0])  # (4, npts)
            idx = (base[:, 0][None, :] - 1 + np.arange(4)[:, None]) % n  # (4, npts)
            vals = self._data[snap[None, :], :, idx]  # (4, npts, nch)
            return np.einsum("kp,kpc->pc", w, vals)
        nx, ny = self.grid.shape
        wx = _bspline3_weights(u[:, 0])
        wy = _bspline3_weights(u[:, 1])
        ix = (base[:, 0][None, :] - 1 + np.arange(4)[:, None]) % nx  # (4, npts)
        jy = (base[:, 1][None, :] - 1 + np.arange(4)[:, None]) % ny
        vals = self._data[
            snap[None, None, :], :, ix[:, None, :], jy[None, :, :]
        ]  # (4, 4, npts, nch)
        return np.einsum("kp,lp,klpc->pc", wx, wy, vals)

    def velocity_density(self, ts, q):
        """Velocities and relative densities at per-point times ``ts``.

        Returns (v, rho_rel) with v of shape (npts, ndim); rho_rel is the
        interpolated density divided by the historical peak.  Velocities at
        points below the node floor are set to zero; callers decide policy.
        """
        q = np.atleast_2d(np.asarray(q, dtype=float))
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (q.shape[0],))
        self.ensure_time(float(ts.max()))
        times = self._times[self._start:self._used]
        hi = np.searchsorted(times, ts, side="left")
        hi = np.clip(hi, 1, len(times) - 1)
        lo = hi - 1
        w = (ts - times[lo]) / (times[hi] - times[lo])
        w = np.clip(w, 0.0, 1.0)
        frac = self.grid.to_fractional(q)
        vals_lo = self._gather(lo + self._start, frac)
        vals_hi = self._gather(hi + self._start, frac)
        vals = vals_lo * (1.0 - w)[:, None] + vals_hi * w[:, None]
        rho = vals[:, 0]
        rel = rho / self.rho_peak
        safe = np.maximum(rho, NODE_FLOOR_REL * self.rho_peak)
        v = (self.hbar / self.masses)[None, :] * vals[:, 1:] / safe[:, None]
        bad = rel < NODE_FLOOR_REL
        if np.any(bad):
            v[bad] = 0.0
        return v, rel


class AnalyticVelocityField:
    """Adapter for states carrying closed-form velocity (and density).

    ``state`` must provide velocity(q, t); ``density_fn(q, t)`` is optional
    and only used for node detection (defaults to no nodes).
    """

    def __init__(self, state, t_max=np.inf, density_fn=None):
        self.state = state
        self.t_max = t_max
        self.t_min = -np.inf
        self._density_fn = density_fn

    def ensure_time(self, t):
        if t > self.t_max:
            raise ValueError("requested time beyond field validity")

    def trim_before(self, t):
        pass

    def velocity_density(self, ts, q):
        q = np.atleast_2d(np.asarray(q, dtype=float))
        ts = np.broadcast_to(np.asarray(ts, dtype=float), (q.shape[0],))
        v = self.state.velocity(q, ts)
        if self._density_fn is None:
            rho = np.ones(q.shape[0])
        else:
            rho = self._density_fn(q, ts)
        return v, rho


def velocity(psi, q, ham):
    """One-off velocity evaluation on a static wave function.

    Raises NearNodeError when the density at q is below the node floor.
    """
    frozen = GridWaveFunction(psi.grid, psi.samples, psi.time + 1.0)
    fieldobj = SnapshotField.from_states([psi, frozen], ham.masses, ham.hbar)
    v, rho = fieldobj.velocity_density(psi.time, q)
    if np.any(rho < NODE_FLOOR_REL):
        raise NearNodeError("density below node floor at requested point")
    return v[0] if np.asarray(q).ndim == 1 else v


def _advance_batch(fieldobj, q0, t0, t1, tol, record=None, max_dt=None):
    """Advance all rows of q0 from t0 to t1 with per-member adaptive steps.

    Returns (positions, status, node_hits) where status is 0 for completed
    members and 1 for aborted-near-node.  ``record`` (single-member use)
    collects (t, q) at every accepted step.
    """
    q = np.atleast_2d(np.asarray(q0, dtype=float)).copy()
    n, dim = q.shape
    direction = 1.0 if t1 >= t0 else -1.0
    span = abs(t1 - t0)
    if span == 0:
        return q, np.zeros(n, dtype=int), 0
    t = np.full(n, float(t0))
    dt = np.full(n, direction * span / 8.0)
    if max_dt is not None:
        dt = np.clip(dt, -max_dt, max_dt)
    active = np.ones(n, dtype=bool)
    status = np.zeros(n, dtype=int)
    shrinks = np.zeros(n, dtype=int)
    node_hits = 0
    min_dt = span * 1e-14
    while np.any(active):
        idx = np.flatnonzero(active)
        # clamp the proposed step to the end time
        remaining = t1 - t[idx]
        step = dt[idx].copy()
        clip_mask = np.abs(step) > np.abs(remaining)
        step[clip_mask] = remaining[clip_mask]
        ks = np.empty((6, len(idx), dim))
        node_mask = np.zeros(len(idx), dtype=bool)
        for s in range(6):
            ts = t[idx] + _CK_C[s] * step
            ys = q[idx].copy()
            for j in range(s):
                ys += (step * _CK_A[s][j])[:, None] * ks[j]
            v, rho = fieldobj.velocity_density(ts, ys)
            node_mask |= rho < NODE_FLOOR_REL
            ks[s] = v
        y5 = q[idx] + step[:, None] * np.einsum("s,snd->nd", _CK_B5, ks)
        y4 = q[idx] + step[:, None] * np.einsum("s,snd->nd", _CK_B4, ks)
        err = np.max(np.abs(y5 - y4), axis=1)
        accept = (err <= tol) & ~node_mask
        # node handling: shrink 4x, abort after the shrink budget
        if np.any(node_mask):
            node_hits += int(np.sum(node_mask))
            gi = idx[node_mask]
            shrinks[gi] += 1
            dt[gi] = dt[gi] / 4.0
            aborted = gi[shrinks[gi] > MAX_NODE_SHRINKS]
            if len(aborted):
                status[aborted] = 1
                active[aborted] = False
        # ordinary error control for non-node members
        adapt = ~node_mask
        if np.any(adapt):
            gi = idx[adapt]
            e = np.maximum(err[adapt], 1e-300)
            factor = np.clip(0.9 * (tol / e) ** 0.2, 0.2, 5.0)
            newdt = dt[gi] * factor
            if max_dt is not None:
                newdt = np.clip(newdt, -max_dt, max_dt)
            tiny = np.abs(newdt) < min_dt
            newdt[tiny] = direction * min_dt
            dt[gi] = newdt
        gi = idx[accept]
        if len(gi):
            shrinks[gi] = 0
            q[gi] = y5[accept]
            t[gi] = t[gi] + step[accept]
            if record is not None and n == 1 and accept[0]:
                record.append((t[0], q[0].copy()))
            done = gi[np.abs(t1 - t[gi]) <= 1e-12 * max(span, 1.0)]
            if len(done):
                active[done] = False
        fieldobj.trim_before(float(t[active].min()) if np.any(active) else t1)
    return q, status, node_hits


def integrate(fieldobj, q0, t_span, tol=1e-8):
    """Integrate a single trajectory; returns a Trajectory with all steps."""
    t0, t1 = float(t_span[0]), float(t_span[1])
    record = [(t0, np.asarray(q0, dtype=float).copy())]
    qf, status, _ = _advance_batch(fieldobj, np.atleast_2d(q0), t0, t1, tol, record=record)
    times = np.array([r[0] for r in record])
    points = np.array([r[1] for r in record])
    return Trajectory(
        times=times,
        points=points,
        status="completed" if status[0] == 0 else "aborted-near-node",
    )


def propagate_ensemble(fieldobj, positions, t0, t1, tol=1e-8, threads=0, max_dt=None):
    """Advance every ensemble member from t0 to t1.

    Returns (final_positions, aborted_mask).  ``threads`` > 1 splits the
    batch into contiguous chunks handled by a thread pool; results are
    identical for every thread count because members are independent.
    """
    positions = np.atleast_2d(np.asarray(positions, dtype=float))
    if threads and threads > 1 and getattr(fieldobj, "keep_all", True):
        from concurrent.futures import ThreadPoolExecutor

        if hasattr(fieldobj, "ensure_time"):
            fieldobj.ensure_time(max(t0, t1))
        chunks = np.array_split(np.arange(positions.shape[0]), threads)
        out = np.empty_like(positions)
        aborted = np.zeros(positions.shape[0], dtype=bool)

        def work(ix):
            q, st, _ = _advance_batch(fieldobj, positions[ix], t0, t1, tol, max_dt=max_dt)
            return ix, q, st

        with ThreadPoolExecutor(max_workers=threads) as pool:
            for ix, q, st in pool.map(work, [c for c in chunks if len(c)]):
                out[ix] = q
                aborted[ix] = st == 1
        return out, aborted
    q, st, _ = _advance_batch(fieldobj, positions, t0, t1, tol, max_dt=max_dt)
    return q, st == 1


def sample_equilibrium(psi, n, seed):
    """Draw n configurations from |Psi|^2 by inverse CDF over grid cells.

    Within-cell positions get uniform jitter; the draw is deterministic for
    a given seed (counter-based stream).
    """
    if abs(psi.norm() - 1.0) > 1e-6:
        raise ValueError(f"wave function norm {psi.norm()!r} is not 1")
    rng = stream(seed)
    grid = psi.grid
    rho = psi.density().reshape(-1)
    weights = rho / rho.sum()
    cdf = np.cumsum(weights)
    cdf[-1] = 1.0
    u = rng.random(n)
    flat_idx = np.searchsorted(cdf, u, side="right")
    flat_idx = np.clip(flat_idx, 0, len(weights) - 1)
    idx = np.unravel_index(flat_idx, grid.shape)
    members = np.empty((n, grid.ndim))
    for ax in range(grid.ndim):
        lo, hi = grid.extents[ax]
        dx = grid.spacing(ax)
        # grid points are cell centers: jitter symmetric about them, with
        # periodic wrap keeping configurations inside the extent
        members[:, ax] = lo + ((idx[ax] + rng.random(n) - 0.5) * dx) % (hi - lo)
    return Ensemble(seed=int(seed), members=members, source=f"psi(t={psi.time})")


def _aggregate_bins(rho, axis, bins):
    """Bin cell-centred density values along one axis.

    Grid points sit at cell centres, so bin edges land exactly on the
    centres of every ``per``-th cell; those boundary cells contribute half
    their mass to each neighbouring bin (periodic wrap at the ends).
    """
    n = rho.shape[axis]
    per = n // bins
    moved = np.moveaxis(rho, axis, 0)
    out = np.empty((bins,) + moved.shape[1:])
    for b in range(bins):
        lo_i = b * per
        hi_i = ((b + 1) * per) % n
        out[b] = 0.5 * moved[lo_i] + moved[lo_i + 1:lo_i + per].sum(axis=0) + 0.5 * moved[hi_i]
    return np.moveaxis(out, 0, axis)


def tv_distance(samples, reference_density, grid, bins=64, axis=None):
    """Total-variation distance between binned samples and a grid density.

    ``reference_density`` is a density array on ``grid`` (cell-centre
    values); it is aggregated into ``bins`` equal bins per axis.  ``axis``
    restricts the comparison to one coordinate (marginal).
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    rho = np.asarray(reference_density, dtype=float)
    if axis is not None:
        keep = axis
        other = [a for a in range(grid.ndim) if a != keep]
        rho = rho.sum(axis=tuple(other))
        samples = samples[:, [keep]]
        shape = (grid.shape[keep],)
        extents = [grid.extents[keep]]
    else:
        shape = grid.shape
        extents = list(grid.extents)
    rho = rho / rho.sum()
    nd = len(shape)
    per = [shape[a] // bins for a in range(nd)]
    if any(p == 0 or shape[a] % bins for a, p in enumerate(per)):
        raise ValueError("grid points per axis must be a multiple of the bin count")
    truth = rho
    for a in range(nd):
        truth = _aggregate_bins(truth, a, bins)
    truth = truth / truth.sum()
    edges = [np.linspace(lo, hi, bins + 1) for lo, hi in extents]
    emp, _ = np.histogramdd(samples, bins=edges)
    emp = emp / emp.sum()
    return 0.5 * float(np.abs(emp - truth).sum())


def equivariance_check(psi0, ham, t, n, seed, dt=None, bins=64, tol=1e-6,
                       oracle_density=None, threads=0, return_positions=False):
    """Transport an equilibrium ensemble to time t and compare with |Psi_t|^2.

    Returns a report dict with the total-variation distance, the abort
    count and a flag when aborts exceed 0.1 percent of n.  The reference
    density defaults to the solver's |Psi_t|^2; an analytic density array
    on the same grid may be supplied instead.
    """
    ens = sample_equilibrium(psi0, n, seed)
    if t == 0:
        final = ens.members
        aborted = np.zeros(n, dtype=bool)
        rho_t = psi0.density() if oracle_density is None else oracle_density
    else:
        if dt is None:
            raise ValueError("dt (solver step) is required for t > 0")
        steps = int(round(t / dt))
        fieldobj = SnapshotField.from_evolution(psi0, ham, dt, steps)
        final, aborted = propagate_ensemble(
            fieldobj, ens.members, 0.0, steps * dt, tol=tol, threads=threads
        )
        if oracle_density is None:
            last = evolve(psi0, ham, dt, steps)
            rho_t = last.density()
        else:
            rho_t = oracle_density
    ok = ~aborted
    tv = tv_distance(final[ok], rho_t, psi0.grid, bins=bins)
    report = {
        "seed": int(seed),
        "n": int(n),
        "t": float(t),
        "tv_distance": float(tv),
        "aborted": int(aborted.sum()),
        "flagged": bool(aborted.sum() > 0.001 * n),
    }
    if return_positions:
        report["initial"] = ens.members
        report["final"] = final
        report["aborted_mask"] = aborted
        report["oracle_density"] = rho_t
    return report


def conditional_wavefunction(psi, y_value, support_rel=1e-8, rank_rel=1e-8):
    """Section Psi(x, Y) of a two-axis field, normalized, with effectiveness flag.

    The section is interpolated along the second axis with periodic cubic
    splines.  The flag is true when Y lies in a connected component of the
    y-support (marginal density above ``support_rel`` of its peak) on which
    the field factorizes: the x-y matrix restricted to the component has
    relative second singular mass below ``rank_rel``.
    """
    grid = psi.grid
    if grid.ndim != 2:
        raise ValueError("conditional wave function requires a two-axis field")
    ny = grid.shape[1]
    lo, _ = grid.extents[1]
    frac = (float(y_value) - lo) / grid.spacing(1)
    nx = grid.shape[0]
    section = np.empty((psi.spin_dim, nx), dtype=complex)
    coords = np.stack([np.arange(nx, dtype=float), np.full(nx, frac)])
    for s in range(psi.spin_dim):
        re = map_coordinates(psi.samples[s].real, coords, order=3, mode="grid-wrap")
        im = map_coordinates(psi.samples[s].imag, coords, order=3, mode="grid-wrap")
        section[s] = re + 1j * im
    sec_norm = np.sqrt(np.sum(np.abs(section) ** 2) * grid.spacing(0))
    if sec_norm < 1e-12:
        raise ValueError(f"degenerate section: norm {sec_norm:.3e} at y={y_value}")
    from .wavefield import GridSpec

    out_grid = GridSpec((grid.extents[0],), (grid.shape[0],))
    out = GridWaveFunction(out_grid, section / sec_norm, time=psi.time)
    # effectiveness: find the y-support component containing y_value
    marg = psi.density().sum(axis=0) * grid.spacing(0)
    above = marg > support_rel * marg.max()
    j = int(np.clip(round(frac), 0, ny - 1))
    effective = False
    if above[j]:
        a = j
        while a > 0 and above[a - 1]:
            a -= 1
        b = j
        while b < ny - 1 and above[b + 1]:
            b += 1
        block = psi.samples[:, :, a:b + 1].reshape(psi.spin_dim * nx, b - a + 1)
        svals = np.linalg.svd(block, compute_uv=False)
        total = float(np.sum(svals**2))
        effective = bool(len(svals) < 2 or svals[1] ** 2 / total <= rank_rel)
    return out, effective
