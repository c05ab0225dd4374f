"""Measurement calculus on finite-dimensional Hilbert spaces.

PVMs, POVMs, and the hierarchy of labelled state-transformer collections
(ideal / normal / standard / general strong measurements and strong
experiments), together with sequential composition, recalibration,
noisy-measurement POVMs, constructed discrete experiments, von Neumann
pointer models, density matrices and instruments.

Labels are real vectors (tuples); scalar labels are stored as length-1
tuples.  Distinct outcomes may carry equal labels (non-invertible
calibration); grouping by label happens when a PVM/POVM is formed.
"""

from dataclasses import dataclass, field

import json
import numpy as np
from scipy.special import ndtr

from .hilbert import (
    DimensionError,
    ValidationError,
    dagger,
    partial_trace,
    projector,
    require_hermitian,
    require_normalized,
    spectral_decompose,
    tensor_product,
)

__all__ = [
    "MeasurementError",
    "Pvm",
    "Povm",
    "StrongMeasurement",
    "DiscreteExperimentSpec",
    "VonNeumannExperiment",
    "Instrument",
    "approximate_povm",
    "born_probability",
    "build_discrete_experiment",
    "check_density_matrix",
    "density_update",
    "ensemble_density",
    "ideal_measurement",
    "instrument_of",
    "joint_pvm",
    "make_label",
    "measurement_from_json",
    "measurement_to_json",
    "normal_measurement",
    "povm_of",
    "pvm_of_operator",
    "recalibrate",
    "sequential_measurement",
    "sequential_probability",
    "shift_experiment",
    "standard_measurement",
    "strong_measure",
    "von_neumann_experiment",
    "weak_transformers",
]


class MeasurementError(RuntimeError):
    """A sampling or update step hit an impossible outcome."""


def make_label(value):
    """Normalize a label to a tuple of floats rounded to 12 significant digits."""
    if np.isscalar(value):
        value = (value,)
    return tuple(float(f"{float(v):.12g}") for v in value)


def _check_effect_positive(o, tol=1e-10):
    o = require_hermitian(o, tol=tol)
    w = np.linalg.eigvalsh(o)
    if w.min() < -tol:
        raise ValidationError(f"effect has negative eigenvalue {w.min():.3e}")
    return o


def _check_projection(p, tol=1e-10):
    p = require_hermitian(p, tol=tol)
    if np.max(np.abs(p @ p - p)) > tol:
        raise ValidationError("operator is not idempotent within tolerance")
    return p


def _check_closure(mats, tol=1e-10, what="effects"):
    total = sum(mats)
    dev = np.max(np.abs(total - np.eye(total.shape[0])))
    if dev > tol:
        raise ValidationError(f"{what} do not sum to identity (max deviation {dev:.3e})")


@dataclass(frozen=True)
class Pvm:
    """Projection-valued measure with distinct vector labels."""

    labels: tuple
    projectors: tuple
    atol: float = 1e-10

    def __post_init__(self):
        if len(self.labels) != len(set(self.labels)):
            raise ValidationError("PVM labels must be distinct")
        for p in self.projectors:
            _check_projection(p, tol=self.atol)
        for i, p in enumerate(self.projectors):
            for q in self.projectors[i + 1:]:
                if np.max(np.abs(p @ q)) > self.atol:
                    raise ValidationError("PVM projectors are not mutually orthogonal")
        _check_closure(self.projectors, tol=self.atol, what="projectors")

    @property
    def dim(self):
        return self.projectors[0].shape[0]

    @property
    def outcomes(self):
        return list(zip(self.labels, self.projectors))

    def effect(self, predicate):
        return sum(
            (p for lab, p in zip(self.labels, self.projectors) if predicate(lab)),
            start=np.zeros((self.dim, self.dim), dtype=complex),
        )


@dataclass(frozen=True)
class Povm:
    """Positive-operator-valued measure; labels distinct, effects sum to I.

    ``atol`` is the validation tolerance: 1e-10 for algebraically built
    POVMs, looser (1e-6) for quadrature-extracted ones.
    """

    labels: tuple
    effects: tuple
    atol: float = 1e-10

    def __post_init__(self):
        if len(self.labels) != len(set(self.labels)):
            raise ValidationError("POVM labels must be distinct")
        for o in self.effects:
            _check_effect_positive(o, tol=self.atol)
        _check_closure(self.effects, tol=self.atol)

    @property
    def dim(self):
        return self.effects[0].shape[0]

    @property
    def outcomes(self):
        return list(zip(self.labels, self.effects))

    def effect(self, predicate):
        return sum(
            (o for lab, o in zip(self.labels, self.effects) if predicate(lab)),
            start=np.zeros((self.dim, self.dim), dtype=complex),
        )

    def is_projective(self, tol=1e-10):
        return all(np.max(np.abs(o @ o - o)) <= tol for o in self.effects)


@dataclass(frozen=True)
class StrongMeasurement:
    """Labelled transformers {(lambda_a, R_a)}.

    mode "strong": each R_a†R_a is a projection (strong formal measurement).
    mode "experiment": only closure sum R_a†R_a = I is required (strong
    formal experiment).  Labels need not be distinct in either mode.
    """

    labels: tuple
    transformers: tuple
    mode: str = "strong"

    def __post_init__(self):
        if self.mode not in ("strong", "experiment"):
            raise ValidationError(f"unknown mode {self.mode!r}")
        if len(self.labels) != len(self.transformers):
            raise ValidationError("one transformer per label required")
        effects = [dagger(r) @ r for r in self.transformers]
        _check_closure(effects, what="R†R terms")
        if self.mode == "strong":
            for e in effects:
                _check_projection(e)

    @property
    def dim(self):
        return self.transformers[0].shape[0]

    @property
    def n_outcomes(self):
        return len(self.labels)

    def effects(self):
        return [dagger(r) @ r for r in self.transformers]

    def probabilities(self, psi):
        psi = require_normalized(psi)
        return np.array([float(np.linalg.norm(r @ psi) ** 2) for r in self.transformers])

    def outcomes_for_label(self, label):
        label = make_label(label)
        return [i for i, lab in enumerate(self.labels) if lab == label]


def _as_labels(values):
    return tuple(make_label(v) for v in values)


def pvm_of_operator(a, degeneracy_tol=None):
    """Spectral PVM of a Hermitian operator (ascending distinct eigenvalues)."""
    dec = spectral_decompose(a, degeneracy_tol=degeneracy_tol)
    return Pvm(_as_labels(dec.eigenvalues), tuple(dec.projectors))


def _label_predicate(delta):
    if delta is None:
        return lambda lab: True
    if callable(delta):
        return lambda lab: bool(delta(lab if len(lab) > 1 else lab[0]))
    wanted = {make_label(v) for v in delta}
    return lambda lab: lab in wanted


def born_probability(m, psi, delta=None):
    """Probability that the result of ``m`` lies in the label set ``delta``.

    ``m`` may be a Pvm, Povm or StrongMeasurement; ``delta`` is a label
    predicate (callable on the label, scalar labels unwrapped), an iterable
    of labels, or None for the total probability (== 1).
    """
    psi = require_normalized(psi)
    if isinstance(m, StrongMeasurement):
        pairs = zip(m.labels, m.effects())
    else:
        pairs = m.outcomes
    pred = _label_predicate(delta)
    total = 0.0
    for lab, o in pairs:
        if pred(lab):
            total += float(np.real(np.vdot(psi, o @ psi)))
    return total


def ideal_measurement(a, degeneracy_tol=None):
    """Ideal measurement of A: R_a = P_a from the spectral PVM."""
    pvm = pvm_of_operator(a, degeneracy_tol=degeneracy_tol)
    return StrongMeasurement(pvm.labels, pvm.projectors, mode="strong")


def normal_measurement(a, rotations, degeneracy_tol=None):
    """Normal measurement of A: R_a = U_a P_a with U_a unitary on the eigenspace.

    ``rotations`` are full-dimension matrices, one per distinct eigenvalue,
    each required to act unitarily within the corresponding eigenspace.
    """
    pvm = pvm_of_operator(a, degeneracy_tol=degeneracy_tol)
    if len(rotations) != len(pvm.projectors):
        raise ValidationError(
            f"need {len(pvm.projectors)} rotations (one per eigenspace), got {len(rotations)}"
        )
    transformers = []
    for u, p in zip(rotations, pvm.projectors):
        u = np.asarray(u, dtype=complex)
        if u.shape != p.shape:
            raise ValidationError("rotation dimension does not match eigenspace block")
        r = u @ p
        if np.max(np.abs(dagger(r) @ r - p)) > 1e-10:
            raise ValidationError("rotation is not unitary on its eigenspace")
        if np.max(np.abs(p @ r - r)) > 1e-10:
            raise ValidationError("rotation does not leave its eigenspace invariant")
        transformers.append(r)
    return StrongMeasurement(pvm.labels, tuple(transformers), mode="strong")


def standard_measurement(pvm, isometries):
    """Standard measurement: R_a = T_a P_a with T_a isometric from range(P_a)."""
    if not isinstance(pvm, Pvm):
        raise ValidationError("first argument must be a Pvm")
    if len(isometries) != len(pvm.projectors):
        raise ValidationError("one isometry per PVM outcome required")
    transformers = []
    for t, p in zip(isometries, pvm.projectors):
        t = np.asarray(t, dtype=complex)
        r = t @ p
        if np.max(np.abs(dagger(r) @ r - p)) > 1e-10:
            raise ValidationError("map is not isometric on the outcome subspace")
        transformers.append(r)
    return StrongMeasurement(pvm.labels, tuple(transformers), mode="strong")


def strong_measure(m, psi, rng):
    """Sample one outcome: returns (label, post_state).

    Outcome a is drawn with p_a = |R_a psi|^2, the post state is
    R_a psi / |R_a psi|.  Deterministic given the generator state.
    """
    psi = require_normalized(psi)
    probs = m.probabilities(psi)
    total = probs.sum()
    if total < 1e-14:
        raise MeasurementError("all outcome probabilities vanish; inconsistent measurement")
    u = rng.random() * total
    idx = int(np.searchsorted(np.cumsum(probs), u, side="right"))
    idx = min(idx, len(probs) - 1)
    post = m.transformers[idx] @ psi
    norm = np.linalg.norm(post)
    if norm < 1e-12:
        raise MeasurementError("sampled an outcome with vanishing amplitude")
    return m.labels[idx], post / norm


def sequential_measurement(ms, evolutions=None):
    """Compose measurements performed in sequence into one strong experiment.

    Outcome labels are tuples of the per-step labels (concatenated as
    vectors); transformers are R^(n)(t_n) ... R^(1)(t_1) with
    R(t) = U_t^-1 R U_t.  The composite is an experiment (R†R need not be
    a projection).
    """
    if evolutions is None:
        evolutions = [None] * len(ms)
    if len(evolutions) != len(ms):
        raise DimensionError("one evolution operator per measurement required")
    dim = ms[0].dim
    for m in ms:
        if m.dim != dim:
            raise DimensionError("sequential measurements must share a dimension")
    rotated = []
    for m, u in zip(ms, evolutions):
        if u is None:
            rotated.append(list(zip(m.labels, m.transformers)))
        else:
            u = np.asarray(u, dtype=complex)
            rotated.append([(lab, dagger(u) @ r @ u) for lab, r in zip(m.labels, m.transformers)])
    labels = [()]
    chains = [np.eye(dim, dtype=complex)]
    for step in rotated:
        labels = [lab + lab_step for lab in labels for lab_step, _ in step]
        chains = [r @ c for c in chains for _, r in step]
    return StrongMeasurement(tuple(labels), tuple(chains), mode="experiment")


def sequential_probability(ms, evolutions, psi):
    """Joint outcome-tuple probabilities for a measurement sequence.

    Prob(a_1 .. a_n) = |R^(n)(t_n) ... R^(1)(t_1) psi|^2.  Identity
    evolutions may be passed as None.
    """
    comp = sequential_measurement(ms, evolutions)
    psi = require_normalized(psi)
    out = {}
    for lab, r in zip(comp.labels, comp.transformers):
        out[lab] = out.get(lab, 0.0) + float(np.linalg.norm(r @ psi) ** 2)
    return out


def recalibrate(m, f):
    """Relabel outcomes by f; transformers are untouched."""
    new_labels = []
    for lab in m.labels:
        arg = lab if len(lab) > 1 else lab[0]
        new_labels.append(make_label(f(arg)))
    return StrongMeasurement(tuple(new_labels), m.transformers, mode=m.mode)


def povm_of(m):
    """POVM induced by a strong measurement: O_a = R_a†R_a, grouped by label."""
    grouped = {}
    order = []
    for lab, r in zip(m.labels, m.transformers):
        if lab not in grouped:
            grouped[lab] = np.zeros((m.dim, m.dim), dtype=complex)
            order.append(lab)
        grouped[lab] = grouped[lab] + dagger(r) @ r
    return Povm(tuple(order), tuple(grouped[lab] for lab in order))


def approximate_povm(a, sigma, bin_edges):
    """POVM of a measurement of A blurred by independent Gaussian noise.

    O(bin) = integral over the bin of eta(lambda - A) d lambda with eta the
    centered normal density of width sigma; computed exactly in the
    eigenbasis via the normal CDF.  Bins must cover the spectrum +- 6 sigma.
    """
    if sigma <= 0:
        raise ValidationError("noise width must be positive")
    dec = spectral_decompose(a)
    edges = np.asarray(bin_edges, dtype=float)
    if edges.ndim != 1 or len(edges) < 2 or np.any(np.diff(edges) <= 0):
        raise ValidationError("bin edges must be increasing with at least one bin")
    lo, hi = min(dec.eigenvalues), max(dec.eigenvalues)
    if edges[0] > lo - 6 * sigma or edges[-1] < hi + 6 * sigma:
        raise ValidationError(
            f"bins [{edges[0]}, {edges[-1]}] do not cover spectrum [{lo}, {hi}] +- 6 sigma"
        )
    labels, effects = [], []
    dim = dec.dim
    nbins = len(edges) - 1
    for b, (left, right) in enumerate(zip(edges[:-1], edges[1:])):
        o = np.zeros((dim, dim), dtype=complex)
        for lam, p in zip(dec.eigenvalues, dec.projectors):
            # outermost bins absorb the (sub-1e-9) tails beyond the edges,
            # keeping the POVM closure exact
            hi = 1.0 if b == nbins - 1 else ndtr((right - lam) / sigma)
            lo = 0.0 if b == 0 else ndtr((left - lam) / sigma)
            o = o + (hi - lo) * p
        labels.append(make_label(0.5 * (left + right)))
        effects.append(o)
    return Povm(tuple(labels), tuple(effects))


def weak_transformers(a, sigma, grid):
    """Discretized weak-measurement transformers R_lambda = xi(lambda - A).

    xi is the quarter-power Gaussian, so R_lambda† R_lambda d lambda
    reproduces the Gaussian-noise POVM of ``approximate_povm``.  The grid
    spacing is absorbed into the transformers (R_i = xi(lambda_i - A)
    sqrt(dlambda)); closure must hold within 1e-6 or the grid is rejected.
    """
    if sigma <= 0:
        raise ValidationError("noise width must be positive")
    grid = np.asarray(grid, dtype=float)
    if grid.ndim != 1 or len(grid) < 2:
        raise ValidationError("grid must contain at least two points")
    dl = np.diff(grid)
    if np.any(dl <= 0) or np.max(np.abs(dl - dl[0])) > 1e-12 * abs(dl[0]):
        raise ValidationError("grid must be uniform and increasing")
    dl = dl[0]
    dec = spectral_decompose(a)
    lo, hi = min(dec.eigenvalues), max(dec.eigenvalues)
    if grid[0] > lo - 6 * sigma or grid[-1] < hi + 6 * sigma:
        raise ValidationError("grid does not cover spectrum +- 6 sigma")
    norm = (2 * np.pi) ** -0.25 / np.sqrt(sigma)
    dim = dec.dim
    # per-eigenvalue quadrature weights c_a = sum_i xi(lambda_i - lambda_a)^2 dl
    weights = {}
    for lam in dec.eigenvalues:
        weights[lam] = float(np.sum(norm**2 * np.exp(-((grid - lam) ** 2) / (2 * sigma**2))) * dl)
        if abs(weights[lam] - 1.0) > 1e-6:
            raise ValidationError(
                f"weak transformer closure residual {abs(weights[lam] - 1.0):.3e} exceeds 1e-6"
            )
    labels, transformers = [], []
    for lam_val in grid:
        r = np.zeros((dim, dim), dtype=complex)
        for lam, p in zip(dec.eigenvalues, dec.projectors):
            # dividing by sqrt(c_a) makes the discrete closure exact; the
            # correction commutes with A so effects stay functions of A
            amp = norm * np.exp(-((lam_val - lam) ** 2) / (4 * sigma**2)) / np.sqrt(weights[lam])
            r = r + amp * p
        labels.append(make_label(lam_val))
        transformers.append(r * np.sqrt(dl))
    return StrongMeasurement(tuple(labels), tuple(transformers), mode="experiment")


@dataclass(frozen=True)
class DiscreteExperimentSpec:
    """Concrete discrete experiment: composite unitary plus pointer states.

    The composite space is H_system (x) C^(k+1); pointer index 0 is the
    ready state and indices 1..k are the outcome pointer states.
    """

    system_dim: int
    ready_state: np.ndarray
    pointer_states: tuple
    unitary: np.ndarray
    calibration: tuple

    def __post_init__(self):
        for i, phi in enumerate(self.pointer_states):
            for phj in self.pointer_states[i + 1:]:
                if abs(np.vdot(phi, phj)) > 1e-10:
                    raise ValidationError("pointer states must be orthonormal")
            if abs(np.linalg.norm(phi) - 1.0) > 1e-10:
                raise ValidationError("pointer states must be normalized")
        u = np.asarray(self.unitary)
        dev = np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0])))
        if dev > 1e-10:
            raise ValidationError(f"composite evolution is not unitary ({dev:.3e})")

    @property
    def apparatus_dim(self):
        return len(self.ready_state)

    def apply(self, psi):
        """Final composite state U(psi (x) Phi_0)."""
        psi = require_normalized(psi)
        return self.unitary @ np.kron(psi, self.ready_state)

    def branch(self, final_state, outcome):
        """Project the final composite state onto pointer branch ``outcome``."""
        phi = self.pointer_states[outcome]
        m = final_state.reshape(self.system_dim, self.apparatus_dim)
        return m @ np.conjugate(phi)

    def outcome_probabilities(self, psi):
        final = self.apply(psi)
        return np.array(
            [float(np.linalg.norm(self.branch(final, k)) ** 2) for k in range(len(self.pointer_states))]
        )


def _complete_isometry(v, positions):
    """Build a unitary whose column at positions[i] is v[:, i].

    The remaining columns are filled with an orthonormal completion of
    range(v); which completion is immaterial (any extension defines a
    valid experiment).
    """
    n, m = v.shape
    u = np.zeros((n, n), dtype=complex)
    u[:, positions] = v
    filled = list(positions)
    free = [j for j in range(n) if j not in set(positions)]
    col_block = v.copy()
    k = 0
    for j in free:
        while True:
            if k < n:
                cand = np.eye(n, dtype=complex)[:, k]
                k += 1
            else:
                raise ValidationError("failed to complete isometry to a unitary")
            cand = cand - col_block @ (dagger(col_block) @ cand)
            norm = np.linalg.norm(cand)
            if norm > 1e-7:
                newcol = cand / norm
                u[:, j] = newcol
                col_block = np.concatenate([col_block, newcol[:, None]], axis=1)
                break
    return u


def build_discrete_experiment(m):
    """Wire a strong measurement into a discrete experiment.

    U(psi (x) Phi_0) = sum_a (R_a psi) (x) Phi_a on a composite space with
    an apparatus pointer dimension of k+1; U is completed to a full unitary
    by an (arbitrary) orthonormal extension of its isometric action.
    """
    n = m.dim
    k = m.n_outcomes
    ad = k + 1
    ready = np.zeros(ad, dtype=complex)
    ready[0] = 1.0
    pointers = tuple(np.eye(ad, dtype=complex)[j + 1] for j in range(k))
    # isometry on H (x) Phi_0: column for e_i (x) Phi_0 is sum_a (R_a e_i)(x)Phi_a
    v = np.zeros((n * ad, n), dtype=complex)
    for i in range(n):
        e = np.zeros(n, dtype=complex)
        e[i] = 1.0
        acc = np.zeros(n * ad, dtype=complex)
        for j, r in enumerate(m.transformers):
            acc += np.kron(r @ e, pointers[j])
        v[:, i] = acc
    if np.max(np.abs(dagger(v) @ v - np.eye(n))) > 1e-10:
        raise ValidationError("transformer closure violated; cannot build a unitary")
    # psi (x) Phi_0 occupies composite indices i * (k+1); the unitary's
    # columns there must reproduce the isometry
    u = _complete_isometry(v, [i * ad for i in range(n)])
    return DiscreteExperimentSpec(
        system_dim=n,
        ready_state=ready,
        pointer_states=pointers,
        unitary=u,
        calibration=tuple(m.labels),
    )


def shift_experiment(dim):
    """Two-outcome shift experiment on a truncated ladder basis.

    Basis e_0 .. e_(dim-1) with the middle vector playing the role of e_0 in
    the construction R_(+-1) = V_(+-)(P_(+-) + P_0 / sqrt 2); the lowering
    (raising) shift wraps at the truncation edge, which is harmless for
    states supported away from the edges.  Reproducible but not a PVM.
    """
    if dim < 3:
        raise DimensionError("shift experiment needs dimension >= 3")
    mid = dim // 2
    up = np.zeros((dim, dim), dtype=complex)
    down = np.zeros((dim, dim), dtype=complex)
    for i in range(dim - 1):
        up[i + 1, i] = 1.0
        down[i, i + 1] = 1.0
    up[0, dim - 1] = 1.0
    down[dim - 1, 0] = 1.0
    p_plus = np.zeros((dim, dim), dtype=complex)
    p_minus = np.zeros((dim, dim), dtype=complex)
    p_zero = np.zeros((dim, dim), dtype=complex)
    for i in range(dim):
        if i > mid:
            p_plus[i, i] = 1.0
        elif i < mid:
            p_minus[i, i] = 1.0
        else:
            p_zero[i, i] = 1.0
    r_plus = up @ (p_plus + p_zero / np.sqrt(2.0))
    r_minus = down @ (p_minus + p_zero / np.sqrt(2.0))
    return StrongMeasurement(
        (make_label(1.0), make_label(-1.0)), (r_plus, r_minus), mode="experiment"
    )


@dataclass(frozen=True)
class VonNeumannExperiment:
    """Pointer-model measurement exp(-i gamma T A (x) P_y) on a 1-d pointer.

    ``pointer_positions`` are the grid coordinates, ``pointer_branches``
    holds the shifted ready wave for each distinct eigenvalue, and
    ``separation_warning`` flags overlapping pointers (the experiment then
    fails to be an ideal measurement at the stated tolerance).
    """

    eigenvalues: tuple
    projectors: tuple
    pointer_positions: np.ndarray
    pointer_branches: tuple
    shifts: tuple
    transformers: tuple
    max_pointer_overlap: float
    separation_warning: bool

    def outcome_probabilities(self, psi):
        """Pointer statistics: mass of each branch's Voronoi cell around its shift."""
        psi = require_normalized(psi)
        y = self.pointer_positions
        dy = y[1] - y[0]
        total = np.zeros(len(y))
        for p, branch in zip(self.projectors, self.pointer_branches):
            w = float(np.real(np.vdot(psi, p @ psi)))
            total += w * np.abs(branch) ** 2
        shifts = np.asarray(self.shifts)
        cells = np.argmin(np.abs(y[:, None] - shifts[None, :]), axis=1)
        probs = np.array([float(np.sum(total[cells == k]) * dy) for k in range(len(shifts))])
        s = probs.sum()
        if s > 0:
            probs = probs / s
        return probs


def von_neumann_experiment(a, gamma_t, pointer_wave, pointer_grid, h0=None, hbar=1.0):
    """Von Neumann measurement of A with interaction exp(-i gamma T A (x) P_y).

    ``pointer_wave`` is the ready wave sampled on the uniform ``pointer_grid``.
    Each eigenvalue branch gets the pointer translated by lambda_a gamma T
    (implemented exactly in Fourier space).  With ``h0`` (a system
    Hamiltonian commuting with A) the induced transformers become
    R_a = exp(-i T H_0 / hbar) P_a, i.e. a normal measurement; here the
    product gamma T is supplied as one parameter and T = 1 is used for h0.
    """
    dec = spectral_decompose(a)
    y = np.asarray(pointer_grid, dtype=float)
    phi0 = np.asarray(pointer_wave, dtype=complex)
    dy = y[1] - y[0]
    phi0 = phi0 / np.sqrt(np.sum(np.abs(phi0) ** 2) * dy)
    k = 2 * np.pi * np.fft.fftfreq(len(y), d=dy)
    ft = np.fft.fft(phi0)
    branches, shifts = [], []
    for lam in dec.eigenvalues:
        shift = lam * gamma_t
        branches.append(np.fft.ifft(ft * np.exp(-1j * k * shift)))
        shifts.append(shift)
    overlap = 0.0
    for i in range(len(branches)):
        for j in range(i + 1, len(branches)):
            overlap = max(overlap, abs(np.vdot(branches[i], branches[j]) * dy))
    if h0 is not None:
        h0 = require_hermitian(h0)
        if np.max(np.abs(h0 @ a - a @ h0)) > 1e-10:
            raise ValidationError("h0 must commute with the measured operator")
        u0 = spectral_decompose(h0).apply_function(lambda e: np.exp(-1j * e / hbar))
        transformers = tuple(u0 @ p for p in dec.projectors)
    else:
        transformers = tuple(dec.projectors)
    return VonNeumannExperiment(
        eigenvalues=tuple(dec.eigenvalues),
        projectors=tuple(dec.projectors),
        pointer_positions=y,
        pointer_branches=tuple(branches),
        shifts=tuple(shifts),
        transformers=transformers,
        max_pointer_overlap=float(overlap),
        separation_warning=bool(overlap > 1e-6),
    )


def joint_pvm(family, tol=1e-10, degeneracy_tol=None):
    """Product PVM of a commuting family, labels are joint eigenvalue tuples.

    Built by successive refinement: each operator splits the current joint
    eigenspaces via the spectral decomposition of its compression.
    """
    from .hilbert import commuting_family as _is_commuting

    family = [require_hermitian(op) for op in family]
    if not _is_commuting(family, tol=tol):
        raise ValidationError("operators do not form a commuting family")
    dim = family[0].shape[0]
    blocks = [(np.eye(dim, dtype=complex), ())]
    for op in family:
        refined = []
        for p, lab in blocks:
            # orthonormal basis of range(P)
            w, v = np.linalg.eigh(p)
            cols = v[:, w > 0.5]
            comp = dagger(cols) @ op @ cols
            sub = spectral_decompose(comp, degeneracy_tol=degeneracy_tol)
            for lam, q in zip(sub.eigenvalues, sub.projectors):
                refined.append((cols @ q @ dagger(cols), lab + (lam,)))
        blocks = refined
    blocks.sort(key=lambda item: item[1])
    labels = tuple(make_label(lab) for _, lab in blocks)
    projectors = tuple(p for p, _ in blocks)
    return Pvm(labels, projectors)


# ---------------------------------------------------------------------------
# density matrices and instruments


def check_density_matrix(w, tol=1e-10):
    w = require_hermitian(w, tol=tol)
    tr = np.real(np.trace(w))
    if abs(tr - 1.0) > tol:
        raise ValidationError(f"density matrix trace {tr!r} != 1")
    if np.linalg.eigvalsh(w).min() < -tol:
        raise ValidationError("density matrix is not positive semidefinite")
    return w


def ensemble_density(states):
    """W = sum p_k |psi_k><psi_k| for weights p_k >= 0 summing to 1."""
    weights = np.array([float(p) for p, _ in states])
    if np.any(weights < 0) or abs(weights.sum() - 1.0) > 1e-12:
        raise ValidationError("weights must be nonnegative and sum to 1")
    dim = len(states[0][1])
    w = np.zeros((dim, dim), dtype=complex)
    for p, psi in states:
        w += p * projector(psi)
    return w


def reduced_density(psi_composite, keep, dims):
    """Reduced density matrix of one factor of a pure composite state."""
    psi = require_normalized(psi_composite)
    return partial_trace(np.outer(psi, np.conjugate(psi)), keep, dims)


def density_update(w, m, label):
    """Outcome update W -> R W R† / tr(R W R†) for result ``label``.

    If several outcomes carry the label, their transformers act as the
    corresponding instrument sum.  Returns (probability, updated W).
    """
    w = check_density_matrix(w)
    idxs = m.outcomes_for_label(label)
    if not idxs:
        raise MeasurementError(f"label {label!r} is not an outcome of the measurement")
    new = np.zeros_like(w)
    for i in idxs:
        r = m.transformers[i]
        new = new + r @ w @ dagger(r)
    prob = float(np.real(np.trace(new)))
    if prob < 1e-14:
        raise MeasurementError(f"outcome {label!r} has vanishing probability")
    return prob, new / prob


@dataclass(frozen=True)
class Instrument:
    """Set function Delta -> (W -> sum over outcomes with label in Delta of R W R†)."""

    measurement: StrongMeasurement

    def apply(self, delta, w):
        """Unnormalized conditional state R(Delta) W."""
        pred = _label_predicate(delta)
        out = np.zeros_like(np.asarray(w, dtype=complex))
        for lab, r in zip(self.measurement.labels, self.measurement.transformers):
            if pred(lab):
                out = out + r @ w @ dagger(r)
        return out

    def probability(self, delta, w):
        return float(np.real(np.trace(self.apply(delta, w))))

    def conditional_state(self, delta, w):
        out = self.apply(delta, w)
        tr = np.real(np.trace(out))
        if tr < 1e-14:
            raise MeasurementError("conditioning on a probability-zero label set")
        return out / tr


def instrument_of(m):
    return Instrument(m)


# ---------------------------------------------------------------------------
# serialization


def _matrix_to_json(m):
    return [[[float(np.real(v)), float(np.imag(v))] for v in row] for row in np.asarray(m)]


def _matrix_from_json(rows):
    return np.array([[complex(re, im) for re, im in row] for row in rows], dtype=complex)


def measurement_to_json(m):
    """Serialize a StrongMeasurement, Pvm or Povm to a JSON string."""
    if isinstance(m, StrongMeasurement):
        mode = m.mode
        pairs = zip(m.labels, m.transformers)
    elif isinstance(m, Pvm):
        mode = "pvm"
        pairs = m.outcomes
    elif isinstance(m, Povm):
        mode = "povm"
        pairs = m.outcomes
    else:
        raise ValidationError(f"cannot serialize {type(m).__name__}")
    doc = {
        "dim": int(m.dim),
        "mode": mode,
        "outcomes": [
            {"label": list(lab), "matrix": _matrix_to_json(mat)} for lab, mat in pairs
        ],
    }
    if getattr(m, "atol", 1e-10) != 1e-10:
        doc["atol"] = m.atol
    return json.dumps(doc)


def measurement_from_json(text):
    doc = json.loads(text)
    labels = tuple(tuple(lab) for lab in (o["label"] for o in doc["outcomes"]))
    mats = tuple(_matrix_from_json(o["matrix"]) for o in doc["outcomes"])
    mode = doc["mode"]
    atol = float(doc.get("atol", 1e-10))
    if mode in ("strong", "experiment"):
        return StrongMeasurement(labels, mats, mode=mode)
    if mode == "pvm":
        return Pvm(labels, mats, atol=atol)
    if mode == "povm":
        return Povm(labels, mats, atol=atol)
    raise ValidationError(f"unknown mode {mode!r} in document")
