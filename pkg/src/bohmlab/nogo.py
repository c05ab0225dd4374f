"""Quantitative no-go results.

Bell's inequality from singlet statistics, linear-programming feasibility
of noncontextual value maps (with Farkas certificates when infeasible),
a search for Hardy-type configurations, and the quadratic-map necessary
condition for measurability.
"""

from dataclasses import dataclass, field

import json
import numpy as np

from .formalism import born_probability, joint_pvm, make_label, pvm_of_operator
from .hilbert import DimensionError, spin_direction, tensor_product

__all__ = [
    "FeasibilityCertificate",
    "PairwiseModel",
    "anticorrelation_probability",
    "bell_lhs",
    "bell_model",
    "hardy_model",
    "hardy_search",
    "quadratic_map_test",
    "value_map_feasibility",
    "velocity_sign_map",
]

SINGLET = np.array([0.0, 1.0, -1.0, 0.0], dtype=complex) / np.sqrt(2.0)

_I2 = np.eye(2, dtype=complex)


def _unit(v):
    v = np.asarray(v, dtype=float)
    n = np.linalg.norm(v)
    if n < 1e-12:
        raise ValueError("direction vector must be nonzero")
    return v / n


def anticorrelation_probability(axis1, axis2, state=None):
    """Prob(first-wing result = - second-wing result) for joint spin readings."""
    state = SINGLET if state is None else np.asarray(state, dtype=complex)
    a = tensor_product(spin_direction(_unit(axis1)), _I2)
    b = tensor_product(_I2, spin_direction(_unit(axis2)))
    pvm = joint_pvm([a, b])
    return born_probability(pvm, state, lambda lab: abs(lab[0] + lab[1]) < 1e-9)


def bell_lhs(a, b, c, state=None):
    """P(Z1_a = -Z2_b) + P(Z1_b = -Z2_c) + P(Z1_c = -Z2_a).

    Noncontextual value maps force this above 1; the singlet at mutual
    120 degrees gives 3/4.
    """
    return (
        anticorrelation_probability(a, b, state)
        + anticorrelation_probability(b, c, state)
        + anticorrelation_probability(c, a, state)
    )


# ---------------------------------------------------------------------------
# noncontextual value-map feasibility


@dataclass
class PairwiseModel:
    """Observables, their compatibility graph, and quantum pair distributions.

    ``observables`` are Hermitian matrices on a common Hilbert space;
    ``compatible_pairs`` lists index pairs that commute.  Joint
    distributions are evaluated on ``psi`` through the product PVM.
    """

    observables: list
    compatible_pairs: list
    psi: np.ndarray
    spectra: list = field(default_factory=list)
    pair_distributions: dict = field(default_factory=dict)

    def __post_init__(self):
        self.psi = np.asarray(self.psi, dtype=complex)
        self.spectra = []
        for a in self.observables:
            pvm = pvm_of_operator(a)
            self.spectra.append([lab[0] for lab in pvm.labels])
        for (i, j) in self.compatible_pairs:
            pvm = joint_pvm([self.observables[i], self.observables[j]])
            dist = {}
            for lab, p in zip(pvm.labels, pvm.projectors):
                prob = float(np.real(np.vdot(self.psi, p @ self.psi)))
                dist[lab] = dist.get(lab, 0.0) + prob
            full = {}
            for va in self.spectra[i]:
                for vb in self.spectra[j]:
                    full[make_label((va, vb))] = dist.get(make_label((va, vb)), 0.0)
            self.pair_distributions[(i, j)] = full


@dataclass
class FeasibilityCertificate:
    """Outcome of the value-map LP with a self-verifying witness.

    Feasible: ``mixture`` maps deterministic assignments (tuples of
    outcome values, one per observable) to weights reproducing every
    compatible-pair distribution.  Infeasible: ``inequality`` holds the
    Farkas coefficients y per constraint, satisfying y . column <= 0 for
    every assignment while y . quantum = margin > 0.
    """

    feasible: bool
    mixture: dict = None
    inequality: list = None
    margin: float = 0.0
    max_column_violation: float = 0.0
    residual: float = 0.0

    def to_json(self):
        doc = {
            "feasible": self.feasible,
            "margin": self.margin,
            "max_column_violation": self.max_column_violation,
            "residual": self.residual,
        }
        if self.mixture is not None:
            doc["mixture"] = [
                {"assignment": list(k), "weight": v} for k, v in sorted(self.mixture.items())
            ]
        if self.inequality is not None:
            doc["inequality"] = [
                {"pair": list(pair), "outcome": list(lab), "coefficient": c}
                for pair, lab, c in self.inequality
            ]
        return json.dumps(doc, indent=2)


def _phase1_simplex(a_mat, b_vec, tol=1e-9, max_iter=20000):
    """Feasibility of A x = b, x >= 0 via the Phase-1 simplex (Bland's rule).

    Returns (feasible, x, y): x the basic feasible point when feasible, y
    the Farkas dual (y A <= 0, y b > 0) when not.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b_vec = np.asarray(b_vec, dtype=float)
    m, n = a_mat.shape
    sign = np.where(b_vec < 0, -1.0, 1.0)
    a = a_mat * sign[:, None]
    b = b_vec * sign
    tableau = np.zeros((m, n + m + 1))
    tableau[:, :n] = a
    tableau[:, n:n + m] = np.eye(m)
    tableau[:, -1] = b
    basis = list(range(n, n + m))
    cost = np.concatenate([np.zeros(n), np.ones(m)])
    # reduced costs r = c - 1^T tableau for the all-artificial basis
    red = cost - tableau[:, :-1].sum(axis=0)
    obj = float(b.sum())
    for _ in range(max_iter):
        entering = -1
        for j in range(n + m):
            if red[j] < -tol:
                entering = j
                break
        if entering < 0:
            break
        col = tableau[:, entering]
        rows = np.flatnonzero(col > tol)
        if len(rows) == 0:
            raise RuntimeError("phase-1 LP is unbounded; formulation error")
        ratios = tableau[rows, -1] / col[rows]
        best = ratios.min()
        # Bland tie-break: smallest basis index
        cand = rows[np.abs(ratios - best) <= 1e-12 * max(1.0, abs(best))]
        leave = cand[np.argmin([basis[r] for r in cand])]
        piv = tableau[leave, entering]
        tableau[leave] /= piv
        for r in range(m):
            if r != leave and tableau[r, entering] != 0.0:
                tableau[r] -= tableau[r, entering] * tableau[leave]
        red = red - red[entering] * tableau[leave, :-1]
        red[entering] = 0.0
        basis[leave] = entering
        obj = float(sum(tableau[r, -1] for r in range(m) if basis[r] >= n))
    obj = float(sum(tableau[r, -1] for r in range(m) if basis[r] >= n))
    if obj <= max(tol, 1e-9):
        x = np.zeros(n)
        for r, bi in enumerate(basis):
            if bi < n:
                x[bi] = tableau[r, -1]
        return True, x, None
    # Farkas dual from the reduced costs of the slack (artificial) columns
    y = (1.0 - red[n:n + m]) * sign
    return False, None, y


def value_map_feasibility(model, tol=1e-9, witness_margin=1e-6):
    """Decide whether a noncontextual deterministic value map can reproduce
    all compatible-pair distributions of the model.

    Enumerates deterministic assignments of outcomes to observables and
    solves the exact linear feasibility problem for a probability mixture.
    Infeasibility comes with a violated inequality (Farkas certificate)
    checked by direct substitution.
    """
    sizes = [len(s) for s in model.spectra]
    total = 1
    for s in sizes:
        total *= s
        if total > 10**6:
            raise DimensionError("assignment space exceeds 10^6")
    assignments = [()]
    for spec in model.spectra:
        assignments = [a + (v,) for a in assignments for v in spec]
    rows = []
    b = []
    row_meta = []
    for (i, j) in model.compatible_pairs:
        dist = model.pair_distributions[(i, j)]
        for lab, prob in sorted(dist.items()):
            va, vb = lab
            row = np.array(
                [
                    1.0 if (abs(asg[i] - va) < 1e-9 and abs(asg[j] - vb) < 1e-9) else 0.0
                    for asg in assignments
                ]
            )
            rows.append(row)
            b.append(prob)
            row_meta.append(((i, j), lab))
    rows.append(np.ones(len(assignments)))
    b.append(1.0)
    row_meta.append((("norm",), make_label(1.0)))
    a_mat = np.array(rows)
    b_vec = np.array(b)
    feasible, x, y = _phase1_simplex(a_mat, b_vec, tol=tol)
    if feasible:
        residual = float(np.max(np.abs(a_mat @ x - b_vec)))
        mixture = {
            make_label(asg): float(w) for asg, w in zip(assignments, x) if w > tol
        }
        return FeasibilityCertificate(
            feasible=True, mixture=mixture, residual=residual
        )
    margin = float(y @ b_vec)
    col_viol = float(np.max(y @ a_mat))
    if col_viol > tol or margin < witness_margin:
        raise RuntimeError(
            f"Farkas certificate failed verification (margin {margin:.3e}, "
            f"column violation {col_viol:.3e})"
        )
    inequality = [
        (pair, lab, float(c)) for (pair, lab), c in zip(row_meta, y) if abs(c) > tol
    ]
    return FeasibilityCertificate(
        feasible=False,
        inequality=inequality,
        margin=margin,
        max_column_violation=col_viol,
    )


def bell_model(a, b, c, state=None):
    """Six spin observables (three per wing) with all cross-wing pairs compatible."""
    state = SINGLET if state is None else np.asarray(state, dtype=complex)
    axes = [_unit(a), _unit(b), _unit(c)]
    obs = [tensor_product(spin_direction(x), _I2) for x in axes]
    obs += [tensor_product(_I2, spin_direction(x)) for x in axes]
    pairs = [(i, 3 + j) for i in range(3) for j in range(3)]
    return PairwiseModel(obs, pairs, state)


def hardy_model(state, wing1_ops, wing2_ops):
    """Four observables (A, C on wing 1; B, D on wing 2), cross pairs compatible.

    Index order: 0 = A, 1 = C (wing 1), 2 = B, 3 = D (wing 2); the
    compatible pairs are (A,B), (A,D), (C,B), (C,D).
    """
    a_op, c_op = wing1_ops
    b_op, d_op = wing2_ops
    obs = [
        tensor_product(a_op, _I2),
        tensor_product(c_op, _I2),
        tensor_product(_I2, b_op),
        tensor_product(_I2, d_op),
    ]
    pairs = [(0, 2), (0, 3), (1, 2), (1, 3)]
    return PairwiseModel(obs, pairs, np.asarray(state, dtype=complex))


# ---------------------------------------------------------------------------
# Hardy search


def _bloch_of(vec):
    """Bloch direction of a qubit state."""
    v = vec / np.linalg.norm(vec)
    return np.real(
        np.array(
            [
                2 * np.real(np.conjugate(v[0]) * v[1]),
                2 * np.imag(np.conjugate(v[0]) * v[1]),
                abs(v[0]) ** 2 - abs(v[1]) ** 2,
            ]
        )
    )


def _plus_state(theta):
    """+1 eigenstate of sigma . (sin theta, 0, cos theta)."""
    return np.array([np.cos(theta / 2.0), np.sin(theta / 2.0)], dtype=complex)


def _hardy_geometry(chi, theta_a, theta_b):
    """Derive the forced observables and the Hardy functionals.

    State cos(chi)|00> + sin(chi)|11>; A on wing 1 and B on wing 2 along
    in-plane directions theta_a, theta_b.  D (wing 2) is forced by
    "A=1 implies D=1", C (wing 1) by "B=1 implies C=1".  Returns
    (amplitude of the C=1,D=1 branch, success probability P(A=1,B=1),
    derived unit vectors and states) or None when degenerate.
    """
    psi = np.zeros(4, dtype=complex)
    psi[0] = np.cos(chi)
    psi[3] = np.sin(chi)
    a_plus = _plus_state(theta_a)
    b_plus = _plus_state(theta_b)
    m = psi.reshape(2, 2)
    w = m.T @ np.conjugate(a_plus)  # wing-2 vector given A = +1
    v = m @ np.conjugate(b_plus)    # wing-1 vector given B = +1
    nw, nv = np.linalg.norm(w), np.linalg.norm(v)
    if nw < 1e-12 or nv < 1e-12:
        return None
    d_plus = w / nw
    c_plus = v / nv
    amp_cd = np.conjugate(c_plus) @ m @ np.conjugate(d_plus)
    p = abs(np.conjugate(a_plus) @ m @ np.conjugate(b_plus)) ** 2
    return {
        "amp_cd": complex(amp_cd),
        "p": float(p),
        "psi": psi,
        "a_plus": a_plus,
        "b_plus": b_plus,
        "c_plus": c_plus,
        "d_plus": d_plus,
    }


def _solve_theta_b(chi, theta_a, grid=241):
    """Zeros of the (real) C=1,D=1 amplitude as theta_b varies."""
    thetas = np.linspace(-np.pi + 1e-4, np.pi - 1e-4, grid)
    vals = []
    for th in thetas:
        g = _hardy_geometry(chi, theta_a, th)
        vals.append(np.real(g["amp_cd"]) if g else np.nan)
    vals = np.array(vals)
    roots = []
    for k in range(len(thetas) - 1):
        if np.isnan(vals[k]) or np.isnan(vals[k + 1]):
            continue
        if vals[k] == 0.0:
            roots.append(thetas[k])
        elif vals[k] * vals[k + 1] < 0:
            lo, hi = thetas[k], thetas[k + 1]
            flo = vals[k]
            for _ in range(80):
                mid = 0.5 * (lo + hi)
                g = _hardy_geometry(chi, theta_a, mid)
                fm = np.real(g["amp_cd"]) if g else np.nan
                if np.isnan(fm):
                    break
                if flo * fm <= 0:
                    hi = mid
                else:
                    lo, flo = mid, fm
            roots.append(0.5 * (lo + hi))
    return roots


def _hardy_p(chi, theta_a):
    best = (0.0, None)
    for th_b in _solve_theta_b(chi, theta_a):
        g = _hardy_geometry(chi, theta_a, th_b)
        if g and abs(np.real(g["amp_cd"])) < 1e-9 and g["p"] > best[0]:
            best = (g["p"], th_b)
    return best


def hardy_search(coarse_chi=25, coarse_theta=31, refine_iters=60, step_floor=1e-8):
    """Search two-qubit states and spin directions for the Hardy configuration.

    Maximizes P(A=1, B=1) subject to "A=1 => D=1", "B=1 => C=1" (exact by
    construction) and P(C=1, D=1) = 0 (root-solved).  Returns the winning
    state, the four observables, and the certified probability.
    """
    best = {"p": 0.0}
    for chi in np.linspace(0.05, np.pi / 4 - 0.02, coarse_chi):
        for th_a in np.linspace(0.1, np.pi - 0.1, coarse_theta):
            p, th_b = _hardy_p(chi, th_a)
            if p > best["p"]:
                best = {"p": p, "chi": chi, "theta_a": th_a, "theta_b": th_b}
    if best["p"] <= 0:
        return {"p": 0.0, "converged": False}
    # coordinate descent on (chi, theta_a)
    chi, th_a = best["chi"], best["theta_a"]
    p_cur = best["p"]
    step = 0.05
    while step > step_floor:
        improved = False
        for dchi, dth in ((step, 0), (-step, 0), (0, step), (0, -step)):
            p_new, th_b = _hardy_p(chi + dchi, th_a + dth)
            if p_new > p_cur + 1e-15:
                chi, th_a, p_cur = chi + dchi, th_a + dth, p_new
                improved = True
                break
        if not improved:
            step /= 2.0
    p_final, th_b = _hardy_p(chi, th_a)
    g = _hardy_geometry(chi, th_a, th_b)
    to_op = lambda plus: 2.0 * np.outer(plus, np.conjugate(plus)) - _I2
    result = {
        "p": p_final,
        "converged": True,
        "chi": float(chi),
        "theta_a": float(th_a),
        "theta_b": float(th_b),
        "state": g["psi"],
        "wing1_ops": (to_op(g["a_plus"]), to_op(g["c_plus"])),
        "wing2_ops": (to_op(g["b_plus"]), to_op(g["d_plus"])),
        "conditions": hardy_conditions(
            g["psi"], (to_op(g["a_plus"]), to_op(g["c_plus"])),
            (to_op(g["b_plus"]), to_op(g["d_plus"])),
        ),
    }
    return result


def hardy_conditions(state, wing1_ops, wing2_ops):
    """Evaluate the four Hardy functionals by direct spectral computation.

    Returns dict with p_ab = P(A=1, B=1), the two conditional-probability
    defects 1 - P(D=1 | A=1) and 1 - P(C=1 | B=1), and p_cd = P(C=1, D=1).
    """
    a_op, c_op = wing1_ops
    b_op, d_op = wing2_ops
    state = np.asarray(state, dtype=complex)

    def joint(op1, op2, v1, v2):
        pvm = joint_pvm([tensor_product(op1, _I2), tensor_product(_I2, op2)])
        return born_probability(
            pvm, state, lambda lab: abs(lab[0] - v1) < 1e-9 and abs(lab[1] - v2) < 1e-9
        )

    p_ab = joint(a_op, b_op, 1.0, 1.0)
    p_a = born_probability(pvm_of_operator(tensor_product(a_op, _I2)), state, [1.0])
    p_b = born_probability(pvm_of_operator(tensor_product(_I2, b_op)), state, [1.0])
    p_ad = joint(a_op, d_op, 1.0, 1.0)
    p_cb = joint(c_op, b_op, 1.0, 1.0)
    p_cd = joint(c_op, d_op, 1.0, 1.0)
    return {
        "p_ab": p_ab,
        "defect_a_implies_d": (p_a - p_ad) / p_a if p_a > 0 else 0.0,
        "defect_b_implies_c": (p_b - p_cb) / p_b if p_b > 0 else 0.0,
        "p_cd": p_cd,
    }


# ---------------------------------------------------------------------------
# measurability criterion (quadratic maps)


def quadratic_map_test(map_fn, pairs):
    """Check mu^(psi1+psi2) <= 2 (mu^psi1 + mu^psi2) bin by bin.

    ``map_fn`` maps a normalized state to a probability vector over a
    fixed bin set; the quadratic extension to unnormalized arguments is
    |psi|^2 map_fn(psi / |psi|).  Returns the worst slack (negative means
    the map cannot come from a POVM and the quantity is not measurable).
    """
    worst = np.inf
    details = []
    for psi1, psi2 in pairs:
        psi1 = np.asarray(psi1, dtype=complex)
        psi2 = np.asarray(psi2, dtype=complex)
        s = psi1 + psi2
        n1, n2, ns = (float(np.vdot(v, v).real) for v in (psi1, psi2, s))
        mu1 = n1 * np.asarray(map_fn(psi1 / np.sqrt(n1)))
        mu2 = n2 * np.asarray(map_fn(psi2 / np.sqrt(n2)))
        mu12 = ns * np.asarray(map_fn(s / np.sqrt(ns)))
        slack = 2.0 * (mu1 + mu2) - mu12
        m = float(slack.min())
        details.append(m)
        worst = min(worst, m)
    return {"worst_slack": worst, "per_pair_slack": details}


def velocity_sign_map(grid, ham, threshold=0.05):
    """Distribution of the velocity sign under quantum equilibrium.

    Returns a map over three bins (v < -threshold, |v| <= threshold,
    v > threshold) taking flattened complex samples of a single-axis wave
    function; any overall scale of the samples is irrelevant.
    """
    from .wavefield import GridWaveFunction, spectral_gradient

    def map_fn(vec):
        psi = GridWaveFunction(grid, np.asarray(vec, dtype=complex).reshape(grid.shape))
        grad = spectral_gradient(psi)[0]
        rho = psi.density()
        num = np.imag(np.sum(np.conjugate(psi.samples) * grad, axis=0))
        floor = 1e-30 + 1e-12 * rho.max()
        v = (ham.hbar / ham.masses[0]) * num / np.maximum(rho, floor)
        w = rho / rho.sum()
        lo = float(np.sum(w[v < -threshold]))
        hi = float(np.sum(w[v > threshold]))
        return np.array([lo, 1.0 - lo - hi, hi])

    return map_fn
