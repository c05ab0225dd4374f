"""Invariant battery for the measurement calculus.

Each check runs a constructive scenario and reports its worst residual
against the library-wide tolerance.  The CLI formalism-suite subcommand
and the test suite both consume this list.
"""

import numpy as np

from . import formalism as fm
from .hilbert import (
    SIGMA_X,
    SIGMA_Z,
    dagger,
    normalize_state,
    partial_trace,
    projector,
    tensor_product,
)
from .streams import stream, substream

__all__ = ["formalism_battery", "random_hermitian", "random_state", "random_unitary"]


def random_state(rng, dim):
    v = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    return normalize_state(v)


def random_hermitian(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return (a + dagger(a)) / 2.0


def random_unitary(rng, dim):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(a)
    return q * (np.diagonal(r) / np.abs(np.diagonal(r)))


def _measurement_zoo(rng):
    """Representative constructed measurements, with their modes."""
    zoo = []
    zoo.append(("ideal_sigma_z", fm.ideal_measurement(SIGMA_Z)))
    a4 = random_hermitian(rng, 4)
    zoo.append(("ideal_random_4", fm.ideal_measurement(a4)))
    # normal measurement on a degenerate operator: one 2-d eigenspace
    adeg = np.diag([1.0, 1.0, 2.0]).astype(complex)
    u_block = np.zeros((3, 3), dtype=complex)
    u_block[:2, :2] = random_unitary(rng, 2)
    u_block[2, 2] = 1.0
    zoo.append(("normal_degenerate", fm.normal_measurement(adeg, [u_block, np.eye(3)])))
    # photodetection-style standard measurement
    dim = 3
    basis = np.eye(dim, dtype=complex)
    pvm = fm.pvm_of_operator(np.diag(np.arange(dim)).astype(complex))
    isometries = [np.outer(basis[0], np.conjugate(basis[k])) for k in range(dim)]
    zoo.append(("standard_photodetection", fm.standard_measurement(pvm, isometries)))
    zoo.append(("shift_experiment", fm.shift_experiment(9)))
    seq = fm.sequential_measurement(
        [fm.ideal_measurement(SIGMA_Z), fm.ideal_measurement(SIGMA_X)]
    )
    zoo.append(("sequential_z_then_x", seq))
    zoo.append(("weak_gaussian", fm.weak_transformers(SIGMA_Z, 1.0, np.linspace(-8, 8, 257))))
    return zoo


def formalism_battery(seed=21, trials=200):
    """Run the invariant battery; returns a list of check dicts."""
    rng = stream(seed)
    checks = []

    def add(name, residual, tolerance):
        checks.append(
            {
                "name": name,
                "residual": float(residual),
                "tolerance": float(tolerance),
                "passed": bool(residual <= tolerance),
            }
        )

    zoo = _measurement_zoo(rng)

    # closure sum R†R = I for every constructed measurement
    worst = 0.0
    for _, m in zoo:
        total = sum(m.effects())
        worst = max(worst, float(np.max(np.abs(total - np.eye(m.dim)))))
    add("transformer_closure", worst, 1e-10)

    # strong mode: each R†R idempotent
    worst = 0.0
    for name, m in zoo:
        if m.mode != "strong":
            continue
        for e in m.effects():
            worst = max(worst, float(np.max(np.abs(e @ e - e))))
    add("strong_effects_idempotent", worst, 1e-10)

    # born probabilities sum to one over random states
    worst = 0.0
    for _, m in zoo:
        for _ in range(max(trials // len(zoo), 10)):
            psi = random_state(rng, m.dim)
            worst = max(worst, abs(fm.born_probability(m, psi) - 1.0))
    add("born_total_probability", worst, 1e-10)

    # sequential joint probabilities vs chained-projector oracle
    mz = fm.ideal_measurement(SIGMA_Z)
    mx = fm.ideal_measurement(SIGMA_X)
    worst = 0.0
    for _ in range(50):
        psi = random_state(rng, 2)
        probs = fm.sequential_probability([mz, mx, mz], [None, None, None], psi)
        for labels, p in probs.items():
            chain = psi.copy()
            for m, lab in zip((mz, mx, mz), labels):
                idx = m.labels.index((lab,))
                chain = m.transformers[idx] @ chain
            worst = max(worst, abs(p - float(np.linalg.norm(chain) ** 2)))
    add("wigner_formula_oracle", worst, 1e-12)

    # recalibration commutes with POVM extraction
    worst = 0.0
    f = lambda lam: lam * lam
    for _, m in [z for z in zoo if z[1].dim <= 4][:4]:
        direct = fm.povm_of(fm.recalibrate(m, f))
        push = {}
        for lab, o in fm.povm_of(m).outcomes:
            new = fm.make_label(f(lab if len(lab) > 1 else lab[0]))
            push[new] = push.get(new, 0.0) + o
        for lab, o in direct.outcomes:
            worst = max(worst, float(np.max(np.abs(o - push[lab]))))
    add("recalibration_diagram", worst, 1e-12)

    # Gaussian-noise POVM effects commute (functions of A)
    apovm = fm.approximate_povm(SIGMA_Z, 1.0, np.linspace(-8, 8, 17))
    worst = 0.0
    for i, oi in enumerate(apovm.effects):
        for oj in apovm.effects[i + 1:]:
            worst = max(worst, float(np.max(np.abs(oi @ oj - oj @ oi))))
    add("noisy_effects_commute", worst, 1e-10)

    # density update on a pure state agrees with the vector transition
    worst = 0.0
    for _ in range(50):
        psi = random_state(rng, 2)
        w = projector(psi)
        for lab in ((1.0,), (-1.0,)):
            p_vec = fm.born_probability(mz, psi, [lab])
            if p_vec < 1e-12:
                continue
            p_w, w_new = fm.density_update(w, mz, lab)
            idx = mz.labels.index(lab)
            post = mz.transformers[idx] @ psi
            post = post / np.linalg.norm(post)
            worst = max(worst, abs(p_w - p_vec))
            worst = max(worst, float(np.max(np.abs(w_new - projector(post)))))
    add("density_update_pure_state", worst, 1e-12)

    # mixture update equals update-then-mix with reweighted probabilities
    worst = 0.0
    for _ in range(20):
        psi1, psi2 = random_state(rng, 2), random_state(rng, 2)
        p1 = rng.random()
        w = fm.ensemble_density([(p1, psi1), (1 - p1, psi2)])
        for lab in ((1.0,), (-1.0,)):
            prob_mix, w_mix = fm.density_update(w, mz, lab)
            idx = mz.labels.index(lab)
            r = mz.transformers[idx]
            num = p1 * (r @ projector(psi1) @ dagger(r)) + (1 - p1) * (
                r @ projector(psi2) @ dagger(r)
            )
            worst = max(worst, float(np.max(np.abs(w_mix - num / np.trace(num)))))
    add("mixture_update_consistency", worst, 1e-12)

    # quadratic-map inequality for POVM maps over random pairs
    povm = fm.povm_of(fm.shift_experiment(9))
    worst_slack = np.inf
    for _ in range(100):
        v1 = rng.normal(size=9) + 1j * rng.normal(size=9)
        v2 = rng.normal(size=9) + 1j * rng.normal(size=9)
        mus = []
        for v in (v1, v2, v1 + v2):
            mus.append(np.array([np.real(np.vdot(v, o @ v)) for _, o in povm.outcomes]))
        slack = 2.0 * (mus[0] + mus[1]) - mus[2]
        worst_slack = min(worst_slack, float(slack.min()))
    add("quadratic_map_inequality", max(0.0, -worst_slack), 1e-10)

    # partial trace of the singlet is maximally mixed
    singlet = np.array([0, 1, -1, 0], dtype=complex) / np.sqrt(2)
    reduced = partial_trace(projector(singlet), 0, (2, 2))
    add(
        "singlet_partial_trace",
        float(np.max(np.abs(reduced - np.eye(2) / 2))),
        1e-12,
    )

    # serialization round trip is bit-faithful
    worst = 0.0
    for _, m in zoo[:3]:
        back = fm.measurement_from_json(fm.measurement_to_json(m))
        for r1, r2 in zip(m.transformers, back.transformers):
            if not np.array_equal(r1, r2):
                worst = 1.0
    add("serialization_bit_roundtrip", worst, 0.0)

    return checks
