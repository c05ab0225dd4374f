"""Dense finite-dimensional complex linear algebra.

States are 1-d complex ndarrays, operators are square complex ndarrays.
This module supplies the handful of constructions everything downstream
leans on: tensor products, partial traces, spectral decompositions with a
degeneracy merge rule, and commutation checks.  It is meant for the
measurement formalism, not bulk numerics; dimensions are capped.
"""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "DIM_CAP",
    "SIGMA_X",
    "SIGMA_Y",
    "SIGMA_Z",
    "DimensionError",
    "ValidationError",
    "SpectralDecomposition",
    "basis_state",
    "commuting_family",
    "dagger",
    "is_hermitian",
    "normalize_state",
    "partial_trace",
    "projector",
    "require_hermitian",
    "require_normalized",
    "require_unitary",
    "spectral_decompose",
    "spin_direction",
    "tensor_product",
    "SPIN_UP",
    "SPIN_DOWN",
]

DIM_CAP = 4096

SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
SIGMA_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
SIGMA_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

SPIN_UP = np.array([1.0, 0.0], dtype=complex)
SPIN_DOWN = np.array([0.0, 1.0], dtype=complex)


class DimensionError(ValueError):
    """Operands with incompatible or oversized dimensions."""


class ValidationError(ValueError):
    """Input violates a structural invariant (hermiticity, norm, ...)."""


def dagger(a):
    return np.conjugate(np.swapaxes(np.asarray(a, dtype=complex), -1, -2))


def basis_state(dim, index):
    """Standard basis vector e_index of C^dim."""
    e = np.zeros(dim, dtype=complex)
    e[index] = 1.0
    return e


def normalize_state(psi):
    psi = np.asarray(psi, dtype=complex)
    n = np.linalg.norm(psi)
    if n == 0.0 or not np.isfinite(n):
        raise ValidationError("cannot normalize a zero or non-finite vector")
    return psi / n


def require_normalized(psi, tol=1e-12):
    psi = np.asarray(psi, dtype=complex)
    if not np.all(np.isfinite(psi)):
        raise ValidationError("state has non-finite amplitudes")
    n = np.linalg.norm(psi)
    if abs(n - 1.0) > tol:
        raise ValidationError(f"state is not normalized: |psi| = {n!r}")
    return psi


def is_hermitian(a, tol=1e-12):
    a = np.asarray(a, dtype=complex)
    return a.ndim == 2 and a.shape[0] == a.shape[1] and np.max(np.abs(a - dagger(a))) <= tol


def require_hermitian(a, tol=1e-12):
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"operator must be square, got shape {a.shape}")
    dev = np.max(np.abs(a - dagger(a)))
    if dev > tol:
        raise ValidationError(f"operator is not Hermitian (max deviation {dev:.3e})")
    return a


def require_unitary(u, tol=1e-10):
    u = np.asarray(u, dtype=complex)
    if u.ndim != 2 or u.shape[0] != u.shape[1]:
        raise ValidationError(f"operator must be square, got shape {u.shape}")
    dev = np.max(np.abs(dagger(u) @ u - np.eye(u.shape[0])))
    if dev > tol:
        raise ValidationError(f"operator is not unitary (max deviation {dev:.3e})")
    return u


def projector(psi):
    """Rank-one projector |psi><psi| for a normalized vector."""
    psi = require_normalized(psi, tol=1e-10)
    return np.outer(psi, np.conjugate(psi))


def spin_direction(n):
    """sigma . n for a unit 3-vector n."""
    n = np.asarray(n, dtype=float)
    if n.shape != (3,) or abs(np.linalg.norm(n) - 1.0) > 1e-10:
        raise ValidationError("spin direction must be a unit 3-vector")
    return n[0] * SIGMA_X + n[1] * SIGMA_Y + n[2] * SIGMA_Z


def tensor_product(a, b):
    """Kronecker product of two states or two operators.

    Both operands must be of the same kind (both vectors or both square
    matrices).  The composite dimension is capped at DIM_CAP.
    """
    a = np.asarray(a, dtype=complex)
    b = np.asarray(b, dtype=complex)
    if a.ndim != b.ndim or a.ndim not in (1, 2):
        raise DimensionError(
            f"operands must both be vectors or both matrices, got ndim {a.ndim} and {b.ndim}"
        )
    if a.ndim == 2 and (a.shape[0] != a.shape[1] or b.shape[0] != b.shape[1]):
        raise DimensionError("matrix operands must be square")
    dim = a.shape[0] * b.shape[0]
    if dim > DIM_CAP:
        raise DimensionError(f"tensor product dimension {dim} exceeds cap {DIM_CAP}")
    return np.kron(a, b)


def partial_trace(w, keep, dims):
    """Trace out all factors of a multipartite operator except one.

    Parameters
    ----------
    w : (D, D) array, with D = prod(dims)
    keep : index of the factor to keep
    dims : dimensions of the tensor factors
    """
    w = np.asarray(w, dtype=complex)
    dims = tuple(int(d) for d in dims)
    total = int(np.prod(dims))
    if w.ndim != 2 or w.shape != (total, total):
        raise DimensionError(f"dims {dims} do not multiply to operator shape {w.shape}")
    if not 0 <= keep < len(dims):
        raise DimensionError(f"keep index {keep} out of range for {len(dims)} factors")
    k = len(dims)
    t = w.reshape(dims + dims)
    # trace out factors from the back so axis numbers stay valid
    for i in reversed(range(k)):
        if i == keep:
            continue
        t = np.trace(t, axis1=i, axis2=i + (t.ndim // 2))
    return t


@dataclass(frozen=True)
class SpectralDecomposition:
    """Distinct eigenvalues (ascending) with their spectral projectors."""

    eigenvalues: tuple
    projectors: tuple

    @property
    def dim(self):
        return self.projectors[0].shape[0]

    def reconstruct(self):
        return sum(lam * p for lam, p in zip(self.eigenvalues, self.projectors))

    def apply_function(self, f):
        """f(A) = sum f(lambda_a) P_a."""
        return sum(f(lam) * p for lam, p in zip(self.eigenvalues, self.projectors))


def spectral_decompose(a, degeneracy_tol=None, hermiticity_tol=1e-12):
    """Eigenvalues and projectors of a Hermitian matrix.

    Eigenvalues closer than ``degeneracy_tol`` (default 1e-9 * max|A|) are
    merged into a single eigenspace.  Projectors are built from sorted
    eigenvectors, so the result does not depend on solver phase gauge.
    """
    a = require_hermitian(a, tol=hermiticity_tol)
    if degeneracy_tol is None:
        scale = max(np.max(np.abs(a)), 1.0)
        degeneracy_tol = 1e-9 * scale
    vals, vecs = np.linalg.eigh(a)
    eigenvalues = []
    projectors = []
    i = 0
    n = len(vals)
    while i < n:
        j = i + 1
        while j < n and vals[j] - vals[j - 1] <= degeneracy_tol:
            j += 1
        block = vecs[:, i:j]
        eigenvalues.append(float(np.mean(vals[i:j])))
        projectors.append(block @ dagger(block))
        i = j
    return SpectralDecomposition(tuple(eigenvalues), tuple(projectors))


def commuting_family(ops, tol=1e-10):
    """True iff all pairwise commutators vanish within ``tol`` (max-abs)."""
    ops = [require_hermitian(op, tol=1e-10) for op in ops]
    if len({op.shape for op in ops}) > 1:
        raise DimensionError("operators in a family must share a dimension")
    for i in range(len(ops)):
        for j in range(i + 1, len(ops)):
            comm = ops[i] @ ops[j] - ops[j] @ ops[i]
            if np.max(np.abs(comm)) > tol:
                return False
    return True
