"""Dense operator algebra for finite-dimensional monitored quantum systems.

Operators and states are plain complex ``numpy`` arrays.  Density matrices
are Hermitian, unit-trace and positive semidefinite within the tolerances
enforced by :func:`check_density_matrix`; Hermitian operators are validated
with :func:`check_hermitian`.  Everything here is pure and side-effect free.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

HERM_TOL = 1e-10
TRACE_TOL = 1e-10
PSD_TOL = 1e-8
DEGENERACY_TOL = 1e-9

_PAULI = {
    "X": np.array([[0, 1], [1, 0]], dtype=complex),
    "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "Z": np.array([[1, 0], [0, -1]], dtype=complex),
}


class OperatorError(ValueError):
    """Raised when an operator or state violates a structural contract."""


def dagger(a):
    return a.conj().T


def check_hermitian(a, tol=1e-12, name="operator"):
    """Validate that ``a`` is a square Hermitian matrix; return it as complex."""
    a = np.asarray(a, dtype=complex)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise OperatorError(f"{name} must be a square matrix, got shape {a.shape}")
    dev = np.max(np.abs(a - dagger(a)))
    if dev > tol:
        raise OperatorError(f"{name} is not Hermitian: max|A - A^dag| = {dev:.3e} > {tol:.1e}")
    return a


def check_density_matrix(rho, herm_tol=HERM_TOL, trace_tol=TRACE_TOL, psd_tol=PSD_TOL):
    """Validate the density-matrix contract: Hermitian, unit trace, PSD.

    Returns the validated array.  Tolerances follow the library-wide
    defaults (1e-10 Hermiticity and trace, -1e-8 minimum eigenvalue).
    """
    rho = check_hermitian(rho, tol=herm_tol, name="density matrix")
    tr = np.trace(rho)
    if abs(tr - 1.0) > trace_tol:
        raise OperatorError(f"density matrix trace {tr} deviates from 1 by more than {trace_tol:.1e}")
    lo = np.linalg.eigvalsh(rho)[0]
    if lo < -psd_tol:
        raise OperatorError(f"density matrix has eigenvalue {lo:.3e} < -{psd_tol:.1e}")
    return rho


def check_projector(p, tol=1e-10, rank_one=True, name="target"):
    """Validate an orthogonal projector; optionally require rank one."""
    p = check_hermitian(p, tol=tol, name=name)
    dev = np.max(np.abs(p @ p - p))
    if dev > tol:
        raise OperatorError(f"{name} is not idempotent: max|P^2 - P| = {dev:.3e}")
    tr = np.trace(p).real
    if rank_one:
        if abs(tr - 1.0) > tol:
            raise OperatorError(f"{name} must be a rank-1 projector, got trace {tr}")
    elif tr < 1.0 - tol:
        raise OperatorError(f"{name} has trace {tr} < 1; not a projector")
    return p


def pure_state(dim, index):
    """Rank-1 projector |index><index| in a ``dim``-dimensional space."""
    rho = np.zeros((dim, dim), dtype=complex)
    rho[index, index] = 1.0
    return rho


def angular_momentum_ops(j):
    """Spin-j matrices ``(Jx, Jy, Jz)`` in the Jz eigenbasis, m = j..-j.

    ``j`` must be a positive half-integer; the returned operators satisfy
    [Jx, Jy] = i Jz and Jz = diag(j, j-1, ..., -j).
    """
    two_j = 2 * j
    if abs(two_j - round(two_j)) > 1e-12 or round(two_j) < 1:
        raise OperatorError(f"j must be a positive half-integer, got {j}")
    j = round(two_j) / 2.0
    dim = int(round(two_j)) + 1
    m = j - np.arange(dim)
    jz = np.diag(m).astype(complex)
    # raising operator in descending-m ordering sits on the superdiagonal
    jplus = np.zeros((dim, dim), dtype=complex)
    for k in range(1, dim):
        mk = m[k]
        jplus[k - 1, k] = np.sqrt(j * (j + 1) - mk * (mk + 1))
    jminus = dagger(jplus)
    jx = (jplus + jminus) / 2.0
    jy = (jplus - jminus) / 2.0j
    return jx, jy, jz


def _z_signs(n):
    """Per-site Z eigenvalues for all 2^n bitstrings, qubit 0 most significant."""
    idx = np.arange(2**n)
    signs = np.empty((n, 2**n))
    for i in range(n):
        bit = (idx >> (n - 1 - i)) & 1
        signs[i] = 1.0 - 2.0 * bit
    return signs


def ising_hamiltonian(n, edges, fields):
    """Diagonal Ising Hamiltonian sum_E J_ij Z_i Z_j + sum_i h_i Z_i.

    ``edges`` is a list of (i, j, J_ij); ``fields`` the per-site h_i.
    The computational basis is ordered by bitstring value with qubit 0
    most significant, so |0...0> is the first basis vector.
    """
    if n < 1:
        raise OperatorError("qubit count must be >= 1")
    fields = np.asarray(fields, dtype=float)
    if fields.shape != (n,):
        raise OperatorError(f"expected {n} local fields, got shape {fields.shape}")
    signs = _z_signs(n)
    diag = signs.T @ fields
    seen = set()
    for i, jq, coupling in edges:
        if not (0 <= i < n and 0 <= jq < n) or i == jq:
            raise OperatorError(f"edge ({i},{jq}) out of range for {n} qubits")
        key = (min(i, jq), max(i, jq))
        if key in seen:
            raise OperatorError(f"duplicate edge {key}")
        seen.add(key)
        diag = diag + coupling * signs[i] * signs[jq]
    return np.diag(diag).astype(complex)


def pauli_chain_product(n, axis):
    """n-fold tensor product of one Pauli matrix, e.g. Z x Z x ... x Z."""
    if n < 1:
        raise OperatorError("qubit count must be >= 1")
    if axis not in _PAULI:
        raise OperatorError(f"axis must be one of X, Y, Z, got {axis!r}")
    op = _PAULI[axis]
    out = op
    for _ in range(n - 1):
        out = np.kron(out, op)
    return out


def fidelity(rho, target):
    """Tr(rho * target) for a rank-1 projector target; real in [0, 1]."""
    rho = np.asarray(rho, dtype=complex)
    target = check_projector(target, rank_one=True)
    if rho.shape != target.shape:
        raise OperatorError(f"dimension mismatch: state {rho.shape} vs target {target.shape}")
    val = np.trace(rho @ target)
    if abs(val.imag) > 1e-10:
        raise OperatorError(f"fidelity has imaginary residue {val.imag:.3e}")
    return float(val.real)


def bures_sq_to_pure(rho, target):
    """Squared Bures distance to a pure target: 2 - 2 Tr(rho * target)."""
    return 2.0 - 2.0 * fidelity(rho, target)


@dataclass(frozen=True)
class SpectralDecomposition:
    """Eigenvalues of a Hermitian operator grouped into invariant subspaces.

    ``eigenvalues`` holds one representative value per subspace, sorted
    descending; ``raw_eigenvalues`` the ungrouped values in each group;
    ``projectors`` the orthogonal projector onto each subspace.
    """

    eigenvalues: np.ndarray
    projectors: tuple
    raw_eigenvalues: tuple

    @property
    def n_subspaces(self):
        return len(self.projectors)

    def populations(self, rho):
        """Subspace populations Tr(rho P_a) as a real vector."""
        return np.array([np.trace(rho @ p).real for p in self.projectors])


def spectral_decomposition(a, degeneracy_tol=DEGENERACY_TOL):
    """Group the spectrum of a Hermitian operator into subspace projectors.

    Eigenvalues within ``degeneracy_tol`` of each other are merged into a
    single subspace; projectors are returned sorted by descending eigenvalue.
    """
    a = check_hermitian(a, name="operator")
    evals, evecs = np.linalg.eigh(a)
    order = np.argsort(evals)[::-1]
    evals = evals[order]
    evecs = evecs[:, order]
    groups = [[0]]
    for k in range(1, len(evals)):
        if abs(evals[k] - evals[groups[-1][-1]]) <= degeneracy_tol:
            groups[-1].append(k)
        else:
            groups.append([k])
    projectors = []
    reps = []
    raws = []
    for g in groups:
        v = evecs[:, g]
        projectors.append(v @ dagger(v))
        reps.append(float(np.mean(evals[g])))
        raws.append(np.array(evals[g]))
    return SpectralDecomposition(
        eigenvalues=np.array(reps),
        projectors=tuple(projectors),
        raw_eigenvalues=tuple(raws),
    )


def invariant_subspace_gap(L, decomposition, eta):
    """Pairwise spectral gaps across subspaces and the reduction rate.

    Returns ``(delta, r)`` where ``delta[a, b]`` is the minimal eigenvalue
    separation between subspaces a and b of the measurement operator and
    ``r = (eta / 2) * min_{a != b} delta^2`` is the exponential rate at
    which the off-subspace coherence functional decays.
    """
    L = check_hermitian(L, name="measurement operator")
    m = decomposition.n_subspaces
    if m < 2:
        raise OperatorError("gap undefined: spectral decomposition has a single subspace")
    for p in decomposition.projectors:
        dev = np.max(np.abs(L @ p - p @ L))
        if dev > 1e-10:
            raise OperatorError(f"projector does not commute with L: max|[L,P]| = {dev:.3e}")
    delta = np.zeros((m, m))
    for a in range(m):
        for b in range(a + 1, m):
            la = decomposition.raw_eigenvalues[a]
            lb = decomposition.raw_eigenvalues[b]
            gap = np.min(np.abs(la[:, None] - lb[None, :]))
            delta[a, b] = delta[b, a] = gap
    off = delta[~np.eye(m, dtype=bool)]
    r = 0.5 * eta * float(np.min(off)) ** 2
    return delta, r


def subspace_lyapunov(rho, decomposition):
    """Coherence functional V = sum_{a<b} sqrt(p_a p_b) over subspace pairs.

    V = 0 exactly when a single subspace carries all population; it is the
    quantity whose ensemble mean decays at rate r under measurement.
    """
    p = decomposition.populations(rho)
    if np.min(p) < -1e-10:
        raise OperatorError(f"negative subspace population {np.min(p):.3e}")
    p = np.clip(p, 0.0, None)
    v = 0.0
    for a in range(len(p)):
        for b in range(a + 1, len(p)):
            v += np.sqrt(p[a] * p[b])
    return float(v)
