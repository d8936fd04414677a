"""Dense exact solver for small chains.

Heisenberg evolution O(t) = e^{iHt} O e^{-iHt} is carried out by a single
eigendecomposition of H, so the oracle has no time-discretization error; any
discrepancy with the tensor-network engine is Trotter or truncation error.
The module also computes exact operator Schmidt spectra across any cut and
checks the trace-inequality chain that relates the autocorrelation function
to the operator entanglement spectrum.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .operator_mps import SchmidtSpectrum, dense_coefficient_tensor
from .spin_algebra import SpinKind, make_basis, make_bond_hamiltonian

## dense matrices grow as d^L x d^L; keep the oracle honest about its reach
MAX_SITES = {SpinKind.HALF: 10, SpinKind.ONE: 6}


def check_size_guard(kind: SpinKind, L: int):
    if L > MAX_SITES[kind]:
        raise ValueError(
            f"dense solver limited to L <= {MAX_SITES[kind]} for {kind.value} spins, got L={L}"
        )


@dataclass(frozen=True)
class DenseOperator:
    """A d^L x d^L operator with its chain geometry attached."""

    L: int
    kind: SpinKind
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        check_size_guard(self.kind, self.L)
        n = self.kind.d ** self.L
        if self.matrix.shape != (n, n):
            raise ValueError(f"expected {(n, n)} matrix for L={self.L}, got {self.matrix.shape}")

    @property
    def d(self) -> int:
        return self.kind.d

    def hs_norm(self) -> float:
        """Weighted Hilbert-Schmidt norm sqrt((1/d^L) Tr[O^dag O])."""
        return float(np.linalg.norm(self.matrix)) / np.sqrt(self.d ** self.L)

    def normalized(self) -> "DenseOperator":
        norm = self.hs_norm()
        if norm < 1e-300:
            raise ValueError("zero operator")
        return DenseOperator(self.L, self.kind, self.matrix / norm)


def dense_from_sites(ops, L: int, kind: SpinKind) -> DenseOperator:
    """Kron product of on-site factors (identity on unnamed sites)."""
    check_size_guard(kind, L)
    d = kind.d
    site_ops = {int(site): np.asarray(m, dtype=complex) for site, m in ops}
    out = np.ones((1, 1), dtype=complex)
    for site in range(1, L + 1):
        out = np.kron(out, site_ops.get(site, np.eye(d)))
    return DenseOperator(L, kind, out)


def xxz_hamiltonian_dense(L: int, kind: SpinKind, delta: float) -> DenseOperator:
    """Open-boundary XXZ chain Hamiltonian as a dense matrix."""
    check_size_guard(kind, L)
    d = kind.d
    bond = make_bond_hamiltonian(kind, delta).matrix
    n = d ** L
    h = np.zeros((n, n), dtype=complex)
    for j in range(L - 1):
        left = np.eye(d ** j)
        right = np.eye(d ** (L - j - 2))
        h += np.kron(np.kron(left, bond), right)
    return DenseOperator(L, kind, h)


## ---------------------------------------------------------------------------
## exact propagation

class Propagator:
    """Reusable eigendecomposition of a Hamiltonian for many-time evolution."""

    def __init__(self, hamiltonian: DenseOperator):
        m = hamiltonian.matrix
        if not np.allclose(m, m.conj().T, atol=1e-12):
            raise ValueError("Hamiltonian must be Hermitian")
        self.hamiltonian = hamiltonian
        self.evals, self.evecs = np.linalg.eigh(m)

    def evolve(self, op: DenseOperator, t: float) -> DenseOperator:
        if op.L != self.hamiltonian.L or op.kind is not self.hamiltonian.kind:
            raise ValueError("operator and Hamiltonian live on different chains")
        phases = np.exp(1j * self.evals * t)
        w = (self.evecs * phases) @ self.evecs.conj().T   ## e^{iHt}
        return DenseOperator(op.L, op.kind, w @ op.matrix @ w.conj().T)


def evolve_exact(op: DenseOperator, hamiltonian: DenseOperator, t: float) -> DenseOperator:
    """O(t) = e^{iHt} O e^{-iHt} via exact eigendecomposition."""
    return Propagator(hamiltonian).evolve(op, t)


def itac_exact(op: DenseOperator, hamiltonian: DenseOperator, t: float) -> complex:
    """Infinite-temperature autocorrelation (1/d^L) Tr[O^dag(t) O(0)].

    The input is expected to be normalized ((1/d^L) Tr[O^dag O] = 1), so the
    value at t = 0 is exactly 1.
    """
    ot = evolve_exact(op, hamiltonian, t)
    n = op.d ** op.L
    return complex(np.vdot(ot.matrix, op.matrix)) / n


## ---------------------------------------------------------------------------
## operator Schmidt data across a cut

def lambda_matrix(op: DenseOperator, cut: int) -> np.ndarray:
    """Coefficient matrix of O across the cut, in the product operator basis.

    `cut` counts the sites to the left (1-based bond convention); the result
    has shape (D^cut, D^(L-cut)) and satisfies sum |Lambda|^2 = 1 for a
    normalized operator.
    """
    if not (1 <= cut <= op.L - 1):
        raise ValueError(f"cut {cut} outside 1..{op.L - 1}")
    basis = make_basis(op.kind)
    coeffs = dense_coefficient_tensor(op.matrix, op.L, basis)
    D = op.d ** 2
    return coeffs.reshape(D ** cut, D ** (op.L - cut))


def schmidt_exact(op: DenseOperator, cut: int) -> SchmidtSpectrum:
    """Squared Schmidt values of the operator across the cut (normalized)."""
    lam_mat = lambda_matrix(op, cut)
    sv = np.linalg.svd(lam_mat, compute_uv=False)
    lam = sv ** 2
    lam = lam / lam.sum()
    lam = lam[lam > 1e-28]  ## drop pure rounding noise
    return SchmidtSpectrum(bond_index=cut, values=lam / lam.sum())


## ---------------------------------------------------------------------------
## the trace-inequality chain

def verify_inequality_chain(op: DenseOperator, hamiltonian: DenseOperator, t: float,
                            alpha: float, cut: int | None = None, tol: float = 1e-10) -> dict:
    """Evaluate |ITAC| <= sum_k sqrt(lam_k(t) lam_k(0)) <= renyi bound.

    The first step is von Neumann's trace inequality applied to the overlap
    of the coefficient matrices at times t and 0 (spectra sorted
    non-increasing); the second combines Jensen's inequality with
    Cauchy-Schwarz and yields
    (Tr sqrt(rho_0))^(1-1/alpha) * (sum_k lam_k(t)^alpha)^(1/(2*alpha)).
    For an initial product operator (Tr sqrt(rho_0) = 1) the outer inequality
    rearranges to the entropy bound S_alpha <= -(2a/(a-1)) log2|ITAC|.
    """
    if alpha <= 1:
        raise ValueError("alpha must exceed 1")
    if cut is None:
        cut = op.L // 2
    op = op.normalized()
    ot = evolve_exact(op, hamiltonian, t)

    lam_mat_0 = lambda_matrix(op, cut)
    lam_mat_t = lambda_matrix(ot, cut)
    itac_abs = float(abs(np.vdot(lam_mat_t, lam_mat_0)))

    sv0 = np.sort(np.linalg.svd(lam_mat_0, compute_uv=False))[::-1]
    svt = np.sort(np.linalg.svd(lam_mat_t, compute_uv=False))[::-1]
    lam0 = sv0 ** 2 / np.sum(sv0 ** 2)
    lamt = svt ** 2 / np.sum(svt ** 2)
    n = max(lam0.size, lamt.size)
    lam0 = np.pad(lam0, (0, n - lam0.size))
    lamt = np.pad(lamt, (0, n - lamt.size))

    schmidt_bound = float(np.sum(np.sqrt(lamt * lam0)))
    tr_sqrt_rho0 = float(np.sum(np.sqrt(lam0)))
    renyi_bound = float(tr_sqrt_rho0 ** (1.0 - 1.0 / alpha) * np.sum(lamt ** alpha) ** (1.0 / (2.0 * alpha)))

    all_hold = (itac_abs <= schmidt_bound + tol) and (schmidt_bound <= renyi_bound + tol)
    return {
        "itac_abs": itac_abs,
        "schmidt_bound": schmidt_bound,
        "renyi_bound": renyi_bound,
        "all_hold": bool(all_hold),
    }
