"""Heisenberg-picture operator dynamics for 1D spin chains.

Local operators are evolved as vectorized matrix product operators (TEBD in
operator space) and cross-validated against a free-fermion solver (XX point)
and dense exact diagonalization (small chains).
"""

__version__ = "0.1.0"

from .spin_algebra import SpinKind, make_basis, make_bond_hamiltonian, local_operator

__all__ = [
    "SpinKind",
    "make_basis",
    "make_bond_hamiltonian",
    "local_operator",
    "__version__",
]
