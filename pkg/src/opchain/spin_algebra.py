"""Local spin algebra: spin matrices, orthonormal operator bases, bond Hamiltonians.

Operators on a single site live in a d^2-dimensional space equipped with the
weighted Hilbert-Schmidt inner product (A, B) = (1/d) Tr[A^dag B].  All
higher-level modules expand operators in the orthonormal Hermitian basis
returned by :func:`make_basis`, whose first element is always the identity.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

## ---------------------------------------------------------------------------
## spin matrices

PAULI_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
PAULI_Y = np.array([[0.0, -1.0j], [1.0j, 0.0]], dtype=complex)
PAULI_Z = np.array([[1.0, 0.0], [0.0, -1.0]], dtype=complex)

_S2 = 1.0 / np.sqrt(2.0)
SPIN1_X = np.array([[0, _S2, 0], [_S2, 0, _S2], [0, _S2, 0]], dtype=complex)
SPIN1_Y = np.array([[0, -1j * _S2, 0], [1j * _S2, 0, -1j * _S2], [0, 1j * _S2, 0]], dtype=complex)
SPIN1_Z = np.array([[1.0, 0, 0], [0, 0.0, 0], [0, 0, -1.0]], dtype=complex)


class SpinKind(enum.Enum):
    """Local Hilbert space flavor: spin-1/2 (d=2) or spin-1 (d=3)."""

    HALF = "half"
    ONE = "one"

    @property
    def d(self) -> int:
        return 2 if self is SpinKind.HALF else 3

    @classmethod
    def from_string(cls, text: str) -> "SpinKind":
        key = str(text).strip().lower()
        for kind in cls:
            if key == kind.value:
                return kind
        raise ValueError(f"unknown spin kind {text!r}; expected 'half' or 'one'")


def spin_matrices(kind: SpinKind) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return (sx, sy, sz) for the given kind.

    Spin-1/2 uses the Pauli matrices; spin-1 uses the standard spin-1
    matrices with sz eigenvalues (1, 0, -1).
    """
    if kind is SpinKind.HALF:
        return PAULI_X, PAULI_Y, PAULI_Z
    return SPIN1_X, SPIN1_Y, SPIN1_Z


## ---------------------------------------------------------------------------
## orthonormal operator basis

def hs_inner(a: np.ndarray, b: np.ndarray) -> complex:
    """Weighted Hilbert-Schmidt inner product (1/d) Tr[a^dag b]."""
    d = a.shape[0]
    return complex(np.trace(a.conj().T @ b)) / d


@dataclass(frozen=True)
class LocalOperatorBasis:
    """Orthonormal Hermitian operator basis for one site.

    elements[0] is the identity; (1/d) Tr[B_a^dag B_b] = delta_ab.
    """

    kind: SpinKind
    elements: tuple = field(repr=False)

    @property
    def d(self) -> int:
        return self.kind.d

    @property
    def size(self) -> int:
        return len(self.elements)

    def expand(self, matrix: np.ndarray) -> np.ndarray:
        """Coefficients c_a = (1/d) Tr[B_a^dag M] of a d x d matrix."""
        d = self.d
        if matrix.shape != (d, d):
            raise ValueError(f"expected {(d, d)} matrix, got {matrix.shape}")
        return np.array([hs_inner(b, matrix) for b in self.elements])

    def reconstruct(self, coeffs: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`expand`: M = sum_a c_a B_a."""
        coeffs = np.asarray(coeffs)
        if coeffs.shape != (self.size,):
            raise ValueError(f"expected {self.size} coefficients, got {coeffs.shape}")
        out = np.zeros((self.d, self.d), dtype=complex)
        for c, b in zip(coeffs, self.elements):
            out += c * b
        return out


def _gram_schmidt(generators: list[np.ndarray]) -> list[np.ndarray]:
    """Orthonormalize under (1/d) Tr[A^dag B]; drops dependent generators."""
    basis: list[np.ndarray] = []
    for g in generators:
        v = g.astype(complex).copy()
        for _ in range(2):  ## double pass for numerical orthogonality
            for b in basis:
                v -= hs_inner(b, v) * b
        norm = np.sqrt(abs(hs_inner(v, v)))
        if norm > 1e-12:
            basis.append(v / norm)
    return basis


def make_basis(kind: SpinKind) -> LocalOperatorBasis:
    """Build the orthonormal Hermitian operator basis for one site.

    Spin-1/2: {1, sx, sy, sz} (already orthonormal).  Spin-1: Gram-Schmidt
    over a fixed, deterministic generating list (identity, the three spin
    matrices, their squares and symmetrized products) so that the basis --
    and with it every Schmidt spectrum downstream -- is reproducible
    bit-for-bit.
    """
    d = kind.d
    eye = np.eye(d, dtype=complex)
    sx, sy, sz = spin_matrices(kind)
    if kind is SpinKind.HALF:
        elements = [eye, sx.copy(), sy.copy(), sz.copy()]
    else:
        generators = [
            eye,
            sx, sy, sz,
            sx @ sx, sy @ sy, sz @ sz,
            sx @ sy + sy @ sx,
            sy @ sz + sz @ sy,
            sx @ sz + sz @ sx,
        ]
        elements = _gram_schmidt(generators)
    if len(elements) != d * d:
        raise RuntimeError(f"basis construction produced {len(elements)} elements, expected {d * d}")
    for m in elements:
        m.setflags(write=False)
    return LocalOperatorBasis(kind=kind, elements=tuple(elements))


## ---------------------------------------------------------------------------
## bond Hamiltonian

@dataclass(frozen=True)
class BondHamiltonian:
    """Two-site XXZ bond term h = -(1/2) (sx sx + sy sy + delta * sz sz)."""

    kind: SpinKind
    delta: float
    matrix: np.ndarray = field(repr=False)

    @property
    def d(self) -> int:
        return self.kind.d


def make_bond_hamiltonian(kind: SpinKind, delta: float) -> BondHamiltonian:
    """XXZ bond Hamiltonian on two sites with anisotropy delta."""
    delta = float(delta)
    if not np.isfinite(delta):
        raise ValueError(f"anisotropy must be finite, got {delta}")
    sx, sy, sz = spin_matrices(kind)
    h = -0.5 * (np.kron(sx, sx) + np.kron(sy, sy) + delta * np.kron(sz, sz))
    h = np.ascontiguousarray(h)
    h.setflags(write=False)
    return BondHamiltonian(kind=kind, delta=delta, matrix=h)


## ---------------------------------------------------------------------------
## named local operators

def local_operator(name: str, kind: SpinKind, site: int | None = None):
    """Return the named single-site matrix, or the site list for a string.

    Single-site names: sz, sx, sy, s_plus (= (sx + i sy)/2).  The name
    "string_z" requires the site argument j and denotes the product of sz
    over sites 1..j-1 (1-based); it is returned as a list of
    (site, matrix) pairs, which is a product operator with bond dimension 1.
    """
    sx, sy, sz = spin_matrices(kind)
    named = {
        "sz": sz,
        "sx": sx,
        "sy": sy,
        "s_plus": (sx + 1j * sy) / 2.0,
    }
    if name in named:
        return named[name].copy()
    if name == "string_z":
        if site is None or site < 1:
            raise ValueError("string_z requires a site argument j >= 1")
        return [(l, sz.copy()) for l in range(1, site)]
    raise ValueError(f"unknown operator name {name!r}")


OPERATOR_NAMES = ("sz", "sx", "sy", "s_plus", "string_z")
