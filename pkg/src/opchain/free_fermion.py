"""Free-fermion solver for the spin-1/2 XX point.

At zero anisotropy the conjugation dynamics of a vectorized local operator
is a quadratic-fermion problem: the doubled chain hosts 2L modes (modes
2j-1, 2j attach to spin site j) hopping on two uncoupled open chains, and
the named local operators map to mode-occupation (Slater) states.  Number
fluctuations across a cut and the second Renyi entropy of the reduced
correlation matrix then follow from its eigenvalues in O(L^3) time,
independent of any tensor-network truncation — which makes this module an
oracle for the TEBD engine at the XX point.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

LN2 = float(np.log(2.0))

## coefficient of ln t in the domain-wall number-fluctuation growth law
ANTAL_SLOPE = 1.0 / (2.0 * np.pi ** 2)

## declared here, written by the runner
GAUSSIAN_CSV_COLUMNS = ("t", "delta_N2", "S2_gaussian", "lower_bound", "upper_bound")


## ---------------------------------------------------------------------------
## operator -> occupation mapping

@dataclass(frozen=True)
class ModeOccupation:
    """A Slater state of the doubled chain: which of modes 1..2L are filled.

    `phase` is the unit scalar in front of the filled-mode monomial; it does
    not affect the correlation matrix and is kept for bookkeeping only.
    """

    L: int
    occupied: frozenset
    phase: complex = 1.0

    def __post_init__(self):
        if self.L < 1:
            raise ValueError("need at least one site")
        if not all(1 <= m <= 2 * self.L for m in self.occupied):
            raise ValueError(f"modes outside 1..{2 * self.L}")
        if abs(abs(self.phase) - 1.0) > 1e-12:
            raise ValueError("phase must be a unit scalar")

    @property
    def n_modes(self) -> int:
        return 2 * self.L

    @property
    def index(self) -> int:
        """Number of filled modes (the operator's fermionic index)."""
        return len(self.occupied)


@dataclass(frozen=True)
class OccupationSuperposition:
    """Sum of Slater states; arises for sigma^+ = (sx + i sy)/2.

    Such superpositions are not Gaussian, so this module does not evolve
    them; the descriptor records the decomposition for callers that need it
    (entropies of sigma^+ are measured with the TEBD engine instead).
    """

    components: tuple  ## ((weight, ModeOccupation), ...)


def map_operator(name: str, site: int, L: int):
    """Mode occupation of a named local operator at 1-based `site`.

    sz_j fills the two modes of its own site; sx_j fills all modes strictly
    to the left plus the first mode of site j; string_z(j) (the product of
    sz over sites 1..j-1) fills exactly the left block.  Every operator
    supported on sites 1..j therefore occupies only modes 1..2j.
    """
    if not (1 <= site <= L):
        raise ValueError(f"site {site} outside 1..{L}")
    prefix = frozenset(range(1, 2 * (site - 1) + 1))
    if name == "sz":
        return ModeOccupation(L, frozenset({2 * site - 1, 2 * site}), phase=-1j)
    if name == "sx":
        return ModeOccupation(L, prefix | {2 * site - 1}, phase=1j ** (site - 1))
    if name == "string_z":
        return ModeOccupation(L, prefix, phase=1j ** (site - 1))
    if name == "s_plus":
        x_part = ModeOccupation(L, prefix | {2 * site - 1}, phase=1j ** (site - 1))
        y_part = ModeOccupation(L, prefix | {2 * site}, phase=1j ** site)
        return OccupationSuperposition(components=((0.5, x_part), (0.5, y_part)))
    raise ValueError(f"unknown operator name {name!r}")


def chain_modes(L: int):
    """The two uncoupled hopping chains, as sorted 1-based mode tuples.

    The hopping graph connects (2j, 2j+1) and (2j-1, 2j+2), which splits
    the 2L modes into {1,4,5,8,...} and {2,3,6,7,...}.
    """
    a = tuple(m for m in range(1, 2 * L + 1) if m % 4 in (0, 1))
    b = tuple(m for m in range(1, 2 * L + 1) if m % 4 in (2, 3))
    return a, b


## ---------------------------------------------------------------------------
## the quadratic Hamiltonian and Gaussian states

@dataclass(frozen=True)
class SingleParticleHamiltonian:
    """Hermitian hopping matrix h with H = sum_mn h_mn a^dag_m a_n."""

    n_modes: int
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        m = self.matrix
        if m.shape != (self.n_modes, self.n_modes):
            raise ValueError("hopping matrix shape mismatch")
        if np.max(np.abs(m - m.conj().T)) > 1e-12:
            raise ValueError("hopping matrix must be Hermitian")

    @cached_property
    def _eig(self):
        ## diagonalize once; every propagator reuses the same basis
        evals, evecs = np.linalg.eigh(self.matrix)
        return evals, evecs

    def propagator(self, t: float) -> np.ndarray:
        """e^{i h t} (the mode rotation conjugating correlation matrices)."""
        evals, evecs = self._eig
        return (evecs * np.exp(1j * evals * t)) @ evecs.conj().T


def build_xx_hamiltonian(L: int) -> SingleParticleHamiltonian:
    """Hopping matrix of the doubled chain at the XX point.

    H = i sum_{j=1..L-1} (a^dag_{2j} a_{2j+1} + a^dag_{2j-1} a_{2j+2} - h.c.)
    with 1-based mode labels.  The graph decomposes into the two open chains
    returned by `chain_modes`; uncoupled chains mean a left-filled block
    spreads as two independent domain walls.
    """
    if L < 2:
        raise ValueError("need at least two sites")
    n = 2 * L
    upper = np.zeros((n, n), dtype=complex)
    for j in range(1, L):
        upper[2 * j - 1, 2 * j] = 1j          ## modes (2j, 2j+1), 0-based row/col
        upper[2 * j - 2, 2 * j + 1] = 1j      ## modes (2j-1, 2j+2)
    return SingleParticleHamiltonian(n_modes=n, matrix=upper + upper.conj().T)


@dataclass(frozen=True)
class GaussianState:
    """Two-point correlation matrix C_mn = <a^dag_m a_n> of 2L modes."""

    corr: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = self.corr
        if c.ndim != 2 or c.shape[0] != c.shape[1]:
            raise ValueError("correlation matrix must be square")
        if np.max(np.abs(c - c.conj().T)) > 1e-10:
            raise ValueError("correlation matrix must be Hermitian")

    @property
    def n_modes(self) -> int:
        return self.corr.shape[0]

    @property
    def L(self) -> int:
        return self.n_modes // 2

    def particle_number(self) -> float:
        return float(np.trace(self.corr).real)

    def projector_defect(self) -> float:
        """max |C^2 - C|; zero for Slater-determinant states."""
        return float(np.max(np.abs(self.corr @ self.corr - self.corr)))

    def occupation_spectrum(self) -> np.ndarray:
        """Eigenvalues of C; physical states keep them inside [0, 1]."""
        return np.linalg.eigvalsh(self.corr)


def to_state(occ: ModeOccupation) -> GaussianState:
    """Diagonal projector correlation matrix of a mode-occupation state."""
    diag = np.zeros(occ.n_modes)
    for m in occ.occupied:
        diag[m - 1] = 1.0
    return GaussianState(corr=np.diag(diag).astype(complex))


def evolve_gaussian(state: GaussianState, h: SingleParticleHamiltonian,
                    t: float) -> GaussianState:
    """C(t) = e^{iht} C(0) e^{-iht}.

    The sign matches the Heisenberg conjugation used by the TEBD engine
    (cross-checked against dense diagonalization in the tests); it preserves
    hermiticity, the spectrum of C, Tr C, and the projector property.
    """
    if state.n_modes != h.n_modes:
        raise ValueError("state and Hamiltonian mode counts differ")
    u = h.propagator(t)
    c = u @ state.corr @ u.conj().T
    ## re-symmetrize rounding noise so downstream eigvalsh stays exact
    c = 0.5 * (c + c.conj().T)
    return GaussianState(corr=c)


## ---------------------------------------------------------------------------
## cuts, fluctuations, entropies

def _block_indices(state: GaussianState, cut: int, modes=None) -> np.ndarray:
    """0-based indices of partition A: modes 1..2*cut, optionally restricted
    to a mode subset (used to split the two uncoupled chains)."""
    if not (1 <= cut <= state.L - 1):
        raise ValueError(f"cut {cut} outside 1..{state.L - 1}")
    top = 2 * cut
    if modes is None:
        return np.arange(top)
    sel = sorted(m - 1 for m in modes if 1 <= m <= top)
    return np.asarray(sel, dtype=int)


def partition_block(state: GaussianState, cut: int, modes=None) -> np.ndarray:
    """Reduced correlation matrix of spin sites 1..cut (mode block 1..2*cut)."""
    idx = _block_indices(state, cut, modes)
    return state.corr[np.ix_(idx, idx)]


def partition_fluctuation(state: GaussianState, cut: int, modes=None) -> float:
    """Particle-number variance in partition A: Tr[C_A (1 - C_A)].

    Equals sum nu_j (1 - nu_j) over eigenvalues of C_A, and is symmetric
    between the partition and its complement when the total number is sharp.
    """
    c_a = partition_block(state, cut, modes)
    return float((np.trace(c_a) - np.vdot(c_a, c_a)).real)


def partition_renyi2(state: GaussianState, cut: int, modes=None) -> float:
    """Second Renyi entropy (bits) of partition A from mode occupations:
    S2 = -sum_j log2(nu_j^2 + (1 - nu_j)^2)."""
    c_a = partition_block(state, cut, modes)
    nu = np.clip(np.linalg.eigvalsh(c_a), 0.0, 1.0)
    return float(-np.sum(np.log2(nu ** 2 + (1.0 - nu) ** 2)))


def sandwich_bounds(delta_n2: float):
    """The two-sided number-fluctuation bound on S2 (bits):
    (4/ln2) dN^2 >= S2 >= (2/ln2) dN^2."""
    return (2.0 / LN2) * delta_n2, (4.0 / LN2) * delta_n2


def check_sandwich(state: GaussianState, cut: int, modes=None,
                   tol: float = 1e-9) -> dict:
    """Evaluate the fluctuation-entropy sandwich at one cut."""
    dn2 = partition_fluctuation(state, cut, modes)
    s2 = partition_renyi2(state, cut, modes)
    lower, upper = sandwich_bounds(dn2)
    return {
        "delta_N2": dn2,
        "s2": s2,
        "lower": lower,
        "upper": upper,
        "holds": bool(lower - tol <= s2 <= upper + tol),
    }


## ---------------------------------------------------------------------------
## growth-law fit

def fit_antal_growth(series) -> dict:
    """Least-squares fit of dN^2 = slope * ln t + offset.

    For a single half-filled chain released from a domain wall the slope is
    1/(2 pi^2) ~ 0.05066.  The fit is flagged low-confidence when the time
    window spans less than a factor of 4 or has fewer than 8 points; the
    offset (the additive constant of the growth law) is a free parameter.
    """
    pts = [(float(t), float(y)) for t, y in series]
    if any(t <= 0 for t, _ in pts):
        raise ValueError("times must be positive for a logarithmic fit")
    if len(pts) < 2:
        raise ValueError("need at least two points to fit")
    t = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    slope, offset = np.polyfit(np.log(t), y, 1)
    resid = y - (slope * np.log(t) + offset)
    low_confidence = (t.max() / t.min() < 4.0) or (len(pts) < 8)
    return {
        "slope": float(slope),
        "offset": float(offset),
        "residual": float(np.sqrt(np.mean(resid ** 2))),
        "low_confidence": bool(low_confidence),
        "n_points": len(pts),
        "t_ratio": float(t.max() / t.min()),
    }
