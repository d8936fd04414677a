"""Heisenberg-picture TEBD on operator space.

Evolution O(t + tau) = e^{iH tau} O(t) e^{-iH tau} is split into even/odd
bond sweeps of two-site super-gates.  A super-gate is the conjugation map
X -> e^{ih tau} X e^{-ih tau} of one bond term, expressed as a d^4 x d^4
unitary on the doubled local operator basis; it is built from the exact
eigendecomposition of the d^2 x d^2 bond Hamiltonian, so the only evolution
errors are the Trotter splitting and bond truncation.
"""

from __future__ import annotations

import concurrent.futures
import logging
import time
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

from .operator_mps import TruncationPolicy, VectorizedMPO, renyi_entropy
from .spin_algebra import BondHamiltonian, LocalOperatorBasis, make_basis

## |itac| below this floor makes the entropy bound vacuous (rhs -> infinity)
ITAC_FLOOR = 1e-12

## declared here, written by the runner (one row per TimeSeriesRecord)
TEBD_CSV_COLUMNS = (
    "t", "S2_bond_center", "S1_bond_center", "Smax_over_bonds",
    "itac_re", "itac_im", "abs_itac", "bound_rhs_alpha2",
    "discarded_weight", "chi_used",
)

## conservative ballistic velocity for the open-boundary advisory time
LIGHT_CONE_VELOCITY = 2.0


def advisory_time(L: int, velocity: float = LIGHT_CONE_VELOCITY) -> float:
    """Time at which the ballistic front from the chain center reaches an edge."""
    return L / (2.0 * velocity)


## ---------------------------------------------------------------------------
## super-gates

@dataclass(frozen=True)
class TwoSiteSuperGate:
    """Unitary conjugation map in the doubled two-site operator basis."""

    bond_matrix: np.ndarray = field(repr=False)
    tau: float = 0.0
    source: BondHamiltonian | None = None


def build_super_gate(hamiltonian: BondHamiltonian, tau: float,
                     basis: LocalOperatorBasis | None = None) -> TwoSiteSuperGate:
    """G[(a'b'),(ab)] = (1/d^2) Tr[(B_a' x B_b')^dag U (B_a x B_b) U^dag].

    U = e^{i h tau} is formed by exact diagonalization of the bond term, so
    G represents the conjugation exactly (no series truncation); G is unitary
    because conjugation preserves the weighted Hilbert-Schmidt inner product.
    """
    if basis is None:
        basis = make_basis(hamiltonian.kind)
    d = hamiltonian.d
    evals, evecs = np.linalg.eigh(hamiltonian.matrix)
    u = (evecs * np.exp(1j * evals * tau)) @ evecs.conj().T

    pair = [np.kron(a, b) for a in basis.elements for b in basis.elements]
    p = np.stack([m.reshape(-1) for m in pair])                   ## (D^2, d^4)
    x = np.stack([(u @ m @ u.conj().T).reshape(-1) for m in pair])
    g = (p.conj() @ x.T) / (d * d)
    return TwoSiteSuperGate(bond_matrix=g, tau=float(tau), source=hamiltonian)


## ---------------------------------------------------------------------------
## Trotter schedules

EVEN, ODD = 0, 1  ## bond parity: bond b is even when b is odd-numbered
                  ## (1-based), i.e. (b - 1) % 2 == 0


@dataclass(frozen=True)
class TrotterSchedule:
    """Ordered (parity, coefficient) substeps for one step of size dt."""

    order: int
    dt: float
    substeps: tuple

    def scaled(self) -> list:
        """Substeps as (parity, tau) with tau = coefficient * dt."""
        return [(p, c * self.dt) for p, c in self.substeps]


def build_schedule(order: int, dt: float) -> TrotterSchedule:
    """Symmetric product formulas of order 2 and 4.

    Order 4 is the five-fold composition of the symmetric second-order
    splitting S2(w1 dt)^2 S2(w0 dt) S2(w1 dt)^2 with w1 = 1/(4 - 4^(1/3)),
    w0 = 1 - 4 w1.  Its error constant is roughly thirty times smaller than
    the three-fold (triple-jump) variant at 11 instead of 7 substeps, which
    is the better trade at fixed dt.  Both sequences are palindromic and
    each parity's coefficients sum to 1.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    if order == 2:
        substeps = ((EVEN, 0.5), (ODD, 1.0), (EVEN, 0.5))
    elif order == 4:
        w1 = 1.0 / (4.0 - 4.0 ** (1.0 / 3.0))
        w0 = 1.0 - 4.0 * w1
        substeps = (
            (EVEN, w1 / 2), (ODD, w1), (EVEN, w1), (ODD, w1),
            (EVEN, (w1 + w0) / 2), (ODD, w0), (EVEN, (w0 + w1) / 2),
            (ODD, w1), (EVEN, w1), (ODD, w1), (EVEN, w1 / 2),
        )
    else:
        raise ValueError(f"unsupported Trotter order {order}; use 2 or 4")
    return TrotterSchedule(order=order, dt=float(dt), substeps=substeps)


def _merged_substeps(schedule: TrotterSchedule, n_steps: int) -> list:
    """Concatenate n steps and merge adjacent same-parity substeps.

    Merging is exact (gates on one bond commute with themselves) and saves
    one sweep per step for palindromic schedules.
    """
    seq = []
    for _ in range(n_steps):
        for parity, coeff in schedule.substeps:
            if seq and seq[-1][0] == parity:
                seq[-1][1] += coeff
            else:
                seq.append([parity, coeff])
    return [(p, c) for p, c in seq]


## ---------------------------------------------------------------------------
## observables per time step

@dataclass
class TimeSeriesRecord:
    """Per-measurement observables of one evolution run."""

    t: float
    entropies: dict            ## alpha -> per-bond array (bond b at index b-1)
    itac: complex              ## <O^dag(t) O(0)> for the normalized operator
    discarded_weight: float
    chi_used: int
    bound_rhs: dict            ## alpha -> -(2a/(a-1)) log2|itac| for alpha > 1

    def entropy_at(self, alpha: float, bond: int) -> float:
        return float(self.entropies[alpha][bond - 1])


def entropy_bound_rhs(itac_value: complex, alpha: float) -> float:
    """-(2a/(a-1)) log2 |itac|; +inf when |itac| is below the floor."""
    mag = abs(itac_value)
    if mag < ITAC_FLOOR:
        return np.inf
    return float(-(2.0 * alpha / (alpha - 1.0)) * np.log2(mag))


def check_entropy_bound(record: TimeSeriesRecord, alpha: float) -> dict:
    """Does S_alpha <= -(2a/(a-1)) log2|itac| hold at every bond?

    Valid for alpha > 1 and an initial product operator.  A vanishing |itac|
    makes the right-hand side infinite: the bound is reported as vacuously
    holding, not as failed.
    """
    if alpha <= 1:
        raise ValueError("entropy bound requires alpha > 1")
    rhs = entropy_bound_rhs(record.itac, alpha)
    if not np.isfinite(rhs):
        return {"holds": True, "slack": np.inf, "vacuous": True}
    s_max = float(np.max(record.entropies[alpha]))
    slack = rhs - s_max
    return {"holds": bool(s_max <= rhs + 1e-9), "slack": slack, "vacuous": False}


def itac(mpo_t: VectorizedMPO, mpo_0: VectorizedMPO) -> complex:
    """<O^dag(t) O(0)> at infinite temperature, for the normalized operator."""
    return mpo_t.unit_overlap(mpo_0)


## ---------------------------------------------------------------------------
## the evolution driver

@dataclass
class EvolveResult:
    records: list
    completed: bool
    abort_reason: str | None
    wall_time: float


def _measure(mpo: VectorizedMPO, mpo_0: VectorizedMPO, t: float, alpha_list) -> TimeSeriesRecord:
    entropies = {}
    for alpha in alpha_list:
        entropies[alpha] = np.array(
            [renyi_entropy(mpo.schmidt_spectrum(b), alpha) for b in range(1, mpo.L)]
        )
    val = itac(mpo, mpo_0)
    bound = {a: entropy_bound_rhs(val, a) for a in alpha_list if a > 1}
    return TimeSeriesRecord(
        t=t,
        entropies=entropies,
        itac=val,
        discarded_weight=mpo.discarded_weight,
        chi_used=mpo.max_chi(),
        bound_rhs=bound,
    )


def evolve(mpo: VectorizedMPO, hamiltonian: BondHamiltonian, schedule: TrotterSchedule,
           policy: TruncationPolicy, t_final: float, measure_every: float,
           alpha_list=(1.0, 2.0), threads: int = 1, seed: int = 0,
           discard_abort: float = 0.25, progress_cb=None) -> EvolveResult:
    """Evolve in place, recording observables every `measure_every` time units.

    The initial operator is copied for the autocorrelation overlap.  Gates
    on same-parity bonds own disjoint tensors and may be applied by a thread
    pool; results are bitwise independent of the thread count because every
    per-bond computation is seeded deterministically and reductions run in
    fixed bond order.
    """
    if t_final < 0:
        raise ValueError("t_final must be non-negative")
    dt = schedule.dt
    n_steps = int(round(t_final / dt))
    if abs(n_steps * dt - t_final) > 1e-9:
        raise ValueError(f"t_final={t_final} is not a multiple of dt={dt}")
    stride = max(1, int(round(measure_every / dt)))
    if abs(stride * dt - measure_every) > 1e-9:
        raise ValueError(f"measure_every={measure_every} is not a multiple of dt={dt}")

    t_start = time.perf_counter()
    mpo_0 = mpo.copy()
    records = [_measure(mpo, mpo_0, 0.0, alpha_list)]

    gate_cache: dict = {}

    def gate_for(coeff: float):
        g = gate_cache.get(coeff)
        if g is None:
            g = build_super_gate(hamiltonian, coeff * dt, basis=mpo.basis)
            gate_cache[coeff] = g
        return g

    executor = None
    if threads > 1:
        executor = concurrent.futures.ThreadPoolExecutor(max_workers=threads)

    sweep_counter = 0
    abort_reason = None
    try:
        for seg_start in range(0, n_steps, stride):
            seg_steps = min(stride, n_steps - seg_start)
            for parity, coeff in _merged_substeps(schedule, seg_steps):
                gate = gate_for(coeff)
                bonds = [b for b in range(1, mpo.L) if (b - 1) % 2 == parity]
                if executor is not None:
                    discs = list(executor.map(
                        lambda b: mpo._apply_gate(b, gate.bond_matrix, policy,
                                                  seed=(seed, sweep_counter, b)),
                        bonds,
                    ))
                else:
                    discs = [mpo._apply_gate(b, gate.bond_matrix, policy,
                                             seed=(seed, sweep_counter, b))
                             for b in bonds]
                for disc in discs:
                    mpo.discarded_weight += disc
                sweep_counter += 1
            t_now = (seg_start + seg_steps) * dt
            records.append(_measure(mpo, mpo_0, t_now, alpha_list))
            if progress_cb is not None:
                progress_cb(t_now, t_final)
            if discard_abort is not None and mpo.discarded_weight > discard_abort:
                abort_reason = (
                    f"cumulative discarded weight {mpo.discarded_weight:.3e} exceeded "
                    f"abort threshold {discard_abort:.3e} at t={t_now}"
                )
                break
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    if mpo.gap_warning_count:
        logger.warning(
            "%d truncations hit a near-degenerate spectrum at the chi=%d cap; "
            "kept ranks there are cutoff-sensitive", mpo.gap_warning_count,
            policy.chi_max,
        )
    return EvolveResult(
        records=records,
        completed=abort_reason is None,
        abort_reason=abort_reason,
        wall_time=time.perf_counter() - t_start,
    )
