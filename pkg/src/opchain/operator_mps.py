"""Vectorized matrix product operators in canonical (Gamma-lambda) form.

An operator O on an L-site chain is expanded in the tensor product of the
per-site orthonormal operator bases, which turns it into a state vector in a
(d^2)^L dimensional space.  That state is stored as a tensor train
Gamma[0] lam[0] Gamma[1] lam[1] ... Gamma[L-1] with open boundaries.  The
lam vectors hold the (square-root) Schmidt coefficients of the bond, so
operator-space entanglement spectra are readable without extra sweeps.

Conventions
-----------
* site tensors Gamma[i] have shape (chi_left, d^2, chi_right);
* lam[b] (internal index b = 0..L-2) holds singular values s_k with
  sum_k s_k^2 = 1; the squared values are the Schmidt spectrum lambda_k;
* public bond indices are 1-based: bond b cuts between sites b and b+1,
  i.e. b sites lie to the left of the cut;
* the stored train is normalized; `norm_log` accumulates the natural log of
  the true weighted Hilbert-Schmidt norm sqrt((1/d^L) Tr[O^dag O]).
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .spin_algebra import LocalOperatorBasis, SpinKind, make_basis

logger = logging.getLogger(__name__)

## squared Schmidt values below this floor are pure rounding noise and are
## always dropped, even when the configured cutoff is 0
NOISE_FLOOR = 1e-30

## randomized-SVD tuning: only worthwhile for large matrices where a small
## fraction of the spectrum is kept
RSVD_MIN_DIM = 768
RSVD_OVERSAMPLE = 50
RSVD_POWER_ITER = 2


@dataclass(frozen=True)
class TruncationPolicy:
    """Bond truncation: hard rank cap plus absolute squared-value cutoff."""

    chi_max: int = 256
    cutoff: float = 1e-14
    svd_method: str = "auto"  ## auto | exact | randomized

    def __post_init__(self):
        if self.chi_max < 1:
            raise ValueError("chi_max must be >= 1")
        if not (0.0 <= self.cutoff < 1.0):
            raise ValueError("cutoff must lie in [0, 1)")
        if self.svd_method not in ("auto", "exact", "randomized"):
            raise ValueError(f"unknown svd_method {self.svd_method!r}")


@dataclass(frozen=True)
class SchmidtSpectrum:
    """Squared Schmidt values at one bond, non-increasing, summing to 1."""

    bond_index: int
    values: np.ndarray


def renyi_entropy(spectrum, alpha: float) -> float:
    """Renyi entropy (bits) of a Schmidt spectrum.

    alpha = 1 gives the von Neumann entropy -sum lam log2 lam; otherwise
    S_alpha = log2(sum lam^alpha) / (1 - alpha).
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    lam = spectrum.values if isinstance(spectrum, SchmidtSpectrum) else np.asarray(spectrum, dtype=float)
    lam = lam[lam > 0.0]
    if lam.size == 0:
        return 0.0
    if alpha == 1:
        return float(-np.sum(lam * np.log2(lam)))
    return float(np.log2(np.sum(lam ** alpha)) / (1.0 - alpha))


## ---------------------------------------------------------------------------
## truncated SVD (exact and randomized paths)

def _svd_exact(a: np.ndarray):
    """Full SVD with a driver fallback for rare non-convergence."""
    try:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesdd")
    except np.linalg.LinAlgError:
        return scipy.linalg.svd(a, full_matrices=False, lapack_driver="gesvd")


def _svd_randomized(a: np.ndarray, rank: int, seed):
    """Seeded randomized range-finder SVD returning ~rank leading triplets.

    Deterministic for a fixed seed; the subspace error behaves like a small
    additional truncation and is negligible next to the chi cap itself.
    """
    n, m = a.shape
    l = min(rank + RSVD_OVERSAMPLE, n, m)
    rng = np.random.default_rng(np.random.SeedSequence(seed))
    omega = rng.standard_normal((m, l)) + 1j * rng.standard_normal((m, l))
    y = a @ omega
    for _ in range(RSVD_POWER_ITER):
        q, _ = np.linalg.qr(y)
        y = a @ (a.conj().T @ q)
    q, _ = np.linalg.qr(y)
    b = q.conj().T @ a
    u_b, s, vh = _svd_exact(b)
    return q @ u_b, s, vh


def svd_truncated(theta: np.ndarray, policy: TruncationPolicy, seed=None):
    """SVD of theta, truncated per policy.

    Returns (u, s_kept, vh, discarded, gap_warning) where `discarded` is the
    fraction of the total squared weight ||theta||_F^2 that was dropped and
    `gap_warning` flags a near-degenerate spectrum exactly at the chi cap.
    """
    if not np.all(np.isfinite(theta)):
        raise FloatingPointError("non-finite values entering SVD; aborting run")
    total = float(np.vdot(theta, theta).real)
    if total <= 0.0:
        raise FloatingPointError("zero tensor entering SVD")

    min_dim = min(theta.shape)
    use_rand = policy.svd_method == "randomized" or (
        policy.svd_method == "auto"
        and min_dim >= RSVD_MIN_DIM
        and policy.chi_max + RSVD_OVERSAMPLE <= 0.6 * min_dim
    )
    if use_rand and policy.chi_max + RSVD_OVERSAMPLE < min_dim:
        u, s, vh = _svd_randomized(theta, policy.chi_max, seed)
    else:
        u, s, vh = _svd_exact(theta)

    lam = s ** 2 / total
    keep = lam >= max(policy.cutoff, NOISE_FLOOR)
    k = int(np.sum(keep))
    k = max(1, min(k, policy.chi_max))

    gap_warning = False
    if k < s.size:
        gap = lam[k - 1] - lam[k]
        if k == policy.chi_max and gap < 1e-12:
            gap_warning = True

    kept_weight = float(np.sum(lam[:k]))
    discarded = max(0.0, 1.0 - kept_weight)
    return u[:, :k], s[:k], vh[:k], discarded, gap_warning


def dense_coefficient_tensor(matrix: np.ndarray, L: int, basis: LocalOperatorBasis) -> np.ndarray:
    """Expand a dense d^L x d^L operator in the product operator basis.

    Returns the tensor C[a_1, ..., a_L] = (1/d^L) Tr[(B_a1 x..x B_aL)^dag M],
    so that sum_a C_a (B_a1 x..x B_aL) reproduces M and
    sum |C|^2 = (1/d^L) Tr[M^dag M].
    """
    d = basis.d
    D = d * d
    matrix = np.asarray(matrix, dtype=complex)
    if matrix.shape != (d ** L, d ** L):
        raise ValueError(f"expected {(d ** L, d ** L)} matrix, got {matrix.shape}")
    x = matrix.reshape((d,) * (2 * L))
    perm = [ax for i in range(L) for ax in (i, L + i)]  ## site-major (i_k, j_k)
    x = np.transpose(x, perm).reshape((D,) * L)
    t = np.stack([b.reshape(D) for b in basis.elements])  ## (D, d^2) pair-flattened
    for _ in range(L):
        ## contract the leading pair index of x with each basis element
        x = np.tensordot(x, t.conj() / d, axes=(0, 1))
    return x  ## ordered (a_1, ..., a_L)


## ---------------------------------------------------------------------------
## the vectorized MPO

class VectorizedMPO:
    """Operator of an L-site chain as a canonical-form tensor train."""

    def __init__(self, L, kind, gammas, lams, norm_log=0.0, discarded_weight=0.0, basis=None):
        self.L = int(L)
        self.kind = kind
        self.gammas = gammas        ## list of (chi_l, d^2, chi_r) arrays
        self.lams = lams            ## list of L-1 singular-value vectors
        self.norm_log = float(norm_log)
        self.discarded_weight = float(discarded_weight)
        self.gap_warning_count = 0  ## degenerate truncations at the chi cap
        self.basis = basis if basis is not None else make_basis(kind)
        if len(gammas) != self.L or len(lams) != self.L - 1:
            raise ValueError("inconsistent tensor-train shape")

    ## -- construction -------------------------------------------------------

    @classmethod
    def from_product_operator(cls, ops, L, kind) -> "VectorizedMPO":
        """Build a bond-dimension-1 train for a product of on-site factors.

        `ops` is a list of (site, matrix) pairs with 1-based distinct sites;
        unnamed sites carry the identity.  The global operator is normalized,
        with the true norm recorded in norm_log.
        """
        L = int(L)
        basis = make_basis(kind)
        d = kind.d
        site_ops = {}
        for site, matrix in ops:
            if not (1 <= site <= L):
                raise ValueError(f"site {site} outside 1..{L}")
            if site in site_ops:
                raise ValueError(f"duplicate site {site} in product operator")
            site_ops[site] = np.asarray(matrix, dtype=complex)

        gammas = []
        norm_log = 0.0
        for i in range(1, L + 1):
            m = site_ops.get(i, np.eye(d, dtype=complex))
            coeffs = basis.expand(m)
            norm = float(np.linalg.norm(coeffs))
            if norm < 1e-300:
                raise ValueError(f"zero operator factor at site {i}")
            norm_log += np.log(norm)
            gammas.append((coeffs / norm).reshape(1, d * d, 1))
        lams = [np.ones(1) for _ in range(L - 1)]
        return cls(L, kind, gammas, lams, norm_log=norm_log, basis=basis)

    @classmethod
    def from_dense(cls, matrix, L, kind) -> "VectorizedMPO":
        """Exact tensor-train factorization of a dense d^L x d^L operator."""
        L = int(L)
        basis = make_basis(kind)
        d = kind.d
        D = d * d
        coeffs = dense_coefficient_tensor(matrix, L, basis)

        norm = float(np.linalg.norm(coeffs))
        if norm < 1e-300:
            raise ValueError("zero operator")
        c = (coeffs / norm).reshape(1, D ** L)

        gammas, lams = [], []
        s_prev = np.ones(1)
        rem = c
        for i in range(L - 1):
            chi_l = rem.shape[0]
            rem = rem.reshape(chi_l * D, -1)
            u, s, vh = _svd_exact(rem)
            keep = s ** 2 > NOISE_FLOOR
            k = max(1, int(np.sum(keep)))
            u, s, vh = u[:, :k], s[:k], vh[:k]
            gammas.append((u.reshape(chi_l, D, k) / s_prev[:, None, None]))
            lams.append(s)
            rem = s[:, None] * vh
            s_prev = s
        gammas.append(rem.reshape(-1, D, 1) / s_prev[:, None, None])
        return cls(L, kind, gammas, lams, norm_log=np.log(norm), basis=basis)

    def copy(self) -> "VectorizedMPO":
        out = VectorizedMPO(
            self.L,
            self.kind,
            [g.copy() for g in self.gammas],
            [s.copy() for s in self.lams],
            norm_log=self.norm_log,
            discarded_weight=self.discarded_weight,
            basis=self.basis,
        )
        out.gap_warning_count = self.gap_warning_count
        return out

    ## -- inspection ---------------------------------------------------------

    @property
    def d(self) -> int:
        return self.kind.d

    def bond_dimensions(self):
        return [len(s) for s in self.lams]

    def max_chi(self) -> int:
        return max(self.bond_dimensions(), default=1)

    def schmidt_spectrum(self, bond: int) -> SchmidtSpectrum:
        """Squared Schmidt values at the public (1-based) bond index."""
        if not (1 <= bond <= self.L - 1):
            raise ValueError(f"bond {bond} outside 1..{self.L - 1}")
        s = self.lams[bond - 1]
        lam = s ** 2
        total = lam.sum()
        if total > 0:
            lam = lam / total
        return SchmidtSpectrum(bond_index=bond, values=lam)

    def canonical_defect(self) -> float:
        """Max deviation of left/right environment contractions from identity."""
        worst = 0.0
        for i in range(self.L):
            s_l = self.lams[i - 1] if i > 0 else np.ones(1)
            s_r = self.lams[i] if i < self.L - 1 else np.ones(1)
            a = self.gammas[i] * s_l[:, None, None]
            mat = a.reshape(-1, a.shape[2])
            left = mat.conj().T @ mat
            worst = max(worst, float(np.max(np.abs(left - np.eye(left.shape[0])))))
            b = self.gammas[i] * s_r[None, None, :]
            mat = b.reshape(b.shape[0], -1)
            right = mat @ mat.conj().T
            worst = max(worst, float(np.max(np.abs(right - np.eye(right.shape[0])))))
        return worst

    ## -- gate application ---------------------------------------------------

    def apply_two_site_gate(self, bond: int, gate, policy: TruncationPolicy, seed=None):
        """Apply a two-site super-gate at the public bond index, then truncate.

        Adds the truncated probability of this update to `discarded_weight`.
        """
        g = getattr(gate, "bond_matrix", gate)
        self.discarded_weight += self._apply_gate(bond, g, policy, seed=seed)
        return self

    def _apply_gate(self, bond: int, g: np.ndarray, policy: TruncationPolicy, seed=None) -> float:
        """Gate update returning the discarded fraction instead of storing it.

        Same-parity bonds touch disjoint tensor slots, so a driver may call
        this concurrently and accumulate the returned fractions in a fixed
        order for reproducible sums.

        Uses the inverse-free update: the gate is applied to the tensor both
        with and without the left Schmidt weights, so no singular values from
        previous truncations are ever divided out.
        """
        if not (1 <= bond <= self.L - 1):
            raise ValueError(f"bond {bond} outside 1..{self.L - 1}")
        ib = bond - 1
        i, j = ib, ib + 1
        D = self.d * self.d

        s_l = self.lams[ib - 1] if ib > 0 else np.ones(1)
        s_m = self.lams[ib]
        s_r = self.lams[ib + 1] if ib + 1 < self.L - 1 else np.ones(1)

        a = self.gammas[i] * s_m[None, None, :]
        b = self.gammas[j] * s_r[None, None, :]
        theta = np.tensordot(a, b, axes=(2, 0))          ## (chi_l, D, D, chi_r)
        chi_l, _, _, chi_r = theta.shape

        ## gate acts jointly on the two local basis indices
        theta = theta.reshape(chi_l, D * D, chi_r)
        theta = np.tensordot(g, theta, axes=(1, 1)).transpose(1, 0, 2)
        theta_bare = theta.reshape(chi_l * D, D * chi_r)
        theta_w = (theta * s_l[:, None, None]).reshape(chi_l * D, D * chi_r)

        u, s, vh, discarded, gap_warning = svd_truncated(theta_w, policy, seed=seed)
        if gap_warning:
            ## counted, not logged: long runs hit this every sweep once a
            ## dense spectrum saturates the cap; drivers report it once
            self.gap_warning_count += 1
        k = s.size
        s_new = s / np.linalg.norm(s)

        self.lams[ib] = s_new
        self.gammas[j] = vh.reshape(k, D, chi_r) / s_r[None, None, :]
        b1 = theta_bare @ vh.conj().T                    ## (chi_l * D, k)
        self.gammas[i] = b1.reshape(chi_l, D, k) / s_new[None, None, :]
        return discarded

    ## -- overlaps and reconstruction ----------------------------------------

    def _transfer_tensors(self):
        out = []
        for i in range(self.L):
            t = self.gammas[i]
            if i < self.L - 1:
                t = t * self.lams[i][None, None, :]
            out.append(t)
        return out

    def unit_overlap(self, other: "VectorizedMPO") -> complex:
        """Inner product of the two stored unit vectors (norm factors excluded)."""
        if self.L != other.L or self.kind is not other.kind:
            raise ValueError("operators live on different chains")
        ta = self._transfer_tensors()
        tb = other._transfer_tensors()
        v = np.ones((1, 1), dtype=complex)
        for x, y in zip(ta, tb):
            tmp = np.tensordot(v, y, axes=(1, 0))        ## (chiA_prev, D, chiB)
            v = np.tensordot(x.conj(), tmp, axes=([0, 1], [0, 1]))
        return complex(v[0, 0])

    def overlap(self, other: "VectorizedMPO") -> complex:
        """Weighted HS inner product (1/d^L) Tr[A^dag B] of the true operators."""
        return complex(np.exp(self.norm_log + other.norm_log) * self.unit_overlap(other))

    def to_dense(self) -> np.ndarray:
        """Reconstruct the full d^L x d^L operator (small L only)."""
        d, D, L = self.d, self.d * self.d, self.L
        if d ** L > 1024:
            raise ValueError(f"refusing dense reconstruction at L={L}")
        tensors = self._transfer_tensors()
        c = tensors[0][0]                                ## (D, chi)
        for t in tensors[1:]:
            c = np.tensordot(c, t, axes=(c.ndim - 1, 0))
        c = c[..., 0] * np.exp(self.norm_log)            ## (D,)*L coefficients
        b_stack = np.stack(self.basis.elements)          ## (D, d, d)
        out = c
        for _ in range(L):
            out = np.tensordot(out, b_stack, axes=(0, 0))
        ## axes now (i_1, j_1, ..., i_L, j_L); separate rows from columns
        perm = [2 * k for k in range(L)] + [2 * k + 1 for k in range(L)]
        return out.transpose(perm).reshape(d ** L, d ** L)

    ## -- serialization -------------------------------------------------------

    FORMAT_MAGIC = "opchain-vmpo"
    FORMAT_VERSION = 1

    def save(self, path):
        """Write a self-describing snapshot (npz container with JSON header)."""
        meta = {
            "magic": self.FORMAT_MAGIC,
            "version": self.FORMAT_VERSION,
            "L": self.L,
            "kind": self.kind.value,
            "norm_log": self.norm_log,
            "discarded_weight": self.discarded_weight,
        }
        payload = {"meta": np.frombuffer(json.dumps(meta).encode(), dtype=np.uint8)}
        for i, g in enumerate(self.gammas):
            payload[f"gamma_{i}"] = g
        for b, s in enumerate(self.lams):
            payload[f"lam_{b}"] = s
        np.savez_compressed(path, **payload)

    @classmethod
    def load(cls, path) -> "VectorizedMPO":
        with np.load(path) as data:
            meta = json.loads(bytes(data["meta"]).decode())
            if meta.get("magic") != cls.FORMAT_MAGIC:
                raise ValueError("not a vectorized-MPO snapshot")
            if meta.get("version") != cls.FORMAT_VERSION:
                raise ValueError(f"unsupported snapshot version {meta.get('version')}")
            L = meta["L"]
            kind = SpinKind.from_string(meta["kind"])
            gammas = [data[f"gamma_{i}"] for i in range(L)]
            lams = [data[f"lam_{b}"] for b in range(L - 1)]
        return cls(L, kind, gammas, lams,
                   norm_log=meta["norm_log"], discarded_weight=meta["discarded_weight"])
