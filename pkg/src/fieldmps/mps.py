"""Dense linear algebra and matrix product state core.

A state vector of length 2^N is factorized into N rank-3 tensors with
index order (left bond, physical, right bond) and physical dimension 2.
Everything is real double precision: the encoded data is real, so no
complex arithmetic is carried through the chain.

The functions here are the primitives used by the field encoder and the
resource measurements: construction from a dense vector by sequential
reshape/SVD, mixed-canonical gauging by QR sweeps, cutoff truncation,
and transfer-matrix contraction for overlaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import InputError, NumericalError, ShapeError, SizeLimitError

# mps_to_dense refuses above this site count (2^26 doubles is ~0.5 GB).
DENSE_SITE_LIMIT = 26


class Mps:
    """A real matrix product state over N binary sites.

    Attributes:
        sites: list of rank-3 float64 tensors, shape (chi_left, 2, chi_right).
        center: orthogonality center index, or None when the gauge is
            unknown.  When center = c, tensors left of c are
            left-orthonormal and tensors right of c are right-orthonormal.

    Tensors are stored read-only; operations return new states.
    """

    __slots__ = ("sites", "center")

    def __init__(self, sites, center=None):
        if not sites:
            raise InputError("an MPS needs at least one site")
        tensors = []
        for tensor in sites:
            arr = np.ascontiguousarray(tensor, dtype=np.float64)
            if arr.ndim != 3 or arr.shape[1] != 2:
                raise ShapeError(f"site tensor must be (chi, 2, chi), got {arr.shape}")
            arr.setflags(write=False)
            tensors.append(arr)
        if tensors[0].shape[0] != 1 or tensors[-1].shape[2] != 1:
            raise ShapeError("boundary bonds must have dimension 1")
        n = len(tensors)
        for i in range(n - 1):
            if tensors[i].shape[2] != tensors[i + 1].shape[0]:
                raise ShapeError(f"bond mismatch between sites {i} and {i + 1}")
        for b in range(1, n):
            cap = 1 << min(b, n - b, 60)
            if tensors[b].shape[0] > cap:
                raise ShapeError(f"bond {b} has dimension {tensors[b].shape[0]} > {cap}")
        self.sites = tensors
        self.center = center

    @property
    def n_sites(self) -> int:
        return len(self.sites)

    @property
    def bond_dims(self) -> list[int]:
        """Internal bond dimensions; entry b-1 is the bond between sites b-1 and b."""
        return [t.shape[0] for t in self.sites[1:]]

    @property
    def chi_max(self) -> int:
        return max(self.bond_dims, default=1)

    def copy(self) -> "Mps":
        return Mps([t.copy() for t in self.sites], center=self.center)

    def __repr__(self) -> str:
        return f"Mps(N={self.n_sites}, chi_max={self.chi_max}, center={self.center})"


@dataclass(frozen=True)
class TruncationResult:
    """An MPS together with its accumulated relative discarded weight.

    discarded_weight sums, over all truncated bonds, the discarded squared
    singular values divided by the squared total at that bond.
    """

    mps: Mps
    discarded_weight: float
    chi_max: int


def svd_truncate(matrix, cutoff, max_rank=None, context=""):
    """SVD with relative-squared-weight truncation.

    Keeps the smallest rank r such that the sum of squared discarded
    singular values is at most cutoff**2 times the sum of all squared
    singular values, then caps r at max_rank.  At least one singular
    value is always kept.

    Returns:
        (u, s, vt, discarded_weight) where u has r columns, s has length r,
        vt has r rows, and discarded_weight is the relative discarded
        squared weight.
    """
    matrix = np.asarray(matrix, dtype=np.float64)
    if cutoff < 0:
        raise InputError("cutoff must be >= 0")
    if not np.all(np.isfinite(matrix)):
        raise InputError("matrix contains non-finite entries")
    try:
        u, s, vt = np.linalg.svd(matrix, full_matrices=False)
    except np.linalg.LinAlgError:
        # gesdd occasionally fails to converge; gesvd is slower but sturdier.
        try:
            u, s, vt = scipy.linalg.svd(matrix, full_matrices=False, lapack_driver="gesvd")
        except Exception as exc:  # pragma: no cover - hard to trigger
            raise NumericalError(f"SVD failed to converge {context}".strip()) from exc

    squared = s * s
    total = squared.sum()
    if total == 0.0:
        return u[:, :1], s[:1], vt[:1], 0.0

    # Largest discard count whose cumulative squared weight stays under
    # cutoff^2 * total, counting from the smallest singular value.
    tail = np.cumsum(squared[::-1])
    n_discard = int(np.searchsorted(tail, cutoff * cutoff * total, side="right"))
    rank = max(1, len(s) - n_discard)
    if max_rank is not None:
        rank = min(rank, int(max_rank))
        rank = max(rank, 1)
    discarded = float(tail[len(s) - rank - 1] / total) if rank < len(s) else 0.0
    return u[:, :rank], s[:rank], vt[:rank], discarded


def mps_from_dense(vector, cutoff=0.0, max_rank=None) -> TruncationResult:
    """Factorize a length-2^N dense vector into an MPS.

    Sweeps left to right, reshaping and SVD-truncating at each bond.  The
    state norm is preserved up to the discarded weight; with cutoff 0 the
    factorization is exact.  The returned state has its orthogonality
    center on the last site.
    """
    vec = np.ascontiguousarray(vector, dtype=np.float64)
    if vec.ndim != 1:
        raise ShapeError("expected a 1-D vector")
    n = vec.size
    if n < 2 or (n & (n - 1)) != 0:
        raise InputError(f"vector length {n} is not a power of two >= 2")
    if not np.all(np.isfinite(vec)):
        raise InputError("vector contains non-finite entries")
    if not np.any(vec):
        raise InputError("cannot factorize an all-zero vector")

    n_sites = n.bit_length() - 1
    sites = []
    discarded = 0.0
    chi_left = 1
    block = vec.reshape(1, n)
    for k in range(n_sites - 1):
        block = block.reshape(chi_left * 2, -1)
        u, s, vt, dw = svd_truncate(block, cutoff, max_rank, context=f"at bond {k + 1}")
        discarded += dw
        rank = s.size
        sites.append(u.reshape(chi_left, 2, rank))
        block = s[:, None] * vt
        chi_left = rank
    sites.append(block.reshape(chi_left, 2, 1))
    mps = Mps(sites, center=n_sites - 1)
    return TruncationResult(mps=mps, discarded_weight=discarded, chi_max=mps.chi_max)


def mps_to_dense(mps: Mps, dense_limit: int = DENSE_SITE_LIMIT) -> np.ndarray:
    """Contract an MPS to the full length-2^N vector."""
    if mps.n_sites > dense_limit:
        raise SizeLimitError(
            f"{mps.n_sites} sites exceed the dense limit of {dense_limit}"
        )
    block = mps.sites[0].reshape(2, -1)
    for tensor in mps.sites[1:]:
        block = np.tensordot(block, tensor, axes=([-1], [0]))
        block = block.reshape(-1, block.shape[-1])
    return np.ascontiguousarray(block[:, 0])


def canonicalize(mps: Mps, center: int) -> Mps:
    """Bring an MPS to mixed-canonical form with the given center.

    QR sweeps from both ends; the physical state is unchanged.
    """
    n = mps.n_sites
    if not 0 <= center < n:
        raise ShapeError(f"center {center} out of range for {n} sites")
    sites = [t.copy() for t in mps.sites]
    # Left-orthonormalize sites 0 .. center-1.
    for i in range(center):
        chi_l, _, chi_r = sites[i].shape
        q, r = np.linalg.qr(sites[i].reshape(chi_l * 2, chi_r))
        k = q.shape[1]
        sites[i] = q.reshape(chi_l, 2, k)
        sites[i + 1] = np.tensordot(r, sites[i + 1], axes=([1], [0]))
    # Right-orthonormalize sites N-1 .. center+1.
    for i in range(n - 1, center, -1):
        chi_l, _, chi_r = sites[i].shape
        q, r = np.linalg.qr(sites[i].reshape(chi_l, 2 * chi_r).T)
        k = q.shape[1]
        sites[i] = q.T.reshape(k, 2, chi_r)
        sites[i - 1] = np.tensordot(sites[i - 1], r.T, axes=([2], [0]))
    return Mps(sites, center=center)


def compress(mps: Mps, cutoff, max_rank=None) -> TruncationResult:
    """Truncate every bond of an MPS to the given cutoff.

    Two-pass scheme: a left-to-right QR sweep moves the orthogonality
    center to the last site, then a right-to-left SVD sweep truncates each
    bond.  Accumulated relative discarded weight is reported.
    """
    work = canonicalize(mps, mps.n_sites - 1)
    sites = [t.copy() for t in work.sites]
    discarded = 0.0
    for i in range(len(sites) - 1, 0, -1):
        chi_l, _, chi_r = sites[i].shape
        u, s, vt, dw = svd_truncate(
            sites[i].reshape(chi_l, 2 * chi_r), cutoff, max_rank, context=f"at bond {i}"
        )
        discarded += dw
        rank = s.size
        sites[i] = vt.reshape(rank, 2, chi_r)
        sites[i - 1] = np.tensordot(sites[i - 1], u * s, axes=([2], [0]))
    out = Mps(sites, center=0)
    return TruncationResult(mps=out, discarded_weight=discarded, chi_max=out.chi_max)


def inner(a: Mps, b: Mps) -> float:
    """Exact transfer-matrix overlap <a|b> of two real MPS."""
    if a.n_sites != b.n_sites:
        raise ShapeError(f"site counts differ: {a.n_sites} vs {b.n_sites}")
    env = np.ones((1, 1))
    for ta, tb in zip(a.sites, b.sites):
        # env[la, lb] -> contract with bra tensor then ket tensor.
        env = np.tensordot(env, ta, axes=([0], [0]))  # (lb, s, ra)
        env = np.tensordot(env, tb, axes=([0, 1], [0, 1]))  # (ra, rb)
    return float(env[0, 0])


def norm(mps: Mps) -> float:
    """2-norm of the encoded vector."""
    return float(np.sqrt(max(inner(mps, mps), 0.0)))


def orthonormality_defect(mps: Mps, center: int) -> float:
    """Largest deviation from the identity among the orthonormality checks
    implied by mixed-canonical form around `center`.  Diagnostic only."""
    worst = 0.0
    for i, tensor in enumerate(mps.sites):
        chi_l, _, chi_r = tensor.shape
        if i < center:
            mat = tensor.reshape(chi_l * 2, chi_r)
            gram = mat.T @ mat
            worst = max(worst, float(np.abs(gram - np.eye(chi_r)).max()))
        elif i > center:
            mat = tensor.reshape(chi_l, 2 * chi_r)
            gram = mat @ mat.T
            worst = max(worst, float(np.abs(gram - np.eye(chi_l)).max()))
    return worst
