"""Entanglement and non-stabilizerness measurements on encoded states.

Entanglement is read off the Schmidt spectrum at every bond of a
canonicalized MPS.  Non-stabilizerness is the 2-Renyi stabilizer entropy,
built from the distribution Xi(P) = <P>^2 / 2^N over Pauli strings, and
is computed by three independent routes:

* a dense oracle that streams over all 4^N Pauli expectations of the
  full state vector (N <= 14),
* an exact contraction of four state replicas coupled site-by-site
  through sum_mu sigma^mu x sigma^mu x sigma^mu x sigma^mu (small chi),
* a perfect sampler that draws whole Pauli strings from the exact
  conditional distributions, one site at a time.

All entropies are reported in bits.  States are real, which is exploited
(and separately verified in the tests): expectations of words with an odd
number of Y operators vanish, so the real antisymmetric matrix W = -iY
can stand in for Y everywhere that only even powers of <P> are needed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError, NumericalError, ShapeError, SizeLimitError
from .mps import Mps, canonicalize, inner, norm

# Real stand-ins for the single-site Paulis: I, X, W = -iY, Z.
_SIGMA_REAL = np.array(
    [
        [[1.0, 0.0], [0.0, 1.0]],
        [[0.0, 1.0], [1.0, 0.0]],
        [[0.0, -1.0], [1.0, 0.0]],
        [[1.0, 0.0], [0.0, -1.0]],
    ]
)
_SIGMA_COMPLEX = np.array(
    [
        [[1, 0], [0, 1]],
        [[0, 1], [1, 0]],
        [[0, -1j], [1j, 0]],
        [[1, 0], [0, -1]],
    ],
    dtype=np.complex128,
)

PAULI_LABELS = "IXYZ"

# Tail width for the streamed dense Pauli transform; 4^10 coefficients
# per prefix keeps the working set around 10-20 MB.
_DENSE_TAIL = 10

DENSE_SRE_LIMIT = 14
REPLICA_CHI_LIMIT = 10


@dataclass(frozen=True)
class EntropyProfile:
    """Per-bond Schmidt data of a unit-norm state.

    Bond b (1-based, 1 <= b <= N-1) separates sites [0..b) from [b..N).
    `normalized` divides each entropy by its maximum min(b, N-b) bits.
    """

    schmidt_spectra: list
    entropies_bits: np.ndarray
    normalized: np.ndarray
    max_normalized: float
    argmax_bond: int


@dataclass(frozen=True)
class PauliString:
    """A sampled Pauli word with its exact probability and expectation."""

    word: tuple
    probability: float
    expectation: float

    @property
    def label(self) -> str:
        return "".join(PAULI_LABELS[w] for w in self.word)


@dataclass(frozen=True)
class MagicEstimate:
    """A stabilizer-Renyi-entropy value in bits, with uncertainty.

    Exact methods (dense, replica) report stderr 0.  `normalized` divides
    by the configured maximum (see m2_max_bits); `alpha` is the Renyi
    index (2 everywhere except the dense oracle).
    """

    m2_bits: float
    stderr_bits: float
    n_samples: int
    method: str
    normalized: float
    alpha: float = 2.0
    degenerate_samples: bool = False
    stderr_jackknife_bits: float | None = None


def m2_max_bits(n_sites: int) -> float:
    """Upper bound log2(2^N + 1) - 1 on M2 for pure N-qubit states."""
    if n_sites < 1:
        raise InputError("n_sites must be >= 1")
    return n_sites + math.log1p(2.0 ** (-n_sites)) / math.log(2.0) - 1.0


def _m2_denominator(n_sites: int, convention: str) -> float:
    if convention == "bound":
        return m2_max_bits(n_sites)
    if convention == "nqubits":
        return float(n_sites)
    raise InputError(f"unknown normalization convention {convention!r}")


# ---------------------------------------------------------------------------
# Entanglement


def entropy_profile(mps: Mps) -> EntropyProfile:
    """Schmidt spectra and von Neumann entropies at every bond.

    The state is canonicalized and normalized internally; entropies are
    S_b = -sum lambda^2 log2 lambda^2 over the spectrum at bond b.
    """
    n = mps.n_sites
    if n == 1:
        return EntropyProfile([], np.zeros(0), np.zeros(0), 0.0, 0)
    work = canonicalize(mps, 0)
    nrm = norm(work)
    if nrm == 0.0:
        raise InputError("cannot profile a zero state")
    sites = [t.copy() for t in work.sites]
    sites[0] = sites[0] / nrm
    spectra = []
    entropies = np.zeros(n - 1)
    for i in range(n - 1):
        chi_l, _, chi_r = sites[i].shape
        u, s, vt = np.linalg.svd(sites[i].reshape(chi_l * 2, chi_r), full_matrices=False)
        spectra.append(s.copy())
        p = s * s
        nz = p > 0.0
        entropies[i] = float(-(p[nz] * np.log2(p[nz])).sum()) if nz.any() else 0.0
        k = s.size
        sites[i] = u.reshape(chi_l, 2, k)
        sites[i + 1] = np.tensordot(s[:, None] * vt, sites[i + 1], axes=([1], [0]))
    caps = np.array([min(b, n - b) for b in range(1, n)], dtype=float)
    normalized = entropies / caps
    argmax = int(np.argmax(normalized)) + 1
    return EntropyProfile(
        schmidt_spectra=spectra,
        entropies_bits=entropies,
        normalized=normalized,
        max_normalized=float(normalized.max()),
        argmax_bond=argmax,
    )


# ---------------------------------------------------------------------------
# Pauli expectations on the MPS


def _apply_real_pauli_ket(tensor: np.ndarray, mu: int) -> np.ndarray:
    """sum_{s'} sigma_mu[s, s'] A[l, s', r] with the real W standing in for Y."""
    if mu == 0:
        return tensor
    if mu == 1:
        return tensor[:, ::-1, :]
    if mu == 2:
        return np.stack([-tensor[:, 1, :], tensor[:, 0, :]], axis=1)
    return np.stack([tensor[:, 0, :], -tensor[:, 1, :]], axis=1)


def _word_signs(words: np.ndarray) -> np.ndarray:
    """Factor turning W-chain values into true <P>: i^(#Y), zero when odd."""
    n_y = (words == 2).sum(axis=1)
    return np.where(n_y % 2 == 1, 0.0, np.where(n_y % 4 == 2, -1.0, 1.0))


def pauli_expectations_batch(mps: Mps, words) -> np.ndarray:
    """<P> for a batch of Pauli words, shape (n_words, N), entries 0..3."""
    words = np.asarray(words, dtype=np.int64)
    if words.ndim != 2 or words.shape[1] != mps.n_sites:
        raise ShapeError(f"expected words of shape (k, {mps.n_sites})")
    if words.size and (words.min() < 0 or words.max() > 3):
        raise InputError("Pauli word entries must be in 0..3")
    k = words.shape[0]
    nrm2 = inner(mps, mps)
    env = np.ones((k, 1, 1))
    for i, tensor in enumerate(mps.sites):
        part = np.tensordot(env, tensor, axes=([1], [0]))  # (k, lb, s, ra)
        new_env = np.empty((k, tensor.shape[2], tensor.shape[2]))
        mus = words[:, i]
        for mu in range(4):
            mask = mus == mu
            if not mask.any():
                continue
            ket = _apply_real_pauli_ket(tensor, mu)
            new_env[mask] = np.einsum("klsa,lsb->kab", part[mask], ket, optimize=True)
        env = new_env
    return _word_signs(words) * env[:, 0, 0] / nrm2


def pauli_expectation(mps: Mps, word) -> float:
    """<P> for a single Pauli word (sequence over {0,1,2,3} = I,X,Y,Z).

    Real states give exactly zero for words with an odd number of Y's;
    that property is verified in the test suite and used here directly.
    """
    return float(pauli_expectations_batch(mps, np.asarray(word)[None, :])[0])


# ---------------------------------------------------------------------------
# Dense oracle


def _pauli_coefficient_stack(blocks: np.ndarray) -> np.ndarray:
    """All Pauli-basis traces of a stack of (D, D) matrices.

    For each matrix rho, returns Tr(rho P) for every Pauli word P on
    log2(D) qubits; the first site's digit is the most significant in the
    base-4 output index.  Complex inputs use the true Y, real inputs the
    antisymmetric W (valid for even powers of the result).
    """
    block = blocks
    y_unit = 1j if np.iscomplexobj(block) else 1.0
    while block.shape[-1] > 1:
        k, d, _ = block.shape
        h = d // 2
        b = block.reshape(k, 2, h, 2, h)
        kids = np.empty((k, 4, h, h), dtype=block.dtype)
        kids[:, 0] = b[:, 0, :, 0, :] + b[:, 1, :, 1, :]
        kids[:, 1] = b[:, 1, :, 0, :] + b[:, 0, :, 1, :]
        kids[:, 2] = y_unit * (b[:, 0, :, 1, :] - b[:, 1, :, 0, :])
        kids[:, 3] = b[:, 0, :, 0, :] - b[:, 1, :, 1, :]
        block = kids.reshape(k * 4, h, h)
    return block.reshape(-1)


def pauli_spectrum_dense(vector, limit: int = 10) -> np.ndarray:
    """All 4^N Pauli expectations of a normalized dense state.

    Exact complex computation (true Y operators); word index is base 4
    with site 0 as the most significant digit.  Intended as a small-N
    oracle, hence the conservative default limit.
    """
    psi = np.asarray(vector, dtype=np.complex128)
    n = _vector_sites(psi)
    if n > limit:
        raise SizeLimitError(f"{n} sites exceed the spectrum limit of {limit}")
    psi = psi / np.linalg.norm(psi)
    rho = np.outer(psi, psi.conj())
    coeffs = _pauli_coefficient_stack(rho[np.newaxis])
    worst = float(np.abs(coeffs.imag).max())
    if worst > 1e-8:
        raise NumericalError(f"Pauli expectations not real (max imag {worst:g})")
    return np.ascontiguousarray(coeffs.real)


def _vector_sites(psi: np.ndarray) -> int:
    if psi.ndim != 1:
        raise ShapeError("expected a 1-D state vector")
    n = psi.size
    if n < 2 or (n & (n - 1)) != 0:
        raise InputError(f"vector length {n} is not a power of two >= 2")
    if not np.all(np.isfinite(psi)):
        raise InputError("vector contains non-finite entries")
    if not np.any(psi):
        raise InputError("vector is identically zero")
    return n.bit_length() - 1


def _xi_power_sum(psi: np.ndarray, alpha: float) -> float:
    """Streamed sum over all Pauli words of (<P>^2)^alpha, or of
    <P>^2 log2(<P>^2) when alpha == 1 (entropic form)."""
    n = psi.size.bit_length() - 1
    cplx = np.iscomplexobj(psi)
    mats = _SIGMA_COMPLEX if cplx else _SIGMA_REAL
    tail = min(n, _DENSE_TAIL)
    n_prefix = n - tail
    entropic = abs(alpha - 1.0) < 1e-12
    block = psi.reshape(1 << n_prefix, 1 << tail)
    block_c = block.conj() if cplx else block
    total_c2 = 0.0
    acc = 0.0
    for prefix in range(4**n_prefix):
        if n_prefix:
            digits = [(prefix >> (2 * (n_prefix - 1 - i))) & 3 for i in range(n_prefix)]
            kmat = mats[digits[0]]
            for d in digits[1:]:
                kmat = np.kron(kmat, mats[d])
            rho = (kmat @ block).T @ block_c
        else:
            rho = np.outer(block[0], block_c[0])
        coeffs = _pauli_coefficient_stack(rho[np.newaxis])
        c = coeffs.real if cplx else coeffs
        c2 = c * c
        if cplx:
            c2 = c2 + coeffs.imag * coeffs.imag  # |<P>|^2; imag parts ~ 0
        total_c2 += float(c2.sum())
        if entropic:
            nz = c2 > 0.0
            acc += float((c2[nz] * np.log2(c2[nz])).sum())
        else:
            acc += float((c2**alpha).sum())
    expected = float(2**n)
    if abs(total_c2 - expected) > 1e-6 * expected:
        raise NumericalError(
            f"Pauli weight sum {total_c2:.12g} deviates from 2^N = {expected:g}"
        )
    return acc


def sre_dense(vector, alpha: float = 2.0, *, normalization: str = "bound",
              dense_limit: int = DENSE_SRE_LIMIT) -> MagicEstimate:
    """Exact stabilizer Renyi entropy of order alpha from the dense vector.

    Enumerates all 4^N Pauli expectations in a streamed transform; for
    alpha = 1 uses the entropic form -E[log2 Xi] - N.  Values in bits.
    Real input vectors use a real-arithmetic fast path; complex vectors
    are supported (the dense route is also the oracle for Clifford
    invariance checks, which pass through complex intermediates).
    """
    psi = np.asarray(vector)
    psi = psi.astype(np.complex128) if np.iscomplexobj(psi) else psi.astype(np.float64)
    n = _vector_sites(psi)
    if n > dense_limit:
        raise SizeLimitError(f"{n} sites exceed the dense SRE limit of {dense_limit}")
    psi = psi / np.linalg.norm(psi)
    acc = _xi_power_sum(psi, alpha)
    if abs(alpha - 1.0) < 1e-12:
        m_bits = -acc / float(2**n)
    else:
        m_bits = math.log2(acc / float(2**n)) / (1.0 - alpha)
    return MagicEstimate(
        m2_bits=float(m_bits),
        stderr_bits=0.0,
        n_samples=0,
        method="dense",
        normalized=float(m_bits) / _m2_denominator(n, normalization),
        alpha=float(alpha),
    )


# ---------------------------------------------------------------------------
# Exact replica contraction


def sre2_replica(mps: Mps, *, chi_limit: int = REPLICA_CHI_LIMIT,
                 normalization: str = "bound") -> MagicEstimate:
    """Exact M2 by contracting four replicas of the state.

    Each site contributes sum_mu E(mu) x4 where E(mu) is the chi^2
    transfer matrix of the state with sigma^mu inserted; the boundary
    object therefore holds chi^8 entries, which is what the chi limit
    guards (chi = 10 is ~0.8 GB).
    """
    chi = mps.chi_max
    if chi > chi_limit:
        raise SizeLimitError(
            f"chi_max {chi} exceeds the replica contraction limit of {chi_limit}"
        )
    n = mps.n_sites
    nrm = norm(mps)
    if nrm == 0.0:
        raise InputError("cannot measure a zero state")
    boundary = np.ones((1, 1, 1, 1))
    for idx, tensor in enumerate(mps.sites):
        a = tensor / nrm if idx == 0 else tensor
        l, _, r = a.shape
        lam = np.einsum("mst,lsr,ktq->mlkrq", _SIGMA_REAL, a, a, optimize=True)
        lam = lam.reshape(4, l * l, r * r)
        acc = None
        for mu in range(4):
            t = boundary
            for _ in range(4):
                t = np.tensordot(t, lam[mu], axes=([0], [0]))
            acc = t if acc is None else acc + t
        boundary = acc
    pauli_weight = float(boundary.reshape(-1)[0])
    if pauli_weight <= 0.0:
        raise NumericalError(f"non-positive replica contraction value {pauli_weight:g}")
    m2 = n - math.log2(pauli_weight)
    return MagicEstimate(
        m2_bits=float(m2),
        stderr_bits=0.0,
        n_samples=0,
        method="replica",
        normalized=float(m2) / _m2_denominator(n, normalization),
    )


# ---------------------------------------------------------------------------
# Perfect Pauli sampling


def _sampling_tensors(mps: Mps) -> list:
    """Right-canonical, unit-norm tensors; the sampler precondition."""
    work = canonicalize(mps, 0)
    nrm = float(np.linalg.norm(work.sites[0]))
    if nrm == 0.0:
        raise InputError("cannot sample a zero state")
    tensors = [t for t in work.sites]
    tensors[0] = tensors[0] / nrm
    return tensors


def conditional_pauli_probs(envs: np.ndarray, tensor: np.ndarray):
    """One site of the conditional Pauli distribution.

    envs holds the partial chains L of a batch of samples, shape
    (k, chi, chi).  Returns (probs, candidates): probs[k, mu] is the
    conditional probability of drawing mu at this site, and
    candidates[mu, k] the corresponding next partial chain.  The four
    probabilities of each row sum to one whenever every site to the
    right is right-orthonormal.
    """
    part = np.tensordot(envs, tensor, axes=([1], [0]))  # (k, l', s, r)
    weights = np.empty((envs.shape[0], 4))
    candidates = []
    for mu in range(4):
        if mu == 0:
            applied = part
        elif mu == 1:
            applied = part[:, :, ::-1, :]
        elif mu == 2:
            applied = np.stack([part[:, :, 1, :], -part[:, :, 0, :]], axis=2)
        else:
            applied = np.stack([part[:, :, 0, :], -part[:, :, 1, :]], axis=2)
        nxt = np.tensordot(applied, tensor, axes=([1, 2], [0, 1]))  # (k, r, r')
        weights[:, mu] = (nxt * nxt).sum(axis=(1, 2))
        candidates.append(nxt)
    probs = weights / weights.sum(axis=1, keepdims=True)
    return probs, np.stack(candidates)


def _sample_chunk(tensors: list, count: int, rng: np.random.Generator):
    n = len(tensors)
    envs = np.ones((count, 1, 1))
    words = np.empty((count, n), dtype=np.int8)
    for i, tensor in enumerate(tensors):
        probs, candidates = conditional_pauli_probs(envs, tensor)
        u = rng.random(count)
        cum = np.cumsum(probs, axis=1)
        choice = np.minimum((cum <= u[:, None]).sum(axis=1), 3)
        words[:, i] = choice
        envs = candidates[choice, np.arange(count)]
    chain = envs[:, 0, 0]
    xi = chain * chain / float(2**n)
    return words, xi, chain


def sample_pauli_batch(mps: Mps, n_samples: int, rng) -> tuple:
    """Draw Pauli words from Xi(P) = <P>^2 / 2^N by exact conditionals.

    Returns (words, xi) with words of shape (n_samples, N).  Sampling is
    chunked so the working set stays bounded; the chunk layout is a pure
    function of (n_samples, chi), so results are reproducible for a fixed
    seed.  Cost per sample is O(N chi^3).
    """
    if n_samples < 1:
        raise InputError("n_samples must be >= 1")
    rng = np.random.default_rng(rng)
    tensors = _sampling_tensors(mps)
    chi = max((t.shape[0] for t in tensors), default=1)
    chunk = max(32, min(n_samples, (1 << 22) // max(chi * chi, 1)))
    words = np.empty((n_samples, mps.n_sites), dtype=np.int8)
    xi = np.empty(n_samples)
    done = 0
    while done < n_samples:
        take = min(chunk, n_samples - done)
        w, x, _ = _sample_chunk(tensors, take, rng)
        words[done : done + take] = w
        xi[done : done + take] = x
        done += take
    return words, xi


def sample_pauli(mps: Mps, rng) -> PauliString:
    """Draw a single Pauli string together with Xi and <P>."""
    rng = np.random.default_rng(rng)
    tensors = _sampling_tensors(mps)
    words, xi, chain = _sample_chunk(tensors, 1, rng)
    word = words[0].astype(np.int64)
    sign = float(_word_signs(word[None, :])[0])
    return PauliString(
        word=tuple(int(w) for w in word),
        probability=float(xi[0]),
        expectation=sign * float(chain[0]),
    )


def estimate_m2(mps: Mps, n_samples: int, rng=None, *, normalization: str = "bound",
                jackknife: bool = False) -> MagicEstimate:
    """Sampled M2 estimate: -log2(mean of sampled Xi) - N.

    The standard error is the delta-method propagation of the standard
    error of the Xi sample mean; an optional jackknife over the same
    samples is reported alongside as a cross-check.  Deterministic for a
    fixed integer seed.
    """
    if n_samples < 2:
        raise InputError("n_samples must be >= 2")
    n = mps.n_sites
    _, xi = sample_pauli_batch(mps, n_samples, rng)
    mean = float(xi.mean())
    if mean <= 0.0:
        raise NumericalError("sampled Xi mean is non-positive")
    m2 = -math.log2(mean) - n
    degenerate = bool(xi.max() == xi.min())
    if degenerate:
        stderr = 0.0
    else:
        stderr = float(xi.std(ddof=1) / math.sqrt(n_samples) / (mean * math.log(2.0)))
    jk = None
    if jackknife and not degenerate:
        loo_means = (xi.sum() - xi) / (n_samples - 1)
        loo = -np.log2(loo_means) - n
        jk = float(np.sqrt((n_samples - 1) / n_samples * ((loo - loo.mean()) ** 2).sum()))
    return MagicEstimate(
        m2_bits=float(m2),
        stderr_bits=stderr,
        n_samples=int(n_samples),
        method="sampled",
        normalized=float(m2) / _m2_denominator(n, normalization),
        degenerate_samples=degenerate,
        stderr_jackknife_bits=jk,
    )
