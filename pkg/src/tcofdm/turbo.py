"""Four-state rate-1/2 turbo code and BCJR decoding.

Each constituent encoder is the recursive systematic code with feedback
``1 + D + D^2`` and feedforward ``1 + D^2``.  Neither encoder is terminated,
so the backward recursion starts from a uniform state distribution.

LLRs are ``log P(bit=0) / P(bit=1)``: positive values favour 0.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numba import njit

LLR_CLAMP = 50.0
N_STATES = 4


class DecoderDegeneracyError(ArithmeticError):
    """A trellis step carries no probability mass."""


def _build_trellis():
    # state = 2*a[k-1] + a[k-2], a = feedback register contents
    next_state = np.zeros((N_STATES, 2), dtype=np.int64)
    parity = np.zeros((N_STATES, 2), dtype=np.int64)
    for state in range(N_STATES):
        a1, a2 = state >> 1, state & 1
        for u in (0, 1):
            a = u ^ a1 ^ a2
            next_state[state, u] = 2 * a + a1
            parity[state, u] = a ^ a2
    return next_state, parity


@dataclass(frozen=True)
class RscCode:
    """Trellis of the ``[1, (1+D^2)/(1+D+D^2)]`` recursive systematic code."""

    next_state: np.ndarray
    parity: np.ndarray

    @classmethod
    def default(cls) -> "RscCode":
        ns, par = _build_trellis()
        ns.setflags(write=False)
        par.setflags(write=False)
        return cls(ns, par)

    @property
    def states(self) -> int:
        return N_STATES


RSC = RscCode.default()


@dataclass(frozen=True)
class InterleaverMap:
    """Permutation with ``interleave(x)[j] == x[perm[j]]``."""

    perm: np.ndarray
    seed: int | None = None

    def __post_init__(self):
        perm = np.asarray(self.perm, dtype=np.int64)
        if not np.array_equal(np.sort(perm), np.arange(perm.size)):
            raise ValueError("perm is not a permutation of 0..len-1")
        perm.setflags(write=False)
        object.__setattr__(self, "perm", perm)

    @classmethod
    def from_seed(cls, length: int, seed) -> "InterleaverMap":
        rng = np.random.default_rng(seed)
        return cls(rng.permutation(length), seed)

    @classmethod
    def identity(cls, length: int) -> "InterleaverMap":
        return cls(np.arange(length))

    def __len__(self) -> int:
        return self.perm.size

    @property
    def inverse(self) -> np.ndarray:
        inv = np.empty_like(self.perm)
        inv[self.perm] = np.arange(self.perm.size)
        return inv

    def interleave(self, x):
        return np.asarray(x)[self.perm]

    def deinterleave(self, x):
        x = np.asarray(x)
        out = np.empty_like(x)
        out[self.perm] = x
        return out


def rsc_encode(bits, code: RscCode = RSC) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    out = np.empty(bits.size, dtype=np.int8)
    state = 0
    for k, u in enumerate(bits):
        out[k] = code.parity[state, u]
        state = code.next_state[state, u]
    return out


def turbo_encode(bits, interleaver: InterleaverMap, code: RscCode = RSC):
    """Return ``(systematic, parity1, parity2)``; parity2 encodes the interleaved bits."""
    bits = np.asarray(bits, dtype=np.int8)
    if len(interleaver) != bits.size:
        raise ValueError(f"interleaver length {len(interleaver)} != {bits.size} bits")
    return bits.copy(), rsc_encode(bits, code), rsc_encode(interleaver.interleave(bits), code)


def qpsk_map(b_i, b_q):
    """Map bit pairs to ``(1 - 2 b_i) + j (1 - 2 b_q)``; works elementwise on arrays."""
    return (1 - 2 * np.asarray(b_i, dtype=np.float64)) + 1j * (1 - 2 * np.asarray(b_q, dtype=np.float64))


@njit(cache=True)
def _forward_backward(log_gamma, prior, next_state):
    n = log_gamma.shape[0]
    ns = log_gamma.shape[1]
    g = np.empty((n, ns, 2))
    for i in range(n):
        lmax = -np.inf
        for m in range(ns):
            for u in range(2):
                if log_gamma[i, m, u] > lmax:
                    lmax = log_gamma[i, m, u]
        if not np.isfinite(lmax):
            return g, np.empty((0, ns)), np.empty((0, ns)), i
        half = 0.5 * prior[i]
        for m in range(ns):
            g[i, m, 0] = np.exp(log_gamma[i, m, 0] - lmax + half)
            g[i, m, 1] = np.exp(log_gamma[i, m, 1] - lmax - half)

    alpha = np.zeros((n + 1, ns))
    alpha[0, 0] = 1.0
    for i in range(n):
        tot = 0.0
        for m in range(ns):
            a = alpha[i, m]
            for u in range(2):
                v = a * g[i, m, u]
                alpha[i + 1, next_state[m, u]] += v
                tot += v
        if not (tot > 0.0 and np.isfinite(tot)):
            return g, alpha, np.empty((0, ns)), i
        for m in range(ns):
            alpha[i + 1, m] /= tot

    beta = np.empty((n + 1, ns))
    for m in range(ns):
        beta[n, m] = 1.0 / ns
    for i in range(n - 1, -1, -1):
        tot = 0.0
        for m in range(ns):
            v = g[i, m, 0] * beta[i + 1, next_state[m, 0]] + g[i, m, 1] * beta[i + 1, next_state[m, 1]]
            beta[i, m] = v
            tot += v
        if not (tot > 0.0 and np.isfinite(tot)):
            return g, alpha, beta, i
        for m in range(ns):
            beta[i, m] /= tot
    return g, alpha, beta, -1


@njit(cache=True)
def _posterior(g, alpha, beta, next_state, clamp):
    n = g.shape[0]
    out = np.empty(n)
    for i in range(n):
        p0 = 0.0
        p1 = 0.0
        for m in range(g.shape[1]):
            p0 += alpha[i, m] * g[i, m, 0] * beta[i + 1, next_state[m, 0]]
            p1 += alpha[i, m] * g[i, m, 1] * beta[i + 1, next_state[m, 1]]
        if p0 <= 0.0:
            out[i] = -clamp
        elif p1 <= 0.0:
            out[i] = clamp
        else:
            out[i] = min(max(np.log(p0) - np.log(p1), -clamp), clamp)
    return out


@dataclass(frozen=True)
class BcjrResult:
    posterior: np.ndarray
    extrinsic: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray

    def __iter__(self):
        # unpacks as (posterior, extrinsic)
        return iter((self.posterior, self.extrinsic))


def bcjr_decode(gamma, prior=None, systematic=None, *, log_domain=False, code: RscCode = RSC) -> BcjrResult:
    """Forward-backward decoding of one constituent code.

    Parameters
    ----------
    gamma : ndarray, shape (n, 4, 2)
        Channel transition likelihoods indexed by ``[step, state, input bit]``;
        the successor state is given by the trellis. With ``log_domain=True``
        the natural log of the likelihoods is passed instead.
    prior : ndarray, shape (n,), optional
        A priori LLRs of the information bits (zero if omitted).
    systematic : ndarray, shape (n,), optional
        Channel LLR of the systematic bits already contained in ``gamma``; it is
        removed from the extrinsic output.

    Returns
    -------
    BcjrResult
        Posterior and extrinsic LLRs plus the normalized state metrics
        ``alpha`` and ``beta`` (shape ``(n + 1, 4)``).
    """
    gamma = np.asarray(gamma, dtype=np.float64)
    if gamma.ndim != 3 or gamma.shape[1:] != (N_STATES, 2):
        raise ValueError(f"gamma must have shape (n, 4, 2), got {gamma.shape}")
    n = gamma.shape[0]
    if log_domain:
        log_gamma = gamma
    else:
        if np.any(gamma < 0):
            raise ValueError("gamma must be nonnegative")
        with np.errstate(divide="ignore"):
            log_gamma = np.log(gamma)
    prior = np.zeros(n) if prior is None else np.asarray(prior, dtype=np.float64)
    if prior.shape != (n,):
        raise ValueError(f"prior must have shape ({n},)")
    if not np.all(np.isfinite(prior)):
        raise ValueError("prior LLRs must be finite")
    g, alpha, beta, bad = _forward_backward(log_gamma, prior, code.next_state)
    if bad >= 0:
        raise DecoderDegeneracyError(f"trellis step {bad} has no probability mass")
    post = _posterior(g, alpha, beta, code.next_state, LLR_CLAMP)
    ext = post - prior
    if systematic is not None:
        ext = ext - np.asarray(systematic, dtype=np.float64)
    return BcjrResult(post, ext, alpha, beta)


def turbo_decode(log_gamma1, log_gamma2, interleaver: InterleaverMap, iters: int) -> np.ndarray:
    """Iterative decoding with extrinsic exchange; returns hard bit decisions.

    ``log_gamma1`` holds decoder 1's metrics in natural bit order and
    ``log_gamma2`` decoder 2's metrics in interleaved order. Each decoder sees
    its own channel copy of the systematic bits, so the extrinsic output is
    posterior minus prior.
    """
    n = len(interleaver)
    if log_gamma1.shape[0] != n or log_gamma2.shape[0] != n:
        raise ValueError("metric tables and interleaver disagree on block length")
    if iters == 0:
        post = bcjr_decode(log_gamma1, log_domain=True).posterior
        return (post < 0).astype(np.int8)
    ext2 = np.zeros(n)
    post = None
    for _ in range(iters):
        r1 = bcjr_decode(log_gamma1, ext2, log_domain=True)
        r2 = bcjr_decode(log_gamma2, interleaver.interleave(r1.extrinsic), log_domain=True)
        ext2 = interleaver.deinterleave(r2.extrinsic)
        post = interleaver.deinterleave(r2.posterior)
    return (post < 0).astype(np.int8)
