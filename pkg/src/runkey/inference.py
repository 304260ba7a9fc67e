"""Exact posterior and entropy analysis of the (plaintext, ciphertext) pair.

For independent sources X (plaintext) and Y (key) pushed through a
key-recoverable running-key cipher, the joint probability of a plaintext
word and an observed ciphertext factorises as ``P_X(x) * P_Y(y(x, z))``
with ``y(x, z)`` the unique key word mapping x to z.  Everything here is
built on that identity:

- :func:`posterior` enumerates all ``n**t`` plaintexts of an observed
  ciphertext exactly (log-space throughout, capped enumeration);
- :func:`log_marginal_forward` computes ``log2 P(z)`` in time linear in t by
  a scaled forward recursion over the product context chain of X and Y;
- :func:`hm_conditional` evaluates the m-order conditional entropy
  ``h_m(X|Z) = h_m(X) + h_m(Y) - h_m(Z)`` (the joint block law of (X, Z) is
  a bijective re-indexing of the independent (X, Y) law);
- :func:`hz_bracket` / :func:`hxz_bracket` sandwich the entropy rate of the
  ciphertext process, which is a function of a hidden Markov chain and has
  no closed form, between the standard monotone conditional-entropy bounds
  ``H(Z_{m+1} | Z_1..Z_m, S_1) <= h(Z) <= H(Z_{m+1} | Z_1..Z_m)``.

Enumerations are split into fixed-size index blocks; worker threads only
change which blocks run concurrently, never block boundaries or combination
order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .cipher import CipherSpec
from .errors import (
    CertificationError,
    EnumerationCapError,
    StateCapError,
    UnsupportedCipherError,
)
from .sources import SourceModel, xlog2x
from .words import as_word

DEFAULT_WORD_CAP = 1 << 24
DEFAULT_STATE_CAP = 1 << 16

# entries per enumeration block; fixed so block boundaries never depend on
# the worker count (bit-reproducibility) and memory stays bounded
_CELL = 1 << 22


def _map_ordered(fn, items, workers: int) -> list:
    """Apply ``fn`` over ``items`` preserving order, optionally on threads."""
    items = list(items)
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def log2sumexp(values: np.ndarray) -> float:
    """log2 of a sum of 2**values, stable against underflow."""
    values = np.asarray(values, dtype=float)
    top = float(values.max()) if values.size else -np.inf
    if top == -np.inf:
        return -np.inf
    return top + float(np.log2(np.exp2(values - top).sum()))


def _log2_table(table: np.ndarray) -> np.ndarray:
    out = np.full(table.shape, -np.inf)
    mask = table > 0.0
    out[mask] = np.log2(table[mask])
    return out


def _digit_matrix(n: int, width: int) -> np.ndarray:
    """Digits (most significant first) of all base-n integers below n**width."""
    idx = np.arange(n**width, dtype=np.int64)
    digits = np.empty((idx.size, width), dtype=np.int64)
    for pos in range(width - 1, -1, -1):
        idx, digits[:, pos] = np.divmod(idx, n)
    return digits


def _check_alphabets(xm: SourceModel, ym: SourceModel, spec: CipherSpec) -> int:
    n = spec.alphabet_size
    if xm.alphabet_size != n or ym.alphabet_size != n:
        raise ValueError(
            "plaintext model, key model and cipher must share one alphabet"
        )
    return n


class _ProductChain:
    """The hidden Markov chain driving the ciphertext process.

    States are pairs (plaintext context, key context) packed as
    ``sx * Sy + sy``.  For each ciphertext symbol v, ``A[v][s, s']`` is the
    probability of emitting v from state s while moving to s'; summing A[v]
    over v gives the product-chain transition matrix.  Matrices are dense
    for small state spaces and CSR-sparse beyond that.
    """

    def __init__(self, xm: SourceModel, ym: SourceModel, spec: CipherSpec,
                 state_cap: int = DEFAULT_STATE_CAP):
        n = _check_alphabets(xm, ym, spec)
        sx, sy = xm.num_states, ym.num_states
        size = sx * sy
        if size > state_cap:
            raise StateCapError(
                f"product state space {sx}*{sy} exceeds cap {state_cap}"
            )
        self.n = n
        self.size = size
        self.alpha0 = np.outer(xm.stationary, ym.stationary).ravel()
        next_x = self._context_successors(sx, n, xm.order)
        next_y = self._context_successors(sy, n, ym.order)
        self.dense = n * size * size <= _CELL
        rows = (np.arange(sx)[:, None] * sy + np.arange(sy)[None, :])
        if self.dense:
            dense = np.zeros((n, size, size))
            for a in range(n):
                wx = xm.transition[:, a]
                cols_x = next_x[:, a] * sy
                for b in range(n):
                    v = int(spec.coder[a, b])
                    cols = cols_x[:, None] + next_y[:, b][None, :]
                    dense[v][rows, cols] += wx[:, None] * ym.transition[:, b][None, :]
            self.A = dense
        else:
            triples: list[tuple[list, list, list]] = [([], [], []) for _ in range(n)]
            for a in range(n):
                wx = xm.transition[:, a]
                cols_x = next_x[:, a] * sy
                for b in range(n):
                    v = int(spec.coder[a, b])
                    cols = (cols_x[:, None] + next_y[:, b][None, :]).ravel()
                    data = (wx[:, None] * ym.transition[:, b][None, :]).ravel()
                    triples[v][0].append(rows.ravel())
                    triples[v][1].append(cols)
                    triples[v][2].append(data)
            self.A = [
                sp.csr_matrix(
                    (np.concatenate(d), (np.concatenate(r), np.concatenate(c))),
                    shape=(size, size),
                )
                for r, c, d in triples
            ]

    @staticmethod
    def _context_successors(states: int, n: int, k: int) -> np.ndarray:
        s = np.arange(states)[:, None]
        a = np.arange(n)[None, :]
        if k == 0:
            return np.zeros((states, n), dtype=np.int64)
        return (s * n + a) % states

    def extend(self, arr: np.ndarray) -> np.ndarray:
        """One prefix-tree level: (Np, S) joint mass -> (Np*n, S)."""
        prefixes = arr.shape[0]
        out = np.empty((prefixes * self.n, self.size))
        view = out.reshape(prefixes, self.n, self.size)
        if self.dense:
            view[:] = np.matmul(arr, self.A).transpose(1, 0, 2)
        else:
            for v in range(self.n):
                view[:, v, :] = arr @ self.A[v]
        return out

    def forward_log2(self, observations: np.ndarray) -> np.ndarray:
        """Scaled forward pass: log2 P(z) for a batch of ciphertext rows.

        Each row's result depends only on that row, so batching and worker
        scheduling cannot change individual values.
        """
        obs = np.atleast_2d(np.asarray(observations, dtype=np.int64))
        batch, t = obs.shape
        alpha = np.repeat(self.alpha0[None, :], batch, axis=0)
        acc = np.zeros(batch)
        dead = np.zeros(batch, dtype=bool)
        for j in range(t):
            symbols = obs[:, j]
            if self.dense:
                stacked = np.matmul(alpha, self.A)  # (n, batch, size)
                alpha = stacked[symbols, np.arange(batch), :]
            else:
                fresh = np.empty_like(alpha)
                for v in range(self.n):
                    hit = np.nonzero(symbols == v)[0]
                    if hit.size:
                        fresh[hit] = alpha[hit] @ self.A[v]
                alpha = fresh
            scale = alpha.sum(axis=1)
            bad = ~(scale > 0.0)
            if bad.any():
                dead |= bad
                scale = np.where(bad, 1.0, scale)
                alpha = np.where(bad[:, None], self.alpha0[None, :], alpha)
            alpha = alpha / scale[:, None]
            acc = acc + np.log2(scale)
        acc[dead] = -np.inf
        return acc


def log_marginal_forward(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    ciphertext,
    *,
    state_cap: int = DEFAULT_STATE_CAP,
) -> float:
    """Exact ``log2 P(z)`` by the forward recursion, linear in ``len(z)``."""
    z = as_word(ciphertext, spec.alphabet_size)
    chain = _ProductChain(xm, ym, spec, state_cap)
    return float(chain.forward_log2(z[None, :])[0])


def joint_log2_table(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    ciphertext,
    *,
    cap: int = DEFAULT_WORD_CAP,
    workers: int = 1,
) -> np.ndarray:
    """log2 of ``P_X(x) * P_Y(y(x, z))`` for every plaintext word x.

    The returned array is indexed by the packed plaintext word; entries are
    -inf for plaintexts of probability zero (or with no consistent key).
    Computed by extending all plaintext prefixes one position at a time; the
    per-position term depends on the prefix only through its last
    ``max(k_X, k_Y)`` symbols, so each level is a single vectorised pass.
    """
    n = _check_alphabets(xm, ym, spec)
    z = as_word(ciphertext, n)
    t = z.size
    if n**t > cap:
        raise EnumerationCapError(
            f"enumerating {n}**{t} plaintexts exceeds cap {cap}"
        )
    key_table = spec.key_table
    if key_table is None:
        raise UnsupportedCipherError(
            "posterior enumeration needs a key-recoverable cipher"
        )
    kx, ky = xm.order, ym.order
    log_tx = _log2_table(xm.transition)
    log_ty = _log2_table(ym.transition)
    max_k = max(kx, ky)
    period = n**max_k
    head = min(t, max_k)

    if head == 0:
        arr = np.zeros(1)
    else:
        ax = xm.log2_block_prob_array(head, cap=cap)
        digits = _digit_matrix(n, head)
        key_digits = key_table[digits, z[None, :head]]
        valid = (key_digits >= 0).all(axis=1)
        packed = np.zeros(digits.shape[0], dtype=np.int64)
        for pos in range(head):
            packed = packed * n + np.maximum(key_digits[:, pos], 0)
        ay = ym.log2_block_prob_array(head, cap=cap)
        arr = ax + np.where(valid, ay[packed], -np.inf)
    if t == head:
        return arr

    sx_of = np.arange(period) % xm.num_states
    r2_of = np.arange(period) % ym.num_states
    y_ctx_digits = _digit_matrix(n, ky) if ky else None

    def level_terms(j: int) -> np.ndarray:
        """(period, n) additive log-terms for extending prefixes of length j."""
        tx = log_tx[sx_of]
        if ky:
            ctx_keys = key_table[y_ctx_digits, z[None, j - ky : j]]
            ok = (ctx_keys >= 0).all(axis=1)
            sy = np.zeros(ctx_keys.shape[0], dtype=np.int64)
            for pos in range(ky):
                sy = sy * n + np.maximum(ctx_keys[:, pos], 0)
        else:
            ok = np.ones(1, dtype=bool)
            sy = np.zeros(1, dtype=np.int64)
        key_of_a = key_table[:, z[j]]
        ty = np.full((sy.size, n), -np.inf)
        usable = key_of_a >= 0
        if usable.any():
            ty[:, usable] = log_ty[sy[:, None], key_of_a[usable][None, :]]
        ty[~ok, :] = -np.inf
        return tx + ty[r2_of]

    def grow(block: np.ndarray, terms: np.ndarray) -> np.ndarray:
        return (block.reshape(-1, period)[:, :, None] + terms[None, :, :]).reshape(-1)

    j = head
    while j < t and n ** (j + 1) <= _CELL:
        arr = grow(arr, level_terms(j))
        j += 1
    if j == t:
        return arr

    remaining = t - j
    tail = n**remaining
    all_terms = [level_terms(jj) for jj in range(j, t)]
    out = np.empty(n**t)
    block_size = max(period, (_CELL // tail) // period * period)
    starts = list(range(0, arr.shape[0], block_size))

    def run(start: int) -> None:
        sub = arr[start : start + block_size]
        for terms in all_terms:
            sub = grow(sub, terms)
        out[start * tail : (start + block_size) * tail] = sub

    _map_ordered(run, starts, workers)
    return out


@dataclass(frozen=True)
class PosteriorTable:
    """Exact conditional law over all plaintexts of a fixed ciphertext.

    ``log_posterior[u]`` is ``log2 P(x | z)`` for the plaintext word with
    packed index u; ``log_marginal`` is ``log2 P(z)``.
    """

    ciphertext: np.ndarray
    log_posterior: np.ndarray
    log_marginal: float
    alphabet_size: int

    def __post_init__(self):
        finite = self.log_posterior[np.isfinite(self.log_posterior)]
        total = float(np.exp2(finite).sum()) if finite.size else 0.0
        if abs(total - 1.0) > 1e-9:
            raise CertificationError(
                f"posterior mass {total!r} deviates from 1 beyond 1e-9"
            )

    @property
    def length(self) -> int:
        return int(self.ciphertext.size)

    def log2_prob(self, plaintext) -> float:
        word = as_word(plaintext, self.alphabet_size)
        if word.size != self.length:
            raise ValueError("plaintext length does not match the ciphertext")
        index = 0
        for sym in word.tolist():
            index = index * self.alphabet_size + sym
        return float(self.log_posterior[index])

    def prob(self, plaintext) -> float:
        return float(np.exp2(self.log2_prob(plaintext)))

    def to_csv(self, target) -> None:
        """Write (plaintext-as-base-n-string, log2_posterior) rows."""
        from .words import word_to_text
        from .sources import _open_for

        n, t = self.alphabet_size, self.length
        with _open_for(target, "w") as fh:
            fh.write("plaintext,log2_posterior\n")
            if n <= 36:
                alphabet = np.frombuffer(
                    b"0123456789abcdefghijklmnopqrstuvwxyz"[:n], dtype=np.uint8
                )
                chunk = 1 << 16
                for start in range(0, self.log_posterior.size, chunk):
                    stop = min(start + chunk, self.log_posterior.size)
                    digits = np.empty((stop - start, t), dtype=np.int64)
                    idx = np.arange(start, stop, dtype=np.int64)
                    for pos in range(t - 1, -1, -1):
                        idx, digits[:, pos] = np.divmod(idx, n)
                    texts = alphabet[digits].view(f"S{t}").ravel()
                    for text, value in zip(texts, self.log_posterior[start:stop]):
                        fh.write(f"{text.decode('ascii')},{value:.12g}\n")
            else:
                from .words import index_to_word

                for u, value in enumerate(self.log_posterior):
                    text = word_to_text(index_to_word(u, n, t), n)
                    fh.write(f"{text},{value:.12g}\n")


def posterior(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    ciphertext,
    *,
    cap: int = DEFAULT_WORD_CAP,
    workers: int = 1,
) -> PosteriorTable:
    """Exhaustive posterior ``P(x | z)`` over all plaintexts of length ``len(z)``.

    Normalises the joint table :func:`joint_log2_table`; the log-marginal is
    the log-sum-exp of the numerators.
    """
    n = _check_alphabets(xm, ym, spec)
    z = as_word(ciphertext, n)
    numerators = joint_log2_table(xm, ym, spec, z, cap=cap, workers=workers)
    log_marginal = log2sumexp(numerators)
    if log_marginal == -np.inf:
        raise ValueError("ciphertext has probability zero under these models")
    return PosteriorTable(
        ciphertext=z,
        log_posterior=numerators - log_marginal,
        log_marginal=log_marginal,
        alphabet_size=n,
    )


# -- ciphertext block entropies and brackets -----------------------------------


def z_block_entropies(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    length: int,
    *,
    start_state: int | None = None,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> np.ndarray:
    """Block entropies ``H(Z_1..Z_j)`` in bits for all ``j <= length``.

    ``start_state`` conditions the hidden product chain on a fixed state at
    time 1 instead of its stationary law (used by the bracket lower bound).
    Index 0 of the returned array is 0 by convention.
    """
    chain = _ProductChain(xm, ym, spec, state_cap)
    return _entropies_for_chain(chain, length, start_state, cap, workers)


def _entropies_for_chain(
    chain: _ProductChain,
    length: int,
    start_state: int | None,
    cap: int,
    workers: int,
) -> np.ndarray:
    n, size = chain.n, chain.size
    if length < 1:
        raise ValueError("block length must be >= 1")
    if n**length > cap:
        raise EnumerationCapError(
            f"enumerating {n}**{length} ciphertext blocks exceeds cap {cap}"
        )
    if start_state is None:
        front = chain.alpha0[None, :].copy()
    else:
        front = np.zeros((1, size))
        front[0, start_state] = 1.0
    totals = np.zeros(length + 1)
    depth = 0
    while depth < length and n ** (depth + 1) * size <= _CELL:
        front = chain.extend(front)
        depth += 1
        totals[depth] = -xlog2x(front.sum(axis=1)).sum()
    if depth == length:
        return totals

    remaining = length - depth
    per_prefix = n**remaining * size
    block_size = max(1, _CELL // per_prefix)
    starts = list(range(0, front.shape[0], block_size))

    def run(start: int) -> np.ndarray:
        sub = front[start : start + block_size]
        partial = np.zeros(remaining)
        for level in range(remaining):
            sub = chain.extend(sub)
            partial[level] = -xlog2x(sub.sum(axis=1)).sum()
        return partial

    for partial in _map_ordered(run, starts, workers):
        totals[depth + 1 :] += partial
    return totals


@dataclass(frozen=True)
class EntropyBracket:
    """Two-sided estimate of an entropy rate, in bits/symbol."""

    lower: float
    upper: float
    order_used: int

    def __post_init__(self):
        object.__setattr__(self, "lower", float(self.lower))
        object.__setattr__(self, "upper", float(self.upper))
        if self.lower > self.upper + 1e-9:
            raise CertificationError(
                f"bracket lower {self.lower!r} exceeds upper {self.upper!r}"
            )
        if self.lower > self.upper:  # collapse float jitter at equality
            object.__setattr__(self, "lower", self.upper)

    @property
    def width(self) -> float:
        return self.upper - self.lower

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lower + self.upper)

    def as_dict(self) -> dict:
        return {"m": self.order_used, "lower": self.lower, "upper": self.upper}


def hz_bracket(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    m: int,
    *,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> EntropyBracket:
    """Sandwich bounds on the ciphertext entropy rate h(Z).

    Upper: ``H(Z_{m+1} | Z_1..Z_m)``, non-increasing in m.  Lower: the same
    conditional entropy given additionally the hidden product state at time
    1, non-decreasing in m.  For i.i.d. X and Y both ends already coincide
    at m = 0 with the entropy of the convolved symbol law.
    """
    if m < 0:
        raise ValueError("bracket order must be >= 0")
    chain = _ProductChain(xm, ym, spec, state_cap)
    totals = _entropies_for_chain(chain, m + 1, None, cap, workers)
    upper = totals[m + 1] - totals[m]
    lower = 0.0
    for state in range(chain.size):
        weight = chain.alpha0[state]
        if weight <= 0.0:
            continue
        cond = _entropies_for_chain(chain, m + 1, state, cap, workers)
        lower += weight * (cond[m + 1] - cond[m])
    log_n = float(np.log2(chain.n))
    lower = min(max(lower, 0.0), log_n)
    upper = min(max(upper, 0.0), log_n)
    return EntropyBracket(lower=lower, upper=upper, order_used=m)


def hm_conditional(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    m: int,
    *,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> float:
    """m-order conditional entropy ``h_m(X|Z) = h_m(X,Z) - h_m(Z)`` in bits.

    Since (x, z) and (x, y) are in measure-preserving bijection and X, Y are
    independent, ``h_m(X,Z) = h_m(X) + h_m(Y)`` exactly.
    """
    _check_alphabets(xm, ym, spec)
    if spec.key_table is None:
        raise UnsupportedCipherError(
            "conditional entropies need a key-recoverable cipher"
        )
    totals = z_block_entropies(
        xm, ym, spec, m + 1, cap=cap, state_cap=state_cap, workers=workers
    )
    hm_z = totals[m + 1] / (m + 1)
    return xm.block_entropy(m, cap=cap) + ym.block_entropy(m, cap=cap) - hm_z


def hxz_bracket(
    xm: SourceModel,
    ym: SourceModel,
    spec: CipherSpec,
    m: int,
    *,
    cap: int = DEFAULT_WORD_CAP,
    state_cap: int = DEFAULT_STATE_CAP,
    workers: int = 1,
) -> EntropyBracket:
    """Bracket for the equivocation rate ``h(X|Z) = h(X) + h(Y) - h(Z)``.

    Subtracts :func:`hz_bracket` from the exact ``h(X) + h(Y)``; ends are
    clamped to [0, log2 n].  The lower end always dominates the simple bound
    ``h(X) + h(Y) - log2 n`` because the upper h(Z) bound never exceeds
    log2 n.
    """
    n = _check_alphabets(xm, ym, spec)
    z_bracket = hz_bracket(
        xm, ym, spec, m, cap=cap, state_cap=state_cap, workers=workers
    )
    base = xm.entropy_rate() + ym.entropy_rate()
    log_n = float(np.log2(n))
    lower = min(max(base - z_bracket.upper, 0.0), log_n)
    upper = min(max(base - z_bracket.lower, 0.0), log_n)
    return EntropyBracket(lower=lower, upper=upper, order_used=m)
