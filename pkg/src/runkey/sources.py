"""Finite-alphabet stationary ergodic source models.

The concrete model family is the order-k Markov chain over contexts of k
symbols (k = 0 gives an i.i.d. source).  A model owns its symbol-emission
table, the stationary law over contexts, and everything derived from them:
exact block probabilities, exact entropy rate, per-letter block entropies,
redundancy, reproducible sampling, and corpus training with additive
smoothing.

Conventions used throughout:

- all logarithms are base 2 and ``0 * log 0 == 0``;
- contexts of k symbols are packed as base-n integers, first symbol most
  significant, so emitting ``a`` from context ``s`` leads to
  ``(s*n + a) % n**k``;
- the stationary vector is the law of any k consecutive symbols, which makes
  block probabilities position-independent.
"""

from __future__ import annotations

import io
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import (
    ConvergenceError,
    EnumerationCapError,
    InvalidDistributionError,
    ModelFormatError,
    NotErgodicError,
)
from .words import as_word

DEFAULT_BLOCK_CAP = 1 << 26

_ROW_SUM_TOL = 1e-12
_STATIONARY_TOL = 1e-10


def xlog2x(p: np.ndarray) -> np.ndarray:
    """Elementwise ``p * log2(p)`` with the convention ``0 * log2(0) == 0``."""
    p = np.asarray(p, dtype=float)
    out = np.zeros_like(p)
    mask = p > 0.0
    out[mask] = p[mask] * np.log2(p[mask])
    return out


def entropy_bits(dist) -> float:
    """Shannon entropy of a probability vector, in bits."""
    return float(-xlog2x(np.asarray(dist, dtype=float)).sum())


def _log2_safe(p: np.ndarray) -> np.ndarray:
    """log2 with zeros mapped to -inf instead of a warning."""
    p = np.asarray(p, dtype=float)
    out = np.full_like(p, -np.inf)
    mask = p > 0.0
    out[mask] = np.log2(p[mask])
    return out


def _validate_rows(table: np.ndarray) -> None:
    if np.any(table < 0.0) or not np.all(np.isfinite(table)):
        raise InvalidDistributionError("probabilities must be finite and >= 0")
    sums = table.sum(axis=1)
    if np.any(np.abs(sums - 1.0) > _ROW_SUM_TOL):
        worst = float(np.abs(sums - 1.0).max())
        raise InvalidDistributionError(
            f"probability rows must sum to 1 (worst deviation {worst:.3e})"
        )


def _closed_class_count(adjacency: list[list[int]]) -> int:
    """Number of closed communicating classes of a finite directed graph.

    Kosaraju's algorithm, iterative so large context spaces cannot hit the
    recursion limit.  A class is closed when no edge leaves it; an ergodic
    chain has exactly one.
    """
    size = len(adjacency)
    visited = [False] * size
    order: list[int] = []
    for root in range(size):
        if visited[root]:
            continue
        visited[root] = True
        stack = [(root, iter(adjacency[root]))]
        while stack:
            node, it = stack[-1]
            for nxt in it:
                if not visited[nxt]:
                    visited[nxt] = True
                    stack.append((nxt, iter(adjacency[nxt])))
                    break
            else:
                order.append(node)
                stack.pop()

    reverse: list[list[int]] = [[] for _ in range(size)]
    for node, targets in enumerate(adjacency):
        for nxt in targets:
            reverse[nxt].append(node)

    component = [-1] * size
    n_components = 0
    for root in reversed(order):
        if component[root] >= 0:
            continue
        component[root] = n_components
        stack2 = [root]
        while stack2:
            node = stack2.pop()
            for nxt in reverse[node]:
                if component[nxt] < 0:
                    component[nxt] = n_components
                    stack2.append(nxt)
        n_components += 1

    closed = [True] * n_components
    for node, targets in enumerate(adjacency):
        for nxt in targets:
            if component[nxt] != component[node]:
                closed[component[node]] = False
    return sum(closed)


def _power_iteration(step, size: int, tol: float, max_iter: int) -> np.ndarray:
    """Fixed point of a stochastic operator by damped power iteration.

    The half-lazy update ``(pi + pi @ P) / 2`` has the same fixed point and
    converges even for periodic chains.  The returned vector satisfies
    ``||step(pi) - pi||_1 < tol``.
    """
    pi = np.full(size, 1.0 / size)
    for _ in range(max_iter):
        nxt = step(pi)
        if np.abs(nxt - pi).sum() < tol:
            pi = np.maximum(pi, 0.0)
            return pi / pi.sum()
        pi = 0.5 * (nxt + pi)
    raise ConvergenceError(
        f"power iteration did not reach residual {tol:g} in {max_iter} steps"
    )


def stationary_distribution(
    transition, *, tol: float = 1e-12, max_iter: int = 10**6
) -> np.ndarray:
    """Stationary distribution of a square row-stochastic matrix.

    Raises NotErgodicError when the chain has more than one closed class
    (the fixed point is then not unique), and ConvergenceError when power
    iteration fails to reach ``tol``.
    """
    matrix = np.asarray(transition, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise InvalidDistributionError("transition matrix must be square")
    _validate_rows(matrix)
    adjacency = [np.nonzero(row > 0.0)[0].tolist() for row in matrix]
    if _closed_class_count(adjacency) != 1:
        raise NotErgodicError("transition matrix has more than one closed class")
    return _power_iteration(lambda pi: pi @ matrix, matrix.shape[0], tol, max_iter)


def _context_step(table: np.ndarray, n: int, k: int):
    """Stationary-update operator over packed contexts for a (n**k, n) table."""
    if k == 0:
        return lambda pi: pi
    tail = n ** (k - 1)

    def step(pi: np.ndarray) -> np.ndarray:
        # next context (v, a) collects mass from contexts (b, v) emitting a
        mass = (pi[:, None] * table).reshape(n, tail, n)
        return mass.sum(axis=0).reshape(-1)

    return step


def _context_adjacency(table: np.ndarray, n: int, k: int) -> list[list[int]]:
    if k == 0:
        return [[0]]
    size = table.shape[0]
    tail = n ** (k - 1)
    adjacency: list[list[int]] = []
    for s in range(size):
        base = (s % tail) * n
        adjacency.append([base + a for a in range(n) if table[s, a] > 0.0])
    return adjacency


class SourceModel:
    """A stationary ergodic order-k Markov source over ``{0..n-1}``.

    Parameters
    ----------
    alphabet_size : int
        Alphabet size n >= 2.
    order : int
        Context length k >= 0; k = 0 is an i.i.d. source.
    transition : ndarray, shape (n**k, n)
        ``transition[s, a]`` is the probability of emitting ``a`` from the
        packed context ``s``.  Rows must be probability vectors.
    stationary : ndarray, shape (n**k,), optional
        Stationary law over contexts; computed by power iteration when
        omitted, validated against ``pi = pi P`` when given.

    Instances are immutable (arrays are frozen) and safe to share between
    threads; sampling takes an explicit seed.
    """

    def __init__(self, alphabet_size, order, transition, stationary=None):
        n = int(alphabet_size)
        k = int(order)
        if n < 2:
            raise InvalidDistributionError("alphabet size must be at least 2")
        if k < 0:
            raise InvalidDistributionError("order must be non-negative")
        table = np.array(transition, dtype=float)
        if table.ndim != 2 or table.shape != (n**k, n):
            raise InvalidDistributionError(
                f"transition table must have shape ({n**k}, {n}), got {table.shape}"
            )
        _validate_rows(table)
        if _closed_class_count(_context_adjacency(table, n, k)) != 1:
            raise NotErgodicError(
                "context chain is reducible: more than one closed class"
            )
        if stationary is None:
            pi = _power_iteration(_context_step(table, n, k), n**k, 1e-12, 10**6)
        else:
            pi = np.array(stationary, dtype=float)
            if pi.shape != (n**k,):
                raise InvalidDistributionError(
                    f"stationary vector must have shape ({n**k},)"
                )
            if np.any(pi < 0.0) or abs(pi.sum() - 1.0) > 1e-9:
                raise InvalidDistributionError("stationary vector is not a distribution")
            pi = pi / pi.sum()
        residual = float(np.abs(_context_step(table, n, k)(pi) - pi).sum())
        if residual > _STATIONARY_TOL:
            raise InvalidDistributionError(
                f"stationary vector fails pi = pi P (residual {residual:.3e})"
            )
        table.flags.writeable = False
        pi.flags.writeable = False
        self._n = n
        self._k = k
        self._transition = table
        self._stationary = pi

    # -- basic structure --------------------------------------------------
    @property
    def alphabet_size(self) -> int:
        return self._n

    @property
    def order(self) -> int:
        return self._k

    @property
    def num_states(self) -> int:
        return self._transition.shape[0]

    @property
    def transition(self) -> np.ndarray:
        return self._transition

    @property
    def stationary(self) -> np.ndarray:
        return self._stationary

    @cached_property
    def deterministic(self) -> bool:
        """True when the source has zero entropy rate (degenerate model)."""
        return self.entropy_rate() < 1e-12

    def __repr__(self) -> str:
        kind = "iid" if self._k == 0 else f"order-{self._k} Markov"
        return f"SourceModel({kind}, n={self._n}, h={self.entropy_rate():.6g} bits)"

    # -- entropies ---------------------------------------------------------
    def entropy_rate(self) -> float:
        """Exact entropy rate in bits/symbol: -sum_s pi(s) sum_a T[s,a] log T[s,a]."""
        row_terms = xlog2x(self._transition).sum(axis=1)
        return float(max(0.0, -np.dot(self._stationary, row_terms)))

    def redundancy(self) -> float:
        """log2(n) minus the entropy rate, in [0, log2 n]."""
        return float(np.log2(self._n) - self.entropy_rate())

    def block_entropy(self, m: int, *, cap: int = DEFAULT_BLOCK_CAP) -> float:
        """Per-letter entropy of length-(m+1) blocks, by exact enumeration.

        Non-increasing in m and lower-bounded by the entropy rate.
        """
        if m < 0:
            raise ValueError("block entropy order must be >= 0")
        logp = self.log2_block_prob_array(m + 1, cap=cap)
        finite = np.isfinite(logp)
        total = -float(np.sum(np.exp2(logp[finite]) * logp[finite]))
        return total / (m + 1)

    # -- block probabilities ------------------------------------------------
    def _log2_marginal(self, length: int) -> np.ndarray:
        """log2 of the stationary law of ``length <= k`` consecutive symbols."""
        n, k = self._n, self._k
        pi = self._stationary.reshape((n,) * k) if k else self._stationary
        if length < k:
            pi = pi.sum(axis=tuple(range(length, k)))
        return _log2_safe(np.asarray(pi, dtype=float).reshape(-1))

    def log2_block_prob_array(
        self, length: int, *, cap: int = DEFAULT_BLOCK_CAP
    ) -> np.ndarray:
        """log2 probabilities of all ``n**length`` words of the given length.

        Words are indexed as packed base-n integers.  Raises
        EnumerationCapError when ``n**length`` exceeds ``cap``.
        """
        if length < 1:
            raise ValueError("block length must be >= 1")
        n, k = self._n, self._k
        if n**length > cap:
            raise EnumerationCapError(
                f"enumerating {n}**{length} words exceeds cap {cap}"
            )
        if length <= k:
            return self._log2_marginal(length)
        logp = self._log2_marginal(k) if k else np.zeros(1)
        log_t = _log2_safe(self._transition)
        states = n**k
        for _ in range(k, length):
            # context of every prefix is its packed last k symbols, which
            # tiles the index space with period n**k
            logp = (logp.reshape(-1, states)[:, :, None] + log_t[None, :, :]).reshape(-1)
        return logp

    def log2_block_prob(self, word) -> float:
        """log2 probability that the source emits ``word``."""
        word = as_word(word, self._n)
        n, k = self._n, self._k
        head = min(len(word), k)
        packed = 0
        for sym in word[:head].tolist():
            packed = packed * n + sym
        total = float(self._log2_marginal(head)[packed]) if head else 0.0
        log_t = _log2_safe(self._transition)
        state = packed
        for sym in word[head:].tolist():
            total += float(log_t[state, sym])
            state = (state * n + sym) % (n**k) if k else 0
        return total

    def block_prob(self, word) -> float:
        """Exact probability of ``word`` (product form, position independent)."""
        word = as_word(word, self._n)
        n, k = self._n, self._k
        head = min(len(word), k)
        packed = 0
        for sym in word[:head].tolist():
            packed = packed * n + sym
        if head:
            pi = self._stationary.reshape((n,) * k)
            if head < k:
                pi = pi.sum(axis=tuple(range(head, k)))
            total = float(pi.reshape(-1)[packed])
        else:
            total = 1.0
        state = packed
        for sym in word[head:].tolist():
            total *= float(self._transition[state, sym])
            state = (state * n + sym) % (n**k) if k else 0
        return total

    def letter_distribution(self) -> np.ndarray:
        """Stationary law of a single symbol."""
        return np.exp2(self._log2_marginal(1)) if self._k else self._transition[0].copy()

    # -- sampling ------------------------------------------------------------
    def sample(self, length: int, seed) -> np.ndarray:
        """Draw a word of the given length, deterministically in ``seed``.

        The initial context is drawn from the stationary law, so the sampled
        word follows exactly the block law of :meth:`block_prob`.
        """
        if length < 1:
            raise ValueError("sample length must be >= 1")
        rng = np.random.default_rng(seed)
        uniforms = rng.random((1, length + 1))
        words, _ = _walk_batch(self, uniforms)
        return words[0]


def _walk_batch(model: SourceModel, uniforms: np.ndarray):
    """Vectorised Markov walk for a batch of words.

    ``uniforms`` has shape (batch, t+1): column 0 picks the initial context
    from the stationary law and column i+1 picks symbol i.  Returns
    ``(words, log2_probs)`` where ``log2_probs[b]`` is the exact marginal
    log2-probability of word b (initial context marginalised out).  Each row
    depends only on its own uniforms, so results are independent of how
    samples are grouped into batches.
    """
    n, k = model.alphabet_size, model.order
    states = model.num_states
    batch, width = uniforms.shape
    t = width - 1
    cum_init = np.cumsum(model.stationary)
    state = np.minimum(
        np.searchsorted(cum_init, uniforms[:, 0], side="right"), states - 1
    )
    log_t = _log2_safe(model.transition)
    if k == 0:
        cum = np.cumsum(model.transition[0])
        words = np.minimum(
            np.searchsorted(cum, uniforms[:, 1:], side="right"), n - 1
        ).astype(np.int64)
        return words, log_t[0][words].sum(axis=1)

    cum_t = np.cumsum(model.transition, axis=1)
    words = np.empty((batch, t), dtype=np.int64)
    log_probs = np.zeros(batch)
    head_state = np.zeros(batch, dtype=np.int64)
    for i in range(t):
        u = uniforms[:, i + 1]
        sym = (cum_t[state] <= u[:, None]).sum(axis=1)
        np.minimum(sym, n - 1, out=sym)
        words[:, i] = sym
        if i >= k:
            log_probs += log_t[state, sym]
        state = (state * n + sym) % states
        if i == k - 1:
            head_state = state.copy()
    if t >= k:
        log_probs += _log2_safe(model.stationary)[head_state]
    else:
        # word shorter than the context: fall back to the marginal law
        log_probs = np.array(
            [model.log2_block_prob(words[b]) for b in range(batch)]
        )
    return words, log_probs


# -- constructors -------------------------------------------------------------


def make_bernoulli(probs: Sequence[float]) -> SourceModel:
    """I.i.d. source with the given symbol distribution."""
    p = np.asarray(probs, dtype=float)
    if p.ndim != 1 or p.size < 2:
        raise InvalidDistributionError("need a probability vector of length >= 2")
    return SourceModel(p.size, 0, p.reshape(1, -1), np.ones(1))


def make_uniform(alphabet_size: int) -> SourceModel:
    """Uniform i.i.d. source (the perfect key-stream model)."""
    return make_bernoulli(np.full(alphabet_size, 1.0 / alphabet_size))


def make_markov(
    alphabet_size: int, order: int, transition, initial=None
) -> SourceModel:
    """Order-k Markov source from a (n**k, n) symbol-emission table.

    ``initial`` optionally supplies the stationary context law; when omitted
    it is computed by power iteration.
    """
    return SourceModel(alphabet_size, order, transition, initial)


def train_markov(
    stream,
    alphabet_size: int,
    order: int,
    alpha: float = 0.5,
) -> SourceModel:
    """Fit an order-k model to a symbol stream by smoothed frequency counts.

    Every (context, next symbol) transition gets ``alpha`` pseudo-counts, so
    any ``alpha > 0`` yields strictly positive rows.  Contexts that never
    occur in the stream (possible only with ``alpha = 0``) get uniform rows.
    """
    n = int(alphabet_size)
    k = int(order)
    if alpha < 0.0:
        raise InvalidDistributionError("smoothing constant must be >= 0")
    if np.asarray(stream).size <= k:
        raise InvalidDistributionError(
            f"stream of {np.asarray(stream).size} symbols is too short for order {k}"
        )
    symbols = as_word(stream, n)
    counts = np.zeros((n**k, n))
    context = np.zeros(symbols.size - k, dtype=np.int64)
    for j in range(k):
        context = context * n + symbols[j : symbols.size - k + j]
    np.add.at(counts, (context, symbols[k:]), 1.0)
    totals = counts.sum(axis=1, keepdims=True)
    rows = np.where(
        totals + alpha * n > 0.0,
        (counts + alpha) / np.where(totals + alpha * n > 0.0, totals + alpha * n, 1.0),
        1.0 / n,
    )
    if k == 0:
        return make_bernoulli(rows[0])
    return make_markov(n, k, rows)


# -- model files ---------------------------------------------------------------


def save_model(model: SourceModel, path, header_lines: Sequence[str] = ()) -> None:
    """Write a model as the key-value text format (one probability row per line)."""
    n, k = model.alphabet_size, model.order
    with _open_for(path, "w") as fh:
        for line in header_lines:
            fh.write(f"# {line}\n")
        fh.write(f"n {n}\n")
        fh.write(f"order {k}\n")
        for s in range(model.num_states):
            label = _state_label(s, n, k)
            row = " ".join(f"{p:.17g}" for p in model.transition[s])
            fh.write(f"row {label} {row}\n")


def load_model(path) -> SourceModel:
    """Parse a model file written by :func:`save_model`."""
    n = k = None
    rows: dict[int, np.ndarray] = {}
    with _open_for(path, "r") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            try:
                if parts[0] == "n":
                    n = int(parts[1])
                elif parts[0] == "order":
                    k = int(parts[1])
                elif parts[0] == "row":
                    if n is None or k is None:
                        raise ModelFormatError(
                            f"line {lineno}: rows must follow 'n' and 'order'"
                        )
                    state = _parse_state_label(parts[1], n, k)
                    if state in rows:
                        raise ModelFormatError(f"line {lineno}: duplicate row")
                    probs = np.array([float(v) for v in parts[2:]], dtype=float)
                    if probs.size != n:
                        raise ModelFormatError(
                            f"line {lineno}: expected {n} probabilities"
                        )
                    rows[state] = probs
                else:
                    raise ModelFormatError(f"line {lineno}: unknown key {parts[0]!r}")
            except (ValueError, IndexError) as exc:
                if isinstance(exc, ModelFormatError):
                    raise
                raise ModelFormatError(f"line {lineno}: {exc}") from exc
    if n is None or k is None:
        raise ModelFormatError("model file must declare 'n' and 'order'")
    if len(rows) != n**k:
        raise ModelFormatError(
            f"model file has {len(rows)} rows, expected {n**k}"
        )
    table = np.vstack([rows[s] for s in range(n**k)])
    if k == 0:
        return make_bernoulli(table[0])
    return make_markov(n, k, table)


def _state_label(state: int, n: int, k: int) -> str:
    if k == 0:
        return "-"
    digits = []
    for _ in range(k):
        state, d = divmod(state, n)
        digits.append(str(d))
    return ",".join(reversed(digits))


def _parse_state_label(label: str, n: int, k: int) -> int:
    if k == 0:
        if label != "-":
            raise ModelFormatError(f"order-0 rows use label '-', got {label!r}")
        return 0
    parts = label.split(",")
    if len(parts) != k:
        raise ModelFormatError(f"state label {label!r} needs {k} symbols")
    state = 0
    for part in parts:
        value = int(part)
        if not 0 <= value < n:
            raise ModelFormatError(f"state symbol {value} out of range")
        state = state * n + value
    return state


class _open_for:
    """Open a path or pass through an already-open text file."""

    def __init__(self, target, mode: str):
        self._target = target
        self._mode = mode
        self._owned = None

    def __enter__(self):
        if isinstance(self._target, (str, bytes)) or hasattr(self._target, "__fspath__"):
            self._owned = open(self._target, self._mode, encoding="utf-8")
            return self._owned
        if isinstance(self._target, io.TextIOBase) or hasattr(self._target, "write" if "w" in self._mode else "read"):
            return self._target
        raise TypeError(f"cannot open {self._target!r}")

    def __exit__(self, *exc):
        if self._owned is not None:
            self._owned.close()
        return False
