"""CTC alignment loss, a brute-force enumeration oracle, and greedy decoding.

The loss is the standard blank-augmented forward dynamic program in log
space, with the analytic gradient (softmax minus state posterior) assembled
from the forward and backward recursions. All internal arithmetic runs in
float64 no matter the logit dtype. A target with no feasible alignment yields
an infinite loss with a zero gradient rather than an exception, so a training
loop can flag and skip the sample.

Token index 0 is reserved for the blank everywhere in this package.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import Tensor, _acc, _node

BLANK = 0

NEG_INF = -np.inf


@dataclass(frozen=True)
class TokenSequence:
    """A decoded or reference token sequence; never contains the blank index."""

    tokens: tuple
    vocabulary: dict | None = field(default=None, compare=False)

    def __post_init__(self):
        toks = tuple(int(v) for v in self.tokens)
        object.__setattr__(self, "tokens", toks)
        if any(v == BLANK for v in toks):
            raise ValueError("token sequences must not contain the blank index")
        if any(v < 0 for v in toks):
            raise ValueError("token indices must be positive")

    def __len__(self):
        return len(self.tokens)

    def words(self) -> list:
        if self.vocabulary is None:
            return [str(v) for v in self.tokens]
        return [self.vocabulary[v] for v in self.tokens]


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def _extended_labels(tokens) -> np.ndarray:
    ext = np.full(2 * len(tokens) + 1, BLANK, dtype=np.intp)
    ext[1::2] = tokens
    return ext


def _logsumexp_pair(a, b):
    return np.logaddexp(a, b)


def _forward_backward(log_probs: np.ndarray, ext: np.ndarray):
    """Alpha/beta tables over the extended label sequence, fully in log space."""
    t_len, s_len = log_probs.shape[0], len(ext)
    # skip transitions jump over a blank between distinct labels
    can_skip = np.zeros(s_len, dtype=bool)
    can_skip[2:] = (ext[2:] != BLANK) & (ext[2:] != ext[:-2])

    alpha = np.full((t_len, s_len), NEG_INF)
    alpha[0, 0] = log_probs[0, ext[0]]
    if s_len > 1:
        alpha[0, 1] = log_probs[0, ext[1]]
    for t in range(1, t_len):
        stay = alpha[t - 1]
        step = np.full(s_len, NEG_INF)
        step[1:] = alpha[t - 1, :-1]
        acc = _logsumexp_pair(stay, step)
        skip = np.full(s_len, NEG_INF)
        skip[2:] = np.where(can_skip[2:], alpha[t - 1, :-2], NEG_INF)
        acc = _logsumexp_pair(acc, skip)
        alpha[t] = acc + log_probs[t, ext]

    beta = np.full((t_len, s_len), NEG_INF)
    beta[-1, -1] = log_probs[-1, ext[-1]]
    if s_len > 1:
        beta[-1, -2] = log_probs[-1, ext[-2]]
    for t in range(t_len - 2, -1, -1):
        stay = beta[t + 1]
        step = np.full(s_len, NEG_INF)
        step[:-1] = beta[t + 1, 1:]
        acc = _logsumexp_pair(stay, step)
        skip = np.full(s_len, NEG_INF)
        skip[:-2] = np.where(can_skip[2:], beta[t + 1, 2:], NEG_INF)
        acc = _logsumexp_pair(acc, skip)
        beta[t] = acc + log_probs[t, ext]
    return alpha, beta


def ctc_loss(logits: Tensor, target: TokenSequence) -> Tensor:
    """Negative log probability of all alignments collapsing to the target.

    logits is (T, V+1) with column 0 the blank. Differentiable with respect
    to the logits; an infeasible target gives +inf loss and zero gradient.
    """
    if logits.ndim != 2:
        raise ValueError(f"logits must be (T, V+1), got {logits.shape}")
    tokens = target.tokens if isinstance(target, TokenSequence) else TokenSequence(target).tokens
    if tokens and max(tokens) >= logits.shape[1]:
        raise ValueError(f"target token {max(tokens)} outside vocabulary of {logits.shape[1] - 1}")
    raw = np.asarray(logits.data, dtype=np.float64)
    log_probs = _log_softmax(raw)
    ext = _extended_labels(tokens)
    t_len = raw.shape[0]

    alpha, beta = _forward_backward(log_probs, ext)
    tail = alpha[-1, -1]
    if len(ext) > 1:
        tail = _logsumexp_pair(tail, alpha[-1, -2])
    log_total = tail

    out_dtype = logits.data.dtype
    if not np.isfinite(log_total):
        # no feasible alignment: flag with +inf, zero gradient
        def backward_infeasible(g):
            if logits.requires_grad:
                _acc(logits, np.zeros_like(logits.data))

        return _node(np.asarray(np.inf, dtype=out_dtype), (logits,), backward_infeasible)

    # state posteriors: gamma(t, s) = alpha + beta - emission - log_total
    gamma = alpha + beta - log_probs[:, ext] - log_total
    posterior = np.zeros_like(log_probs)
    occ = np.exp(gamma)
    for s, lab in enumerate(ext):
        posterior[:, lab] += occ[:, s]
    grad64 = np.exp(log_probs) - posterior

    def backward(g):
        if logits.requires_grad:
            _acc(logits, (float(g) * grad64).astype(out_dtype, copy=False))

    return _node(np.asarray(-log_total, dtype=out_dtype), (logits,), backward)


def ctc_brute_force(logits, target: TokenSequence, max_frames: int = 10,
                    max_tokens: int = 4) -> float:
    """Exhaustive-path CTC loss: sums every label path that collapses to target.

    Enumeration over (V+1)^T paths, so inputs beyond the stated budget are
    rejected. This routine shares nothing with ctc_loss beyond the softmax.
    """
    data = np.asarray(getattr(logits, "data", logits), dtype=np.float64)
    t_len, n_labels = data.shape
    tokens = np.asarray(
        target.tokens if isinstance(target, TokenSequence) else tuple(target), dtype=np.intp)
    if t_len > max_frames:
        raise ValueError(f"enumeration budget: T={t_len} exceeds {max_frames}")
    if len(tokens) > max_tokens:
        raise ValueError(f"enumeration budget: |target|={len(tokens)} exceeds {max_tokens}")
    log_probs = _log_softmax(data)

    n_target = len(tokens)
    total_paths = n_labels ** t_len
    chunk = 1 << 16
    partials = []
    radix = n_labels ** np.arange(t_len - 1, -1, -1, dtype=np.int64)
    for start in range(0, total_paths, chunk):
        ids = np.arange(start, min(start + chunk, total_paths), dtype=np.int64)
        paths = (ids[:, None] // radix[None, :]) % n_labels  # (rows, T)
        prev = np.concatenate([np.full((len(ids), 1), -1, dtype=paths.dtype), paths[:, :-1]],
                              axis=1)
        keep = (paths != BLANK) & (paths != prev)
        counts = keep.sum(axis=1)
        ok = counts == n_target
        if n_target:
            pos = keep.cumsum(axis=1) - 1
            rows, cols = np.nonzero(keep)
            mismatch = paths[rows, cols] != tokens[np.minimum(pos[rows, cols], n_target - 1)]
            bad_rows = np.unique(rows[mismatch])
            ok[bad_rows] = False
        if not ok.any():
            continue
        good = paths[ok]
        scores = log_probs[np.arange(t_len)[None, :], good].sum(axis=1)
        m = scores.max()
        partials.append(m + np.log(np.exp(scores - m).sum()))
    if not partials:
        return float("inf")
    m = max(partials)
    return float(-(m + np.log(sum(np.exp(p - m) for p in partials))))


def greedy_decode(logits, vocabulary: dict | None = None) -> TokenSequence:
    """Frame-wise argmax, collapse consecutive repeats, drop blanks."""
    data = np.asarray(getattr(logits, "data", logits))
    if data.ndim != 2:
        raise ValueError(f"logits must be (T, V+1), got {data.shape}")
    path = np.argmax(data, axis=-1)  # ties resolve to the lowest index
    decoded = []
    prev = -1
    for label in path:
        if label != prev and label != BLANK:
            decoded.append(int(label))
        prev = label
    return TokenSequence(tuple(decoded), vocabulary)
