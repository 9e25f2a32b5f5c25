"""Softmax cross-entropy objective of the linear associative memory.

Logits are ``u_j^T W v_i`` for output j and input i. Everything is evaluated
in blocks of inputs so the N x N logit matrix is never materialized; a block
holds an ``N x b`` slab with one column per input.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .distmodel import EmbeddingSet, MinibatchWeights
from .exceptions import NumericalError, SolverError

DEFAULT_BLOCK = 512
DEFAULT_RIDGE = 1e-8


@dataclass(frozen=True, eq=False)
class ScoreBlock:
    input_indices: np.ndarray
    logits: np.ndarray = field(repr=False)  # |block| x N
    log_partition: np.ndarray = field(repr=False)

    @property
    def scores(self) -> np.ndarray:
        return np.exp(self.logits - self.log_partition[:, None])


@dataclass(frozen=True, eq=False)
class LossValue:
    """Cross-entropy plus the input mass left out by truncation."""

    value: float
    tail_mass: float = 0.0

    def __float__(self):
        return self.value


@dataclass(frozen=True, eq=False)
class HessianFactors:
    sigma_u: np.ndarray
    m_v: np.ndarray
    ridge: float = DEFAULT_RIDGE


def _check_indices(indices, n_items):
    indices = np.atleast_1d(np.asarray(indices))
    if indices.size and (indices.min() < 0 or indices.max() >= n_items):
        raise IndexError(f"item indices must lie in [0, {n_items})")
    return indices


def logit_blocks(W, emb: EmbeddingSet, indices, block_size=DEFAULT_BLOCK):
    """Yield ``(idx, L)`` with ``L[j, r] = u_j^T W v_{idx[r]}`` over all outputs j."""
    A = emb.U.T @ W
    for start in range(0, len(indices), block_size):
        idx = indices[start:start + block_size]
        yield idx, A @ emb.V[:, idx]


def _logsumexp_cols(L):
    m = L.max(axis=0)
    return m + np.log(np.exp(L - m).sum(axis=0))


def scores(W, emb: EmbeddingSet, input_indices, block_size=DEFAULT_BLOCK) -> ScoreBlock:
    idx = _check_indices(input_indices, emb.n_items)
    L = np.concatenate([blk for _, blk in logit_blocks(W, emb, idx, block_size)], axis=1) if idx.size else np.zeros((emb.n_items, 0))
    return ScoreBlock(idx, L.T, _logsumexp_cols(L) if idx.size else np.zeros(0))


@dataclass
class PassResult:
    """Accumulated output of one blocked sweep over a set of inputs."""

    loss: float = 0.0
    gradient: np.ndarray | None = None
    signal: np.ndarray | None = None
    best_other: np.ndarray | None = None


def blocked_pass(W, emb: EmbeddingSet, weights: MinibatchWeights | None, indices=None,
                 want_gradient=True, want_loss=True, want_margins=False,
                 block_size=DEFAULT_BLOCK) -> PassResult:
    """Single sweep computing any of loss, negative gradient and recovery margins.

    ``weights`` supplies q over ``indices`` (defaults to the support of
    ``weights``). With ``want_margins`` the signal logit and the best
    competing logit over all N outputs are returned for every input.
    """
    if indices is None:
        indices = weights.indices
        q = weights.weights
    elif weights is not None:
        q = weights.dense()[indices]
    else:
        q = np.zeros(len(indices))
    U = emb.U
    d = emb.dim
    out = PassResult()
    if want_gradient:
        out.gradient = np.zeros((d, d))
    if want_margins:
        out.signal = np.empty(len(indices))
        out.best_other = np.empty(len(indices))
    loss_terms = []
    pos = 0
    for idx, L in logit_blocks(W, emb, indices, block_size):
        b = len(idx)
        cols = np.arange(b)
        qb = q[pos:pos + b]
        signal = L[idx, cols].copy()
        L[idx, cols] = -np.inf
        best_other = L.max(axis=0)
        L[idx, cols] = signal
        if want_margins:
            out.signal[pos:pos + b] = signal
            out.best_other[pos:pos + b] = best_other
        if want_gradient or want_loss:
            m = np.maximum(signal, best_other)
            L -= m
            np.exp(L, out=L)
            Z = L.sum(axis=0)
            if want_loss:
                lse = m + np.log(Z)
                loss_terms.append(qb * (lse - signal))
            if want_gradient:
                L *= qb / Z
                # sum_i q_i (u_i - U p_i) v_i^T for this block
                out.gradient += (U[:, idx] * qb - U @ L) @ emb.V[:, idx].T
        pos += b
    if want_loss:
        out.loss = math.fsum(np.concatenate(loss_terms)) if loss_terms else 0.0
    if want_gradient and not np.all(np.isfinite(out.gradient)):
        raise NumericalError("non-finite gradient")
    return out


def _support(weights, eval_support):
    if eval_support is None:
        return weights, 0.0
    if eval_support > weights.n_items:
        raise ValueError("eval_support exceeds n_items")
    kept = weights.restrict(stop=eval_support)
    tail = math.fsum(weights.weights) - math.fsum(kept.weights)
    return kept, max(tail, 0.0)


def loss(W, emb: EmbeddingSet, weights: MinibatchWeights, eval_support=None,
         block_size=DEFAULT_BLOCK) -> LossValue:
    """-sum_i q_i log p_W(i|i); with ``eval_support`` only inputs i < eval_support count."""
    kept, tail = _support(weights, eval_support)
    res = blocked_pass(W, emb, kept, want_gradient=False, block_size=block_size)
    return LossValue(res.loss, tail)


def gradient(W, emb: EmbeddingSet, weights: MinibatchWeights, eval_support=None,
             block_size=DEFAULT_BLOCK) -> np.ndarray:
    """Negative gradient G = sum_i q_i (u_i - sum_j u_j p_W(j|i)) v_i^T."""
    kept, _ = _support(weights, eval_support)
    if not np.any(W):
        return gradient_at_zero(emb, kept)
    return blocked_pass(W, emb, kept, want_loss=False, block_size=block_size).gradient


def gradient_at_zero(emb: EmbeddingSet, weights: MinibatchWeights) -> np.ndarray:
    """Closed form at W = 0, where every softmax row is uniform."""
    idx, q = weights.indices, weights.weights
    Vq = emb.V[:, idx] @ q
    return (emb.U[:, idx] * q) @ emb.V[:, idx].T - np.outer(emb.u_mean, Vq)


def deflated_gradient(emb: EmbeddingSet, weights: MinibatchWeights, threshold: int) -> np.ndarray:
    """sum_{i >= threshold} q_i u_i v_i^T: the gradient with the top items removed."""
    if not 0 <= threshold <= emb.n_items:
        raise ValueError("threshold must lie in [0, N]")
    kept = weights.restrict(start=int(threshold))
    idx = kept.indices
    return (emb.U[:, idx] * kept.weights) @ emb.V[:, idx].T


def hessian_factors(emb: EmbeddingSet, weights: MinibatchWeights, ridge=DEFAULT_RIDGE) -> HessianFactors:
    if ridge < 0:
        raise ValueError("ridge must be nonnegative")
    U = emb.U
    ubar = emb.u_mean
    sigma_u = U @ U.T / emb.n_items - np.outer(ubar, ubar)
    Vs = emb.V[:, weights.indices]
    m_v = (Vs * weights.weights) @ Vs.T
    sigma_u = 0.5 * (sigma_u + sigma_u.T)
    m_v = 0.5 * (m_v + m_v.T)
    return HessianFactors(sigma_u, m_v, float(ridge))


def hessian_apply(factors: HessianFactors, delta) -> np.ndarray:
    """Hessian of the loss at W = 0 applied to a direction: Sigma_u @ delta @ M_v."""
    return factors.sigma_u @ delta @ factors.m_v


def _spd_solve(A, B, name, ridge):
    A = A + ridge * np.eye(len(A))
    try:
        cho = scipy.linalg.cho_factor(A, lower=True, check_finite=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        ev = np.linalg.eigvalsh(A)
        raise SolverError(
            f"{name} + ridge*I is not positive definite (ridge={ridge:g}, "
            f"eigenvalue range [{ev[0]:.3e}, {ev[-1]:.3e}])"
        ) from exc
    return scipy.linalg.cho_solve(cho, B)


def hessian_inverse_apply(factors: HessianFactors, G) -> np.ndarray:
    """(Sigma_u + rI)^-1 G (M_v + rI)^-1."""
    left = _spd_solve(factors.sigma_u, G, "Sigma_u", factors.ridge)
    # X M = left  <=>  M X^T = left^T since M is symmetric
    return _spd_solve(factors.m_v, left.T, "M_v", factors.ridge).T
