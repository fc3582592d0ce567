"""Monotonic chunkwise attention mathematics.

Covers the monotonic energy function, its sigmoid selection
probabilities, the deterministic hard decode used at inference, the exact
marginal (expected) attention used at training time, soft attention over
a fixed-width trailing chunk, and analytic gradients of the energy
function.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import _kernels


@dataclass(frozen=True)
class MoChaParams:
    """Parameters of the monotonic energy function plus the chunk width.

    energy = g * (v/||v||) . tanh(W_dec h_dec + W_enc h_enc + b) + r_bias
    """

    v: np.ndarray
    W_dec: np.ndarray
    W_enc: np.ndarray
    b: np.ndarray
    g: float
    r_bias: float
    chunk_width: int = 2

    def __post_init__(self):
        v = np.asarray(self.v, dtype=np.float64)
        W_dec = np.asarray(self.W_dec, dtype=np.float64)
        W_enc = np.asarray(self.W_enc, dtype=np.float64)
        b = np.asarray(self.b, dtype=np.float64)
        if v.ndim != 1 or W_dec.ndim != 2 or W_enc.ndim != 2 or b.ndim != 1:
            raise ValueError("v and b must be vectors; W_dec and W_enc matrices")
        d_a = v.shape[0]
        if W_dec.shape[0] != d_a or W_enc.shape[0] != d_a or b.shape[0] != d_a:
            raise ValueError("attention dimension mismatch across v, W_dec, W_enc, b")
        for arr in (v, W_dec, W_enc, b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("parameters contain non-finite values")
        if not (math.isfinite(self.g) and math.isfinite(self.r_bias)):
            raise ValueError("g and r_bias must be finite")
        if np.linalg.norm(v) == 0.0:
            raise ValueError("v must have nonzero norm")
        if self.chunk_width < 1:
            raise ValueError("chunk width must be at least 1")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "W_dec", W_dec)
        object.__setattr__(self, "W_enc", W_enc)
        object.__setattr__(self, "b", b)

    @property
    def attention_dim(self) -> int:
        return self.v.shape[0]


@dataclass(frozen=True)
class AttentionDistribution:
    """Per-output-step attention over frames.  Rows sum to at most one;
    mass that scans past the last frame is simply missing."""

    alpha: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=np.float64)
        if alpha.ndim != 2:
            raise ValueError("alpha must be [steps x frames]")
        if not np.all(np.isfinite(alpha)):
            raise ValueError("alpha contains non-finite values")
        if np.any(alpha < 0.0) or np.any(alpha > 1.0 + 1e-9):
            raise ValueError("alpha entries must lie in [0, 1]")
        sums = alpha.sum(axis=1)
        if np.any(sums > 1.0 + 1e-9):
            raise ValueError("alpha rows must sum to at most 1")
        cum = np.cumsum(alpha, axis=1)
        if np.any(cum[1:] > cum[:-1] + 1e-9):
            raise ValueError("later rows must be stochastically dominated by earlier rows")
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class HardAlignment:
    """Attended frame per output step; None marks termination, after which
    every following step is also None.  Indices never decrease."""

    indices: tuple

    def __post_init__(self):
        seen_none = False
        prev = -1
        for idx in self.indices:
            if idx is None:
                seen_none = True
                continue
            if seen_none:
                raise ValueError("attention cannot resume after termination")
            if idx < prev:
                raise ValueError("attended indices must be non-decreasing")
            prev = idx

    @property
    def terminated(self) -> bool:
        return any(i is None for i in self.indices)


def monotonic_energy(h_enc: np.ndarray, h_dec: np.ndarray, p: MoChaParams) -> float:
    """Scalar selection energy for one encoder frame / decoder state pair."""
    h_enc = np.asarray(h_enc, dtype=np.float64)
    h_dec = np.asarray(h_dec, dtype=np.float64)
    pre = p.W_dec @ h_dec + p.W_enc @ h_enc + p.b
    v_unit = p.v / np.linalg.norm(p.v)
    return float(p.g * (v_unit @ np.tanh(pre)) + p.r_bias)


def selection_probabilities(
    enc_states: np.ndarray, dec_state: np.ndarray, p: MoChaParams
) -> np.ndarray:
    """Sigmoid selection probability per encoder frame, vectorized over T."""
    enc_states = np.asarray(enc_states, dtype=np.float64)
    dec_state = np.asarray(dec_state, dtype=np.float64)
    if enc_states.ndim != 2:
        raise ValueError("enc_states must be [T x d_enc]")
    if enc_states.shape[0] < 1:
        raise ValueError("need at least one encoder frame")
    pre = enc_states @ p.W_enc.T + (p.W_dec @ dec_state + p.b)
    v_unit = p.v / np.linalg.norm(p.v)
    energies = p.g * (np.tanh(pre) @ v_unit) + p.r_bias
    return 1.0 / (1.0 + np.exp(-energies))


def hard_monotonic_decode(probs: np.ndarray, prev_index: int = 0) -> HardAlignment:
    """Deterministic inference scan.

    For each output step, scan frames from the previous attended index
    (inclusive) and attend the first one whose probability reaches 0.5;
    if none does, terminate for this and all remaining steps.
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probs must be [L x T]")
    if prev_index < 0:
        raise ValueError("prev_index must be non-negative")
    L, T = probs.shape
    indices: list[Optional[int]] = []
    current = prev_index
    for l in range(L):
        chosen = None
        for m in range(current, T):
            if probs[l, m] >= 0.5:
                chosen = m
                break
        if chosen is None:
            indices.extend([None] * (L - l))
            break
        indices.append(chosen)
        current = chosen
    return HardAlignment(tuple(indices))


def expected_monotonic_attention(probs: np.ndarray) -> AttentionDistribution:
    """Exact marginal probability of attending frame m at output step l.

    Implements the division-free arrival recurrence
        q[l, m] = (1 - p[l, m-1]) q[l, m-1] + alpha[l-1, m]
        alpha[l, m] = p[l, m] q[l, m]
    seeded with a one-hot arrival at frame 0, which marginalizes the
    scan-and-select process exactly and stays finite for hard 0/1 inputs.
    """
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    if probs.ndim != 2:
        raise ValueError("probs must be [L x T]")
    if np.any(probs < 0.0) or np.any(probs > 1.0):
        raise ValueError("probabilities must lie in [0, 1]")
    alpha = _kernels.expected_attention_core(probs)
    return AttentionDistribution(alpha)


def chunkwise_attention(
    enc_states: np.ndarray,
    chunk_energies: np.ndarray,
    attended_index: int,
    chunk_width: int,
):
    """Soft attention over the trailing window ending at the attended frame.

    Returns a full-length weight vector (zeros outside the window, softmax
    inside) and the context vector it induces.
    """
    enc_states = np.asarray(enc_states, dtype=np.float64)
    chunk_energies = np.asarray(chunk_energies, dtype=np.float64)
    if enc_states.ndim != 2:
        raise ValueError("enc_states must be [T x d_enc]")
    T = enc_states.shape[0]
    if chunk_energies.shape != (T,):
        raise ValueError("chunk_energies must have one entry per frame")
    if chunk_width < 1:
        raise ValueError("chunk width must be at least 1")
    if not 0 <= attended_index < T:
        raise ValueError("attended index out of range")

    lo = max(0, attended_index - chunk_width + 1)
    window = chunk_energies[lo:attended_index + 1]
    shifted = window - window.max()
    exp = np.exp(shifted)
    weights = np.zeros(T)
    weights[lo:attended_index + 1] = exp / exp.sum()
    context = weights[lo:attended_index + 1] @ enc_states[lo:attended_index + 1]
    return weights, context


def energy_gradients(h_enc: np.ndarray, h_dec: np.ndarray, p: MoChaParams) -> dict:
    """Analytic partial derivatives of the monotonic energy scalar.

    Keys: v, W_dec, W_enc, b, g, r_bias, h_enc, h_dec.
    """
    h_enc = np.asarray(h_enc, dtype=np.float64)
    h_dec = np.asarray(h_dec, dtype=np.float64)
    norm_v = np.linalg.norm(p.v)
    v_unit = p.v / norm_v
    pre = p.W_dec @ h_dec + p.W_enc @ h_enc + p.b
    th = np.tanh(pre)
    sech2 = 1.0 - th ** 2

    d_pre = p.g * v_unit * sech2
    vt = float(v_unit @ th)
    return {
        "v": p.g * (th - v_unit * vt) / norm_v,
        "W_dec": np.outer(d_pre, h_dec),
        "W_enc": np.outer(d_pre, h_enc),
        "b": d_pre,
        "g": vt,
        "r_bias": 1.0,
        "h_enc": p.W_enc.T @ d_pre,
        "h_dec": p.W_dec.T @ d_pre,
    }
