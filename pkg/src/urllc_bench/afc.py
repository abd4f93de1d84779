"""Analog fountain code: weighted-superposition encoder, exact-marginal BP
decoder, and a rateless transmit-until-ack session over real AWGN.

Each coded symbol is a weighted sum of `degree` message bits mapped to
+-1/2, with the weight vector shared by all symbols and the bit subset drawn
fresh per symbol. Symbol power is normalised to 1, so the channel noise
variance is 1/snr. Decoding passes log-likelihood ratios between bit nodes
and observation nodes; the observation update marginalises exactly over the
2^(degree-1) configurations of the other bits in the row, which is cheap for
degree <= 8.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .engine import derive_stream

LLR_CLAMP = 40.0
CONVERGENCE_TOL = 1e-3


def default_weights(degree: int) -> np.ndarray:
    """Descending geometric weights 1, 2^-1/2, 2^-1, ... scaled to unit symbol power.

    With bits at +-1/2 and independent equiprobable signs, E[symbol^2] =
    (1/4) * sum(w^2); the scale makes that exactly 1.
    """
    raw = 2.0 ** (-0.5 * np.arange(degree))
    return raw * (2.0 / math.sqrt(float(np.sum(raw**2))))


@dataclass(frozen=True)
class AfcParams:
    k: int
    degree: int = 8
    weights: Optional[np.ndarray] = None
    max_symbols: Optional[int] = None
    bp_iters: int = 50
    batch_size: Optional[int] = None
    bp_damping: float = 0.5  # fraction of the old message kept each update

    def __post_init__(self):
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.degree < 1:
            raise ValueError("degree must be >= 1")
        if self.degree > self.k:
            raise ValueError(f"degree {self.degree} exceeds message length {self.k}")
        w = self.weights if self.weights is not None else default_weights(self.degree)
        w = np.asarray(w, dtype=np.float64)
        if w.shape != (self.degree,):
            raise ValueError(f"weights must have shape ({self.degree},)")
        if not np.all(np.isfinite(w)) or not np.any(w):
            raise ValueError("weights must be finite and not all zero")
        object.__setattr__(self, "weights", w)
        if self.bp_iters < 1:
            raise ValueError("bp_iters must be >= 1")
        if not 0.0 <= self.bp_damping < 1.0:
            raise ValueError("bp_damping must lie in [0, 1)")

    @property
    def effective_max_symbols(self) -> int:
        return self.max_symbols if self.max_symbols is not None else 16 * self.k

    @property
    def effective_batch(self) -> int:
        return self.batch_size if self.batch_size is not None else -(-self.k // 8)


def sample_rows(params: AfcParams, count: int, rng: np.random.Generator) -> np.ndarray:
    """Draw `count` generator rows: (count, degree) bit indices, no repeats per row.

    Column l of a row is the bit index carrying weight l; the subset and its
    weight assignment are uniform. Rows are a pure function of the stream
    state, so replaying the stream reproduces them.
    """
    if count < 1:
        raise ValueError("count must be >= 1")
    keys = rng.random((count, params.k))
    return np.argsort(keys, axis=1, kind="stable")[:, : params.degree].astype(np.int64)


def encode(message: np.ndarray, rows: np.ndarray, params: AfcParams) -> np.ndarray:
    """Map message bits {0,1} to +-1/2 and emit one weighted sum per row."""
    message = np.asarray(message)
    if message.shape != (params.k,):
        raise ValueError(f"message must have shape ({params.k},)")
    b = message.astype(np.float64) - 0.5
    return b[rows] @ params.weights


def _config_table(degree: int) -> Tuple[np.ndarray, np.ndarray]:
    """All 2^degree sign patterns: indicator matrix (configs x degree) and signs."""
    n = 1 << degree
    bits = (np.arange(n)[:, None] >> np.arange(degree)[None, :]) & 1
    return bits.astype(np.float64), bits.astype(np.float64) - 0.5


def bp_decode(
    received: np.ndarray,
    rows: np.ndarray,
    noise_var: float,
    params: AfcParams,
) -> Tuple[np.ndarray, bool, int]:
    """Belief-propagation decode; returns (bit estimates, converged, iterations).

    Messages are clamped to +-40 so degenerate likelihoods (e.g. near-zero
    noise) saturate instead of producing non-finite values, and damped by
    `params.bp_damping` to keep the dense graph from oscillating at low SNR.
    With no symbols at all the posterior is all-zero LLRs and converged is
    False.
    """
    if not noise_var > 0:
        raise ValueError("noise_var must be positive")
    received = np.asarray(received, dtype=np.float64)
    rows = np.asarray(rows)
    if received.shape[0] != rows.shape[0]:
        raise ValueError("received symbols and rows must have equal length")
    k, d = params.k, params.degree
    m = received.shape[0]
    if m == 0:
        return np.zeros(k, dtype=np.int64), False, 0

    ind, signs = _config_table(d)  # (2^d, d)
    sums = signs @ params.weights  # symbol value of each configuration
    gauss = -((received[:, None] - sums[None, :]) ** 2) / (2.0 * noise_var)  # (m, 2^d)

    nu = np.zeros((m, d))  # bit -> observation messages
    llr = np.zeros(k)
    for iteration in range(1, params.bp_iters + 1):
        logp_plus = -np.logaddexp(0.0, -nu)  # log P(bit at position = 1)
        logp_minus = -np.logaddexp(0.0, nu)
        total = gauss + logp_plus @ ind.T + logp_minus @ (1.0 - ind).T  # (m, 2^d)
        peak = total.max(axis=1, keepdims=True)
        weights_exp = np.exp(total - peak)
        with np.errstate(divide="ignore"):
            log_plus = np.log(weights_exp @ ind)  # (m, d), peak offset cancels
            log_minus = np.log(weights_exp @ (1.0 - ind))
        mu = (log_plus - logp_plus) - (log_minus - logp_minus)
        np.clip(mu, -LLR_CLAMP, LLR_CLAMP, out=mu)

        new_llr = np.zeros(k)
        np.add.at(new_llr, rows, mu)
        np.clip(new_llr, -LLR_CLAMP, LLR_CLAMP, out=new_llr)
        nu_next = new_llr[rows] - mu
        if params.bp_damping > 0.0:
            nu_next = params.bp_damping * nu + (1.0 - params.bp_damping) * nu_next
        np.clip(nu_next, -LLR_CLAMP, LLR_CLAMP, out=nu_next)
        nu = nu_next

        delta = float(np.max(np.abs(new_llr - llr)))
        llr = new_llr
        if delta < CONVERGENCE_TOL:
            return (llr > 0).astype(np.int64), True, iteration
    return (llr > 0).astype(np.int64), False, params.bp_iters


@dataclass(frozen=True)
class AfcSession:
    """One rateless run: transmit batches until the receiver acks or the cap hits."""

    params: AfcParams
    seed: int
    snr: float
    message: np.ndarray = field(repr=False)
    decoded_at: Optional[int]  # symbols sent when the ack got through; None = failed
    decode_attempts: int
    lost_acks: int

    @property
    def success(self) -> bool:
        return self.decoded_at is not None

    @property
    def realized_rate(self) -> Optional[float]:
        """Information bits per transmitted symbol, on success."""
        if self.decoded_at is None:
            return None
        return self.params.k / self.decoded_at


def run_session(
    params: AfcParams,
    snr: float,
    seed: int,
    feedback_loss_prob: float = 0.0,
) -> AfcSession:
    """Simulate one transmit-until-ack session at linear SNR `snr`.

    After every batch the receiver decodes everything received so far; a
    decode matching the true message (genie ack, standing in for a CRC)
    triggers an ack that is lost with `feedback_loss_prob`, in which case the
    transmitter keeps sending and the next batch prompts a fresh attempt.
    Decoding is skipped while k/m exceeds log2(1+snr), which no code can
    beat, so the fast path cannot alter the outcome.
    """
    if not snr > 0:
        raise ValueError("snr must be positive (linear)")
    if not 0.0 <= feedback_loss_prob <= 1.0:
        raise ValueError("feedback_loss_prob must lie in [0, 1]")
    msg_rng = derive_stream(seed, "afc.message").generator
    row_rng = derive_stream(seed, "afc.rows").generator
    noise_rng = derive_stream(seed, "afc.noise").generator
    ack_rng = derive_stream(seed, "afc.ack").generator

    message = msg_rng.integers(0, 2, size=params.k, dtype=np.int64)
    noise_var = 1.0 / snr
    rate_bound = math.log2(1.0 + snr)
    cap = params.effective_max_symbols
    batch = params.effective_batch

    rows_parts = []
    symbols_parts = []
    sent = 0
    attempts = 0
    lost = 0
    while sent < cap:
        take = min(batch, cap - sent)
        rows = sample_rows(params, take, row_rng)
        clean = encode(message, rows, params)
        noisy = clean + noise_rng.normal(0.0, math.sqrt(noise_var), size=take)
        rows_parts.append(rows)
        symbols_parts.append(noisy)
        sent += take
        if params.k / sent > rate_bound:
            continue
        attempts += 1
        estimate, _, _ = bp_decode(
            np.concatenate(symbols_parts),
            np.concatenate(rows_parts),
            noise_var,
            params,
        )
        if np.array_equal(estimate, message):
            if ack_rng.random() < feedback_loss_prob:
                lost += 1
                continue
            return AfcSession(params, seed, snr, message, sent, attempts, lost)
    return AfcSession(params, seed, snr, message, None, attempts, lost)
