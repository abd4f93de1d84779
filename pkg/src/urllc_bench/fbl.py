"""Finite-blocklength achievability frontier for the real-input AWGN channel.

Implements the normal approximation to the maximal coding rate,

    R*(n, eps) = C - sqrt(V/n) * Qinv(eps) + log2(n) / (2n),

with capacity C = log2(1 + g) and dispersion
V = (g(g+2) / (2(1+g)^2)) * (log2 e)^2 for SNR g. The log2(n)/(2n)
second-order correction is on by default and switchable.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr, ndtri

LOG2E = math.log2(math.e)


@dataclass(frozen=True)
class AwgnChannel:
    """AWGN channel identified by its linear SNR."""

    snr: float

    def __post_init__(self):
        if not self.snr > 0:
            raise ValueError(f"snr must be positive, got {self.snr}")

    @property
    def snr_db(self) -> float:
        return 10.0 * math.log10(self.snr)

    @classmethod
    def from_db(cls, snr_db: float) -> "AwgnChannel":
        return cls(snr=10.0 ** (snr_db / 10.0))


@dataclass(frozen=True)
class CodeSpec:
    n: int
    k: int
    eps: float

    def __post_init__(self):
        if self.n < 1 or self.k < 1:
            raise ValueError("n and k must be >= 1")
        if not 0.0 < self.eps < 0.5:
            raise ValueError(f"eps must lie in (0, 0.5), got {self.eps}")

    @property
    def rate(self) -> float:
        return self.k / self.n


@dataclass(frozen=True)
class FblPoint:
    channel: AwgnChannel
    n: int
    eps: float
    capacity: float
    dispersion: float
    max_rate: float


def capacity(channel: AwgnChannel) -> float:
    """Shannon capacity log2(1 + snr) in bits per channel use."""
    return math.log2(1.0 + channel.snr)


def dispersion(channel: AwgnChannel) -> float:
    """Channel dispersion in bits^2 per channel use.

    Vanishes as snr -> 0 and saturates at (log2 e)^2 / 2 as snr -> inf.
    """
    g = channel.snr
    return (g * (g + 2.0) / (2.0 * (1.0 + g) ** 2)) * LOG2E**2


def q(x: float) -> float:
    """Standard-normal upper-tail probability."""
    return float(ndtr(-x))


def q_inv(p: float) -> float:
    """Inverse of the standard-normal upper tail: Q(q_inv(p)) = p."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    return float(-ndtri(p))


def ppv_max_rate(
    n: int,
    eps: float,
    channel: AwgnChannel,
    second_order_correction: bool = True,
) -> float:
    """Normal-approximation maximal rate at blocklength n and error target eps.

    The log2(n)/(2n) correction term is included unless
    `second_order_correction` is False.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if not 0.0 < eps < 0.5:
        raise ValueError(f"eps must lie in (0, 0.5), got {eps}")
    c = capacity(channel)
    v = dispersion(channel)
    rate = c - math.sqrt(v / n) * q_inv(eps)
    if second_order_correction:
        rate += math.log2(n) / (2.0 * n)
    return rate


def fbl_point(n: int, eps: float, channel: AwgnChannel, second_order_correction: bool = True) -> FblPoint:
    return FblPoint(
        channel=channel,
        n=n,
        eps=eps,
        capacity=capacity(channel),
        dispersion=dispersion(channel),
        max_rate=ppv_max_rate(n, eps, channel, second_order_correction),
    )


class BlocklengthSearchExhausted(RuntimeError):
    """No blocklength within the search cap carries the requested payload."""


def min_blocklength(
    k: int,
    eps: float,
    channel: AwgnChannel,
    second_order_correction: bool = True,
    n_max: int = 1 << 21,
) -> int:
    """Smallest n whose n * R*(n, eps) reaches k information bits.

    n * R*(n) is not guaranteed monotone at very small n, so this scans
    upward (vectorised in chunks) rather than bisecting. Raises
    BlocklengthSearchExhausted if nothing up to n_max works.
    """
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    c = capacity(channel)
    v = dispersion(channel)
    qe = q_inv(eps)
    start = 1
    chunk = 4096
    while start <= n_max:
        stop = min(start + chunk - 1, n_max)
        n = np.arange(start, stop + 1, dtype=np.float64)
        bits = n * c - np.sqrt(n * v) * qe
        if second_order_correction:
            bits += np.log2(n) / 2.0
        hit = np.nonzero(bits >= k)[0]
        if hit.size:
            return int(start + hit[0])
        start = stop + 1
        chunk = min(chunk * 2, 1 << 20)
    raise BlocklengthSearchExhausted(
        f"no blocklength up to {n_max} supports k={k} at eps={eps}, snr={channel.snr}"
    )
