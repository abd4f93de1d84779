"""Pilot-based channel estimation bench over an OFDM subframe grid.

A time-frequency channel (14 symbols x 12*N_RB subcarriers) is synthesised
from a tapped delay line with exponential power-delay profile and
sum-of-sinusoids Rayleigh fading per tap. Estimators see noisy observations
at a staggered pilot lattice and must fill the grid:

  * least squares at pilots + {nearest, bilinear, biharmonic} interpolation;
  * a separable Wiener (MMSE) filter built from the model's Bessel-J0 time
    correlation and the delay profile's frequency correlation.

The biharmonic interpolant is the scattered-data spline s(x) = a0 + a1 t +
a2 f + sum_j alpha_j phi(||x - x_j||) with phi(r) = r^2 log r, side
conditions sum alpha = sum alpha t = sum alpha f = 0, over coordinates
normalised to [0, 1]. The affine trend term makes constants and planes
reproduce exactly, which also pins down the spline's behaviour far from
pilots.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from scipy.interpolate import griddata
from scipy.linalg import LinAlgError, cho_factor, cho_solve, solve
from scipy.special import j0

from .engine import derive_stream

N_SYMBOLS = 14
SC_PER_RB = 12
SYMBOL_SPACING_S = 1e-3 / N_SYMBOLS
SUBCARRIER_HZ = 15e3
BANDWIDTH_RB = {"1.4MHz": 6, "5MHz": 25, "10MHz": 50}
PILOT_SYMBOLS = (0, 4, 7, 11)
PILOT_OFFSETS = (0, 3, 0, 3)  # 3-subcarrier stagger between symbol pairs
PILOT_SPACING = 6

INTERP_METHODS = ("nearest", "bilinear", "biharmonic")


class DegenerateLatticeError(RuntimeError):
    """Pilot geometry cannot support the requested interpolant."""


class ConditioningError(RuntimeError):
    """The MMSE pilot covariance is numerically indefinite."""


@dataclass(frozen=True)
class GridSpec:
    bandwidth: str = "5MHz"

    def __post_init__(self):
        if self.bandwidth not in BANDWIDTH_RB:
            raise ValueError(f"bandwidth must be one of {sorted(BANDWIDTH_RB)}")

    @property
    def n_rb(self) -> int:
        return BANDWIDTH_RB[self.bandwidth]

    @property
    def n_subcarriers(self) -> int:
        return SC_PER_RB * self.n_rb

    @property
    def shape(self) -> Tuple[int, int]:
        return (N_SYMBOLS, self.n_subcarriers)


@dataclass(frozen=True)
class PilotLattice:
    symbols: np.ndarray = field(repr=False)
    subcarriers: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)  # unit-modulus

    def __post_init__(self):
        if len(self.symbols) < 4:
            raise ValueError("need at least 4 pilots")
        if not np.allclose(np.abs(self.values), 1.0, atol=1e-12):
            raise ValueError("pilot values must be unit-modulus")

    @property
    def count(self) -> int:
        return len(self.symbols)

    @classmethod
    def standard(cls, spec: GridSpec) -> "PilotLattice":
        syms, scs = [], []
        for sym, off in zip(PILOT_SYMBOLS, PILOT_OFFSETS):
            sc = np.arange(off, spec.n_subcarriers, PILOT_SPACING)
            syms.append(np.full(sc.size, sym))
            scs.append(sc)
        symbols = np.concatenate(syms)
        subcarriers = np.concatenate(scs)
        return cls(symbols, subcarriers, np.ones(symbols.size, dtype=np.complex128))

    @classmethod
    def full_grid(cls, spec: GridSpec) -> "PilotLattice":
        """Pilot on every resource element (for noiseless-limit checks)."""
        t, f = np.meshgrid(np.arange(N_SYMBOLS), np.arange(spec.n_subcarriers), indexing="ij")
        return cls(t.ravel(), f.ravel(), np.ones(t.size, dtype=np.complex128))


@dataclass(frozen=True)
class ChannelModel:
    n_taps: int = 6
    tap_spacing_s: float = 0.2e-6
    decay: float = 1.0  # tap powers ~ exp(-l/decay), normalised to sum 1
    doppler_hz: float = 50.0
    n_sinusoids: int = 16

    def tap_powers(self) -> np.ndarray:
        p = np.exp(-np.arange(self.n_taps) / self.decay)
        return p / p.sum()

    def tap_delays(self) -> np.ndarray:
        return np.arange(self.n_taps) * self.tap_spacing_s


def synth_channel(
    spec: GridSpec,
    model: ChannelModel,
    seed: int,
    noise_var: float,
    lattice: Optional[PilotLattice] = None,
) -> Tuple[np.ndarray, np.ndarray, PilotLattice]:
    """Draw one channel realisation; returns (H, noisy pilot observations, lattice).

    H[t, f] = sum_l g_l(t) exp(-j 2 pi f_Hz tau_l) with g_l a sum of
    `n_sinusoids` equal-power sinusoids at Doppler shifts f_d cos(angle).
    Observations are y_p = H[p] * x_p + CN(0, noise_var).
    """
    if noise_var < 0:
        raise ValueError("noise_var must be >= 0")
    lattice = lattice or PilotLattice.standard(spec)
    rng = derive_stream(seed, "chanest.channel").generator
    powers = model.tap_powers()
    delays = model.tap_delays()
    t_s = np.arange(N_SYMBOLS) * SYMBOL_SPACING_S
    f_hz = np.arange(spec.n_subcarriers) * SUBCARRIER_HZ

    gains = np.zeros((model.n_taps, N_SYMBOLS), dtype=np.complex128)
    for l in range(model.n_taps):
        angles = rng.uniform(0.0, 2 * math.pi, size=model.n_sinusoids)
        phases = rng.uniform(0.0, 2 * math.pi, size=model.n_sinusoids)
        omega = 2 * math.pi * model.doppler_hz * np.cos(angles)
        ph = omega[:, None] * t_s[None, :] + phases[:, None]
        gains[l] = math.sqrt(powers[l] / model.n_sinusoids) * np.exp(1j * ph).sum(axis=0)

    steer = np.exp(-2j * math.pi * f_hz[None, :] * delays[:, None])  # (taps, F)
    h = gains.T @ steer  # (T, F)

    h_p = h[lattice.symbols, lattice.subcarriers]
    noise = np.zeros(lattice.count, dtype=np.complex128)
    if noise_var > 0:
        noise = math.sqrt(noise_var / 2.0) * (
            rng.standard_normal(lattice.count) + 1j * rng.standard_normal(lattice.count)
        )
    y = h_p * lattice.values + noise
    return h, y, lattice


def ls_at_pilots(observations: np.ndarray, lattice: PilotLattice) -> np.ndarray:
    """Least-squares pilot estimates y_p / x_p."""
    if np.any(np.abs(lattice.values) < 1e-12):
        raise ValueError("pilot values must be nonzero")
    return observations / lattice.values


def _norm_coords(symbols, subcarriers, spec: GridSpec) -> np.ndarray:
    t = np.asarray(symbols, dtype=np.float64) / (N_SYMBOLS - 1)
    f = np.asarray(subcarriers, dtype=np.float64) / max(spec.n_subcarriers - 1, 1)
    return np.column_stack([t, f])


def _tps_kernel(r2: np.ndarray) -> np.ndarray:
    # phi(r) = r^2 log r = 0.5 * r^2 log r^2, with phi(0) = 0
    out = np.zeros_like(r2)
    mask = r2 > 0
    out[mask] = 0.5 * r2[mask] * np.log(r2[mask])
    return out


def interpolate(
    pilot_estimates: np.ndarray,
    lattice: PilotLattice,
    spec: GridSpec,
    method: str,
) -> np.ndarray:
    """Fill the whole grid from pilot estimates; exact at pilot positions."""
    if method not in INTERP_METHODS:
        raise ValueError(f"method must be one of {INTERP_METHODS}, got {method!r}")
    pts = _norm_coords(lattice.symbols, lattice.subcarriers, spec)
    t, f = np.meshgrid(np.arange(N_SYMBOLS), np.arange(spec.n_subcarriers), indexing="ij")
    targets = _norm_coords(t.ravel(), f.ravel(), spec)

    if method in ("nearest", "bilinear"):
        kind = "nearest" if method == "nearest" else "linear"
        est = griddata(pts, pilot_estimates, targets, method=kind)
        if method == "bilinear":
            hole = np.isnan(est)
            if np.any(hole):  # outside the pilot hull; extend with nearest
                est[hole] = griddata(pts, pilot_estimates, targets[hole], method="nearest")
        return est.reshape(spec.shape)

    # biharmonic spline with affine trend
    n = lattice.count
    if n < 3 or np.linalg.matrix_rank(np.column_stack([np.ones(n), pts])) < 3:
        raise DegenerateLatticeError("biharmonic needs >= 3 non-collinear pilots")
    d2 = ((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    if np.any(d2[~np.eye(n, dtype=bool)] == 0.0):
        raise DegenerateLatticeError("coincident pilot positions")
    k = _tps_kernel(d2)
    p = np.column_stack([np.ones(n), pts])
    a = np.zeros((n + 3, n + 3))
    a[:n, :n] = k
    a[:n, n:] = p
    a[n:, :n] = p.T
    rhs = np.zeros(n + 3, dtype=np.complex128)
    rhs[:n] = pilot_estimates
    try:
        coef = solve(a, rhs)
    except LinAlgError as exc:
        raise DegenerateLatticeError(f"singular biharmonic system: {exc}") from exc
    alpha, beta = coef[:n], coef[n:]
    d2t = ((targets[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2)
    est = _tps_kernel(d2t) @ alpha + beta[0] + targets @ beta[1:]
    return est.reshape(spec.shape)


def _corr_tables(spec: GridSpec, model: ChannelModel) -> Tuple[np.ndarray, np.ndarray]:
    """Time/frequency correlation lookup over all index differences."""
    dt = np.arange(-(N_SYMBOLS - 1), N_SYMBOLS) * SYMBOL_SPACING_S
    r_t = j0(2 * math.pi * model.doppler_hz * dt)
    dk = np.arange(-(spec.n_subcarriers - 1), spec.n_subcarriers) * SUBCARRIER_HZ
    powers = model.tap_powers()
    delays = model.tap_delays()
    r_f = (powers[None, :] * np.exp(-2j * math.pi * dk[:, None] * delays[None, :])).sum(axis=1)
    return r_t, r_f


def mmse_estimate(
    observations: np.ndarray,
    lattice: PilotLattice,
    spec: GridSpec,
    model: ChannelModel,
    noise_var: float,
) -> np.ndarray:
    """Separable Wiener filter from pilots to the full grid.

    H_hat = R_gp (R_pp + noise_var I)^-1 H_ls with R separable into the
    Doppler (Bessel-J0) time term and the delay-profile frequency term.
    """
    h_ls = ls_at_pilots(observations, lattice)
    r_t, r_f = _corr_tables(spec, model)
    toff, koff = N_SYMBOLS - 1, spec.n_subcarriers - 1
    ps, pk = lattice.symbols, lattice.subcarriers
    r_pp = r_t[ps[:, None] - ps[None, :] + toff] * r_f[pk[:, None] - pk[None, :] + koff]
    r_pp = r_pp + noise_var * np.eye(lattice.count)
    try:
        factor = cho_factor(r_pp)
    except LinAlgError as exc:
        raise ConditioningError(
            f"pilot covariance not positive definite (n={lattice.count}, "
            f"noise_var={noise_var:g}): {exc}"
        ) from exc
    w = cho_solve(factor, h_ls)
    t, f = np.meshgrid(np.arange(N_SYMBOLS), np.arange(spec.n_subcarriers), indexing="ij")
    tg, fg = t.ravel(), f.ravel()
    r_gp = r_t[tg[:, None] - ps[None, :] + toff] * r_f[fg[:, None] - pk[None, :] + koff]
    return (r_gp @ w).reshape(spec.shape)


def nmse(estimate: np.ndarray, truth: np.ndarray) -> float:
    num = float(np.sum(np.abs(estimate - truth) ** 2))
    den = float(np.sum(np.abs(truth) ** 2))
    return num / den


ALL_METHODS = ("nearest", "bilinear", "biharmonic", "mmse")


def estimate(
    method: str,
    observations: np.ndarray,
    lattice: PilotLattice,
    spec: GridSpec,
    model: ChannelModel,
    noise_var: float,
) -> np.ndarray:
    if method == "mmse":
        return mmse_estimate(observations, lattice, spec, model, noise_var)
    return interpolate(ls_at_pilots(observations, lattice), lattice, spec, method)


@dataclass(frozen=True)
class BenchRow:
    method: str
    bandwidth: str
    nmse_mean: float
    nmse_db_mean: float
    time_ms_median: float


def bench(
    methods: Sequence[str],
    spec: GridSpec,
    model: ChannelModel,
    seeds: Sequence[int],
    snr_db: float = 10.0,
    repetitions: int = 5,
) -> List[BenchRow]:
    """Score and time estimators: NMSE averaged over seeds, wall time as the
    median of `repetitions` runs on the first seed's data."""
    if repetitions < 5:
        raise ValueError("repetitions must be >= 5 for a stable timing median")
    noise_var = 10.0 ** (-snr_db / 10.0)
    data = [synth_channel(spec, model, seed, noise_var) for seed in seeds]
    rows = []
    for method in methods:
        if method not in ALL_METHODS:
            raise ValueError(f"unknown method {method!r}")
        errs = [nmse(estimate(method, y, lat, spec, model, noise_var), h) for h, y, lat in data]
        h0, y0, lat0 = data[0]
        times = []
        for _ in range(repetitions):
            t0 = time.perf_counter()
            estimate(method, y0, lat0, spec, model, noise_var)
            times.append(time.perf_counter() - t0)
        mean_err = float(np.mean(errs))
        rows.append(
            BenchRow(
                method=method,
                bandwidth=spec.bandwidth,
                nmse_mean=mean_err,
                nmse_db_mean=10.0 * math.log10(mean_err) if mean_err > 0 else -math.inf,
                time_ms_median=1e3 * float(np.median(times)),
            )
        )
    return rows
