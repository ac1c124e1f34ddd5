"""Geometric RIS channels, codebooks, effective gains and SNR calibration."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from riscovert.signals import NoiseModel, dbm_to_watts


class DegenerateChannelError(ValueError):
    """Raised when every gain involved is zero."""


@dataclass(frozen=True)
class RisConfig:
    n: int = 16
    kappa: float = 1.0
    d_phase: float = np.pi

    def __post_init__(self):
        if self.n < 1:
            raise ValueError(f"RIS needs at least one element, got n={self.n}")
        if not 0 < self.kappa <= 1:
            raise ValueError(f"kappa must lie in (0, 1], got {self.kappa}")


@dataclass(frozen=True)
class ChannelVector:
    h: np.ndarray
    theta_deg: float
    rho: float

    @property
    def n(self) -> int:
        return len(self.h)


@dataclass(frozen=True)
class InteractionVector:
    psi: np.ndarray
    index: int


def array_response(theta_deg: float, n: int, d_phase: float = np.pi) -> np.ndarray:
    """Unit-norm ULA steering vector ``sqrt(1/n) * exp(j d k cos(theta))``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    k = np.arange(n)
    return np.exp(1j * d_phase * k * np.cos(np.deg2rad(theta_deg))) / np.sqrt(n)


def make_channel(theta_deg: float, rho: float, n: int, d_phase: float = np.pi) -> ChannelVector:
    """Single-path geometric channel ``sqrt(rho n) a(theta)``."""
    if rho < 0:
        raise ValueError(f"path loss rho must be >= 0, got {rho}")
    h = np.sqrt(rho * n) * array_response(theta_deg, n, d_phase)
    return ChannelVector(h=h, theta_deg=float(theta_deg), rho=float(rho))


def dft_codebook(n: int) -> list[InteractionVector]:
    """The ``n`` DFT codewords; codeword ``i`` has entries ``exp(j 2 pi k i / n)``."""
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    k = np.arange(n)
    return [InteractionVector(psi=np.exp(2j * np.pi * k * i / n), index=i) for i in range(n)]


def one_bit_codebook(n: int) -> list[InteractionVector]:
    """DFT codebook with each phase rounded to {0, pi}.

    Only for studies of 1-bit phase-shifter hardware; the default pipeline uses
    :func:`dft_codebook`. Duplicate codewords are kept so indices line up.
    """
    out = []
    for cw in dft_codebook(n):
        psi = np.where(np.cos(np.angle(cw.psi)) >= 0, 1.0, -1.0).astype(complex)
        out.append(InteractionVector(psi=psi, index=cw.index))
    return out


def codebook_matrix(codebook: list[InteractionVector]) -> np.ndarray:
    return np.stack([cw.psi for cw in codebook])


def effective_gain(h_in, psi, h_out, kappa: float = 1.0) -> complex:
    """Scalar end-to-end gain ``h_out^T diag(kappa psi) h_in``."""
    h_in = getattr(h_in, "h", h_in)
    h_out = getattr(h_out, "h", h_out)
    psi = getattr(psi, "psi", psi)
    if not len(h_in) == len(psi) == len(h_out):
        raise ValueError(
            f"length mismatch: h_in={len(h_in)}, psi={len(psi)}, h_out={len(h_out)}"
        )
    return complex(np.sum(h_out * kappa * psi * h_in))


def codebook_gains(h_in, h_out, codebook: list[InteractionVector], kappa: float = 1.0) -> np.ndarray:
    """Effective gain for every codeword, in codebook order."""
    h_in = getattr(h_in, "h", h_in)
    h_out = getattr(h_out, "h", h_out)
    return codebook_matrix(codebook) @ (kappa * h_in * h_out)


def calibrate_noise(gains, signal_power_dbm: float, target_snr_db: float) -> NoiseModel:
    """Noise variance giving a mean (over ``gains``) SNR of ``target_snr_db``.

    The mean is taken over linear per-gain SNRs, which makes it
    ``mean(|g|^2) P / sigma^2``.
    """
    gains = np.atleast_1d(np.asarray(gains, dtype=complex))
    if gains.size == 0:
        raise ValueError("need at least one gain")
    mean_gain = float(np.mean(np.abs(gains) ** 2))
    if mean_gain == 0:
        raise DegenerateChannelError("all gains are zero; SNR cannot be calibrated")
    p = dbm_to_watts(signal_power_dbm)
    return NoiseModel(variance=mean_gain * p / 10.0 ** (target_snr_db / 10.0))


def snr_db(gain, signal_power_dbm: float, noise: NoiseModel):
    """Analytic per-gain SNR ``|g|^2 P / sigma^2`` in dB."""
    p = dbm_to_watts(signal_power_dbm)
    with np.errstate(divide="ignore"):
        return 10.0 * np.log10(np.abs(gain) ** 2 * p / noise.variance)
