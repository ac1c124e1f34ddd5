"""Baseband signal generation, unit conversions and additive noise."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# A ComplexFrame is simply a 1-D complex128 array of M samples.
ComplexFrame = np.ndarray

QPSK_POINTS = np.array([1 + 1j, 1 - 1j, -1 + 1j, -1 - 1j]) / np.sqrt(2)


@dataclass(frozen=True)
class NoiseModel:
    """Circularly-symmetric complex Gaussian noise, ``variance`` watts per sample."""

    variance: float

    def __post_init__(self):
        if not self.variance >= 0:
            raise ValueError(f"noise variance must be >= 0, got {self.variance}")

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))


def dbm_to_watts(p_dbm):
    """Convert dBm to watts. Works on scalars and arrays; -inf maps to 0 W."""
    if np.ndim(p_dbm):
        return 10.0 ** ((np.asarray(p_dbm, dtype=float) - 30.0) / 10.0)
    return 10.0 ** ((float(p_dbm) - 30.0) / 10.0)


def watts_to_dbm(p_watts):
    return 10.0 * np.log10(p_watts) + 30.0


def as_rng(seed) -> np.random.Generator:
    """Accept a Generator, an int, or a sequence of ints (seed derivation)."""
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def qpsk_frame(m: int, seed, n_frames: int | None = None) -> ComplexFrame:
    """Draw ``m`` i.i.d. uniform QPSK symbols of unit magnitude.

    With ``n_frames`` set, returns an ``(n_frames, m)`` batch drawn from the
    same stream.
    """
    if m < 1:
        raise ValueError(f"frame length must be >= 1, got {m}")
    rng = as_rng(seed)
    shape = (m,) if n_frames is None else (n_frames, m)
    return QPSK_POINTS[rng.integers(0, 4, size=shape)]


def frame_power(frame: ComplexFrame) -> float:
    """Average power per complex sample."""
    return float(np.mean(np.abs(frame) ** 2))


def scale_to_power(frame: ComplexFrame, p_dbm: float) -> ComplexFrame:
    """Rescale so the average per-sample power equals ``p_dbm``.

    Operates on the last axis, so a batch of frames is scaled frame by frame.
    A zero frame stays zero.
    """
    frame = np.asarray(frame, dtype=complex)
    if frame.size == 0:
        raise ValueError("cannot scale an empty frame")
    power = np.mean(np.abs(frame) ** 2, axis=-1, keepdims=True)
    target = dbm_to_watts(p_dbm)
    scale = np.divide(np.sqrt(target), np.sqrt(power), out=np.zeros_like(power), where=power > 0)
    return frame * scale


def complex_noise(shape, variance: float, seed) -> np.ndarray:
    rng = as_rng(seed)
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def add_noise(frame: ComplexFrame, noise: NoiseModel, seed) -> ComplexFrame:
    """Return ``frame + n`` with ``n ~ CN(0, noise.variance)`` i.i.d."""
    frame = np.asarray(frame, dtype=complex)
    if noise.variance == 0:
        return frame.copy()
    return frame + complex_noise(frame.shape, noise.variance, seed)


def to_iq(frame: ComplexFrame) -> np.ndarray:
    """Stack a complex frame (or batch) into a real ``[..., 2, M]`` I/Q tensor."""
    frame = np.asarray(frame)
    return np.stack([frame.real, frame.imag], axis=-2)


def from_iq(iq: np.ndarray) -> ComplexFrame:
    iq = np.asarray(iq)
    return iq[..., 0, :] + 1j * iq[..., 1, :]
