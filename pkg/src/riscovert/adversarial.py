"""Channel-compensated targeted FGM perturbations with a minimal-power search.

The transmitter knows every channel and the eavesdropper's detector. It
linearises the eavesdropper's loss toward 'noise' once, rotates the gradient by
the conjugate effective gain so the perturbation arrives aligned after the RIS,
and bisects the perturbation norm along that fixed ray.

Gains passed to this module are expressed in the units the eavesdropper's
detector sees, i.e. the effective gain divided by the eavesdropper's noise
standard deviation when its front end normalises to unit noise power.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from riscovert.channel import DegenerateChannelError
from riscovert.detector import DetectorModel, Label, complex_input_gradient, predict_signal
from riscovert.signals import dbm_to_watts


class ZeroGradientError(ValueError):
    """The eavesdropper's loss is flat at the observed frame."""


@dataclass(frozen=True)
class PerturbationBudget:
    """Per-sample perturbation power budget ``p_max_dbm``.

    ``eps_acc`` is the absolute bisection tolerance on the perturbation norm;
    when left unset it is ``rel_acc * sqrt(E_max)``.
    """

    p_max_dbm: float
    eps_acc: float | None = None
    rel_acc: float = 1e-4

    def __post_init__(self):
        if np.isnan(self.p_max_dbm) or self.p_max_dbm == np.inf:
            raise ValueError(f"p_max_dbm must be finite or -inf, got {self.p_max_dbm}")
        if self.eps_acc is not None and not self.eps_acc > 0:
            raise ValueError(f"eps_acc must be > 0, got {self.eps_acc}")

    def energy(self, m: int) -> float:
        """Frame-energy budget ``E_max = M * P_max``."""
        return m * dbm_to_watts(self.p_max_dbm)

    def tolerance(self, m: int) -> float:
        if self.eps_acc is not None:
            return self.eps_acc
        return self.rel_acc * np.sqrt(self.energy(m))


@dataclass(frozen=True)
class CraftedPerturbation:
    delta: np.ndarray
    epsilon: float
    success: bool


@dataclass(frozen=True)
class CraftedBatch:
    delta: np.ndarray  # [B, M]
    epsilon: np.ndarray  # [B]
    success: np.ndarray  # [B] bool

    def __getitem__(self, i) -> CraftedPerturbation:
        return CraftedPerturbation(self.delta[i], float(self.epsilon[i]), bool(self.success[i]))

    def __len__(self):
        return len(self.epsilon)


def _directions(eve_model: DetectorModel, y_eve: np.ndarray, g_eve: complex):
    grad = complex_input_gradient(eve_model, y_eve, Label.NOISE)
    raw = np.conj(g_eve) * grad
    norms = np.linalg.norm(raw, axis=-1, keepdims=True)
    unit = np.divide(raw, norms, out=np.zeros_like(raw), where=norms > 0)
    return unit, norms[..., 0]


def fgm_direction(eve_model: DetectorModel, y_eve, g_eve: complex) -> np.ndarray:
    """Unit-norm ``conj(g_eve) * grad`` of the loss toward 'noise' at ``y_eve``."""
    if g_eve == 0:
        raise DegenerateChannelError("eavesdropper effective gain is zero")
    unit, norm = _directions(eve_model, np.asarray(y_eve, dtype=complex), g_eve)
    if norm == 0:
        raise ZeroGradientError("eavesdropper loss gradient is zero at this input")
    return unit


def craft_batch(eve_model: DetectorModel, tx_frames, g_eve: complex,
                budget: PerturbationBudget, eve_noise=None) -> CraftedBatch:
    """Vectorised :func:`craft` over a ``[B, M]`` batch of transmit frames.

    Each frame keeps its own bracket; all brackets shrink in lockstep so the
    iteration count is shared.
    """
    x = np.atleast_2d(np.asarray(tx_frames, dtype=complex))
    b, m = x.shape
    n_eve = np.zeros_like(x) if eve_noise is None else np.broadcast_to(eve_noise, x.shape)
    e_max = budget.energy(m)
    eps_hi0 = np.sqrt(e_max)
    tol = budget.tolerance(m)

    delta = np.zeros_like(x)
    epsilon = np.zeros(b)
    y = g_eve * x + n_eve
    detected = predict_signal(eve_model, y)
    success = ~detected

    active = np.flatnonzero(detected)
    if active.size == 0 or g_eve == 0:
        return CraftedBatch(delta, epsilon, success)

    unit, norms = _directions(eve_model, y[active], g_eve)
    active, unit = active[norms > 0], unit[norms > 0]
    if active.size == 0:
        return CraftedBatch(delta, epsilon, success)

    def fooled(idx, unit_rows, eps):
        probe = g_eve * (x[idx] - eps[:, None] * unit_rows) + n_eve[idx]
        return ~predict_signal(eve_model, probe)

    hi = np.full(active.size, eps_hi0)
    ok_at_max = fooled(active, unit, hi)

    # Out of budget: the full-budget perturbation is still transmitted.
    fail = active[~ok_at_max]
    delta[fail] = -eps_hi0 * unit[~ok_at_max]
    epsilon[fail] = eps_hi0

    idx, unit = active[ok_at_max], unit[ok_at_max]
    lo, hi = np.zeros(idx.size), hi[ok_at_max]
    while idx.size and hi[0] - lo[0] > tol:
        mid = 0.5 * (lo + hi)
        hit = fooled(idx, unit, mid)
        hi = np.where(hit, mid, hi)
        lo = np.where(hit, lo, mid)
    delta[idx] = -hi[:, None] * unit
    epsilon[idx] = hi
    success[idx] = True

    energy = np.sum(np.abs(delta) ** 2, axis=1)
    assert np.all(energy <= e_max * (1 + 1e-9)), "perturbation exceeds its energy budget"
    return CraftedBatch(delta, epsilon, success)


def craft(eve_model: DetectorModel, tx_frame, g_eve: complex,
          budget: PerturbationBudget, eve_noise=None) -> CraftedPerturbation:
    """Smallest perturbation on the FGM ray that makes the eavesdropper say 'noise'.

    By default works on the noiseless observation ``g_eve * tx_frame``. Passing
    ``eve_noise`` assumes the transmitter also knows the eavesdropper's noise
    realisation and attacks ``g_eve * tx_frame + eve_noise`` instead.

    Frames the eavesdropper already misses get a zero perturbation with
    ``success=True``; a zero gradient or zero gain yields a zero perturbation
    with ``success=False``.
    """
    if eve_noise is not None:
        eve_noise = np.asarray(eve_noise)[None, :]
    return craft_batch(eve_model, np.asarray(tx_frame)[None, :], g_eve, budget, eve_noise)[0]


def apply_perturbation(tx_frame, crafted) -> np.ndarray:
    """Transmit-side superposition ``x + delta``."""
    delta = crafted.delta if hasattr(crafted, "delta") else crafted
    tx_frame = np.asarray(tx_frame)
    if tx_frame.shape != np.shape(delta):
        raise ValueError(f"shape mismatch: frame {tx_frame.shape}, delta {np.shape(delta)}")
    return tx_frame + delta
