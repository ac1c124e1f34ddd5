"""Dataset generation, detection-probability sweeps, RIS selection, correlation.

Both receivers normalise their observations to unit noise power before the
detector sees them (an AGC referenced to the known noise floor). During dataset
generation the noise floor of each (codeword, SNR) cell is set so that cell hits
its SNR exactly; at test time one noise floor per receiver is set so the SNR
averaged over the codebook equals ``LinkConditions.snr_db``.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from riscovert.adversarial import PerturbationBudget, craft_batch
from riscovert.channel import (
    RisConfig,
    calibrate_noise,
    codebook_gains,
    dft_codebook,
    make_channel,
    snr_db,
)
from riscovert.detector import Dataset, DetectorModel, Label, predict_signal
from riscovert.signals import NoiseModel, add_noise, as_rng, complex_noise, qpsk_frame, scale_to_power


class Side(enum.IntEnum):
    RECEIVER = 0
    EAVESDROPPER = 1

    @classmethod
    def parse(cls, value) -> Side:
        if isinstance(value, cls):
            return value
        aliases = {"receiver": cls.RECEIVER, "rx": cls.RECEIVER,
                   "eavesdropper": cls.EAVESDROPPER, "eve": cls.EAVESDROPPER}
        try:
            return aliases[str(value).lower()]
        except KeyError:
            raise ValueError(f"unknown side {value!r}") from None


class UndefinedCorrelationError(ValueError):
    pass


@dataclass(frozen=True)
class Topology:
    theta_tr_deg: float = 45.0
    theta_ri_deg: float = 30.0
    theta_re_deg: float = 70.0
    ris: RisConfig = field(default_factory=RisConfig)
    rho_tr: float = 1.0
    rho_ri: float = 1.0
    rho_re: float = 1.0

    def __post_init__(self):
        for name in ("theta_tr_deg", "theta_ri_deg", "theta_re_deg"):
            angle = getattr(self, name)
            if not 0 < angle < 180:
                raise ValueError(f"{name} must lie in (0, 180) degrees, got {angle}")

    def codebook(self):
        return dft_codebook(self.ris.n)

    def gains(self, side) -> np.ndarray:
        """Effective gain of every codeword toward ``side``."""
        n, d = self.ris.n, self.ris.d_phase
        h_tr = make_channel(self.theta_tr_deg, self.rho_tr, n, d)
        if Side.parse(side) is Side.RECEIVER:
            h_out = make_channel(self.theta_ri_deg, self.rho_ri, n, d)
        else:
            h_out = make_channel(self.theta_re_deg, self.rho_re, n, d)
        return codebook_gains(h_tr, h_out, self.codebook(), self.ris.kappa)


# Eavesdropper angle for each of the three evaluated topologies.
TOPOLOGY_PRESETS = {"a": 10.0, "b": 40.0, "c": 70.0}


def preset_topology(name: str, **kwargs) -> Topology:
    return Topology(theta_re_deg=TOPOLOGY_PRESETS[name], **kwargs)


@dataclass(frozen=True)
class DatasetSpec:
    samples_per_cell: int = 500
    snr_levels_db: tuple = (3.0, 5.0, 7.0)
    signal_power_dbm: float = 30.0
    include_noise_class: bool = True
    m: int = 16

    def __post_init__(self):
        if self.samples_per_cell < 1:
            raise ValueError("samples_per_cell must be positive")
        if len(self.snr_levels_db) == 0:
            raise ValueError("snr_levels_db must not be empty")


@dataclass(frozen=True)
class LinkConditions:
    """Test-time operating point.

    ``noise_aware_attack`` lets the transmitter craft against the
    eavesdropper's actual noisy observation instead of the noiseless one.
    """

    signal_power_dbm: float = 30.0
    snr_db: float = 5.0
    rel_acc: float = 1e-4
    noise_aware_attack: bool = False


def receive(tx_frames, gain: complex, noise: NoiseModel, rng) -> np.ndarray:
    """Propagate, add receiver noise, and normalise to unit noise power."""
    return add_noise(gain * np.asarray(tx_frames), noise, rng) / noise.std


def generate_dataset(topology: Topology, spec: DatasetSpec, side, seed) -> Dataset:
    """Signal frames for every (codeword, SNR) cell plus as many noise-only frames.

    Rows are shuffled; the first half is the training split.
    """
    rng = as_rng(seed)
    gains = topology.gains(side)
    n = spec.samples_per_cell
    signal = []
    for g in gains:
        for level in spec.snr_levels_db:
            noise = calibrate_noise([g], spec.signal_power_dbm, level)
            x = scale_to_power(qpsk_frame(spec.m, rng, n), spec.signal_power_dbm)
            signal.append(receive(x, g, noise, rng))
    frames = [np.concatenate(signal)]
    labels = [np.full(len(frames[0]), Label.SIGNAL, dtype=np.int64)]
    if spec.include_noise_class:
        frames.append(complex_noise((len(frames[0]), spec.m), 1.0, rng))
        labels.append(np.full(len(frames[0]), Label.NOISE, dtype=np.int64))
    frames = np.concatenate(frames)
    labels = np.concatenate(labels)
    order = rng.permutation(len(labels))
    iq = np.stack([frames.real, frames.imag], axis=1)[order]
    return Dataset(iq, labels[order], n_train=len(labels) // 2)


@dataclass(frozen=True)
class LinkBudget:
    """Per-codeword gains and the test-time noise floor of both receivers."""

    gains_rx: np.ndarray
    gains_eve: np.ndarray
    noise_rx: NoiseModel
    noise_eve: NoiseModel
    signal_power_dbm: float

    @classmethod
    def build(cls, topology: Topology, conditions: LinkConditions) -> LinkBudget:
        g_rx, g_eve = topology.gains(Side.RECEIVER), topology.gains(Side.EAVESDROPPER)
        p = conditions.signal_power_dbm
        return cls(g_rx, g_eve, calibrate_noise(g_rx, p, conditions.snr_db),
                   calibrate_noise(g_eve, p, conditions.snr_db), p)

    def gain(self, side, index: int) -> complex:
        return (self.gains_rx if Side.parse(side) is Side.RECEIVER else self.gains_eve)[index]

    def noise(self, side) -> NoiseModel:
        return self.noise_rx if Side.parse(side) is Side.RECEIVER else self.noise_eve

    def snr_db(self, side) -> np.ndarray:
        gains = self.gains_rx if Side.parse(side) is Side.RECEIVER else self.gains_eve
        return snr_db(gains, self.signal_power_dbm, self.noise(side))


def detection_probability(model: DetectorModel, topology: Topology, side, ris_index: int,
                          perturb_power=None, eve_model: DetectorModel | None = None,
                          n_trials: int = 1000, seed=0,
                          conditions: LinkConditions = LinkConditions(),
                          link: LinkBudget | None = None) -> float:
    """Fraction of signal-bearing frames that ``model`` labels 'signal'.

    With ``perturb_power`` (dBm per sample) each frame carries a perturbation
    crafted against ``eve_model`` for this codeword before propagation.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    if perturb_power is not None and eve_model is None:
        raise ValueError("a perturbation power needs the eavesdropper model to craft against")
    side = Side.parse(side)
    link = link or LinkBudget.build(topology, conditions)
    rng = as_rng(seed)
    x = scale_to_power(qpsk_frame(model.m, rng, n_trials), conditions.signal_power_dbm)
    # Receiver noise, already in units of its own noise floor.
    n_side = complex_noise(x.shape, 1.0, rng)
    if perturb_power is not None:
        g_eve = link.gains_eve[ris_index] / link.noise_eve.std
        n_eve = None
        if conditions.noise_aware_attack:
            n_eve = n_side if side is Side.EAVESDROPPER else complex_noise(x.shape, 1.0, rng)
        budget = PerturbationBudget(perturb_power, rel_acc=conditions.rel_acc)
        x = x + craft_batch(eve_model, x, g_eve, budget, n_eve).delta
    g = link.gain(side, ris_index) / link.noise(side).std
    y = g * x + n_side
    return float(np.mean(predict_signal(model, y)))


def false_alarm_rate(model: DetectorModel, n_trials: int, seed) -> float:
    """Fraction of unit-power noise-only frames labelled 'signal'."""
    y = complex_noise((n_trials, model.m), 1.0, as_rng(seed))
    return float(np.mean(predict_signal(model, y)))


def select_from_table(p_rx, p_eve) -> int:
    """Argmax of ``p_rx - p_eve``; ties go to higher ``p_rx``, then lower index."""
    p_rx, p_eve = np.asarray(p_rx, dtype=float), np.asarray(p_eve, dtype=float)
    if p_rx.size == 0:
        raise ValueError("empty codebook")
    keys = [(-(r - e), -r, i) for i, (r, e) in enumerate(zip(p_rx, p_eve))]
    return min(keys)[2]


@dataclass
class Cell:
    ris_index: int
    perturb_dbm: float | None
    p_det_rx: float
    p_det_eve: float
    snr_rx_db: float
    snr_eve_db: float


@dataclass
class DetectionReport:
    cells: list[Cell]
    powers: list
    n_trials: int
    seed: int
    selected_ris: int
    selection_power: float | None
    link: LinkBudget
    false_alarm_rx: float = float("nan")
    false_alarm_eve: float = float("nan")

    @property
    def k(self) -> int:
        return len(self.link.gains_rx)

    def grid(self, side) -> np.ndarray:
        """``[K, len(powers)]`` detection probabilities for one side."""
        attr = "p_det_rx" if Side.parse(side) is Side.RECEIVER else "p_det_eve"
        out = np.empty((self.k, len(self.powers)))
        for c in self.cells:
            out[c.ris_index, self._power_index(c.perturb_dbm)] = getattr(c, attr)
        return out

    def column(self, side, power) -> np.ndarray:
        return self.grid(side)[:, self._power_index(power)]

    def objectives(self, power=None) -> np.ndarray:
        power = self.selection_power if power is None else power
        return self.column(Side.RECEIVER, power) - self.column(Side.EAVESDROPPER, power)

    def _power_index(self, power) -> int:
        for j, p in enumerate(self.powers):
            if p == power or (p is None and power is None):
                return j
        raise KeyError(f"power {power!r} not in sweep")


def default_selection_power(powers):
    finite = [p for p in powers if p is not None]
    return max(finite) if finite else None


def sweep(rx_model: DetectorModel, eve_model: DetectorModel, topology: Topology, powers,
          n_trials: int = 1000, seed: int = 0, conditions: LinkConditions = LinkConditions(),
          selection_power="auto") -> DetectionReport:
    """Detection probability of both detectors for every (codeword, power) cell.

    ``None`` in ``powers`` means no perturbation. Every cell draws from its own
    stream ``(seed, ris_index, power_index, side)``, so cells are independent of
    evaluation order.
    """
    powers = list(powers)
    if not powers:
        raise ValueError("powers must not be empty")
    if selection_power == "auto":
        selection_power = default_selection_power(powers)
    if selection_power not in powers:
        raise ValueError(f"selection power {selection_power!r} is not on the sweep grid")
    link = LinkBudget.build(topology, conditions)
    snr_rx, snr_eve = link.snr_db(Side.RECEIVER), link.snr_db(Side.EAVESDROPPER)
    models = {Side.RECEIVER: rx_model, Side.EAVESDROPPER: eve_model}
    cells = []
    for i in range(len(link.gains_rx)):
        for j, power in enumerate(powers):
            p = {side: detection_probability(model, topology, side, i, power, eve_model, n_trials,
                                             [seed, i, j, int(side)], conditions, link)
                 for side, model in models.items()}
            cells.append(Cell(i, power, p[Side.RECEIVER], p[Side.EAVESDROPPER],
                              float(snr_rx[i]), float(snr_eve[i])))
    report = DetectionReport(cells, powers, n_trials, seed, -1, selection_power, link,
                             false_alarm_rate(rx_model, n_trials, [seed, 1 << 20, 0]),
                             false_alarm_rate(eve_model, n_trials, [seed, 1 << 20, 1]))
    report.selected_ris = select_from_table(report.column(Side.RECEIVER, selection_power),
                                            report.column(Side.EAVESDROPPER, selection_power))
    return report


def select_ris(rx_model: DetectorModel, eve_model: DetectorModel, topology: Topology,
               perturb_power, n_trials: int = 1000, seed: int = 0,
               conditions: LinkConditions = LinkConditions()) -> tuple[int, DetectionReport]:
    """Codeword maximising receiver minus eavesdropper detection at ``perturb_power``."""
    report = sweep(rx_model, eve_model, topology, [perturb_power], n_trials, seed, conditions,
                   selection_power=perturb_power)
    return report.selected_ris, report


def pearson(xs, ys) -> float:
    """Sample Pearson correlation coefficient."""
    xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
    if xs.shape != ys.shape or xs.ndim != 1 or len(xs) < 2:
        raise ValueError("pearson needs two equal-length sequences of at least 2 values")
    dx, dy = xs - xs.mean(), ys - ys.mean()
    sxx, syy = np.dot(dx, dx), np.dot(dy, dy)
    if sxx == 0 or syy == 0:
        raise UndefinedCorrelationError("correlation is undefined for a constant sequence")
    return float(np.clip(np.dot(dx, dy) / np.sqrt(sxx * syy), -1.0, 1.0))


@dataclass
class CorrelationResult:
    snr_rx_db: np.ndarray
    p_rx: np.ndarray
    p_eve: np.ndarray
    corr_rx: float = float("nan")
    corr_eve: float = float("nan")

    def with_correlations(self) -> CorrelationResult:
        self.corr_rx = pearson(self.snr_rx_db, self.p_rx)
        self.corr_eve = pearson(self.snr_rx_db, self.p_eve)
        return self


def correlation_table(rx_model: DetectorModel, eve_model: DetectorModel, topology: Topology,
                      n_trials: int = 1000, seed: int = 0,
                      conditions: LinkConditions = LinkConditions()) -> CorrelationResult:
    """Per-codeword receiver SNR (dB) and unperturbed detection at both ends."""
    report = sweep(rx_model, eve_model, topology, [None], n_trials, seed, conditions,
                   selection_power=None)
    return CorrelationResult(report.link.snr_db(Side.RECEIVER),
                             report.column(Side.RECEIVER, None),
                             report.column(Side.EAVESDROPPER, None))


def correlation_study(rx_model: DetectorModel, eve_model: DetectorModel, topology: Topology,
                      n_trials: int = 1000, seed: int = 0,
                      conditions: LinkConditions = LinkConditions()) -> CorrelationResult:
    """Pearson correlation of receiver SNR with detection at the receiver and eavesdropper."""
    return correlation_table(rx_model, eve_model, topology, n_trials, seed,
                             conditions).with_correlations()
