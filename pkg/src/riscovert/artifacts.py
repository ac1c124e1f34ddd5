"""On-disk formats for datasets, reports and the run manifest."""

from __future__ import annotations

import csv
import hashlib
import io
import json
import os
import struct
from contextlib import contextmanager
from pathlib import Path

import numpy as np

from riscovert.detector import Dataset
from riscovert.experiment import CorrelationResult, DetectionReport

DATA_MAGIC = b"RISDATA\x00"
DATA_VERSION = 1
_DATA_HEADER = struct.Struct("<8sHIIH")  # magic, version, count, n_train, M

REPORT_HEADER = ["ris_index", "perturb_dbm", "p_det_rx", "p_det_eve", "snr_rx_db", "snr_eve_db",
                 "n_trials", "seed"]


class ArtifactError(RuntimeError):
    """Missing or corrupt artifact."""


class OutputLockedError(RuntimeError):
    pass


def sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def save_dataset(ds: Dataset, path) -> None:
    header = _DATA_HEADER.pack(DATA_MAGIC, DATA_VERSION, len(ds), ds.n_train, ds.m)
    body = np.asarray(ds.inputs, dtype="<f4").tobytes() + np.asarray(ds.labels, dtype=np.uint8).tobytes()
    Path(path).write_bytes(header + body)


def load_dataset(path) -> Dataset:
    path = Path(path)
    if not path.exists():
        raise ArtifactError(f"dataset {path} not found; run gen-data first")
    data = path.read_bytes()
    if len(data) < _DATA_HEADER.size:
        raise ArtifactError(f"{path}: truncated dataset header")
    magic, version, count, n_train, m = _DATA_HEADER.unpack_from(data)
    if magic != DATA_MAGIC:
        raise ArtifactError(f"{path}: bad dataset magic {magic!r}")
    if version != DATA_VERSION:
        raise ArtifactError(f"{path}: unsupported dataset version {version}")
    expected = _DATA_HEADER.size + count * (2 * m * 4 + 1)
    if len(data) != expected or n_train > count:
        raise ArtifactError(f"{path}: header says {count} examples of length {m} "
                            f"({expected} bytes) but file has {len(data)} bytes")
    off = _DATA_HEADER.size
    inputs = np.frombuffer(data, dtype="<f4", count=count * 2 * m, offset=off).reshape(count, 2, m)
    labels = np.frombuffer(data, dtype=np.uint8, count=count, offset=off + inputs.nbytes)
    return Dataset(inputs.astype(float), labels.astype(np.int64), n_train)


def _fmt(value) -> str:
    if value is None:
        return "none"
    return f"{value:.6f}"


def report_csv(report: DetectionReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(REPORT_HEADER)
    for c in report.cells:
        writer.writerow([c.ris_index, _fmt(c.perturb_dbm), _fmt(c.p_det_rx), _fmt(c.p_det_eve),
                         _fmt(c.snr_rx_db), _fmt(c.snr_eve_db), report.n_trials, report.seed])
    return buf.getvalue()


def read_report_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def report_summary(report: DetectionReport, config_hash: str) -> dict:
    objectives = report.objectives()
    link = report.link
    return {
        "selected_ris": report.selected_ris,
        "selection_power_dbm": report.selection_power,
        "objective": [round(float(o), 6) for o in objectives],
        "objective_selected": round(float(objectives[report.selected_ris]), 6),
        "max_snr_rx_ris": int(np.argmax(np.abs(link.gains_rx))),
        "false_alarm_rx": report.false_alarm_rx,
        "false_alarm_eve": report.false_alarm_eve,
        "noise_variance_rx": link.noise_rx.variance,
        "noise_variance_eve": link.noise_eve.variance,
        "gains_rx": [[round(g.real, 9), round(g.imag, 9)] for g in link.gains_rx],
        "gains_eve": [[round(g.real, 9), round(g.imag, 9)] for g in link.gains_eve],
        "n_trials": report.n_trials,
        "master_seed": report.seed,
        "config_hash": config_hash,
    }


def plot_series(report: DetectionReport) -> dict[int, str]:
    """One CSV per codeword: perturbation power vs. detection at both ends."""
    rx, eve = report.grid("rx"), report.grid("eve")
    out = {}
    for i in range(report.k):
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["perturb_dbm", "p_det_rx", "p_det_eve"])
        for j, power in enumerate(report.powers):
            writer.writerow([_fmt(power), _fmt(rx[i, j]), _fmt(eve[i, j])])
        out[i] = buf.getvalue()
    return out


def correlation_csv(result: CorrelationResult) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["ris_index", "snr_rx_db", "p_det_rx", "p_det_eve"])
    for i, (s, r, e) in enumerate(zip(result.snr_rx_db, result.p_rx, result.p_eve)):
        writer.writerow([i, _fmt(s), _fmt(r), _fmt(e)])
    return buf.getvalue()


def write_json(path, payload) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def read_json(path) -> dict:
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError as exc:
        raise ArtifactError(f"{path} not found") from exc
    except json.JSONDecodeError as exc:
        raise ArtifactError(f"{path}: corrupt JSON ({exc})") from exc


class Manifest:
    """``manifest.json`` in the output directory: config hash, seed, file digests."""

    def __init__(self, out_dir, config_hash: str, master_seed: int):
        self.path = Path(out_dir) / "manifest.json"
        self.data = {"config_hash": config_hash, "master_seed": master_seed, "artifacts": {}}
        if self.path.exists():
            old = read_json(self.path)
            if old.get("config_hash") == config_hash and old.get("master_seed") == master_seed:
                self.data = {**old, **self.data, "artifacts": old.get("artifacts", {})}

    def record(self, path, kind: str, **extra) -> None:
        path = Path(path)
        rel = path.relative_to(self.path.parent).as_posix()
        self.data["artifacts"][rel] = {"kind": kind, "sha256": sha256_file(path), **extra}

    def save(self) -> None:
        write_json(self.path, self.data)


@contextmanager
def output_lock(out_dir):
    """Exclusive lock on an output directory via an O_EXCL lock file."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    lock = out_dir / ".lock"
    try:
        fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
    except FileExistsError:
        raise OutputLockedError(f"{out_dir} is in use by another run (remove {lock} if stale)") from None
    try:
        os.write(fd, str(os.getpid()).encode())
        os.close(fd)
        yield out_dir
    finally:
        lock.unlink(missing_ok=True)
