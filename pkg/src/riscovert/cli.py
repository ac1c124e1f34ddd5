"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 missing/corrupt artifact,
4 numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from riscovert import artifacts
from riscovert.artifacts import ArtifactError, Manifest, OutputLockedError
from riscovert.channel import DegenerateChannelError
from riscovert.config import FULL_SCALE_SAMPLES, ConfigError, dump_config, load_config
from riscovert.detector import InvalidDatasetError, ModelFormatError, load_model, save_model, train
from riscovert.experiment import (
    Side,
    UndefinedCorrelationError,
    correlation_table,
    generate_dataset,
    select_ris,
    sweep,
)

log = logging.getLogger("riscovert")

EXIT_OK, EXIT_CONFIG, EXIT_ARTIFACT, EXIT_NUMERIC = 0, 2, 3, 4
SIDES = {"receiver": Side.RECEIVER, "eavesdropper": Side.EAVESDROPPER}


def _seed(cfg, *path):
    return [cfg.master_seed, *path]


def _data_path(out, side):
    return out / f"data_{side}.bin"


def _model_path(out, side):
    return out / f"model_{side}.bin"


def _load_models(out):
    models = []
    for side in SIDES:
        path = _model_path(out, side)
        if not path.exists():
            raise ArtifactError(f"model {path} not found; run train first")
        try:
            models.append(load_model(path))
        except ModelFormatError as exc:
            raise ArtifactError(str(exc)) from exc
    return models


def cmd_gen_data(cfg, args, manifest):
    out = cfg.output_dir
    spec = cfg.dataset
    counts = {}
    for name, side in SIDES.items():
        ds = generate_dataset(cfg.topology, spec, side, _seed(cfg, 0, int(side)))
        path = _data_path(out, name)
        artifacts.save_dataset(ds, path)
        n_signal = int(np.sum(ds.labels == 0))
        counts[name] = {"total": len(ds), "signal": n_signal, "noise": len(ds) - n_signal,
                        "train": ds.n_train, "validation": len(ds) - ds.n_train,
                        "seed": _seed(cfg, 0, int(side))}
        manifest.record(path, "dataset", **counts[name])
        log.info("%s dataset: %d examples -> %s", name, len(ds), path)
    cfg_path = out / "config.yaml"
    cfg_path.write_text(dump_config(cfg))
    manifest.record(cfg_path, "config")
    manifest.data["datasets"] = counts
    return EXIT_OK


def cmd_train(cfg, args, manifest):
    out = cfg.output_dir
    sides = list(SIDES) if args.side == "both" else [args.side]
    for name in sides:
        ds = artifacts.load_dataset(_data_path(out, name))
        seed = _seed(cfg, 1, int(SIDES[name]))
        result = train(ds, cfg.train_config(seed), **cfg.architecture,
                       log=lambda row: log.info("%s epoch %d: loss %.4f train %.4f val %s", name,
                                                row["epoch"], row["train_loss"],
                                                row["train_accuracy"], row["val_accuracy"]))
        path = _model_path(out, name)
        save_model(result.model, path)
        metrics_path = out / f"metrics_{name}.json"
        artifacts.write_json(metrics_path, {
            "side": name, "initial_loss": result.initial_loss, "epochs": result.history,
            "train_accuracy": result.train_accuracy, "val_accuracy": result.val_accuracy,
            "seed": seed, "master_seed": cfg.master_seed, "config_hash": cfg.config_hash(),
        })
        manifest.record(path, "model", val_accuracy=result.val_accuracy)
        manifest.record(metrics_path, "metrics")
        print(f"{name}: validation accuracy {result.val_accuracy:.4f}")
    return EXIT_OK


def cmd_sweep(cfg, args, manifest):
    out = cfg.output_dir
    rx, eve = _load_models(out)
    report = sweep(rx, eve, cfg.topology, cfg.powers, cfg.n_trials, cfg.master_seed,
                   cfg.conditions, cfg.selection_power)
    csv_path = out / "report.csv"
    csv_path.write_text(artifacts.report_csv(report))
    summary_path = out / "summary.json"
    artifacts.write_json(summary_path, artifacts.report_summary(report, cfg.config_hash()))
    plot_dir = out / "plot_data"
    plot_dir.mkdir(exist_ok=True)
    for i, text in artifacts.plot_series(report).items():
        path = plot_dir / f"ris_{i:02d}.csv"
        path.write_text(text)
        manifest.record(path, "plot_data")
    manifest.record(csv_path, "report")
    manifest.record(summary_path, "summary")
    print(f"selected RIS codeword: {report.selected_ris} "
          f"(objective {report.objectives()[report.selected_ris]:.3f} at {report.selection_power} dBm)")
    return EXIT_OK


def cmd_select_ris(cfg, args, manifest):
    out = cfg.output_dir
    rx, eve = _load_models(out)
    power = cfg.selection_power if args.power is None else args.power
    index, report = select_ris(rx, eve, cfg.topology, power, cfg.n_trials, cfg.master_seed,
                               cfg.conditions)
    path = out / "selection.json"
    artifacts.write_json(path, artifacts.report_summary(report, cfg.config_hash()))
    manifest.record(path, "selection")
    print(f"selected RIS codeword: {index}")
    return EXIT_OK


def cmd_correlate(cfg, args, manifest):
    out = cfg.output_dir
    rx, eve = _load_models(out)
    table_data = correlation_table(rx, eve, cfg.topology, cfg.n_trials, cfg.master_seed + 1,
                                   cfg.conditions)
    table = out / "correlation.csv"
    table.write_text(artifacts.correlation_csv(table_data))
    manifest.record(table, "correlation_table")
    result = table_data.with_correlations()
    path = out / "correlation.json"
    artifacts.write_json(path, {"corr_rx": result.corr_rx, "corr_eve": result.corr_eve,
                                "snr_measure": "dB", "n_trials": cfg.n_trials,
                                "master_seed": cfg.master_seed, "config_hash": cfg.config_hash()})
    manifest.record(path, "correlation")
    print(f"corr(SNR_rx, P_rx) = {result.corr_rx:.3f}  corr(SNR_rx, P_eve) = {result.corr_eve:.3f}")
    return EXIT_OK


def cmd_verify(cfg, args, manifest):
    """Re-derive the config hash and every artifact digest recorded in the manifest."""
    path = manifest.path
    recorded = artifacts.read_json(path)
    problems = []
    if recorded.get("config_hash") != cfg.config_hash():
        problems.append("config hash differs from the manifest")
    if recorded.get("master_seed") != cfg.master_seed:
        problems.append("master seed differs from the manifest")
    for rel, entry in sorted(recorded.get("artifacts", {}).items()):
        file = path.parent / rel
        if not file.exists():
            problems.append(f"{rel}: missing")
        elif artifacts.sha256_file(file) != entry["sha256"]:
            problems.append(f"{rel}: digest mismatch")
        elif file.suffix == ".json":
            embedded = artifacts.read_json(file).get("config_hash")
            if embedded not in (None, cfg.config_hash()):
                problems.append(f"{rel}: embedded config hash differs")
    for p in problems:
        print(f"verify: {p}", file=sys.stderr)
    if problems:
        raise ArtifactError(f"{len(problems)} verification problem(s)")
    print(f"verify: {len(recorded.get('artifacts', {}))} artifacts OK")
    return EXIT_OK


COMMANDS = {
    "gen-data": cmd_gen_data,
    "train": cmd_train,
    "sweep": cmd_sweep,
    "select-ris": cmd_select_ris,
    "correlate": cmd_correlate,
    "verify": cmd_verify,
}


def _add_common(parser, suppress: bool) -> None:
    # Subcommands repeat the global flags; SUPPRESS keeps them from clobbering
    # values given before the subcommand name.
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    parser.add_argument("--config", type=Path, help="YAML config with dotted keys", **kw)
    parser.add_argument("--seed", type=int, help="override run.master_seed", **kw)
    parser.add_argument("--paper-scale", action="store_true",
                        help=f"use {FULL_SCALE_SAMPLES} samples per (codeword, SNR) cell", **kw)
    parser.add_argument("--trials", type=int, help="override sweep.n_trials", **kw)
    parser.add_argument("--out", type=Path, help="override run.output_dir", **kw)
    parser.add_argument("-v", "--verbose", action="store_true", **kw)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="riscovert",
                                     description="RIS covert-communication link simulator")
    _add_common(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help):
        p = sub.add_parser(name, help=help)
        _add_common(p, suppress=True)
        return p

    add("gen-data", "generate training datasets")
    p = add("train", "train detector(s)")
    p.add_argument("--side", choices=["receiver", "eavesdropper", "both"], default="both")
    add("sweep", "detection sweep and RIS selection")
    p = add("select-ris", "select the RIS codeword only")
    p.add_argument("--power", type=float, help="perturbation power (dBm) used for selection")
    add("correlate", "SNR/detection correlation study")
    add("verify", "check artifact digests against the manifest")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    overrides = {}
    if args.seed is not None:
        overrides["run.master_seed"] = args.seed
    if args.paper_scale:
        overrides["dataset.samples_per_cell"] = FULL_SCALE_SAMPLES
    if args.trials is not None:
        overrides["sweep.n_trials"] = args.trials
    if args.out is not None:
        overrides["run.output_dir"] = str(args.out)
    try:
        cfg = load_config(args.config, overrides)
        with artifacts.output_lock(cfg.output_dir):
            manifest = Manifest(cfg.output_dir, cfg.config_hash(), cfg.master_seed)
            try:
                return COMMANDS[args.command](cfg, args, manifest)
            finally:
                if args.command != "verify":
                    manifest.save()
    except (ConfigError, OutputLockedError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ArtifactError, InvalidDatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ARTIFACT
    except (UndefinedCorrelationError, DegenerateChannelError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
