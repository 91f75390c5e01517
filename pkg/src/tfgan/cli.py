"""Command-line entry point: ``tfgan <command> ...``.

Exit codes: 0 success, 1 runtime failure, 2 usage or input error.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__, container
from .checks import SCOPES, run_scope
from .data import Dataset, DatasetError, dataset_scan, feature_cache_path, save_features, write_smoke_dataset
from .dsp import MelConfig, mel_features
from .losses import multi_res_stft_loss
from .training import (
    ABLATIONS,
    LOG_COLUMNS,
    CheckpointError,
    ConfigError,
    TrainConfig,
    Trainer,
    TrainingDiverged,
    load_checkpoint,
    save_checkpoint,
    synthesize,
)
from .wavio import WavFormatError, wav_read

log = logging.getLogger("tfgan")

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    """Bad arguments or unusable inputs; maps to exit code 2."""


def _digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _emit(*fields) -> None:
    print(",".join(str(f) for f in fields), flush=True)


# -- extract -----------------------------------------------------------------

def cmd_extract(args) -> int:
    src, out = Path(args.input), Path(args.out)
    if not src.is_dir():
        raise UsageError(f"{src} is not a directory")
    wavs = sorted(src.glob("*.wav"))
    if not wavs:
        raise UsageError(f"no input files in {src}")
    mel_cfg = MelConfig()
    if args.mel_cfg:
        try:
            mel_cfg = MelConfig(**json.loads(Path(args.mel_cfg).read_text()))
        except (OSError, TypeError, ValueError) as exc:
            raise UsageError(f"bad mel config: {exc}") from None
    out.mkdir(parents=True, exist_ok=True)
    failures = 0
    _emit("file", "frames", "n_mels")
    for path in wavs:
        try:
            mel = mel_features(wav_read(path), mel_cfg)
        except (WavFormatError, ValueError) as exc:
            log.error("%s: %s", path, exc)
            failures += 1
            continue
        save_features(feature_cache_path(out, path), mel.values, mel_cfg.hop_length)
        _emit(path.name, mel.n_frames, mel.n_mels)
    return EXIT_FAIL if failures == len(wavs) else EXIT_OK


# -- train -------------------------------------------------------------------

def _read_config(path) -> dict:
    try:
        data = json.loads(Path(path).read_text())
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read config {path}: {exc}") from None
    # a run manifest carries its resolved config under "config"
    if isinstance(data, dict) and isinstance(data.get("config"), dict):
        data = data["config"]
    if not isinstance(data, dict):
        raise UsageError(f"{path}: config must be a JSON object")
    return data


def resolve_config(args) -> TrainConfig:
    values = _read_config(args.config) if args.config else {}
    if args.steps is not None:
        values["steps"] = args.steps
    if args.seed is not None:
        values["seed"] = args.seed
    cfg = TrainConfig.from_dict(values)
    if args.ablation:
        cfg = cfg.with_ablation(args.ablation)
    return cfg


def _write_json_atomic(path: Path, obj) -> None:
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")
    tmp.replace(path)


def _open_log(path: Path, resume_step: int):
    """Open the CSV log for appending, dropping rows past ``resume_step``."""
    kept = []
    if resume_step and path.exists():
        with open(path, newline="") as fh:
            kept = [r for r in csv.reader(fh)][1:]
        kept = [r for r in kept if r and int(r[0]) <= resume_step]
    fh = open(path, "w", newline="")
    writer = csv.writer(fh)
    writer.writerow(LOG_COLUMNS)
    writer.writerows(kept)
    fh.flush()
    return fh, writer


def cmd_train(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    resumed_from = None
    if args.resume:
        try:
            ckpt = load_checkpoint(args.resume)
        except FileNotFoundError:
            raise UsageError(f"checkpoint not found: {args.resume}") from None
        except CheckpointError as exc:
            raise UsageError(str(exc)) from None
        cfg = ckpt.config
        if args.steps is not None:
            cfg = dataclasses.replace(cfg, steps=args.steps)
        resumed_from = str(args.resume)
    else:
        cfg = resolve_config(args)

    try:
        manifest = dataset_scan(args.data, cfg.clip_samples)
    except DatasetError as exc:
        raise UsageError(str(exc)) from None
    dataset = Dataset(manifest, cfg.clip_samples, cfg.mel_config(), feature_dir=args.features)
    trainer = ckpt.trainer(dataset) if args.resume else Trainer(cfg, dataset)

    _write_json_atomic(
        out / "manifest.json",
        {
            "tool_version": __version__,
            "seed": cfg.seed,
            "config": cfg.to_dict(),
            "inputs": {Path(p).name: _digest(p) for p, _ in manifest.entries},
            "resumed_from": resumed_from,
            "start_step": trainer.step,
        },
    )

    fh, writer = _open_log(out / "log.csv", trainer.step)
    _emit("step", "g_total", "d_total", "wall_ms")
    try:
        while trainer.step < cfg.steps:
            try:
                report = trainer.train_step()
            except TrainingDiverged as exc:
                save_checkpoint(out / "diverged.tfv", trainer)
                print(f"error: {exc}", file=sys.stderr)
                print(f"diagnostic checkpoint written to {out / 'diverged.tfv'}", file=sys.stderr)
                return EXIT_FAIL
            writer.writerow(report.row())
            fh.flush()
            if report.step % args.print_every == 0 or report.step == cfg.steps:
                _emit(report.step, repr(report.g_total), "" if report.d_total is None else repr(report.d_total), round(report.wall_ms, 1))
            if cfg.checkpoint_every and report.step % cfg.checkpoint_every == 0:
                save_checkpoint(out / f"ckpt_{report.step:06d}.tfv", trainer)
    finally:
        fh.close()
    save_checkpoint(out / "final.tfv", trainer)
    return EXIT_OK


# -- synth -------------------------------------------------------------------

def cmd_synth(args) -> int:
    if not Path(args.ckpt).is_file():
        raise UsageError(f"checkpoint not found: {args.ckpt}")
    if not Path(args.input).is_file():
        raise UsageError(f"input not found: {args.input}")
    try:
        ckpt = load_checkpoint(args.ckpt)
    except CheckpointError as exc:
        raise UsageError(str(exc)) from None
    start = time.perf_counter()
    try:
        clip = synthesize(args.input, ckpt, args.out)
    except (WavFormatError, container.ContainerError, ValueError) as exc:
        raise UsageError(str(exc)) from None
    elapsed = max(time.perf_counter() - start, 1e-9)
    rtf = len(clip) / elapsed / clip.sample_rate
    _emit("out", "samples", "seconds", "realtime_factor")
    _emit(args.out, len(clip), f"{len(clip) / clip.sample_rate:.4f}", f"{rtf:.3f}")
    return EXIT_OK


# -- gradcheck ---------------------------------------------------------------

def cmd_gradcheck(args) -> int:
    scopes = SCOPES if args.scope == "all" else (args.scope,)
    all_ok = True
    _emit("scope", "check", "max_rel_error", "coords", "skipped", "status")
    for scope in scopes:
        for rep in run_scope(scope, tol=args.tol, eps=args.eps):
            _emit(scope, rep.name, f"{rep.max_rel_error:.3e}", rep.n_checked, len(rep.skipped), "PASS" if rep.passed else "FAIL")
            if not rep.passed:
                all_ok = False
                print(rep.summary(), file=sys.stderr)
    return EXIT_OK if all_ok else EXIT_FAIL


# -- eval --------------------------------------------------------------------

def cmd_eval(args) -> int:
    from . import plots

    out = Path(args.out)
    rows = [("item", "value")]
    if args.log:
        try:
            written = plots.loss_report(args.log, out)
        except (OSError, ValueError, KeyError) as exc:
            raise UsageError(f"cannot read log {args.log}: {exc}") from None
        rows.append(("curves", len(written) - 2))
        for p in written:
            _emit("wrote", p)
    if args.spectrogram:
        a_path, b_path = args.spectrogram
        try:
            a, b = wav_read(a_path).samples, wav_read(b_path).samples
        except (OSError, WavFormatError) as exc:
            raise UsageError(str(exc)) from None
        if a.shape != b.shape:
            raise UsageError(f"length mismatch: {a_path} has {a.size} samples, {b_path} has {b.size}")
        try:
            loss = float(multi_res_stft_loss(a, b).data)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        out.mkdir(parents=True, exist_ok=True)
        path = out / "spectrograms.svg"
        plots.plot_spectrograms(a, b, path, labels=(Path(a_path).stem, Path(b_path).stem), note=f"multi-resolution STFT loss {loss:.4f}")
        rows.append(("multi_res_stft_loss", repr(loss)))
        _emit("wrote", path)
        _emit("multi_res_stft_loss", repr(loss))
    if len(rows) == 1:
        raise UsageError("nothing to do: pass --log and/or --spectrogram")
    with open(out / "eval_summary.csv", "w", newline="") as fh:
        csv.writer(fh).writerows(rows)
    return EXIT_OK


def cmd_smoke_data(args) -> int:
    for p in write_smoke_dataset(args.out, n_files=args.files, seconds=args.seconds, seed=args.seed):
        _emit("wrote", p)
    return EXIT_OK


# -- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tfgan", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="compute log-mel feature caches for a directory of WAVs")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--mel-cfg")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("train", help="train generator and discriminators")
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--config", help="JSON config (TrainConfig field names) or a run manifest")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--ablation", choices=sorted(ABLATIONS))
    p.add_argument("--steps", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--features", help="directory of cached features from 'extract'")
    p.add_argument("--print-every", type=int, default=10)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("synth", help="vocode a feature cache or WAV with a checkpoint")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("gradcheck", help="finite-difference gradient suite")
    p.add_argument("--scope", choices=[*SCOPES, "all"], default="all")
    p.add_argument("--tol", type=float, default=1e-4)
    p.add_argument("--eps", type=float, default=1e-5)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("eval", help="loss-curve and spectrogram plots")
    p.add_argument("--log")
    p.add_argument("--out", required=True)
    p.add_argument("--spectrogram", nargs=2, metavar=("A_WAV", "B_WAV"))
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("smoke-data", help="write the synthetic smoke corpus")
    p.add_argument("--out", required=True)
    p.add_argument("--files", type=int, default=3)
    p.add_argument("--seconds", type=float, default=0.5)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_smoke_data)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception as exc:  # noqa: BLE001 - CLI boundary
        log.debug("failure", exc_info=True)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
