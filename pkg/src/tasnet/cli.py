"""Command-line interface.

Exit codes: 0 success, 2 usage or configuration error, 3 data error,
4 numeric failure (NaN/inf during training).
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from . import checkpoint
from .audio import AudioClip, load_pairs, read_manifest, read_wav, synthesize_mixtures, write_wav
from .errors import ConfigError, DataError, NumericError, StreamError, TasNetError
from .spectral import MASK_KINDS

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("tasnet")


def _write_text(path: Path, text: str) -> None:
    from .audio import atomic_write_text

    atomic_write_text(path, text)


def _figure_path(csv_path: Path) -> Path:
    return csv_path.with_suffix(".png")


# ---------------------------------------------------------------------------
# commands


def cmd_init(args) -> int:
    from .config import RunConfig, load_config
    from .model import build

    cfg = load_config(args.config) if args.config else RunConfig()
    params = build(cfg.model, seed=args.seed)
    checkpoint.save(params, args.out)
    print(f"wrote {args.out} ({params.num_scalars()} parameters)")
    return EXIT_OK


def cmd_synth(args) -> int:
    from .synth import write_source_corpus

    dirs = write_source_corpus(args.out_dir, args.speakers, args.per_speaker, args.seconds,
                               args.sample_rate, args.seed)
    print(f"wrote {len(dirs)} source directories under {args.out_dir}")
    return EXIT_OK


def _source_dirs(paths: list[str]) -> list[Path]:
    """Accept the pool directories themselves or one parent whose subdirectories are pools."""
    dirs = [Path(p) for p in paths]
    if len(dirs) == 1 and not list(dirs[0].glob("*.wav")):
        dirs = sorted(p for p in dirs[0].iterdir() if p.is_dir())
    return dirs


def cmd_mix(args) -> int:
    manifest = synthesize_mixtures(_source_dirs(args.sources), args.out_dir, args.count,
                                   args.snr_min, args.snr_max, args.seed, args.n_sources)
    print(f"wrote {args.count} mixtures; manifest {manifest}")
    return EXIT_OK


def cmd_train(args) -> int:
    from dataclasses import replace

    from .config import RunConfig, load_config
    from .model import build
    from .plotting import plot_training
    from .training import fit

    cfg = load_config(args.config) if args.config else RunConfig()
    tc = cfg.train if args.seed is None else replace(cfg.train, seed=args.seed)
    if args.epochs is not None:
        tc = replace(tc, epochs=args.epochs)
    train_m = args.train_manifest or cfg.paths.train_manifest
    valid_m = args.valid_manifest or cfg.paths.valid_manifest
    if not train_m or not valid_m:
        raise ConfigError("training needs --train-manifest and --valid-manifest (or paths in the config)")
    rate = cfg.model.sample_rate
    train_set = load_pairs(read_manifest(train_m, cfg.model.n_sources), rate)
    valid_set = load_pairs(read_manifest(valid_m, cfg.model.n_sources), rate)
    params = checkpoint.load(args.init) if args.init else build(cfg.model, seed=tc.seed)
    if args.init and params.config != cfg.model and args.config:
        raise ConfigError("--init checkpoint was built with a different model config")
    report = fit(params, train_set, valid_set, tc,
                 on_epoch=lambda r: print(f"epoch {r.epoch}: loss {r.train_loss:.4f} "
                                          f"valid SI-SNRi {r.valid_si_snri:.3f} dB lr {r.lr:.3g}"))
    out = Path(args.out)
    checkpoint.save(report.best_params or params, out)
    csv_path = Path(args.report) if args.report else out.with_suffix(".train.csv")
    _write_text(csv_path, report.to_csv())
    plot_training(report, _figure_path(csv_path))
    print(f"best epoch {report.best_epoch} (valid SI-SNRi {report.best_valid_si_snri:.3f} dB); "
          f"checkpoint {out}; report {csv_path}")
    return EXIT_OK


def cmd_separate(args) -> int:
    from .evaluation import model_separator

    params = checkpoint.load(args.model)
    clip = read_wav(args.input)
    if clip.sample_rate != params.config.sample_rate:
        raise DataError(f"{args.input}: sample rate {clip.sample_rate} Hz, model expects "
                        f"{params.config.sample_rate} Hz (resample first)")
    if args.streaming and not params.config.causal:
        raise ConfigError("--streaming needs a causal checkpoint")
    est = model_separator(params, streaming=args.streaming, chunk=args.chunk)(clip.samples, [])
    for i, e in enumerate(est, 1):
        path = Path(f"{args.out_prefix}.{i}.wav")
        write_wav(path, AudioClip(np.asarray(e, dtype=np.float64), clip.sample_rate), fmt=args.format)
        print(f"wrote {path}")
    return EXIT_OK


def _run_evaluation(separator, manifest, report_path, rate, n_sources):
    from .evaluation import evaluate
    from .plotting import plot_scores

    entries = read_manifest(manifest, n_sources)
    report = evaluate(entries, separator, rate)
    report_path = Path(report_path)
    _write_text(report_path, report.to_csv())
    if report.scores:
        plot_scores(report, _figure_path(report_path))
    print(f"{len(report.scores)} utterances, {len(report.skipped)} skipped; "
          f"mean SI-SNRi {report.mean_si_snri:.3f} dB, mean SDRi {report.mean_sdri:.3f} dB; report {report_path}")
    return report


def cmd_evaluate(args) -> int:
    from .evaluation import OracleSeparator, model_separator

    if args.oracle:
        sep = OracleSeparator(args.oracle)
        _run_evaluation(sep, args.manifest, args.report, None, None)
        print(f"mask invariants ({args.oracle}): {sep.invariant_status}")
    else:
        params = checkpoint.load(args.model)
        sep = model_separator(params, streaming=args.streaming)
        _run_evaluation(sep, args.manifest, args.report, params.config.sample_rate, params.config.n_sources)
    return EXIT_OK


def cmd_oracle(args) -> int:
    from .evaluation import OracleSeparator

    kinds = list(MASK_KINDS) if args.kind == "all" else [args.kind]
    prefix = Path(args.report_prefix)
    for kind in kinds:
        sep = OracleSeparator(kind)
        path = prefix.with_name(f"{prefix.name}.{kind}.csv")
        print(f"[{kind}]", end=" ")
        _run_evaluation(sep, args.manifest, path, None, None)
        print(f"mask invariants ({kind}): {sep.invariant_status}")
    return EXIT_OK


def cmd_bench(args) -> int:
    from .plotting import plot_bench
    from .streaming import bench_tpf

    params = checkpoint.load(args.model)
    if not params.config.causal:
        raise ConfigError("bench needs a causal checkpoint")
    rep = bench_tpf(params, seconds=args.seconds, trials=args.trials)
    print(f"hop: {rep.hop_ms:.1f} ms")
    print(f"mean TPF: {rep.mean_ms:.4f} ms")
    print(f"p95 TPF: {rep.p95_ms:.4f} ms")
    if len(rep.trial_means_ms) > 1:
        print("per-trial means (ms): " + ", ".join(f"{m:.4f}" for m in rep.trial_means_ms))
    print(f"verdict: {'real-time' if rep.realtime else 'not real-time'}")
    if args.report:
        path = Path(args.report)
        _write_text(path, rep.to_csv())
        plot_bench(rep, _figure_path(path))
    return EXIT_OK


def cmd_inspect(args) -> int:
    from .basis import basis_matrices, basis_table, export_basis
    from .plotting import plot_basis

    params = checkpoint.load(args.model)
    paths = export_basis(params, args.out_prefix)
    tables = {name: basis_table(m)[1] for name, m in basis_matrices(params).items()}
    prefix = Path(args.out_prefix)
    fig = plot_basis(tables, params.config.filter_len, prefix.with_name(prefix.name + ".basis.png"))
    for p in list(paths.values()) + [fig]:
        print(f"wrote {p}")
    return EXIT_OK


def cmd_shift_test(args) -> int:
    from .evaluation import model_separator, shift_experiment
    from .plotting import plot_shift

    params = checkpoint.load(args.model)
    entries = read_manifest(args.manifest, params.config.n_sources)
    if not 0 <= args.index < len(entries):
        raise DataError(f"--index {args.index} out of range (manifest has {len(entries)} utterances)")
    mix, refs = load_pairs([entries[args.index]], params.config.sample_rate)[0]
    rep = shift_experiment(model_separator(params), mix, refs, args.max_shift, args.step)
    path = Path(args.report)
    _write_text(path, rep.to_csv())
    plot_shift(rep, _figure_path(path))
    print(f"{len(rep.shifts)} shifts; SDRi std {rep.std_sdri:.4f} dB; report {path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tasnet", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("init", help="write an untrained checkpoint for a model config")
    s.add_argument("--config", help="JSON run config (model section is used)")
    s.add_argument("--out", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_init)

    s = sub.add_parser("synth", help="write a synthetic multi-speaker source corpus")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--speakers", type=int, default=4)
    s.add_argument("--per-speaker", type=int, default=3)
    s.add_argument("--seconds", type=float, default=1.0)
    s.add_argument("--sample-rate", type=int, default=8000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("mix", help="synthesize mixtures and a manifest from source directories")
    s.add_argument("--sources", nargs="+", required=True,
                   help="one directory per speaker, or a single parent of such directories")
    s.add_argument("--out-dir", required=True)
    s.add_argument("--count", type=int, required=True)
    s.add_argument("--snr-min", type=float, default=-5.0)
    s.add_argument("--snr-max", type=float, default=5.0)
    s.add_argument("--n-sources", type=int, default=2)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_mix)

    s = sub.add_parser("train", help="train a model; writes the best-validation checkpoint")
    s.add_argument("--config")
    s.add_argument("--train-manifest")
    s.add_argument("--valid-manifest")
    s.add_argument("--out", required=True, help="checkpoint path")
    s.add_argument("--report", help="training CSV (default: <out>.train.csv)")
    s.add_argument("--init", help="start from this checkpoint instead of a fresh build")
    s.add_argument("--seed", type=int)
    s.add_argument("--epochs", type=int)
    s.set_defaults(func=cmd_train)

    s = sub.add_parser("separate", help="separate one WAV file")
    s.add_argument("--model", required=True)
    s.add_argument("--input", required=True)
    s.add_argument("--out-prefix", required=True)
    s.add_argument("--streaming", action="store_true", help="use the frame-by-frame runtime (causal models)")
    s.add_argument("--chunk", type=int, default=4096, help="samples per push in streaming mode")
    s.add_argument("--format", choices=("pcm16", "float32"), default="float32")
    s.set_defaults(func=cmd_separate)

    s = sub.add_parser("evaluate", help="SI-SNRi / SDRi of a model or an ideal mask over a manifest")
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--model")
    g.add_argument("--oracle", choices=MASK_KINDS)
    s.add_argument("--manifest", required=True)
    s.add_argument("--report", required=True)
    s.add_argument("--streaming", action="store_true")
    s.set_defaults(func=cmd_evaluate)

    s = sub.add_parser("oracle", help="evaluate ideal T-F masks over a manifest")
    s.add_argument("--kind", choices=MASK_KINDS + ("all",), default="all")
    s.add_argument("--manifest", required=True)
    s.add_argument("--report-prefix", required=True, help="writes <prefix>.<kind>.csv")
    s.set_defaults(func=cmd_oracle)

    s = sub.add_parser("bench", help="streaming time per frame")
    s.add_argument("--model", required=True)
    s.add_argument("--seconds", type=float, default=2.0)
    s.add_argument("--trials", type=int, default=3)
    s.add_argument("--report", help="optional CSV of per-trial means")
    s.set_defaults(func=cmd_bench)

    s = sub.add_parser("inspect", help="export encoder/decoder basis functions sorted by similarity")
    s.add_argument("--model", required=True)
    s.add_argument("--out-prefix", required=True)
    s.set_defaults(func=cmd_inspect)

    s = sub.add_parser("shift-test", help="SDRi as the input is shifted by a few samples")
    s.add_argument("--model", required=True)
    s.add_argument("--manifest", required=True)
    s.add_argument("--index", type=int, default=0)
    s.add_argument("--max-shift", type=int, default=64)
    s.add_argument("--step", type=int, default=8)
    s.add_argument("--report", required=True)
    s.set_defaults(func=cmd_shift_test)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except NumericError as e:
        print(f"error: numeric failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA
    except (ConfigError, StreamError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except TasNetError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
