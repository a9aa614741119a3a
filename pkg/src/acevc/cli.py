"""Operator surface: corpus generation, two-stage training, extraction,
conversion, and evaluation, driven by one plain-text config.

Every command writes its artifacts under a run directory together with the
resolved config snapshot, the seed, and checkpoint hashes, so a run can be
reproduced bit-identically from the snapshot alone. Exit codes: 0 success,
1 usage error, 2 runtime failure.
"""

from __future__ import annotations

import argparse
import hashlib
import os
import sys
from pathlib import Path

import numpy as np

from . import corpus, dsp, evaluation, features, pipeline, sre, synthesizer
from .config import Config, ConfigError
from .losses import SreLossWeights

__all__ = ["run", "main"]


class UsageError(Exception):
    def __init__(self, message, usage=""):
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _build_parser() -> _Parser:
    parser = _Parser(prog="acevc", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    def common(p):
        p.add_argument("--config", help="config file (flat key = value sections)")
        p.add_argument("--run-dir", help="artifact directory "
                                         "(default: $ACEVC_RUN_DIR/<command> or runs/<command>)")
        p.add_argument("--set", action="append", default=[], metavar="SEC.KEY=VAL",
                       help="override one config value (repeatable)")
        p.add_argument("--seed", type=int, help="override [train] seed")

    p = sub.add_parser("gen-corpus", help="render the deterministic toy corpus")
    common(p)

    p = sub.add_parser("train-sre", help="train the representation extractor")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--no-disentangle", action="store_true",
                   help="ablation arm: set the disentanglement weight to 0")
    p.add_argument("--steps", type=int, help="override [train] sre_steps")

    p = sub.add_parser("train-synth", help="train the mel synthesizer")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sre", required=True, help="extractor checkpoint")
    p.add_argument("--steps", type=int, help="override [train] synth_steps")

    p = sub.add_parser("extract", help="dump representations for a WAV")
    common(p)
    p.add_argument("--sre", required=True)
    p.add_argument("--wav", required=True)
    p.add_argument("-o", "--output", help="output container path")

    p = sub.add_parser("convert", help="convert a source WAV to a target voice")
    common(p)
    p.add_argument("--mode", choices=["mimic", "adaptive"], default="mimic")
    p.add_argument("--src", required=True, help="source WAV")
    p.add_argument("--target-dir", required=True,
                   help="directory of target-speaker WAVs (>= 10 s total)")
    p.add_argument("--sre", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("-o", "--output", required=True, help="output WAV path")

    p = sub.add_parser("eval-probe", help="speaker-probe leakage evaluation")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sre", required=True)

    p = sub.add_parser("eval-vc", help="conversion quality: SV-EER and CER")
    common(p)
    p.add_argument("--manifest", required=True)
    p.add_argument("--sre", required=True)
    p.add_argument("--synth", required=True)
    p.add_argument("--scorer-sre", required=True,
                   help="independently trained extractor used for scoring")
    p.add_argument("--mode", choices=["mimic", "adaptive"], default="adaptive")
    return parser


# ---------------------------------------------------------------------------
# run-directory plumbing

def _resolve_run_dir(args) -> Path:
    if args.run_dir:
        run_dir = Path(args.run_dir)
    else:
        root = os.environ.get("ACEVC_RUN_DIR", "runs")
        run_dir = Path(root) / args.command
    run_dir.mkdir(parents=True, exist_ok=True)
    return run_dir


def _load_config(args) -> Config:
    config = Config.from_file(args.config, overrides=args.set)
    if args.seed is not None:
        config.set("train", "seed", args.seed)
    if getattr(args, "steps", None) is not None:
        key = "sre_steps" if args.command == "train-sre" else "synth_steps"
        config.set("train", key, args.steps)
    if getattr(args, "no_disentangle", False):
        config.set("train", "beta", 0.0)
    return config


def _snapshot(run_dir: Path, config: Config, extra_lines=()):
    (run_dir / "config.cfg").write_text(config.canonical_text())
    if extra_lines:
        with open(run_dir / "hashes.txt", "w") as f:
            for line in extra_lines:
                f.write(line + "\n")


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for block in iter(lambda: f.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _log_writer(run_dir: Path):
    log_path = run_dir / "train_log.txt"
    handle = open(log_path, "w")

    def write(line: str):
        print(line)
        handle.write(line + "\n")
        handle.flush()

    return write


def _frame_bounds(config: Config):
    per_second = dsp.SAMPLE_RATE / dsp.HOP_LENGTH
    return (int(config.get("train", "min_utt_seconds") * per_second),
            int(config.get("train", "max_utt_seconds") * per_second))


def _load_utterances(config: Config, manifest):
    return corpus.load_manifest(
        manifest, vocab=config.get("corpus", "vocab"),
        min_duration=config.get("train", "min_utt_seconds"),
        max_duration=config.get("train", "max_utt_seconds"))


# ---------------------------------------------------------------------------
# commands

def _cmd_gen_corpus(args, config: Config, run_dir: Path) -> int:
    manifest = corpus.generate_toy_corpus(
        run_dir / "corpus",
        n_speakers=config.get("corpus", "n_speakers"),
        utts_per_speaker=config.get("corpus", "utts_per_speaker"),
        seed=config.get("train", "seed"),
        tokens_min=config.get("corpus", "tokens_min"),
        tokens_max=config.get("corpus", "tokens_max"),
        token_ms=(config.get("corpus", "token_min_ms"),
                  config.get("corpus", "token_max_ms")),
        gap_ms=config.get("corpus", "gap_ms"))
    _snapshot(run_dir, config)
    print(f"corpus manifest: {manifest}")
    return 0


def _cmd_train_sre(args, config: Config, run_dir: Path) -> int:
    utterances = _load_utterances(config, args.manifest)
    min_frames, max_frames = _frame_bounds(config)
    prepared = features.prepare_extractor_examples(
        utterances, config.get("corpus", "vocab"), min_frames, max_frames)
    if not prepared.asr:
        raise RuntimeError("no utterances survive the duration filter")
    weights = SreLossWeights(alpha=config.get("train", "alpha"),
                             beta=config.get("train", "beta"))
    log = _log_writer(run_dir)
    sv_crop = int(config.get("train", "sv_slice_seconds")
                  * dsp.SAMPLE_RATE / dsp.HOP_LENGTH)
    model, optimizer, _ = sre.train_extractor(
        prepared.asr, prepared.sv, config.extractor_config(), weights,
        steps=config.get("train", "sre_steps"),
        seed=config.get("train", "seed"),
        batch_asr=config.get("train", "batch_asr"),
        batch_sv=config.get("train", "batch_sv"),
        shift_range=(config.get("train", "shift_min_semitones"),
                     config.get("train", "shift_max_semitones")),
        sv_crop_frames=sv_crop,
        log_every=config.get("train", "log_every"), log_fn=log)
    ckpt = run_dir / "sre.ckpt"
    sre.save_extractor(ckpt, model, config.canonical_text(), optimizer=optimizer)
    _snapshot(run_dir, config, [f"sre.ckpt sha256 {_sha256(ckpt)}"])
    log(f"saved {ckpt}")
    return 0


def _cmd_train_synth(args, config: Config, run_dir: Path) -> int:
    utterances = _load_utterances(config, args.manifest)
    extractor, _ = sre.load_extractor(args.sre)
    examples, _stats = features.prepare_synth_examples(
        utterances, extractor, subsample=extractor.config.subsample)
    log = _log_writer(run_dir)
    model, optimizer, _ = synthesizer.train_synthesizer(
        examples, config.synthesizer_config(),
        steps=config.get("train", "synth_steps"),
        seed=config.get("train", "seed"),
        batch_size=config.get("train", "batch_synth"),
        log_every=config.get("train", "log_every"), log_fn=log)
    ckpt = run_dir / "synth.ckpt"
    synthesizer.save_synthesizer(ckpt, model, config.canonical_text(),
                                 optimizer=optimizer)
    _snapshot(run_dir, config, [f"synth.ckpt sha256 {_sha256(ckpt)}",
                                f"sre-input sha256 {_sha256(args.sre)}"])
    log(f"saved {ckpt}")
    return 0


def _cmd_extract(args, config: Config, run_dir: Path) -> int:
    from .nn.checkpoint import write_container
    extractor, _ = sre.load_extractor(args.sre)
    wave = dsp.ingest_audio(args.wav)
    mel = dsp.mel_spectrogram(wave)
    content, embedding = extractor.extract(mel)
    out = Path(args.output) if args.output else run_dir / "features.acevc"
    write_container(out, "features", config.canonical_text(), {
        "mel": mel.frames,
        "content/vectors": content.vectors,
        "content/log_probs": content.log_probs,
        "speaker/embedding": embedding.vector,
    })
    _snapshot(run_dir, config, [f"features sha256 {_sha256(out)}"])
    print(f"wrote {out}")
    return 0


def _gather_target(extractor, target_dir, config: Config):
    paths = sorted(Path(target_dir).glob("*.wav"))
    if not paths:
        raise RuntimeError(f"no WAV files in {target_dir}")
    samples = np.concatenate([dsp.ingest_audio(p).samples for p in paths])
    wave = dsp.Waveform(samples)
    return pipeline.target_speaker_embedding(
        extractor, wave,
        min_seconds=config.get("eval", "target_embedding_seconds"))


def _cmd_convert(args, config: Config, run_dir: Path) -> int:
    extractor, _ = sre.load_extractor(args.sre)
    synth, _ = synthesizer.load_synthesizer(args.synth)
    target = _gather_target(extractor, args.target_dir, config)
    source = dsp.ingest_audio(args.src)
    result = pipeline.convert(
        extractor, synth, source, target, mode=args.mode,
        griffin_lim_iters=config.get("dsp", "griffin_lim_iters"))
    out = Path(args.output)
    out.parent.mkdir(parents=True, exist_ok=True)
    dsp.write_wav(out, result.wave)
    report_path = out.with_suffix(out.suffix + ".report.txt")
    report_path.write_text(result.report_lines())
    _snapshot(run_dir, config, [f"sre sha256 {_sha256(args.sre)}",
                                f"synth sha256 {_sha256(args.synth)}",
                                f"output sha256 {_sha256(out)}"])
    print(f"wrote {out} (+ {report_path.name})")
    return 0


def _pooled_embeddings(extractor, utterances):
    content_rows, speaker_rows, labels = [], [], []
    speakers = features.speaker_index(utterances)
    label_of = {speaker: i for i, speaker in enumerate(speakers)}
    for utt in utterances:
        wave = dsp.ingest_audio(utt.path)
        content, embedding = extractor.extract(dsp.mel_spectrogram(wave))
        content_rows.append(content.vectors.mean(axis=0))
        speaker_rows.append(embedding.vector)
        labels.append(label_of[utt.speaker])
    return (np.stack(content_rows), np.stack(speaker_rows),
            np.array(labels, dtype=np.int64))


def _cmd_eval_probe(args, config: Config, run_dir: Path) -> int:
    utterances = _load_utterances(config, args.manifest)
    extractor, _ = sre.load_extractor(args.sre)
    train_utts, held_utts = corpus.split_manifest(
        utterances, config.get("eval", "eval_utts_per_speaker"))
    ordered = train_utts + held_utts
    mask = np.array([False] * len(train_utts) + [True] * len(held_utts))
    content_x, speaker_x, labels = _pooled_embeddings(extractor, ordered)
    kwargs = dict(hidden=config.get("eval", "probe_hidden"),
                  steps=config.get("eval", "probe_steps"),
                  learning_rate=config.get("eval", "probe_lr"),
                  seed=config.get("train", "seed"))
    content_acc = evaluation.probe_disentanglement(content_x, labels, mask, **kwargs)
    speaker_acc = evaluation.probe_disentanglement(speaker_x, labels, mask, **kwargs)
    metrics = [f"probe_accuracy_content: {content_acc:.4f}",
               f"probe_accuracy_speaker: {speaker_acc:.4f}",
               f"held_out_utterances: {len(held_utts)}"]
    (run_dir / "metrics.txt").write_text("\n".join(metrics) + "\n")
    _snapshot(run_dir, config, [f"sre sha256 {_sha256(args.sre)}"])
    for line in metrics:
        print(line)
    return 0


def _cmd_eval_vc(args, config: Config, run_dir: Path) -> int:
    from .evaluation import TrialPair, TrialSet
    utterances = _load_utterances(config, args.manifest)
    extractor, _ = sre.load_extractor(args.sre)
    scorer, _ = sre.load_extractor(args.scorer_sre)
    synth, _ = synthesizer.load_synthesizer(args.synth)
    rng = np.random.default_rng(config.get("train", "seed"))
    n_trials = config.get("eval", "trials")

    by_speaker: dict = {}
    for utt in utterances:
        by_speaker.setdefault(utt.speaker, []).append(utt)
    speakers = sorted(by_speaker)
    if len(speakers) < 2:
        raise RuntimeError("need at least two speakers for conversion trials")

    def scorer_embedding(wave):
        _, emb = scorer.extract(dsp.mel_spectrogram(wave))
        return emb.vector

    converted_dir = run_dir / "converted"
    converted_dir.mkdir(exist_ok=True)
    pairs = []
    cers = []
    vocab = config.get("corpus", "vocab")
    for trial in range(n_trials):
        target_spk, source_spk = rng.choice(len(speakers), size=2, replace=False)
        target_spk, source_spk = speakers[target_spk], speakers[source_spk]
        source_utt = by_speaker[source_spk][
            int(rng.integers(0, len(by_speaker[source_spk])))]
        target_utts = by_speaker[target_spk]
        enroll = np.concatenate([dsp.ingest_audio(u.path).samples
                                 for u in target_utts])
        target_emb = pipeline.target_speaker_embedding(
            extractor, dsp.Waveform(enroll),
            min_seconds=config.get("eval", "target_embedding_seconds"))
        source = dsp.ingest_audio(source_utt.path)
        result = pipeline.convert(
            extractor, synth, source, target_emb, mode=args.mode,
            griffin_lim_iters=config.get("dsp", "griffin_lim_iters"))
        out_wav = converted_dir / f"trial{trial:03d}.wav"
        dsp.write_wav(out_wav, result.wave)
        converted_emb = scorer_embedding(result.wave)

        real_target = target_utts[int(rng.integers(0, len(target_utts)))]
        pairs.append(TrialPair(converted_emb,
                               scorer_embedding(dsp.ingest_audio(real_target.path)),
                               True))
        other_spk = speakers[int(rng.integers(0, len(speakers)))]
        while other_spk == target_spk:
            other_spk = speakers[int(rng.integers(0, len(speakers)))]
        real_other = by_speaker[other_spk][
            int(rng.integers(0, len(by_speaker[other_spk])))]
        pairs.append(TrialPair(converted_emb,
                               scorer_embedding(dsp.ingest_audio(real_other.path)),
                               False))
        cers.append(evaluation.transcribe_cer(extractor, source, result.wave, vocab))

    eer = evaluation.equal_error_rate(TrialSet(pairs))
    metrics = [f"sv_eer: {eer:.4f}",
               f"mean_cer: {float(np.mean(cers)):.4f}",
               f"trials: {n_trials}",
               f"mode: {args.mode}"]
    (run_dir / "metrics.txt").write_text("\n".join(metrics) + "\n")
    summary = [f"{n_trials} {args.mode} conversion trials",
               f"SV-EER {eer:.1%} over {len(pairs)} pairs "
               f"({sum(p.is_same_speaker for p in pairs)} positive)",
               f"mean CER {float(np.mean(cers)):.1%}"]
    (run_dir / "summary.txt").write_text("\n".join(summary) + "\n")
    _snapshot(run_dir, config, [f"sre sha256 {_sha256(args.sre)}",
                                f"scorer sha256 {_sha256(args.scorer_sre)}",
                                f"synth sha256 {_sha256(args.synth)}"])
    for line in metrics:
        print(line)
    return 0


_COMMANDS = {
    "gen-corpus": _cmd_gen_corpus,
    "train-sre": _cmd_train_sre,
    "train-synth": _cmd_train_synth,
    "extract": _cmd_extract,
    "convert": _cmd_convert,
    "eval-probe": _cmd_eval_probe,
    "eval-vc": _cmd_eval_vc,
}


def run(argv) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if not args.command:
            raise UsageError("missing command", parser.format_usage())
        config = _load_config(args)
        run_dir = _resolve_run_dir(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.usage:
            print(exc.usage, file=sys.stderr)
        return 1
    except ConfigError as exc:
        print(f"config error: {exc}\nhint: see README for valid keys",
              file=sys.stderr)
        return 1
    try:
        return _COMMANDS[args.command](args, config, run_dir)
    except Exception as exc:  # runtime failure -> exit 2 with a hint
        print(f"error: {exc}", file=sys.stderr)
        hint = {
            "train-sre": "check the manifest path and duration filters",
            "train-synth": "check the --sre checkpoint and manifest",
            "convert": "check checkpoint kinds and that the target dir has >=10s of audio",
        }.get(args.command)
        if hint:
            print(f"hint: {hint}", file=sys.stderr)
        return 2


def main():
    sys.exit(run(sys.argv[1:]))


if __name__ == "__main__":
    main()
