"""Flat key = value configuration with sections, defaults, and overrides.

The resolved config is the single source of truth for a run: its canonical
text is echoed into the run directory and embedded (fingerprinted) in every
checkpoint. Section/key names are fixed; unknown keys are errors.
"""

from __future__ import annotations

import configparser
import copy
import io

__all__ = ["Config", "ConfigError", "DEFAULTS"]


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "dsp": {
        "griffin_lim_iters": 60,
    },
    "corpus": {
        "n_speakers": 8,
        "utts_per_speaker": 30,
        "vocab": "abcde",
        "tokens_min": 6,
        "tokens_max": 12,
        "token_min_ms": 120.0,
        "token_max_ms": 250.0,
        "gap_ms": 40.0,
    },
    "sre": {
        "width": 128,
        "blocks": 2,
        "heads": 4,
        "conv_kernel": 7,
        "ffn_mult": 2,
        "content_dim": 64,
        "speaker_dim": 64,
        "n_speakers": 8,
    },
    "synth": {
        "hidden": 192,
        "blocks": 2,
        "heads": 2,
        "conv_kernel": 3,
        "lambda_pitch": 0.1,
        "lambda_duration": 0.1,
    },
    "train": {
        "seed": 1234,
        # desk-scale rates for random-init training; the 10:1 head/backbone
        # split is preserved
        "lr_heads": 1e-3,
        "lr_backbone": 1e-4,
        "lr_synth": 1e-3,
        "alpha": 1.0,
        "beta": 1.0,
        "sre_steps": 600,
        "synth_steps": 2500,
        "batch_asr": 8,
        "batch_sv": 16,
        "batch_synth": 8,
        "shift_min_semitones": 1.0,
        "shift_max_semitones": 4.0,
        "sv_slice_seconds": 2.0,
        "min_utt_seconds": 0.4,
        "max_utt_seconds": 8.0,
        "log_every": 50,
    },
    "eval": {
        "probe_hidden": 256,
        "probe_steps": 400,
        "probe_lr": 1e-3,
        "eval_utts_per_speaker": 5,
        "target_embedding_seconds": 10.0,
        "trials": 20,
    },
}


def _coerce(section: str, key: str, raw, template):
    if isinstance(template, bool):
        if isinstance(raw, bool):
            return raw
        if str(raw).lower() in ("1", "true", "yes", "on"):
            return True
        if str(raw).lower() in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {raw!r}")
    if isinstance(template, int):
        try:
            return int(str(raw))
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected an integer, got {raw!r}")
    if isinstance(template, float):
        try:
            return float(str(raw))
        except ValueError:
            raise ConfigError(f"[{section}] {key}: expected a number, got {raw!r}")
    return str(raw)


class Config:
    """Resolved configuration: DEFAULTS merged with a file and overrides."""

    def __init__(self, values: dict):
        self.values = values

    # -- construction -----------------------------------------------------

    @classmethod
    def from_file(cls, path=None, overrides=()) -> "Config":
        if path is None:
            cfg = cls(copy.deepcopy(DEFAULTS))
        else:
            try:
                with open(path) as f:
                    text = f.read()
            except FileNotFoundError:
                raise ConfigError(f"config file not found: {path}")
            except OSError as exc:
                raise ConfigError(f"cannot read config {path}: {exc}")
            cfg = cls.from_text(text)
        for item in overrides:
            cfg.apply_override(item)
        return cfg

    @classmethod
    def from_text(cls, text: str) -> "Config":
        parser = configparser.ConfigParser(interpolation=None)
        try:
            parser.read_file(io.StringIO(text))
        except configparser.Error as exc:
            raise ConfigError(f"malformed config: {exc}")
        values = copy.deepcopy(DEFAULTS)
        for section in parser.sections():
            if section not in values:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in values[section]:
                    raise ConfigError(f"unknown config key [{section}] {key}")
                values[section][key] = _coerce(section, key, raw,
                                               DEFAULTS[section][key])
        return cls(values)

    def apply_override(self, item: str):
        """Apply one 'section.key=value' command-line override."""
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value: {item!r}")
        dotted, raw = item.split("=", 1)
        section, key = dotted.strip().split(".", 1)
        section, key = section.strip(), key.strip()
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values[section][key] = _coerce(section, key, raw.strip(),
                                            DEFAULTS[section][key])

    # -- access -------------------------------------------------------------

    def get(self, section: str, key: str):
        return self.values[section][key]

    def set(self, section: str, key: str, value):
        if section not in self.values or key not in self.values[section]:
            raise ConfigError(f"unknown config key [{section}] {key}")
        self.values[section][key] = _coerce(section, key, value,
                                            DEFAULTS[section][key])

    def canonical_text(self) -> str:
        lines = []
        for section in sorted(self.values):
            lines.append(f"[{section}]")
            for key in sorted(self.values[section]):
                lines.append(f"{key} = {self.values[section][key]}")
            lines.append("")
        return "\n".join(lines)

    # -- derived model configs ------------------------------------------------

    def extractor_config(self):
        from .sre import ExtractorConfig
        sre = self.values["sre"]
        train = self.values["train"]
        vocab = self.values["corpus"]["vocab"]
        return ExtractorConfig(
            width=sre["width"], blocks=sre["blocks"], heads=sre["heads"],
            conv_kernel=sre["conv_kernel"], ffn_mult=sre["ffn_mult"],
            content_dim=sre["content_dim"], speaker_dim=sre["speaker_dim"],
            vocab_size=len(vocab) + 1, n_speakers=sre["n_speakers"],
            lr_backbone=train["lr_backbone"], lr_heads=train["lr_heads"])

    def synthesizer_config(self):
        from .synthesizer import SynthesizerConfig
        synth = self.values["synth"]
        sre = self.values["sre"]
        return SynthesizerConfig(
            content_dim=sre["content_dim"], speaker_dim=sre["speaker_dim"],
            hidden=synth["hidden"], blocks=synth["blocks"], heads=synth["heads"],
            conv_kernel=synth["conv_kernel"],
            lambda_pitch=synth["lambda_pitch"],
            lambda_duration=synth["lambda_duration"],
            learning_rate=self.values["train"]["lr_synth"])
