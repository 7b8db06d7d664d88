"""Run configuration: a flat `key = value` text format with `#` comments.

Every tunable default of the feature front end, the model family, the
adversarial objective, the optimizer, and the synthetic data generator has a
key here. Unknown keys are rejected by name; values are validated against the
owning module's invariants when the typed configs are built. Precedence is
command line > config file > optimizer preset > schema defaults.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

from .adversarial import GanLossConfig
from .errors import ConfigError, InvalidInputError
from .features import FEATURE_RECIPES, FeatureConfig
from .training import PRESETS, ModelConfig, TrainConfig


@dataclass(frozen=True)
class Field:
    key: str
    kind: str  # int | float | str | intlist
    default: object
    help: str
    choices: tuple | None = None


def _f(key, kind, default, help, choices=None):
    return Field(key, kind, default, help, choices)


SCHEMA: dict[str, Field] = {
    f.key: f
    for f in [
        _f("audio.sample_rate", "int", 16000, "working sample rate in Hz"),
        _f("audio.fft_size", "int", 1024, "STFT frame length (power of two)"),
        _f("audio.hop_size", "int", 512, "STFT hop in samples"),
        _f("audio.window", "str", "hann", "analysis window", ("hann", "rectangular")),
        _f("audio.n_mels", "int", 64, "mel band count"),
        _f("audio.f_min", "float", 0.0, "lowest mel band edge in Hz"),
        _f("audio.f_max", "float", 8000.0, "highest mel band edge in Hz"),
        _f("audio.log_floor", "float", 1e-10, "energy floor before the log"),
        _f("audio.delta_window", "int", 2, "delta regression half-width"),
        _f("audio.n_mfcc", "int", 13, "MFCC coefficients kept"),
        _f("audio.recipe", "str", "log-mel", "feature recipe fed to the pipeline",
           FEATURE_RECIPES),
        _f("model.image_size", "int", 32, "image side in pixels"),
        _f("model.image_channels", "int", 3, "image channels"),
        _f("model.latent_grid", "int", 8, "latent positions per side"),
        _f("model.embed_dim", "int", 16, "embedding dimension"),
        _f("model.codebook_size", "int", 64, "number of prototypes"),
        _f("model.commitment_beta", "float", 0.25, "commitment loss weight"),
        _f("model.variant", "str", "index", "transformation output variant",
           ("index", "quantized", "novq")),
        _f("model.encoder_channels", "intlist", (32, 64, 64), "encoder conv widths"),
        _f("model.decoder_channels", "intlist", (64, 32, 16), "decoder conv widths"),
        _f("model.g_channels", "intlist", (16, 32, 32, 32),
           "transformation net conv widths"),
        _f("model.critic_hidden", "intlist", (128, 64), "critic dense widths"),
        _f("model.critic_activation", "str", "tanh", "critic activation",
           ("tanh", "leaky_relu")),
        _f("model.classifier_channels", "intlist", (16, 16, 32, 32, 64, 64, 128, 128),
           "classifier conv widths (exactly eight)"),
        _f("model.n_classes", "int", 3, "scene classes"),
        _f("gan.lambda_gp", "float", 10.0, "gradient penalty weight"),
        _f("gan.critic_steps", "int", 5, "critic updates per generator update"),
        _f("train.preset", "str", "desk", "optimizer preset",
           tuple(sorted(PRESETS))),
        _f("train.learning_rate", "float", 3e-4, "Adam learning rate (stage A)"),
        _f("train.adam_beta1", "float", 0.5, "Adam beta1"),
        _f("train.adam_beta2", "float", 0.999, "Adam beta2"),
        _f("train.adam_epsilon", "float", 1e-8, "Adam epsilon"),
        _f("train.batch_size", "int", 16, "minibatch size"),
        _f("train.epochs", "int", 1, "epoch count echoed into checkpoints"),
        _f("train.seed", "int", 0, "seed for every random draw"),
        _f("train.steps_a", "int", 500, "stage-A steps"),
        _f("train.steps_b", "int", 2000, "stage-B steps"),
        _f("train.classifier_learning_rate", "float", 1e-3,
           "Adam learning rate (stage B)"),
        _f("train.checkpoint_every", "int", 500, "checkpoint cadence in steps"),
        _f("synth.snr_db", "float", 20.0, "tone-to-noise ratio in dB"),
        _f("synth.clip_seconds", "float", 1.0, "clip length in seconds"),
        _f("synth.unseen_snr_db", "float", 10.0, "SNR of the unseen split"),
        _f("synth.unseen_detune", "float", 0.02, "tone detune of the unseen split"),
        _f("synth.train_count", "int", 240, "training clips"),
        _f("synth.val_count", "int", 60, "validation clips"),
        _f("synth.test_count", "int", 120, "clips per test split"),
    ]
}


def parse_value(field: Field, text: str):
    text = text.strip()
    try:
        if field.kind == "int":
            value = int(text)
        elif field.kind == "float":
            value = float(text)
        elif field.kind == "intlist":
            value = tuple(int(part) for part in text.split(",") if part.strip())
        else:
            value = text
    except ValueError:
        raise ConfigError(f"{field.key}: cannot parse {text!r} as {field.kind}")
    if field.choices is not None and value not in field.choices:
        raise ConfigError(
            f"{field.key}: {value!r} is not one of {list(field.choices)}"
        )
    return value


def load_config_file(path) -> dict[str, str]:
    """Raw key -> text mapping; unknown keys and malformed lines are errors."""
    raw = {}
    text = Path(path).read_text(encoding="utf-8")
    for lineno, line in enumerate(text.splitlines(), 1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in SCHEMA:
            raise ConfigError(f"{path}:{lineno}: unknown config key {key!r}")
        raw[key] = value
    return raw


@dataclass
class RunConfig:
    """Fully resolved configuration plus the set of explicitly-set keys."""

    values: dict[str, object]
    explicit: frozenset[str]

    def __getitem__(self, key):
        return self.values[key]

    def feature_config(self) -> FeatureConfig:
        v = self.values
        try:
            return FeatureConfig(
                sample_rate=v["audio.sample_rate"],
                fft_size=v["audio.fft_size"],
                hop_size=v["audio.hop_size"],
                window=v["audio.window"],
                n_mels=v["audio.n_mels"],
                f_min=v["audio.f_min"],
                f_max=v["audio.f_max"],
                log_floor=v["audio.log_floor"],
                delta_window=v["audio.delta_window"],
                n_mfcc=v["audio.n_mfcc"],
            )
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc

    def model_config(self) -> ModelConfig:
        v = self.values
        try:
            return ModelConfig(
                image_size=v["model.image_size"],
                image_channels=v["model.image_channels"],
                latent_grid=v["model.latent_grid"],
                embed_dim=v["model.embed_dim"],
                codebook_size=v["model.codebook_size"],
                commitment_beta=v["model.commitment_beta"],
                variant=v["model.variant"],
                encoder_channels=v["model.encoder_channels"],
                decoder_channels=v["model.decoder_channels"],
                g_channels=v["model.g_channels"],
                critic_hidden=v["model.critic_hidden"],
                critic_activation=v["model.critic_activation"],
                classifier_channels=v["model.classifier_channels"],
                n_classes=v["model.n_classes"],
            )
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc

    def train_config(self) -> TrainConfig:
        v = self.values
        try:
            return TrainConfig(
                learning_rate=v["train.learning_rate"],
                adam_beta1=v["train.adam_beta1"],
                adam_beta2=v["train.adam_beta2"],
                adam_epsilon=v["train.adam_epsilon"],
                batch_size=v["train.batch_size"],
                epochs=v["train.epochs"],
                seed=v["train.seed"],
                steps_a=v["train.steps_a"],
                steps_b=v["train.steps_b"],
                classifier_learning_rate=v["train.classifier_learning_rate"],
                checkpoint_every=v["train.checkpoint_every"],
            )
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc

    def gan_config(self) -> GanLossConfig:
        try:
            return GanLossConfig(
                lambda_gp=self.values["gan.lambda_gp"],
                critic_steps=self.values["gan.critic_steps"],
            )
        except InvalidInputError as exc:
            raise ConfigError(str(exc)) from exc


def resolve(file_values: dict[str, str] | None = None,
            cli_values: dict[str, str] | None = None) -> RunConfig:
    """Merge defaults, the named optimizer preset, the config file, and
    command-line overrides (in increasing precedence)."""
    file_values = dict(file_values or {})
    cli_values = dict(cli_values or {})
    for key in cli_values:
        if key not in SCHEMA:
            raise ConfigError(f"unknown config key {key!r}")

    values = {key: field.default for key, field in SCHEMA.items()}
    explicit = set(file_values) | set(cli_values)

    preset_text = cli_values.get("train.preset", file_values.get("train.preset"))
    if preset_text is not None:
        preset_name = parse_value(SCHEMA["train.preset"], preset_text)
    else:
        preset_name = values["train.preset"]
    values["train.preset"] = preset_name
    for pkey, pval in PRESETS[preset_name].items():
        values[f"train.{pkey}"] = pval

    for source in (file_values, cli_values):
        for key, text in source.items():
            values[key] = parse_value(SCHEMA[key], text)

    cfg = RunConfig(values=values, explicit=frozenset(explicit))
    # validate everything now so bad values fail at load, not mid-run
    cfg.feature_config()
    cfg.model_config()
    cfg.train_config()
    cfg.gan_config()
    if values["synth.train_count"] < 1 or values["synth.test_count"] < 1:
        raise ConfigError("synth split counts must be >= 1")
    return cfg
