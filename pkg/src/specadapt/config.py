"""Flat key=value configuration.

Config files are plain text, one ``section.key = value`` per line, ``#``
comments allowed. CLI flags override file values, which override the
defaults below. Values are parsed as bool/int/float where possible and
kept as strings otherwise.
"""

from __future__ import annotations

import json
from pathlib import Path

from .errors import ValidationError

DEFAULTS = {
    # spectral frontend
    "spectral.sample_rate": 16000,
    "spectral.fft_size": 256,
    "spectral.hop": 128,
    "spectral.log_floor": 1e-5,
    "spectral.patch_frames": 128,
    # domain encoders
    "encoder.dim": 256,
    "encoder.base_channels": 16,
    "encoder.n_layers": 4,
    "encoder.head_lr": 1e-3,
    "encoder.lr": 1e-4,
    "encoder.epochs": 20,
    "encoder.external_cmd": "",
    # generator / discriminator / GAN training
    "gan.base_channels": 64,
    "gan.n_resblocks": 9,
    "gan.dropout": 0.5,
    "gan.fusion": "film_all_independent",
    "gan.disc_base_channels": 64,
    "gan.spectral_norm": True,
    "gan.leaky_slope": 0.2,
    "gan.epochs": 400,
    "gan.lr": 0.0002,
    "gan.beta1": 0.5,
    "gan.beta2": 0.999,
    "gan.batch_size": 1,
    "gan.n_source": 40,
    "gan.n_target": 40,
    # objectives
    "loss.lambda_nr": 0.5,
    "loss.lambda_cc": 0.5,
    "loss.gp_gamma": 10.0,
    "loss.tau": 0.07,
    "loss.n_queries": 256,
    "loss.n_layers": 4,
    "loss.l1_reduction": "mean",
    "loss.adv_g_mode": "saturating",
    # simulation
    "sim.sigma": 0.1,
    "sim.perturb_noise": True,
    "sim.perturb_channel": True,
    # downstream adaptation
    "adapt.epochs": 20,
    "adapt.lr": 1e-3,
    "adapt.metric_cmd": "",
    "adapt.asr_cmd": "",
}


def _parse_value(raw: str):
    text = raw.strip()
    low = text.lower()
    if low in ("true", "yes", "on"):
        return True
    if low in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


class Config:
    """Layered lookup: overrides > config file > defaults."""

    def __init__(self, values: dict | None = None):
        self.values = dict(DEFAULTS)
        if values:
            self.values.update(values)

    @classmethod
    def load(cls, path: str | Path | None = None, overrides: dict | None = None) -> "Config":
        cfg = cls()
        if path is not None:
            cfg.update_from_file(path)
        if overrides:
            for key, val in overrides.items():
                cfg.set(key, val)
        return cfg

    def update_from_file(self, path: str | Path) -> None:
        for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ValidationError(f"{path}:{lineno}: expected key = value, got {line!r}")
            key, _, raw = stripped.partition("=")
            self.values[key.strip()] = _parse_value(raw)

    def set(self, key: str, value) -> None:
        self.values[key] = _parse_value(value) if isinstance(value, str) else value

    def get(self, key: str):
        try:
            return self.values[key]
        except KeyError:
            raise ValidationError(f"unknown config key: {key}") from None

    def section(self, prefix: str) -> dict:
        dot = prefix + "."
        return {k[len(dot):]: v for k, v in self.values.items() if k.startswith(dot)}

    def to_json(self) -> str:
        return json.dumps(self.values, sort_keys=True)
