"""Noise and channel embedding encoders.

Two pluggable extractors summarize what a patch sounds like: one for
environmental noise character, one for device/transmission coloration.
The in-repo stand-ins are small strided conv stacks whose frame features
are mean-pooled over time and linearly projected to a shared width so the
generator can sum the two embeddings. External pre-trained backbones hook
in through the same checkpoint/spec interface but are inference-only.

Fine-tuning follows a two-stage recipe: first classification over labeled
noise classes, then one class per target utterance; the encoder body is
always stepped at a tenth of the classifier head's learning rate.
"""

from __future__ import annotations

import copy
import json
import subprocess
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .errors import (
    CheckpointVersionMismatch,
    DimMismatch,
    HeldOutCoversAll,
    InputOutputError,
    NegativeSigma,
    NoParallelData,
    RaggedChannelSets,
    SingleClassDataset,
    TooFewChannels,
    TooFewUtterances,
    ValidationError,
)
from .frontend import (
    N_FREQ,
    PATCH_FRAMES,
    AudioClip,
    Spectrogram,
    SpectroPatch,
    segment_patches,
    stft,
    write_cache,
)

CHECKPOINT_VERSION = 1
DEFAULT_DIM = 256


@dataclass
class DomainEmbedding:
    vector: np.ndarray
    kind: str  # "noise" | "channel"
    source_utterance: str = ""

    def __post_init__(self):
        self.vector = np.asarray(self.vector, dtype=np.float32).reshape(-1)
        if not np.all(np.isfinite(self.vector)):
            raise ValidationError("embedding contains non-finite values")
        if self.kind not in ("noise", "channel"):
            raise ValidationError(f"bad embedding kind {self.kind!r}")

    @property
    def dim(self) -> int:
        return self.vector.size


@dataclass
class EncoderSpec:
    kind: str
    backbone: str = "standin_conv"
    native_dim: int = 0
    projected_dim: int = DEFAULT_DIM
    frame_aggregation: str = "mean_pool"
    n_layers: int = 4
    base_channels: int = 16


def _conv_out(size: int, n_layers: int) -> int:
    for _ in range(n_layers):
        size = (size - 1) // 2 + 1  # k3 s2 p1
    return size


class StandinEncoder(nn.Module):
    """Strided conv stack -> per-frame features -> mean pool -> projection.

    Frame features are the channel x frequency activations at each
    remaining time step; pooling over time makes the embedding length
    independent of patch duration.
    """

    def __init__(self, kind: str, n_layers: int = 4, base_channels: int = 16,
                 projected_dim: int = DEFAULT_DIM):
        super().__init__()
        if kind not in ("noise", "channel"):
            raise ValidationError(f"bad encoder kind {kind!r}")
        self.kind = kind
        self.n_layers = n_layers
        self.base_channels = base_channels
        self.projected_dim = projected_dim
        convs = []
        in_ch = 1
        for i in range(n_layers):
            out_ch = base_channels * (2 ** i)
            convs.append(nn.Conv2d(in_ch, out_ch, 3, stride=2, padding=1))
            in_ch = out_ch
        self.convs = nn.ModuleList(convs)
        self.native_dim = in_ch * _conv_out(N_FREQ, n_layers)
        self.projection = nn.Linear(self.native_dim, projected_dim)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        # x: [B, 1, F, T] log-magnitude patches
        h = x
        for conv in self.convs:
            h = F.relu(conv(h))
        b, c, f, t = h.shape
        frames = h.reshape(b, c * f, t)   # frame-level features
        pooled = frames.mean(dim=2)       # mean pool over time
        return self.projection(pooled)

    def spec(self) -> EncoderSpec:
        return EncoderSpec(kind=self.kind, backbone="standin_conv",
                           native_dim=self.native_dim, projected_dim=self.projected_dim,
                           n_layers=self.n_layers, base_channels=self.base_channels)


def patch_to_tensor(patch: SpectroPatch) -> torch.Tensor:
    return torch.from_numpy(patch.values).reshape(1, 1, N_FREQ, PATCH_FRAMES)


def embed(encoder: nn.Module, patch: SpectroPatch) -> DomainEmbedding:
    """Instance-level embedding of one patch (deterministic, no grad)."""
    encoder.eval()
    with torch.no_grad():
        vec = encoder(patch_to_tensor(patch))[0]
    return DomainEmbedding(vector=vec.numpy(), kind=encoder.kind,
                           source_utterance=patch.parent_utterance)


def embed_utterance(encoder: nn.Module, spec: Spectrogram,
                    utterance_id: str = "") -> DomainEmbedding:
    """Utterance-level embedding: mean over its patch embeddings."""
    patches = segment_patches(spec, utterance_id)
    encoder.eval()
    with torch.no_grad():
        batch = torch.cat([patch_to_tensor(p) for p in patches], dim=0)
        vec = encoder(batch).mean(dim=0)
    return DomainEmbedding(vector=vec.numpy(), kind=encoder.kind,
                           source_utterance=utterance_id)


class ClassifierHead(nn.Module):
    def __init__(self, dim: int, num_classes: int):
        super().__init__()
        if num_classes < 2:
            raise ValidationError("classifier head needs >= 2 classes")
        self.linear = nn.Linear(dim, num_classes)

    def forward(self, emb: torch.Tensor) -> torch.Tensor:
        return self.linear(emb)


def _clips_to_labeled_patches(clips_with_labels, label_names):
    index = {name: i for i, name in enumerate(label_names)}
    xs, ys = [], []
    for clip, label in clips_with_labels:
        spec = stft(clip)
        for patch in segment_patches(spec, clip.utterance_id):
            xs.append(patch_to_tensor(patch))
            ys.append(index[label])
    return torch.cat(xs, dim=0), torch.tensor(ys, dtype=torch.long)


def _run_classifier_training(encoder, head, x, y, epochs, encoder_lr, head_lr,
                             seed, batch_size=8, x_val=None, y_val=None,
                             record_states=False):
    opt = torch.optim.Adam([
        {"params": encoder.parameters(), "lr": encoder_lr},
        {"params": head.parameters(), "lr": head_lr},
    ])
    rng = np.random.default_rng(seed)
    n = x.shape[0]
    accuracy, losses, val_losses, states = [], [], [], []
    for _ in range(epochs):
        encoder.train()
        order = rng.permutation(n)
        correct = 0
        epoch_loss = 0.0
        for start in range(0, n, batch_size):
            idx = torch.from_numpy(order[start:start + batch_size].copy())
            logits = head(encoder(x[idx]))
            loss = F.cross_entropy(logits, y[idx])
            opt.zero_grad()
            loss.backward()
            opt.step()
            correct += (logits.argmax(dim=1) == y[idx]).sum().item()
            epoch_loss += loss.item() * idx.numel()
        accuracy.append(correct / n)
        losses.append(epoch_loss / n)
        if x_val is not None:
            encoder.eval()
            with torch.no_grad():
                val_losses.append(F.cross_entropy(head(encoder(x_val)), y_val).item())
        if record_states:
            states.append(copy.deepcopy({k: v.clone() for k, v in encoder.state_dict().items()}))
    return accuracy, losses, val_losses, states


@dataclass
class PretrainResult:
    head: ClassifierHead
    classes: list
    accuracy: list = field(default_factory=list)
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    epoch_states: list = field(default_factory=list)


def pretrain_noise_encoder_stage1(encoder: StandinEncoder, clips: list[AudioClip],
                                  epochs: int = 20, lr: float = 1e-4,
                                  seed: int = 0) -> PretrainResult:
    """Stage 1: classification over labeled noise classes.

    `lr` steps the encoder body; the fresh head runs at 10x that rate.
    """
    labels = sorted({c.noise_class for c in clips if c.noise_class is not None})
    if len(labels) < 2:
        raise SingleClassDataset(f"need >= 2 noise classes, got {labels}")
    for c in clips:
        if c.noise_class is None:
            raise ValidationError(f"clip {c.utterance_id!r} is unlabeled")
    x, y = _clips_to_labeled_patches([(c, c.noise_class) for c in clips], labels)
    head = ClassifierHead(encoder.projected_dim, len(labels))
    acc, tr, _, _ = _run_classifier_training(encoder, head, x, y, epochs,
                                             encoder_lr=lr, head_lr=10 * lr, seed=seed)
    return PretrainResult(head=head, classes=labels, accuracy=acc, train_loss=tr)


def pretrain_noise_encoder_stage2(encoder: StandinEncoder,
                                  target_utterances: list[AudioClip],
                                  epochs: int = 20, lr: float = 1e-4,
                                  seed: int = 0) -> PretrainResult:
    """Stage 2: every target utterance becomes its own class; fresh head."""
    if len(target_utterances) < 2:
        raise TooFewUtterances("stage 2 needs >= 2 target utterances")
    ids = [c.utterance_id for c in target_utterances]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate utterance_ids in stage 2 data")
    x, y = _clips_to_labeled_patches(
        [(c, c.utterance_id) for c in target_utterances], sorted(ids))
    head = ClassifierHead(encoder.projected_dim, len(ids))
    acc, tr, _, _ = _run_classifier_training(encoder, head, x, y, epochs,
                                             encoder_lr=lr, head_lr=10 * lr, seed=seed)
    return PretrainResult(head=head, classes=sorted(ids), accuracy=acc, train_loss=tr)


def group_parallel(clips: list[AudioClip]) -> dict[str, dict[str, AudioClip]]:
    """utterance_id -> channel_id -> clip; validates the parallel structure."""
    table: dict[str, dict[str, AudioClip]] = {}
    for c in clips:
        if c.channel_id is None:
            raise NoParallelData(f"clip {c.utterance_id!r} has no channel_id")
        table.setdefault(c.utterance_id, {})[c.channel_id] = c
    for utt, by_ch in table.items():
        if len(by_ch) < 2:
            raise NoParallelData(f"utterance {utt!r} present under < 2 channels")
    return table


def pretrain_channel_encoder(encoder: StandinEncoder, clips: list[AudioClip],
                             held_out_channels: set[str] | None = None,
                             epochs: int = 30, lr: float = 1e-4, seed: int = 0,
                             val_fraction: float = 0.25,
                             record_states: bool = False) -> PretrainResult:
    """Channel-id classification over patches of a parallel corpus.

    Channels in `held_out_channels` never enter training; a per-epoch
    validation loss (held-out utterances, training channels) is recorded
    for the divergence study.
    """
    held_out = set(held_out_channels or ())
    table = group_parallel(clips)
    all_channels = sorted({ch for by_ch in table.values() for ch in by_ch})
    train_channels = [ch for ch in all_channels if ch not in held_out]
    if not train_channels:
        raise HeldOutCoversAll("every channel is held out")
    if len(train_channels) < 2:
        raise NoParallelData("need >= 2 training channels for classification")

    utts = sorted(table)
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(utts))
    n_val = max(1, int(round(val_fraction * len(utts)))) if len(utts) > 1 else 0
    val_utts = {utts[i] for i in order[:n_val]}

    def collect(utt_set):
        pairs = []
        for utt in utts:
            if (utt in val_utts) != (utt_set == "val"):
                continue
            for ch in train_channels:
                if ch in table[utt]:
                    pairs.append((table[utt][ch], ch))
        return pairs

    train_pairs, val_pairs = collect("train"), collect("val")
    if not train_pairs:
        raise NoParallelData("no training utterances left after validation split")
    x, y = _clips_to_labeled_patches(train_pairs, train_channels)
    x_val = y_val = None
    if val_pairs:
        x_val, y_val = _clips_to_labeled_patches(val_pairs, train_channels)
    head = ClassifierHead(encoder.projected_dim, len(train_channels))
    acc, tr, vl, states = _run_classifier_training(
        encoder, head, x, y, epochs, encoder_lr=lr, head_lr=10 * lr, seed=seed,
        x_val=x_val, y_val=y_val, record_states=record_states)
    return PretrainResult(head=head, classes=train_channels, accuracy=acc,
                          train_loss=tr, val_loss=vl, epoch_states=states)


def embedding_divergence(embeddings: dict[str, dict[str, DomainEmbedding]]) -> float:
    """Mean pairwise Euclidean distance between same-utterance embeddings
    across channels, averaged over utterances and channel pairs."""
    if not embeddings:
        raise TooFewChannels("no embeddings given")
    channel_sets = [tuple(sorted(by_ch)) for by_ch in embeddings.values()]
    if len(set(channel_sets)) != 1:
        raise RaggedChannelSets(f"inconsistent channel sets: {sorted(set(channel_sets))}")
    channels = channel_sets[0]
    k = len(channels)
    if k < 2:
        raise TooFewChannels(f"need >= 2 channels, got {k}")
    total = 0.0
    for by_ch in embeddings.values():
        mat = np.stack([by_ch[ch].vector.astype(np.float64) for ch in channels])
        diff = mat[:, None, :] - mat[None, :, :]
        dist = np.sqrt((diff ** 2).sum(axis=2))
        total += dist[np.triu_indices(k, k=1)].sum()
    n_pairs = k * (k - 1) / 2
    return total / (len(embeddings) * n_pairs)


def parallel_embeddings(encoder: nn.Module, clips: list[AudioClip]
                        ) -> dict[str, dict[str, DomainEmbedding]]:
    """Utterance-level embeddings for every (utterance, channel) pair."""
    table = group_parallel(clips)
    out: dict[str, dict[str, DomainEmbedding]] = {}
    for utt, by_ch in table.items():
        out[utt] = {ch: embed_utterance(encoder, stft(clip), utt)
                    for ch, clip in by_ch.items()}
    return out


def perturb_embedding(e: DomainEmbedding, sigma: float, rng_seed: int) -> DomainEmbedding:
    """Add seeded isotropic Gaussian jitter; sigma 0 returns the input bits."""
    if sigma < 0:
        raise NegativeSigma(f"sigma must be >= 0, got {sigma}")
    if sigma == 0:
        return DomainEmbedding(vector=e.vector.copy(), kind=e.kind,
                               source_utterance=e.source_utterance)
    rng = np.random.default_rng(rng_seed)
    noise = rng.normal(0.0, sigma, size=e.vector.shape).astype(np.float32)
    return DomainEmbedding(vector=e.vector + noise, kind=e.kind,
                           source_utterance=e.source_utterance)


def save_encoder(encoder: StandinEncoder, directory: str | Path) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    spec = asdict(encoder.spec())
    spec["version"] = CHECKPOINT_VERSION
    (directory / "spec.json").write_text(json.dumps(spec, indent=2))
    torch.save({"version": CHECKPOINT_VERSION, "state": encoder.state_dict()},
               directory / "params.bin")


def load_encoder(directory: str | Path) -> StandinEncoder:
    directory = Path(directory)
    try:
        spec = json.loads((directory / "spec.json").read_text())
    except OSError as exc:
        raise InputOutputError(f"cannot read encoder spec: {exc}") from exc
    if spec.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionMismatch(
            f"encoder checkpoint version {spec.get('version')}, expected {CHECKPOINT_VERSION}")
    if spec.get("backbone") != "standin_conv":
        raise ValidationError(f"cannot load backbone {spec.get('backbone')!r} as a module; "
                              "external backbones are invoked via encoder.external_cmd")
    encoder = StandinEncoder(kind=spec["kind"], n_layers=spec["n_layers"],
                             base_channels=spec["base_channels"],
                             projected_dim=spec["projected_dim"])
    blob = torch.load(directory / "params.bin", weights_only=True)
    if blob.get("version") != CHECKPOINT_VERSION:
        raise CheckpointVersionMismatch(
            f"encoder params version {blob.get('version')}, expected {CHECKPOINT_VERSION}")
    encoder.load_state_dict(blob["state"])
    return encoder


class ExternalEncoder:
    """Embedding extraction through an external executable.

    The command is invoked as ``cmd <cache.bin> <out.f32>`` where the first
    argument is a spectrogram-cache file and the second names the float32
    vector file the tool must write. Inference-only: no gradients, so GAN
    training keeps using the in-repo stand-ins.
    """

    def __init__(self, command: str, kind: str, projected_dim: int = DEFAULT_DIM):
        if not command:
            raise ValidationError("external encoder needs a non-empty command")
        self.command = command
        self.kind = kind
        self.projected_dim = projected_dim

    def embed_spectrogram(self, spec: Spectrogram, utterance_id: str = "") -> DomainEmbedding:
        with tempfile.TemporaryDirectory() as tmp:
            cache = Path(tmp) / "spec.bin"
            out = Path(tmp) / "emb.f32"
            write_cache(spec, cache)
            proc = subprocess.run(self.command.split() + [str(cache), str(out)],
                                  capture_output=True, text=True)
            if proc.returncode != 0:
                raise InputOutputError(
                    f"external encoder failed ({proc.returncode}): {proc.stderr.strip()}")
            vec = np.fromfile(out, dtype="<f4")
        if vec.size != self.projected_dim:
            raise DimMismatch(
                f"external encoder wrote {vec.size} values, expected {self.projected_dim}")
        return DomainEmbedding(vector=vec, kind=self.kind, source_utterance=utterance_id)
