"""Trainable scene embedding: a temporal-convolutional residual network with
Siamese distance-regression pretraining and triplet-loss fine-tuning.

All tensors are float64; training is deterministic under a fixed seed
(seeded He init, seeded batch order, serial Adam updates).
"""

from __future__ import annotations

import base64
import json
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import torch
from torch import nn

from .errors import DivergenceError, InvalidInputError, StaleModelError
from .scenes import DEFAULT_PITCH, PitchConfig, Scene, scene_distance, scene_to_channels

logger = logging.getLogger(__name__)

TRIPLET_MARGIN = 1.0


@dataclass(frozen=True)
class ArchSpec:
    """Layer specification of the embedding network."""

    in_channels: int
    width: int = 32
    blocks: int = 2
    kernel: int = 5
    embed_dim: int = 64


# Miniature architecture used by gradient checks.
MINI_ARCH = ArchSpec(in_channels=6, width=8, blocks=2, kernel=5, embed_dim=8)


@dataclass(frozen=True)
class OptConfig:
    lr: float = 1e-3
    batch_size: int = 32
    epochs: int = 10
    seed: int = 0
    lam_center: float = 1e-4
    lam_weight: float = 1e-4


class _ResBlock(nn.Module):
    def __init__(self, width: int, kernel: int):
        super().__init__()
        pad = kernel // 2
        self.conv1 = nn.Conv1d(width, width, kernel, padding=pad)
        self.conv2 = nn.Conv1d(width, width, kernel, padding=pad)

    def forward(self, x):
        h = torch.relu(self.conv1(x))
        h = self.conv2(h)
        return torch.relu(x + h)


class _TcnNet(nn.Module):
    def __init__(self, arch: ArchSpec):
        super().__init__()
        pad = arch.kernel // 2
        self.stem = nn.Conv1d(arch.in_channels, arch.width, arch.kernel, padding=pad)
        self.blocks = nn.ModuleList(_ResBlock(arch.width, arch.kernel) for _ in range(arch.blocks))
        self.head = nn.Linear(arch.width, arch.embed_dim)

    def forward(self, x):
        h = torch.relu(self.stem(x))
        for block in self.blocks:
            h = block(h)
        h = h.mean(dim=2)  # global temporal pooling
        return self.head(h)


class EmbeddingModel:
    """Embedding network plus its optimizer/RNG state.

    version increments on every completed training call; inference on a
    fixed (params, input) pair is deterministic.
    """

    def __init__(self, arch: ArchSpec, seed: int = 0, pitch: PitchConfig = DEFAULT_PITCH):
        self.arch = arch
        self.pitch = pitch
        self.seed = seed
        self.version = 0
        self.net = _TcnNet(arch).double()
        self.adam_state: dict | None = None
        self.rng = np.random.default_rng(seed)
        self._init_params(seed)
        self._embed_cache: tuple[int, dict] | None = None

    def _init_params(self, seed: int) -> None:
        gen = torch.Generator().manual_seed(seed)
        for p in self.net.parameters():
            if p.ndim > 1:
                fan_in = int(np.prod(p.shape[1:]))
                std = math.sqrt(2.0 / fan_in)
                with torch.no_grad():
                    p.copy_(torch.randn(p.shape, generator=gen, dtype=torch.float64) * std)
            else:
                with torch.no_grad():
                    p.zero_()

    # -- parameter plumbing ------------------------------------------------

    def flat_params(self) -> np.ndarray:
        return np.concatenate([p.detach().numpy().ravel() for p in self.net.parameters()])

    def set_flat_params(self, flat: np.ndarray) -> None:
        flat = np.asarray(flat, dtype=np.float64)
        offset = 0
        with torch.no_grad():
            for p in self.net.parameters():
                n = p.numel()
                p.copy_(torch.from_numpy(flat[offset:offset + n].reshape(p.shape).copy()))
                offset += n
        if offset != flat.size:
            raise InvalidInputError(f"parameter vector has {flat.size} entries, expected {offset}")
        self._embed_cache = None

    def n_params(self) -> int:
        return sum(p.numel() for p in self.net.parameters())

    # -- inference ---------------------------------------------------------

    def input_tensor(self, scenes: list[Scene]) -> torch.Tensor:
        stacks = [scene_to_channels(s, self.pitch) for s in scenes]
        x = torch.from_numpy(np.stack(stacks))
        if x.shape[1] != self.arch.in_channels:
            raise InvalidInputError(
                f"scene has {x.shape[1]} channels, arch expects {self.arch.in_channels}"
            )
        return x

    def embed(self, scenes: list[Scene]) -> np.ndarray:
        """Batched embeddings, shape (len(scenes), embed_dim)."""
        with torch.no_grad():
            out = self.net(self.input_tensor(scenes))
        return out.numpy()

    def clone(self) -> "EmbeddingModel":
        other = EmbeddingModel(self.arch, seed=self.seed, pitch=self.pitch)
        other.set_flat_params(self.flat_params())
        other.version = self.version
        other.adam_state = None if self.adam_state is None else _copy_adam(self.adam_state)
        other.rng = np.random.default_rng()
        other.rng.bit_generator.state = self.rng.bit_generator.state
        return other


def forward(model: EmbeddingModel, scene: Scene) -> np.ndarray:
    """Embedding of a single scene."""
    return model.embed([scene])[0]


def siamese_loss(
    model: EmbeddingModel,
    scene_a: Scene,
    scene_b: Scene,
    d_true: float,
    lam_center: float = 1e-4,
    lam_weight: float = 1e-4,
) -> torch.Tensor:
    """Distance-regression loss with centering and weight regularizers."""
    if lam_center < 0 or lam_weight < 0:
        raise InvalidInputError("regularizer weights must be non-negative")
    emb = model.net(model.input_tensor([scene_a, scene_b]))
    return _siamese_terms(model, emb[0:1], emb[1:2], torch.tensor([d_true], dtype=torch.float64),
                          lam_center, lam_weight).mean()


def _siamese_terms(model, fa, fb, d_true, lam_center, lam_weight) -> torch.Tensor:
    dist = torch.linalg.norm(fa - fb, dim=1)
    loss = (dist - d_true) ** 2
    if lam_center:
        loss = loss + lam_center * (torch.linalg.norm(fa, dim=1) + torch.linalg.norm(fb, dim=1))
    if lam_weight:
        theta = torch.cat([p.ravel() for p in model.net.parameters()])
        loss = loss + lam_weight * torch.linalg.norm(theta)
    return loss


def triplet_loss(model: EmbeddingModel, a: Scene, p: Scene, n: Scene) -> torch.Tensor:
    emb = model.net(model.input_tensor([a, p, n]))
    return _triplet_terms(emb[0:1], emb[1:2], emb[2:3]).mean()


def _triplet_terms(fa, fp, fn) -> torch.Tensor:
    d_ap = torch.linalg.norm(fa - fp, dim=1)
    d_an = torch.linalg.norm(fa - fn, dim=1)
    return torch.clamp(d_ap - d_an + TRIPLET_MARGIN, min=0.0)


@dataclass(frozen=True)
class TripletSet:
    """Triplets of scene ids: anchor, positive, negative."""

    triplets: tuple[tuple[str, str, str], ...]

    def __post_init__(self):
        for t in self.triplets:
            if len(set(t)) != 3:
                raise InvalidInputError(f"triplet ids must be distinct: {t}")

    def __len__(self) -> int:
        return len(self.triplets)

    def __add__(self, other: "TripletSet") -> "TripletSet":
        return TripletSet(self.triplets + other.triplets)


def _make_adam(model: EmbeddingModel, lr: float) -> torch.optim.Adam:
    opt = torch.optim.Adam(model.net.parameters(), lr=lr)
    if model.adam_state is not None:
        try:
            opt.load_state_dict(model.adam_state)
        except (ValueError, KeyError):
            logger.warning("optimizer state incompatible with model, restarting Adam")
        # Restored state carries the previous run's learning rate; the
        # requested one wins.
        for group in opt.param_groups:
            group["lr"] = lr
    return opt


def _copy_adam(state: dict) -> dict:
    import copy

    return copy.deepcopy(state)


def pretrain(
    model: EmbeddingModel,
    scenes: list[Scene],
    pair_budget: int,
    opt_cfg: OptConfig | None = None,
    pair_distances: dict | None = None,
) -> EmbeddingModel:
    """Siamese pretraining on uniformly sampled scene pairs against the
    ground-truth scene distance. Mutates and returns the model.

    pair_distances optionally caches {(i, j): meters} to avoid recomputing
    Hungarian distances across calls.
    """
    if len(scenes) < 2:
        raise InvalidInputError("pretraining needs at least 2 scenes")
    if pair_budget == 0:
        return model
    cfg = opt_cfg or OptConfig()
    rng = np.random.default_rng(cfg.seed)
    cache = pair_distances if pair_distances is not None else {}
    pairs = []
    for _ in range(pair_budget):
        i, j = rng.choice(len(scenes), size=2, replace=False)
        pairs.append((int(i), int(j)))
    dists = []
    for i, j in pairs:
        key = (min(i, j), max(i, j))
        if key not in cache:
            cache[key] = scene_distance(scenes[i], scenes[j])
        dists.append(cache[key])

    inputs = model.input_tensor(scenes)
    opt = _make_adam(model, cfg.lr)
    order = np.arange(len(pairs))
    step = 0
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = order[start:start + cfg.batch_size]
            ia = torch.tensor([pairs[k][0] for k in batch])
            ib = torch.tensor([pairs[k][1] for k in batch])
            d_true = torch.tensor([dists[k] for k in batch], dtype=torch.float64)
            opt.zero_grad()
            fa = model.net(inputs[ia])
            fb = model.net(inputs[ib])
            loss = _siamese_terms(model, fa, fb, d_true, cfg.lam_center, cfg.lam_weight).mean()
            if not torch.isfinite(loss):
                raise DivergenceError(f"pretraining diverged at step {step} (loss={loss.item()})")
            loss.backward()
            opt.step()
            step += 1
            logger.debug("pretrain step %d loss %.6f", step, loss.item())
    model.adam_state = opt.state_dict()
    model.version += 1
    model._embed_cache = None
    return model


def finetune(
    model: EmbeddingModel,
    dataset: "SceneDataset",
    triplet_set: TripletSet,
    opt_cfg: OptConfig | None = None,
) -> EmbeddingModel:
    """Triplet-loss fine-tuning for exactly opt_cfg.epochs epochs of Adam."""
    if len(triplet_set) == 0:
        logger.warning("finetune called with empty triplet set; no-op")
        return model
    cfg = opt_cfg or OptConfig()
    rng = np.random.default_rng(cfg.seed + model.version)
    idx = np.array(
        [[dataset.index[a], dataset.index[p], dataset.index[n]] for a, p, n in triplet_set.triplets]
    )
    inputs = dataset.input_tensor(model)
    opt = _make_adam(model, cfg.lr)
    order = np.arange(len(idx))
    for epoch in range(cfg.epochs):
        rng.shuffle(order)
        for start in range(0, len(order), cfg.batch_size):
            batch = idx[order[start:start + cfg.batch_size]]
            opt.zero_grad()
            emb = model.net(inputs[torch.from_numpy(batch.ravel())])
            emb = emb.reshape(len(batch), 3, -1)
            loss = _triplet_terms(emb[:, 0], emb[:, 1], emb[:, 2]).mean()
            if not torch.isfinite(loss):
                raise DivergenceError("fine-tuning diverged")
            loss.backward()
            opt.step()
    model.adam_state = opt.state_dict()
    model.version += 1
    model._embed_cache = None
    return model


class SceneDataset:
    """Indexed scene collection with a cached network input tensor."""

    def __init__(self, scenes: list[Scene]):
        if len(set(s.id for s in scenes)) != len(scenes):
            raise InvalidInputError("duplicate scene ids in dataset")
        self.scenes = list(scenes)
        self.index = {s.id: i for i, s in enumerate(scenes)}
        self.ids = [s.id for s in scenes]
        self._inputs: torch.Tensor | None = None

    def __len__(self) -> int:
        return len(self.scenes)

    def __getitem__(self, scene_id: str) -> Scene:
        return self.scenes[self.index[scene_id]]

    def input_tensor(self, model: EmbeddingModel) -> torch.Tensor:
        if self._inputs is None:
            self._inputs = model.input_tensor(self.scenes)
        return self._inputs


def embed_all(model: EmbeddingModel, dataset: SceneDataset) -> np.ndarray:
    """Embeddings of every dataset scene, cached per model version."""
    if model._embed_cache is not None:
        version, cache = model._embed_cache
        if version == model.version and id(dataset) in cache:
            return cache[id(dataset)]
    with torch.no_grad():
        emb = model.net(dataset.input_tensor(model)).numpy()
    if model._embed_cache is None or model._embed_cache[0] != model.version:
        model._embed_cache = (model.version, {})
    model._embed_cache[1][id(dataset)] = emb
    return emb


def knn(model: EmbeddingModel, dataset: SceneDataset, head_id: str, k: int) -> list[str]:
    """k nearest scene ids to the head by embedding distance, head excluded,
    ties broken by id."""
    if head_id not in dataset.index:
        raise InvalidInputError(f"unknown scene id {head_id}")
    if k <= 0:
        return []
    if k >= len(dataset):
        logger.warning("knn k=%d >= dataset size %d; truncating", k, len(dataset))
        k = len(dataset) - 1
    emb = embed_all(model, dataset)
    head = emb[dataset.index[head_id]]
    dist = np.linalg.norm(emb - head, axis=1)
    order = sorted(
        (i for i in range(len(dataset)) if i != dataset.index[head_id]),
        key=lambda i: (dist[i], dataset.ids[i]),
    )
    return [dataset.ids[i] for i in order[:k]]


# -- checkpointing ---------------------------------------------------------


def _b64(arr: np.ndarray) -> str:
    return base64.b64encode(np.ascontiguousarray(arr, dtype=np.float64).tobytes()).decode()


def _unb64(s: str, shape=None) -> np.ndarray:
    arr = np.frombuffer(base64.b64decode(s), dtype=np.float64)
    return arr.reshape(shape) if shape is not None else arr


def save_checkpoint(model: EmbeddingModel, path: str | Path) -> None:
    """Versioned JSON checkpoint; round-trips bit-exactly."""
    adam = None
    if model.adam_state is not None:
        state = model.adam_state
        adam = {
            "param_groups": state["param_groups"],
            "state": {
                str(k): {
                    "step": float(v["step"]),
                    "exp_avg": {"shape": list(v["exp_avg"].shape), "data": _b64(v["exp_avg"].numpy())},
                    "exp_avg_sq": {"shape": list(v["exp_avg_sq"].shape), "data": _b64(v["exp_avg_sq"].numpy())},
                }
                for k, v in state["state"].items()
            },
        }
    doc = {
        "format": "scenesim-checkpoint-v1",
        "arch": vars(model.arch).copy() if not isinstance(model.arch, ArchSpec) else {
            "in_channels": model.arch.in_channels,
            "width": model.arch.width,
            "blocks": model.arch.blocks,
            "kernel": model.arch.kernel,
            "embed_dim": model.arch.embed_dim,
        },
        "pitch": {"length": model.pitch.length, "width": model.pitch.width},
        "seed": model.seed,
        "version": model.version,
        "params": _b64(model.flat_params()),
        "adam": adam,
        "rng_state": json.loads(json.dumps(model.rng.bit_generator.state, default=int)),
    }
    Path(path).write_text(json.dumps(doc))


def load_checkpoint(path: str | Path) -> EmbeddingModel:
    doc = json.loads(Path(path).read_text())
    if doc.get("format") != "scenesim-checkpoint-v1":
        raise InvalidInputError(f"unknown checkpoint format {doc.get('format')!r}")
    arch = ArchSpec(**doc["arch"])
    model = EmbeddingModel(arch, seed=doc["seed"], pitch=PitchConfig(**doc["pitch"]))
    model.set_flat_params(_unb64(doc["params"]))
    model.version = doc["version"]
    state = doc["rng_state"]
    if "state" in state and isinstance(state["state"], dict):
        state["state"] = {k: int(v) if isinstance(v, (int, float)) else v for k, v in state["state"].items()}
    model.rng.bit_generator.state = state
    if doc["adam"] is not None:
        model.adam_state = {
            "param_groups": doc["adam"]["param_groups"],
            "state": {
                int(k): {
                    "step": torch.tensor(v["step"], dtype=torch.float32),
                    "exp_avg": torch.from_numpy(_unb64(v["exp_avg"]["data"], v["exp_avg"]["shape"]).copy()),
                    "exp_avg_sq": torch.from_numpy(_unb64(v["exp_avg_sq"]["data"], v["exp_avg_sq"]["shape"]).copy()),
                }
                for k, v in doc["adam"]["state"].items()
            },
        }
    return model
