"""Per-patch probability scorers.

Two backbones sit behind one interface: a VGG16-style network with
pretrained ImageNet weights and configurable freezing of the first N
weight-bearing layers, and a compact reference CNN (4 conv/pool stages,
global average pooling, single-logit head) sized to train on a CPU in
minutes. Both map a fixed-size patch to a probability strictly inside
(0, 1).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import asdict, dataclass

import numpy as np
import torch
from torch import nn

BACKBONE_REFERENCE = "reference_small_cnn"
BACKBONE_VGG16 = "pretrained_vgg16_style"

CHECKPOINT_FORMAT_VERSION = 1

# sigmoid outputs can saturate to exactly 0/1 in float arithmetic; scores
# are nudged inside the open interval to honor the (0, 1) contract
_SCORE_FLOOR = 1e-12


class ModelError(ValueError):
    """Raised for invalid scorer specs, inputs, or missing weights."""


class CheckpointError(RuntimeError):
    """Raised for unreadable, unversioned, or mismatched checkpoints."""


@dataclass(frozen=True)
class ScorerSpec:
    backbone_id: str = BACKBONE_REFERENCE
    input_size: int = 224
    frozen_layer_count: int = 0
    seed: int = 0


class ReferenceSmallCNN(nn.Module):
    """Compact patch classifier: 4 conv/pool stages, GAP, 1-unit head."""

    def __init__(self):
        super().__init__()
        layers = []
        prev = 1
        for chans in (8, 16, 32, 32):
            layers += [nn.Conv2d(prev, chans, 3, padding=1),
                       nn.ReLU(inplace=True),
                       nn.MaxPool2d(2)]
            prev = chans
        self.features = nn.Sequential(*layers)
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(prev, 1)

    def forward(self, x):
        z = self.pool(self.features(x)).flatten(1)
        return self.head(z).squeeze(1)


class VggPatchNet(nn.Module):
    """VGG16 features + first two pretrained classifier Linears, with the
    final 1000-way Linear replaced by a 1-unit head."""

    def __init__(self, vgg):
        super().__init__()
        self.features = vgg.features
        self.avgpool = nn.AdaptiveAvgPool2d((7, 7))
        classifier = list(vgg.classifier.children())[:-1]
        self.classifier = nn.Sequential(*classifier)
        self.head = nn.Linear(4096, 1)

    def forward(self, x):
        z = self.features(x)
        z = self.avgpool(z).flatten(1)
        z = self.classifier(z)
        return self.head(z).squeeze(1)


def _vgg16_cached_weights_file() -> str | None:
    hub_dir = os.path.join(torch.hub.get_dir(), "checkpoints")
    if not os.path.isdir(hub_dir):
        return None
    for name in sorted(os.listdir(hub_dir)):
        if name.startswith("vgg16-") and name.endswith(".pth"):
            return os.path.join(hub_dir, name)
    return None


def _build_vgg16_net(weights_path: str | None) -> VggPatchNet:
    from torchvision.models import vgg16

    path = weights_path or _vgg16_cached_weights_file()
    if path is None:
        raise ModelError(
            "pretrained VGG16 weights are not available: no weights_path was "
            "given and none were found in the torch hub cache "
            f"({os.path.join(torch.hub.get_dir(), 'checkpoints')}); refusing "
            "to fall back to random initialization")
    if not os.path.isfile(path):
        raise ModelError(f"pretrained VGG16 weights file does not exist: {path}")
    vgg = vgg16(weights=None)
    state = torch.load(path, map_location="cpu", weights_only=True)
    vgg.load_state_dict(state)
    return VggPatchNet(vgg)


class PatchScorer:
    """Trainable mapping from fixed-size patches to probabilities in (0, 1).

    The underlying torch module is exposed as ``net`` for the training
    loop; scoring through :meth:`score_patches` runs in eval mode with
    gradients disabled and is deterministic.
    """

    def __init__(self, spec: ScorerSpec, net: nn.Module, channels: int,
                 shift: float, scale: float):
        self.spec = spec
        self.net = net
        self.channels = channels
        self.shift = shift
        self.scale = scale
        self._apply_freezing()

    @property
    def input_size(self) -> int:
        return self.spec.input_size

    @property
    def frozen_layer_count(self) -> int:
        return self.spec.frozen_layer_count

    def weight_layers(self) -> list[nn.Module]:
        """Weight-bearing layers (modules owning a weight tensor) in order."""
        return [m for m in self.net.modules()
                if isinstance(m, (nn.Conv2d, nn.Linear))]

    def _apply_freezing(self):
        layers = self.weight_layers()
        if self.spec.frozen_layer_count > len(layers):
            raise ModelError(
                f"frozen_layer_count {self.spec.frozen_layer_count} exceeds the "
                f"{len(layers)} weight-bearing layers of {self.spec.backbone_id}")
        for layer in layers[:self.spec.frozen_layer_count]:
            for param in layer.parameters():
                param.requires_grad_(False)

    def prepare_batch(self, patches) -> torch.Tensor:
        """Validate and stack patches into a normalized (N, C, S, S) batch.

        Grayscale patches are replicated to the backbone's channel arity,
        then shifted/scaled to the range the backbone expects.
        """
        size = self.spec.input_size
        arrays = []
        for i, patch in enumerate(patches):
            arr = np.asarray(patch, dtype=np.float32)
            if arr.ndim != 2 or arr.shape != (size, size):
                raise ModelError(
                    f"patch {i}: expected shape ({size}, {size}), got {arr.shape}")
            arrays.append(arr)
        if not arrays:
            raise ModelError("patch list is empty")
        batch = torch.from_numpy(np.stack(arrays))[:, None, :, :]
        if self.channels > 1:
            batch = batch.expand(-1, self.channels, -1, -1).contiguous()
        return (batch - self.shift) / self.scale

    def score_batch_torch(self, batch: torch.Tensor) -> torch.Tensor:
        """Differentiable scores for a prepared batch (train path)."""
        return torch.sigmoid(self.net(batch))

    def score_patches(self, patches) -> np.ndarray:
        """Deterministic per-patch probabilities, order preserved."""
        batch = self.prepare_batch(patches)
        was_training = self.net.training
        self.net.eval()
        try:
            with torch.no_grad():
                logits = self.net(batch).double()
        finally:
            self.net.train(was_training)
        scores = torch.sigmoid(logits).numpy()
        return np.clip(scores, _SCORE_FLOOR, 1.0 - _SCORE_FLOOR)

    def trainable_parameters(self):
        return [p for p in self.net.parameters() if p.requires_grad]

    def parameter_checksums(self) -> dict[str, str]:
        """SHA-256 of every parameter tensor's bytes, keyed by name."""
        sums = {}
        for name, param in sorted(self.net.named_parameters()):
            data = param.detach().cpu().numpy().tobytes()
            sums[name] = hashlib.sha256(data).hexdigest()
        return sums

    def frozen_parameter_names(self) -> list[str]:
        return [name for name, p in sorted(self.net.named_parameters())
                if not p.requires_grad]

    def save(self, path, history_meta: dict | None = None):
        """Write a versioned checkpoint: spec + parameters + history metadata."""
        payload = {
            "format_version": CHECKPOINT_FORMAT_VERSION,
            "spec": asdict(self.spec),
            "state_dict": self.net.state_dict(),
            "history": history_meta or {},
        }
        torch.save(payload, path)

    @classmethod
    def load(cls, path) -> "PatchScorer":
        try:
            payload = torch.load(path, map_location="cpu", weights_only=False)
        except Exception as exc:
            raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
        if not isinstance(payload, dict) or "format_version" not in payload:
            raise CheckpointError(f"checkpoint {path} has no format_version field")
        version = payload["format_version"]
        if version != CHECKPOINT_FORMAT_VERSION:
            raise CheckpointError(
                f"checkpoint {path} has format_version {version}, "
                f"expected {CHECKPOINT_FORMAT_VERSION}")
        spec = ScorerSpec(**payload["spec"])
        scorer = _construct(spec, pretrained=False)
        scorer.net.load_state_dict(payload["state_dict"])
        scorer.history_meta = payload.get("history", {})
        return scorer


def _construct(spec: ScorerSpec, pretrained: bool, weights_path: str | None = None) -> PatchScorer:
    torch.manual_seed(spec.seed % 2**63)
    if spec.backbone_id == BACKBONE_REFERENCE:
        net = ReferenceSmallCNN()
        return PatchScorer(spec, net, channels=1, shift=0.5, scale=0.5)
    if spec.backbone_id == BACKBONE_VGG16:
        if pretrained:
            net = _build_vgg16_net(weights_path)
        else:
            from torchvision.models import vgg16
            net = VggPatchNet(vgg16(weights=None))
        # ImageNet normalization on channel-replicated grayscale collapses
        # to a single shift/scale (mean of means, mean of stds)
        return PatchScorer(spec, net, channels=3, shift=0.449, scale=0.226)
    raise ModelError(f"unknown backbone_id {spec.backbone_id!r}")


def build_scorer(backbone_id: str = BACKBONE_REFERENCE, input_size: int | None = None,
                 frozen_layer_count: int = 0, seed: int = 0,
                 weights_path: str | None = None) -> PatchScorer:
    """Construct a patch scorer.

    The reference CNN is seed-deterministic. The pretrained VGG16-style
    path requires weights (explicit ``weights_path`` or the torch hub
    cache) and raises :class:`ModelError` when they are missing rather
    than silently falling back to random initialization.
    """
    if input_size is None:
        input_size = 224
    if input_size <= 0:
        raise ModelError(f"input_size must be positive, got {input_size}")
    if frozen_layer_count < 0:
        raise ModelError(f"frozen_layer_count must be >= 0, got {frozen_layer_count}")
    spec = ScorerSpec(backbone_id=backbone_id, input_size=int(input_size),
                      frozen_layer_count=int(frozen_layer_count), seed=int(seed))
    return _construct(spec, pretrained=True, weights_path=weights_path)
