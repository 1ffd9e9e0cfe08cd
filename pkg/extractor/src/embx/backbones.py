"""Frozen feature extractors.

The default backbone is the ViT-B/16 checkpoint pre-trained on
ImageNet-21k. Features are tapped at the final pre-logits token
representation (the class token after the encoder's last normalization);
no further normalization is applied, and the sidecar records the choice.
Preprocessing is the checkpoint's published evaluation transform: resize
shortest side to 224 (bicubic), center-crop 224, normalize with the
checkpoint's constants. Nothing here is ever trained or augmented.
"""

from __future__ import annotations

import hashlib

import numpy as np
import torch
from torchvision import transforms

DEFAULT_MODEL = "google/vit-base-patch16-224-in21k"


def state_dict_sha256(state_dict) -> str:
    """Stable digest over parameter names and tensor bytes."""
    digest = hashlib.sha256()
    for name in sorted(state_dict):
        tensor = state_dict[name]
        digest.update(name.encode())
        digest.update(tensor.detach().cpu().contiguous().numpy().tobytes())
    return digest.hexdigest()


class ViTBackbone:
    """ViT through the transformers library; class token after final norm."""

    tap_point = "cls_token_after_final_layernorm"

    def __init__(self, model_id: str = DEFAULT_MODEL, device: str = "cpu"):
        from transformers import ViTModel
        self.model_id = model_id
        self.device = torch.device(device)
        self.model = ViTModel.from_pretrained(model_id).to(self.device).eval()
        for param in self.model.parameters():
            param.requires_grad_(False)
        self.dim = int(self.model.config.hidden_size)
        size = int(self.model.config.image_size)
        self.preprocess = transforms.Compose([
            transforms.Resize(size, interpolation=transforms.InterpolationMode.BICUBIC),
            transforms.CenterCrop(size),
            transforms.ToTensor(),
            transforms.Normalize(mean=[0.5, 0.5, 0.5], std=[0.5, 0.5, 0.5]),
        ])
        self.checkpoint_hash = state_dict_sha256(self.model.state_dict())
        self.preprocess_description = (
            f"resize_shortest={size} bicubic, center_crop={size}, "
            f"normalize mean=0.5 std=0.5")

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> np.ndarray:
        out = self.model(pixel_values=batch.to(self.device))
        cls = out.last_hidden_state[:, 0]
        return cls.cpu().numpy().astype(np.float32)


class TimmBackbone:
    """Same checkpoint family through timm, when installed."""

    tap_point = "cls_token_after_final_layernorm"

    def __init__(self, model_id: str = "vit_base_patch16_224.augreg_in21k",
                 device: str = "cpu"):
        import timm
        from timm.data import create_transform, resolve_data_config
        self.model_id = model_id
        self.device = torch.device(device)
        self.model = timm.create_model(model_id, pretrained=True,
                                       num_classes=0).to(self.device).eval()
        for param in self.model.parameters():
            param.requires_grad_(False)
        self.dim = int(self.model.num_features)
        config = resolve_data_config({}, model=self.model)
        self.preprocess = create_transform(**config, is_training=False)
        self.checkpoint_hash = state_dict_sha256(self.model.state_dict())
        self.preprocess_description = str(config)

    @torch.no_grad()
    def embed(self, batch: torch.Tensor) -> np.ndarray:
        feats = self.model(batch.to(self.device))
        return feats.cpu().numpy().astype(np.float32)


class StubBackbone:
    """Deterministic projection of downsampled pixels; tests and dry runs.

    No checkpoint, no network: an 8x8 grayscale thumbnail is pushed
    through a fixed seeded random projection.
    """

    tap_point = "stub_random_projection"
    model_id = "stub-rp"

    def __init__(self, dim: int = 32, device: str = "cpu", seed: int = 1234):
        self.dim = dim
        self.device = torch.device("cpu")
        rng = np.random.default_rng(seed)
        self._projection = rng.normal(size=(64, dim)).astype(np.float32)
        self.preprocess = transforms.Compose([
            transforms.Grayscale(num_output_channels=1),
            transforms.Resize((8, 8)),
            transforms.ToTensor(),
        ])
        self.checkpoint_hash = hashlib.sha256(
            self._projection.tobytes()).hexdigest()
        self.preprocess_description = "grayscale, resize 8x8"

    def embed(self, batch: torch.Tensor) -> np.ndarray:
        flat = batch.reshape(batch.shape[0], -1).numpy().astype(np.float32)
        return np.tanh(flat @ self._projection)


def load_backbone(name: str, device: str = "cpu"):
    """Backbone by id: 'stub[:dim]', 'timm:<model>', or a transformers id."""
    if name.startswith("stub"):
        _, _, dim = name.partition(":")
        return StubBackbone(dim=int(dim) if dim else 32)
    if name.startswith("timm:"):
        return TimmBackbone(name.split(":", 1)[1], device=device)
    return ViTBackbone(name, device=device)
