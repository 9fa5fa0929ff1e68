"""Frozen-backbone feature extraction over image folders.

Backbones are torchvision's ViT-B/16 (768-dim features) and ResNet-50
(2048-dim); the classification head is replaced with identity and the model
is frozen in eval mode.  Images are resized to 256, center-cropped to 224,
then normalized per strategy:

    none      raw [0, 1] tensors
    imagenet  canonical ImageNet channel statistics
    standard  per-channel scaling to [-1, 1]

The exact preprocessing recipe is hashed into the timing sidecar so runs are
attributable to their input pipeline.
"""

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np
import torch
from torchvision import datasets, models, transforms

from .formats import write_flye, write_sidecar

BACKBONES = {
    "vit-b16": {"dim": 768},
    "resnet50": {"dim": 2048},
}
NORMALIZATIONS = {
    "none": None,
    "imagenet": ([0.485, 0.456, 0.406], [0.229, 0.224, 0.225]),
    "standard": ([0.5, 0.5, 0.5], [0.5, 0.5, 0.5]),
}
RESIZE, CROP = 256, 224


class ModelLoadError(RuntimeError):
    pass


class DatasetNotFound(RuntimeError):
    pass


class ShapeMismatch(RuntimeError):
    pass


@dataclass
class ExtractionJob:
    dataset_path: str
    backbone: str = "vit-b16"
    normalization: str = "standard"
    batch_size: int = 32
    device: str = "cpu"
    output_path: str = "embeddings.flye"
    tasks: int = 10
    weights_path: str | None = None
    pretrained: bool = False          # download torchvision weights
    random_init: bool = False         # explicit opt-in for weightless runs
    extra_meta: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.backbone not in BACKBONES:
            raise ModelLoadError(f"unknown backbone '{self.backbone}'; "
                                 f"choose from {sorted(BACKBONES)}")
        if self.normalization not in NORMALIZATIONS:
            raise ValueError(f"unknown normalization '{self.normalization}'; "
                             f"choose from {sorted(NORMALIZATIONS)}")
        if not (self.pretrained or self.weights_path or self.random_init):
            raise ModelLoadError(
                "no weights requested: pass weights_path, pretrained=True, "
                "or random_init=True")


def build_transform(normalization: str):
    steps = [
        transforms.Resize(RESIZE),
        transforms.CenterCrop(CROP),
        transforms.ToTensor(),
    ]
    stats = NORMALIZATIONS[normalization]
    if stats is not None:
        steps.append(transforms.Normalize(*stats))
    return transforms.Compose(steps)


def preprocess_hash(job: ExtractionJob) -> str:
    doc = {"resize": RESIZE, "crop": CROP, "normalization": job.normalization,
           "backbone": job.backbone}
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode()).hexdigest()[:16]


def load_backbone(job: ExtractionJob) -> torch.nn.Module:
    try:
        if job.backbone == "vit-b16":
            weights = models.ViT_B_16_Weights.IMAGENET1K_V1 if job.pretrained else None
            model = models.vit_b_16(weights=weights)
            model.heads = torch.nn.Identity()
        else:
            weights = models.ResNet50_Weights.IMAGENET1K_V2 if job.pretrained else None
            model = models.resnet50(weights=weights)
            model.fc = torch.nn.Identity()
        if job.weights_path:
            state = torch.load(job.weights_path, map_location="cpu")
            model.load_state_dict(state, strict=False)
    except Exception as exc:  # noqa: BLE001 - surface any load failure uniformly
        raise ModelLoadError(f"loading {job.backbone} failed: {exc}") from exc
    model.eval()
    for param in model.parameters():
        param.requires_grad_(False)
    return model.to(job.device)


def extract(job: ExtractionJob) -> dict:
    """Run the job; writes the FLYE file plus a `.timing.json` sidecar.

    Returns a summary dict (n, d, classes, seconds, paths).
    """
    job.validate()
    try:
        dataset = datasets.ImageFolder(job.dataset_path,
                                       transform=build_transform(job.normalization))
    except FileNotFoundError as exc:
        raise DatasetNotFound(str(exc)) from exc
    if len(dataset) == 0:
        raise DatasetNotFound(f"no images under {job.dataset_path}")

    model = load_backbone(job)
    expected_dim = BACKBONES[job.backbone]["dim"]

    t0 = time.perf_counter()
    chunks = []
    labels = []
    batch_imgs = []
    with torch.no_grad():
        for img, label in dataset:
            batch_imgs.append(img)
            labels.append(label)
            if len(batch_imgs) == job.batch_size:
                chunks.append(model(torch.stack(batch_imgs).to(job.device)).cpu())
                batch_imgs = []
        if batch_imgs:
            chunks.append(model(torch.stack(batch_imgs).to(job.device)).cpu())
    feats = torch.cat(chunks).numpy().astype(np.float32)
    seconds = time.perf_counter() - t0

    if feats.shape[1] != expected_dim:
        raise ShapeMismatch(
            f"{job.backbone} produced {feats.shape[1]}-dim features, "
            f"expected {expected_dim}")

    write_flye(job.output_path, feats, np.asarray(labels), len(dataset.classes),
               class_names=list(dataset.classes))
    sidecar = job.output_path + ".timing.json"
    meta = {
        "backbone": job.backbone,
        "normalization": job.normalization,
        "preprocess_hash": preprocess_hash(job),
        "pretrained": bool(job.pretrained),
        "weights_path": job.weights_path,
    }
    meta.update(job.extra_meta)
    write_sidecar(sidecar, seconds, job.tasks, meta)
    return {
        "n": int(feats.shape[0]),
        "d": int(feats.shape[1]),
        "classes": len(dataset.classes),
        "seconds": seconds,
        "output": job.output_path,
        "sidecar": sidecar,
    }
