"""End-to-end orchestration: ground truth, teacher, pseudo data, student, sweeps."""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from .distill import (StudentTrainConfig, generate_pseudo_dataset, infer_bbox, PseudoDataset,
                      train_student)
from .metrics import psnr, ssim
from .scene import SceneSpec, default_scene, generate_rays, render_reference_image
from .student import KPointEncoder, ResidualMlp, build_config, render_image_student
from .teacher import TeacherConfig, render_image, teacher_config_echo, train_teacher

log = logging.getLogger(__name__)


@dataclass
class SceneData:
    train_images: np.ndarray
    train_poses: list
    test_images: np.ndarray
    test_poses: list
    background: tuple

    def real_rays(self):
        """Every training pixel as ``(origins, dirs, rgb)`` float32 arrays."""
        rays = [generate_rays(p) for p in self.train_poses]
        o = np.concatenate([r[0] for r in rays]).astype(np.float32)
        d = np.concatenate([r[1] for r in rays]).astype(np.float32)
        return o, d, self.train_images.reshape(-1, 3).astype(np.float32)


def render_scene_data(spec=None, n_quad=1024, cache=None):
    """Ground-truth train/test images from the analytic renderer (cached as .npz)."""
    spec = spec or SceneSpec(default_scene())
    train_poses, test_poses = spec.train_poses(), spec.test_poses()
    if cache is not None and Path(cache).exists():
        z = np.load(cache)
        if z["train"].shape[0] == len(train_poses) and int(z["n_quad"]) == n_quad:
            return SceneData(z["train"], train_poses, z["test"], test_poses,
                             spec.scene.background)
    train = np.stack([render_reference_image(spec.scene, p, n_quad) for p in train_poses])
    test = np.stack([render_reference_image(spec.scene, p, n_quad) for p in test_poses])
    if cache is not None:
        np.savez(cache, train=train, test=test, n_quad=n_quad)
    return SceneData(train, train_poses, test, test_poses, spec.scene.background)


def teacher_test_psnr(teacher, data):
    preds = np.stack([render_image(teacher, p, data.background)[0] for p in data.test_poses])
    return psnr(np.clip(preds, 0, 1), data.test_images), preds


def fit_teacher(data, config=None, eval_test=True):
    return train_teacher(data.train_images, data.train_poses, config or TeacherConfig(),
                         data.background,
                         data.test_images if eval_test else None,
                         data.test_poses if eval_test else None)


def pseudo_dataset(teacher, data, n_images, include_real=False, seed=0):
    """Teacher-labelled rays sized ``n_images x H x W``, drawn inside the training ray box."""
    o, d, rgb = data.real_rays()
    box = infer_bbox(o, d)
    p0 = data.train_poses[0]
    n_rays = n_images * p0.height * p0.width
    return generate_pseudo_dataset(teacher, box, n_rays, p0.near, p0.far, data.background,
                                   seed, (o, d, rgb) if include_real else None,
                                   teacher_config_echo(teacher.config))


def real_dataset(data):
    o, d, rgb = data.real_rays()
    p0 = data.train_poses[0]
    return PseudoDataset(np.concatenate([o, d, rgb], axis=1), infer_bbox(o, d), p0.near,
                         p0.far)


def student_test_psnr(model, encoder, poses, images):
    preds = np.stack([render_image_student(model, encoder, p) for p in poses])
    return psnr(preds, images), preds


@dataclass
class StudentRun:
    name: str
    network: dict
    encoder: dict
    train: dict
    final_loss: float
    train_psnr: float
    test_psnr: float
    test_ssim: float
    losses: list = field(default_factory=list, repr=False)
    fresh_losses: list = field(default_factory=list, repr=False)
    evals: list = field(default_factory=list)
    seconds: float = 0.0


def fit_student(dataset, data, network="W64D24", residual=True, encoder=None,
                train=None, name=None, seed=0, targets=None):
    """Train a student and score it on train and test poses.

    ``targets`` selects what test images are compared against (defaults to
    the ground-truth test images).
    """
    cfg = build_config(network, residual=residual) if isinstance(network, str) else network
    encoder = encoder or KPointEncoder()
    train = train or StudentTrainConfig()
    model = ResidualMlp(cfg, encoder.out_dim, np.random.default_rng(seed))
    test_targets = data.test_images if targets is None else targets
    eval_poses = data.test_poses[:2]

    def eval_fn(m):
        return student_test_psnr(m, encoder, eval_poses, test_targets[:2])[0]

    model, hist = train_student(dataset, model, encoder, replace(train, seed=seed), eval_fn)
    train_score = student_test_psnr(model, encoder, data.train_poses, data.train_images)[0]
    test_score, preds = student_test_psnr(model, encoder, data.test_poses, test_targets)
    ssims = [ssim(a, b) for a, b in zip(preds, test_targets)]
    run = StudentRun(name or cfg.name, asdict(cfg), asdict(encoder), asdict(train),
                     float(np.mean(hist.losses[-100:])), train_score, test_score,
                     float(np.mean(ssims)), hist.losses, hist.fresh_losses, hist.evals,
                     hist.seconds)
    return model, run


def first_step_below(losses, threshold, window=100):
    """First step whose trailing ``window``-step mean loss is below ``threshold``."""
    losses = np.asarray(losses)
    if len(losses) < window:
        return None
    c = np.cumsum(np.insert(losses, 0, 0.0))
    avg = (c[window:] - c[:-window]) / window
    hits = np.nonzero(avg < threshold)[0]
    return None if len(hits) == 0 else int(hits[0] + window)


def smoothed(losses, window=100):
    losses = np.asarray(losses)
    k = min(window, len(losses))
    c = np.cumsum(np.insert(losses, 0, 0.0))
    return (c[k:] - c[:-k]) / k
