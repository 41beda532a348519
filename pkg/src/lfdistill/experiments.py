"""Budgeted experiments: end-to-end distillation and the four training-trend contrasts.

A :class:`Budget` fixes every size knob, so the same code runs at the
full desk budget (hours to days on one core) or a reduced one for demos.
"""
from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from .distill import StudentTrainConfig
from .pipeline import (first_step_below, fit_student, fit_teacher, pseudo_dataset, real_dataset,
                       smoothed, teacher_test_psnr)
from .student import KPointEncoder
from .teacher import TeacherConfig

log = logging.getLogger(__name__)


@dataclass
class Budget:
    teacher: TeacherConfig = field(default_factory=TeacherConfig)
    n_pseudo_images: int = 2000
    network: str = "W64D24"
    encoder: KPointEncoder = field(default_factory=KPointEncoder)
    train: StudentTrainConfig = field(default_factory=StudentTrainConfig)
    # trailing window used to smooth loss curves before comparing them
    window: int = 100


FULL = Budget()


def reduced(teacher_iters=3000, width=128, n_samples=64, n_pseudo_images=200,
            student_iters=10_000, batch=1024):
    """A budget that finishes in tens of minutes on one core."""
    return Budget(
        TeacherConfig(width=width, n_samples=n_samples, batch_rays=256, iters=teacher_iters,
                      eval_every=max(teacher_iters // 5, 1)),
        n_pseudo_images,
        train=StudentTrainConfig(batch_size=batch, iters=student_iters,
                                 eval_every=max(student_iters // 5, 1)))


@dataclass
class EndToEnd:
    teacher_psnr: float
    student_psnr: float
    student_ssim: float
    teacher_seconds: float
    student_seconds: float
    generation_seconds: float
    records: int

    @property
    def gap(self):
        return self.teacher_psnr - self.student_psnr


def train_reference_teacher(data, budget):
    teacher, hist = fit_teacher(data, budget.teacher, eval_test=False)
    score, _ = teacher_test_psnr(teacher, data)
    log.info("teacher test PSNR %.2f dB after %d iters", score, budget.teacher.iters)
    return teacher, score, hist.seconds


def end_to_end(data, budget, seed=0, teacher=None):
    """Teacher -> pseudo data -> student; both scored against the reference renders."""
    t_sec = 0.0
    if teacher is None:
        teacher, t_psnr, t_sec = train_reference_teacher(data, budget)
    else:
        t_psnr, _ = teacher_test_psnr(teacher, data)
    t0 = time.perf_counter()
    ds = pseudo_dataset(teacher, data, budget.n_pseudo_images, False, seed)
    gen = time.perf_counter() - t0
    _, run = fit_student(ds, data, budget.network, True, budget.encoder, budget.train,
                         seed=seed)
    return EndToEnd(t_psnr, run.test_psnr, run.test_ssim, t_sec, run.seconds, gen, len(ds))


@dataclass
class TrendOutcome:
    per_seed: list
    checks: dict

    def passed(self):
        return all(self.checks.values())


def _seed_runs(data, teacher, budget, seed):
    """The five student runs one seed of the trend study needs."""
    net, enc = budget.network, budget.encoder
    pseudo = pseudo_dataset(teacher, data, budget.n_pseudo_images, False, seed)
    real = real_dataset(data)
    # same records the include_real path of generate_pseudo_dataset would produce
    both = pseudo.concat(real)
    tr = budget.train
    tr0 = replace(tr, hard_ratio=0.0)
    runs = {}
    for name, ds, network, residual, cfg in [
            ("pseudo", pseudo, net, True, tr),
            ("pseudo+real", both, net, True, tr),
            ("real", real, net, True, tr),
            ("r0", pseudo, net, True, tr0),
            ("nores", pseudo, net, False, tr0)]:
        log.info("trend seed %d run %s", seed, name)
        runs[name] = fit_student(ds, data, network, residual, enc, cfg, name=name, seed=seed)[1]
    return runs


def _summarise(runs, window):
    w = window
    fresh_r2 = smoothed(runs["pseudo"].fresh_losses, w)
    fresh_r0 = smoothed(runs["r0"].fresh_losses, w)
    # a level both pool settings eventually reach
    threshold = 1.25 * max(fresh_r2.min(), fresh_r0.min())
    res_r0 = smoothed(runs["r0"].losses, w)
    early = min(5000, len(runs["r0"].losses)) - w  # index of the 5k-step smoothed loss
    return {
        "pseudo_test": runs["pseudo"].test_psnr,
        "pseudo_real_test": runs["pseudo+real"].test_psnr,
        "real_gap": runs["real"].train_psnr - runs["real"].test_psnr,
        "pseudo_gap": runs["pseudo"].train_psnr - runs["pseudo"].test_psnr,
        "threshold": float(threshold),
        "steps_r02": first_step_below(runs["pseudo"].fresh_losses, threshold, w),
        "steps_r0": first_step_below(runs["r0"].fresh_losses, threshold, w),
        "res_r0_loss_at_5k": float(res_r0[max(early, 0)]),
        "nores_best_loss": float(smoothed(runs["nores"].losses, w).min()),
        "test_psnr": {k: r.test_psnr for k, r in runs.items()},
        "train_psnr": {k: r.train_psnr for k, r in runs.items()},
    }


def trend_study(data, teacher, budget, seeds=(0, 1, 2)):
    per_seed = [_summarise(_seed_runs(data, teacher, budget, s), budget.window) for s in seeds]

    def med(key):
        return float(np.median([s[key] for s in per_seed]))

    inf = float("inf")
    steps = [(s["steps_r02"] or inf, s["steps_r0"] or inf) for s in per_seed]
    checks = {
        "a_real_helps": med("pseudo_real_test") >= med("pseudo_test"),
        "b_real_overfits": med("real_gap") - med("pseudo_gap") >= 3.0,
        "c_pool_faster": float(np.median([a for a, _ in steps])) <
                         float(np.median([b for _, b in steps])),
        "d_nores_stalls": med("nores_best_loss") >= med("res_r0_loss_at_5k"),
    }
    return TrendOutcome(per_seed, checks)


def budget_dict(budget):
    d = asdict(budget)
    d["encoder"] = asdict(budget.encoder)
    return d
