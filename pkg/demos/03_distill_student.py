"""Distill the teacher into a W64D24 light-field student and compare costs.

Run ``02_teacher.py`` first. The student renders each pixel with one
network query; the teacher needs one per sample along the ray.
"""
import argparse
import logging

import numpy as np

from lfdistill.checkpoint import load_teacher, save_student
from lfdistill.experiments import reduced
from lfdistill.flops import count_flops
from lfdistill.imageio import write_image
from lfdistill.pipeline import fit_student, pseudo_dataset, render_scene_data, teacher_test_psnr

parser = argparse.ArgumentParser()
parser.add_argument("--teacher", default="teacher.ckpt")
parser.add_argument("--images", type=int, default=200, help="pseudo images to synthesize")
parser.add_argument("--iters", type=int, default=10_000)
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

data = render_scene_data(cache="scene.npz")
teacher = load_teacher(args.teacher)
t_psnr, t_imgs = teacher_test_psnr(teacher, data)

budget = reduced(n_pseudo_images=args.images, student_iters=args.iters)
ds = pseudo_dataset(teacher, data, args.images, seed=0)
print(f"{len(ds)} pseudo rays from the teacher")
model, run = fit_student(ds, data, budget.network, True, budget.encoder, budget.train)
save_student("student.ckpt", model, budget.encoder)

t_flops = count_flops(teacher.config)
s_flops = count_flops(model.config, budget.encoder, reference=t_flops)
print(f"teacher: {t_psnr:.2f} dB, {t_flops.total / 1e6:.2f} MFLOPs/ray")
print(f"student: {run.test_psnr:.2f} dB (SSIM {run.test_ssim:.3f}), "
      f"{s_flops.total / 1e6:.3f} MFLOPs/ray, {s_flops.speedup:.0f}x fewer")
write_image("teacher_view.ppm", np.clip(t_imgs[0], 0, 1))
