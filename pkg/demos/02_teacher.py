"""Fit a radiance-field teacher to the 40 training views.

Defaults are scaled down (W128, 64 samples, 3000 steps) so the run takes
about 20 minutes on one core; pass ``--full`` for the W256 / 192-sample /
100k-step configuration.
"""
import argparse
import logging

from lfdistill.checkpoint import save_teacher
from lfdistill.experiments import FULL, reduced, train_reference_teacher
from lfdistill.pipeline import render_scene_data

parser = argparse.ArgumentParser()
parser.add_argument("--full", action="store_true")
parser.add_argument("--out", default="teacher.ckpt")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

budget = FULL if args.full else reduced()
data = render_scene_data(cache="scene.npz")
teacher, score, secs = train_reference_teacher(data, budget)
print(f"teacher test PSNR {score:.2f} dB after {secs / 60:.1f} min")
save_teacher(args.out, teacher)
