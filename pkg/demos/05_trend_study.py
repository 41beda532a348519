"""Training-trend contrasts at a reduced budget, three seeds.

Compares pseudo vs pseudo+real data, real-only overfitting, the hard
example pool against r = 0, and a plain (no-residual) stack against the
residual network. Results go to ``trend_study.json``.
"""
import argparse
import json
import logging

from lfdistill.checkpoint import load_teacher
from lfdistill.experiments import budget_dict, reduced, trend_study
from lfdistill.pipeline import render_scene_data

parser = argparse.ArgumentParser()
parser.add_argument("--teacher", default="teacher.ckpt")
parser.add_argument("--images", type=int, default=200)
parser.add_argument("--iters", type=int, default=10_000)
parser.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
parser.add_argument("--out", default="trend_study.json")
args = parser.parse_args()
logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")

data = render_scene_data(cache="scene.npz")
budget = reduced(n_pseudo_images=args.images, student_iters=args.iters)
out = trend_study(data, load_teacher(args.teacher), budget, tuple(args.seeds))
for k, v in out.checks.items():
    print(f"{k:18s} {'holds' if v else 'does not hold'}")
with open(args.out, "w") as f:
    json.dump({"budget": budget_dict(budget), "checks": out.checks, "per_seed": out.per_seed},
              f, indent=1, default=str)
