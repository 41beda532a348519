"""Command-line entry point: ``lfdistill <group> <action> [flags]``.

Every run writes ``run.log`` and ``results.yaml`` under ``--out``. The
results file is plain key/value YAML with a digest of the resolved config;
apart from timing fields it is deterministic for a given seed and thread
count.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import sys
import time
from dataclasses import asdict, fields, replace
from pathlib import Path

import numpy as np
import yaml
from threadpoolctl import threadpool_limits

from . import __version__
from .errors import ChecksumError, ConfigError, DivergenceError, UsageError

log = logging.getLogger("lfdistill")

SWEEPS = {
    "K": [2, 4, 8, 16, 32],
    "r": [0.0, 0.1, 0.2, 0.3],
    "pseudo": [0, 10, 40, 160],  # pseudo images; 0 means real rays only
    "residual": [True, False],
}


# ---------------------------------------------------------------- config


def digest(obj):
    return hashlib.sha256(json.dumps(obj, sort_keys=True, default=str).encode()).hexdigest()


def load_config(spec):
    """``--config`` is a YAML file, or a bare network name such as ``W256D88``."""
    if spec is None:
        return {}
    path = Path(spec)
    if path.exists():
        cfg = yaml.safe_load(path.read_text()) or {}
        if not isinstance(cfg, dict):
            raise ConfigError(f"{spec}: expected a mapping at top level")
        return cfg
    from .student import build_config

    build_config(spec)  # raises ConfigError for anything unrecognised
    return {"student": {"network": spec}}


def _section(cfg, name):
    sec = cfg.get(name) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"config section {name!r} must be a mapping")
    return dict(sec)


def _dataclass_from(cls, values, **overrides):
    known = {f.name for f in fields(cls)}
    extra = set(values) - known
    if extra:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(extra)}")
    values = {**values, **{k: v for k, v in overrides.items() if v is not None}}
    return cls(**values)


def scene_spec(cfg):
    from .scene import SceneSpec, default_scene, scene_from_dict

    sec = cfg.get("scene")
    return scene_from_dict(sec) if sec else SceneSpec(default_scene())


def teacher_config(cfg, args):
    from .teacher import TeacherConfig

    return _dataclass_from(TeacherConfig, _section(cfg, "teacher"),
                           seed=args.seed, iters=getattr(args, "iters", None),
                           width=getattr(args, "width", None),
                           n_samples=getattr(args, "samples", None),
                           batch_rays=getattr(args, "batch", None))


def encoder_config(cfg, args):
    from .student import encoder_from_dict

    enc = dict(_section(cfg, "student").get("encoder") or {})
    if getattr(args, "plucker", False):
        enc = {"kind": "plucker", "n_freqs": enc.get("n_freqs", 10)}
    if getattr(args, "K", None) is not None:
        enc["n_points"] = args.K
    if getattr(args, "freqs", None) is not None:
        enc["n_freqs"] = args.freqs
    return encoder_from_dict(enc)


def network_config(cfg, args):
    from .student import build_config

    sec = _section(cfg, "student")
    name = getattr(args, "network", None) or sec.get("network", "W64D24")
    residual = sec.get("residual", True) and not getattr(args, "no_residual", False)
    return build_config(name, residual=residual)


def train_config(cfg, args):
    from .distill import StudentTrainConfig

    return _dataclass_from(StudentTrainConfig, _section(cfg, "train"),
                           seed=args.seed, iters=getattr(args, "iters", None),
                           batch_size=getattr(args, "batch", None),
                           hard_ratio=getattr(args, "ratio", None),
                           eval_every=getattr(args, "eval_every", None))


# ---------------------------------------------------------------- run context


class Run:
    """Output directory, log handler and the results mapping of one invocation."""

    def __init__(self, args, command):
        self.out = Path(args.out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.results = {"command": command, "version": __version__, "seed": args.seed,
                        "threads": args.threads}
        self.handler = logging.FileHandler(self.out / "run.log", mode="w")
        self.handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s "
                                                    "%(message)s"))
        logging.getLogger("lfdistill").addHandler(self.handler)
        self.t0 = time.perf_counter()
        log.info("run %s -> %s", command, self.out)

    def config(self, key, value):
        self.results.setdefault("config", {})[key] = value
        self.results.setdefault("config_digest", {})[key] = digest(value)

    def finish(self):
        self.results["wall_seconds"] = time.perf_counter() - self.t0
        (self.out / "results.yaml").write_text(
            yaml.safe_dump(_plain(self.results), sort_keys=False))
        log.info("results written to %s", self.out / "results.yaml")
        logging.getLogger("lfdistill").removeHandler(self.handler)
        self.handler.close()


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, np.generic):
        return obj.item()
    return obj


def scene_data(cfg, run, n_quad):
    from .pipeline import render_scene_data
    from .scene import scene_to_dict

    spec = scene_spec(cfg)
    sd = scene_to_dict(spec)
    run.config("scene", sd)
    cache = run.out / f"scene-{digest([sd, n_quad])[:12]}.npz"
    return spec, render_scene_data(spec, n_quad, cache)


def _write_images(folder, images, png):
    from .imageio import write_image

    folder.mkdir(parents=True, exist_ok=True)
    for k, img in enumerate(images):
        write_image(folder / f"{k:03d}.{'png' if png else 'ppm'}", img)


# ---------------------------------------------------------------- commands


def cmd_scene_render(args, cfg, run):
    from .scene import save_scene

    spec, data = scene_data(cfg, run, args.quad)
    save_scene(spec, run.out / "scene.yaml")
    _write_images(run.out / "images" / "train", data.train_images, args.png)
    _write_images(run.out / "images" / "test", data.test_images, args.png)
    run.results.update(n_train=len(data.train_images), n_test=len(data.test_images),
                       resolution=list(data.train_images.shape[1:3]), n_quad=args.quad)


def cmd_teacher_train(args, cfg, run):
    from .checkpoint import save_teacher
    from .pipeline import fit_teacher, teacher_test_psnr
    from .teacher import teacher_config_echo

    tcfg = teacher_config(cfg, args)
    run.config("teacher", teacher_config_echo(tcfg))
    _, data = scene_data(cfg, run, args.quad)
    model, hist = fit_teacher(data, tcfg)
    path = run.out / "teacher.ckpt"
    save_teacher(path, model)
    score, _ = teacher_test_psnr(model, data)
    run.results.update(checkpoint=str(path), test_psnr=score, final_loss=hist.losses[-1],
                       train_seconds=hist.seconds,
                       evals=[{"step": s, "train_psnr": a, "test_psnr": b}
                              for s, a, b in hist.evals])


def cmd_teacher_render(args, cfg, run):
    from .checkpoint import load_teacher
    from .pipeline import teacher_test_psnr
    from .teacher import teacher_config_echo

    model = load_teacher(args.checkpoint)
    run.config("teacher", teacher_config_echo(model.config))
    _, data = scene_data(cfg, run, args.quad)
    score, preds = teacher_test_psnr(model, data)
    _write_images(run.out / "images" / "teacher", preds, args.png)
    run.results.update(test_psnr=score, queries_per_frame=int(
        data.test_poses[0].width * data.test_poses[0].height * model.config.n_samples))


def cmd_distill_gen(args, cfg, run):
    from .checkpoint import load_teacher
    from .distill import save_dataset
    from .pipeline import pseudo_dataset

    sec = _section(cfg, "distill")
    n_images = args.images if args.images is not None else sec.get("n_images", 2000)
    include_real = args.include_real or sec.get("include_real", False)
    teacher = load_teacher(args.teacher)
    _, data = scene_data(cfg, run, args.quad)
    ds = pseudo_dataset(teacher, data, n_images, include_real, args.seed)
    path = run.out / "pseudo.r2ld"
    save_dataset(ds, path)
    run.config("distill", {"n_images": n_images, "include_real": include_real,
                           "teacher": str(args.teacher)})
    run.results.update(dataset=str(path), records=len(ds),
                       teacher_digest=ds.teacher_digest.hex(),
                       box=ds.box.as_array().tolist())


def cmd_student_train(args, cfg, run):
    from .checkpoint import save_student
    from .distill import load_dataset
    from .pipeline import fit_student, real_dataset

    net, enc, tr = network_config(cfg, args), encoder_config(cfg, args), train_config(cfg, args)
    echo = {k: v for k, v in asdict(tr).items() if k != "checkpoint_path"}
    run.config("student", {"network": asdict(net), "encoder": asdict(enc), "train": echo})
    tr = replace(tr, checkpoint_path=str(run.out / "student.ckpt"))
    _, data = scene_data(cfg, run, args.quad)
    ds = load_dataset(args.dataset) if args.dataset else real_dataset(data)
    model, res = fit_student(ds, data, net, net.residual, enc, tr, seed=args.seed)
    save_student(run.out / "student.ckpt", model, enc)
    run.results.update(checkpoint=str(run.out / "student.ckpt"), records=len(ds),
                       **_run_summary(res))


def _run_summary(res):
    return {"final_loss": res.final_loss, "train_psnr": res.train_psnr,
            "test_psnr": res.test_psnr, "test_ssim": res.test_ssim,
            "train_seconds": res.seconds,
            "evals": [{"step": s, "heldout_psnr": p} for s, p in res.evals]}


def cmd_eval(args, cfg, run):
    from .metrics import psnr, ssim

    rows = []
    if args.images:
        a, b = args.images
        ia, ib = _read_image(a), _read_image(b)
        rows.append({"a": a, "b": b, "psnr": psnr(ia, ib), "ssim": ssim(ia, ib)})
    else:
        if not args.checkpoint:
            raise UsageError("eval needs --images A B or --checkpoint")
        rows = _eval_checkpoints(args, cfg, run)
    table = "\n".join(f"{r.get('name', r.get('b'))}\tPSNR {r['psnr']:.3f}\tSSIM "
                      f"{r['ssim']:.4f}" for r in rows)
    print(table)
    run.results["table"] = rows
    run.results["psnr_convention"] = "RGB jointly, peak 1.0; inf for identical images"


def _read_image(path):
    from .imageio import read_ppm

    if str(path).lower().endswith(".png"):
        from PIL import Image

        return np.asarray(Image.open(path).convert("RGB"), dtype=np.float64) / 255.0
    return read_ppm(path)


def _eval_checkpoints(args, cfg, run):
    from .checkpoint import load, load_student, load_teacher
    from .metrics import psnr, ssim
    from .student import render_image_student
    from .teacher import render_image

    _, data = scene_data(cfg, run, args.quad)
    targets = {"reference": data.test_images}
    if args.teacher:
        t = load_teacher(args.teacher)
        targets["teacher"] = np.stack([render_image(t, p, data.background)[0]
                                       for p in data.test_poses])
    rows = []
    for path in args.checkpoint:
        kind = load(path)[0]
        if kind == "teacher":
            m = load_teacher(path)
            preds = np.stack([render_image(m, p, data.background)[0] for p in data.test_poses])
        else:
            m, enc = load_student(path)
            preds = np.stack([render_image_student(m, enc, p) for p in data.test_poses])
        for against in args.against:
            if against not in targets:
                raise UsageError(f"--against {against} needs --teacher")
            ref = targets[against]
            rows.append({"name": f"{Path(path).name} vs {against}", "psnr": psnr(preds, ref),
                         "ssim": float(np.mean([ssim(x, y) for x, y in zip(preds, ref)]))})
    return rows


def cmd_bench_flops(args, cfg, run):
    from .flops import count_flops
    from .teacher import TeacherConfig

    ref = count_flops(teacher_config(cfg, args) if "teacher" in cfg else TeacherConfig(),
                      n_queries_per_ray=args.queries)
    if "student" in cfg or args.network:
        rep = count_flops(network_config(cfg, args), encoder_config(cfg, args), reference=ref)
    else:
        rep = ref
    d = rep.as_dict()
    run.results["flops"] = d
    print(yaml.safe_dump(_plain(d), sort_keys=False), end="")


def cmd_bench_time(args, cfg, run):
    from .bench import bench_walltime, student_renderer, teacher_renderer
    from .checkpoint import load_student, load_teacher
    from .flops import count_flops
    from .scene import sample_poses

    spec = scene_spec(cfg)
    poses = sample_poses(spec.orbit, args.frames + 1, args.seed)
    near, far = poses[0].near, poses[0].far
    reports = {}
    results = {}
    if args.student:
        s, enc = load_student(args.student)
        enc = enc.with_mode("test")
        results["student"] = bench_walltime("student", student_renderer(s, enc, near, far),
                                            poses, args.threads, digest=digest(asdict(s.config)))
        reports["student"] = count_flops(s.config, enc)
    if args.teacher:
        t = load_teacher(args.teacher)
        n = args.samples or t.config.n_samples
        results["teacher"] = bench_walltime(
            "teacher", teacher_renderer(t, near, far, spec.scene.background, n), poses,
            args.threads, digest=digest(asdict(t.config)))
        reports["teacher"] = count_flops(t.config, n_queries_per_ray=n)
    if not results:
        raise UsageError("bench time needs --student and/or --teacher")
    run.results["bench"] = {k: v.as_dict() for k, v in results.items()}
    for k, v in results.items():
        print(f"{k}\t{v.seconds_per_frame:.4f} s/frame\t{v.us_per_ray:.2f} us/ray "
              f"({v.frames} frames, {v.threads} threads)")
    if len(results) == 2:
        wall = results["teacher"].us_per_ray / results["student"].us_per_ray
        flops = reports["teacher"].total / reports["student"].total
        run.results["speedup"] = {"walltime": wall, "flops": flops,
                                  "walltime_over_flops": wall / flops}
        print(f"speedup\twall {wall:.2f}x\tflops {flops:.2f}x")


def cmd_ablate(args, cfg, run):
    from .checkpoint import load_teacher
    from .distill import load_dataset
    from .pipeline import fit_student, pseudo_dataset, real_dataset
    from .student import build_config

    _, data = scene_data(cfg, run, args.quad)
    base_net, base_enc = network_config(cfg, args), encoder_config(cfg, args)
    base_tr = train_config(cfg, args)
    teacher = load_teacher(args.teacher) if args.teacher else None
    fixed = load_dataset(args.dataset) if args.dataset else None

    def dataset(n_images):
        if n_images == 0:
            return real_dataset(data)
        if teacher is None:
            raise UsageError("this sweep needs --teacher to synthesize pseudo data")
        return pseudo_dataset(teacher, data, n_images, False, args.seed)

    values = args.values or SWEEPS[args.sweep]
    default_ds = None
    runs = []
    for v in values:
        net, enc, tr = base_net, base_enc, base_tr
        if args.sweep == "K":
            enc = replace(enc, n_points=int(v))
        elif args.sweep == "r":
            tr = replace(tr, hard_ratio=float(v))
        elif args.sweep == "residual":
            net = build_config(width=net.width, depth=net.depth, residual=_bool(v))
        if args.sweep == "pseudo":
            ds = dataset(int(v))
        else:
            if default_ds is None:
                default_ds = fixed if fixed is not None else dataset(args.images)
            ds = default_ds
        log.info("ablate %s=%s", args.sweep, v)
        _, res = fit_student(ds, data, net, net.residual, enc, tr, seed=args.seed,
                             name=f"{args.sweep}={v}")
        runs.append({"value": v, "records": len(ds), **_run_summary(res),
                     "loss_curve": res.losses, "fresh_loss_curve": res.fresh_losses})
        print(f"{args.sweep}={v}\ttrain {res.train_psnr:.2f} dB\ttest {res.test_psnr:.2f} dB"
              f"\tloss {res.final_loss:.3e}")
    run.config("ablate", {"sweep": args.sweep, "values": list(values),
                          "network": asdict(base_net), "encoder": asdict(base_enc),
                          "train": asdict(base_tr)})
    run.results["runs"] = runs


def _bool(v):
    return v if isinstance(v, bool) else str(v).lower() in ("1", "true", "on", "yes")


# ---------------------------------------------------------------- parser


def _common(p):
    p.add_argument("--config", help="YAML config file, or a network name like W256D88")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default="runs/latest")
    p.add_argument("--quad", type=int, default=1024, help="reference quadrature samples")


def _student_flags(p):
    p.add_argument("--network", help="student network name, e.g. W64D24")
    p.add_argument("--no-residual", action="store_true")
    p.add_argument("-K", type=int, help="points per ray")
    p.add_argument("--freqs", type=int, help="encoding frequencies")
    p.add_argument("--plucker", action="store_true")


def _train_flags(p):
    p.add_argument("--iters", type=int)
    p.add_argument("--batch", type=int)
    p.add_argument("--ratio", type=float, help="hard-example ratio r")
    p.add_argument("--eval-every", type=int)


def build_parser():
    parser = argparse.ArgumentParser(
        prog="lfdistill", description="Radiance-field to light-field distillation tools.")
    parser.add_argument("--version", action="version", version=__version__)
    groups = parser.add_subparsers(dest="group", required=True)

    scene = groups.add_parser("scene", help="ground-truth scenes").add_subparsers(dest="action", required=True)
    p = scene.add_parser("render", help="render ground-truth train/test images")
    _common(p)
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_scene_render)

    teacher = groups.add_parser("teacher", help="radiance-field teacher").add_subparsers(dest="action", required=True)
    p = teacher.add_parser("train", help="fit the radiance-field teacher")
    _common(p)
    p.add_argument("--iters", type=int)
    p.add_argument("--width", type=int)
    p.add_argument("--samples", type=int)
    p.add_argument("--batch", type=int)
    p.set_defaults(func=cmd_teacher_train)
    p = teacher.add_parser("render", help="render test views from a teacher checkpoint")
    _common(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--png", action="store_true")
    p.set_defaults(func=cmd_teacher_render)

    distill = groups.add_parser("distill", help="pseudo-ray datasets").add_subparsers(dest="action", required=True)
    p = distill.add_parser("gen", help="synthesize a pseudo-ray dataset")
    _common(p)
    p.add_argument("--teacher", required=True)
    p.add_argument("--images", type=int, help="pseudo-image count")
    p.add_argument("--include-real", action="store_true")
    p.set_defaults(func=cmd_distill_gen)

    student = groups.add_parser("student", help="light-field student").add_subparsers(dest="action", required=True)
    p = student.add_parser("train", help="train a light-field student")
    _common(p)
    _student_flags(p)
    _train_flags(p)
    p.add_argument("--dataset", help="pseudo dataset file (default: real training rays)")
    p.set_defaults(func=cmd_student_train)

    p = groups.add_parser("eval", help="PSNR/SSIM tables")
    _common(p)
    p.add_argument("--images", nargs=2, metavar=("A", "B"))
    p.add_argument("--checkpoint", nargs="+")
    p.add_argument("--teacher", help="teacher checkpoint for --against teacher")
    p.add_argument("--against", nargs="+", default=["reference"],
                   choices=["reference", "teacher"])
    p.set_defaults(func=cmd_eval)

    bench = groups.add_parser("bench", help="FLOPs and wall-time").add_subparsers(dest="action", required=True)
    p = bench.add_parser("flops", help="analytic FLOPs per ray")
    _common(p)
    _student_flags(p)
    p.add_argument("--queries", type=int, default=256, help="teacher queries per ray")
    p.set_defaults(func=cmd_bench_flops)
    p = bench.add_parser("time", help="wall-time per frame and per ray")
    _common(p)
    p.add_argument("--student")
    p.add_argument("--teacher")
    p.add_argument("--samples", type=int, help="teacher queries per ray")
    p.add_argument("--frames", type=int, default=60)
    p.set_defaults(func=cmd_bench_time)

    p = groups.add_parser("ablate", help="student sweeps over one factor")
    _common(p)
    _student_flags(p)
    _train_flags(p)
    p.add_argument("--sweep", required=True, choices=sorted(SWEEPS))
    p.add_argument("--values", nargs="+", help="override the sweep values")
    p.add_argument("--teacher", help="teacher checkpoint for pseudo data")
    p.add_argument("--dataset", help="fixed dataset for non-pseudo sweeps")
    p.add_argument("--images", type=int, default=40, help="pseudo images for fixed sweeps")
    p.set_defaults(func=cmd_ablate)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s %(message)s",
                        stream=sys.stderr)
    if args.threads < 1:
        parser.error("--threads must be >= 1")
    command = args.group + (f" {args.action}" if getattr(args, "action", None) else "")
    try:
        cfg = load_config(args.config)
        run = Run(args, command)
        with threadpool_limits(limits=args.threads):
            args.func(args, cfg, run)
        run.finish()
    except (ConfigError, UsageError, ChecksumError, DivergenceError) as e:
        print(f"lfdistill: error: {e}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
