"""Pseudo-data synthesis from a teacher and light-field student training."""
from __future__ import annotations

import hashlib
import logging
import math
import struct
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .autodiff import AdamState, GradientTape, adam_step, lr_schedule, mse_grad, mse_loss
from .errors import ChecksumError, ConfigError, DivergenceError, UsageError

log = logging.getLogger(__name__)

MAGIC = b"R2LD"
VERSION = 1
_HEADER = struct.Struct("<4sIQ12d2d32sQ")
RECORD_DTYPE = np.dtype("<f4")


@dataclass
class RayBoundingBox:
    """Componentwise bounds of ray origins and unit directions."""

    origin_min: np.ndarray
    origin_max: np.ndarray
    dir_min: np.ndarray
    dir_max: np.ndarray

    def as_array(self):
        return np.concatenate([self.origin_min, self.origin_max, self.dir_min, self.dir_max])

    @classmethod
    def from_array(cls, a):
        a = np.asarray(a, dtype=np.float64)
        return cls(a[0:3], a[3:6], a[6:9], a[9:12])

    def contains(self, origins, dirs):
        return bool(np.all((origins >= self.origin_min) & (origins <= self.origin_max))
                    and np.all((dirs >= self.dir_min) & (dirs <= self.dir_max)))


def infer_bbox(origins, dirs):
    origins = np.atleast_2d(np.asarray(origins, dtype=np.float64))
    dirs = np.atleast_2d(np.asarray(dirs, dtype=np.float64))
    if origins.size == 0:
        raise UsageError("cannot infer a bounding box from zero rays")
    return RayBoundingBox(origins.min(0), origins.max(0), dirs.min(0), dirs.max(0))


def sample_pseudo_rays(box, n, rng, max_rejects=1000, normalize=True):
    """Draw ``n`` rays uniform in the box; directions are renormalised afterwards.

    ``normalize=False`` returns the raw componentwise-uniform directions
    (only zero-length draws are replaced).
    """
    o = rng.uniform(box.origin_min, box.origin_max, size=(n, 3))
    d = rng.uniform(box.dir_min, box.dir_max, size=(n, 3))
    norm = np.linalg.norm(d, axis=1)
    bad = norm < 1e-12
    rejects = 0
    while np.any(bad):
        rejects += 1
        if rejects > max_rejects:
            raise UsageError("direction box keeps producing zero-length directions")
        d[bad] = rng.uniform(box.dir_min, box.dir_max, size=(int(bad.sum()), 3))
        norm = np.linalg.norm(d, axis=1)
        bad = norm < 1e-12
    return o, (d / norm[:, None] if normalize else d)


def model_digest(model, config_echo=None):
    """SHA-256 over parameter bytes in declared order (plus an optional config echo)."""
    h = hashlib.sha256()
    if config_echo is not None:
        h.update(repr(sorted(config_echo.items())).encode())
    for p in model.parameters():
        h.update(np.ascontiguousarray(p).tobytes())
    return h.digest()


@dataclass
class PseudoDataset:
    """Packed ``[n, 9]`` float32 records: origin, direction, RGB."""

    records: np.ndarray
    box: RayBoundingBox
    near: float
    far: float
    teacher_digest: bytes = bytes(32)
    seed: int = 0

    def __post_init__(self):
        self.records = np.ascontiguousarray(self.records, dtype=np.float32)
        if self.records.ndim != 2 or self.records.shape[1] != 9:
            raise ConfigError("records must be [n, 9]")

    def __len__(self):
        return len(self.records)

    @property
    def origins(self):
        return self.records[:, 0:3]

    @property
    def dirs(self):
        return self.records[:, 3:6]

    @property
    def rgb(self):
        return self.records[:, 6:9]

    def concat(self, other):
        return PseudoDataset(np.concatenate([self.records, other.records]), self.box,
                             self.near, self.far, self.teacher_digest, self.seed)


def _header_bytes(ds):
    return _HEADER.pack(MAGIC, VERSION, len(ds), *ds.box.as_array(), ds.near, ds.far,
                        ds.teacher_digest, ds.seed)


def save_dataset(ds, path):
    body = _header_bytes(ds) + ds.records.astype(RECORD_DTYPE).tobytes()
    Path(path).write_bytes(body + hashlib.sha256(body).digest())


def load_dataset(path):
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size + 32:
        raise ChecksumError("file too short for a pseudo dataset")
    body, digest = raw[:-32], raw[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise ChecksumError(f"{path}: checksum mismatch")
    fields = _HEADER.unpack_from(body)
    magic, version, count = fields[:3]
    if magic != MAGIC or version != VERSION:
        raise ChecksumError(f"{path}: not a version-{VERSION} pseudo dataset")
    box = RayBoundingBox.from_array(fields[3:15])
    near, far, tdigest, seed = fields[15:19]
    recs = np.frombuffer(body, RECORD_DTYPE, offset=_HEADER.size).reshape(-1, 9)
    if len(recs) != count:
        raise ChecksumError(f"{path}: header says {count} records, found {len(recs)}")
    return PseudoDataset(recs.astype(np.float32), box, near, far, tdigest, seed)


def check_teacher(ds, teacher, config_echo=None):
    if model_digest(teacher, config_echo) != ds.teacher_digest:
        raise UsageError("dataset was generated by a different teacher checkpoint")


def query_teacher(teacher, origins, dirs, near, far, background):
    """Teacher colors for float32 rays, rendered in test mode."""
    from .teacher import render_rays

    rgb = render_rays(teacher, origins, dirs, near, far, background)
    return np.clip(rgb, 0.0, 1.0)


def generate_pseudo_dataset(teacher, box, n_rays, near, far, background, seed=0,
                            real_rays=None, config_echo=None, chunk=4096):
    """Label ``n_rays`` box-sampled rays with the teacher.

    ``real_rays`` is an optional ``(origins, dirs, rgb)`` triple of original
    training pixels appended verbatim (the pseudo+real setting).
    """
    rng = np.random.default_rng(seed)
    o, d = sample_pseudo_rays(box, n_rays, rng)
    # labels are computed from the float32 rays that get stored
    o = o.astype(np.float32)
    d = d.astype(np.float32)
    rgb = np.empty((n_rays, 3), dtype=np.float32)
    for s in range(0, n_rays, chunk):
        rgb[s:s + chunk] = query_teacher(teacher, o[s:s + chunk], d[s:s + chunk], near, far,
                                         background)
    recs = [np.concatenate([o, d, rgb], axis=1)]
    if real_rays is not None:
        ro, rd, rc = real_rays
        recs.append(np.concatenate([ro, rd, rc], axis=1).astype(np.float32))
    return PseudoDataset(np.concatenate(recs), box, near, far,
                         model_digest(teacher, config_echo), seed)


class EpochStream:
    """Shuffled index stream; every index appears once per epoch before reshuffling."""

    def __init__(self, n, rng):
        if n < 1:
            raise UsageError("cannot stream an empty dataset")
        self.n = n
        self.rng = rng
        self.epoch = 0
        self._perm = rng.permutation(n)
        self._pos = 0

    def take(self, k):
        out = []
        while k > 0:
            if self._pos == self.n:
                self._perm = self.rng.permutation(self.n)
                self._pos = 0
                self.epoch += 1
            m = min(k, self.n - self._pos)
            out.append(self._perm[self._pos:self._pos + m])
            self._pos += m
            k -= m
        return np.concatenate(out) if out else np.empty(0, dtype=np.int64)


class HardExamplePool:
    """Bounded store of high-loss rays (origin, direction, target RGB, loss)."""

    def __init__(self, capacity, ratio, rng):
        if not 0.0 <= ratio < 1.0:
            raise ConfigError(f"hard example ratio must lie in [0, 1), got {ratio}")
        self.capacity = int(capacity)
        self.ratio = ratio
        self.rng = rng
        self.records = np.empty((0, 9), dtype=np.float32)
        self.losses = np.empty(0, dtype=np.float64)

    def __len__(self):
        return len(self.records)

    def n_select(self, batch_size):
        # tolerance keeps e.g. 0.3 * 10 from flooring to 2
        return int(math.floor(self.ratio * batch_size + 1e-9))

    def update(self, records, losses):
        """Insert the ``ratio`` fraction of ``records`` with the largest losses."""
        losses = np.asarray(losses, dtype=np.float64)
        if len(losses) != len(records):
            raise ConfigError("losses and records are misaligned")
        if not np.all(np.isfinite(losses)):
            raise ConfigError("pool losses must be finite")
        k = min(self.n_select(len(records)), self.capacity)
        if k == 0:
            return 0
        top = np.argsort(losses, kind="stable")[-k:]
        overflow = len(self) + k - self.capacity
        if overflow > 0:
            keep = np.sort(self.rng.permutation(len(self))[overflow:])
            self.records = self.records[keep]
            self.losses = self.losses[keep]
        self.records = np.concatenate([self.records, records[top]])
        self.losses = np.concatenate([self.losses, losses[top]])
        return k

    def sample(self, k):
        k = min(k, len(self))
        if k == 0:
            return self.records[:0]
        return self.records[self.rng.integers(0, len(self), k)]


def pool_update(pool, records, losses):
    pool.update(records, losses)
    return pool


def compose_batch(dataset_records, stream, pool, batch_size):
    """Fresh records from the epoch stream plus up to ``floor(r B)`` pool records.

    Returns ``(records [B, 9], n_from_pool)``.
    """
    if batch_size < 1:
        raise ConfigError("batch size must be >= 1")
    n_pool = min(pool.n_select(batch_size), len(pool)) if pool is not None else 0
    fresh = dataset_records[stream.take(batch_size - n_pool)]
    if n_pool == 0:
        return fresh, 0
    return np.concatenate([fresh, pool.sample(n_pool)]), n_pool


@dataclass
class StudentTrainConfig:
    batch_size: int = 8192
    iters: int = 50_000
    lr: float = 5e-4
    lr_final_ratio: float = 0.1
    hard_ratio: float = 0.2
    pool_capacity: int | None = None  # defaults to 4 * r * B
    seed: int = 0
    eval_every: int = 1000
    checkpoint_path: str | None = None

    @property
    def capacity(self):
        if self.pool_capacity is not None:
            return self.pool_capacity
        return int(round(4 * self.hard_ratio * self.batch_size))


@dataclass
class StudentLog:
    steps: list = field(default_factory=list)
    losses: list = field(default_factory=list)
    fresh_losses: list = field(default_factory=list)
    evals: list = field(default_factory=list)  # (step, held-out psnr)
    seconds: float = 0.0


def train_student(dataset, model, encoder, config=None, eval_fn=None, callback=None):
    """Regress teacher colors with a fresh stratified encoding of every ray each step.

    ``eval_fn(model)`` returns a held-out PSNR and runs every ``eval_every``
    steps. On a non-finite loss the last good checkpoint (if any) is kept
    and :class:`DivergenceError` is raised.
    """
    from .checkpoint import save_student

    cfg = config or StudentTrainConfig()
    if len(dataset) == 0:
        raise UsageError("cannot train on an empty dataset")
    rng = np.random.default_rng(cfg.seed)
    stream = EpochStream(len(dataset), np.random.default_rng(rng.integers(2**63)))
    pool = HardExamplePool(cfg.capacity, cfg.hard_ratio,
                           np.random.default_rng(rng.integers(2**63)))
    enc_rng = np.random.default_rng(rng.integers(2**63))
    enc = encoder.with_mode("train")
    opt = AdamState.for_params(model.parameters(), lr0=cfg.lr)
    hist = StudentLog()
    t0 = time.perf_counter()
    for step in range(cfg.iters):
        batch, n_pool = compose_batch(dataset.records, stream, pool, cfg.batch_size)
        x = enc(batch[:, 0:3], batch[:, 3:6], dataset.near, dataset.far, enc_rng)
        target = batch[:, 6:9]
        tape = GradientTape()
        model.zero_grad()
        pred = model.forward(x, tape)
        loss, per_ray = mse_loss(pred, target)
        if not np.isfinite(loss):
            raise DivergenceError(f"student loss became {loss} at step {step}")
        pool.update(batch, per_ray)
        model.backward(tape, mse_grad(pred, target))
        lr = lr_schedule(step, cfg.iters, cfg.lr, cfg.lr_final_ratio)
        if not adam_step(model.parameters(), model.gradients(), opt, lr):
            raise DivergenceError(f"non-finite student gradient at step {step}")
        hist.steps.append(step)
        hist.losses.append(loss)
        n_fresh = len(batch) - n_pool
        hist.fresh_losses.append(float(per_ray[:n_fresh].mean()))
        last = step == cfg.iters - 1
        if cfg.eval_every and ((step + 1) % cfg.eval_every == 0 or last):
            score = eval_fn(model) if eval_fn is not None else None
            hist.evals.append((step + 1, score))
            log.info("student step %d loss %.3e held-out %s", step + 1, loss,
                     "-" if score is None else f"{score:.2f} dB")
            if cfg.checkpoint_path:
                save_student(cfg.checkpoint_path, model, encoder)
        if callback is not None:
            callback(step, model, loss)
    hist.seconds = time.perf_counter() - t0
    return model, hist
