"""Analytic per-ray FLOPs for the teacher and student networks.

Convention: a multiply-accumulate is 2 FLOPs, so a dense layer costs
``2 * in * out + out`` (bias included); each activation output costs 1;
each sin/cos encoding output costs 2 (frequency scaling + transcendental);
a sample point ``o + t d`` costs 6.
"""
from __future__ import annotations

from dataclasses import dataclass, field

CONVENTION = ("dense=2*in*out+out; activation=1/unit; encoding=2 per sin/cos output; "
              "point o+t*d=6; residual add=1/unit; compositing=12/sample+7/ray")

# per sample: sigma*delta, exp, 1-exp, cumsum add, exp(T), T*alpha, 3 mul + 3 add
COMPOSITE_PER_SAMPLE = 12
# per ray: 1 - sum(w), 3 mul + 3 add for the background term
COMPOSITE_PER_RAY = 7


def dense_flops(in_dim, out_dim, activation="identity"):
    return 2 * in_dim * out_dim + out_dim + (0 if activation == "identity" else out_dim)


def encoding_flops(n_scalars, n_freqs):
    return 2 * 2 * n_freqs * n_scalars


@dataclass
class FlopsReport:
    name: str
    total: int
    breakdown: dict
    queries_per_ray: int
    reference_name: str | None = None
    reference_total: int | None = None
    convention: str = CONVENTION
    notes: list = field(default_factory=list)

    @property
    def speedup(self):
        return None if self.reference_total is None else self.reference_total / self.total

    def with_reference(self, other):
        return FlopsReport(self.name, self.total, self.breakdown, self.queries_per_ray,
                           other.name, other.total, self.convention, self.notes)

    def as_dict(self):
        return {"name": self.name, "flops_per_ray": self.total,
                "mflops_per_ray": self.total / 1e6, "breakdown": dict(self.breakdown),
                "queries_per_ray": self.queries_per_ray, "reference": self.reference_name,
                "speedup_vs_reference": self.speedup, "convention": self.convention,
                "notes": list(self.notes)}


def student_flops(config, encoder):
    """Per-ray cost of one student query including sampling and encoding."""
    w, blocks = config.width, config.blocks
    b = {}
    if encoder.kind == "kpoint":
        b["sampling"] = 6 * encoder.n_points
    else:
        b["sampling"] = 9  # o x d
    b["encoding"] = encoding_flops(encoder.raw_dim, encoder.n_freqs)
    b["input_layer"] = dense_flops(encoder.out_dim, w, "relu")
    b["blocks"] = 2 * blocks * dense_flops(w, w, "relu")
    if config.residual:
        b["residual_adds"] = blocks * w
    b["head"] = dense_flops(w, 3, "sigmoid")
    return FlopsReport(config.name, sum(b.values()), b, 1)


def teacher_query_flops(config):
    """Breakdown of one radiance-field query (one sample point)."""
    w = config.width
    pdim = 3 * (2 * config.pos_freqs + 1)
    ddim = 3 * (2 * config.dir_freqs + 1)
    trunk = 0
    for i in range(config.depth):
        in_dim = pdim if i == 0 else w + (pdim if i == config.skip else 0)
        trunk += dense_flops(in_dim, w, "relu")
    return {
        "sampling": 6,
        "encoding": encoding_flops(3, config.pos_freqs) + encoding_flops(3, config.dir_freqs),
        "trunk": trunk,
        "density_head": dense_flops(w, 1, "softplus"),
        "feature": dense_flops(w, w),
        "view_layer": dense_flops(w + ddim, w // 2, "relu"),
        "rgb_head": dense_flops(w // 2, 3, "sigmoid"),
        "compositing": COMPOSITE_PER_SAMPLE,
    }


def teacher_flops(config, n_queries=None):
    n = n_queries or config.n_samples
    per_query = teacher_query_flops(config)
    b = {k: v * n for k, v in per_query.items()}
    b["compositing"] += COMPOSITE_PER_RAY
    return FlopsReport(f"teacher-W{config.width}D{config.depth}x{n}", sum(b.values()), b, n)


def count_flops(model_config, encoder=None, n_queries_per_ray=None, reference=None):
    """Dispatch on config type; ``reference`` (another report) fills in the speedup."""
    from .teacher import TeacherConfig

    if isinstance(model_config, TeacherConfig):
        rep = teacher_flops(model_config, n_queries_per_ray)
    else:
        if encoder is None:
            raise ValueError("student FLOPs need an encoder config")
        rep = student_flops(model_config, encoder)
    return rep.with_reference(reference) if reference is not None else rep


def sequential_flops(layers):
    """Cost of a plain stack given ``(in, out, activation)`` triples."""
    return sum(dense_flops(i, o, a) for i, o, a in layers)
