"""Per-ray FLOPs of the named student networks against a 256-sample teacher."""
from lfdistill.flops import count_flops
from lfdistill.student import KPointEncoder, build_config
from lfdistill.teacher import TeacherConfig

teacher = count_flops(TeacherConfig(), n_queries_per_ray=256)
print(f"{'config':10s} {'MFLOPs/ray':>11s} {'vs teacher':>11s}")
print(f"{'teacher':10s} {teacher.total / 1e6:11.2f} {1:10.1f}x")
for name in ("W256D88", "W181D88", "W256D44", "W363D22", "W64D24"):
    rep = count_flops(build_config(name), KPointEncoder(), reference=teacher)
    print(f"{name:10s} {rep.total / 1e6:11.3f} {rep.speedup:10.1f}x")
print()
print("convention:", teacher.convention)
