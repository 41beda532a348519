import numpy as np
import pytest

from lfdistill.distill import StudentTrainConfig
from lfdistill.experiments import Budget, end_to_end, reduced, trend_study
from lfdistill.pipeline import first_step_below, render_scene_data, smoothed
from lfdistill.scene import OrbitConfig, SceneSpec, default_scene
from lfdistill.student import KPointEncoder
from lfdistill.teacher import NerfMlp, TeacherConfig


@pytest.fixture(scope="module")
def tiny():
    spec = SceneSpec(default_scene(), OrbitConfig(width=12, height=12, focal=16.0), 3, 2)
    data = render_scene_data(spec, n_quad=32)
    budget = Budget(TeacherConfig(width=16, n_samples=8, batch_rays=32, iters=3, eval_every=0),
                    2, "W8D4", KPointEncoder(4, 2),
                    StudentTrainConfig(batch_size=32, iters=30, eval_every=0), window=5)
    return data, budget


def test_end_to_end_runs(tiny):
    data, budget = tiny
    res = end_to_end(data, budget)
    assert res.records == 2 * 144
    assert np.isfinite(res.teacher_psnr) and np.isfinite(res.student_psnr)


def test_trend_study_reports_all_checks(tiny):
    data, budget = tiny
    teacher = NerfMlp(budget.teacher, np.random.default_rng(0))
    out = trend_study(data, teacher, budget, seeds=(0,))
    assert set(out.checks) == {"a_real_helps", "b_real_overfits", "c_pool_faster",
                               "d_nores_stalls"}
    s = out.per_seed[0]
    assert set(s["test_psnr"]) == {"pseudo", "pseudo+real", "real", "r0", "nores"}


def test_reduced_budget_shape():
    b = reduced()
    assert b.teacher.width == 128 and b.train.iters == 10_000


def test_first_step_below():
    losses = np.r_[np.ones(10), np.zeros(10)]
    assert first_step_below(losses, 0.5, window=4) == 13  # window over steps 9..12 averages 0.25
    assert first_step_below(losses, -1, window=4) is None
    assert len(smoothed(losses, 4)) == 17
