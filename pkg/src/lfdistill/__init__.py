"""Distill a ray-marching radiance field into a single-query light field."""
# ruff: noqa: F401
from .autodiff import AdamState, DenseLayer, GradientTape, Sequential, adam_step, lr_schedule, mse_loss
from .distill import (HardExamplePool, PseudoDataset, RayBoundingBox, compose_batch,
                      generate_pseudo_dataset, infer_bbox, load_dataset, sample_pseudo_rays,
                      save_dataset, train_student)
from .encoding import PositionalEncoding, encode
from .flops import FlopsReport, count_flops
from .metrics import psnr, ssim
from .scene import (Blob, BlobScene, CameraPose, OrbitConfig, Ray, generate_ray, query_field,
                    reference_render, sample_poses)
from .student import KPointEncoder, PluckerEncoder, ResidualMlp, build_config, encode_ray
from .teacher import NerfMlp, TeacherConfig, train_teacher
from .volume import QuadratureSamples, composite_ray, stratified_depths

__version__ = "0.1.0"
