"""End-to-end two-stage training on the toy scene, then evaluation.

A scaled-down run (32px images, a few hundred steps) that finishes in a
couple of minutes on a CPU.  For the full desk-scale experiment use the
CLI:

    pose2view toy-gen --out data --emit-config config.json
    pose2view train-gennet --config config.json
    pose2view train-refinenet --config config.json
    pose2view eval --config config.json

Run: python demos/04_two_stage_training.py   (writes to demo_output/)
"""

import os

import numpy as np
from PIL import Image

from pose2view import (
    DatasetConfig,
    Experiment,
    ExperimentConfig,
    GenNetConfig,
    RefineConfig,
    Stage1Hparams,
    Stage2Hparams,
)
from pose2view.data import model_to_uint8

OUT = os.path.join("demo_output", "two_stage")

config = ExperimentConfig(
    out_dir=OUT,
    dataset=DatasetConfig(kind="toy", n_train=16, n_test=4, scene_seed=42,
                          n_primitives=7, sampler_seed=7),
    gennet=GenNetConfig.small(32),
    refine=RefineConfig.small(32),
    stage1=Stage1Hparams(lr=1e-3, batch_size=16, epochs=300, seed=0),
    stage2=Stage2Hparams(lr=2e-4, batch_size=8, epochs=150, seed=1),
    seed=0,
    snapshot_every=100,
)

exp = Experiment(config)
print("config hash:", exp.hash[:16], "...")

print("\nstage 1: pose -> coarse image (L1 training)")
stage1 = exp.run_stage1()
print("  done at epoch", stage1.step, "- loss curve in stage1/loss.csv")

print("\nstage 2: adversarial refinement over the frozen stage-1 output")
stage2 = exp.run_stage2()
print("  frozen stage-1 digest recorded:",
      stage2.extra["stage1_params_digest"][:16], "...")

print("\nevaluation over the held-out test poses:")
report = exp.run_eval()
print(report.to_table())

# Save a coarse/refined/target strip for the first test pose.
split = exp.load_split()
gen, refiner = exp.predictors("refined")
sample = split.test[0]
coarse = gen(sample.pose)
refined = refiner(coarse)
from pose2view.data import load_sample_image

target = load_sample_image(sample, size=config.gennet.output_size,
                           root=exp.dataset_dir())
strip = np.concatenate([
    model_to_uint8(np.transpose(coarse, (1, 2, 0))),
    model_to_uint8(np.transpose(refined, (1, 2, 0))),
    model_to_uint8(target),
], axis=1)
path = os.path.join(OUT, "coarse_refined_target.png")
Image.fromarray(strip).save(path)
print("\nwrote", path, "(coarse | refined | ground truth)")
