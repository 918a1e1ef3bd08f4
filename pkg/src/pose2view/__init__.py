"""pose2view: synthesize scene images from a single 6-DoF camera pose.

A coarse generator maps a 7-vector pose (translation + unit quaternion) to
an image; a conditional adversarial refiner adds texture and detail.  The
package also ships dataset ingestion for pose-list and matrix-pose layouts,
a deterministic procedural toy scene, image-quality metrics, an experiment
pipeline, and an HTTP inference service.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .config import DatasetConfig, ExperimentConfig, load_config
from .data import (
    AccessLog,
    DatasetSplit,
    SceneSample,
    load_sample_image,
    make_split,
    model_to_uint8,
    model_to_unit,
    parse_matrix_pose,
    parse_pose_list,
    preprocess_image,
)
from .errors import Pose2ViewError
from .gennet import (
    GenNetConfig,
    GenNetPredictor,
    Stage1Hparams,
    build_gennet,
    gennet_infer,
    l1_loss,
    train_gennet,
)
from .metrics import EvalReport, brenner, evaluate, psnr, ssim, to_grayscale
from .perceptual import (
    FeatureExtractor,
    content_loss,
    gram_matrix,
    random_extractor,
    style_loss,
    vgg16_extractor,
)
from .pipeline import Experiment, nearest_poses, run_eval, run_stage1, run_stage2
from .pose import (
    Pose,
    Trajectory,
    interpolate_trajectory,
    matrix_to_quat,
    normalize_quaternion,
    pose_distance,
    quat_to_matrix,
    slerp,
)
from .refinenet import (
    RefineConfig,
    RefinePredictor,
    Stage2Hparams,
    build_refiner,
    refine_infer,
    refiner_objective,
    train_refinenet,
)
from .toyscene import (
    Primitive,
    ToySceneSpec,
    generate_toy_scene,
    materialize_toy_dataset,
    toy_dataset,
    toy_render,
)

__version__ = "0.1.0"
