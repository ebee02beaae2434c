"""Self-calibrating visual odometry with a hypernetwork light-field renderer.

Subpackages and modules:

- ``autodiff``: reverse-mode tensors, Adam, finite-difference checks
- ``geometry``: 6D rotations, SE(3) poses, Plücker rays
- ``camera``: learnable intrinsics, freeform distortion net, reference camera
- ``nets``: pair encoder, hypernetwork, light field renderer
- ``losses``: photometric, pose and latent terms
- ``curriculum``: staged trainer, checkpoints, odometry inference
- ``simscene``: analytic scene, trajectories, dataset files
- ``evaluation``: odometry and calibration metrics, novel views
"""

from .camera import (DistortionNet, GroundTruthCamera, Intrinsics, LearnedCamera, intrinsics_init,
                     pixel_grid, pixels_to_rays)
from .config import TrainConfig, load_config, parse_config
from .curriculum import (Checkpoint, Model, Stage, Trainer, curriculum_advance, infer_odometry,
                         train_run)
from .errors import (ConfigurationError, ContractError, DegeneracyError, DimensionError,
                     DomainError, NumericError, ParseError, RaycalError, StateError,
                     ValidationError)
from .evaluation import (CalibReport, OdometryReport, odometry_metrics, radial_shift_error,
                         render_novel_view)
from .geometry import PluckerRay, SE3Pose, relative_pose, rot6d_to_matrix
from .losses import LossWeights, latent_loss, photometric_loss, pose_loss, total_loss
from .nets import Encoder, Hypernetwork, LFNArchitecture, lfn_param_count, lfn_render
from .simscene import AnalyticScene, DatasetManifest, make_dataset, read_manifest, write_manifest

__version__ = "0.1.0"
