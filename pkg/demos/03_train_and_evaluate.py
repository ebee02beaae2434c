"""A compact training run: odometry, focal length and a rendered view.

Uses 32x32 frames and small networks so it finishes in about a minute. The
focal length starts at 32 px; the scene was rendered at 30 px.
"""

# %% Data and configuration
import numpy as np

from raycal.config import TrainConfig
from raycal.curriculum import train_run
from raycal.evaluation import evaluate_odometry, radial_shift_error, render_novel_view
from raycal.geometry import SE3Pose
from raycal.simscene import make_dataset, read_camera

train = make_dataset("demo_train", n_frames=40, seed=0, width=32, height=32, labelled_fraction=0.5)
test = make_dataset("demo_test", n_frames=21, seed=1, width=32, height=32, labelled_fraction=1.0)
cfg = TrainConfig(lfn_width=32, lfn_layers=4, hyper_width=64, hyper_layers=3, latent_dim=64,
                  encoder_channels=(16, 32, 32), encoder_strides=(2, 2, 1), pose_hidden=(32,),
                  scene_width=64, batch_size=4, rays_per_step=1024, w_photometric=0.1,
                  w_trans=3e4, w_rot=2e4, lr_encoder=1e-3, lr_hypernet=1e-3, lr_intrinsics=0.5,
                  lr_distortion=1e-4, epochs=60, e1=30, e2=50)

# %% Train through the three stages
def progress(trainer, reports):
    if trainer.epoch % 10 == 0:
        total = np.mean([r.total for r in reports])
        print(f"epoch {trainer.epoch:3d} {trainer.stage.name:16s} loss {total:9.3f} f {trainer.model.focal:.2f}")

model = train_run(train, cfg, "demo_run", progress=progress).trainer.model

# %% Odometry on a trajectory the model has never seen
report, _, _ = evaluate_odometry(model, test)
print(report.to_tsv())

# %% Calibration against the true camera
# At this scale the learned f tends to overshoot below the truth (see README)
truth = read_camera("demo_train/camera.txt")
print(f"learned f {model.focal:.2f} px (true {truth.f}), mean radial shift {radial_shift_error((model.intrinsics, model.distortion), truth):.4f}")

# %% Render frame 0 back from its own pose
frames = test.load_frames()
img = render_novel_view(model, frames[0], frames[1], SE3Pose(np.eye(3), np.zeros(3)))
print("render MSE vs frame 0:", float(np.mean((img - frames[0].transpose(1, 2, 0)) ** 2)))
