"""The synthetic world used for every end-to-end check.

A textured sphere, a smooth camera orbit and a camera with optional radial
distortion. Writes a small dataset to ``demo_scene/``.
"""

# %% Render a short sequence through a distorted camera
import numpy as np

from raycal.geometry import relative_pose, rotation_angle_deg
from raycal.simscene import make_dataset, read_camera

manifest = make_dataset("demo_scene", n_frames=12, seed=3, width=64, height=64,
                        distorted=True, labelled_fraction=0.5)
print(f"{len(manifest)} frames, {sum(f.labelled for f in manifest.frames)} labelled")

# %% Consecutive frames move about 5 cm and a few degrees
steps = [relative_pose(a.pose, b.pose) for a, b in zip(manifest.frames[:-1], manifest.frames[1:])]
print("translation per step (m):", np.round([np.linalg.norm(s.t) for s in steps], 3))
print("rotation per step (deg): ", np.round([rotation_angle_deg(np.eye(3), s.R) for s in steps], 2))

# %% How far the distorted camera bends rays at the image corner
cam = read_camera(manifest.root / "camera.txt")
x, y = cam.plane_points(0.5, 0.5)
pinhole = ((0.5 - cam.cx) / cam.f, (0.5 - cam.cy) / cam.f)
print(f"corner pixel: pinhole plane point {np.round(pinhole, 4)}, undistorted {np.round([x, y], 4)}")

# %% The frames are plain PPM files next to a TSV manifest
print(sorted(p.name for p in (manifest.root / "frames").iterdir())[:4], "...")
print((manifest.root / "manifest.tsv").read_text().splitlines()[1])
