"""Rotations, rigid transforms and Plücker ray coordinates.

Poses map camera coordinates into the world: ``X_w = R @ X_c + t``.
Differentiable helpers operate on :class:`~raycal.autodiff.Tensor` objects;
:class:`SE3Pose` is a plain numpy value type used for trajectories and
evaluation.
"""

from dataclasses import dataclass

import numpy as np
from scipy.spatial.transform import Rotation

from . import autodiff as ad
from .autodiff import Tensor
from .errors import ContractError, DegeneracyError, DimensionError

_EPS = 1e-12


@dataclass
class Rotation6D:
    """Two unnormalised 3-vectors; Gram-Schmidt turns them into a rotation."""

    a1: object
    a2: object

    @classmethod
    def from_vector(cls, r6):
        r6 = ad.as_tensor(r6)
        return cls(r6[0:3], r6[3:6])

    @classmethod
    def from_matrix(cls, R):
        R = np.asarray(R, dtype=float)
        return cls(R[:, 0].copy(), R[:, 1].copy())


def _norm(v: Tensor) -> Tensor:
    return ad.sqrt(ad.reduce("sum", ad.square(v)))


def rot6d_to_matrix(a1, a2=None) -> Tensor:
    """Map two 3-vectors (one 6-vector, or a :class:`Rotation6D`) to a rotation matrix.

    Columns are ``b1 = a1/|a1|``, ``b2 = normalize(a2 - (b1.a2) b1)`` and
    ``b3 = b1 x b2``. Differentiable in both inputs.
    """
    if isinstance(a1, Rotation6D):
        a1, a2 = a1.a1, a1.a2
    elif a2 is None:
        a1 = ad.as_tensor(a1)
        if a1.shape != (6,):
            raise DimensionError(f"rot6d: expected a 6-vector, got shape {a1.shape}")
        a1, a2 = a1[:3], a1[3:]
    a1, a2 = ad.as_tensor(a1), ad.as_tensor(a2)
    n1 = _norm(a1)
    if n1.item() < _EPS:
        raise DegeneracyError("rot6d: first column is the zero vector")
    b1 = a1 / n1
    u2 = a2 - b1 * ad.reduce("sum", b1 * a2)
    n2 = _norm(u2)
    if n2.item() < 1e-9 * max(1.0, float(np.linalg.norm(a2.data))):
        raise DegeneracyError("rot6d: second column is parallel to the first")
    b2 = u2 / n2
    b3 = ad.cross(b1, b2)
    return ad.stack([b1, b2, b3], axis=1)


@dataclass
class SE3Pose:
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        self.R = np.asarray(self.R, dtype=float).reshape(3, 3)
        self.t = np.asarray(self.t, dtype=float).reshape(3)

    @classmethod
    def identity(cls) -> "SE3Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_quaternion(cls, t, q_wxyz) -> "SE3Pose":
        qw, qx, qy, qz = q_wxyz
        return cls(Rotation.from_quat([qx, qy, qz, qw]).as_matrix(), t)

    def quaternion(self) -> np.ndarray:
        """Unit quaternion (w, x, y, z) with w >= 0."""
        x, y, z, w = Rotation.from_matrix(self.R).as_quat()
        q = np.array([w, x, y, z])
        return -q if q[0] < 0 else q

    def matrix(self) -> np.ndarray:
        T = np.eye(4)
        T[:3, :3] = self.R
        T[:3, 3] = self.t
        return T

    def is_valid(self, tol: float = 1e-9) -> bool:
        return (np.allclose(self.R.T @ self.R, np.eye(3), atol=tol)
                and abs(np.linalg.det(self.R) - 1.0) < tol)

    def __matmul__(self, other: "SE3Pose") -> "SE3Pose":
        return se3_compose(self, other)


def se3_compose(a: SE3Pose, b: SE3Pose) -> SE3Pose:
    """Return ``a ∘ b`` (apply ``b`` first, then ``a``)."""
    return SE3Pose(a.R @ b.R, a.R @ b.t + a.t)


def se3_inverse(a: SE3Pose) -> SE3Pose:
    return SE3Pose(a.R.T, -(a.R.T @ a.t))


def relative_pose(pose_i: SE3Pose, pose_j: SE3Pose) -> SE3Pose:
    """Pose of camera ``j`` expressed in the frame of camera ``i``."""
    return se3_compose(se3_inverse(pose_i), pose_j)


def rotation_angle_deg(R1, R2) -> float:
    """Geodesic angle between two rotations, in degrees.

    atan2 of the skew and trace parts stays accurate near zero, where
    arccos of the trace alone loses about eight digits.
    """
    M = np.asarray(R1).T @ np.asarray(R2)
    s = 0.5 * np.linalg.norm([M[2, 1] - M[1, 2], M[0, 2] - M[2, 0], M[1, 0] - M[0, 1]])
    c = 0.5 * (np.trace(M) - 1.0)
    return float(np.degrees(np.arctan2(s, c)))


def axis_angle_matrix(axis, angle: float) -> np.ndarray:
    axis = np.asarray(axis, dtype=float)
    return Rotation.from_rotvec(axis / np.linalg.norm(axis) * angle).as_matrix()


@dataclass
class PluckerRay:
    """Batch (or single) of rays as unit direction ``d`` and moment ``m = o x d``.

    ``d`` and ``m`` are Tensors of shape (3,) or (N, 3).
    """

    d: Tensor
    m: Tensor

    def __len__(self):
        return 1 if self.d.ndim == 1 else self.d.shape[0]

    def vector(self) -> Tensor:
        """Concatenate into (N, 6) (or (6,)) network input."""
        return ad.concat([self.d, self.m], axis=-1)

    def numpy(self):
        return self.d.data, self.m.data

    def closest_point(self) -> np.ndarray:
        """Point on each line nearest to the origin, ``d x m``."""
        return np.cross(self.d.data, self.m.data)


def _row_norms(v: Tensor) -> Tensor:
    return ad.sqrt(ad.sum_axis(ad.square(v), axis=-1))


def normalize_rows(v) -> Tensor:
    v = ad.as_tensor(v)
    n = _row_norms(v)
    if np.any(n.data < _EPS):
        raise DegeneracyError("cannot normalise a zero direction")
    if v.ndim == 1:
        return v / n
    return ad.scale_rows(v, 1.0 / n)


def plucker_encode(o, d) -> PluckerRay:
    """Encode rays through origins ``o`` with directions ``d``.

    ``o`` may be a single 3-vector shared by every ray.
    """
    d_unit = normalize_rows(d)
    return PluckerRay(d_unit, ad.cross(ad.as_tensor(o), d_unit))


def pose_tensors(pose):
    """Return (R, t) tensors for an SE3Pose or a tensor pair."""
    if isinstance(pose, SE3Pose):
        return Tensor(pose.R), Tensor(pose.t)
    R, t = pose
    return ad.as_tensor(R), ad.as_tensor(t)


def ray_transform(ray: PluckerRay, pose) -> PluckerRay:
    """Move rays from camera to world frame.

    With ``o' = R o + t`` and ``d' = R d`` the new moment is
    ``R m + t x d'``.
    """
    R, t = pose_tensors(pose)
    if R.shape != (3, 3) or t.shape != (3,):
        raise ContractError(f"pose needs R (3,3) and t (3,), got {R.shape}, {t.shape}")
    if ray.d.ndim == 1:
        d = ad.matmul(R, ad.reshape(ray.d, (3, 1))).reshape(3)
        m = ad.matmul(R, ad.reshape(ray.m, (3, 1))).reshape(3)
    else:
        Rt = ad.transpose(R)
        d = ad.matmul(ray.d, Rt)
        m = ad.matmul(ray.m, Rt)
    return PluckerRay(d, ad.add(m, ad.cross(t, d)))
