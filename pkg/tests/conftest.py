"""Shared fixtures and independent numeric oracles.

The oracles here deliberately avoid the library's own code paths: they use
plain homogeneous-matrix arithmetic, textbook formulas, brute-force search,
or Monte-Carlo sampling, so that a bug in the library cannot hide in the
expected values.
"""

import numpy as np
import pytest

from cuboidslam.geometry import CameraIntrinsics, SE3Pose


@pytest.fixture
def K500():
    return CameraIntrinsics(fx=500.0, fy=500.0, cx=320.0, cy=240.0, width=640, height=480)


def rodrigues_oracle(axis, angle):
    """R = cos(t) I + sin(t) [k]x + (1 - cos(t)) k k^T  (unit axis k)."""
    k = np.asarray(axis, dtype=float)
    k = k / np.linalg.norm(k)
    Kx = np.array([[0, -k[2], k[1]], [k[2], 0, -k[0]], [-k[1], k[0], 0]])
    return np.cos(angle) * np.eye(3) + np.sin(angle) * Kx + (1 - np.cos(angle)) * np.outer(k, k)


def axis_angle_oracle(R):
    """Closed-form axis-angle extraction (angle strictly inside (0, pi))."""
    angle = np.arccos(np.clip((np.trace(R) - 1) / 2, -1, 1))
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return angle * w / (2 * np.sin(angle))


def project_oracle(K: CameraIntrinsics, T_c: SE3Pose, P_world):
    """Pixel via an explicit 3x4 homogeneous projection matrix K [R|t]."""
    Twc = np.linalg.inv(T_c.matrix())
    M = K.matrix() @ Twc[:3, :]
    Ph = np.append(np.asarray(P_world, dtype=float), 1.0)
    uvw = M @ Ph
    return uvw[:2] / uvw[2]


def projection_matrix(K: CameraIntrinsics, T_c: SE3Pose):
    """3x4 world-to-pixel matrix for the camera pose T_c (camera-to-world)."""
    Twc = np.linalg.inv(T_c.matrix())
    return K.matrix() @ Twc[:3, :]


def monte_carlo_iou(cuboid_a, cuboid_b, n_samples=1_000_000, seed=0):
    """3D IoU estimated by sampling points uniformly inside cuboid A."""
    rng = np.random.default_rng(seed)
    local = (rng.random((n_samples, 3)) - 0.5) * cuboid_a.dims
    pts = cuboid_a.pose.apply(local)
    q = (pts - cuboid_b.pose.translation) @ cuboid_b.pose.rotation
    inside = np.all(np.abs(q) <= cuboid_b.dims / 2, axis=1)
    inter = cuboid_a.volume() * inside.mean()
    union = cuboid_a.volume() + cuboid_b.volume() - inter
    return inter / union


def ground_scene(K, yaw_world, center_xy, dims, cam_height, pitch=0.0):
    """Ground-truth cuboid + plane expressed in the camera frame.

    World frame: z up, ground z = 0, camera at (0, 0, cam_height) looking
    along +x, pitched down by `pitch`. Returns (cuboid_cam, plane_cam, cam).
    """
    from cuboidslam.geometry import Cuboid, GroundPlane, camera_pose, rot_z

    cam = camera_pose([0.0, 0.0, cam_height], yaw=0.0, pitch=pitch)
    obj_w = Cuboid(SE3Pose(rot_z(yaw_world), [center_xy[0], center_xy[1], dims[2] / 2.0]),
                   dims)
    world_to_cam = cam.inverse()
    return (obj_w.transformed(world_to_cam),
            GroundPlane([0.0, 0.0, 1.0], 0.0).transformed(world_to_cam),
            cam)


def corner_pixels_oracle(K, cuboid_cam, signs):
    """Project the cuboid corners with explicit homogeneous arithmetic."""
    pts = cuboid_cam.pose.translation + (np.asarray(signs) * cuboid_cam.dims / 2.0) \
        @ cuboid_cam.pose.rotation.T
    uvw = (K.matrix() @ pts.T).T
    return uvw[:, :2] / uvw[:, 2:3]


def tight_bbox(pixels):
    from cuboidslam.proposal import BBox2D
    px = np.asarray(pixels)
    return BBox2D(px[:, 0].min(), px[:, 1].min(), px[:, 0].max(), px[:, 1].max())


def chamfer_brute_force(edge_mask, a=1.0, b=4.0 / 3.0):
    """O(N^2) nearest-edge search under the chamfer (a, b) metric.

    Chamfer distance between pixels p, q with displacement (dx, dy):
    b * min(|dx|, |dy|) + a * (max(|dx|, |dy|) - min(|dx|, |dy|)).
    """
    mask = np.asarray(edge_mask, dtype=bool)
    ys, xs = np.nonzero(mask)
    h, w = mask.shape
    out = np.empty((h, w))
    for i in range(h):
        dy = np.abs(ys - i)
        for j in range(w):
            dx = np.abs(xs - j)
            mn = np.minimum(dx, dy)
            mx = np.maximum(dx, dy)
            out[i, j] = np.min(b * mn + a * (mx - mn))
    return out
