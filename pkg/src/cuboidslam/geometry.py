"""Core 3D geometry: SE(3) poses, pinhole projection, vanishing points,
ground-plane back-projection and rotated-cuboid IoU.

Conventions used throughout the package:
  camera frame   x right, y down, z forward (depth is +z)
  world frame    z up, ground plane at z = 0
  tangent vector 6-vector (translation, rotation), rotation in radians
  plane          n . P + m = 0 for points P on the plane, ||n|| = 1
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


class GeometryError(Exception):
    """Base class for geometric failure modes."""


class BehindCameraError(GeometryError):
    """Point or intersection has non-positive depth in the camera frame."""


class DegenerateGeometryError(GeometryError):
    """Ill-conditioned construction (parallel ray/plane, rotation at pi, ...)."""


class UnsupportedOrientationError(GeometryError):
    """Cuboid pair is not yaw-only rotated about a shared vertical axis."""


def skew(v):
    """3x3 cross-product matrix: skew(a) @ b == cross(a, b)."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def rot_x(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(a):
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def so3_exp(phi):
    """Rodrigues formula, safe at small angles."""
    phi = np.asarray(phi, dtype=float)
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-9:
        return np.eye(3) + W + 0.5 * (W @ W)
    A = np.sin(theta) / theta
    B = (1.0 - np.cos(theta)) / theta**2
    return np.eye(3) + A * W + B * (W @ W)


def so3_log(R):
    """Axis-angle vector of a rotation matrix, principal branch only.

    Raises DegenerateGeometryError when the rotation angle is within
    1e-6 of pi, where the principal log is not unique.
    """
    R = np.asarray(R, dtype=float)
    cos_theta = np.clip((np.trace(R) - 1.0) / 2.0, -1.0, 1.0)
    theta = np.arccos(cos_theta)
    if theta > np.pi - 1e-6:
        raise DegenerateGeometryError(
            f"rotation angle {theta:.9f} too close to pi for principal log")
    if theta < 1e-9:
        # First-order term of the log series.
        return 0.5 * np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    w = np.array([R[2, 1] - R[1, 2], R[0, 2] - R[2, 0], R[1, 0] - R[0, 1]])
    return theta / (2.0 * np.sin(theta)) * w


@dataclass
class SE3Pose:
    """Rigid transform: p_out = rotation @ p_in + translation.

    Used both for camera poses (camera-to-world) and object poses
    (object-to-world or object-to-camera).
    """

    rotation: np.ndarray = field(default_factory=lambda: np.eye(3))
    translation: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        self.translation = np.asarray(self.translation, dtype=float).reshape(3)

    @staticmethod
    def identity():
        return SE3Pose()

    @staticmethod
    def from_matrix(M):
        M = np.asarray(M, dtype=float)
        return SE3Pose(M[:3, :3].copy(), M[:3, 3].copy())

    def matrix(self):
        M = np.eye(4)
        M[:3, :3] = self.rotation
        M[:3, 3] = self.translation
        return M

    def compose(self, other: "SE3Pose") -> "SE3Pose":
        return SE3Pose(self.rotation @ other.rotation,
                       self.rotation @ other.translation + self.translation)

    def __matmul__(self, other):
        if isinstance(other, SE3Pose):
            return self.compose(other)
        return NotImplemented

    def inverse(self) -> "SE3Pose":
        Rt = self.rotation.T
        return SE3Pose(Rt, -Rt @ self.translation)

    def apply(self, points):
        """Transform one point (3,) or a stack of points (..., 3)."""
        p = np.asarray(points, dtype=float)
        return p @ self.rotation.T + self.translation

    def copy(self) -> "SE3Pose":
        return SE3Pose(self.rotation.copy(), self.translation.copy())

    def is_close(self, other: "SE3Pose", tol=1e-9) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=tol)
                and np.allclose(self.translation, other.translation, atol=tol))


def se3_exp(xi) -> SE3Pose:
    """Exponential map of se(3); xi = (translation, rotation) 6-vector."""
    xi = np.asarray(xi, dtype=float).reshape(6)
    rho, phi = xi[:3], xi[3:]
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-9:
        V = np.eye(3) + 0.5 * W + (W @ W) / 6.0
    else:
        B = (1.0 - np.cos(theta)) / theta**2
        C = (theta - np.sin(theta)) / theta**3
        V = np.eye(3) + B * W + C * (W @ W)
    return SE3Pose(so3_exp(phi), V @ rho)


def se3_log(T: SE3Pose):
    """Inverse of se3_exp on the principal branch (rotation angle < pi)."""
    phi = so3_log(T.rotation)
    theta = np.linalg.norm(phi)
    W = skew(phi)
    if theta < 1e-9:
        Vinv = np.eye(3) - 0.5 * W + (W @ W) / 12.0
    else:
        half = theta / 2.0
        cot_term = (1.0 - half / np.tan(half)) / theta**2
        Vinv = np.eye(3) - 0.5 * W + cot_term * (W @ W)
    rho = Vinv @ T.translation
    return np.concatenate([rho, phi])


@dataclass
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")
        if not (0 < self.cx < self.width and 0 < self.cy < self.height):
            raise ValueError("principal point must be inside the image")

    def matrix(self):
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def inverse_matrix(self):
        return np.array([[1.0 / self.fx, 0.0, -self.cx / self.fx],
                         [0.0, 1.0 / self.fy, -self.cy / self.fy],
                         [0.0, 0.0, 1.0]])

    def project_camera(self, pts_cam):
        """Project camera-frame points (..., 3) to pixels (..., 2); no depth check."""
        pts_cam = np.asarray(pts_cam, dtype=float)
        z = pts_cam[..., 2]
        u = self.fx * pts_cam[..., 0] / z + self.cx
        v = self.fy * pts_cam[..., 1] / z + self.cy
        return np.stack([u, v], axis=-1)

    def ray(self, pixel):
        """Unnormalized back-projected ray K^-1 [u, v, 1]."""
        u, v = pixel
        return np.array([(u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0])


def project(K: CameraIntrinsics, T_c: SE3Pose, P_world) -> np.ndarray:
    """Project a world point through camera pose T_c (camera-to-world)."""
    p_cam = T_c.inverse().apply(P_world)
    if p_cam[2] <= 1e-6:
        raise BehindCameraError(f"point depth {p_cam[2]:.3g} not in front of camera")
    return K.project_camera(p_cam)


def vanishing_points(K: CameraIntrinsics, R) -> np.ndarray:
    """Vanishing points of the three object axes, one homogeneous 3-vector each.

    Row i is K @ R[:, i] for the object rotation R expressed in the camera
    frame. A zero third coordinate means a direction at infinity (axis
    parallel to the image plane), which downstream line constructions
    handle natively in homogeneous coordinates.
    """
    R = np.asarray(R, dtype=float)
    return (K.matrix() @ R).T.copy()


@dataclass
class GroundPlane:
    """Plane n . P + m = 0 with unit normal, in whatever frame P lives in."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        self.normal = np.asarray(self.normal, dtype=float).reshape(3)
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-9:
            raise ValueError(f"plane normal must be unit length, got {n}")
        self.offset = float(self.offset)

    def signed_distance(self, P):
        return np.asarray(P, dtype=float) @ self.normal + self.offset

    def up(self):
        """Unit direction from the plane toward the camera/origin side."""
        if self.offset == 0.0:
            raise DegenerateGeometryError("origin lies on the plane; up direction undefined")
        return self.normal * np.sign(self.offset)

    def transformed(self, T: SE3Pose) -> "GroundPlane":
        """Plane expressed in the target frame of T (points map by T)."""
        n = T.rotation @ self.normal
        m = self.offset - n @ T.translation
        return GroundPlane(n, m)


def backproject_to_plane(K: CameraIntrinsics, pixel, plane: GroundPlane) -> np.ndarray:
    """Intersect the camera-frame ray through `pixel` with a camera-frame plane."""
    ray = K.ray(pixel)
    denom = plane.normal @ ray
    if abs(denom) <= 1e-9:
        raise DegenerateGeometryError("backprojected ray parallel to plane")
    lam = -plane.offset / denom
    if lam <= 1e-9:
        raise BehindCameraError("plane intersection behind the camera")
    return lam * ray


# Default unit-cube corner sign ordering: top face first (indices 0..3),
# then the bottom face; the bottom partner of top corner (0, 1, 2, 3) is
# (7, 6, 4, 5). Matches the canonical three-face construction order in the
# proposal module.
CORNER_SIGNS = np.array([
    [+1, -1, +1],
    [-1, -1, +1],
    [-1, +1, +1],
    [+1, +1, +1],
    [-1, +1, -1],
    [+1, +1, -1],
    [-1, -1, -1],
    [+1, -1, -1],
], dtype=float)


@dataclass
class Cuboid:
    """9-DoF box landmark: pose (object-to-parent) plus full edge lengths."""

    pose: SE3Pose
    dims: np.ndarray

    def __post_init__(self):
        self.dims = np.asarray(self.dims, dtype=float).reshape(3)
        if np.any(self.dims <= 0):
            raise ValueError(f"cuboid dims must be positive, got {self.dims}")

    def corners_3d(self, signs=CORNER_SIGNS):
        """8x3 corners in the parent frame, centrally symmetric about the center."""
        local = signs * (self.dims / 2.0)
        return self.pose.apply(local)

    def volume(self):
        return float(np.prod(self.dims))

    def transformed(self, T: SE3Pose) -> "Cuboid":
        return Cuboid(T @ self.pose, self.dims.copy())

    def copy(self) -> "Cuboid":
        return Cuboid(self.pose.copy(), self.dims.copy())


def _clip_polygon(subject, edge_a, edge_b):
    """Clip a convex polygon by the half-plane left of edge_a -> edge_b."""
    out = []
    n = len(subject)
    d = edge_b - edge_a
    for i in range(n):
        cur, nxt = subject[i], subject[(i + 1) % n]
        cur_in = d[0] * (cur[1] - edge_a[1]) - d[1] * (cur[0] - edge_a[0]) >= 0
        nxt_in = d[0] * (nxt[1] - edge_a[1]) - d[1] * (nxt[0] - edge_a[0]) >= 0
        if cur_in:
            out.append(cur)
        if cur_in != nxt_in:
            e = nxt - cur
            denom = d[0] * e[1] - d[1] * e[0]
            t = (d[0] * (edge_a[1] - cur[1]) - d[1] * (edge_a[0] - cur[0])) / denom
            out.append(cur + t * e)
    return out


def convex_intersection_area(poly_a, poly_b):
    """Area of the intersection of two convex CCW polygons (Nx2 arrays)."""
    subject = [np.asarray(p, dtype=float) for p in poly_a]
    clipper = [np.asarray(p, dtype=float) for p in poly_b]
    for i in range(len(clipper)):
        if not subject:
            return 0.0
        subject = _clip_polygon(subject, clipper[i], clipper[(i + 1) % len(clipper)])
    if len(subject) < 3:
        return 0.0
    pts = np.array(subject)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * abs(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))


def _footprint_ccw(cuboid: Cuboid, origin, ex, ey, up):
    """Ground-plane rectangle of a yaw-only cuboid in (ex, ey) coordinates."""
    c = cuboid.pose.translation - origin
    cx, cy = c @ ex, c @ ey
    ax = cuboid.pose.rotation[:, 0]
    ux, uy = ax @ ex, ax @ ey
    norm = np.hypot(ux, uy)
    ux, uy = ux / norm, uy / norm
    # In-plane object axes (x axis then y = up x x).
    hx, hy = cuboid.dims[0] / 2.0, cuboid.dims[1] / 2.0
    exv = np.array([ux, uy])
    eyv = np.array([-uy, ux])
    center = np.array([cx, cy])
    return [center + hx * exv + hy * eyv,
            center - hx * exv + hy * eyv,
            center - hx * exv - hy * eyv,
            center + hx * exv - hy * eyv]


def cuboid_iou_3d(a: Cuboid, b: Cuboid, tol=1e-6) -> float:
    """3D IoU of two cuboids that are yaw-only rotated about a shared
    vertical axis (the ground-object evaluation setting).

    The footprints are intersected by convex polygon clipping, the 2D
    intersection area is multiplied by the vertical overlap interval, and
    divided by the union volume.
    """
    up = a.pose.rotation[:, 2]
    up_b = b.pose.rotation[:, 2]
    if np.linalg.norm(np.cross(up, up_b)) > tol or up @ up_b < 0:
        raise UnsupportedOrientationError(
            "cuboids do not share a vertical axis within tolerance")
    # Both third axes must be genuine rotation columns; yaw-only relative
    # rotation then follows automatically.
    origin = a.pose.translation
    ref = a.pose.rotation[:, 0]
    ex = ref - (ref @ up) * up
    ex /= np.linalg.norm(ex)
    ey = np.cross(up, ex)

    za0 = a.pose.translation @ up
    zb0 = b.pose.translation @ up
    lo = max(za0 - a.dims[2] / 2.0, zb0 - b.dims[2] / 2.0)
    hi = min(za0 + a.dims[2] / 2.0, zb0 + b.dims[2] / 2.0)
    if hi <= lo:
        return 0.0

    area = convex_intersection_area(_footprint_ccw(a, origin, ex, ey, up),
                                    _footprint_ccw(b, origin, ex, ey, up))
    inter = area * (hi - lo)
    union = a.volume() + b.volume() - inter
    return float(inter / union)


def camera_pose(position, yaw=0.0, pitch=0.0, roll=0.0) -> SE3Pose:
    """Camera-to-world pose in the z-up world frame.

    yaw rotates about world z (0 looks along +x), pitch > 0 tilts the view
    down, roll rotates about the optical axis.
    """
    base = np.array([[0.0, 0.0, 1.0],
                     [-1.0, 0.0, 0.0],
                     [0.0, -1.0, 0.0]])
    R = rot_z(yaw) @ base @ rot_x(-pitch) @ rot_z(roll)
    return SE3Pose(R, np.asarray(position, dtype=float))
